import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.transform import Rotation

from lightrocks.model import UpdateBinding
from lightrocks.scenarios import DATA_DIR
from lightrocks.world import (
    EnvironmentalModel, TypeMismatch, UnknownObject, WorldError, apply_update, build_world,
    compose, inverse, load_world, pose_error, resolve_pose, rotation_vector, save_world, to_vec6,
    transform,
)

coords = st.floats(-2.0, 2.0)
angles = st.floats(-3.0, 3.0)
poses = st.tuples(st.tuples(coords, coords, coords), st.tuples(angles, st.floats(-1.5, 1.5), angles))


def rpy_oracle(roll, pitch, yaw):
    """Hand-written Rz(yaw) @ Ry(pitch) @ Rx(roll)."""
    cr, sr = math.cos(roll), math.sin(roll)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cy, sy = math.cos(yaw), math.sin(yaw)
    Rx = np.array([[1, 0, 0], [0, cr, -sr], [0, sr, cr]])
    Ry = np.array([[cp, 0, sp], [0, 1, 0], [-sp, 0, cp]])
    Rz = np.array([[cy, -sy, 0], [sy, cy, 0], [0, 0, 1]])
    return Rz @ Ry @ Rx


def chain_world():
    em = EnvironmentalModel()
    em.add("A", T=transform((1, 0, 0)))
    em.add("B", "A", transform((0, 2, 0)))
    em.add("cube", T=transform((0.5, 0.1, 0), (0, 0, 0.3)))
    return em


@settings(max_examples=100, deadline=None)
@given(poses)
def test_rpy_matches_hand_rotation(pose):
    xyz, rpy = pose
    T = transform(xyz, rpy)
    np.testing.assert_allclose(T[:3, :3], rpy_oracle(*rpy), atol=1e-12)
    np.testing.assert_allclose(T[:3, 3], xyz)
    assert abs(np.linalg.det(T[:3, :3]) - 1) < 1e-9
    back = transform(to_vec6(T)[:3], to_vec6(T)[3:])
    np.testing.assert_allclose(back, T, atol=1e-9)


rotvecs = st.tuples(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1)).filter(
    lambda v: 1e-3 < math.hypot(*v)).flatmap(
    lambda v: st.floats(0.0, math.pi).map(lambda a: np.array(v) / math.hypot(*v) * a))


@settings(max_examples=300, deadline=None)
@given(rotvecs)
def test_rotation_vector_matches_scipy(rv):
    R = Rotation.from_rotvec(rv).as_matrix()
    expected = Rotation.from_matrix(R).as_rotvec()
    got = rotation_vector(R)
    if math.hypot(*rv) > math.pi - 1e-6:
        # a half turn about v equals one about -v
        assert np.allclose(got, expected, atol=1e-7) or np.allclose(got, -expected, atol=1e-7)
    else:
        np.testing.assert_allclose(got, expected, atol=1e-9)


@settings(max_examples=300, deadline=None)
@given(st.tuples(angles, st.floats(-math.pi / 2, math.pi / 2), angles))
def test_euler_extraction_matches_scipy(rpy):
    T = transform((0, 0, 0), rpy)
    np.testing.assert_allclose(transform((0, 0, 0), to_vec6(T)[3:]), T, atol=1e-9)
    R = T[:3, :3]
    expected = Rotation.from_matrix(R).as_euler("xyz")
    if abs(R[2, 0]) < 0.999:
        np.testing.assert_allclose(to_vec6(T)[3:], expected, atol=1e-9)


@settings(max_examples=100, deadline=None)
@given(poses)
def test_inverse(pose):
    T = transform(*pose)
    np.testing.assert_allclose(T @ inverse(T), np.eye(4), atol=1e-12)


def test_self_reference_is_identity():
    np.testing.assert_array_equal(resolve_pose(chain_world(), "cube", "cube"), np.eye(4))


def test_nested_translation():
    T = resolve_pose(chain_world(), "B", "world")
    np.testing.assert_allclose(T[:3, 3], [1, 2, 0])


def test_resolve_pose_inverse_symmetry():
    em = chain_world()
    np.testing.assert_allclose(resolve_pose(em, "A", "cube"),
                               inverse(resolve_pose(em, "cube", "A")), atol=1e-12)


def test_long_composition_stays_orthonormal():
    step = transform((0.001, 0, 0), (0.01, 0.02, 0.03))
    T = compose([step] * 1000)
    R = T[:3, :3]
    assert abs(np.linalg.det(R) - 1) < 1e-9
    np.testing.assert_allclose(R @ R.T, np.eye(3), atol=1e-9)


def test_pose_error():
    a = transform((0, 0, 0))
    b = transform((0.003, 0.004, 0), (0, 0, 0.1))
    d, ang = pose_error(a, b)
    assert d == pytest.approx(0.005)
    assert ang == pytest.approx(0.1)


def test_update_pose_replaces_transform():
    em = chain_world()
    new = transform((0.1, 0.2, 0.3))
    rev = apply_update(em, UpdateBinding("world.cube.pose", "pose"), new)
    assert rev == 1 == em.revision
    np.testing.assert_array_equal(em.get("cube").transform, new)


def test_update_creates_attribute():
    em = chain_world()
    apply_update(em, "world.cube.grasped", True)
    assert em.attribute("cube.grasped") is True
    assert em.revision == 1


def test_update_errors():
    em = chain_world()
    with pytest.raises(UnknownObject):
        apply_update(em, "world.ghost.pose", np.eye(4))
    with pytest.raises(TypeMismatch):
        apply_update(em, "cube.pose", 3.0)
    with pytest.raises(WorldError):
        apply_update(em, "cube", 1.0)
    assert em.revision == 0


def test_attribute_reads_pose_fields():
    em = chain_world()
    assert em.attribute("B.pose.y") == 2.0
    assert em.attribute("cube.pose.rz") == pytest.approx(0.3)
    with pytest.raises(KeyError):
        em.attribute("cube.nothing")


def test_load_bundled_world():
    em = load_world(DATA_DIR / "screwing_world.json")
    assert set(em.objects) == {"robot", "tcp", "screw", "cube"}
    np.testing.assert_allclose(em.chain("tcp")[:3, 3], [0.4, 0.0, 0.15])


def test_empty_world():
    em = build_world({"objects": []})
    assert em.objects == {} and "world" in em


def test_cycle_is_rejected():
    with pytest.raises(WorldError, match="cycle at"):
        build_world({"objects": [{"name": "a", "parent": "b"}, {"name": "b", "parent": "a"}]})


@pytest.mark.parametrize("data", [
    {"objects": [{"name": "a", "parent": "nowhere"}]},
    {"objects": [{"name": "a"}, {"name": "a"}]},
    {"objects": [{"name": "a", "xyz": [0, 0]}]},
    {"objects": [{"parent": "world"}]},
    {"objects": [], "contacts": [{"kind": "magnet"}]},
    {"objects": [], "contacts": [{"kind": "plane", "normal": [0, 0, 0], "offset": 0, "k": 1}]},
])
def test_schema_errors(data):
    with pytest.raises(WorldError):
        build_world(data)


def test_save_load_round_trip():
    em = load_world(DATA_DIR / "rail_world.json")
    again = build_world(save_world(em))
    assert set(again.objects) == set(em.objects)
    for name in em.objects:
        np.testing.assert_allclose(again.chain(name), em.chain(name), atol=1e-12)
    assert [c.to_json() for c in again.config["contacts"]] == [c.to_json() for c in em.config["contacts"]]


def test_snapshot_is_independent():
    em = chain_world()
    snap = em.snapshot()
    apply_update(em, "cube.flag", True)
    assert snap != em and "flag" not in snap.get("cube").attributes
