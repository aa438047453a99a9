"""Environmental model: a scene graph of named rigid objects.

Poses are 4x4 homogeneous matrices (numpy arrays) relative to the parent
object. Files store them as ``xyz`` plus ``rpy`` (roll, pitch, yaw about
fixed x, y, z axes, i.e. ``R = Rz(yaw) @ Ry(pitch) @ Rx(roll)``).
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.spatial.transform import Rotation

ROOT = "world"
REORTHONORMALIZE_EVERY = 100


class WorldError(ValueError):
    pass


class UnknownObject(KeyError):
    def __str__(self):
        return f"unknown object {self.args[0]!r}"


class TypeMismatch(TypeError):
    pass


# ---------------------------------------------------------------------------
# Transforms


def transform(xyz=(0.0, 0.0, 0.0), rpy=(0.0, 0.0, 0.0)) -> np.ndarray:
    T = np.eye(4)
    T[:3, :3] = Rotation.from_euler("xyz", rpy).as_matrix()
    T[:3, 3] = xyz
    return T


def from_vec6(v) -> np.ndarray:
    return transform(v[:3], v[3:6])


def to_vec6(T) -> list[float]:
    R = T[:3, :3]
    if abs(R[2, 0]) < 1 - 1e-9:
        # closed form of R = Rz(yaw) Ry(pitch) Rx(roll); scipy's from_matrix is ~50x slower
        rpy = (math.atan2(R[2, 1], R[2, 2]), math.asin(-R[2, 0]), math.atan2(R[1, 0], R[0, 0]))
    else:
        rpy = Rotation.from_matrix(R).as_euler("xyz")
    return [float(x) for x in T[:3, 3]] + [float(x) for x in rpy]


def rotation_about_z(angle) -> np.ndarray:
    return transform(rpy=(0.0, 0.0, angle))


def inverse(T) -> np.ndarray:
    R = T[:3, :3]
    out = np.eye(4)
    out[:3, :3] = R.T
    out[:3, 3] = -R.T @ T[:3, 3]
    return out


def orthonormalize(T) -> np.ndarray:
    U, _, Vt = np.linalg.svd(T[:3, :3])
    R = U @ Vt
    if np.linalg.det(R) < 0:
        U[:, -1] *= -1
        R = U @ Vt
    out = T.copy()
    out[:3, :3] = R
    out[3] = (0.0, 0.0, 0.0, 1.0)
    return out


def is_transform(value) -> bool:
    return isinstance(value, np.ndarray) and value.shape == (4, 4)


def compose(transforms) -> np.ndarray:
    """Left-to-right product; long chains are re-orthonormalized."""
    out = np.eye(4)
    for i, T in enumerate(transforms, 1):
        out = out @ T
        if i % REORTHONORMALIZE_EVERY == 0:
            out = orthonormalize(out)
    return out


def rotation_vector(R) -> np.ndarray:
    v = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    angle = math.atan2(0.5 * math.sqrt(v @ v), 0.5 * (R[0, 0] + R[1, 1] + R[2, 2] - 1))
    if angle > 3.0:
        # the antisymmetric part vanishes near a half turn
        return Rotation.from_matrix(R).as_rotvec()
    scale = 0.5 if angle < 1e-8 else angle / (2 * math.sin(angle))
    return scale * v


def pose_error(A, B) -> tuple[float, float]:
    """(translation distance, rotation angle) between two poses."""
    dt = float(np.linalg.norm(A[:3, 3] - B[:3, 3]))
    dr = float(np.linalg.norm(rotation_vector(A[:3, :3].T @ B[:3, :3])))
    return dt, dr


# ---------------------------------------------------------------------------
# Scene graph


@dataclass
class SceneObject:
    name: str
    parent: str
    transform: np.ndarray
    attributes: dict = field(default_factory=dict)

    def copy(self):
        return SceneObject(self.name, self.parent, self.transform.copy(),
                           copy.deepcopy(self.attributes))


@dataclass
class EnvironmentalModel:
    objects: dict = field(default_factory=dict)
    revision: int = 0
    # device configuration carried by the world file (contacts, gripper, ...)
    config: dict = field(default_factory=dict)

    def __contains__(self, name):
        return name == ROOT or name in self.objects

    def get(self, name) -> SceneObject:
        try:
            return self.objects[name]
        except KeyError:
            raise UnknownObject(name) from None

    def add(self, name, parent=ROOT, T=None, **attributes):
        if name in self:
            raise WorldError(f"duplicate object {name!r}")
        if parent not in self:
            raise UnknownObject(parent)
        self.objects[name] = SceneObject(name, parent,
                                         np.eye(4) if T is None else np.array(T, float),
                                         dict(attributes))
        return self.objects[name]

    def chain(self, name) -> np.ndarray:
        """Pose of ``name`` in the world frame."""
        if name == ROOT:
            return np.eye(4)
        path = []
        while name != ROOT:
            obj = self.get(name)
            path.append(obj.transform)
            name = obj.parent
        return compose(reversed(path))

    def snapshot(self) -> "EnvironmentalModel":
        return EnvironmentalModel(
            {k: o.copy() for k, o in self.objects.items()},
            self.revision,
            self.config,
        )

    def attribute(self, path: str) -> Any:
        """Read ``obj.attr[.sub]``; ``pose`` fields x..rz read the transform."""
        segs = path.split(".")
        if segs and segs[0] == ROOT:
            segs = segs[1:]
        if len(segs) < 2:
            raise KeyError(path)
        obj = self.get(segs[0])
        rest = segs[1:]
        if rest[0] == "pose":
            value = obj.transform
            if len(rest) == 1:
                return value
            if len(rest) == 2 and rest[1] in POSE_FIELDS:
                return to_vec6(value)[POSE_FIELDS.index(rest[1])]
            raise KeyError(path)
        key = ".".join(rest)
        if key not in obj.attributes:
            raise KeyError(path)
        return obj.attributes[key]

    def __eq__(self, other):
        if not isinstance(other, EnvironmentalModel):
            return NotImplemented
        if self.objects.keys() != other.objects.keys() or self.revision != other.revision:
            return False
        for k, a in self.objects.items():
            b = other.objects[k]
            if a.parent != b.parent or not np.array_equal(a.transform, b.transform):
                return False
            if _attr_repr(a.attributes) != _attr_repr(b.attributes):
                return False
        return True


POSE_FIELDS = ("x", "y", "z", "rx", "ry", "rz")


def _attr_repr(attrs):
    return {k: v.tolist() if isinstance(v, np.ndarray) else v for k, v in attrs.items()}


def resolve_pose(em: EnvironmentalModel, obj: str, ref: str) -> np.ndarray:
    """Pose of ``obj`` expressed in the frame of ``ref``."""
    if obj == ref:
        if obj not in em:
            raise UnknownObject(obj)
        return np.eye(4)
    return inverse(em.chain(ref)) @ em.chain(obj)


def apply_update(em: EnvironmentalModel, path, value) -> int:
    """Write one attribute (``obj.attr``); returns the new revision.

    ``path`` may be a dotted string or an UpdateBinding. ``obj.pose`` replaces
    the object's transform and requires a 4x4 transform value.
    """
    if not isinstance(path, str):
        segs = path.segments
    else:
        segs = path.split(".")
        if segs and segs[0] == ROOT:
            segs = segs[1:]
    if len(segs) < 2:
        raise WorldError(f"update path {'.'.join(segs)!r} needs object and attribute")
    obj = em.get(segs[0])
    attr = ".".join(segs[1:])
    if attr == "pose":
        if not is_transform(value):
            raise TypeMismatch(f"cannot write {type(value).__name__} into {segs[0]}.pose")
        obj.transform = np.array(value, float)
    else:
        if isinstance(value, np.ndarray) and not is_transform(value):
            value = [float(x) for x in value]
        elif isinstance(value, (np.floating, np.integer)):
            value = float(value)
        obj.attributes[attr] = value
    em.revision += 1
    return em.revision


# ---------------------------------------------------------------------------
# World files


def _vec(v, n, where):
    if not isinstance(v, list) or len(v) != n or not all(
        isinstance(x, (int, float)) and not isinstance(x, bool) for x in v
    ):
        raise WorldError(f"{where}: expected a list of {n} numbers")
    return [float(x) for x in v]


def build_world(data: dict) -> EnvironmentalModel:
    if not isinstance(data, dict):
        raise WorldError("top level must be an object")
    objects = data.get("objects", [])
    if not isinstance(objects, list):
        raise WorldError("objects: expected a list")
    entries = {}
    for i, o in enumerate(objects):
        where = f"objects[{i}]"
        if not isinstance(o, dict) or not isinstance(o.get("name"), str):
            raise WorldError(f"{where}.name: required string")
        name = o["name"]
        if name == ROOT or name in entries:
            raise WorldError(f"{where}.name: duplicate object {name!r}")
        parent = o.get("parent", ROOT)
        if not isinstance(parent, str):
            raise WorldError(f"{where}.parent: expected string")
        xyz = _vec(o.get("xyz", [0, 0, 0]), 3, f"{where}.xyz")
        rpy = _vec(o.get("rpy", [0, 0, 0]), 3, f"{where}.rpy")
        attrs = o.get("attrs", {})
        if not isinstance(attrs, dict):
            raise WorldError(f"{where}.attrs: expected an object")
        entries[name] = (parent, transform(xyz, rpy), attrs, where)

    for name, (parent, _, _, where) in entries.items():
        if parent != ROOT and parent not in entries:
            raise WorldError(f"{where}.parent: unknown object {parent!r}")
    em = EnvironmentalModel()
    placed = {ROOT}
    for name in entries:
        seen = []
        cur = name
        while cur not in placed:
            if cur in seen:
                raise WorldError(f"cycle at {cur}")
            seen.append(cur)
            cur = entries[cur][0]
        for n in reversed(seen):
            parent, T, attrs, _ = entries[n]
            em.objects[n] = SceneObject(n, parent, T, dict(attrs))
            placed.add(n)
    # keep declaration order for deterministic iteration
    em.objects = {n: em.objects[n] for n in entries}

    config = {k: copy.deepcopy(v) for k, v in data.items() if k != "objects"}
    from .devices import parse_contacts  # contact schema lives with the simulator
    config["contacts"] = parse_contacts(data.get("contacts", []), em)
    em.config = config
    return em


def load_world(path) -> EnvironmentalModel:
    with open(path, encoding="utf-8") as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise WorldError(f"{path}: invalid JSON: {e}") from None
    return build_world(data)


def save_world(em: EnvironmentalModel) -> dict:
    """Inverse of :func:`build_world` (contacts are written back verbatim)."""
    objs = []
    for o in em.objects.values():
        v = to_vec6(o.transform)
        objs.append({"name": o.name, "parent": o.parent, "xyz": v[:3], "rpy": v[3:],
                     "attrs": _attr_repr(o.attributes)})
    out = {"objects": objs}
    for k, v in em.config.items():
        out[k] = [c.to_json() for c in v] if k == "contacts" else v
    return out
