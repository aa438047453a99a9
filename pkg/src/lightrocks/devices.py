"""Domain interface and simulated device adapters.

Every device call goes through the same synchronous protocol::

    session = sim.begin(device, command, args, em, rng)
    while session.running:
        snapshot = session.tick(dt)
    result = session.stop(reason)

The simulated cell keeps the ground truth (flange pose, object poses, gripper
state). The environmental model is only read here, never written; results
reach it through update bindings applied by the engine.

Contact model (quasi-static, no velocity state):

* the commanded pose moves along a straight segment toward the goal at a
  capped linear/rotational speed;
* the actual pose is the commanded pose projected onto the contact-feasible
  set, planes first, then screw joints;
* a plane reports the normal force ``k * penetration``; every other
  correction reports ``stiffness * (actual - commanded)`` per axis;
* a screw joint reports ``torque.z = resistK * phi`` where ``phi`` is the
  tightening rotation applied while the thread was engaged during the
  current command.

Damping values are accepted and recorded but have no effect.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial.transform import Rotation

from .world import (
    EnvironmentalModel, UnknownObject, WorldError, from_vec6, inverse, pose_error,
    rotation_vector, to_vec6, transform,
)

V_LIN = 0.1  # m/s
V_ROT = 0.5  # rad/s
V_TOOL = 0.1  # m/s, gripper finger speed
STIFFNESS_CAP = 5000.0  # N/m, translational
DEFAULT_STIFFNESS = (2000.0, 2000.0, 2000.0, 200.0, 200.0, 200.0)
DEFAULT_DAMPING = (0.7,) * 6
CONVERGED_LIN = 1e-4
CONVERGED_ROT = 1e-3
PERCEPTION_LATENCY = 10  # ticks
GRASP_AXIAL = 0.01  # m
SCREW_CAPTURE = 0.005  # m, lateral capture radius of a screw joint
DEFAULT_MAX_WIDTH = 0.08
DEFAULT_OBJECT_WIDTH = 0.02


class MalformedCommand(ValueError):
    pass


class SimFault(RuntimeError):
    pass


@dataclass(frozen=True)
class Frame:
    """A pose ``T`` relative to scene object ``ref``."""

    ref: str
    T: np.ndarray = field(compare=False)
    link: Optional[str] = None

    def in_world(self, em: EnvironmentalModel) -> np.ndarray:
        return em.chain(self.ref) @ self.T


# ---------------------------------------------------------------------------
# Contacts


@dataclass
class Plane:
    normal: np.ndarray
    offset: float
    k: float
    # optional slot: lateral compliance window around center (normal must be +z)
    center: Optional[np.ndarray] = None
    window: float = 0.0
    yaw: float = 0.0
    window_rot: float = 0.0

    kind = "plane"

    def to_json(self):
        d = {"kind": "plane", "normal": self.normal.tolist(), "offset": self.offset, "k": self.k}
        if self.center is not None:
            d.update(center=self.center.tolist(), window=self.window, yaw=self.yaw,
                     windowRot=self.window_rot)
        return d


@dataclass
class ScrewJoint:
    axis_object: str
    pitch: float  # m per revolution
    engage_z: float
    resist_k: float  # Nm/rad
    z_min: float
    axis_xy: np.ndarray = None

    kind = "screwjoint"

    def to_json(self):
        return {"kind": "screwjoint", "axisObject": self.axis_object, "pitch": self.pitch,
                "engageZ": self.engage_z, "resistK": self.resist_k, "zMin": self.z_min}


def _num(entry, key, where, positive=False):
    v = entry.get(key)
    if not isinstance(v, (int, float)) or isinstance(v, bool):
        raise WorldError(f"{where}.{key}: expected a number")
    if positive and v <= 0:
        raise WorldError(f"{where}.{key}: must be > 0")
    return float(v)


def parse_contacts(entries, em: EnvironmentalModel) -> list:
    if not isinstance(entries, list):
        raise WorldError("contacts: expected a list")
    out = []
    for i, e in enumerate(entries):
        where = f"contacts[{i}]"
        if not isinstance(e, dict):
            raise WorldError(f"{where}: expected an object")
        kind = e.get("kind")
        if kind == "plane":
            n = e.get("normal")
            if not isinstance(n, list) or len(n) != 3:
                raise WorldError(f"{where}.normal: expected 3 numbers")
            n = np.array(n, float)
            if np.linalg.norm(n) == 0:
                raise WorldError(f"{where}.normal: zero vector")
            p = Plane(n / np.linalg.norm(n), _num(e, "offset", where), _num(e, "k", where, True))
            if "center" in e:
                c = e["center"]
                if not isinstance(c, list) or len(c) != 2:
                    raise WorldError(f"{where}.center: expected 2 numbers")
                p.center = np.array(c, float)
                p.window = _num(e, "window", where, True)
                p.yaw = float(e.get("yaw", 0.0))
                p.window_rot = float(e.get("windowRot", 0.0))
            out.append(p)
        elif kind == "screwjoint":
            axis = e.get("axisObject")
            if not isinstance(axis, str):
                raise WorldError(f"{where}.axisObject: expected a string")
            if axis not in em:
                raise WorldError(f"{where}.axisObject: unknown object {axis!r}")
            out.append(ScrewJoint(
                axis, _num(e, "pitch", where, True), _num(e, "engageZ", where),
                _num(e, "resistK", where, True), _num(e, "zMin", where),
                em.chain(axis)[:2, 3].copy(),
            ))
        else:
            raise WorldError(f"{where}.kind: unknown contact kind {kind!r}")
    return out


# ---------------------------------------------------------------------------
# Simulated cell


def forward_kinematics(q) -> np.ndarray:
    """Kinematics stub for joint-space moves; not a real arm model."""
    return transform(
        (0.5 + 0.1 * q[1] - 0.05 * q[3], 0.1 * q[0] + 0.02 * q[4], 0.5 + 0.1 * q[3] - 0.05 * q[5]),
        (0.0, 0.0, q[0] + q[6]),
    )


class SimCell:
    """Ground truth of the simulated workcell, shared by all adapters of a run."""

    def __init__(self, em: EnvironmentalModel):
        cfg = em.config or {}
        self.contacts = list(cfg.get("contacts", []))
        robot = cfg.get("robot", {})
        self.v_lin = float(robot.get("v_lin", V_LIN))
        self.v_rot = float(robot.get("v_rot", V_ROT))
        perception = cfg.get("perception", {})
        self.sigma_pos = float(perception.get("sigma_pos", 0.0))
        self.sigma_rot = float(perception.get("sigma_rot", 0.0))
        self.latency = int(perception.get("latency", PERCEPTION_LATENCY))
        self.max_width = float(cfg.get("gripper", {}).get("max_width", DEFAULT_MAX_WIDTH))

        self.truth = {name: em.chain(name) for name in em.objects}
        self.flange = self.truth["tcp"].copy() if "tcp" in self.truth else np.eye(4)
        self.joints = [0.0] * 7
        self.width = self.max_width
        self.held: Optional[tuple[str, np.ndarray]] = None
        self.thread_z = [c.engage_z for c in self.contacts if isinstance(c, ScrewJoint)]
        self.widths = {n: float(o.attributes.get("width", DEFAULT_OBJECT_WIDTH))
                       for n, o in em.objects.items()}
        self.graspable = [n for n, o in em.objects.items() if o.attributes.get("graspable")]

    @property
    def grasped(self):
        return self.held is not None

    def move_flange(self, A):
        self.flange = A
        if self.held is not None:
            name, offset = self.held
            self.truth[name] = A @ offset

    def graspable_object(self) -> Optional[str]:
        best = None
        inv = inverse(self.flange)
        for name in self.graspable:
            rel = inv @ self.truth[name]
            lateral = math.hypot(rel[0, 3], rel[1, 3])
            axial = abs(rel[2, 3])
            if lateral <= self.max_width / 2 and axial <= GRASP_AXIAL:
                d = lateral + axial
                if best is None or d < best[0]:
                    best = (d, name)
        return best[1] if best else None


# ---------------------------------------------------------------------------
# Sessions


class CommandSession:
    device = ""

    def __init__(self, cell: SimCell, command: str):
        self.cell = cell
        self.command = command
        self.status = "Running"
        self.reason: Optional[str] = None
        self.message: Optional[str] = None
        self.time = 0.0
        self.ticks = 0
        self.result: Optional[dict] = None
        self.last: dict = {}

    @property
    def running(self):
        return self.status == "Running"

    def tick(self, dt: float) -> dict:
        if not self.running:
            return self.last
        self.ticks += 1
        self.time = self.ticks * dt
        self._advance(dt)
        self.last = self.snapshot()
        return self.last

    def self_stop(self, reason):
        self.status = "Stopped"
        self.reason = reason

    def stop(self, reason: str) -> dict:
        if self.status != "Faulted":
            self.status = "Stopped"
            self.reason = reason
        if self.result is None:
            self.result = self._result()
        return self.result

    def snapshot(self) -> dict:
        raise NotImplementedError

    def _advance(self, dt):
        raise NotImplementedError

    def _result(self) -> dict:
        raise NotImplementedError


def robot_channels(cell: SimCell, wrench, converged, time) -> dict:
    v = to_vec6(cell.flange)
    ch = {}
    for k, x in zip(("x", "y", "z", "rx", "ry", "rz"), v):
        ch[f"robot.pose.{k}"] = x
    for i, k in enumerate("xyz"):
        ch[f"robot.force.{k}"] = float(wrench[i])
    for i, k in enumerate("xyz"):
        ch[f"robot.torque.{k}"] = float(wrench[3 + i])
    for i, q in enumerate(cell.joints):
        ch[f"robot.joints.{i}"] = float(q)
    ch["robot.converged"] = bool(converged)
    ch["time"] = time
    return ch


def _vec(args, name, n, default):
    v = args.get(name, default)
    v = tuple(float(x) for x in v)
    if len(v) != n:
        raise MalformedCommand(f"{name}: expected {n} values")
    if any(x < 0 or not math.isfinite(x) for x in v):
        raise MalformedCommand(f"{name}: entries must be finite and >= 0")
    return v


class CartesianSession(CommandSession):
    device = "robot"

    def __init__(self, cell, command, args, em):
        super().__init__(cell, command)
        self.stiffness = np.array(_vec(args, "stiffness", 6, DEFAULT_STIFFNESS))
        self.damping = _vec(args, "damping", 6, DEFAULT_DAMPING)
        tf = args.get("taskframe")
        self.task_frame = tf.in_world(em) if tf is not None else np.eye(4)
        self.link = args.get("link")
        start = cell.flange.copy()
        self.p0 = start[:3, 3].copy()
        self.R0 = start[:3, :3].copy()
        if command == "moveCartesian":
            goal = args["goal"].in_world(em)
            self.dp = goal[:3, 3] - self.p0
            self.omega = Rotation.from_matrix(goal[:3, :3] @ self.R0.T).as_rotvec()
        else:
            off = [float(x) for x in args["offset"]]
            if len(off) != 6:
                raise MalformedCommand("offset: expected 6 values")
            # translation and rotation vector, both in the tool frame
            self.dp = self.R0 @ np.array(off[:3])
            self.omega = self.R0 @ np.array(off[3:])
        self.goal = self.commanded(1.0)
        lin = np.linalg.norm(self.dp)
        rot = np.linalg.norm(self.omega)
        self._lin, self._rot = lin, rot
        self.s = 0.0
        self.phi = 0.0
        self.wrench = np.zeros(6)
        self.converged = False
        self._engaged = []

    def commanded(self, s) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = Rotation.from_rotvec(s * self.omega).as_matrix() @ self.R0
        T[:3, 3] = self.p0 + s * self.dp
        return T

    def _advance(self, dt):
        if self.stiffness[:3].max() > STIFFNESS_CAP:
            self.status = "Faulted"
            self.message = f"translational stiffness above {STIFFNESS_CAP} N/m"
            raise SimFault(self.message)
        cell = self.cell
        rates = []
        if self._lin > 0:
            rates.append(cell.v_lin * dt / self._lin)
        if self._rot > 0:
            rates.append(cell.v_rot * dt / self._rot)
        ds = min(rates) if rates else 1.0
        s_prev = self.s
        self.s = min(1.0, self.ticks * ds)
        C = self.commanded(self.s)
        dyaw = (self.s - s_prev) * self.omega[2]
        A, plane_force = self._project(C, dyaw)
        cell.move_flange(A)

        dpos = A[:3, 3] - C[:3, 3]
        drot = rotation_vector(A[:3, :3] @ C[:3, :3].T)
        normal_part = np.zeros(3)
        for n, d, _ in plane_force:
            normal_part += d * n
        force = self.stiffness[:3] * (dpos - normal_part)
        for n, d, k in plane_force:
            force = force + k * d * n
        torque = self.stiffness[3:] * drot
        torque[2] += sum(c.resist_k for c in self._engaged) * max(self.phi, 0.0)
        Rtf = self.task_frame[:3, :3]
        self.wrench = np.concatenate([Rtf.T @ force, Rtf.T @ torque])
        # exact zeros where nothing pushes; avoids -0.0 noise in traces
        self.wrench[np.abs(self.wrench) < 1e-12] = 0.0

        dt_, dr_ = pose_error(A, self.goal)
        self.converged = dt_ < CONVERGED_LIN and dr_ < CONVERGED_ROT
        if self.converged:
            self.self_stop("converged")

    def _project(self, C, dyaw):
        cell = self.cell
        A = C.copy()
        held = cell.held
        plane_force = []

        def point(A):
            return (A @ held[1]) if held else A

        for contact in cell.contacts:
            if not isinstance(contact, Plane):
                continue
            q = point(A)
            n = contact.normal
            if contact.center is not None:
                lateral = q[:2, 3] - contact.center
                if np.linalg.norm(lateral) > contact.window:
                    continue
            depth = contact.offset - n @ q[:3, 3]
            if depth > 0:
                A[:3, 3] += depth * n
                plane_force.append((n, depth, contact.k))
            if contact.center is not None and depth >= -1e-9:
                q = point(A)
                obj_yaw = math.atan2(q[1, 0], q[0, 0])
                err = math.remainder(contact.yaw - obj_yaw, 2 * math.pi)
                if abs(err) <= contact.window_rot:
                    Rz = Rotation.from_rotvec([0.0, 0.0, err]).as_matrix()
                    pivot = q[:3, 3].copy()
                    A[:3, :3] = Rz @ A[:3, :3]
                    A[:3, 3] = pivot + Rz @ (A[:3, 3] - pivot)
                    q = point(A)
                A[:2, 3] += contact.center - q[:2, 3]

        engaged = []
        screw_index = 0
        for contact in cell.contacts:
            if not isinstance(contact, ScrewJoint):
                continue
            i = screw_index
            screw_index += 1
            if not held:
                continue
            q = point(A)
            if np.linalg.norm(q[:2, 3] - contact.axis_xy) > SCREW_CAPTURE:
                continue
            thread = cell.thread_z[i]
            if q[2, 3] <= thread + 1e-9:
                engaged.append(contact)
                self.phi += dyaw
                thread -= contact.pitch * dyaw / (2 * math.pi)
                thread = min(max(thread, contact.z_min), contact.engage_z)
                cell.thread_z[i] = thread
            if q[2, 3] < thread:
                A[2, 3] += thread - q[2, 3]
        if engaged:
            self._engaged = engaged
        return A, plane_force

    def snapshot(self):
        return robot_channels(self.cell, self.wrench, self.converged, self.time)

    def _result(self):
        return {"pose": self.cell.flange.copy(), "wrench": [float(x) for x in self.wrench]}


class JointSession(CommandSession):
    device = "robot"

    def __init__(self, cell, args):
        super().__init__(cell, "moveJoint")
        goal = [float(x) for x in args["joints"]]
        if len(goal) != 7:
            raise MalformedCommand("joints: expected 7 values")
        self.stiffness = _vec(args, "stiffness", 7, (1000.0,) * 7)
        self.damping = _vec(args, "damping", 7, (0.7,) * 7)
        self.q0 = list(cell.joints)
        self.dq = [g - q for g, q in zip(goal, self.q0)]
        self.goal = goal
        self.converged = False

    def _advance(self, dt):
        span = max(abs(d) for d in self.dq)
        s = 1.0 if span == 0 else min(1.0, self.ticks * self.cell.v_rot * dt / span)
        self.cell.joints = [q + s * d for q, d in zip(self.q0, self.dq)]
        self.cell.move_flange(forward_kinematics(self.cell.joints))
        err = max(abs(q - g) for q, g in zip(self.cell.joints, self.goal))
        self.converged = err < CONVERGED_ROT
        if self.converged:
            self.self_stop("converged")

    def snapshot(self):
        return robot_channels(self.cell, np.zeros(6), self.converged, self.time)

    def _result(self):
        return {"pose": self.cell.flange.copy(), "wrench": [0.0] * 6,
                "joints": list(self.cell.joints)}


class ToolSession(CommandSession):
    device = "tool"

    def __init__(self, cell, command):
        super().__init__(cell, command)
        if command == "grip":
            self.target_obj = cell.graspable_object()
            self.target = cell.widths[self.target_obj] if self.target_obj else 0.0
            self.target = min(self.target, cell.width)
        else:
            self.target_obj = None
            self.target = cell.max_width
            cell.held = None

    def _advance(self, dt):
        cell = self.cell
        step = V_TOOL * dt
        if abs(cell.width - self.target) <= step:
            cell.width = self.target
            if self.target_obj is not None:
                obj = self.target_obj
                cell.held = (obj, inverse(cell.flange) @ cell.truth[obj])
            self.self_stop("done")
        else:
            cell.width += step if self.target > cell.width else -step

    def snapshot(self):
        return {"tool.width": self.cell.width, "tool.grasped": self.cell.grasped,
                "time": self.time}

    def _result(self):
        return {"width": self.cell.width, "grasped": self.cell.grasped}


def _truncated_normal(rng, sigma, size):
    out = np.empty(size)
    for i in range(size):
        while True:
            x = rng.normal(0.0, 1.0)
            if abs(x) <= 3.0:
                break
        out[i] = sigma * x
    return out


class PerceptionSession(CommandSession):
    device = "perception"

    def __init__(self, cell, args, em, rng):
        super().__init__(cell, "localize")
        name = args["object"]
        if name not in cell.truth:
            raise UnknownObject(name)
        true_world = cell.truth[name]
        dp = _truncated_normal(rng, cell.sigma_pos, 3)
        dyaw = _truncated_normal(rng, cell.sigma_rot, 1)[0]
        noisy = true_world.copy()
        noisy[:3, 3] += dp
        noisy[:3, :3] = Rotation.from_rotvec([0.0, 0.0, dyaw]).as_matrix() @ noisy[:3, :3]
        parent = em.get(name).parent
        self.pose = inverse(em.chain(parent)) @ noisy
        self.error = dp

    def _advance(self, dt):
        if self.ticks >= self.cell.latency:
            self.self_stop("done")

    def snapshot(self):
        return {"time": self.time}

    def _result(self):
        return {"pose": self.pose.copy()}


class Simulator:
    """Adapter set over one simulated cell: the domain interface of a run."""

    def __init__(self, em: EnvironmentalModel):
        self.cell = SimCell(em)

    def begin(self, device: str, command: str, args: dict, em: EnvironmentalModel,
              rng: np.random.Generator) -> CommandSession:
        if device == "robot" and command in ("moveCartesian", "moveRelative"):
            if command == "moveCartesian" and not isinstance(args.get("goal"), Frame):
                raise MalformedCommand("moveCartesian requires a goal frame")
            for key in ("goal", "taskframe"):
                f = args.get(key)
                if f is not None and f.ref not in em:
                    raise UnknownObject(f.ref)
            return CartesianSession(self.cell, command, args, em)
        if device == "robot" and command == "moveJoint":
            return JointSession(self.cell, args)
        if device == "tool" and command in ("grip", "release"):
            return ToolSession(self.cell, command)
        if device == "perception" and command == "localize":
            return PerceptionSession(self.cell, args, em, rng)
        raise MalformedCommand(f"unknown command {device}.{command}")


def frame_from_value(ref: str, offset) -> Frame:
    return Frame(ref, from_vec6([float(x) for x in offset]))
