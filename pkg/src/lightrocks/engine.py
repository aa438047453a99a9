"""Hierarchical execution of action components.

The run state mirrors a state-pattern runtime: a stack of active instances
from the root down to exactly one active leaf, each knowing its parent. One
call to :func:`step` performs one micro-step:

* descend: from a start port, fire the first enabled ``self.start -> child``
  transition and enter the child, recursively down to a leaf, whose device
  session is begun;
* execute: tick the leaf's session once; when its stop condition holds or
  the session stops by itself, pick the leaf's end port;
* transition: from a reached end port, fire the first outgoing transition
  whose pre-condition holds, apply the finished leaf's update bindings,
  check the post-condition, then enter the target.

Ties are broken by declaration order everywhere.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from . import devices
from .devices import Frame, Simulator
from .model import (
    And, Bool, BoolChannel, Compare, Component, Const, FrameLit, Model, Not, Num, Or,
    ParamRef, Reference, Str, SymbolTable, Vec, effective,
)
from .world import EnvironmentalModel, TypeMismatch, UnknownObject, apply_update, from_vec6, to_vec6

DEFAULT_MAX_TICKS = 100_000
DEFAULT_DT = 0.01


class UnknownChannel(KeyError):
    def __str__(self):
        return f"unknown channel {self.args[0]!r}"


class NoEnabledStart(RuntimeError):
    pass


class RunFault(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Conditions


def channel_value(path: str, snapshot: dict, em: Optional[EnvironmentalModel]):
    if path in snapshot:
        return snapshot[path]
    if em is not None:
        try:
            return em.attribute(path)
        except (KeyError, UnknownObject):
            pass
    raise UnknownChannel(path)


def _compare(a, op, b):
    if op == "<":
        return a < b
    if op == "<=":
        return a <= b
    if op == ">":
        return a > b
    if op == ">=":
        return a >= b
    if op == "==":
        return a == b
    return a != b


def eval_condition(expr, snapshot: dict, em: Optional[EnvironmentalModel] = None) -> bool:
    """Strict evaluation of a condition against sensor channels and the EM."""
    if isinstance(expr, Const):
        return expr.value
    if isinstance(expr, Not):
        return not eval_condition(expr.operand, snapshot, em)
    if isinstance(expr, And):
        left = eval_condition(expr.left, snapshot, em)
        right = eval_condition(expr.right, snapshot, em)
        return left and right
    if isinstance(expr, Or):
        left = eval_condition(expr.left, snapshot, em)
        right = eval_condition(expr.right, snapshot, em)
        return left or right
    if isinstance(expr, Compare):
        v = channel_value(expr.path, snapshot, em)
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise TypeMismatch(f"{expr.path} is not numeric")
        return _compare(float(v), expr.op, expr.value)
    if isinstance(expr, BoolChannel):
        v = channel_value(expr.path, snapshot, em)
        if not isinstance(v, bool):
            raise TypeMismatch(f"{expr.path} is not boolean")
        return v
    raise TypeError(f"not a condition: {expr!r}")


# ---------------------------------------------------------------------------
# Values


def eval_expr(expr, env: dict):
    if isinstance(expr, Num):
        return float(expr.value)
    if isinstance(expr, Str):
        return expr.value
    if isinstance(expr, Bool):
        return expr.value
    if isinstance(expr, Vec):
        return tuple(float(x) for x in expr.items)
    if isinstance(expr, ParamRef):
        if expr.name not in env:
            raise RunFault(f"parameter {expr.name!r} is unbound")
        return env[expr.name]
    if isinstance(expr, FrameLit):
        ref = eval_expr(expr.ref, env)
        off = eval_expr(expr.offset, env)
        return Frame(ref, from_vec6(off))
    raise TypeError(f"not an expression: {expr!r}")


def to_json_value(v):
    if isinstance(v, np.ndarray) and v.shape == (4, 4):
        vec = to_vec6(v)
        return {"xyz": vec[:3], "rpy": vec[3:]}
    if isinstance(v, Frame):
        vec = to_vec6(v.T)
        return {"ref": v.ref, "xyz": vec[:3], "rpy": vec[3:]}
    if isinstance(v, (tuple, list, np.ndarray)):
        return [to_json_value(x) for x in v]
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, (np.bool_,)):
        return bool(v)
    return v


# ---------------------------------------------------------------------------
# Trace


@dataclass
class TraceEvent:
    seq: int
    tick: int
    kind: str
    subject: str
    data: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({"seq": self.seq, "tick": self.tick, "kind": self.kind,
                           "subject": self.subject, "data": self.data})

    @classmethod
    def from_json(cls, line: str) -> "TraceEvent":
        d = json.loads(line)
        return cls(d["seq"], d["tick"], d["kind"], d["subject"], d.get("data", {}))


@dataclass
class RunOutcome:
    status: str  # Success | Deadlock | Timeout | Fault | PostconditionFailed
    ticks: int
    revision: int
    end: Optional[str] = None
    detail: Optional[str] = None

    @property
    def success(self):
        return self.status == "Success"

    def line(self) -> str:
        return f"outcome={self.status} ticks={self.ticks} end={self.end or '-'}"


# ---------------------------------------------------------------------------
# Run state


@dataclass
class Instance:
    view: Component
    path: str
    env: dict
    status: str = "AtStart"  # AtStart | ExecutingChild | ExecutingLeaf | AtEnd
    port: Optional[str] = None
    child: Optional[str] = None
    session: Any = None
    result: Optional[dict] = None


@dataclass
class RunState:
    table: Any
    em: EnvironmentalModel
    sim: Simulator
    rng: np.random.Generator
    max_ticks: int
    dt: float
    stack: list = field(default_factory=list)
    events: list = field(default_factory=list)
    snapshot: dict = field(default_factory=dict)
    tick: int = 0
    idle_steps: int = 0
    livelock_limit: int = 100
    outcome: Optional[RunOutcome] = None

    @property
    def finished(self):
        return self.outcome is not None

    def emit(self, kind, subject, **data):
        ev = TraceEvent(len(self.events), self.tick, kind, subject, data)
        self.events.append(ev)
        return ev


def _table_of(model):
    if isinstance(model, dict):
        return model
    if isinstance(model, Component):
        return SymbolTable({model.name: model})
    table = SymbolTable()
    for c in model:
        table[c.name] = c
    return table


def _count_components(view: Component, table, depth=0) -> int:
    if depth > 50:
        return 1
    n = 1
    for c in view.children:
        child = _resolve(c, table)
        if child is not None:
            n += _count_components(child, table, depth + 1)
    return n


def _resolve(child, table) -> Optional[Component]:
    if isinstance(child, Reference):
        target = table.get(child.qname)
        if target is None:
            return None
        return effective(target, table_view(table))
    return effective(child, table_view(table))


class table_view:
    """Adapter giving a plain dict the ``lookup`` method ``effective`` needs."""

    def __init__(self, table):
        self.table = table

    def lookup(self, qname):
        return self.table.get(qname)


def _defaults(view: Component, env_scope: dict) -> dict:
    env = {}
    for p in view.params:
        if p.default is not None:
            env[p.name] = eval_expr(p.default, env_scope)
    return env


def init_run(model, root_name: str, em: EnvironmentalModel, seed: int = 0,
             max_ticks: int = DEFAULT_MAX_TICKS, dt: float = DEFAULT_DT,
             params: Optional[dict] = None) -> RunState:
    """Prepare a run of ``root_name`` and enter the root's first enabled start."""
    table = _table_of(model)
    root = table.get(root_name)
    if root is None:
        raise KeyError(f"unknown root component {root_name!r}")
    view = effective(root, table_view(table))
    run = RunState(table, em, Simulator(em), np.random.default_rng(seed), max_ticks, dt)
    run.livelock_limit = 10 * _count_components(view, table)
    env = _defaults(view, {})
    env.update(params or {})
    missing = [p.name for p in view.params if p.name not in env]
    if missing:
        raise RunFault(f"root parameters without value: {', '.join(missing)}")

    connected = {t.source.port for t in view.transitions if t.source.owner == "self"}
    for port in view.starts:
        if view.children and port.name not in connected:
            continue
        if port.guard is None or eval_condition(port.guard, run.snapshot, em):
            inst = Instance(view, root_name, env, "AtStart", port.name)
            run.stack.append(inst)
            run.emit("Entered", root_name, port=port.name)
            return run
    raise NoEnabledStart(f"no start condition of {root_name!r} holds")


def _finish(run: RunState, status, end=None, detail=None):
    run.outcome = RunOutcome(status, run.tick, run.em.revision, end, detail)
    data = {"status": status, "ticks": run.tick, "revision": run.em.revision, "end": end}
    if detail is not None:
        data["detail"] = detail
    run.emit("RunResult", run.stack[0].path if run.stack else "", **data)


def _guard_ok(port, run):
    return port is None or port.guard is None or eval_condition(port.guard, run.snapshot, run.em)


def _enter(run: RunState, parent: Optional[Instance], alias: str, port: str, bindings, scope_env):
    """Push the child ``alias`` of ``parent`` at start ``port`` and descend to a leaf."""
    child = parent.view.child(alias)
    view = _resolve(child, run.table)
    if view is None:
        raise RunFault(f"unresolved child {alias!r}")
    if isinstance(child, Reference):
        env = _defaults(view, {})
        for b in child.args:
            env[b.name] = eval_expr(b.value, {})
    else:
        env = _defaults(view, {})
    for b in bindings:
        env[b.name] = eval_expr(b.value, scope_env)
    for p in view.params:
        if p.name not in env:
            raise RunFault(f"parameter {p.name!r} of {alias!r} is unbound")
    view = _renamed(view, alias)
    parent.status = "ExecutingChild"
    parent.child = alias
    parent.port = None
    inst = Instance(view, f"{parent.path}/{alias}", env, "AtStart", port)
    run.stack.append(inst)
    run.emit("Entered", inst.path, port=port)
    _descend(run)


def _renamed(view, alias):
    if view.name == alias:
        return view
    v = Component(**{**view.__dict__})
    v.name = alias
    return v


def _descend(run: RunState):
    inst = run.stack[-1]
    if inst.view.is_leaf:
        _begin_leaf(run, inst)
        return
    outgoing = [t for t in inst.view.transitions
                if t.source.owner == "self" and t.source.port == inst.port]
    _fire_first(run, inst, outgoing, finished=None)


def _begin_leaf(run: RunState, inst: Instance):
    call = inst.view.exec
    args = {b.name: eval_expr(b.value, inst.env) for b in call.args}
    inst.session = run.sim.begin(call.device, call.command, args, run.em, run.rng)
    inst.status = "ExecutingLeaf"
    inst.port = None
    run.emit("ExecBegun", inst.path, device=call.device, command=call.command)


def _tname(t):
    return f"{t.source}->{t.target}"


def _fire_first(run: RunState, owner: Instance, candidates, finished: Optional[Instance]):
    """Fire the first enabled transition of ``owner`` among ``candidates``.

    ``finished`` is the child instance whose end port is the source (None
    when firing from ``owner``'s own start port).
    """
    where = finished.path if finished is not None else owner.path
    port = finished.port if finished is not None else owner.port
    for t in candidates:
        target_port = _target_port(run, owner, t)
        ok = t.pre is None or eval_condition(t.pre, run.snapshot, run.em)
        ok = ok and _guard_ok(target_port, run)
        run.emit("PreEvaluated", owner.path, transition=_tname(t), result=ok)
        if not ok:
            continue
        if finished is not None:
            _apply_updates(run, finished)
        post = t.post is None or eval_condition(t.post, run.snapshot, run.em)
        run.emit("PostEvaluated", owner.path, transition=_tname(t), result=post)
        if finished is not None:
            run.stack.pop()
        if not post:
            if owner.view.port("fault", "end") is not None:
                owner.status = "AtEnd"
                owner.port = "fault"
                owner.child = None
                run.emit("Finished", owner.path, port="fault")
            else:
                _finish(run, "PostconditionFailed", detail=_tname(t))
            return
        run.emit("TransitionFired", owner.path, source=str(t.source), target=str(t.target))
        if t.target.owner == "self":
            owner.status = "AtEnd"
            owner.port = t.target.port
            owner.child = None
            run.emit("Finished", owner.path, port=t.target.port)
        else:
            _enter(run, owner, t.target.owner, t.target.port, t.bindings, owner.env)
        return
    _finish(run, "Deadlock", detail=f"{where}.{port}")


def _target_port(run, owner: Instance, t):
    if t.target.owner == "self":
        return owner.view.port(t.target.port, "end")
    child = _resolve(owner.view.child(t.target.owner), run.table)
    return child.port(t.target.port, "start") if child is not None else None


def _apply_updates(run: RunState, inst: Instance):
    call = inst.view.exec
    if call is None or inst.result is None:
        return
    for u in call.updates:
        segs = list(u.segments)
        p = inst.view.param(segs[0])
        if p is not None and p.ptype == "string":
            segs[0] = inst.env[segs[0]]
        path = ".".join(segs)
        rev = apply_update(run.em, path, inst.result[u.source])
        run.emit("EmUpdated", inst.path, path=path, revision=rev,
                 value=to_json_value(inst.result[u.source]))


def _execute(run: RunState, inst: Instance):
    if run.tick >= run.max_ticks:
        _finish(run, "Timeout")
        return
    run.tick += 1
    session = inst.session
    snap = session.tick(run.dt)
    run.snapshot.update(snap)
    call = inst.view.exec
    if call.until is not None and eval_condition(call.until, run.snapshot, run.em):
        reason = "lambda"
    elif not session.running:
        reason = session.reason
    else:
        return
    inst.result = session.stop(reason)
    run.emit("StopTriggered", inst.path, reason=reason, snapshot=dict(snap))
    inst.status = "AtEnd"
    inst.port = inst.view.ends[0].name
    for port in inst.view.ends:
        if _guard_ok(port, run):
            inst.port = port.name
            break


def _at_end(run: RunState, inst: Instance):
    if len(run.stack) == 1:
        _apply_updates(run, inst)
        _finish(run, "Success", end=inst.port)
        return
    parent = run.stack[-2]
    outgoing = [t for t in parent.view.transitions
                if t.source.owner == inst.view.name and t.source.port == inst.port]
    _fire_first(run, parent, outgoing, finished=inst)


def step(run: RunState) -> list[TraceEvent]:
    """Advance one micro-step; returns the events it emitted."""
    if run.finished:
        return []
    first = len(run.events)
    tick = run.tick
    inst = run.stack[-1]
    try:
        if inst.status == "AtStart":
            _descend(run)
        elif inst.status == "ExecutingLeaf":
            _execute(run, inst)
        elif inst.status == "AtEnd":
            _at_end(run, inst)
        else:
            raise RunFault(f"corrupt configuration at {inst.path}")
        if run.tick > tick:
            run.idle_steps = 0
        else:
            run.idle_steps += 1
            if run.idle_steps > run.livelock_limit and not run.finished:
                _finish(run, "Fault", detail="livelock")
    except (UnknownChannel, TypeMismatch, UnknownObject, RunFault, devices.SimFault,
            devices.MalformedCommand) as e:
        if not run.finished:
            _finish(run, "Fault", detail=str(e))
    return run.events[first:]


def run_to_end(run: RunState, sink=None):
    """Step until the run finishes. Returns ``(RunOutcome, events)``.

    ``sink``, if given, is called with every event as it is produced.
    """
    seen = 0
    while not run.finished:
        step(run)
        if sink is not None:
            while seen < len(run.events):
                sink(run.events[seen])
                seen += 1
    if sink is not None:
        for ev in run.events[seen:]:
            sink(ev)
    return run.outcome, run.events


def run_model(model, root_name, em, seed=0, max_ticks=DEFAULT_MAX_TICKS, dt=DEFAULT_DT, sink=None):
    """init_run + run_to_end; a missing enabled start becomes a Fault outcome."""
    try:
        run = init_run(model, root_name, em, seed, max_ticks, dt)
    except (NoEnabledStart, RunFault, UnknownChannel, TypeMismatch) as e:
        run = RunState(_table_of(model), em, Simulator(em), np.random.default_rng(seed),
                       max_ticks, dt)
        _finish(run, "Fault", detail=str(e))
        if sink is not None:
            for ev in run.events:
                sink(ev)
        return run.outcome, run.events, run
    outcome, events = run_to_end(run, sink)
    return outcome, events, run


def write_trace(events, path):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for ev in events:
            f.write(ev.to_json() + "\n")


def read_trace(path) -> list[TraceEvent]:
    with open(path, encoding="utf-8") as f:
        return [TraceEvent.from_json(line) for line in f if line.strip()]


# ---------------------------------------------------------------------------
# Trace checks


def check_trace(events) -> list[str]:
    """Structural problems in a trace; empty when it is well formed.

    Checks seq contiguity, a single final RunResult, the pre -> updates ->
    post ordering of every firing, and that the active configuration stays a
    single root-to-leaf chain.
    """
    problems = []
    if not events:
        return ["empty trace"]
    for i, ev in enumerate(events):
        if ev.seq != i:
            problems.append(f"seq {ev.seq} at position {i}")
            break
    results = [i for i, ev in enumerate(events) if ev.kind == "RunResult"]
    if results != [len(events) - 1]:
        problems.append("RunResult must occur exactly once, as the last event")

    phase = None  # None | "pre" | "updates"
    stack = []
    for ev in events:
        k = ev.kind
        if k == "PreEvaluated":
            phase = "pre" if ev.data.get("result") else None
        elif k == "EmUpdated":
            if phase not in ("pre", "updates"):
                problems.append(f"seq {ev.seq}: EmUpdated outside a firing")
            phase = "updates"
        elif k == "PostEvaluated":
            if phase not in ("pre", "updates"):
                problems.append(f"seq {ev.seq}: PostEvaluated without enabled PreEvaluated")
            phase = None
        elif k == "Entered":
            if stack:
                if ev.subject.rsplit("/", 1)[0] != stack[-1]:
                    problems.append(f"seq {ev.seq}: {ev.subject} entered outside {stack[-1]}")
            elif "/" in ev.subject:
                problems.append(f"seq {ev.seq}: first entry is not a root")
            stack.append(ev.subject)
        elif k in ("ExecBegun", "StopTriggered"):
            if not stack or stack[-1] != ev.subject:
                problems.append(f"seq {ev.seq}: {k} for inactive {ev.subject}")
        elif k == "TransitionFired" or (k == "Finished" and ev.data.get("port") == "fault"):
            # the owner's finished child (if any) has left the configuration
            while stack and stack[-1] != ev.subject:
                stack.pop()
            if not stack:
                problems.append(f"seq {ev.seq}: {k} for inactive {ev.subject}")
    return problems


def is_finite_snapshot(snapshot: dict) -> bool:
    return all(not isinstance(v, float) or math.isfinite(v) for v in snapshot.values())
