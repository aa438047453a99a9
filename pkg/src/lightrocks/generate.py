"""Random valid models for property tests.

``random_model(seed)`` builds a standard-profile model of at most three
levels (task -> skill -> action) with at most six children per level:

* a few top-level actions and skills act as a library;
* some skills extend a library skill, adding one child and one start port;
* the root task mixes inline skills with ``uses`` references (with literal
  arguments) to library skills;
* every component has start port ``a`` and end ports ``ok``/``alt``;
  children are wired as a forward chain ``self.a -> c0.a, ci.ok ->
  c(i+1).a`` plus random forward shortcuts from ``ci.alt``, so every run
  terminates; pre/post conditions and port guards read ``box`` attributes
  of the environmental model, some of which may be false and stop a run in
  a deadlock or a post-condition failure;
* leaves call every device command kind, with parameters passed down via
  ``set`` bindings and update bindings writing ``box.flag``/``box.pose``.

Every generated model validates cleanly and runs in :func:`generator_world`.
"""

from __future__ import annotations

import random

from .model import (
    And, Binding, Bool, BoolChannel, Compare, Component, Const, DeviceCall, Endpoint,
    FrameLit, Level, Model, Not, Num, Or, ParamRef, Parameter, Port, Reference, Str,
    Transition, UpdateBinding, Vec, ACTION, SKILL, TASK,
)
from .world import build_world

MAX_CHILDREN = 6

_WORLD = {
    "objects": [
        {"name": "robot", "parent": "world"},
        {"name": "tcp", "parent": "robot", "xyz": [0.4, 0.0, 0.1]},
        {"name": "box", "parent": "world", "xyz": [0.4, 0.0, 0.1],
         "attrs": {"graspable": True, "flag": True, "count": 2.0}},
    ],
    "contacts": [],
    "perception": {"sigma_pos": 0.001, "sigma_rot": 0.01},
    "gripper": {"max_width": 0.06},
}


def generator_world():
    import copy
    return build_world(copy.deepcopy(_WORLD))


def random_condition(rng: random.Random, depth=0, paths=None):
    """A random condition tree over ``box`` attributes (always evaluable)."""
    num_paths = paths or ["box.count", "box.pose.z", "box.pose.x"]
    k = rng.randrange(7 if depth < 3 else 3)
    if k == 0:
        return Const(rng.random() < 0.8)
    if k == 1:
        return BoolChannel("box.flag")
    if k == 2:
        op = rng.choice(["<", "<=", ">", ">=", "==", "!="])
        return Compare(rng.choice(num_paths), op, round(rng.uniform(-1, 3), 2))
    if k == 3:
        return Not(random_condition(rng, depth + 1, paths))
    if k in (4, 5):
        return And(random_condition(rng, depth + 1, paths), random_condition(rng, depth + 1, paths))
    return Or(random_condition(rng, depth + 1, paths), random_condition(rng, depth + 1, paths))


def _maybe_cond(rng, p):
    return random_condition(rng) if rng.random() < p else None


def _vec(rng):
    return Vec(tuple(round(rng.uniform(-0.01, 0.01), 4) for _ in range(3)) + (0.0, 0.0, 0.0))


def _ports(comp, ok_guard=None):
    comp.starts.append(Port("a", "start"))
    comp.ends.append(Port("ok", "end", ok_guard))
    comp.ends.append(Port("alt", "end"))


def random_leaf(rng: random.Random, name: str) -> Component:
    comp = Component(name, ACTION)
    _ports(comp, _maybe_cond(rng, 0.3))
    kind = rng.randrange(5)
    if kind == 0:
        call = DeviceCall("tool", "grip", updates=[UpdateBinding("box.flag", "grasped")])
    elif kind == 1:
        call = DeviceCall("tool", "release", until=rng.choice([None, Compare("tool.width", ">=", 0.03)]))
    elif kind == 2:
        comp.params.append(Parameter("off", "vec6", _vec(rng)))
        call = DeviceCall("robot", "moveRelative", [Binding("offset", ParamRef("off"))])
        if rng.random() < 0.5:
            call.until = Compare("time", ">=", round(rng.uniform(0.02, 0.2), 2))
    elif kind == 3:
        comp.params.append(Parameter("target", "string", Str("box")))
        call = DeviceCall("perception", "localize", [Binding("object", ParamRef("target"))],
                          updates=[UpdateBinding("target.pose", "pose")])
    else:
        call = DeviceCall("robot", "moveCartesian",
                          [Binding("goal", FrameLit(Str("box"), _vec(rng)))])
    comp.exec = call
    return comp


def _wire(rng, comp: Component, aliases, params_of):
    """Forward-chain transitions between ``aliases`` inside ``comp``."""
    n = len(aliases)
    ts = [Transition(Endpoint("self", "a"), Endpoint(aliases[0], "a"),
                     pre=_maybe_cond(rng, 0.15), bindings=_binds(rng, comp, params_of(aliases[0])))]
    for i, a in enumerate(aliases):
        nxt = Endpoint(aliases[i + 1], "a") if i + 1 < n else Endpoint("self", "ok")
        if rng.random() < 0.3 and i + 1 < n:
            # a guarded alternative listed first; falls through when false
            j = rng.randrange(i + 1, n + 1)
            alt_target = Endpoint(aliases[j], "a") if j < n else Endpoint("self", "alt")
            ts.append(Transition(Endpoint(a, "ok"), alt_target, pre=random_condition(rng)))
        ts.append(Transition(Endpoint(a, "ok"), nxt, pre=_maybe_cond(rng, 0.1),
                             post=_maybe_cond(rng, 0.1),
                             bindings=_binds(rng, comp, params_of(nxt.owner)) if nxt.owner != "self" else []))
        j = rng.randrange(i + 1, n + 1)
        alt = Endpoint(aliases[j], "a") if j < n else Endpoint("self", "alt")
        ts.append(Transition(Endpoint(a, "alt"), alt,
                             bindings=_binds(rng, comp, params_of(alt.owner)) if alt.owner != "self" else []))
    return ts


def _binds(rng, scope: Component, target_params):
    out = []
    for p in target_params:
        if rng.random() < 0.5:
            continue
        if p.ptype == "vec6":
            own = scope.param(p.name)
            value = ParamRef(p.name) if own is not None and own.ptype == "vec6" and rng.random() < 0.5 else _vec(rng)
            out.append(Binding(p.name, value))
        elif p.ptype == "string":
            out.append(Binding(p.name, Str("box")))
    return out


def random_skill(rng: random.Random, name: str, library_actions, max_children) -> Component:
    comp = Component(name, SKILL)
    _ports(comp)
    if rng.random() < 0.5:
        comp.params.append(Parameter("off", "vec6", _vec(rng)))
    kids = []
    for i in range(rng.randint(1, max_children)):
        alias = f"a{i}"
        if library_actions and rng.random() < 0.3:
            target = rng.choice(library_actions)
            args = []
            if target.param("off") is not None and rng.random() < 0.5:
                args.append(Binding("off", _vec(rng)))
            kids.append(Reference(target.name, alias, args))
        else:
            kids.append(random_leaf(rng, alias))
    comp.children = kids
    lookup = {a.name: a for a in library_actions}

    def params_of(alias):
        c = comp.child(alias)
        if isinstance(c, Reference):
            return lookup[c.qname].params
        return c.params

    comp.transitions = _wire(rng, comp, [c.alias if isinstance(c, Reference) else c.name for c in kids], params_of)
    return comp


def random_model(seed: int) -> tuple[Model, str]:
    """A random valid model and the name of its root task."""
    rng = random.Random(seed)
    model = Model()
    actions = [random_leaf(rng, f"Act{i}") for i in range(rng.randint(0, 2))]
    skills = [random_skill(rng, f"Skill{i}", actions, rng.randint(1, 4))
              for i in range(rng.randint(1, 3))]
    extenders = []
    for base in skills:
        if rng.random() < 0.4:
            ext = Component(f"{base.name}X", SKILL, extends=base.name)
            leaf = random_leaf(rng, "extra")
            ext.children.append(leaf)
            ext.starts.append(Port("b", "start"))
            ext.transitions.append(Transition(Endpoint("self", "b"), Endpoint("extra", "a")))
            ext.transitions.append(Transition(Endpoint("extra", "ok"), Endpoint("self", "ok")))
            ext.transitions.append(Transition(Endpoint("extra", "alt"), Endpoint("self", "alt")))
            extenders.append(ext)
    library = skills + extenders

    root = Component("Root", TASK)
    _ports(root)
    kids = []
    for i in range(rng.randint(1, MAX_CHILDREN)):
        alias = f"s{i}"
        if rng.random() < 0.6:
            target = rng.choice(library)
            args = []
            has_off = target.param("off") is not None
            if has_off and rng.random() < 0.5:
                args.append(Binding("off", _vec(rng)))
            kids.append(Reference(target.name, alias, args))
        else:
            kids.append(random_skill(rng, alias, actions, rng.randint(1, MAX_CHILDREN)))
    root.children = kids
    lookup = {c.name: c for c in library}

    def params_of(alias):
        c = root.child(alias)
        if isinstance(c, Reference):
            return lookup[c.qname].params
        return c.params

    root.transitions = _wire(rng, root, [c.alias if isinstance(c, Reference) else c.name for c in kids], params_of)
    model.components = actions + library + [root]
    return model, "Root"


def random_syntax_model(seed: int) -> Model:
    """Like :func:`random_model`, plus syntax the runtime models do not use:
    generic levels, guards on start ports, string escapes, bool and frame
    parameters."""
    rng = random.Random(seed)
    model, _ = random_model(seed)
    top = Component("Cell", Level("component", 3 + rng.randrange(3)))
    top.params = [
        Parameter("label", "string", Str(rng.choice(["a \"quoted\" name", "tab\there", "plain"]))),
        Parameter("enabled", "bool", Bool(rng.random() < 0.5)),
        Parameter("where", "frame", FrameLit(Str("box"), _vec(rng))),
        Parameter("count", "num", Num(round(rng.uniform(-5, 5), 3))),
    ]
    top.starts.append(Port("go", "start", random_condition(rng)))
    top.ends.append(Port("done", "end", random_condition(rng)))
    top.children.append(Reference("Root", "main"))
    top.transitions = [
        Transition(Endpoint("self", "go"), Endpoint("main", "a"), pre=random_condition(rng),
                   post=random_condition(rng)),
        Transition(Endpoint("main", "ok"), Endpoint("self", "done")),
        Transition(Endpoint("main", "alt"), Endpoint("self", "done")),
    ]
    model.components.append(top)
    return model
