"""Generic Action Component model and structural validation.

Tasks, Skills and Elemental Actions are all instances of one node type,
:class:`Component`, tagged with a :class:`Level`. A component either runs a
single device call (a leaf) or is a net of child components connected by
transitions between their start and end ports.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, Union


@dataclass(frozen=True)
class Span:
    file: str = "<string>"
    line: int = 1
    col: int = 1
    end_line: int = 1
    end_col: int = 1

    def __str__(self):
        return f"{self.file}:{self.line}:{self.col}"


def _span():
    return field(default_factory=Span, compare=False, repr=False)


@dataclass(frozen=True)
class Diagnostic:
    code: str
    severity: str  # "error" | "warning"
    span: Span
    message: str

    @property
    def is_error(self):
        return self.severity == "error"

    def sort_key(self):
        return (self.span.file, self.span.line, self.code, self.span.col, self.message)

    def __str__(self):
        return f"{self.span}: {self.severity} {self.code}: {self.message}"


def error(code, span, message):
    return Diagnostic(code, "error", span, message)


def warning(code, span, message):
    return Diagnostic(code, "warning", span, message)


def sort_diagnostics(diags: Iterable[Diagnostic]) -> list[Diagnostic]:
    unique = dict.fromkeys(diags)
    return sorted(unique, key=Diagnostic.sort_key)


# Error codes. Stable; the README carries the same table.
CODES = {
    "E001": "component must declare at least one end condition",
    "E002": "component must declare at least one start condition",
    "E003": "exec forbidden on composite",
    "E004": "leaf component has no exec",
    "E005": "illegal endpoint shape",
    "E006": "unresolved transition endpoint",
    "E007": "duplicate port name",
    "E008": "duplicate parameter name",
    "E009": "duplicate child alias",
    "E010": "duplicate definition",
    "E011": "unresolved reference",
    "E012": "level violation",
    "E013": "parameter default does not match its type",
    "E014": "binding names an unknown parameter",
    "E015": "type mismatch",
    "E016": "unknown device or command",
    "E017": "bad device call arguments",
    "E018": "bad update binding",
    "E019": "unknown parameter in expression",
    "E020": "merge collision while flattening",
    "E021": "cyclic reference or extension",
    "E022": "reference arguments must be literals",
    "E100": "syntax error",
    "W002": "port is not connected",
}


# ---------------------------------------------------------------------------
# Levels


STANDARD_LEVELS = {"task": 2, "skill": 1, "action": 0}


@dataclass(frozen=True)
class Level:
    tag: str  # "task" | "skill" | "action" | "component"
    depth: Optional[int] = None

    @property
    def value(self) -> int:
        if self.tag == "component":
            return self.depth
        return STANDARD_LEVELS[self.tag]

    @property
    def standard(self) -> bool:
        return self.tag in STANDARD_LEVELS

    def __str__(self):
        return f"component {self.depth}" if self.tag == "component" else self.tag


TASK = Level("task")
SKILL = Level("skill")
ACTION = Level("action")


# ---------------------------------------------------------------------------
# Value expressions (parameter defaults, arguments, bindings)


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Str:
    value: str


@dataclass(frozen=True)
class Bool:
    value: bool


@dataclass(frozen=True)
class Vec:
    items: tuple


@dataclass(frozen=True)
class FrameLit:
    """A frame relative to a scene object: ``frame(ref, [x,y,z,r,p,y])``."""

    ref: "Expr"
    offset: "Expr"


@dataclass(frozen=True)
class ParamRef:
    name: str


Expr = Union[Num, Str, Bool, Vec, FrameLit, ParamRef]
LITERAL_TYPES = (Num, Str, Bool, Vec, FrameLit)
PARAM_TYPES = ("num", "bool", "string", "frame", "vec6")


def is_literal(expr) -> bool:
    if isinstance(expr, FrameLit):
        return is_literal(expr.ref) and is_literal(expr.offset)
    return isinstance(expr, LITERAL_TYPES)


# ---------------------------------------------------------------------------
# Condition expressions


@dataclass(frozen=True)
class Or:
    left: "Cond"
    right: "Cond"


@dataclass(frozen=True)
class And:
    left: "Cond"
    right: "Cond"


@dataclass(frozen=True)
class Not:
    operand: "Cond"


@dataclass(frozen=True)
class Compare:
    path: str
    op: str
    value: float


@dataclass(frozen=True)
class BoolChannel:
    path: str


@dataclass(frozen=True)
class Const:
    value: bool


Cond = Union[Or, And, Not, Compare, BoolChannel, Const]
COMPARE_OPS = ("<", "<=", ">", ">=", "==", "!=")


def condition_paths(cond) -> Iterator[str]:
    if isinstance(cond, (Or, And)):
        yield from condition_paths(cond.left)
        yield from condition_paths(cond.right)
    elif isinstance(cond, Not):
        yield from condition_paths(cond.operand)
    elif isinstance(cond, (Compare, BoolChannel)):
        yield cond.path


# ---------------------------------------------------------------------------
# Components


@dataclass
class Parameter:
    name: str
    ptype: str
    default: Optional[Expr] = None
    span: Span = _span()


@dataclass
class Port:
    name: str
    kind: str  # "start" | "end"
    guard: Optional[Cond] = None
    span: Span = _span()


@dataclass(frozen=True)
class Endpoint:
    owner: str  # "self" or a child alias
    port: str

    def __str__(self):
        return f"{self.owner}.{self.port}"


@dataclass
class Binding:
    name: str
    value: Expr
    span: Span = _span()


@dataclass
class Transition:
    source: Endpoint
    target: Endpoint
    pre: Optional[Cond] = None
    post: Optional[Cond] = None
    bindings: list = field(default_factory=list)
    span: Span = _span()


@dataclass
class UpdateBinding:
    """``obj.attr := result.field``; applied to the environmental model."""

    path: str
    source: str
    span: Span = _span()

    @property
    def segments(self) -> list[str]:
        parts = self.path.split(".")
        if parts and parts[0] == "world":
            parts = parts[1:]
        return parts


@dataclass
class DeviceCall:
    device: str
    command: str
    args: list = field(default_factory=list)
    until: Optional[Cond] = None
    updates: list = field(default_factory=list)
    span: Span = _span()

    def arg(self, name):
        for b in self.args:
            if b.name == name:
                return b.value
        return None


@dataclass
class Reference:
    qname: str
    alias: str
    args: list = field(default_factory=list)
    span: Span = _span()


@dataclass
class Component:
    name: str
    level: Level
    params: list = field(default_factory=list)
    starts: list = field(default_factory=list)
    ends: list = field(default_factory=list)
    children: list = field(default_factory=list)
    transitions: list = field(default_factory=list)
    exec: Optional[DeviceCall] = None
    extends: Optional[str] = None
    span: Span = _span()

    @property
    def alias(self):
        return self.name

    @property
    def ports(self):
        return self.starts + self.ends

    @property
    def is_leaf(self):
        return not self.children

    def port(self, name, kind=None) -> Optional[Port]:
        for p in self.ports:
            if p.name == name and (kind is None or p.kind == kind):
                return p
        return None

    def param(self, name) -> Optional[Parameter]:
        for p in self.params:
            if p.name == name:
                return p
        return None

    def child(self, alias):
        for c in self.children:
            if child_alias(c) == alias:
                return c
        return None


Child = Union[Component, Reference]


def child_alias(child) -> str:
    return child.alias if isinstance(child, Reference) else child.name


@dataclass
class Use:
    path: str
    span: Span = _span()


@dataclass
class Model:
    """One parsed source file: its ``use`` imports and top-level components."""

    components: list = field(default_factory=list)
    uses: list = field(default_factory=list)
    file: str = field(default="<string>", compare=False)

    def __iter__(self):
        return iter(self.components)

    def __len__(self):
        return len(self.components)

    def __getitem__(self, i):
        return self.components[i]

    def get(self, name):
        for c in self.components:
            if c.name == name:
                return c
        return None


def walk(component: Component) -> Iterator[Component]:
    """Pre-order walk over a component and its inline descendants."""
    yield component
    for c in component.children:
        if isinstance(c, Component):
            yield from walk(c)


def strip_spans(obj):
    """Deep copy with every span reset; used where spans must not leak."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        kwargs = {}
        for f in dataclasses.fields(obj):
            v = getattr(obj, f.name)
            kwargs[f.name] = Span() if f.name == "span" else strip_spans(v)
        return type(obj)(**kwargs)
    if isinstance(obj, list):
        return [strip_spans(v) for v in obj]
    if isinstance(obj, tuple):
        return tuple(strip_spans(v) for v in obj)
    return obj


# ---------------------------------------------------------------------------
# Symbol lookup and extension views


class SymbolTable(dict):
    """Qualified name -> Component."""

    def lookup(self, qname):
        return self.get(qname)


def effective(component: Component, table, _seen=None) -> Component:
    """The component with its ``extends`` chain merged in, base first.

    Collisions are not reported here (flattening does that); on a collision
    the extender's declaration wins. Raises KeyError on an unresolved base and
    RecursionError on a cyclic chain.
    """
    if component.extends is None:
        return component
    seen = set() if _seen is None else _seen
    if id(component) in seen:
        raise RecursionError(f"cyclic extension at {component.name}")
    seen.add(id(component))
    base = table.lookup(component.extends) if table is not None else None
    if base is None:
        raise KeyError(component.extends)
    base = effective(base, table, seen)
    params = [p for p in base.params if component.param(p.name) is None]
    params = params + list(component.params)
    own_ports = {p.name for p in component.ports}
    own_kids = {child_alias(c) for c in component.children}
    return Component(
        name=component.name,
        level=component.level,
        params=params,
        starts=[p for p in base.starts if p.name not in own_ports] + list(component.starts),
        ends=[p for p in base.ends if p.name not in own_ports] + list(component.ends),
        children=[c for c in base.children if child_alias(c) not in own_kids]
        + list(component.children),
        transitions=list(base.transitions) + list(component.transitions),
        exec=component.exec if component.exec is not None else base.exec,
        extends=None,
        span=component.span,
    )


# ---------------------------------------------------------------------------
# Device command signatures


DEVICES = {"robot": "Robot", "tool": "Tool", "perception": "PerceptionUnit"}

# command -> (required args, optional args, result fields); arg -> type name
COMMANDS = {
    ("robot", "moveCartesian"): (
        {"goal": "frame"},
        {"stiffness": "vec6", "damping": "vec6", "taskframe": "frame", "link": "string"},
        {"pose": "frame", "wrench": "vec6"},
    ),
    ("robot", "moveRelative"): (
        {"offset": "vec6"},
        {"stiffness": "vec6", "damping": "vec6", "taskframe": "frame", "link": "string"},
        {"pose": "frame", "wrench": "vec6"},
    ),
    ("robot", "moveJoint"): (
        {"joints": "vec7"},
        {"stiffness": "vec7", "damping": "vec7"},
        {"pose": "frame", "wrench": "vec6", "joints": "vec7"},
    ),
    ("tool", "grip"): ({}, {}, {"width": "num", "grasped": "bool"}),
    ("tool", "release"): ({}, {}, {"width": "num", "grasped": "bool"}),
    ("perception", "localize"): ({"object": "string"}, {}, {"pose": "frame"}),
}


def expr_type(expr, scope: Optional[Component]) -> Optional[str]:
    """Static type of a value expression, or None if it cannot be typed."""
    if isinstance(expr, Num):
        return "num"
    if isinstance(expr, Str):
        return "string"
    if isinstance(expr, Bool):
        return "bool"
    if isinstance(expr, Vec):
        return f"vec{len(expr.items)}"
    if isinstance(expr, FrameLit):
        return "frame"
    if isinstance(expr, ParamRef):
        p = scope.param(expr.name) if scope is not None else None
        return p.ptype if p is not None else None
    return None


# ---------------------------------------------------------------------------
# Validation


LEGAL_SHAPES = {
    (("self", "start"), ("child", "start")),
    (("child", "end"), ("child", "start")),
    (("child", "end"), ("self", "end")),
}


def endpoint_shape_legal(src_owner, src_kind, dst_owner, dst_kind) -> bool:
    """``*_owner`` is "self" or "child"; ``*_kind`` is "start" or "end"."""
    return ((src_owner, src_kind), (dst_owner, dst_kind)) in LEGAL_SHAPES


class _Validator:
    def __init__(self, model, table, profile):
        self.model = model
        self.table = table
        self.profile = profile
        self.diags = []

    def err(self, code, span, msg=None):
        self.diags.append(error(code, span, msg or CODES[code]))

    def lookup(self, qname):
        if self.table is not None:
            return self.table.lookup(qname)
        return self.model.get(qname) if isinstance(self.model, Model) else None

    def view(self, comp):
        """Effective component, or None if its extends chain is broken."""
        try:
            return effective(comp, self)
        except (KeyError, RecursionError):
            return None

    def resolve_child(self, child):
        if isinstance(child, Component):
            return self.view(child)
        target = self.lookup(child.qname)
        return self.view(target) if target is not None else None

    def run(self, components):
        for comp in components:
            self.component(comp, None)
        return sort_diagnostics(self.diags)

    def component(self, comp: Component, parent_used: Optional[set]):
        if comp.extends is not None:
            if self.lookup(comp.extends) is None:
                self.err("E011", comp.span, f"unresolved reference '{comp.extends}'")
            else:
                try:
                    effective(comp, self)
                except RecursionError:
                    self.err("E021", comp.span, f"cyclic extension through '{comp.name}'")
        view = self.view(comp) or comp

        if not view.ends:
            self.err("E001", comp.span)
        if not view.starts:
            self.err("E002", comp.span)
        if view.exec is not None and view.children:
            self.err("E003", (comp.exec or view.exec).span)
        if view.exec is None and not view.children:
            self.err("E004", comp.span)

        self.unique(comp.ports, lambda p: p.name, "E007", "port")
        self.unique(comp.params, lambda p: p.name, "E008", "parameter")
        self.unique(comp.children, child_alias, "E009", "child alias")

        for p in comp.params:
            if p.ptype not in PARAM_TYPES:
                self.err("E015", p.span, f"unknown parameter type '{p.ptype}'")
            elif p.default is not None:
                if not is_literal(p.default) or expr_type(p.default, None) != p.ptype:
                    self.err("E013", p.span, f"default of '{p.name}' is not a {p.ptype}")

        if comp.exec is not None:
            self.device_call(comp.exec, view)

        for child in comp.children:
            self.level(comp, child)
            if isinstance(child, Reference):
                self.reference(child)

        used = set()
        for t in comp.transitions:
            self.transition(t, view, used)

        for port in comp.ports:
            inside = ("self", port.name) in used
            outside = parent_used is not None and port.name in parent_used
            if not view.is_leaf and not inside or view.is_leaf and parent_used is not None and not outside:
                self.diags.append(
                    warning("W002", port.span, f"port '{port.name}' is not connected")
                )

        for child in comp.children:
            if isinstance(child, Component):
                alias_used = {port for owner, port in used if owner == child.name}
                self.component(child, alias_used)

    def unique(self, items, key, code, what):
        seen = set()
        for it in items:
            k = key(it)
            if k in seen:
                self.err(code, it.span, f"duplicate {what} '{k}'")
            seen.add(k)

    def level(self, parent: Component, child):
        if isinstance(child, Component):
            lvl = child.level
        else:
            target = self.lookup(child.qname)
            if target is None:
                return
            if self.on_cycle(child.qname):
                # every reference cycle also breaks level decrease; report the cause
                self.err("E021", child.span, f"cyclic reference through '{child.qname}'")
                return
            lvl = target.level
        pl = parent.level
        if self.profile == "standard" and pl.standard and lvl.standard:
            ok = lvl.value == pl.value - 1
        else:
            ok = lvl.value < pl.value
        if not ok:
            self.err(
                "E012",
                child.span,
                f"{lvl} '{child_alias(child)}' cannot be a child of {pl} '{parent.name}'",
            )

    def on_cycle(self, qname) -> bool:
        """Whether following references from ``qname`` leads back to it."""
        seen, todo = set(), [qname]
        while todo:
            comp = self.lookup(todo.pop())
            if comp is None:
                continue
            for c in walk(comp):
                for child in c.children:
                    if isinstance(child, Reference):
                        if child.qname == qname:
                            return True
                        if child.qname not in seen:
                            seen.add(child.qname)
                            todo.append(child.qname)
        return False

    def reference(self, ref: Reference):
        target = self.lookup(ref.qname)
        if target is None:
            self.err("E011", ref.span, f"unresolved reference '{ref.qname}'")
            return
        view = self.view(target) or target
        for b in ref.args:
            if not is_literal(b.value):
                self.err("E022", b.span, f"argument '{b.name}' is not a literal")
                continue
            self.binding(b, view, None)

    def binding(self, b: Binding, target: Component, scope: Optional[Component]):
        p = target.param(b.name)
        if p is None:
            self.err("E014", b.span, f"'{target.name}' has no parameter '{b.name}'")
            return
        self.check_expr(b.value, p.ptype, scope, b.span, b.name)

    def check_expr(self, expr, expected, scope, span, what):
        if isinstance(expr, ParamRef) and (scope is None or scope.param(expr.name) is None):
            self.err("E019", span, f"unknown parameter '{expr.name}'")
            return
        if isinstance(expr, FrameLit):
            for sub, typ in ((expr.ref, "string"), (expr.offset, "vec6")):
                if isinstance(sub, ParamRef) and (scope is None or scope.param(sub.name) is None):
                    self.err("E019", span, f"unknown parameter '{sub.name}'")
                    return
                if expr_type(sub, scope) != typ:
                    self.err("E015", span, f"frame {typ} component has wrong type")
                    return
        actual = expr_type(expr, scope)
        if actual != expected:
            self.err("E015", span, f"'{what}' expects {expected}, got {actual}")

    def transition(self, t: Transition, view: Component, used: set):
        ends = []
        for ep in (t.source, t.target):
            if ep.owner == "self":
                owner, port = "self", view.port(ep.port)
                owner_comp = view
            else:
                child = view.child(ep.owner)
                owner_comp = self.resolve_child(child) if child is not None else None
                owner = "child"
                port = owner_comp.port(ep.port) if owner_comp is not None else None
                if child is not None and owner_comp is None:
                    return  # unresolved reference, reported elsewhere
            if port is None:
                self.err("E006", t.span, f"unresolved endpoint '{ep}'")
                return
            ends.append((owner, port.kind, owner_comp))
            used.add((ep.owner, ep.port))
        (so, sk, _), (do, dk, target) = ends
        if not endpoint_shape_legal(so, sk, do, dk):
            self.err("E005", t.span, f"illegal endpoint shape {t.source} -> {t.target}")
            return
        for b in t.bindings:
            self.binding(b, target, view)

    def device_call(self, call: DeviceCall, scope: Component):
        sig = COMMANDS.get((call.device, call.command))
        if sig is None:
            self.err("E016", call.span, f"unknown device command '{call.device}.{call.command}'")
            return
        required, optional, results = sig
        for b in call.args:
            typ = required.get(b.name) or optional.get(b.name)
            if typ is None:
                self.err("E017", b.span, f"'{call.command}' has no argument '{b.name}'")
                continue
            self.check_expr(b.value, typ, scope, b.span, b.name)
        given = {b.name for b in call.args}
        for name in required:
            if name not in given:
                self.err("E017", call.span, f"'{call.command}' requires argument '{name}'")
        for u in call.updates:
            if len(u.segments) < 2:
                self.err("E018", u.span, f"update path '{u.path}' needs object and attribute")
            elif u.source not in results:
                self.err("E018", u.span, f"'{call.command}' has no result field '{u.source}'")


def validate(model, table=None, profile: str = "standard") -> list[Diagnostic]:
    """All structural violations in ``model``, sorted by file, line, code.

    ``table`` resolves references; without one, only top-level names of
    ``model`` itself are visible.
    """
    if profile not in ("standard", "generic"):
        raise ValueError(f"unknown profile {profile!r}")
    components = list(model)
    if not isinstance(model, Model):
        model = Model(components)
    return _Validator(model, table, profile).run(components)


# ---------------------------------------------------------------------------
# Name resolution


def _references(component: Component) -> Iterator[tuple[str, Span]]:
    for c in walk(component):
        if c.extends is not None:
            yield c.extends, c.span
        for child in c.children:
            if isinstance(child, Reference):
                yield child.qname, child.span


def _qualify(component: Component, module: str, local: set) -> Component:
    """Copy of ``component`` with bare references to ``local`` names qualified."""
    comp = dataclasses.replace(component, name=f"{module}.{component.name}")

    def fix(c: Component) -> Component:
        c = dataclasses.replace(c)
        if c.extends in local:
            c.extends = f"{module}.{c.extends}"
        kids = []
        for child in c.children:
            if isinstance(child, Reference) and child.qname in local:
                child = dataclasses.replace(child, qname=f"{module}.{child.qname}")
            elif isinstance(child, Component):
                child = fix(child)
            kids.append(child)
        c.children = kids
        return c

    comp = fix(comp)
    return comp


def resolve_names(model: Model, search_paths=()):
    """Build the symbol table for ``model``. Returns ``(SymbolTable, diagnostics)``.

    Local components and components of ``use``-imported files are entered
    under their bare names. A qualified reference ``a.b.Name`` loads
    ``a/b.lr`` from the model's directory or ``search_paths`` and enters its
    components as ``a.b.<Name>``.
    """
    import os
    from .dsl import parse_file

    table = SymbolTable()
    origin = {}
    diags = []
    base_dir = os.path.dirname(model.file) if model.file and not model.file.startswith("<") else "."
    roots = [base_dir] + [str(p) for p in search_paths]

    def find(rel):
        for d in roots:
            cand = os.path.join(d, rel)
            if os.path.isfile(cand):
                return os.path.normpath(cand)
        return None

    def add(name, comp):
        if name in table:
            first = origin[name]
            diags.append(error("E010", comp.span, f"duplicate definition '{name}' (first at {first})"))
            return
        table[name] = comp
        origin[name] = comp.span

    loaded = set()

    def load_model(m: Model, directory):
        for comp in m.components:
            add(comp.name, comp)
        for use in m.uses:
            path = None
            for d in [directory] + roots:
                cand = os.path.join(d, use.path)
                if os.path.isfile(cand):
                    path = os.path.normpath(cand)
                    break
            if path is None:
                diags.append(error("E011", use.span, f"unresolved reference '{use.path}'"))
                continue
            if path in loaded:
                continue
            loaded.add(path)
            sub, sub_diags = parse_file(path)
            diags.extend(sub_diags)
            load_model(sub, os.path.dirname(path))

    if model.file and not model.file.startswith("<"):
        loaded.add(os.path.normpath(model.file))
    load_model(model, base_dir)

    modules = {}
    pending = True
    while pending:
        pending = False
        for comp in list(table.values()):
            for qname, span in _references(comp):
                if qname in table or "." not in qname:
                    continue
                module = qname.rsplit(".", 1)[0]
                if module in modules:
                    continue
                path = find(module.replace(".", os.sep) + ".lr")
                modules[module] = path
                if path is None:
                    continue
                sub, sub_diags = parse_file(path)
                diags.extend(sub_diags)
                local = {c.name for c in sub.components}
                for c in sub.components:
                    add(f"{module}.{c.name}", _qualify(c, module, local))
                pending = True

    for comp in list(table.values()):
        for qname, span in _references(comp):
            if qname not in table:
                diags.append(error("E011", span, f"unresolved reference '{qname}'"))
    return table, sort_diagnostics(diags)
