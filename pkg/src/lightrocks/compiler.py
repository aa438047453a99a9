"""Model-level code generation: flattening and DOT output.

Flattening replaces every ``uses`` reference with a copy of the referenced
component (argument bindings become parameter defaults) and merges every
``extends`` base into its extender. The result is one self-contained
component tree; running it yields the same trace as running the original.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

from .model import (
    Component, Diagnostic, Parameter, Reference, SymbolTable, child_alias, error,
    sort_diagnostics, walk,
)
from .dsl import format_condition


class FlattenError(Exception):
    def __init__(self, diagnostics):
        super().__init__("; ".join(str(d) for d in diagnostics))
        self.diagnostics = list(diagnostics)


@dataclass
class FlatModel:
    root: Component
    # instance path in the original model -> instance path in the flat model
    paths: dict = field(default_factory=dict)

    def __iter__(self):
        return iter([self.root])

    def rewrite(self, path: str) -> str:
        return self.paths.get(path, path)


def _lookup(table, qname):
    return table.lookup(qname) if hasattr(table, "lookup") else table.get(qname)


class _Flattener:
    def __init__(self, table):
        self.table = table
        self.diags: list[Diagnostic] = []
        self.paths = {}

    def merged(self, comp: Component, chain=()) -> Component:
        """Copy of ``comp`` with its extends chain merged in (additive only)."""
        if comp.extends is None:
            return copy.deepcopy(comp)
        if comp.extends in chain:
            self.diags.append(error("E021", comp.span, f"cyclic extension through '{comp.name}'"))
            raise FlattenError(self.diags)
        base_src = _lookup(self.table, comp.extends)
        if base_src is None:
            self.diags.append(error("E011", comp.span, f"unresolved reference '{comp.extends}'"))
            raise FlattenError(self.diags)
        base = self.merged(base_src, chain + (comp.extends,))
        own = copy.deepcopy(comp)

        params = list(base.params)
        for p in own.params:
            idx = next((i for i, b in enumerate(params) if b.name == p.name), None)
            if idx is None:
                params.append(p)
            elif params[idx].ptype != p.ptype:
                self.diags.append(error("E020", p.span, f"parameter '{p.name}' changes type"))
            else:
                params[idx] = Parameter(p.name, p.ptype, p.default, p.span)

        base_ports = {p.name for p in base.ports}
        for p in own.ports:
            if p.name in base_ports:
                self.diags.append(error("E020", p.span, f"port '{p.name}' already defined by base"))
        base_kids = {child_alias(c) for c in base.children}
        for c in own.children:
            if child_alias(c) in base_kids:
                self.diags.append(
                    error("E020", c.span, f"child '{child_alias(c)}' already defined by base"))
        if own.exec is not None and base.exec is not None:
            self.diags.append(error("E020", own.exec.span, "exec already defined by base"))
        if self.diags:
            raise FlattenError(self.diags)
        return Component(
            name=own.name,
            level=own.level,
            params=params,
            starts=base.starts + own.starts,
            ends=base.ends + own.ends,
            children=base.children + own.children,
            transitions=base.transitions + own.transitions,
            exec=own.exec or base.exec,
            extends=None,
            span=own.span,
        )

    def flatten(self, comp: Component, alias: str, path: str, refs=()) -> Component:
        out = self.merged(comp)
        out.name = alias
        self.paths[path] = path
        kids = []
        for child in out.children:
            name = child_alias(child)
            if isinstance(child, Reference):
                if child.qname in refs:
                    self.diags.append(
                        error("E021", child.span, f"cyclic reference through '{child.qname}'"))
                    raise FlattenError(self.diags)
                target = _lookup(self.table, child.qname)
                if target is None:
                    self.diags.append(
                        error("E011", child.span, f"unresolved reference '{child.qname}'"))
                    raise FlattenError(self.diags)
                sub = self.flatten(target, name, f"{path}/{name}", refs + (child.qname,))
                for b in child.args:
                    p = sub.param(b.name)
                    if p is not None:
                        p.default = b.value
                kids.append(sub)
            else:
                kids.append(self.flatten(child, name, f"{path}/{name}", refs))
        out.children = kids
        return out


def flatten(table, root_name: str) -> FlatModel:
    """Flatten ``root_name``; raises FlattenError (E011/E020/E021) on failure."""
    if isinstance(table, FlatModel):
        table = {table.root.name: table.root}
    elif isinstance(table, Component):
        table = {table.name: table}
    root = _lookup(table, root_name)
    if root is None:
        raise FlattenError([error("E011", Component(root_name, None).span,
                                  f"unresolved reference '{root_name}'")])
    f = _Flattener(table)
    flat = f.flatten(root, root_name, root_name, (root_name,))
    return FlatModel(flat, f.paths)


def flatten_diagnostics(model, table) -> list[Diagnostic]:
    """Flatten every top-level component of ``model``; collect E020/E021."""
    diags = []
    for comp in model:
        try:
            flatten(table, comp.name)
        except FlattenError as e:
            diags.extend(d for d in e.diagnostics if d.code in ("E020", "E021"))
        except RecursionError:
            diags.append(error("E021", comp.span, f"cyclic reference through '{comp.name}'"))
    return sort_diagnostics(diags)


def flat_table(flat: FlatModel) -> SymbolTable:
    return SymbolTable({flat.root.name: flat.root})


def count_leaves(component: Component) -> int:
    return sum(1 for c in walk(component) if c.is_leaf)


# ---------------------------------------------------------------------------
# DOT


def _q(s: str) -> str:
    return '"' + s.replace('"', '\\"') + '"'


def emit_dot(flat) -> str:
    """Graphviz text: a cluster per composite, a node per port and per leaf."""
    root = flat.root if isinstance(flat, FlatModel) else flat
    lines = [f"digraph {_q(root.name)} {{", "  compound=true;", "  rankdir=LR;"]
    edges = []

    def port_node(path, port):
        return f"{path}:{port.kind}:{port.name}"

    def endpoint_node(comp, path, ep, kind):
        if ep.owner == "self":
            return port_node(path, comp.port(ep.port, kind))
        child = comp.child(ep.owner)
        cpath = f"{path}/{ep.owner}"
        if child.is_leaf:
            return cpath
        return port_node(cpath, child.port(ep.port, kind))

    def emit(comp: Component, path: str, indent: int):
        pad = "  " * indent
        if comp.is_leaf:
            call = comp.exec
            label = f"{comp.name}\\n{call.device}.{call.command}" if call else comp.name
            lines.append(f"{pad}{_q(path)} [shape=box, style=rounded, label={_q(label)}];")
            return
        lines.append(f"{pad}subgraph {_q('cluster_' + path)} {{")
        lines.append(f"{pad}  label={_q(f'{comp.level} {comp.name}')};")
        for p in comp.starts:
            lines.append(f"{pad}  {_q(port_node(path, p))} [shape=circle, label={_q(p.name)}];")
        for p in comp.ends:
            lines.append(
                f"{pad}  {_q(port_node(path, p))} [shape=doublecircle, label={_q(p.name)}];")
        for c in comp.children:
            emit(c, f"{path}/{c.name}", indent + 1)
        lines.append(f"{pad}}}")
        for t in comp.transitions:
            src = endpoint_node(comp, path, t.source, "start" if t.source.owner == "self" else "end")
            dst = endpoint_node(comp, path, t.target, "end" if t.target.owner == "self" else "start")
            parts = [f"{t.source.port} -> {t.target.port}"]
            if t.pre is not None:
                parts.append(f"pre: {format_condition(t.pre)}")
            if t.post is not None:
                parts.append(f"post: {format_condition(t.post)}")
            label = _q("\\n".join(parts))
            edges.append(f"  {_q(src)} -> {_q(dst)} [label={label}];")

    emit(root, root.name, 1)
    lines.extend(edges)
    lines.append("}")
    return "\n".join(lines) + "\n"
