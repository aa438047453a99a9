"""Textual syntax for skill models: lexer, parser and canonical printer.

Example::

    skill S {
      start s0;
      end done;
      action A {
        start a;
        end b;
        exec tool.release() until tool.width >= 0.05;
      }
      on self.s0 -> A.a;
      on A.b -> self.done;
    }
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

from .model import (
    And, Binding, Bool, BoolChannel, Compare, Component, Const, Diagnostic,
    DeviceCall, Endpoint, FrameLit, Level, Model, Not, Num, Or, ParamRef,
    Parameter, Port, Reference, Span, Str, Transition, UpdateBinding, Use, Vec,
    error, PARAM_TYPES,
)

LEVEL_KEYWORDS = ("task", "skill", "action", "component")
KEYWORDS = {
    "use", "uses", "as", "extends", "start", "end", "when", "on", "pre", "post",
    "set", "exec", "until", "yields", "result", "self", "true", "false", "and",
    "or", "not", "frame", *LEVEL_KEYWORDS, *PARAM_TYPES,
}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>//[^\n]*)
  | (?P<number>\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>:=|->|<=|>=|==|!=|[{}()\[\];,.=<>\-])
    """,
    re.VERBOSE,
)


@dataclass
class Token:
    kind: str  # ident | keyword | number | string | op | eof | bad
    text: str
    line: int
    col: int

    @property
    def end_col(self):
        return self.col + max(len(self.text), 1) - 1


class ParseError(Exception):
    def __init__(self, diagnostic: Diagnostic):
        super().__init__(str(diagnostic))
        self.diagnostic = diagnostic


def tokenize(text: str):
    """Yield tokens; unknown characters come out as ``bad`` tokens."""
    line, line_start, pos = 1, 0, 0
    n = len(text)
    while pos < n:
        m = _TOKEN_RE.match(text, pos)
        col = pos - line_start + 1
        if m is None:
            yield Token("bad", text[pos], line, col)
            pos += 1
            continue
        kind = m.lastgroup
        tok = m.group()
        if kind not in ("ws", "comment"):
            if kind == "ident" and tok in KEYWORDS:
                kind = "keyword"
            yield Token(kind, tok, line, col)
        nl = tok.count("\n")
        if nl:
            line += nl
            line_start = pos + tok.rindex("\n") + 1
        pos = m.end()
    yield Token("eof", "", line, pos - line_start + 1)


class Parser:
    def __init__(self, text: str, file: str = "<string>"):
        self.file = file
        self.toks = list(tokenize(text))
        self.i = 0
        self.diags: list[Diagnostic] = []
        for t in self.toks:
            if t.kind == "bad":
                self.diags.append(
                    error("E100", self.span_of(t), f"unexpected character {t.text!r}")
                )
        self.toks = [t for t in self.toks if t.kind != "bad"]

    # -- token helpers -----------------------------------------------------

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k=1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def span_of(self, start: Token, end: Token = None) -> Span:
        end = end or start
        return Span(self.file, start.line, start.col, end.line, end.end_col)

    def span_from(self, start: Token) -> Span:
        return self.span_of(start, self.toks[max(self.i - 1, 0)])

    def at(self, *texts) -> bool:
        return self.tok.kind in ("op", "keyword") and self.tok.text in texts

    def fail(self, expected: str):
        t = self.tok
        got = "end of file" if t.kind == "eof" else repr(t.text)
        raise ParseError(error("E100", self.span_of(t), f"expected {expected}, got {got}"))

    def expect(self, text: str) -> Token:
        if not self.at(text):
            self.fail(repr(text))
        t = self.tok
        self.i += 1
        return t

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.i += 1
            return True
        return False

    def ident(self, what="identifier") -> str:
        if self.tok.kind != "ident":
            self.fail(what)
        t = self.tok
        self.i += 1
        return t.text

    def qname(self) -> str:
        parts = [self.ident("qualified name")]
        while self.at(".") and self.peek().kind == "ident":
            self.i += 1
            parts.append(self.ident())
        return ".".join(parts)

    def path(self) -> str:
        """Dotted path; segments may be identifiers, integers or keywords."""
        parts = [self._path_segment(first=True)]
        while self.at("."):
            self.i += 1
            parts.append(self._path_segment())
        return ".".join(parts)

    def _path_segment(self, first=False):
        t = self.tok
        ok = t.kind == "ident" or (t.kind == "keyword" and t.text in ("result", "start", "end"))
        if not first and t.kind == "number" and t.text.isdigit():
            ok = True
        if not ok:
            self.fail("path segment")
        self.i += 1
        return t.text

    # -- recovery ----------------------------------------------------------

    def sync_item(self):
        """Skip to just past the next ``;`` or to the ``}`` closing this block."""
        depth = 0
        while self.tok.kind != "eof":
            if self.at("{"):
                depth += 1
            elif self.at("}"):
                if depth == 0:
                    return
                depth -= 1
                if depth == 0:
                    self.i += 1
                    return
            elif self.at(";") and depth == 0:
                self.i += 1
                return
            self.i += 1

    def sync_top(self):
        depth = 0
        self.i += 1 if self.tok.kind != "eof" else 0
        while self.tok.kind != "eof":
            if self.at("{"):
                depth += 1
            elif self.at("}"):
                depth = max(depth - 1, 0)
            elif depth == 0 and self.at("use", *LEVEL_KEYWORDS):
                return
            self.i += 1

    # -- grammar -----------------------------------------------------------

    def model(self) -> Model:
        m = Model(file=self.file)
        while self.tok.kind != "eof":
            start = self.i
            try:
                if self.at("use"):
                    t = self.expect("use")
                    path = self.string()
                    self.expect(";")
                    m.uses.append(Use(path, self.span_from(t)))
                elif self.at(*LEVEL_KEYWORDS):
                    m.components.append(self.component())
                else:
                    self.fail("'use' or a component declaration")
            except ParseError as e:
                self.diags.append(e.diagnostic)
                if self.i == start or not self.at("use", *LEVEL_KEYWORDS):
                    self.sync_top()
        return m

    def level(self) -> Level:
        t = self.tok
        self.i += 1
        if t.text == "component":
            if self.tok.kind != "number" or not self.tok.text.isdigit():
                self.fail("level number")
            depth = int(self.tok.text)
            self.i += 1
            return Level("component", depth)
        return Level(t.text)

    def component(self) -> Component:
        start = self.tok
        level = self.level()
        name = self.ident("component name")
        comp = Component(name, level)
        if self.accept("("):
            comp.params.append(self.param())
            while self.accept(","):
                comp.params.append(self.param())
            self.expect(")")
        if self.accept("extends"):
            comp.extends = self.qname()
        self.expect("{")
        while not self.at("}"):
            if self.tok.kind == "eof":
                comp.span = self.span_from(start)
                self.fail("'}'")
            before = self.i
            try:
                self.item(comp)
            except ParseError as e:
                self.diags.append(e.diagnostic)
                if self.i == before and not self.at("}"):
                    self.i += 1
                self.sync_item()
        self.expect("}")
        comp.span = self.span_from(start)
        return comp

    def param(self) -> Parameter:
        t = self.tok
        if not self.at(*PARAM_TYPES):
            self.fail("parameter type")
        self.i += 1
        name = self.ident("parameter name")
        default = self.expr() if self.accept("=") else None
        return Parameter(name, t.text, default, self.span_from(t))

    def item(self, comp: Component):
        t = self.tok
        if self.at("start", "end"):
            self.i += 1
            name = self.ident("port name")
            guard = self.cond() if self.accept("when") else None
            self.expect(";")
            port = Port(name, t.text, guard, self.span_from(t))
            (comp.starts if t.text == "start" else comp.ends).append(port)
        elif self.at(*LEVEL_KEYWORDS):
            comp.children.append(self.component())
        elif self.at("uses"):
            self.i += 1
            qname = self.qname()
            self.expect("as")
            alias = self.ident("alias")
            args = []
            if self.accept("("):
                args = self.arg_binds(")")
                self.expect(")")
            self.expect(";")
            comp.children.append(Reference(qname, alias, args, self.span_from(t)))
        elif self.at("on"):
            self.i += 1
            src = self.endpoint()
            self.expect("->")
            dst = self.endpoint()
            pre = self.cond() if self.accept("pre") else None
            post = self.cond() if self.accept("post") else None
            binds = []
            if self.accept("set"):
                binds = self.arg_binds(";", allow_empty=False)
            self.expect(";")
            comp.transitions.append(Transition(src, dst, pre, post, binds, self.span_from(t)))
        elif self.at("exec"):
            if comp.exec is not None:
                raise ParseError(error("E003", self.span_of(t), "duplicate exec"))
            self.i += 1
            comp.exec = self.exec_call(t)
        else:
            self.fail("declaration")

    def endpoint(self) -> Endpoint:
        if self.accept("self"):
            owner = "self"
        else:
            owner = self.ident("endpoint owner")
        self.expect(".")
        return Endpoint(owner, self.ident("port name"))

    def arg_binds(self, closer, allow_empty=True):
        binds = []
        if allow_empty and self.at(closer):
            return binds
        binds.append(self.arg_bind())
        while self.accept(","):
            binds.append(self.arg_bind())
        return binds

    def arg_bind(self) -> Binding:
        t = self.tok
        name = self.ident("argument name")
        self.expect("=")
        return Binding(name, self.expr(), self.span_from(t))

    def exec_call(self, start: Token) -> DeviceCall:
        path = self.path()
        if "." not in path:
            self.fail("device.command")
        device, command = path.rsplit(".", 1)
        self.expect("(")
        args = self.arg_binds(")")
        self.expect(")")
        call = DeviceCall(device, command, args)
        if self.accept("until"):
            call.until = self.cond()
        if self.accept("yields"):
            call.updates.append(self.update())
            while self.accept(","):
                call.updates.append(self.update())
        self.expect(";")
        call.span = self.span_from(start)
        return call

    def update(self) -> UpdateBinding:
        t = self.tok
        path = self.path()
        self.expect(":=")
        self.expect("result")
        self.expect(".")
        field = self.ident("result field")
        return UpdateBinding(path, field, self.span_from(t))

    # -- expressions -------------------------------------------------------

    def string(self) -> str:
        if self.tok.kind != "string":
            self.fail("string")
        s = json.loads(self.tok.text)
        self.i += 1
        return s

    def number(self) -> float:
        neg = self.accept("-")
        if self.tok.kind != "number":
            self.fail("number")
        v = float(self.tok.text)
        self.i += 1
        return -v if neg else v

    def expr(self):
        t = self.tok
        if t.kind == "number" or self.at("-"):
            return Num(self.number())
        if t.kind == "string":
            return Str(self.string())
        if self.at("true", "false"):
            self.i += 1
            return Bool(t.text == "true")
        if self.at("["):
            self.i += 1
            items = []
            if not self.at("]"):
                items.append(self.number())
                while self.accept(","):
                    items.append(self.number())
            self.expect("]")
            return Vec(tuple(items))
        if self.at("frame"):
            self.i += 1
            self.expect("(")
            ref = self.expr()
            self.expect(",")
            off = self.expr()
            self.expect(")")
            return FrameLit(ref, off)
        if t.kind == "ident":
            self.i += 1
            return ParamRef(t.text)
        self.fail("expression")

    def cond(self):
        left = self.cond_and()
        while self.accept("or"):
            left = Or(left, self.cond_and())
        return left

    def cond_and(self):
        left = self.cond_not()
        while self.accept("and"):
            left = And(left, self.cond_not())
        return left

    def cond_not(self):
        if self.accept("not"):
            return Not(self.cond_not())
        return self.cond_atom()

    def cond_atom(self):
        if self.accept("("):
            c = self.cond()
            self.expect(")")
            return c
        if self.at("true", "false"):
            v = self.tok.text == "true"
            self.i += 1
            return Const(v)
        path = self.path()
        if self.at("<", "<=", ">", ">=", "==", "!="):
            op = self.tok.text
            self.i += 1
            return Compare(path, op, self.number())
        return BoolChannel(path)


def parse(text: str, file_name: str = "<string>"):
    """Parse a source text. Returns ``(Model, diagnostics)``; never raises."""
    p = Parser(text, file_name)
    m = p.model()
    return m, sorted(p.diags, key=Diagnostic.sort_key)


def parse_condition(text: str):
    """Parse a standalone condition; raises ParseError on malformed input."""
    p = Parser(text)
    if p.diags:
        raise ParseError(p.diags[0])
    c = p.cond()
    if p.tok.kind != "eof":
        p.fail("end of condition")
    return c


def parse_file(path):
    with open(path, encoding="utf-8", newline="") as f:
        return parse(f.read(), str(path))


# ---------------------------------------------------------------------------
# Printer


def format_number(v: float) -> str:
    return repr(float(v))


def format_expr(e) -> str:
    if isinstance(e, Num):
        return format_number(e.value)
    if isinstance(e, Str):
        return json.dumps(e.value)
    if isinstance(e, Bool):
        return "true" if e.value else "false"
    if isinstance(e, Vec):
        return "[" + ", ".join(format_number(v) for v in e.items) + "]"
    if isinstance(e, FrameLit):
        return f"frame({format_expr(e.ref)}, {format_expr(e.offset)})"
    if isinstance(e, ParamRef):
        return e.name
    raise TypeError(f"not an expression: {e!r}")


_PREC = {Or: 1, And: 2, Not: 3}


def format_condition(c, parent_prec=0) -> str:
    prec = _PREC.get(type(c), 4)
    if isinstance(c, (Or, And)):
        op = " or " if isinstance(c, Or) else " and "
        # left-associative: a right operand of equal precedence needs parens
        s = format_condition(c.left, prec) + op + format_condition(c.right, prec + 1)
    elif isinstance(c, Not):
        s = "not " + format_condition(c.operand, prec)
    elif isinstance(c, Compare):
        s = f"{c.path} {c.op} {format_number(c.value)}"
    elif isinstance(c, BoolChannel):
        s = c.path
    elif isinstance(c, Const):
        s = "true" if c.value else "false"
    else:
        raise TypeError(f"not a condition: {c!r}")
    return f"({s})" if prec < parent_prec else s


def _binds(binds):
    return ", ".join(f"{b.name} = {format_expr(b.value)}" for b in binds)


def _print_component(c: Component, indent: int, out: list):
    pad = "  " * indent
    head = f"{pad}{c.level} {c.name}"
    if c.params:
        ps = []
        for p in c.params:
            s = f"{p.ptype} {p.name}"
            if p.default is not None:
                s += f" = {format_expr(p.default)}"
            ps.append(s)
        head += "(" + ", ".join(ps) + ")"
    if c.extends:
        head += f" extends {c.extends}"
    out.append(head + " {")
    inner = "  " * (indent + 1)
    for port in c.starts + c.ends:
        s = f"{inner}{port.kind} {port.name}"
        if port.guard is not None:
            s += f" when {format_condition(port.guard)}"
        out.append(s + ";")
    for child in c.children:
        if isinstance(child, Reference):
            s = f"{inner}uses {child.qname} as {child.alias}"
            if child.args:
                s += f"({_binds(child.args)})"
            out.append(s + ";")
        else:
            _print_component(child, indent + 1, out)
    if c.exec is not None:
        e = c.exec
        s = f"{inner}exec {e.device}.{e.command}({_binds(e.args)})"
        if e.until is not None:
            s += f" until {format_condition(e.until)}"
        if e.updates:
            s += " yields " + ", ".join(f"{u.path} := result.{u.source}" for u in e.updates)
        out.append(s + ";")
    for t in c.transitions:
        s = f"{inner}on {t.source} -> {t.target}"
        if t.pre is not None:
            s += f" pre {format_condition(t.pre)}"
        if t.post is not None:
            s += f" post {format_condition(t.post)}"
        if t.bindings:
            s += f" set {_binds(t.bindings)}"
        out.append(s + ";")
    out.append(pad + "}")


def print_model(model) -> str:
    """Canonical text: 2-space indent, one declaration per line, LF endings."""
    out = []
    uses = model.uses if isinstance(model, Model) else []
    for u in uses:
        out.append(f"use {json.dumps(u.path)};")
    comps = list(model) if not isinstance(model, Component) else [model]
    for i, c in enumerate(comps):
        if out:
            out.append("")
        _print_component(c, 0, out)
    return "\n".join(out) + "\n"
