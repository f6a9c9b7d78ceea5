"""Concrete syntax for `.effc` files: lexer, parser and term printer."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Union

from .errors import DeclError, ParseError
from .syntax import (
    GROUND_BY_NAME, Absurd, App, Computation, Expression, FalseLit, Fun, Handler, If,
    Inst, IsZero, Let, LetRec, LetVal, OpCall, OpCase, Pred, Signature, Succ, Term,
    TrueLit, UnitVal, Val, Var, With, Zero, free_vars, fresh_name, nat_value, numeral,
)

KEYWORDS = frozenset(
    "effect instance let letval letrec in val fun handler with handle if then else "
    "iszero pred succ absurd true false run".split()
)
DECL_STARTS = frozenset({"effect", "instance", "letval", "letrec", "run"})

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>--[^\n]*)
  | (?P<arrow>->|→|↦)
  | (?P<num>[0-9]+)
  | (?P<name>[A-Za-z_][A-Za-z0-9_']*)
  | (?P<unit>\(\s*\))
  | (?P<sym>[#();.|=:,{}])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str  # name, kw, num, sym, unit, eof
    text: str
    line: int
    col: int


def tokenize(source: str) -> list[Token]:
    toks: list[Token] = []
    line, line_start, i = 1, 0, 0
    while i < len(source):
        m = _TOKEN_RE.match(source, i)
        if m is None:
            raise ParseError(line, i - line_start + 1, f"unexpected character {source[i]!r}")
        kind = m.lastgroup
        text = m.group()
        col = i - line_start + 1
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind in ("ws", "comment"):
            pass
        elif kind == "arrow":
            toks.append(Token("sym", "->", line, col))
        elif kind == "name":
            toks.append(Token("kw" if text in KEYWORDS else "name", text, line, col))
        elif kind == "unit":
            toks.append(Token("unit", "()", line, col))
            # the unit literal may span a newline only in pathological input
            nls = text.count("\n")
            if nls:
                line += nls
                line_start = i + text.rfind("\n") + 1
        else:
            toks.append(Token(kind, text, line, col))
        i = m.end()
    toks.append(Token("eof", "", line, i - line_start + 1))
    return toks


# ---------------------------------------------------------------------------
# Program structure

@dataclass(frozen=True)
class EffectDecl:
    name: str
    ops: tuple[tuple[str, str, str], ...]  # (op, param ground, result ground)
    pos: tuple[int, int] | None = field(default=None, compare=False)


@dataclass(frozen=True)
class InstanceDecl:
    name: str
    effect: str
    pos: tuple[int, int] | None = field(default=None, compare=False)


@dataclass(frozen=True)
class TopLet:
    name: str
    value: Expression
    pos: tuple[int, int] | None = field(default=None, compare=False)


@dataclass(frozen=True)
class TopLetRec:
    name: str
    param: str
    body: Computation
    pos: tuple[int, int] | None = field(default=None, compare=False)

    def as_value(self) -> Expression:
        """`fun x -> letrec f x = c in c`, the value bound to f."""
        return Fun(self.param, LetRec(self.name, self.param, self.body, self.body, pos=self.pos),
                   pos=self.pos)


@dataclass(frozen=True)
class RunDirective:
    comp: Computation
    pos: tuple[int, int] | None = field(default=None, compare=False)


Decl = Union[EffectDecl, InstanceDecl, TopLet, TopLetRec, RunDirective]


@dataclass
class Program:
    decls: list[Decl]
    signature: Signature

    def bindings(self) -> list[Decl]:
        return [d for d in self.decls if isinstance(d, (TopLet, TopLetRec, RunDirective))]


# ---------------------------------------------------------------------------
# Parser

class _Backtrack(Exception):
    pass


class Parser:
    def __init__(self, source: str, signature: Signature | None = None,
                 names: set[str] | None = None):
        self.toks = tokenize(source)
        self.i = 0
        sig = signature or Signature()
        self.effects = {e: dict(ops) for e, ops in sig.effects.items()}
        self.instances = dict(sig.instances)
        self.top_names = set(names or ())
        self.scope: list[str] = []
        self.furthest: ParseError | None = None

    # token helpers --------------------------------------------------------
    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def at(self, text: str, k: int = 0) -> bool:
        t = self.peek(k) if k else self.tok
        return t.kind in ("sym", "kw") and t.text == text

    def error(self, msg: str, tok: Token | None = None) -> ParseError:
        t = tok or self.tok
        err = ParseError(t.line, t.col, msg)
        f = self.furthest
        if f is None or (t.line, t.col) >= (f.line, f.column):
            self.furthest = err
        return err

    def expect(self, text: str) -> Token:
        if not self.at(text):
            found = self.tok.text or "end of input"
            raise self.error(f"expected {text!r}, found {found!r}")
        t = self.tok
        self.i += 1
        return t

    def name(self) -> str:
        if self.tok.kind != "name":
            found = self.tok.text or "end of input"
            raise self.error(f"expected a name, found {found!r}")
        t = self.tok
        self.i += 1
        return t.text

    def pos(self) -> tuple[int, int]:
        return (self.tok.line, self.tok.col)

    def signature(self) -> Signature:
        return Signature({e: dict(o) for e, o in self.effects.items()}, dict(self.instances))

    def op_effect(self, op: str) -> str | None:
        for e, ops in self.effects.items():
            if op in ops:
                return e
        return None

    def check_op(self, op: str, tok: Token) -> None:
        if self.op_effect(op) is None:
            raise DeclError(f"undeclared operation {op}", (tok.line, tok.col))

    # scope ----------------------------------------------------------------
    def bind(self, *names: str):
        self.scope.extend(names)

    def unbind(self, n: int):
        del self.scope[len(self.scope) - n:]

    def resolve(self, name: str, pos) -> Expression:
        if name in self.scope:
            return Var(name, pos=pos)
        if name in self.instances:
            return Inst(name, pos=pos)
        return Var(name, pos=pos)

    # declarations -----------------------------------------------------------
    def program(self) -> Program:
        decls: list[Decl] = []
        while self.tok.kind != "eof":
            decls.append(self.decl())
        return Program(decls, self.signature())

    def decl(self) -> Decl:
        t = self.tok
        p = self.pos()
        if self.at("effect"):
            self.i += 1
            return self.effect_decl(p)
        if self.at("instance"):
            self.i += 1
            name_tok = self.tok
            name = self.name()
            self.expect(":")
            eff_tok = self.tok
            eff = self.name()
            if eff not in self.effects:
                raise DeclError(f"undeclared effect {eff}", (eff_tok.line, eff_tok.col))
            if name in self.instances:
                raise DeclError(f"instance {name} declared twice", (name_tok.line, name_tok.col))
            self.instances[name] = eff
            return InstanceDecl(name, eff, pos=p)
        if self.at("letval"):
            self.i += 1
            name = self.name()
            self.expect("=")
            value = self.expr()
            self.top_names.add(name)
            return TopLet(name, value, pos=p)
        if self.at("letrec"):
            self.i += 1
            f = self.name()
            x = self.name()
            self.expect("=")
            self.bind(f, x)
            body = self.comp()
            self.unbind(2)
            self.top_names.add(f)
            return TopLetRec(f, x, body, pos=p)
        if self.at("run"):
            self.i += 1
            return RunDirective(self.comp(), pos=p)
        raise self.error(f"expected a declaration, found {t.text or 'end of input'!r}")

    def effect_decl(self, p) -> EffectDecl:
        name_tok = self.tok
        name = self.name()
        if name in self.effects:
            raise DeclError(f"effect {name} declared twice", (name_tok.line, name_tok.col))
        self.expect("{")
        ops: list[tuple[str, str, str]] = []
        while not self.at("}"):
            op_tok = self.tok
            op = self.name()
            if self.op_effect(op) is not None or any(o == op for o, _, _ in ops):
                raise DeclError(f"operation {op} declared twice", (op_tok.line, op_tok.col))
            self.expect(":")
            a, b = self.op_signature(op)
            ops.append((op, a, b))
            if not self.at(","):
                break
            self.i += 1
        self.expect("}")
        self.effects[name] = {o: (GROUND_BY_NAME[a], GROUND_BY_NAME[b]) for o, a, b in ops}
        return EffectDecl(name, tuple(ops), pos=p)

    def op_signature(self, op: str) -> tuple[str, str]:
        start = self.tok
        pieces: list[list[Token]] = [[]]
        depth = 0
        while True:
            t = self.tok
            if t.kind == "eof":
                raise self.error("unterminated effect declaration")
            if depth == 0 and t.kind == "sym" and t.text in (",", "}"):
                break
            if t.kind == "sym" and t.text == "(":
                depth += 1
            elif t.kind == "sym" and t.text == ")":
                depth -= 1
            if depth == 0 and t.kind == "sym" and t.text == "->":
                pieces.append([])
            else:
                pieces[-1].append(t)
            self.i += 1
        if len(pieces) != 2 or any(len(pc) != 1 for pc in pieces):
            raise DeclError(f"operation {op} must have a signature A -> B over ground types",
                            (start.line, start.col))
        names = []
        for (tk,) in pieces:
            if tk.kind == "unit":
                names.append("unit")
            elif tk.text in GROUND_BY_NAME:
                names.append(tk.text)
            else:
                raise DeclError(f"operation {op} uses non-ground type {tk.text}", (tk.line, tk.col))
        return names[0], names[1]

    # expressions ------------------------------------------------------------
    def expr(self) -> Expression:
        p = self.pos()
        if self.at("fun"):
            self.i += 1
            x = self.name()
            self.expect("->")
            self.bind(x)
            body = self.comp()
            self.unbind(1)
            return Fun(x, body, pos=p)
        if self.at("handler"):
            self.i += 1
            return self.handler_cases(p)
        if self.at("succ"):
            return self.sexpr()
        return self.aexpr()

    def sexpr(self) -> Expression:
        p = self.pos()
        if self.at("succ"):
            self.i += 1
            return Succ(self.sexpr(), pos=p)
        return self.aexpr()

    def handler_cases(self, p) -> Handler:
        value_case = None
        cases: list[OpCase] = []
        if not self.at("|"):
            raise self.error("expected '|' to start a handler case")
        while self.at("|"):
            self.i += 1
            cp = self.pos()
            if self.at("val"):
                if value_case is not None:
                    raise self.error("handler has two value cases")
                self.i += 1
                x = self.name()
                self.expect("->")
                self.bind(x)
                body = self.comp()
                self.unbind(1)
                value_case = (x, body)
                continue
            inst = self.atom()
            self.expect("#")
            op_tok = self.tok
            op = self.name()
            self.check_op(op, op_tok)
            x = self.name()
            k = self.name()
            self.expect("->")
            self.bind(x, k)
            body = self.comp()
            self.unbind(2)
            cases.append(OpCase(inst, op, x, k, body, pos=cp))
        if value_case is None:
            value_case = ("x", Val(Var("x")))
        return Handler(value_case[0], value_case[1], tuple(cases), pos=p)

    def atom(self) -> Expression:
        t = self.tok
        p = (t.line, t.col)
        if t.kind == "name":
            self.i += 1
            return self.resolve(t.text, p)
        if t.kind == "num":
            self.i += 1
            n = numeral(int(t.text))
            return _with_pos(n, p)
        if t.kind == "unit":
            self.i += 1
            return UnitVal(pos=p)
        if self.at("true"):
            self.i += 1
            return TrueLit(pos=p)
        if self.at("false"):
            self.i += 1
            return FalseLit(pos=p)
        if self.at("("):
            self.i += 1
            e = self.expr()
            self.expect(")")
            return e
        found = t.text or "end of input"
        raise self.error(f"expected an expression, found {found!r}")

    def generic(self, inst: Expression, op: str, p) -> Fun:
        avoid = set(free_vars(inst))
        x = "x" if "x" not in avoid else fresh_name("x", avoid)
        avoid.add(x)
        y = "y" if "y" not in avoid else fresh_name("y", avoid)
        return Fun(x, OpCall(inst, op, Var(x), y, Val(Var(y)), pos=p), pos=p)

    def aexpr(self) -> Expression:
        e = self.atom()
        while self.at("#"):
            p = self.pos()
            self.i += 1
            op_tok = self.tok
            op = self.name()
            self.check_op(op, op_tok)
            e = self.generic(e, op, p)
        return e

    # computations -----------------------------------------------------------
    def comp(self) -> Computation:
        p = self.pos()
        t = self.tok
        if self.at("val"):
            self.i += 1
            return Val(self.expr(), pos=p)
        if self.at("if"):
            self.i += 1
            cond = self.expr()
            self.expect("then")
            c1 = self.comp()
            self.expect("else")
            c2 = self.comp()
            return If(cond, c1, c2, pos=p)
        if self.at("let"):
            self.i += 1
            x = self.name()
            self.expect("=")
            c1 = self.comp()
            self.expect("in")
            self.bind(x)
            c2 = self.comp()
            self.unbind(1)
            return Let(x, c1, c2, pos=p)
        if self.at("letval"):
            self.i += 1
            x = self.name()
            self.expect("=")
            e = self.expr()
            self.expect("in")
            self.bind(x)
            c = self.comp()
            self.unbind(1)
            return LetVal(x, e, c, pos=p)
        if self.at("letrec"):
            self.i += 1
            f = self.name()
            x = self.name()
            self.expect("=")
            self.bind(f, x)
            c1 = self.comp()
            self.unbind(1)
            self.expect("in")
            c2 = self.comp()
            self.unbind(1)
            return LetRec(f, x, c1, c2, pos=p)
        if self.at("with"):
            self.i += 1
            h = self.expr()
            self.expect("handle")
            c = self.comp()
            return With(h, c, pos=p)
        if self.at("iszero"):
            self.i += 1
            return IsZero(self.sexpr(), pos=p)
        if self.at("pred"):
            self.i += 1
            return Pred(self.sexpr(), pos=p)
        if self.at("absurd"):
            self.i += 1
            return Absurd(self.sexpr(), pos=p)
        if self.at("("):
            save, scope = self.i, list(self.scope)
            try:
                return self.headed_comp(p)
            except ParseError:
                self.i, self.scope = save, scope
            self.i += 1
            c = self.comp()
            self.expect(")")
            return c
        if t.kind in ("name", "num", "unit") or self.at("true") or self.at("false"):
            return self.headed_comp(p)
        found = t.text or "end of input"
        raise self.error(f"expected a computation, found {found!r}")

    def headed_comp(self, p) -> Computation:
        """Computations led by an expression: application or operation call."""
        e = self.atom()
        while self.at("#"):
            hp = self.pos()
            self.i += 1
            op_tok = self.tok
            op = self.name()
            self.check_op(op, op_tok)
            if self.at("("):
                save, scope = self.i, list(self.scope)
                self.i += 1
                try:
                    arg = self.expr()
                    is_call = self.at(";")
                except ParseError:
                    is_call = False
                if is_call:
                    self.i += 1
                    y = self.name()
                    self.expect(".")
                    self.bind(y)
                    body = self.comp()
                    self.unbind(1)
                    self.expect(")")
                    return OpCall(e, op, arg, y, body, pos=hp)
                self.i, self.scope = save, scope
            e = self.generic(e, op, hp)
        arg = self.aexpr()
        return App(e, arg, pos=p)


def _with_pos(e: Expression, p) -> Expression:
    if isinstance(e, Succ):
        return Succ(_with_pos(e.arg, p), pos=p)
    return Zero(pos=p)


def parse_program(source: str, signature: Signature | None = None,
                  names: set[str] | None = None) -> Program:
    """Parse a whole `.effc` source text."""
    parser = Parser(source, signature, names)
    try:
        return parser.program()
    except ParseError as err:
        f = parser.furthest
        if f is not None and (f.line, f.column) > (err.line, err.column):
            raise f from None
        raise


def parse_computation(source: str, signature: Signature | None = None,
                      names: set[str] | None = None, bound: list[str] | None = None) -> Computation:
    parser = Parser(source, signature, names)
    parser.scope = list(bound or [])
    c = parser.comp()
    if parser.tok.kind != "eof":
        raise parser.error(f"unexpected {parser.tok.text!r} after computation")
    return c


def parse_expression(source: str, signature: Signature | None = None,
                     names: set[str] | None = None, bound: list[str] | None = None) -> Expression:
    parser = Parser(source, signature, names)
    parser.scope = list(bound or [])
    e = parser.expr()
    if parser.tok.kind != "eof":
        raise parser.error(f"unexpected {parser.tok.text!r} after expression")
    return e


# ---------------------------------------------------------------------------
# Printer

def _generic_parts(e) -> tuple[Expression, str] | None:
    """Recognise `fun x -> inst#op(x; y. val y)` and return (inst, op)."""
    if not isinstance(e, Fun):
        return None
    c = e.body
    if (isinstance(c, OpCall) and isinstance(c.arg, Var) and c.arg.name == e.binder
            and c.binder != e.binder and isinstance(c.body, Val)
            and isinstance(c.body.arg, Var) and c.body.arg.name == c.binder
            and e.binder not in free_vars(c.inst)):
        return c.inst, c.op
    return None


def _atom(e: Expression) -> str:
    if isinstance(e, (Var, Inst)):
        return e.name
    if isinstance(e, TrueLit):
        return "true"
    if isinstance(e, FalseLit):
        return "false"
    if isinstance(e, UnitVal):
        return "()"
    n = nat_value(e)
    if n is not None:
        return str(n)
    g = _generic_parts(e)
    if g is not None:
        inst, op = g
        return f"{_inst_atom(inst)}#{op}"
    return f"({_expr(e)})"


def _inst_atom(e: Expression) -> str:
    # the instance position of `e#op` is parsed as a bare atom
    s = _atom(e)
    if _generic_parts(e) is not None:
        return f"({s})"
    return s


def _sexpr(e: Expression) -> str:
    if isinstance(e, Succ) and nat_value(e) is None:
        return f"succ {_sexpr(e.arg)}"
    return _atom(e)


def _expr(e: Expression) -> str:
    if isinstance(e, Fun) and _generic_parts(e) is None:
        return f"fun {e.binder} -> {_comp(e.body)}"
    if isinstance(e, Handler):
        parts = [f"| val {e.value_binder} -> {_comp(e.value_body)}"]
        for c in e.cases:
            parts.append(f"| {_inst_atom(c.inst)}#{c.op} {c.param} {c.cont} -> {_comp(c.body)}")
        return "handler " + " ".join(parts)
    return _sexpr(e)


def _nested_expr(e: Expression) -> str:
    """An expression followed by more syntax: parenthesise binders' bodies."""
    if (isinstance(e, Fun) and _generic_parts(e) is None) or isinstance(e, Handler):
        return f"({_expr(e)})"
    return _expr(e)


def _nested_comp(c: Computation) -> str:
    if isinstance(c, (Let, LetVal, LetRec, If, With)):
        return f"({_comp(c)})"
    return _comp(c)


def _comp(c: Computation) -> str:
    if isinstance(c, Val):
        return f"val {_nested_expr(c.arg)}"
    if isinstance(c, If):
        return f"if {_nested_expr(c.cond)} then {_nested_comp(c.then)} else {_nested_comp(c.else_)}"
    if isinstance(c, IsZero):
        return f"iszero {_sexpr(c.arg)}"
    if isinstance(c, Pred):
        return f"pred {_sexpr(c.arg)}"
    if isinstance(c, Absurd):
        return f"absurd {_sexpr(c.arg)}"
    if isinstance(c, App):
        return f"{_atom(c.fn)} {_atom(c.arg)}"
    if isinstance(c, OpCall):
        return f"{_inst_atom(c.inst)}#{c.op}({_nested_expr(c.arg)}; {c.binder}. {_comp(c.body)})"
    if isinstance(c, Let):
        return f"let {c.binder} = {_nested_comp(c.bound)} in {_comp(c.body)}"
    if isinstance(c, LetVal):
        return f"letval {c.binder} = {_nested_expr(c.value)} in {_comp(c.body)}"
    if isinstance(c, LetRec):
        return f"letrec {c.fun} {c.param} = {_nested_comp(c.fun_body)} in {_comp(c.body)}"
    if isinstance(c, With):
        return f"with {_nested_expr(c.handler)} handle {_comp(c.body)}"
    raise TypeError(f"not a computation: {c!r}")


def render_term(t: Term) -> str:
    """Print a term in surface syntax; numerals and generic effects are re-sugared."""
    from .syntax import is_expression

    if is_expression(t):
        return _expr(t)
    return _comp(t)


def render_decl(d: Decl) -> str:
    if isinstance(d, EffectDecl):
        ops = ", ".join(f"{o} : {a} -> {b}" for o, a, b in d.ops)
        return f"effect {d.name} {{ {ops} }}"
    if isinstance(d, InstanceDecl):
        return f"instance {d.name} : {d.effect}"
    if isinstance(d, TopLet):
        return f"letval {d.name} = {_expr(d.value)}"
    if isinstance(d, TopLetRec):
        return f"letrec {d.name} {d.param} = {_comp(d.body)}"
    if isinstance(d, RunDirective):
        return f"run {_comp(d.comp)}"
    raise TypeError(d)


def render_program(p: Program) -> str:
    return "\n".join(render_decl(d) for d in p.decls) + "\n"
