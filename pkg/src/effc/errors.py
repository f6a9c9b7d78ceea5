"""Exception hierarchy shared by every stage of the toolchain."""

from __future__ import annotations


class EffcError(Exception):
    """Base class for all errors raised by effc."""


class ParseError(EffcError):
    def __init__(self, line: int, column: int, message: str) -> None:
        super().__init__(f"{line}:{column}: {message}")
        self.line = line
        self.column = column
        self.message = message


class DeclError(EffcError):
    def __init__(self, message: str, pos: tuple[int, int] | None = None) -> None:
        where = f"{pos[0]}:{pos[1]}: " if pos else ""
        super().__init__(where + message)
        self.message = message
        self.pos = pos


class UnboundVariable(EffcError):
    def __init__(self, name: str, pos: tuple[int, int] | None = None) -> None:
        super().__init__(f"unbound variable {name}")
        self.name = name
        self.pos = pos


class UnknownOperation(EffcError):
    def __init__(self, op: str, pos: tuple[int, int] | None = None) -> None:
        super().__init__(f"unknown operation {op}")
        self.op = op
        self.pos = pos


class UnificationError(EffcError):
    """Raised by unify; carries the source position of the offending constraint."""

    pos: tuple[int, int] | None = None


class TypeMismatch(UnificationError):
    def __init__(self, lhs, rhs, pos: tuple[int, int] | None = None) -> None:
        super().__init__(f"type mismatch: {lhs} is not compatible with {rhs}")
        self.lhs = lhs
        self.rhs = rhs
        self.pos = pos


class OccursCycle(UnificationError):
    def __init__(self, param, ty, pos: tuple[int, int] | None = None) -> None:
        super().__init__(f"occurs check: {param} occurs in {ty}")
        self.param = param
        self.ty = ty
        self.pos = pos


class MissingParameter(EffcError):
    def __init__(self, param) -> None:
        super().__init__(f"closed substitution undefined on {param}")
        self.param = param


class NotUnified(EffcError):
    pass


class BudgetExceeded(EffcError):
    pass
