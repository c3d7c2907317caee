"""Quantifier-free formulas over booleans and linear arithmetic atoms."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Iterable, Union

from ..numeric import LinConstraint, Sort


@dataclass(frozen=True, order=True)
class SmtNumVar:
    id: int
    name: str = field(compare=False)
    sort: Sort = field(default=Sort.RAT, compare=False)
    # (disconnected node id, program VarId) for SSA copies, None for fresh variables
    origin: Any = field(default=None, compare=False)

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class BoolVar:
    id: int
    name: str = field(compare=False)


@dataclass(frozen=True)
class Const:
    value: bool


TRUE = Const(True)
FALSE = Const(False)


@dataclass(frozen=True)
class Not:
    arg: "Formula"


@dataclass(frozen=True)
class And:
    args: tuple["Formula", ...]


@dataclass(frozen=True)
class Or:
    args: tuple["Formula", ...]


@dataclass(frozen=True)
class Implies:
    lhs: "Formula"
    rhs: "Formula"


@dataclass(frozen=True)
class Iff:
    lhs: "Formula"
    rhs: "Formula"


@dataclass(frozen=True)
class Atom:
    c: LinConstraint


Formula = Union[BoolVar, Const, Not, And, Or, Implies, Iff, Atom]


def conj(*fs: Formula | Iterable[Formula]) -> Formula:
    """Flattening conjunction; drops TRUE, collapses on FALSE."""
    out: list[Formula] = []
    for f in _flat(fs):
        if f == TRUE:
            continue
        if f == FALSE:
            return FALSE
        if isinstance(f, And):
            out.extend(f.args)
        else:
            out.append(f)
    if not out:
        return TRUE
    if len(out) == 1:
        return out[0]
    return And(tuple(out))


def disj(*fs: Formula | Iterable[Formula]) -> Formula:
    out: list[Formula] = []
    for f in _flat(fs):
        if f == FALSE:
            continue
        if f == TRUE:
            return TRUE
        if isinstance(f, Or):
            out.extend(f.args)
        else:
            out.append(f)
    if not out:
        return FALSE
    if len(out) == 1:
        return out[0]
    return Or(tuple(out))


def neg(f: Formula) -> Formula:
    if isinstance(f, Const):
        return Const(not f.value)
    if isinstance(f, Not):
        return f.arg
    return Not(f)


def _flat(fs: Iterable[Any]) -> Iterable[Formula]:
    for f in fs:
        if isinstance(f, _FORMULA_TYPES):
            yield f
        else:
            yield from f


_FORMULA_TYPES = (BoolVar, Const, Not, And, Or, Implies, Iff, Atom)


@dataclass
class Model:
    bools: dict[int, bool] = field(default_factory=dict)
    nums: dict[SmtNumVar, Fraction] = field(default_factory=dict)

    def value(self, v: BoolVar | SmtNumVar) -> bool | Fraction:
        if isinstance(v, BoolVar):
            return self.bools[v.id]
        return self.nums[v]


def evaluate(f: Formula, m: Model) -> bool:
    if isinstance(f, BoolVar):
        return m.bools[f.id]
    if isinstance(f, Const):
        return f.value
    if isinstance(f, Not):
        return not evaluate(f.arg, m)
    if isinstance(f, And):
        return all(evaluate(g, m) for g in f.args)
    if isinstance(f, Or):
        return any(evaluate(g, m) for g in f.args)
    if isinstance(f, Implies):
        return (not evaluate(f.lhs, m)) or evaluate(f.rhs, m)
    if isinstance(f, Iff):
        return evaluate(f.lhs, m) == evaluate(f.rhs, m)
    if isinstance(f, Atom):
        return f.c.holds(m.nums)
    raise TypeError(f"not a formula: {f!r}")


def free_vars(f: Formula) -> tuple[list[BoolVar], list[SmtNumVar]]:
    """Boolean and numeric variables of ``f``, each sorted by id."""
    bools: dict[int, BoolVar] = {}
    nums: dict[int, SmtNumVar] = {}
    seen: set[int] = set()
    stack = [f]
    while stack:
        g = stack.pop()
        if id(g) in seen:
            continue
        seen.add(id(g))
        if isinstance(g, BoolVar):
            bools[g.id] = g
        elif isinstance(g, Atom):
            for v in g.c.variables():
                nums[v.id] = v
        elif isinstance(g, Not):
            stack.append(g.arg)
        elif isinstance(g, (And, Or)):
            stack.extend(g.args)
        elif isinstance(g, (Implies, Iff)):
            stack.extend((g.lhs, g.rhs))
    return [bools[k] for k in sorted(bools)], [nums[k] for k in sorted(nums)]


class VarPool:
    """Allocates uniquely named boolean and numeric solver variables."""

    def __init__(self) -> None:
        self._next = 0
        self._names: set[str] = set()

    def _claim(self, name: str) -> int:
        if name in self._names:
            raise ValueError(f"duplicate solver variable name {name!r}")
        self._names.add(name)
        self._next += 1
        return self._next - 1

    def boolean(self, name: str) -> BoolVar:
        return BoolVar(self._claim(name), name)

    def numeric(self, name: str, sort: Sort, origin: Any = None) -> SmtNumVar:
        return SmtNumVar(self._claim(name), name, sort, origin)


class Status(enum.Enum):
    SAT = "sat"
    UNSAT = "unsat"
    UNKNOWN = "unknown"


@dataclass
class SolveResult:
    status: Status
    model: Model | None = None
    reason: str = ""

    @property
    def is_sat(self) -> bool:
        return self.status is Status.SAT

    @property
    def is_unsat(self) -> bool:
        return self.status is Status.UNSAT

    @property
    def is_unknown(self) -> bool:
        return self.status is Status.UNKNOWN
