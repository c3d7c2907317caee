"""Exact numeric kernel: rationals, extended rationals, linear expressions and constraints.

Everything here is immutable.  ``Rat`` is :class:`fractions.Fraction`; all
arithmetic stays exact, there is no floating point anywhere downstream.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import total_ordering
from typing import Any, Iterable, Mapping

Rat = Fraction


def rat(value: Any) -> Fraction:
    """Build an exact rational from an int, Fraction or decimal string ("0.01" -> 1/100)."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, float):
        raise TypeError("floats are not accepted; pass a string or Fraction")
    return Fraction(value)


class Sort(enum.Enum):
    INT = "int"
    RAT = "rat"


class UnboundVariable(KeyError):
    pass


@total_ordering
@dataclass(frozen=True)
class ExtRat:
    """A rational extended with -oo and +oo.

    ``kind`` is -1 for -oo, 0 for a finite value, 1 for +oo.
    """

    kind: int
    value: Fraction = Fraction(0)

    @staticmethod
    def of(q: Any) -> ExtRat:
        return ExtRat(0, rat(q))

    @property
    def is_finite(self) -> bool:
        return self.kind == 0

    def _key(self) -> tuple[int, Fraction]:
        return (self.kind, self.value if self.kind == 0 else Fraction(0))

    def __lt__(self, other: ExtRat) -> bool:
        return self._key() < other._key()

    def __neg__(self) -> ExtRat:
        return ExtRat(-self.kind, -self.value)

    def __add__(self, other: ExtRat) -> ExtRat:
        if self.kind and other.kind and self.kind != other.kind:
            raise ArithmeticError("oo - oo is undefined")
        if self.kind:
            return self
        if other.kind:
            return other
        return ExtRat(0, self.value + other.value)

    def scale(self, k: Fraction) -> ExtRat:
        if k == 0:
            return ExtRat(0, Fraction(0))
        if self.kind:
            return ExtRat(self.kind if k > 0 else -self.kind)
        return ExtRat(0, self.value * k)

    def __str__(self) -> str:
        if self.kind < 0:
            return "-oo"
        if self.kind > 0:
            return "oo"
        return str(self.value)

    def __repr__(self) -> str:
        return f"ExtRat({self})"


NEG_INF = ExtRat(-1)
POS_INF = ExtRat(1)


@dataclass(frozen=True, order=True)
class VarId:
    """A program variable; ``index`` is dense within one program."""

    index: int
    name: str
    sort: Sort = Sort.INT

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class LinExpr:
    """sum(coeff * var) + const, with terms sorted by variable and no zero coefficients.

    Variables may be any ordered, hashable objects carrying a ``sort``
    attribute (program ``VarId`` or solver-level numeric variables).
    """

    terms: tuple[tuple[Any, Fraction], ...] = ()
    const: Fraction = Fraction(0)

    @staticmethod
    def from_map(coeffs: Mapping[Any, Any], const: Any = 0) -> LinExpr:
        items = sorted(((v, rat(c)) for v, c in coeffs.items() if c != 0), key=lambda t: t[0])
        return LinExpr(tuple(items), rat(const))

    @staticmethod
    def var(v: Any, coeff: Any = 1) -> LinExpr:
        return LinExpr.from_map({v: coeff})

    @staticmethod
    def constant(q: Any) -> LinExpr:
        return LinExpr((), rat(q))

    @property
    def coeffs(self) -> dict[Any, Fraction]:
        return dict(self.terms)

    def variables(self) -> tuple[Any, ...]:
        return tuple(v for v, _ in self.terms)

    def coeff(self, v: Any) -> Fraction:
        for w, c in self.terms:
            if w == v:
                return c
        return Fraction(0)

    @property
    def is_constant(self) -> bool:
        return not self.terms

    def __add__(self, other: LinExpr) -> LinExpr:
        acc = dict(self.terms)
        for v, c in other.terms:
            acc[v] = acc.get(v, Fraction(0)) + c
        return LinExpr.from_map(acc, self.const + other.const)

    def __neg__(self) -> LinExpr:
        return LinExpr(tuple((v, -c) for v, c in self.terms), -self.const)

    def __sub__(self, other: LinExpr) -> LinExpr:
        return self + (-other)

    def scale(self, k: Any) -> LinExpr:
        k = rat(k)
        if k == 0:
            return LinExpr()
        return LinExpr(tuple((v, c * k) for v, c in self.terms), self.const * k)

    def shift(self, q: Any) -> LinExpr:
        return LinExpr(self.terms, self.const + rat(q))

    def __str__(self) -> str:
        parts: list[str] = []
        for v, c in self.terms:
            if c == 1:
                mono = str(v)
            elif c == -1:
                mono = f"-{v}"
            else:
                mono = f"{c}*{v}"
            parts.append(mono)
        if self.const != 0 or not parts:
            parts.append(str(self.const))
        return " + ".join(parts).replace("+ -", "- ")


class Rel(enum.Enum):
    LE = "<="
    LT = "<"
    EQ = "="


@dataclass(frozen=True)
class LinConstraint:
    """``expr REL 0``."""

    expr: LinExpr
    rel: Rel

    @staticmethod
    def make(lhs: LinExpr, op: str, rhs: LinExpr) -> LinConstraint:
        """Build ``lhs op rhs`` for op in <=, <, >=, >, =, ==."""
        if op == "<=":
            return LinConstraint(lhs - rhs, Rel.LE)
        if op == "<":
            return LinConstraint(lhs - rhs, Rel.LT)
        if op == ">=":
            return LinConstraint(rhs - lhs, Rel.LE)
        if op == ">":
            return LinConstraint(rhs - lhs, Rel.LT)
        if op in ("=", "=="):
            return LinConstraint(lhs - rhs, Rel.EQ)
        raise ValueError(f"unknown relation {op!r}")

    def variables(self) -> tuple[Any, ...]:
        return self.expr.variables()

    def holds(self, env: Mapping[Any, Fraction]) -> bool:
        val = eval_linexpr(self.expr, env)
        if self.rel is Rel.LE:
            return val <= 0
        if self.rel is Rel.LT:
            return val < 0
        return val == 0

    def __str__(self) -> str:
        return f"{self.expr} {self.rel.value} 0"


def eval_linexpr(e: LinExpr, env: Mapping[Any, Any]) -> Fraction:
    total = e.const
    for v, c in e.terms:
        try:
            total += c * env[v]
        except KeyError:
            raise UnboundVariable(v) from None
    return Fraction(total)


def substitute(e: LinExpr, v: Any, r: LinExpr) -> LinExpr:
    """Replace ``v`` by ``r`` in ``e``."""
    c = e.coeff(v)
    if c == 0:
        return e
    rest = LinExpr(tuple(t for t in e.terms if t[0] != v), e.const)
    return rest + r.scale(c)


def substitute_all(e: LinExpr, mapping: Mapping[Any, LinExpr]) -> LinExpr:
    """Simultaneous substitution; unmapped variables are kept."""
    acc: dict[Any, Fraction] = {}
    const = e.const
    for v, c in e.terms:
        r = mapping.get(v)
        if r is None:
            acc[v] = acc.get(v, Fraction(0)) + c
            continue
        const += c * r.const
        for w, d in r.terms:
            acc[w] = acc.get(w, Fraction(0)) + c * d
    return LinExpr.from_map(acc, const)


def substitute_constraint(c: LinConstraint, v: Any, r: LinExpr) -> LinConstraint:
    return LinConstraint(substitute(c.expr, v, r), c.rel)


def negate_constraint(c: LinConstraint) -> tuple[LinConstraint, ...]:
    """Complement of ``c``; an equality yields a two-element disjunction."""
    if c.rel is Rel.LE:
        return (LinConstraint(-c.expr, Rel.LT),)
    if c.rel is Rel.LT:
        return (LinConstraint(-c.expr, Rel.LE),)
    return (LinConstraint(c.expr, Rel.LT), LinConstraint(-c.expr, Rel.LT))


def _lcm_denominators(values: Iterable[Fraction]) -> int:
    m = 1
    for q in values:
        m = m * q.denominator // math.gcd(m, q.denominator)
    return m


def integer_scaled(e: LinExpr) -> LinExpr:
    """Positive multiple of ``e`` with coprime integer coefficients and constant."""
    vals = [c for _, c in e.terms] + [e.const]
    e = e.scale(_lcm_denominators(vals))
    g = 0
    for _, c in e.terms:
        g = math.gcd(g, int(c))
    g = math.gcd(g, int(e.const))
    if g > 1:
        e = e.scale(Fraction(1, g))
    return e


def is_integral(e: LinExpr) -> bool:
    return all(v.sort is Sort.INT for v, _ in e.terms)


FALSE_CONSTRAINT = LinConstraint(LinExpr.constant(1), Rel.LE)
TRUE_CONSTRAINT = LinConstraint(LinExpr.constant(0), Rel.LE)


def normalize_int(c: LinConstraint) -> LinConstraint:
    """Integer normal form for constraints whose variables are all integer-sorted.

    Scales to integer coefficients, turns ``e < 0`` into ``e + 1 <= 0`` and
    divides through by the gcd of the variable coefficients, rounding the
    constant (exact over the integers).  Other constraints are returned as is.
    """
    if not c.expr.terms or not is_integral(c.expr):
        return c
    e = integer_scaled(c.expr)
    rel = c.rel
    if rel is Rel.LT:
        e = e.shift(1)
        rel = Rel.LE
    g = 0
    for _, k in e.terms:
        g = math.gcd(g, int(k))
    if g > 1:
        if rel is Rel.EQ:
            if e.const % g != 0:
                return FALSE_CONSTRAINT
            e = e.scale(Fraction(1, g))
        else:
            # sum(a x) + k <= 0  <=>  sum(a/g x) + ceil(k/g) <= 0
            terms = tuple((v, k / g) for v, k in e.terms)
            e = LinExpr(terms, Fraction(-((-e.const) // g)))
    return LinConstraint(e, rel)
