"""Interval boxes with exact rational bounds.

A :class:`Box` maps every program variable to an :class:`Interval` whose
bounds may be infinite or strict.  Guards are applied by interval bound
tightening, which recovers the relational facts needed by the benchmark
programs (e.g. ``u - x <= 16`` with ``u <= 1000`` gives ``x <= 984``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Mapping, MutableMapping, Sequence

from .ir import Assign, Assume, Command, Havoc
from .numeric import (
    NEG_INF,
    POS_INF,
    ExtRat,
    LinConstraint,
    LinExpr,
    Rel,
    Sort,
    VarId,
    normalize_int,
    substitute_all,
)

PROPAGATE_ROUNDS = 10
DESCENDING_STEPS = 3


class PostconditionViolation(AssertionError):
    pass


@dataclass(frozen=True)
class Interval:
    lo: ExtRat = NEG_INF
    hi: ExtRat = POS_INF
    strict_lo: bool = False
    strict_hi: bool = False

    @staticmethod
    def point(q: Any) -> Interval:
        v = ExtRat.of(q)
        return Interval(v, v)

    @staticmethod
    def closed(lo: Any, hi: Any) -> Interval:
        return Interval(_ext(lo, -1), _ext(hi, 1))

    def lower_key(self) -> tuple[ExtRat, int]:
        # larger key = tighter lower bound
        return (self.lo, 1 if self.strict_lo else 0)

    def upper_key(self) -> tuple[ExtRat, int]:
        # smaller key = tighter upper bound
        return (self.hi, 0 if self.strict_hi else 1)

    def contains(self, q: Fraction) -> bool:
        x = ExtRat.of(q)
        if x < self.lo or (x == self.lo and self.strict_lo):
            return False
        if self.hi < x or (x == self.hi and self.strict_hi):
            return False
        return True

    def __str__(self) -> str:
        left = "(" if self.strict_lo or not self.lo.is_finite else "["
        right = ")" if self.strict_hi or not self.hi.is_finite else "]"
        return f"{left}{self.lo}, {self.hi}{right}"


def _ext(q: Any, inf_kind: int) -> ExtRat:
    if q is None:
        return ExtRat(inf_kind)
    if isinstance(q, ExtRat):
        return q
    return ExtRat.of(q)


def make_interval(lo: ExtRat, strict_lo: bool, hi: ExtRat, strict_hi: bool, sort: Sort) -> Interval | None:
    """Normalized interval, or None when empty."""
    strict_lo = strict_lo and lo.is_finite
    strict_hi = strict_hi and hi.is_finite
    if sort is Sort.INT:
        if lo.is_finite:
            v = lo.value
            lo = ExtRat.of(math.floor(v) + 1 if strict_lo else math.ceil(v))
            strict_lo = False
        if hi.is_finite:
            v = hi.value
            hi = ExtRat.of(math.ceil(v) - 1 if strict_hi else math.floor(v))
            strict_hi = False
    if hi < lo or (lo == hi and (strict_lo or strict_hi)):
        return None
    return Interval(lo, hi, strict_lo, strict_hi)


@dataclass(frozen=True)
class Box:
    """Product of intervals over ``variables``; ``intervals is None`` encodes bottom."""

    variables: tuple[VarId, ...]
    intervals: tuple[Interval, ...] | None

    @staticmethod
    def top(variables: Sequence[VarId]) -> Box:
        return Box(tuple(variables), tuple(Interval() for _ in variables))

    @staticmethod
    def bottom(variables: Sequence[VarId]) -> Box:
        return Box(tuple(variables), None)

    @staticmethod
    def of(variables: Sequence[VarId], bounds: Mapping[VarId | str, Interval]) -> Box:
        """Box from per-variable intervals (by VarId or name); missing variables are unbounded."""
        itvs = []
        for v in variables:
            itv = bounds.get(v, bounds.get(v.name, Interval()))  # type: ignore[arg-type]
            norm = make_interval(itv.lo, itv.strict_lo, itv.hi, itv.strict_hi, v.sort)
            if norm is None:
                return Box.bottom(variables)
            itvs.append(norm)
        return Box(tuple(variables), tuple(itvs))

    @property
    def is_bottom(self) -> bool:
        return self.intervals is None

    @property
    def is_top(self) -> bool:
        return self.intervals is not None and all(
            not i.lo.is_finite and not i.hi.is_finite for i in self.intervals
        )

    def __getitem__(self, v: VarId | str) -> Interval:
        if self.intervals is None:
            raise ValueError("bottom has no intervals")
        if isinstance(v, str):
            v = next(w for w in self.variables if w.name == v)
        return self.intervals[v.index]

    def replace(self, v: VarId, itv: Interval | None) -> Box:
        if self.intervals is None:
            return self
        if itv is None:
            return Box.bottom(self.variables)
        items = list(self.intervals)
        items[v.index] = itv
        return Box(self.variables, tuple(items))

    def contains_point(self, env: Mapping[VarId, Fraction]) -> bool:
        if self.intervals is None:
            return False
        return all(itv.contains(Fraction(env[v])) for v, itv in zip(self.variables, self.intervals))

    def constraints(self) -> list[LinConstraint]:
        """One constraint per finite bound, lower before upper, in variable order."""
        if self.intervals is None:
            return [LinConstraint(LinExpr.constant(1), Rel.LE)]
        out = []
        for v, itv in zip(self.variables, self.intervals):
            x = LinExpr.var(v)
            if itv.lo.is_finite:
                out.append(LinConstraint(LinExpr.constant(itv.lo.value) - x, Rel.LT if itv.strict_lo else Rel.LE))
            if itv.hi.is_finite:
                out.append(LinConstraint(x - LinExpr.constant(itv.hi.value), Rel.LT if itv.strict_hi else Rel.LE))
        return out

    def __str__(self) -> str:
        if self.intervals is None:
            return "bottom"
        return "{" + ", ".join(f"{v.name} in {i}" for v, i in zip(self.variables, self.intervals)) + "}"


# -- lattice operations ---------------------------------------------------------


def includes(a: Box, b: Box) -> bool:
    """True iff b is contained in a."""
    if b.intervals is None:
        return True
    if a.intervals is None:
        return False
    for x, y in zip(a.intervals, b.intervals):
        if x.lower_key() > y.lower_key() or x.upper_key() < y.upper_key():
            return False
    return True


def join(a: Box, b: Box) -> Box:
    if a.intervals is None:
        return b
    if b.intervals is None:
        return a
    out = []
    for x, y in zip(a.intervals, b.intervals):
        lo = x if x.lower_key() <= y.lower_key() else y
        hi = x if x.upper_key() >= y.upper_key() else y
        out.append(Interval(lo.lo, hi.hi, lo.strict_lo, hi.strict_hi))
    return Box(a.variables, tuple(out))


def meet(a: Box, b: Box) -> Box:
    if a.intervals is None or b.intervals is None:
        return Box.bottom(a.variables)
    out = []
    for v, x, y in zip(a.variables, a.intervals, b.intervals):
        lo = x if x.lower_key() >= y.lower_key() else y
        hi = x if x.upper_key() <= y.upper_key() else y
        itv = make_interval(lo.lo, lo.strict_lo, hi.hi, hi.strict_hi, v.sort)
        if itv is None:
            return Box.bottom(a.variables)
        out.append(itv)
    return Box(a.variables, tuple(out))


def widen(a: Box, b: Box) -> Box:
    """Interval widening: a bound that moved goes to infinity."""
    if a.intervals is None:
        return b
    if b.intervals is None:
        return a
    out = []
    for x, y in zip(a.intervals, b.intervals):
        lo_same = x.lower_key() == y.lower_key()
        hi_same = x.upper_key() == y.upper_key()
        out.append(
            Interval(
                x.lo if lo_same else NEG_INF,
                x.hi if hi_same else POS_INF,
                x.strict_lo and lo_same,
                x.strict_hi and hi_same,
            )
        )
    return Box(a.variables, tuple(out))


# -- linear expressions over a box ------------------------------------------------


def expr_bounds(b: Box, e: LinExpr) -> tuple[tuple[ExtRat, bool], tuple[ExtRat, bool]]:
    """((inf, strict), (sup, strict)) of ``e`` over the non-bottom box ``b``."""
    assert b.intervals is not None
    lo = ExtRat.of(e.const)
    hi = ExtRat.of(e.const)
    slo = shi = False
    for v, c in e.terms:
        itv = b.intervals[v.index]
        if c > 0:
            lo = lo + itv.lo.scale(c)
            hi = hi + itv.hi.scale(c)
            slo = slo or itv.strict_lo
            shi = shi or itv.strict_hi
        else:
            lo = lo + itv.hi.scale(c)
            hi = hi + itv.lo.scale(c)
            slo = slo or itv.strict_hi
            shi = shi or itv.strict_lo
    return (lo, slo and lo.is_finite), (hi, shi and hi.is_finite)


def eval_interval(b: Box, e: LinExpr, sort: Sort) -> Interval | None:
    (lo, slo), (hi, shi) = expr_bounds(b, e)
    return make_interval(lo, slo, hi, shi, sort)


def box_entails(b: Box, c: LinConstraint) -> bool:
    """Every point of ``b`` satisfies ``c``."""
    if b.intervals is None:
        return True
    if c.rel is Rel.EQ:
        return box_entails(b, LinConstraint(c.expr, Rel.LE)) and box_entails(b, LinConstraint(-c.expr, Rel.LE))
    _, (sup, strict) = expr_bounds(b, c.expr)
    zero = ExtRat.of(0)
    if sup < zero:
        return True
    if sup == zero:
        return c.rel is Rel.LE or strict
    return False


def _meet_le(b: Box, e: LinExpr, strict: bool) -> Box:
    """Tighten ``b`` with ``e <= 0`` (``e < 0`` if strict), one pass against the input box."""
    if b.intervals is None:
        return b
    if e.is_constant:
        ok = e.const < 0 or (e.const == 0 and not strict)
        return b if ok else Box.bottom(b.variables)
    items = list(b.intervals)
    for v, a in e.terms:
        rest = LinExpr(tuple(t for t in e.terms if t[0] != v), e.const)
        (rmin, rstrict), _ = expr_bounds(b, rest)
        if not rmin.is_finite:
            continue
        # a*v <= -rest <= -rmin
        bound = -rmin.value / a
        is_strict = strict or rstrict
        cur = items[v.index]
        if a > 0:
            if (ExtRat.of(bound), 0 if is_strict else 1) < cur.upper_key():
                itv = make_interval(cur.lo, cur.strict_lo, ExtRat.of(bound), is_strict, v.sort)
            else:
                continue
        else:
            if (ExtRat.of(bound), 1 if is_strict else 0) > cur.lower_key():
                itv = make_interval(ExtRat.of(bound), is_strict, cur.hi, cur.strict_hi, v.sort)
            else:
                continue
        if itv is None:
            return Box.bottom(b.variables)
        items[v.index] = itv
    return Box(b.variables, tuple(items))


def meet_constraint(b: Box, c: LinConstraint) -> Box:
    if b.intervals is None:
        return b
    c = normalize_int(c)
    if c.rel is Rel.EQ:
        return _meet_le(_meet_le(b, c.expr, False), -c.expr, False)
    return _meet_le(b, c.expr, c.rel is Rel.LT)


def propagate(b: Box, cs: Sequence[LinConstraint], rounds: int = PROPAGATE_ROUNDS) -> Box:
    """Round-robin bound tightening until stable or ``rounds`` passes."""
    for _ in range(rounds):
        before = b
        for c in cs:
            b = meet_constraint(b, c)
            if b.intervals is None:
                return b
        if b == before:
            break
    return b


def initial_box(variables: Sequence[VarId], initial: Sequence[LinConstraint] | None) -> Box:
    if initial is None:
        return Box.bottom(variables)
    return propagate(Box.top(variables), list(initial))


# -- transformers -------------------------------------------------------------------


def post_command(b: Box, cmd: Command) -> Box:
    if b.intervals is None:
        return b
    if isinstance(cmd, Assume):
        return meet_constraint(b, cmd.cond)
    if isinstance(cmd, Assign):
        return b.replace(cmd.target, eval_interval(b, cmd.rhs, cmd.target.sort))
    if isinstance(cmd, Havoc):
        itv = make_interval(cmd.lo, cmd.strict_lo, cmd.hi, cmd.strict_hi, cmd.target.sort)
        return b.replace(cmd.target, itv)
    raise TypeError(f"unknown command {cmd!r}")


def post_path(b: Box, body: Sequence[Command]) -> Box:
    """Abstract post of a command sequence.

    Guards whose variables are not overwritten later on the path are
    re-applied together at the end, so relational guards can tighten each
    other.
    """
    pending: list[LinConstraint] = []
    for cmd in body:
        b = post_command(b, cmd)
        if b.intervals is None:
            return b
        if isinstance(cmd, Assume):
            pending.append(cmd.cond)
        else:
            pending = [c for c in pending if cmd.target not in c.variables()]
    if len(pending) > 1:
        b = propagate(b, pending)
    return b


def loopiter(body: Sequence[Command], x0: Box, stats: MutableMapping[str, int] | None = None) -> Box:
    """Local widening/narrowing iteration of one loop body starting from ``x0``.

    Returns ``X`` with ``x0 <= X`` and ``post(X) <= X``.  The first ascending
    step is a plain join; widening starts from the second.
    """
    if not body or x0.intervals is None:
        return x0
    z = join(x0, post_path(x0, body))
    while True:
        grown = join(z, post_path(z, body))
        if includes(z, grown):
            break
        nz = widen(z, grown)
        if stats is not None and nz != grown:
            stats["widenings"] = stats.get("widenings", 0) + 1
        z = nz
    d = z
    for _ in range(DESCENDING_STEPS):
        nd = join(x0, post_path(d, body))
        if nd == d or not includes(d, nd):
            break
        d = nd
    if not includes(d, x0) or not includes(d, post_path(d, body)):
        raise PostconditionViolation(f"loopiter result {d} is not a post-fixpoint containing {x0}")
    return d


def translation_form(body: Sequence[Command]) -> tuple[list[LinConstraint], dict[VarId, Fraction]] | None:
    """Rewrite ``body`` as "assume G; x_i += c_i" with all guards over the pre-state.

    Returns None if the body contains anything but guards and constant
    translations ``x := x + c``.
    """
    offsets: dict[VarId, Fraction] = {}
    guards: list[LinConstraint] = []
    for cmd in body:
        if isinstance(cmd, Assume):
            shift = {v: LinExpr.var(v).shift(off) for v, off in offsets.items() if off != 0}
            guards.append(LinConstraint(substitute_all(cmd.cond.expr, shift), cmd.cond.rel))
        elif isinstance(cmd, Assign):
            v = cmd.target
            if cmd.rhs.terms != ((v, Fraction(1)),):
                return None
            offsets[v] = offsets.get(v, Fraction(0)) + cmd.rhs.const
        else:
            return None
    return guards, {v: c for v, c in offsets.items() if c != 0}


def accelerate(body: Sequence[Command], x0: Box) -> Box | None:
    """Closed-form iteration of a guarded translation loop, or None if not applicable."""
    form = translation_form(body)
    if form is None:
        return None
    guards, offsets = form
    if x0.intervals is None:
        return x0
    extended = x0
    for v, c in offsets.items():
        itv = extended[v]
        if c > 0:
            extended = extended.replace(v, Interval(itv.lo, POS_INF, itv.strict_lo, False))
        else:
            extended = extended.replace(v, Interval(NEG_INF, itv.hi, False, itv.strict_hi))
    pre = propagate(extended, guards)
    result = join(x0, post_path(pre, body))
    if not includes(result, post_path(result, body)):
        return None
    return result
