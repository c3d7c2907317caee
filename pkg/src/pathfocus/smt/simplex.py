"""Exact general simplex for conjunctions of linear constraints, plus branch and bound.

Bounds are kept as pairs ``(c, k)`` standing for ``c + k*eps`` with eps a
positive infinitesimal, which is how strict inequalities are handled.
Checks are non-incremental: every call builds a fresh tableau.  Conflicts
come with an explanation (the tags of an infeasible subset of the input).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Hashable, Iterable, Sequence

from ..numeric import LinConstraint, LinExpr, Rel, integer_scaled

Pair = tuple[Fraction, Fraction]
ZERO: Pair = (Fraction(0), Fraction(0))


def _add(a: Pair, b: Pair) -> Pair:
    return (a[0] + b[0], a[1] + b[1])


def _sub(a: Pair, b: Pair) -> Pair:
    return (a[0] - b[0], a[1] - b[1])


def _mul(a: Pair, k: Fraction) -> Pair:
    return (a[0] * k, a[1] * k)


@dataclass
class SimplexResult:
    sat: bool
    point: dict[Any, Fraction] = field(default_factory=dict)
    explanation: list[Hashable] = field(default_factory=list)


class _Tableau:
    def __init__(self) -> None:
        self.order: dict[Any, int] = {}
        self.lower: dict[Any, tuple[Pair, Hashable]] = {}
        self.upper: dict[Any, tuple[Pair, Hashable]] = {}
        self.rows: dict[Any, dict[Any, Fraction]] = {}
        self.slacks: dict[tuple, Any] = {}
        self.value: dict[Any, Pair] = {}
        self.originals: list[Any] = []

    def var(self, v: Any) -> None:
        if v not in self.order:
            self.order[v] = len(self.order)
            self.originals.append(v)

    def slack_for(self, terms: tuple) -> Any:
        s = self.slacks.get(terms)
        if s is None:
            s = ("slack", len(self.slacks))
            self.slacks[terms] = s
            self.rows[s] = dict(terms)
        return s

    def bound(self, v: Any, upper: bool, b: Pair, tag: Hashable) -> list[Hashable] | None:
        """Tighten a bound; returns an explanation on immediate conflict."""
        if upper:
            cur = self.upper.get(v)
            if cur is None or b < cur[0]:
                self.upper[v] = (b, tag)
            lo = self.lower.get(v)
            if lo is not None and lo[0] > self.upper[v][0]:
                return [lo[1], self.upper[v][1]]
        else:
            cur = self.lower.get(v)
            if cur is None or b > cur[0]:
                self.lower[v] = (b, tag)
            hi = self.upper.get(v)
            if hi is not None and hi[0] < self.lower[v][0]:
                return [self.lower[v][1], hi[1]]
        return None


def check(constraints: Sequence[tuple[LinConstraint, Hashable]]) -> SimplexResult:
    """Decide a conjunction of ``<=``/``<``/``=`` constraints over the rationals."""
    t = _Tableau()
    for c, tag in constraints:
        for v in c.variables():
            t.var(v)
    for c, tag in constraints:
        conflict = _assert(t, c, tag)
        if conflict is not None:
            return SimplexResult(False, explanation=_dedupe(conflict))
    for s in t.rows:
        t.order[s] = len(t.order)
    for v in t.originals:
        if v in t.lower:
            t.value[v] = t.lower[v][0]
        elif v in t.upper:
            t.value[v] = t.upper[v][0]
        else:
            t.value[v] = ZERO
    for s, row in t.rows.items():
        acc = ZERO
        for v, a in row.items():
            acc = _add(acc, _mul(t.value[v], a))
        t.value[s] = acc
    conflict = _solve(t)
    if conflict is not None:
        return SimplexResult(False, explanation=_dedupe(conflict))
    point = _concretize(t)
    for c, _ in constraints:
        assert c.holds(point), f"simplex produced a point violating {c}"
    return SimplexResult(True, point=point)


def _dedupe(tags: Iterable[Hashable]) -> list[Hashable]:
    out: list[Hashable] = []
    for tg in tags:
        if tg not in out:
            out.append(tg)
    return out


def _assert(t: _Tableau, c: LinConstraint, tag: Hashable) -> list[Hashable] | None:
    if c.rel is Rel.EQ:
        return _assert(t, LinConstraint(c.expr, Rel.LE), tag) or _assert(t, LinConstraint(-c.expr, Rel.LE), tag)
    e = c.expr
    strict = c.rel is Rel.LT
    if not e.terms:
        ok = e.const < 0 or (e.const == 0 and not strict)
        return None if ok else [tag]
    lead = e.terms[0][1]
    if len(e.terms) == 1:
        v = e.terms[0][0]
        target = v
    else:
        normalized = tuple((v, a / lead) for v, a in e.terms)
        target = t.slack_for(normalized)
    # lead * target + const (<|<=) 0
    bound_value = -e.const / lead
    if lead > 0:
        return t.bound(target, True, (bound_value, Fraction(-1 if strict else 0)), tag)
    return t.bound(target, False, (bound_value, Fraction(1 if strict else 0)), tag)


def _solve(t: _Tableau) -> list[Hashable] | None:
    order = t.order
    while True:
        basic = None
        for s in sorted(t.rows, key=order.__getitem__):
            val = t.value[s]
            lo = t.lower.get(s)
            hi = t.upper.get(s)
            if lo is not None and val < lo[0]:
                basic, increase = s, True
                break
            if hi is not None and val > hi[0]:
                basic, increase = s, False
                break
        if basic is None:
            return None
        row = t.rows[basic]
        entering = None
        for v in sorted(row, key=order.__getitem__):
            a = row[v]
            up = (a > 0) == increase
            if up:
                hi = t.upper.get(v)
                if hi is None or t.value[v] < hi[0]:
                    entering = v
                    break
            else:
                lo = t.lower.get(v)
                if lo is None or t.value[v] > lo[0]:
                    entering = v
                    break
        if entering is None:
            if increase:
                expl = [t.lower[basic][1]]
                for v, a in row.items():
                    expl.append(t.upper[v][1] if a > 0 else t.lower[v][1])
            else:
                expl = [t.upper[basic][1]]
                for v, a in row.items():
                    expl.append(t.lower[v][1] if a > 0 else t.upper[v][1])
            return expl
        target = t.lower[basic][0] if increase else t.upper[basic][0]
        _pivot_and_update(t, basic, entering, target)


def _pivot_and_update(t: _Tableau, basic: Any, entering: Any, target: Pair) -> None:
    row = t.rows[basic]
    a = row[entering]
    theta = _mul(_sub(target, t.value[basic]), 1 / a)
    t.value[basic] = target
    t.value[entering] = _add(t.value[entering], theta)
    for s, r in t.rows.items():
        if s != basic and entering in r:
            t.value[s] = _add(t.value[s], _mul(theta, r[entering]))
    # basic = sum row  =>  entering = (basic - sum_{k != entering} row_k x_k) / a
    new_row = {basic: 1 / a}
    for v, c in row.items():
        if v != entering:
            new_row[v] = -c / a
    del t.rows[basic]
    for s, r in t.rows.items():
        c = r.pop(entering, None)
        if c is None:
            continue
        for v, d in new_row.items():
            nv = r.get(v, Fraction(0)) + c * d
            if nv == 0:
                r.pop(v, None)
            else:
                r[v] = nv
    t.rows[entering] = new_row


def _concretize(t: _Tableau) -> dict[Any, Fraction]:
    delta = Fraction(1)
    for v, val in t.value.items():
        lo = t.lower.get(v)
        if lo is not None:
            (lc, lk), (vc, vk) = lo[0], val
            if lk > vk:
                delta = min(delta, (vc - lc) / (lk - vk))
        hi = t.upper.get(v)
        if hi is not None:
            (uc, uk), (vc, vk) = hi[0], val
            if vk > uk:
                delta = min(delta, (uc - vc) / (vk - uk))
    return {v: t.value[v][0] + t.value[v][1] * delta for v in t.originals}


# -- integers -------------------------------------------------------------------


@dataclass
class BranchResult:
    status: str  # "sat", "unsat" or "unknown"
    point: dict[Any, Fraction] = field(default_factory=dict)
    explanation: list[Hashable] = field(default_factory=list)


def equality_gcd_conflict(
    constraints: Sequence[tuple[LinConstraint, Hashable]], int_vars: Iterable[Any]
) -> list[Hashable] | None:
    """Detect equalities with no integer solution.

    Rational variables are eliminated first, then integer ones; every derived
    row ``sum(a x) = k`` over integers alone must have gcd(a) dividing k.
    Returns the tags of the equalities when a row fails the test.
    """
    ints = set(int_vars)
    rows: list[LinExpr] = []
    used: list[Hashable] = []
    uppers: dict[LinExpr, Hashable] = {}
    for c, t in constraints:
        if c.rel is Rel.EQ:
            rows.append(c.expr)
            used.append(t)
        elif c.rel is Rel.LE and c.expr.terms:
            uppers.setdefault(integer_scaled(c.expr), t)
    # e <= 0 together with -e <= 0 is the equality e = 0
    for e, t in uppers.items():
        other = uppers.get(-e)
        if other is not None and e.terms[0][1] > 0:
            rows.append(e)
            used += [t, other]
    if not rows:
        return None
    tags = _dedupe(t for t in used if t is not None)

    def fails(e: LinExpr) -> bool:
        if any(v not in ints for v in e.variables()):
            return False
        e = integer_scaled(e)
        g = 0
        for _, k in e.terms:
            g = math.gcd(g, int(k))
        if g == 0:
            return e.const != 0
        return int(e.const) % g != 0

    order = sorted({v for e in rows for v in e.variables()}, key=lambda v: (v in ints, v))
    for v in order:
        if any(fails(e) for e in rows):
            return tags
        pivot = next((e for e in rows if e.coeff(v) != 0), None)
        if pivot is None:
            continue
        rows.remove(pivot)
        rows = [e - pivot.scale(e.coeff(v) / pivot.coeff(v)) if e.coeff(v) else e for e in rows]
    return tags if any(fails(e) for e in rows) else None


def branch_and_bound(
    constraints: Sequence[tuple[LinConstraint, Hashable]],
    int_vars: Iterable[Any],
    max_depth: int | None = None,
    max_nodes: int = 2000,
) -> BranchResult:
    """Integer feasibility by depth-first branch and bound over the simplex relaxation.

    ``max_depth`` defaults to 10 per integer variable.  The explanation of an
    unsat answer is the relaxation's conflict when the root relaxation is
    already infeasible, otherwise every input tag.
    """
    ints = sorted(set(int_vars))
    if max_depth is None:
        max_depth = max(10, 10 * len(ints))
    root = check(constraints)
    if not root.sat:
        return BranchResult("unsat", explanation=root.explanation)
    conflict = equality_gcd_conflict(constraints, ints)
    if conflict is not None:
        return BranchResult("unsat", explanation=conflict)
    budget = [max_nodes]
    hit_limit = [False]

    def search(extra: list[tuple[LinConstraint, Hashable]], relaxed: SimplexResult, depth: int) -> dict | None:
        point = relaxed.point
        frac = next((v for v in ints if point.get(v, Fraction(0)).denominator != 1), None)
        if frac is None:
            return point
        if depth >= max_depth or budget[0] <= 0:
            hit_limit[0] = True
            return None
        # cheap probe: pin every integer variable to its nearest integer
        budget[0] -= 1
        pins = [
            (LinConstraint(LinExpr.var(v) - LinExpr.constant(round(point.get(v, Fraction(0)))), Rel.EQ), None)
            for v in ints
        ]
        probe = check(list(constraints) + extra + pins)
        if probe.sat:
            return probe.point
        val = point[frac]
        x = LinExpr.var(frac)
        down = LinConstraint(x - LinExpr.constant(math.floor(val)), Rel.LE)
        up = LinConstraint(LinExpr.constant(math.ceil(val)) - x, Rel.LE)
        for branch in (down, up) if val - math.floor(val) <= Fraction(1, 2) else (up, down):
            budget[0] -= 1
            cs = extra + [(branch, None)]
            sub = check(list(constraints) + cs)
            if sub.sat:
                found = search(cs, sub, depth + 1)
                if found is not None:
                    return found
        return None

    found = search([], root, 0)
    if found is not None:
        for v in ints:
            found.setdefault(v, Fraction(0))
        return BranchResult("sat", point=found)
    if hit_limit[0]:
        return BranchResult("unknown")
    return BranchResult("unsat", explanation=_dedupe(tag for _, tag in constraints))
