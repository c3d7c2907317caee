"""Lazy DPLL(T) over linear rational and integer arithmetic.

The boolean skeleton is Tseitin-encoded and handed to :class:`SatSolver`.
Assigned arithmetic atoms are checked with the simplex at every propagation
fixpoint; integrality is only enforced (by branch and bound) once the
boolean assignment is total.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Hashable, Optional

from ..numeric import LinConstraint, Rel, Sort, is_integral, normalize_int
from . import simplex
from .formula import (
    And,
    Atom,
    BoolVar,
    Const,
    Formula,
    Iff,
    Implies,
    Model,
    Not,
    Or,
    SolveResult,
    Status,
    evaluate,
    free_vars,
)
from .sat import BudgetExceeded, SatSolver

DEFAULT_BUDGET = 200_000
MINIMIZE_LIMIT = 40


def _canonical(c: LinConstraint) -> tuple[Optional[LinConstraint], bool]:
    """Map an inequality to ``(canonical atom, polarity)``.

    The canonical atom has a positive leading coefficient (1 over the
    rationals, coprime integers when every variable is integer-sorted).  A
    ``None`` atom means the constraint is constant; the polarity is then its
    truth value.
    """
    assert c.rel is not Rel.EQ
    integral = is_integral(c.expr)
    if integral:
        c = normalize_int(c)
    e = c.expr
    if not e.terms:
        return None, c.holds({})
    lead = e.terms[0][1]
    if lead > 0:
        if not integral:
            c = LinConstraint(e.scale(1 / lead), c.rel)
        return c, True
    # lead < 0: flip to the complementary atom over -e
    flipped = -e
    if integral:
        # e <= 0  <=>  not (-e >= 1)  <=>  not (-e + 1 <= 0)
        return LinConstraint(flipped.shift(1), Rel.LE), False
    flipped = flipped.scale(1 / -lead)
    other = Rel.LT if c.rel is Rel.LE else Rel.LE
    return LinConstraint(flipped, other), False


def _negation(c: LinConstraint) -> LinConstraint:
    """The complement of a canonical inequality atom, as a single constraint."""
    if c.rel is Rel.LE:
        neg = LinConstraint(-c.expr, Rel.LT)
    else:
        neg = LinConstraint(-c.expr, Rel.LE)
    return normalize_int(neg) if is_integral(c.expr) else neg


class _Encoder:
    def __init__(self, bools: list[BoolVar]) -> None:
        self.nvars = 0
        self.clauses: list[list[int]] = []
        self.bool_lit: dict[int, int] = {}
        for b in bools:
            self.bool_lit[b.id] = self._fresh()
        self.atom_lit: dict[tuple, int] = {}
        self.atoms: dict[int, LinConstraint] = {}
        self.cache: dict[int, int] = {}
        self.keep: list[Formula] = []
        self.true_lit: Optional[int] = None

    def _fresh(self) -> int:
        self.nvars += 1
        return self.nvars

    def _true(self) -> int:
        if self.true_lit is None:
            self.true_lit = self._fresh()
            self.clauses.append([self.true_lit])
        return self.true_lit

    def collect_atoms(self, f: Formula) -> None:
        seen: set[int] = set()
        stack = [f]
        while stack:
            g = stack.pop()
            if id(g) in seen:
                continue
            seen.add(id(g))
            if isinstance(g, Atom):
                for c in _split_eq(g.c):
                    atom, _ = _canonical(c)
                    if atom is not None:
                        self._atom_var(atom)
            elif isinstance(g, Not):
                stack.append(g.arg)
            elif isinstance(g, (And, Or)):
                stack.extend(reversed(g.args))
            elif isinstance(g, (Implies, Iff)):
                stack.extend((g.rhs, g.lhs))

    def _atom_var(self, atom: LinConstraint) -> int:
        key = (atom.expr.terms, atom.expr.const, atom.rel)
        v = self.atom_lit.get(key)
        if v is None:
            v = self._fresh()
            self.atom_lit[key] = v
            self.atoms[v] = atom
        return v

    def _atom_literal(self, c: LinConstraint) -> int:
        atom, pol = _canonical(c)
        if atom is None:
            return self._true() if pol else -self._true()
        v = self._atom_var(atom)
        return v if pol else -v

    def lit(self, f: Formula) -> int:
        key = id(f)
        hit = self.cache.get(key)
        if hit is not None:
            return hit
        out = self._lit(f)
        self.cache[key] = out
        self.keep.append(f)
        return out

    def _lit(self, f: Formula) -> int:
        if isinstance(f, BoolVar):
            return self.bool_lit[f.id]
        if isinstance(f, Const):
            return self._true() if f.value else -self._true()
        if isinstance(f, Not):
            return -self.lit(f.arg)
        if isinstance(f, Atom):
            parts = [self._atom_literal(c) for c in _split_eq(f.c)]
            return parts[0] if len(parts) == 1 else self._and(parts)
        if isinstance(f, And):
            return self._and([self.lit(g) for g in f.args])
        if isinstance(f, Or):
            return -self._and([-self.lit(g) for g in f.args])
        if isinstance(f, Implies):
            return -self._and([self.lit(f.lhs), -self.lit(f.rhs)])
        if isinstance(f, Iff):
            a, b = self.lit(f.lhs), self.lit(f.rhs)
            g = self._fresh()
            self.clauses += [[-g, -a, b], [-g, a, -b], [g, a, b], [g, -a, -b]]
            return g
        raise TypeError(f"not a formula: {f!r}")

    def _and(self, lits: list[int]) -> int:
        if not lits:
            return self._true()
        if len(lits) == 1:
            return lits[0]
        g = self._fresh()
        for a in lits:
            self.clauses.append([-g, a])
        self.clauses.append([g] + [-a for a in lits])
        return g

    def assert_top(self, f: Formula) -> None:
        if isinstance(f, And):
            for g in f.args:
                self.assert_top(g)
        elif isinstance(f, Or):
            self.clauses.append([self.lit(g) for g in f.args])
        else:
            self.clauses.append([self.lit(f)])


def _split_eq(c: LinConstraint) -> tuple[LinConstraint, ...]:
    if c.rel is Rel.EQ:
        return (LinConstraint(c.expr, Rel.LE), LinConstraint(-c.expr, Rel.LE))
    return (c,)


class _Theory:
    def __init__(self, sat: SatSolver, atoms: dict[int, LinConstraint]) -> None:
        self.sat = sat
        self.atoms = sorted(atoms.items())
        self.negated = {v: _negation(c) for v, c in self.atoms}
        self.last_ok: Optional[tuple[int, ...]] = None
        self.point: dict = {}
        self.calls = 0
        self.undecided = False

    def _active(self) -> tuple[list[tuple[LinConstraint, Hashable]], tuple[int, ...]]:
        cs: list[tuple[LinConstraint, Hashable]] = []
        lits: list[int] = []
        for v, c in self.atoms:
            val = self.sat.value[v]
            if val > 0:
                cs.append((c, v))
                lits.append(v)
            elif val < 0:
                cs.append((self.negated[v], -v))
                lits.append(-v)
        return cs, tuple(lits)

    def __call__(self, final: bool) -> Optional[list[int]]:
        cs, key = self._active()
        if not final and key == self.last_ok:
            return None
        self.calls += 1
        ints = sorted({v for c, _ in cs for v in c.variables() if v.sort is Sort.INT})
        if not final or not ints:
            res = simplex.check(cs)
            if not res.sat:
                return [-t for t in res.explanation]
            self.last_ok = key
            self.point = res.point
            return None
        res = simplex.branch_and_bound(cs, ints)
        if res.status == "unknown":
            # give up on this assignment only; an unsat answer is then no longer trustworthy
            self.undecided = True
            return [-lit for lit in key]
        if res.status == "sat":
            self.point = res.point
            return None
        core = [t for t in res.explanation if t is not None]
        if len(core) == len(cs) and len(cs) <= MINIMIZE_LIMIT:
            core = self._minimize(cs, ints)
        return [-t for t in core]

    def _minimize(self, cs: list[tuple[LinConstraint, Hashable]], ints: list) -> list[Hashable]:
        kept = list(cs)
        i = 0
        while i < len(kept):
            trial = kept[:i] + kept[i + 1:]
            if simplex.branch_and_bound(trial, ints).status == "unsat":
                kept = trial
            else:
                i += 1
        return [t for _, t in kept]


def solve(f: Formula, budget: int = DEFAULT_BUDGET) -> SolveResult:
    """Decide ``f``; ``budget`` bounds the number of decisions plus conflicts."""
    bools, nums = free_vars(f)
    enc = _Encoder(bools)
    enc.collect_atoms(f)
    enc.assert_top(f)
    sat = SatSolver(enc.nvars)
    for cl in enc.clauses:
        sat.add_clause(cl)
    theory = _Theory(sat, enc.atoms)
    try:
        found = sat.solve(theory if enc.atoms else None, budget=budget)
    except BudgetExceeded:
        return SolveResult(Status.UNKNOWN, reason="step budget exhausted")
    if not found:
        if theory.undecided:
            return SolveResult(Status.UNKNOWN, reason="integer branch and bound depth exceeded")
        return SolveResult(Status.UNSAT)
    model = Model()
    for b in bools:
        model.bools[b.id] = sat.value[enc.bool_lit[b.id]] > 0
    for v in nums:
        model.nums[v] = Fraction(theory.point.get(v, 0))
    if not evaluate(f, model):
        raise AssertionError("internal solver produced a model that does not satisfy the formula")
    return SolveResult(Status.SAT, model=model)


__all__ = ["solve", "DEFAULT_BUDGET"]
