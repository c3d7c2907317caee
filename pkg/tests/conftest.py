"""Shared fixtures and independent oracles for the test suite."""

from __future__ import annotations

import functools
import itertools
import shutil
from collections import deque
from fractions import Fraction
from importlib import resources
from typing import Iterator, Optional

import pytest

from pathfocus.engine import AnalysisResult, EngineConfig, Mode, analyze
from pathfocus.ir import Assign, Assume, Edge, Havoc, Node, Program, parse_program
from pathfocus.numeric import ExtRat, LinConstraint, LinExpr, Rel, Sort, VarId

MODES = (Mode.CLASSICAL, Mode.PATHFOCUS, Mode.SELFLOOPS)
BENCHMARKS = ("boustrophedon", "circular", "circular_det", "ratelimiter", "sinc")


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(mod.LINES):
            terminalreporter.write_line(line)


def bench(name: str) -> Program:
    text = (resources.files("pathfocus") / "benchmarks" / f"{name}.pfa").read_text()
    return parse_program(text, name)


def run(p: Program, mode: Mode, **kw) -> AnalysisResult:
    return analyze(p, EngineConfig(mode=mode, **kw))


def external_solver() -> Optional[str]:
    path = shutil.which("z3")
    return f"{path} -in" if path else None


needs_z3 = pytest.mark.skipif(external_solver() is None, reason="no z3 binary on PATH")


# -- concrete semantics, written without the analyzer's own evaluators ---------


def value(e: LinExpr, env: dict) -> Fraction:
    total = Fraction(e.const)
    for v, k in e.terms:
        total += k * env[v]
    return total


def satisfied(c: LinConstraint, env: dict) -> bool:
    s = value(c.expr, env)
    return s <= 0 if c.rel is Rel.LE else s < 0 if c.rel is Rel.LT else s == 0


def execute(body, env: dict) -> Iterator[dict]:
    """All concrete outcomes of a command sequence over integers; havoc needs finite bounds."""
    if not body:
        yield env
        return
    cmd, rest = body[0], body[1:]
    if isinstance(cmd, Assume):
        if satisfied(cmd.cond, env):
            yield from execute(rest, env)
    elif isinstance(cmd, Assign):
        yield from execute(rest, {**env, cmd.target: value(cmd.rhs, env)})
    else:
        assert isinstance(cmd, Havoc)
        lo, hi = cmd.lo.value, cmd.hi.value
        for k in range(int(lo) + int(cmd.strict_lo), int(hi) - int(cmd.strict_hi) + 1):
            yield from execute(rest, {**env, cmd.target: Fraction(k)})


def finite_integer(p: Program) -> bool:
    if any(v.sort is not Sort.INT for v in p.variables):
        return False
    return all(
        c.lo.is_finite and c.hi.is_finite
        for e in p.edges
        for c in e.body
        if isinstance(c, Havoc)
    )


@functools.lru_cache(maxsize=None)
def explicit_reachable(p: Program, seed: int = 3, limit: int = 10**5) -> Optional[set[tuple]]:
    """Breadth-first reachable (node, values) pairs, starting from initial states in [-seed, seed].

    Returns None when the program is not a finite integer system, the state
    count exceeds ``limit``, or more than ``5 * limit`` successors (duplicates
    included) have been generated without settling.
    """
    if not finite_integer(p):
        return None
    vs = p.variables
    out: dict[int, list[Edge]] = {n.id: p.out_edges(n.id) for n in p.nodes}
    seen: set[tuple] = set()
    todo: deque = deque()
    grid = range(-seed, seed + 1)
    for n in p.nodes:
        if n.initial is None:
            continue
        for vals in itertools.product(grid, repeat=len(vs)):
            env = {v: Fraction(k) for v, k in zip(vs, vals)}
            if all(satisfied(c, env) for c in n.initial):
                state = (n.id, tuple(env[v] for v in vs))
                if state not in seen:
                    seen.add(state)
                    todo.append(state)
    work = 0
    while todo:
        node, vals = todo.popleft()
        env = dict(zip(vs, vals))
        for e in out[node]:
            for post in execute(e.body, env):
                work += 1
                if work > 5 * limit:
                    return None
                state = (e.dst, tuple(post[v] for v in vs))
                if state not in seen:
                    seen.add(state)
                    if len(seen) > limit:
                        return None
                    todo.append(state)
    return seen


def escapes(result: AnalysisResult, states: set[tuple]) -> list[tuple]:
    vs = result.program.variables
    return [
        (n, vals)
        for n, vals in states
        if not result.invariants[n].contains_point(dict(zip(vs, vals)))
    ]


# -- random formulas and an exact LP oracle -------------------------------------

import random  # noqa: E402

from pathfocus.smt.formula import Atom, Formula, Iff, Implies, Not, VarPool, conj, disj  # noqa: E402


def random_formula(rng: random.Random, max_bools: int = 12, max_nums: int = 6) -> Formula:
    """A small mixed boolean / linear arithmetic formula over integer and rational variables."""
    pool = VarPool()
    bools = [pool.boolean(f"b{i}") for i in range(rng.randint(0, max_bools))]
    nums = [
        pool.numeric(f"v{i}", Sort.INT if rng.random() < 0.5 else Sort.RAT)
        for i in range(rng.randint(1, max_nums))
    ]

    def atom() -> Formula:
        picked = rng.sample(nums, rng.randint(1, min(3, len(nums))))
        e = LinExpr.from_map({v: rng.choice([-3, -2, -1, 1, 2, 3]) for v in picked}, rng.randint(-8, 8))
        return Atom(LinConstraint(e, rng.choice(list(Rel))))

    def leaf() -> Formula:
        if bools and rng.random() < 0.4:
            return rng.choice(bools)
        return atom()

    def node(depth: int) -> Formula:
        if depth == 0:
            return leaf()
        k = rng.random()
        kids = [node(depth - 1) for _ in range(rng.randint(2, 3))]
        if k < 0.35:
            return conj(kids)
        if k < 0.7:
            return disj(kids)
        if k < 0.8:
            return Not(kids[0])
        if k < 0.9:
            return Implies(kids[0], kids[1])
        return Iff(kids[0], kids[1])

    return conj(node(rng.randint(1, 3)) for _ in range(rng.randint(1, 4)))


def _solve_square(rows: list[list[Fraction]], rhs: list[Fraction]) -> Optional[list[Fraction]]:
    n = len(rows)
    a = [row[:] + [b] for row, b in zip(rows, rhs)]
    for col in range(n):
        piv = next((r for r in range(col, n) if a[r][col] != 0), None)
        if piv is None:
            return None
        a[col], a[piv] = a[piv], a[col]
        for r in range(n):
            if r != col and a[r][col] != 0:
                f = a[r][col] / a[col][col]
                a[r] = [x - f * y for x, y in zip(a[r], a[col])]
    return [a[i][n] / a[i][i] for i in range(n)]


def lp_feasible(constraints: list[LinConstraint], variables: list, box: int = 10**6) -> bool:
    """Exact feasibility by enumerating vertices of the system clipped to a large box.

    Strict rows get a shared slack ``eps`` in [0, 1]; the system is feasible
    iff some vertex has ``eps > 0`` (or satisfies it when nothing is strict).
    """
    strict = any(c.rel is Rel.LT for c in constraints)
    cols = list(variables) + (["eps"] if strict else [])
    rows: list[tuple[list[Fraction], Fraction]] = []  # row . x <= rhs

    def add(coeffs: dict, const: Fraction, eps: bool) -> None:
        row = [Fraction(coeffs.get(v, 0)) for v in variables]
        if strict:
            row.append(Fraction(1 if eps else 0))
        rows.append((row, -const))

    for c in constraints:
        co = c.expr.coeffs
        if c.rel is Rel.EQ:
            add(co, c.expr.const, False)
            add({v: -k for v, k in co.items()}, -c.expr.const, False)
        else:
            add(co, c.expr.const, c.rel is Rel.LT)
    for v in variables:
        add({v: 1}, Fraction(-box), False)
        add({v: -1}, Fraction(-box), False)
    if strict:
        rows.append(([Fraction(0)] * len(variables) + [Fraction(1)], Fraction(1)))
        rows.append(([Fraction(0)] * len(variables) + [Fraction(-1)], Fraction(0)))
    for pick in itertools.combinations(range(len(rows)), len(cols)):
        sol = _solve_square([rows[i][0] for i in pick], [rows[i][1] for i in pick])
        if sol is None:
            continue
        if all(sum(a * x for a, x in zip(row, sol)) <= b for row, b in rows):
            if not strict or sol[-1] > 0:
                return True
    return False


# -- random small integer programs -------------------------------------------------

V = (VarId(0, "x"), VarId(1, "y"))
SMALL = 2


def random_body(rng: random.Random, coeffs=(-2, -1, 0, 1, 2)):
    out = []
    for _ in range(rng.randint(0, 2)):
        k = rng.random()
        e = LinExpr.from_map({v: rng.choice(coeffs) for v in V}, rng.randint(-3, 3))
        if k < 0.4:
            out.append(Assume(LinConstraint(e, rng.choice(list(Rel)))))
        elif k < 0.8:
            out.append(Assign(rng.choice(V), e))
        else:
            out.append(Havoc(rng.choice(V), ExtRat.of(-SMALL), ExtRat.of(SMALL)))
    return tuple(out)


def random_program(rng: random.Random, coeffs=(-2, -1, 0, 1, 2)) -> Program:
    n = rng.randint(2, 5)
    nodes = tuple(Node(i, f"n{i}", () if i == 0 else None) for i in range(n))
    edges = tuple(
        Edge(k, rng.randrange(n), rng.randrange(n), random_body(rng, coeffs))
        for k in range(rng.randint(2, 8))
    )
    return Program(V, nodes, edges)
