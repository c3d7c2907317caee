"""Fixpoint engines: classical worklist iteration and SMT-guided path focusing."""

from __future__ import annotations

import enum
import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .domain import (
    Box,
    accelerate,
    box_entails,
    includes,
    initial_box,
    join,
    loopiter,
    post_path,
    widen,
)
from .encode import (
    FocusPath,
    ReducedContext,
    build_rho,
    constraints_at,
    extract_path,
    focus_query,
    is_identity_path,
    member,
    narrow_query,
    not_member,
    only_source,
    path_body,
    replay_path,
)
from .ir import CutSets, NodeId, Program, default_cuts, disconnect
from .numeric import negate_constraint
from .smt.formula import Formula, SolveResult, conj, disj
from .smt.smtlib import solve_external, to_smtlib2
from .smt.solver import DEFAULT_BUDGET, solve

MAX_NARROW_STEPS = 10


class Mode(enum.Enum):
    CLASSICAL = "classical"
    PATHFOCUS = "pathfocus"
    SELFLOOPS = "selfloops"


class Verdict(enum.Enum):
    PROVED = "proved"
    UNKNOWN = "unknown"


class BudgetExhausted(RuntimeError):
    pass


class SolverUnknown(RuntimeError):
    pass


@dataclass
class EngineConfig:
    mode: Mode = Mode.PATHFOCUS
    use_acceleration: bool = False
    narrow_steps: int = 2
    solver: str = "internal"  # or "external:<command>"
    step_budget: int = DEFAULT_BUDGET
    dump_smt: Optional[str] = None

    def __post_init__(self) -> None:
        if not 0 <= self.narrow_steps <= MAX_NARROW_STEPS:
            raise ValueError(f"narrow_steps must be between 0 and {MAX_NARROW_STEPS}")
        if self.step_budget <= 0:
            raise ValueError("step_budget must be positive")
        if self.solver != "internal" and not self.solver.startswith("external"):
            raise ValueError(f"unknown solver backend {self.solver!r}")


@dataclass
class Stats:
    solver_calls: int = 0
    widenings: int = 0
    paths: int = 0
    fallback: bool = False
    wall_ms: float = 0.0


@dataclass(frozen=True)
class TraceStep:
    phase: str  # "ascend" or "narrow"
    src: NodeId
    signature: tuple[int, ...]
    dst: NodeId
    widened: bool


@dataclass
class AnalysisResult:
    program: Program
    mode: Mode
    cuts: CutSets
    invariants: dict[NodeId, Box]
    assertions: dict[tuple[NodeId, int], Verdict]
    inductive: bool
    stats: Stats
    trace: list[TraceStep] = field(default_factory=list)
    diagnostics: list[str] = field(default_factory=list)

    def box(self, name: str) -> Box:
        return self.invariants[self.program.node_named(name).id]


class _Solver:
    """Dispatches queries to the configured backend and keeps the call count."""

    def __init__(self, cfg: EngineConfig, stats: Stats) -> None:
        self.cfg = cfg
        self.stats = stats
        self.dump_dir = Path(cfg.dump_smt) if cfg.dump_smt else None
        if self.dump_dir is not None:
            self.dump_dir.mkdir(parents=True, exist_ok=True)

    def check(self, f: Formula) -> SolveResult:
        self.stats.solver_calls += 1
        if self.dump_dir is not None:
            path = self.dump_dir / f"query-{self.stats.solver_calls:05d}.smt2"
            path.write_text(to_smtlib2(f))
        if self.cfg.solver == "internal":
            res = solve(f, self.cfg.step_budget)
        else:
            cmd = self.cfg.solver.partition(":")[2] or None
            res = solve_external(f, cmd)
        if res.is_unknown:
            raise SolverUnknown(res.reason or "solver returned unknown")
        return res


def _initial_boxes(p: Program, nodes) -> dict[NodeId, Box]:
    return {n: initial_box(p.variables, p.nodes[n].initial) for n in nodes}


# -- classical iteration ---------------------------------------------------------


def _classical_fixpoint(p: Program, cuts: CutSets, x: dict[NodeId, Box], stats: Stats, budget: int) -> None:
    work = deque(n.id for n in p.nodes if not x[n.id].is_bottom)
    queued = set(work)
    updates = 0
    while work:
        p1 = work.popleft()
        queued.discard(p1)
        for e in p.out_edges(p1):
            y = post_path(x[p1], e.body)
            p2 = e.dst
            joined = join(x[p2], y)
            if p2 in cuts.widening:
                tmp = widen(x[p2], joined)
                if tmp != joined:
                    stats.widenings += 1
            else:
                tmp = joined
            if not includes(x[p2], tmp):
                x[p2] = tmp
                updates += 1
                if updates > budget:
                    raise BudgetExhausted("classical iteration exceeded the step budget")
                if p2 not in queued:
                    work.append(p2)
                    queued.add(p2)


def _classical_narrow(p: Program, x: dict[NodeId, Box], steps: int) -> None:
    init = _initial_boxes(p, range(len(p.nodes)))
    for _ in range(steps):
        y = dict(init)
        for e in p.edges:
            y[e.dst] = join(y[e.dst], post_path(x[e.src], e.body))
        if not all(includes(x[n], y[n]) for n in x):
            break
        if y == x:
            break
        x.update(y)


def run_classical(p: Program, cuts: CutSets, cfg: EngineConfig) -> AnalysisResult:
    stats = Stats()
    start = time.perf_counter()
    x = _initial_boxes(p, range(len(p.nodes)))
    _classical_fixpoint(p, cuts, x, stats, cfg.step_budget)
    _classical_narrow(p, x, cfg.narrow_steps)
    return _finish(p, cuts, cfg, Mode.CLASSICAL, x, stats, [], start, [])


# -- path focusing ------------------------------------------------------------------


class _Focus:
    def __init__(self, p: Program, cuts: CutSets, cfg: EngineConfig, stats: Stats) -> None:
        self.p = p
        self.cuts = cuts
        self.cfg = cfg
        self.stats = stats
        self.graph = disconnect(p, cuts)
        self.ctx: ReducedContext = build_rho(self.graph)
        self.solver = _Solver(cfg, stats)
        self.pr = sorted(cuts.abstraction)
        self.trace: list[TraceStep] = []
        self.succ = {q: self.graph.reachable_sinks(self.ctx.sources[q]) for q in self.pr}

    def next_path(self, f: Formula) -> Optional[FocusPath]:
        res = self.solver.check(f)
        if res.is_unsat:
            return None
        assert res.model is not None
        path = extract_path(self.ctx, res.model)
        replay_path(self.ctx, path, res.model)
        return path

    def ascend(self, x: dict[NodeId, Box], selfloops: bool) -> None:
        work = deque(q for q in self.pr if not x[q].is_bottom)
        queued = set(work)
        updates = 0
        while work:
            p1 = work.popleft()
            queued.discard(p1)
            seen: set[tuple[int, ...]] = set()
            while self.succ[p1]:
                targets = {q: x[q] for q in self.succ[p1]}
                path = self.next_path(focus_query(self.ctx, p1, x[p1], targets))
                if path is None:
                    break
                self.stats.paths += 1
                p2 = path.dst
                body = path_body(self.ctx, path)
                loop = selfloops and p1 == p2
                y = None
                if loop and self.cfg.use_acceleration:
                    y = accelerate(body, x[p1])
                if y is None:
                    if loop:
                        inner = {"widenings": 0}
                        y = loopiter(body, x[p1], inner)
                        self.stats.widenings += inner["widenings"]
                    else:
                        y = post_path(x[p1], body)
                old = x[p2]
                joined = join(old, y)
                widened = p2 in self.cuts.widening and (not selfloops or p1 != p2 or path.signature in seen)
                if widened:
                    new = widen(old, joined)
                    if new != joined:
                        self.stats.widenings += 1
                else:
                    new = joined
                    if selfloops:
                        seen.add(path.signature)
                # the solver found a state outside X[p2] that the sound post must cover
                assert includes(new, old) and not includes(old, new), "focus update did not grow"
                x[p2] = new
                self.trace.append(TraceStep("ascend", p1, path.signature, p2, widened))
                updates += 1
                if updates > self.cfg.step_budget:
                    raise BudgetExhausted("path-focused iteration exceeded the step budget")
                if p2 not in queued:
                    work.append(p2)
                    queued.add(p2)

    def narrow_pass(self, x: dict[NodeId, Box]) -> dict[NodeId, Box]:
        y = _initial_boxes(self.p, self.pr)
        for p1 in self.pr:
            if not self.succ[p1]:
                continue
            blocked: list[FocusPath] = []
            while True:
                targets = {q: x[q] for q in self.succ[p1]}
                f = narrow_query(self.ctx, p1, x[p1], targets, y, blocked)
                path = self.next_path(f)
                if path is None:
                    break
                if is_identity_path(self.ctx, path):
                    blocked.append(path)
                    continue
                self.stats.paths += 1
                y[path.dst] = join(y[path.dst], post_path(x[p1], path_body(self.ctx, path)))
                self.trace.append(TraceStep("narrow", p1, path.signature, path.dst, False))
        return y

    def narrow(self, x: dict[NodeId, Box]) -> None:
        for _ in range(self.cfg.narrow_steps):
            y = self.narrow_pass(x)
            if not all(includes(x[q], y[q]) for q in self.pr) or y == x:
                break
            x.update(y)

    def propagate_inner(self, x: dict[NodeId, Box]) -> dict[NodeId, Box]:
        return propagate_inner(self.p, self.cuts, x)


def propagate_inner(p: Program, cuts: CutSets, x: dict[NodeId, Box]) -> dict[NodeId, Box]:
    """Fill in non-abstraction nodes by one forward pass from the abstraction points."""
    g = disconnect(p, cuts)
    out = {q: x[q] for q in cuts.abstraction}
    for d in g.topological_order():
        node = g.nodes[d]
        if node.kind != "inner":
            continue
        acc = Box.bottom(p.variables)
        for e in g.in_edges(d):
            src = g.nodes[e.src].orig
            acc = join(acc, post_path(out[src], e.body))
        out[node.orig] = acc
    return out


def run_pathfocus(p: Program, cuts: CutSets, cfg: EngineConfig) -> AnalysisResult:
    return _run_focus(p, cuts, cfg, Mode.PATHFOCUS)


def run_pathfocus_selfloops(p: Program, cuts: CutSets, cfg: EngineConfig) -> AnalysisResult:
    return _run_focus(p, cuts, cfg, Mode.SELFLOOPS)


def _run_focus(p: Program, cuts: CutSets, cfg: EngineConfig, mode: Mode) -> AnalysisResult:
    stats = Stats()
    start = time.perf_counter()
    eng = _Focus(p, cuts, cfg, stats)
    x = _initial_boxes(p, eng.pr)
    diagnostics: list[str] = []
    try:
        eng.ascend(x, selfloops=mode is Mode.SELFLOOPS)
        eng.narrow(x)
        full = eng.propagate_inner(x)
    except SolverUnknown as exc:
        diagnostics.append(f"solver gave up ({exc}); finishing with classical iteration")
        stats.fallback = True
        full = _initial_boxes(p, range(len(p.nodes)))
        for q in eng.pr:
            full[q] = join(full[q], x[q])
        _classical_fixpoint(p, cuts, full, stats, cfg.step_budget)
    return _finish(p, cuts, cfg, mode, full, stats, eng.trace, start, diagnostics, eng)


# -- verification ---------------------------------------------------------------


def verify_inductive(eng: _Focus, x: dict[NodeId, Box]) -> tuple[bool, list[str]]:
    """Independent check: nothing escapes X along any reduced path, and X covers the initial states."""
    notes: list[str] = []
    try:
        for p1 in eng.pr:
            if eng.succ[p1]:
                targets = {q: x[q] for q in eng.succ[p1]}
                path = eng.next_path(focus_query(eng.ctx, p1, x[p1], targets))
                if path is not None:
                    notes.append(f"not inductive: path {list(path.edges)} leaves the invariant")
                    return False, notes
            init = eng.p.nodes[p1].initial
            if init is not None:
                src = eng.ctx.sources[p1]
                f = conj(constraints_at(eng.ctx, src, init), not_member(eng.ctx, src, x[p1]))
                if eng.solver.check(f).is_sat:
                    notes.append(f"initial states of {eng.p.nodes[p1].name} are not covered")
                    return False, notes
    except SolverUnknown as exc:
        notes.append(f"inductiveness check inconclusive: {exc}")
        return False, notes
    return True, notes


def _violations(ctx: ReducedContext, dnode: int, c) -> Formula:
    return disj(constraints_at(ctx, dnode, [n]) for n in negate_constraint(c))


def check_assertions(eng: _Focus, x: dict[NodeId, Box]) -> dict[tuple[NodeId, int], Verdict]:
    """Per-path assertion checks: a violation must be reachable in one reduced step from some X."""
    ctx = eng.ctx
    g = eng.graph
    verdicts: dict[tuple[NodeId, int], Verdict] = {}
    starts = disj(
        conj(only_source(ctx, p1), member(ctx, ctx.sources[p1], x[p1])) for p1 in eng.pr
    )
    for node in eng.p.nodes:
        for idx, c in enumerate(node.assertions):
            dnode = ctx.sinks[node.id] if node.id in ctx.sinks else g.inner_of[node.id]
            queries = [conj(ctx.rho, starts, ctx.node_bool[dnode], _violations(ctx, dnode, c))]
            if node.initial is not None:
                src = ctx.sources[node.id]
                queries.append(conj(constraints_at(ctx, src, node.initial), _violations(ctx, src, c)))
            try:
                proved = all(eng.solver.check(q).is_unsat for q in queries)
            except SolverUnknown:
                proved = False
            verdicts[(node.id, idx)] = Verdict.PROVED if proved else Verdict.UNKNOWN
    return verdicts


def box_verdicts(p: Program, x: dict[NodeId, Box]) -> dict[tuple[NodeId, int], Verdict]:
    """Assertion verdicts using only the per-node boxes (no path sensitivity)."""
    return {
        (n.id, i): Verdict.PROVED if box_entails(x[n.id], c) else Verdict.UNKNOWN
        for n in p.nodes
        for i, c in enumerate(n.assertions)
    }


def _finish(
    p: Program,
    cuts: CutSets,
    cfg: EngineConfig,
    mode: Mode,
    full: dict[NodeId, Box],
    stats: Stats,
    trace: list[TraceStep],
    start: float,
    diagnostics: list[str],
    eng: Optional[_Focus] = None,
) -> AnalysisResult:
    if eng is None:
        eng = _Focus(p, cuts, cfg, stats)
    at_pr = {q: full[q] for q in eng.pr}
    inductive, notes = verify_inductive(eng, at_pr)
    verdicts = check_assertions(eng, at_pr)
    stats.wall_ms = (time.perf_counter() - start) * 1000
    return AnalysisResult(
        program=p,
        mode=mode,
        cuts=cuts,
        invariants=dict(sorted(full.items())),
        assertions=verdicts,
        inductive=inductive,
        stats=stats,
        trace=trace,
        diagnostics=diagnostics + notes,
    )


def analyze(p: Program, cfg: EngineConfig, cuts: Optional[CutSets] = None) -> AnalysisResult:
    cuts = cuts if cuts is not None else default_cuts(p)
    runner = {
        Mode.CLASSICAL: run_classical,
        Mode.PATHFOCUS: run_pathfocus,
        Mode.SELFLOOPS: run_pathfocus_selfloops,
    }[cfg.mode]
    return runner(p, cuts, cfg)


__all__ = [
    "AnalysisResult",
    "BudgetExhausted",
    "EngineConfig",
    "Mode",
    "SolverUnknown",
    "Stats",
    "TraceStep",
    "Verdict",
    "analyze",
    "box_verdicts",
    "check_assertions",
    "propagate_inner",
    "run_classical",
    "run_pathfocus",
    "run_pathfocus_selfloops",
    "verify_inductive",
]
