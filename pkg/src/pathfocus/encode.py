"""Transition formula over the disconnected graph, focus/narrowing queries, path decoding.

Every node of the disconnected graph gets a reachability boolean ``b``, its
own copy of each program variable, and every edge an activation boolean
``e``.  Nodes with several successors get one-hot selector booleans so that
a model of the formula activates exactly one chain of edges.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .domain import Box
from .ir import Assign, Assume, Command, DEdge, DisconnectedGraph, Havoc, NodeId
from .numeric import LinConstraint, LinExpr, Rel, VarId, eval_linexpr, substitute_all
from .smt.formula import (
    FALSE,
    Atom,
    BoolVar,
    Formula,
    Iff,
    Implies,
    Model,
    SmtNumVar,
    VarPool,
    conj,
    disj,
    neg,
)


class UnknownNode(KeyError):
    pass


class AmbiguousPath(AssertionError):
    pass


class BrokenChain(AssertionError):
    pass


class ReplayMismatch(AssertionError):
    pass


@dataclass
class ReducedContext:
    graph: DisconnectedGraph
    rho: Formula
    node_bool: dict[int, BoolVar]
    edge_bool: dict[int, BoolVar]
    choice_vars: dict[int, tuple[BoolVar, ...]]
    var_copies: dict[int, dict[VarId, SmtNumVar]]
    sources: dict[NodeId, int]
    sinks: dict[NodeId, int]
    havoc_vars: dict[int, list[SmtNumVar]] = field(default_factory=dict)

    def copy_at(self, dnode: int) -> dict[VarId, LinExpr]:
        return {v: LinExpr.var(s) for v, s in self.var_copies[dnode].items()}


@dataclass(frozen=True)
class FocusPath:
    edges: tuple[int, ...]  # original edge ids
    src: NodeId
    dst: NodeId
    dedges: tuple[int, ...] = ()

    @property
    def signature(self) -> tuple[int, ...]:
        return self.edges


def _bound_atoms(h: SmtNumVar, cmd: Havoc) -> list[Formula]:
    out: list[Formula] = []
    x = LinExpr.var(h)
    if cmd.lo.is_finite:
        out.append(Atom(LinConstraint(LinExpr.constant(cmd.lo.value) - x, Rel.LT if cmd.strict_lo else Rel.LE)))
    if cmd.hi.is_finite:
        out.append(Atom(LinConstraint(x - LinExpr.constant(cmd.hi.value), Rel.LT if cmd.strict_hi else Rel.LE)))
    return out


def _symbolic_body(
    body: Sequence[Command], env: dict[VarId, LinExpr], fresh
) -> tuple[list[Formula], dict[VarId, LinExpr]]:
    """Symbolically execute ``body``; returns guard formulas and the final environment."""
    env = dict(env)
    guards: list[Formula] = []
    for k, cmd in enumerate(body):
        if isinstance(cmd, Assume):
            guards.append(Atom(LinConstraint(substitute_all(cmd.cond.expr, env), cmd.cond.rel)))
        elif isinstance(cmd, Assign):
            env[cmd.target] = substitute_all(cmd.rhs, env)
        elif isinstance(cmd, Havoc):
            h = fresh(k, cmd.target)
            guards.extend(_bound_atoms(h, cmd))
            env[cmd.target] = LinExpr.var(h)
        else:
            raise TypeError(f"unknown command {cmd!r}")
    return guards, env


def build_rho(g: DisconnectedGraph) -> ReducedContext:
    """Encode one step of the reduced graph as a single formula."""
    pool = VarPool()
    variables = g.program.variables
    node_bool = {n.id: pool.boolean(f"b:{n.name}") for n in g.nodes}
    edge_bool = {e.id: pool.boolean(f"e:{e.id}") for e in g.edges}
    copies: dict[int, dict[VarId, SmtNumVar]] = {}
    for n in g.nodes:
        copies[n.id] = {v: pool.numeric(f"{v.name}@{n.name}", v.sort, (n.id, v)) for v in variables}
    choice: dict[int, tuple[BoolVar, ...]] = {}
    selector: dict[int, BoolVar] = {}
    parts: list[Formula] = []

    for n in g.nodes:
        outs = g.out_edges(n.id)
        if len(outs) < 2:
            continue
        cs = tuple(pool.boolean(f"c:{n.name}:{i}") for i in range(len(outs)))
        choice[n.id] = cs
        for e, c in zip(outs, cs):
            selector[e.id] = c
        b = node_bool[n.id]
        parts.append(Implies(b, disj(cs)))
        for i in range(len(cs)):
            for j in range(i + 1, len(cs)):
                parts.append(disj(neg(cs[i]), neg(cs[j])))

    havoc_vars: dict[int, list[SmtNumVar]] = {}
    for e in g.edges:
        hv: list[SmtNumVar] = []

        def fresh(k: int, target: VarId, e: DEdge = e, hv: list = hv) -> SmtNumVar:
            h = pool.numeric(f"h{e.id}.{k}:{target.name}", target.sort, None)
            hv.append(h)
            return h

        src_env = {v: LinExpr.var(s) for v, s in copies[e.src].items()}
        guards, env = _symbolic_body(e.body, src_env, fresh)
        havoc_vars[e.id] = hv
        eb = edge_bool[e.id]
        enabling = [node_bool[e.src]]
        if e.id in selector:
            enabling.append(selector[e.id])
        parts.append(Iff(eb, conj(enabling + guards)))
        for v in variables:
            dst_copy = LinExpr.var(copies[e.dst][v])
            parts.append(Implies(eb, Atom(LinConstraint(dst_copy - env[v], Rel.EQ))))

    for n in g.nodes:
        if n.kind == "src":
            continue
        incoming = [edge_bool[e.id] for e in g.in_edges(n.id)]
        parts.append(Iff(node_bool[n.id], disj(incoming)))

    return ReducedContext(
        graph=g,
        rho=conj(parts),
        node_bool=node_bool,
        edge_bool=edge_bool,
        choice_vars=choice,
        var_copies=copies,
        sources=dict(g.source_of),
        sinks=dict(g.sink_of),
        havoc_vars=havoc_vars,
    )


# -- box membership -------------------------------------------------------------


def member(ctx: ReducedContext, dnode: int, box: Box) -> Formula:
    """The box as a conjunction of bound atoms over ``dnode``'s variable copies."""
    if box.is_bottom:
        return FALSE
    env = ctx.copy_at(dnode)
    return conj(Atom(LinConstraint(substitute_all(c.expr, env), c.rel)) for c in box.constraints())


def not_member(ctx: ReducedContext, dnode: int, box: Box) -> Formula:
    return neg(member(ctx, dnode, box))


def constraints_at(ctx: ReducedContext, dnode: int, cs: Iterable[LinConstraint]) -> Formula:
    env = ctx.copy_at(dnode)
    return conj(Atom(LinConstraint(substitute_all(c.expr, env), c.rel)) for c in cs)


def block_paths(ctx: ReducedContext, paths: Iterable[FocusPath]) -> Formula:
    """Exclude exactly the given paths (the active chain is unique in any model)."""
    return conj(neg(conj(ctx.edge_bool[d] for d in p.dedges)) for p in paths)


def _source(ctx: ReducedContext, p1: NodeId) -> int:
    if p1 not in ctx.sources:
        raise UnknownNode(p1)
    return ctx.sources[p1]


def _sink(ctx: ReducedContext, p2: NodeId) -> int:
    if p2 not in ctx.sinks:
        raise UnknownNode(p2)
    return ctx.sinks[p2]


def only_source(ctx: ReducedContext, p1: NodeId) -> Formula:
    s = _source(ctx, p1)
    return conj(
        [ctx.node_bool[s]] + [neg(ctx.node_bool[q]) for q in sorted(ctx.sources.values()) if q != s]
    )


def focus_query(
    ctx: ReducedContext,
    p1: NodeId,
    x1: Box,
    targets: Mapping[NodeId, Box],
    blocked: Iterable[FocusPath] = (),
) -> Formula:
    """A path from ``p1`` starting inside ``x1`` and leaving some target box."""
    s = _source(ctx, p1)
    escape = disj(
        conj(ctx.node_bool[_sink(ctx, p2)], not_member(ctx, _sink(ctx, p2), box))
        for p2, box in sorted(targets.items())
    )
    return conj(ctx.rho, only_source(ctx, p1), member(ctx, s, x1), escape, block_paths(ctx, blocked))


def narrow_query(
    ctx: ReducedContext,
    p1: NodeId,
    x1: Box,
    targets: Mapping[NodeId, Box],
    working: Mapping[NodeId, Box],
    blocked: Iterable[FocusPath] = (),
) -> Formula:
    """A path from ``p1`` inside ``x1`` ending inside the target box but outside ``working``."""
    s = _source(ctx, p1)
    arrive = disj(
        conj(
            ctx.node_bool[_sink(ctx, p2)],
            member(ctx, _sink(ctx, p2), box),
            not_member(ctx, _sink(ctx, p2), working[p2]),
        )
        for p2, box in sorted(targets.items())
    )
    return conj(ctx.rho, only_source(ctx, p1), member(ctx, s, x1), arrive, block_paths(ctx, blocked))


# -- decoding -------------------------------------------------------------------


def extract_path(ctx: ReducedContext, m: Model) -> FocusPath:
    """Follow the unique chain of active edges from the active source to a sink."""
    g = ctx.graph
    active = [d for d in sorted(ctx.sources.values()) if m.bools.get(ctx.node_bool[d].id, False)]
    if len(active) != 1:
        raise AmbiguousPath(f"{len(active)} active sources")
    cur = active[0]
    dedges: list[int] = []
    while g.nodes[cur].kind != "dst":
        outs = [e for e in g.out_edges(cur) if m.bools.get(ctx.edge_bool[e.id].id, False)]
        if len(outs) > 1:
            raise AmbiguousPath(f"{len(outs)} active edges leave {g.nodes[cur].name}")
        if not outs:
            raise BrokenChain(f"active chain stops at {g.nodes[cur].name}")
        dedges.append(outs[0].id)
        cur = outs[0].dst
    if not dedges:
        raise BrokenChain("empty path")
    return FocusPath(
        edges=tuple(g.edges[d].orig for d in dedges),
        src=g.nodes[active[0]].orig,
        dst=g.nodes[cur].orig,
        dedges=tuple(dedges),
    )


def path_body(ctx: ReducedContext, path: FocusPath) -> tuple[Command, ...]:
    out: list[Command] = []
    for d in path.dedges:
        out.extend(ctx.graph.edges[d].body)
    return tuple(out)


def is_identity_path(ctx: ReducedContext, path: FocusPath) -> bool:
    """A self-loop whose commands can only filter states, never change them."""
    if path.src != path.dst:
        return False
    for cmd in path_body(ctx, path):
        if isinstance(cmd, Assume):
            continue
        if isinstance(cmd, Assign) and cmd.rhs == LinExpr.var(cmd.target):
            continue
        return False
    return True


def replay_path(ctx: ReducedContext, path: FocusPath, m: Model) -> dict[VarId, Fraction]:
    """Run the path concretely from the model's source values; must land on the sink values."""
    g = ctx.graph
    first = g.edges[path.dedges[0]].src
    # copies that the query leaves unconstrained are absent from the model
    env = {v: m.nums.get(s, Fraction(0)) for v, s in ctx.var_copies[first].items()}
    for d in path.dedges:
        edge = g.edges[d]
        havocs = iter(ctx.havoc_vars[d])
        for cmd in edge.body:
            if isinstance(cmd, Assume):
                if not cmd.cond.holds(env):
                    raise ReplayMismatch(f"guard {cmd.cond} fails on edge {edge.orig}")
            elif isinstance(cmd, Assign):
                env[cmd.target] = eval_linexpr(cmd.rhs, env)
            else:
                h = next(havocs)
                val = m.nums.get(h, Fraction(0))
                if not (cmd.lo.kind < 0 or cmd.lo.value < val or (not cmd.strict_lo and cmd.lo.value == val)):
                    raise ReplayMismatch(f"havoc value {val} below its range on edge {edge.orig}")
                if not (cmd.hi.kind > 0 or val < cmd.hi.value or (not cmd.strict_hi and cmd.hi.value == val)):
                    raise ReplayMismatch(f"havoc value {val} above its range on edge {edge.orig}")
                env[cmd.target] = val
        expected = {v: m.nums.get(s, Fraction(0)) for v, s in ctx.var_copies[edge.dst].items()}
        if env != expected:
            raise ReplayMismatch(f"values after edge {edge.orig} disagree with the model")
    return env


__all__ = [
    "AmbiguousPath",
    "BrokenChain",
    "FocusPath",
    "ReducedContext",
    "ReplayMismatch",
    "UnknownNode",
    "block_paths",
    "build_rho",
    "constraints_at",
    "extract_path",
    "focus_query",
    "is_identity_path",
    "member",
    "narrow_query",
    "not_member",
    "only_source",
    "path_body",
    "replay_path",
]
