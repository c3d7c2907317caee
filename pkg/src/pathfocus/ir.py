"""Control-flow graphs with guarded-command edges, the ``.pfa`` parser, and cut sets."""

from __future__ import annotations

import re
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from graphlib import CycleError, TopologicalSorter
from typing import Iterable, Union

from .numeric import (
    NEG_INF,
    POS_INF,
    ExtRat,
    LinConstraint,
    LinExpr,
    Sort,
    VarId,
)

NodeId = int


class ParseError(Exception):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {message}")
        self.line = line
        self.col = col


class ValidationError(Exception):
    pass


class InvalidCutSet(Exception):
    pass


class CycleRemains(Exception):
    pass


class UnreachableCycle(UserWarning):
    pass


# -- commands -----------------------------------------------------------------


@dataclass(frozen=True)
class Assume:
    cond: LinConstraint

    def __str__(self) -> str:
        return f"assume {self.cond}"


@dataclass(frozen=True)
class Assign:
    target: VarId
    rhs: LinExpr

    def __str__(self) -> str:
        return f"{self.target} := {self.rhs}"


@dataclass(frozen=True)
class Havoc:
    target: VarId
    lo: ExtRat = NEG_INF
    hi: ExtRat = POS_INF
    strict_lo: bool = False
    strict_hi: bool = False

    def __post_init__(self) -> None:
        if self.hi < self.lo:
            raise ValidationError(f"empty nondet range for {self.target}")

    def __str__(self) -> str:
        return f"{self.target} := nondet({self.lo}, {self.hi})"


Command = Union[Assume, Assign, Havoc]


@dataclass(frozen=True)
class Edge:
    id: int
    src: NodeId
    dst: NodeId
    body: tuple[Command, ...] = ()


@dataclass(frozen=True)
class Node:
    id: NodeId
    name: str
    # None means the node has no initial states.
    initial: tuple[LinConstraint, ...] | None = None
    assertions: tuple[LinConstraint, ...] = ()


@dataclass(frozen=True)
class Program:
    variables: tuple[VarId, ...]
    nodes: tuple[Node, ...]
    edges: tuple[Edge, ...]
    name: str = "program"

    def node_named(self, name: str) -> Node:
        for n in self.nodes:
            if n.name == name:
                return n
        raise KeyError(name)

    def var_named(self, name: str) -> VarId:
        for v in self.variables:
            if v.name == name:
                return v
        raise KeyError(name)

    def out_edges(self, n: NodeId) -> list[Edge]:
        return [e for e in self.edges if e.src == n]

    def in_edges(self, n: NodeId) -> list[Edge]:
        return [e for e in self.edges if e.dst == n]

    @property
    def initial_nodes(self) -> list[NodeId]:
        return [n.id for n in self.nodes if n.initial is not None]


def _command_vars(cmd: Command) -> Iterable[VarId]:
    if isinstance(cmd, Assume):
        return cmd.cond.variables()
    if isinstance(cmd, Assign):
        return (cmd.target,) + cmd.rhs.variables()
    return (cmd.target,)


def validate(p: Program) -> Program:
    names = [v.name for v in p.variables]
    if len(set(names)) != len(names):
        raise ValidationError("duplicate variable name")
    if [v.index for v in p.variables] != list(range(len(p.variables))):
        raise ValidationError("variable indices must be dense")
    declared = set(p.variables)
    node_names = [n.name for n in p.nodes]
    if len(set(node_names)) != len(node_names):
        raise ValidationError("duplicate node name")
    if [n.id for n in p.nodes] != list(range(len(p.nodes))):
        raise ValidationError("node ids must be dense")
    if not p.initial_nodes:
        raise ValidationError("no node has an initial region")
    for n in p.nodes:
        for c in (n.initial or ()) + n.assertions:
            for v in c.variables():
                if v not in declared:
                    raise ValidationError(f"undeclared variable {v} at node {n.name}")
    for e in p.edges:
        if not (0 <= e.src < len(p.nodes) and 0 <= e.dst < len(p.nodes)):
            raise ValidationError(f"edge {e.id} has a dangling endpoint")
        for cmd in e.body:
            for v in _command_vars(cmd):
                if v not in declared:
                    raise ValidationError(f"undeclared variable {v} on edge {e.id}")
    return p


# -- parser -------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+) |
    (?P<nl>\n) |
    (?P<comment>\#[^\n]*) |
    (?P<num>\d+(?:\.\d+)?) |
    (?P<ident>[A-Za-z_][A-Za-z_0-9']*) |
    (?P<op>:=|<=|>=|==|<|>|=|[-+*/(){},;:])
    """,
    re.VERBOSE,
)

_KEYWORDS = {"vars", "node", "init", "assert", "from", "to", "assume", "nondet", "int", "rat", "oo"}


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Tok]:
    toks: list[_Tok] = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind not in ("ws", "comment"):
            tok_text = m.group()
            if kind == "ident" and tok_text in _KEYWORDS:
                kind = "kw"
            toks.append(_Tok(kind, tok_text, line, pos - line_start + 1))
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - line_start + 1))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0
        self.vars: dict[str, VarId] = {}

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def error(self, msg: str) -> ParseError:
        t = self.tok
        found = t.text or "end of input"
        return ParseError(f"{msg} (found {found!r})", t.line, t.col)

    def accept(self, text: str) -> bool:
        if self.tok.text == text and self.tok.kind in ("op", "kw"):
            self.i += 1
            return True
        return False

    def expect(self, text: str) -> _Tok:
        t = self.tok
        if not self.accept(text):
            raise self.error(f"expected {text!r}")
        return t

    def ident(self) -> _Tok:
        t = self.tok
        if t.kind != "ident":
            raise self.error("expected identifier")
        self.i += 1
        return t

    def var_ref(self, t: _Tok) -> VarId:
        v = self.vars.get(t.text)
        if v is None:
            raise ValidationError(f"{t.line}:{t.col}: undeclared variable {t.text!r}")
        return v

    # program := "vars" vardecl ("," vardecl)* ";" item*
    def program(self, name: str) -> Program:
        self.expect("vars")
        decls = [self.vardecl()]
        while self.accept(","):
            decls.append(self.vardecl())
        self.expect(";")
        variables: list[VarId] = []
        for t, sort in decls:
            if t.text in self.vars:
                raise ValidationError(f"{t.line}:{t.col}: duplicate variable {t.text!r}")
            v = VarId(len(variables), t.text, sort)
            variables.append(v)
            self.vars[t.text] = v

        raw_nodes: list[tuple[_Tok, tuple | None, tuple]] = []
        raw_edges: list[tuple[_Tok, _Tok, tuple]] = []
        while self.tok.kind != "eof":
            if self.accept("node"):
                raw_nodes.append(self.node())
            elif self.accept("from"):
                raw_edges.append(self.edge())
            else:
                raise self.error("expected 'node' or 'from'")

        ids: dict[str, int] = {}
        nodes: list[Node] = []
        for t, init, asserts in raw_nodes:
            if t.text in ids:
                raise ValidationError(f"{t.line}:{t.col}: duplicate node {t.text!r}")
            ids[t.text] = len(nodes)
            nodes.append(Node(len(nodes), t.text, init, asserts))
        edges: list[Edge] = []
        for src, dst, body in raw_edges:
            for t in (src, dst):
                if t.text not in ids:
                    raise ValidationError(f"{t.line}:{t.col}: edge endpoint {t.text!r} is not a declared node")
            edges.append(Edge(len(edges), ids[src.text], ids[dst.text], body))
        return validate(Program(tuple(variables), tuple(nodes), tuple(edges), name))

    def vardecl(self) -> tuple[_Tok, Sort]:
        t = self.ident()
        self.expect(":")
        if self.accept("int"):
            return t, Sort.INT
        if self.accept("rat"):
            return t, Sort.RAT
        raise self.error("expected 'int' or 'rat'")

    def node(self) -> tuple[_Tok, tuple | None, tuple]:
        t = self.ident()
        init = None
        asserts: tuple = ()
        if self.accept("init"):
            init = self.braced_constraints()
        if self.accept("assert"):
            asserts = self.braced_constraints()
        self.expect(";")
        return t, init, asserts

    def braced_constraints(self) -> tuple[LinConstraint, ...]:
        self.expect("{")
        out: list[LinConstraint] = []
        if not self.accept("}"):
            out.append(self.constraint())
            while self.accept(","):
                out.append(self.constraint())
            self.expect("}")
        return tuple(out)

    def edge(self) -> tuple[_Tok, _Tok, tuple]:
        src = self.ident()
        self.expect("to")
        dst = self.ident()
        self.expect("{")
        body: list[Command] = []
        while not self.accept("}"):
            body.append(self.command())
        self.expect(";")
        return src, dst, tuple(body)

    def command(self) -> Command:
        if self.accept("assume"):
            c = self.constraint()
            self.expect(";")
            return Assume(c)
        target = self.var_ref(self.ident())
        self.expect(":=")
        if self.accept("nondet"):
            self.expect("(")
            lo = self.bound()
            self.expect(",")
            hi = self.bound()
            self.expect(")")
            self.expect(";")
            if hi < lo:
                raise self.error("empty nondet range")
            return Havoc(target, lo, hi)
        rhs = self.linexpr()
        self.expect(";")
        return Assign(target, rhs)

    def bound(self) -> ExtRat:
        neg = self.accept("-")
        if self.accept("oo"):
            return NEG_INF if neg else POS_INF
        if self.tok.kind != "num":
            raise self.error("expected a number or oo")
        q = Fraction(self.tok.text)
        self.i += 1
        return ExtRat.of(-q if neg else q)

    def constraint(self) -> LinConstraint:
        lhs = self.linexpr()
        t = self.tok
        if t.kind == "op" and t.text in ("<=", "<", ">=", ">", "=", "=="):
            self.i += 1
            return LinConstraint.make(lhs, t.text, self.linexpr())
        raise self.error("expected a comparison operator")

    def linexpr(self) -> LinExpr:
        neg = False
        if self.accept("-"):
            neg = True
        else:
            self.accept("+")
        e = self.term()
        if neg:
            e = -e
        while True:
            if self.accept("+"):
                e = e + self.term()
            elif self.accept("-"):
                e = e - self.term()
            else:
                return e

    def term(self) -> LinExpr:
        e = self.factor()
        while True:
            t = self.tok
            if self.accept("*"):
                f = self.factor()
                if e.is_constant:
                    e = f.scale(e.const)
                elif f.is_constant:
                    e = e.scale(f.const)
                else:
                    raise ParseError("nonlinear product", t.line, t.col)
            elif self.accept("/"):
                f = self.factor()
                if not f.is_constant or f.const == 0:
                    raise ParseError("division by a non-constant or zero", t.line, t.col)
                e = e.scale(1 / f.const)
            else:
                return e

    def factor(self) -> LinExpr:
        t = self.tok
        if t.kind == "num":
            self.i += 1
            return LinExpr.constant(Fraction(t.text))
        if t.kind == "ident":
            self.i += 1
            return LinExpr.var(self.var_ref(t))
        if self.accept("("):
            e = self.linexpr()
            self.expect(")")
            return e
        if self.accept("-"):
            return -self.factor()
        raise self.error("expected a number, variable or '('")


def parse_program(text: str, name: str = "program") -> Program:
    """Parse ``.pfa`` text into a validated :class:`Program`."""
    return _Parser(text).program(name)


# -- cut sets -----------------------------------------------------------------


def is_acyclic(nodes: Iterable[int], edges: Iterable[tuple[int, int]]) -> bool:
    ts: TopologicalSorter = TopologicalSorter()
    for n in nodes:
        ts.add(n)
    for a, b in edges:
        ts.add(b, a)
    try:
        ts.prepare()
    except CycleError:
        return False
    return True


def cuts_all_cycles(p: Program, cut: Iterable[NodeId]) -> bool:
    """True iff dropping every edge that enters ``cut`` leaves an acyclic graph."""
    cut = set(cut)
    return is_acyclic(
        (n.id for n in p.nodes), ((e.src, e.dst) for e in p.edges if e.dst not in cut)
    )


def select_widening_points(p: Program) -> set[NodeId]:
    """Targets of retreating edges of a depth-first traversal from the initial nodes."""
    succ: dict[int, list[int]] = {n.id: [] for n in p.nodes}
    for e in p.edges:
        succ[e.src].append(e.dst)
    color = {n.id: 0 for n in p.nodes}  # 0 white, 1 on stack, 2 done
    heads: set[NodeId] = set()

    def dfs(root: int) -> set[NodeId]:
        found: set[NodeId] = set()
        color[root] = 1
        stack = [(root, iter(succ[root]))]
        while stack:
            n, it = stack[-1]
            for m in it:
                if color[m] == 1:
                    found.add(m)
                elif color[m] == 0:
                    color[m] = 1
                    stack.append((m, iter(succ[m])))
                    break
            else:
                color[n] = 2
                stack.pop()
        return found

    for r in p.initial_nodes:
        if color[r] == 0:
            heads |= dfs(r)
    for n in p.nodes:
        if color[n.id] == 0:
            extra = dfs(n.id)
            if extra:
                names = ", ".join(p.nodes[h].name for h in sorted(extra))
                warnings.warn(UnreachableCycle(f"cycle through {names} is unreachable from every initial node"))
            heads |= extra
    return heads


@dataclass(frozen=True)
class CutSets:
    widening: frozenset[NodeId]
    abstraction: frozenset[NodeId]


def choose_abstraction_points(p: Program, pw: Iterable[NodeId], extra: Iterable[NodeId] = ()) -> CutSets:
    pw = frozenset(pw)
    pr = frozenset(pw | set(extra) | set(p.initial_nodes))
    valid_ids = {n.id for n in p.nodes}
    if not pr <= valid_ids:
        raise InvalidCutSet("unknown node in cut set")
    if not cuts_all_cycles(p, pw):
        raise InvalidCutSet("widening points do not cut every cycle")
    if not cuts_all_cycles(p, pr):
        raise InvalidCutSet("abstraction points do not cut every cycle")
    return CutSets(pw, pr)


def default_cuts(p: Program, extra: Iterable[NodeId] = ()) -> CutSets:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UnreachableCycle)
        pw = select_widening_points(p)
    return choose_abstraction_points(p, pw, extra)


# -- disconnected graph -------------------------------------------------------


@dataclass(frozen=True)
class DNode:
    id: int
    orig: NodeId
    kind: str  # "src", "dst" or "inner"
    name: str


@dataclass(frozen=True)
class DEdge:
    id: int
    src: int
    dst: int
    orig: int
    body: tuple[Command, ...]


@dataclass
class DisconnectedGraph:
    program: Program
    cuts: CutSets
    nodes: list[DNode]
    edges: list[DEdge]
    source_of: dict[NodeId, int] = field(default_factory=dict)
    sink_of: dict[NodeId, int] = field(default_factory=dict)
    inner_of: dict[NodeId, int] = field(default_factory=dict)

    def out_edges(self, d: int) -> list[DEdge]:
        return [e for e in self.edges if e.src == d]

    def in_edges(self, d: int) -> list[DEdge]:
        return [e for e in self.edges if e.dst == d]

    def topological_order(self) -> list[int]:
        ts: TopologicalSorter = TopologicalSorter()
        for n in self.nodes:
            ts.add(n.id)
        for e in self.edges:
            ts.add(e.dst, e.src)
        return list(ts.static_order())

    def reachable_sinks(self, src: int) -> list[NodeId]:
        """Original abstraction nodes whose destination copy is reachable from ``src``."""
        seen = {src}
        todo = [src]
        while todo:
            n = todo.pop()
            for e in self.out_edges(n):
                if e.dst not in seen:
                    seen.add(e.dst)
                    todo.append(e.dst)
        return sorted(self.nodes[d].orig for d in seen if self.nodes[d].kind == "dst")


def disconnect(p: Program, cuts: CutSets) -> DisconnectedGraph:
    """Split every abstraction node into a source copy and a destination copy."""
    nodes: list[DNode] = []
    g = DisconnectedGraph(p, cuts, nodes, [])
    for n in p.nodes:
        if n.id in cuts.abstraction:
            g.source_of[n.id] = len(nodes)
            nodes.append(DNode(len(nodes), n.id, "src", n.name + "^s"))
            g.sink_of[n.id] = len(nodes)
            nodes.append(DNode(len(nodes), n.id, "dst", n.name + "^d"))
        else:
            g.inner_of[n.id] = len(nodes)
            nodes.append(DNode(len(nodes), n.id, "inner", n.name))
    for e in p.edges:
        src = g.source_of.get(e.src, g.inner_of.get(e.src))
        dst = g.sink_of.get(e.dst, g.inner_of.get(e.dst))
        g.edges.append(DEdge(len(g.edges), src, dst, e.id, e.body))
    if not is_acyclic((n.id for n in nodes), ((e.src, e.dst) for e in g.edges)):
        raise CycleRemains("the disconnected graph still has a cycle")
    return g
