import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import bench
from pathfocus.ir import (
    Assign,
    Assume,
    CutSets,
    CycleRemains,
    Edge,
    Havoc,
    InvalidCutSet,
    Node,
    ParseError,
    Program,
    UnreachableCycle,
    ValidationError,
    choose_abstraction_points,
    default_cuts,
    disconnect,
    parse_program,
    select_widening_points,
)
from pathfocus.numeric import Rel, Sort, VarId


quiet = pytest.mark.filterwarnings("ignore::pathfocus.ir.UnreachableCycle")


def kahn_acyclic(nodes, edges) -> bool:
    indeg = {n: 0 for n in nodes}
    succ = {n: [] for n in nodes}
    for a, b in edges:
        indeg[b] += 1
        succ[a].append(b)
    ready = [n for n, d in indeg.items() if d == 0]
    seen = 0
    while ready:
        n = ready.pop()
        seen += 1
        for m in succ[n]:
            indeg[m] -= 1
            if indeg[m] == 0:
                ready.append(m)
    return seen == len(indeg)


def graph_program(n: int, arcs, init=(0,)) -> Program:
    x = VarId(0, "x")
    nodes = tuple(Node(i, f"n{i}", () if i in init else None) for i in range(n))
    edges = tuple(Edge(k, a, b) for k, (a, b) in enumerate(arcs))
    return Program((x,), nodes, edges)


CIRCULAR_TEXT = """
vars x: int;
node p1 init {};
node p2;
node p3;
from p1 to p2 { x := 0; };
from p2 to p2 { };
from p2 to p3 { x := x + 1; };
from p3 to p2 { assume x < 100; };
from p3 to p2 { assume x >= 100; x := 0; };
"""


class TestParse:
    def test_circular(self):
        p = parse_program(CIRCULAR_TEXT, "circular")
        assert len(p.nodes) == 3
        assert len(p.edges) == 5
        assert p.nodes[0].initial == ()
        assert p.nodes[1].initial is None

    def test_circular_without_idle_edge(self):
        assert len(bench("circular_det").edges) == 4

    def test_empty(self):
        with pytest.raises(ParseError):
            parse_program("")

    def test_error_position(self):
        with pytest.raises(ParseError) as info:
            parse_program("vars x: int;\nnode a init {};\nfrom a to a { x := ; };")
        assert info.value.line == 3

    def test_boustrophedon_guard_split(self):
        p = bench("boustrophedon")
        assert [v.name for v in p.variables] == ["x", "d"]
        head = p.node_named("head").id
        loops = [e for e in p.edges if e.src == head and e.dst == head]
        assert len(loops) == 5
        guards = [[c.cond for c in e.body if isinstance(c, Assume)] for e in loops]
        x = p.var_named("x")
        for v in (-5, 0, 500, 1000, 1005):
            hits = [g for g in guards if all(c.holds({x: Fraction(v)}) for c in g)]
            assert len(hits) == 1

    def test_decimal_and_nondet(self):
        p = parse_program("vars x: rat; node a init {x >= 0.01}; from a to a { x := nondet(-oo, 2.5); };")
        (c,) = p.nodes[0].initial
        assert c.holds({p.variables[0]: Fraction(1, 100)})
        assert not c.holds({p.variables[0]: Fraction(1, 101)})
        (h,) = p.edges[0].body
        assert isinstance(h, Havoc) and not h.lo.is_finite and h.hi.value == Fraction(5, 2)

    def test_greater_is_normalized(self):
        p = parse_program("vars x: int; node a init {x > 3};")
        (c,) = p.nodes[0].initial
        assert c.rel is Rel.LT

    def test_comments(self):
        p = parse_program("# header\nvars x: int; # trailing\nnode a init {};")
        assert len(p.nodes) == 1

    @pytest.mark.parametrize(
        "text",
        [
            "vars x: int; node a init {y <= 0};",
            "vars x: int; node a init {}; node a;",
            "vars x: int; node a init {}; from a to b { };",
            "vars x: int, x: rat; node a init {};",
            "vars x: int; node a;",
        ],
    )
    def test_validation(self, text):
        with pytest.raises(ValidationError):
            parse_program(text)

    def test_sorts(self):
        p = parse_program("vars a: int, b: rat; node n init {};")
        assert [v.sort for v in p.variables] == [Sort.INT, Sort.RAT]
        assert [v.index for v in p.variables] == [0, 1]


class TestWideningPoints:
    def test_circular(self):
        p = parse_program(CIRCULAR_TEXT)
        assert select_widening_points(p) == {p.node_named("p2").id}

    def test_acyclic(self):
        assert select_widening_points(graph_program(2, [(0, 1)])) == set()

    def test_nested_loops_share_header(self):
        p = graph_program(4, [(0, 1), (1, 2), (2, 1), (2, 3), (3, 1)])
        heads = select_widening_points(p)
        assert heads == {1}
        arcs = [(e.src, e.dst) for e in p.edges if e.dst not in heads]
        assert kahn_acyclic(range(4), arcs)

    def test_unreachable_cycle_warns(self):
        p = graph_program(3, [(1, 2), (2, 1)])
        with pytest.warns(UnreachableCycle):
            heads = select_widening_points(p)
        assert heads & {1, 2}

    @quiet
    @settings(max_examples=60, deadline=None)
    @given(st.integers(2, 50), st.data())
    def test_cut_property(self, n, data):
        arcs = data.draw(st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=3 * n))
        p = graph_program(n, arcs)
        heads = select_widening_points(p)
        kept = [(a, b) for a, b in arcs if b not in heads]
        assert kahn_acyclic(range(n), kept)


class TestAbstractionPoints:
    def test_circular_default(self):
        p = parse_program(CIRCULAR_TEXT)
        cuts = default_cuts(p)
        assert cuts.widening == {1}
        assert cuts.abstraction == {0, 1}

    def test_acyclic_single_init(self):
        p = graph_program(3, [(0, 1), (1, 2)])
        assert choose_abstraction_points(p, set()).abstraction == {0}

    def test_extra(self):
        p = parse_program(CIRCULAR_TEXT)
        cuts = choose_abstraction_points(p, {1}, {2})
        assert cuts.abstraction == {0, 1, 2}
        kept = [(e.src, e.dst) for e in p.edges if e.dst not in cuts.abstraction]
        assert kahn_acyclic(range(3), kept)

    def test_not_cutting(self):
        with pytest.raises(InvalidCutSet):
            choose_abstraction_points(parse_program(CIRCULAR_TEXT), set())


class TestDisconnect:
    def test_circular_shape(self):
        p = parse_program(CIRCULAR_TEXT)
        g = disconnect(p, default_cuts(p))
        assert sorted(n.name for n in g.nodes) == ["p1^d", "p1^s", "p2^d", "p2^s", "p3"]
        named = {n.id: n.name for n in g.nodes}
        arcs = sorted((named[e.src], named[e.dst], e.orig) for e in g.edges)
        assert arcs == [
            ("p1^s", "p2^d", 0),
            ("p2^s", "p2^d", 1),
            ("p2^s", "p3", 2),
            ("p3", "p2^d", 3),
            ("p3", "p2^d", 4),
        ]

    def test_isolated_node(self):
        p = graph_program(1, [])
        g = disconnect(p, default_cuts(p))
        assert [n.kind for n in g.nodes] == ["src", "dst"]
        assert g.edges == []

    def test_cycle_remains(self):
        p = graph_program(3, [(0, 1), (1, 2), (2, 1)])
        with pytest.raises(CycleRemains):
            disconnect(p, CutSets(frozenset(), frozenset({0})))

    @quiet
    @settings(max_examples=40, deadline=None)
    @given(st.integers(2, 12), st.data())
    def test_paths_project_to_original(self, n, data):
        arcs = data.draw(st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), min_size=1, max_size=3 * n))
        p = graph_program(n, arcs)
        cuts = default_cuts(p)
        g = disconnect(p, cuts)
        assert kahn_acyclic([d.id for d in g.nodes], [(e.src, e.dst) for e in g.edges])
        rng = random.Random(data.draw(st.integers(0, 2**16)))
        for _ in range(10):
            d = rng.choice(g.nodes)
            walk = []
            while g.out_edges(d.id):
                e = rng.choice(g.out_edges(d.id))
                walk.append(e)
                d = g.nodes[e.dst]
            # extend backwards to a start node
            start = walk[0].src if walk else d.id
            while g.in_edges(start):
                e = rng.choice(g.in_edges(start))
                walk.insert(0, e)
                start = e.src
            if not walk:
                continue
            first, last = g.nodes[walk[0].src], g.nodes[walk[-1].dst]
            # maximal walks end at a destination copy unless the original graph dead-ends there
            assert first.kind == "src" or not p.in_edges(first.orig)
            assert last.kind == "dst" or not p.out_edges(last.orig)
            for a, b in zip(walk, walk[1:]):
                assert a.dst == b.src
                assert p.edges[a.orig].dst == p.edges[b.orig].src
                assert p.edges[a.orig].dst not in cuts.abstraction


def test_commands_are_typed():
    p = parse_program("vars x: int; node a init {}; from a to a { assume x < 3; x := 2*x - 1; x := nondet(0, 4); };")
    kinds = [type(c) for c in p.edges[0].body]
    assert kinds == [Assume, Assign, Havoc]
