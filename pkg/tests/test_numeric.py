from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from pathfocus.numeric import (
    NEG_INF,
    POS_INF,
    ExtRat,
    LinConstraint,
    LinExpr,
    Rel,
    Sort,
    UnboundVariable,
    VarId,
    eval_linexpr,
    integer_scaled,
    negate_constraint,
    normalize_int,
    rat,
    substitute,
)

X = VarId(0, "x")
Y = VarId(1, "y")
Z = VarId(2, "z")
R = VarId(3, "r", Sort.RAT)
VARS = (X, Y, Z)

fracs = st.fractions(min_value=-50, max_value=50, max_denominator=12)


@st.composite
def linexprs(draw):
    coeffs = {v: draw(fracs) for v in draw(st.sets(st.sampled_from(VARS)))}
    return LinExpr.from_map(coeffs, draw(fracs))


envs = st.fixed_dictionaries({v: fracs for v in VARS})


def lin(x=0, y=0, c=0):
    return LinExpr.from_map({X: x, Y: y}, c)


class TestEval:
    def test_affine(self):
        assert eval_linexpr(lin(x=2, c=-3), {X: Fraction(5)}) == 7

    def test_empty_expression(self):
        assert eval_linexpr(LinExpr(), {}) == 0

    def test_rational_weights(self):
        e = LinExpr.from_map({X: Fraction(1, 3), Y: Fraction(1, 6)})
        got = eval_linexpr(e, {X: Fraction(1, 2), Y: Fraction(1)})
        # a/b + c/d = (a*d + c*b) / (b*d) with 1/6 and 1/6
        assert got == Fraction(1 * 6 + 1 * 6, 6 * 6) == Fraction(1, 3)

    def test_unbound(self):
        with pytest.raises(UnboundVariable):
            eval_linexpr(lin(x=1), {})


class TestSubstitute:
    def test_shift(self):
        assert substitute(lin(x=1, y=1), X, lin(x=1, c=1)) == lin(x=1, y=1, c=1)

    def test_to_zero(self):
        out = substitute(lin(x=2), X, LinExpr.constant(0))
        assert out.terms == () and out.const == 0

    def test_commutes_guard_across_increment(self):
        out = substitute(lin(x=1, c=-100), X, lin(x=1, c=1))
        assert out == lin(x=1, c=-99)
        # "x := x+1; assume x < 100" versus "assume x < 99; x := x+1"
        for k in range(-5, 106):
            assert (k + 1 < 100) == (k < 99)

    @given(linexprs(), linexprs(), st.sampled_from(VARS), envs)
    def test_homomorphism(self, e, r, v, env):
        lhs = eval_linexpr(substitute(e, v, r), env)
        rhs = eval_linexpr(e, {**env, v: eval_linexpr(r, env)})
        assert lhs == rhs

    @given(linexprs(), linexprs(), st.sampled_from(VARS))
    def test_no_zero_coefficients(self, e, r, v):
        assert all(k != 0 for _, k in substitute(e, v, r).terms)


class TestNegate:
    def test_le(self):
        assert negate_constraint(LinConstraint(lin(x=1, c=-1), Rel.LE)) == (
            LinConstraint(lin(x=-1, c=1), Rel.LT),
        )

    def test_eq_splits(self):
        got = negate_constraint(LinConstraint(lin(x=1), Rel.EQ))
        assert set(got) == {LinConstraint(lin(x=1), Rel.LT), LinConstraint(lin(x=-1), Rel.LT)}

    def test_lt_truth_table(self):
        c = LinConstraint(lin(x=1, c=-99), Rel.LT)
        (n,) = negate_constraint(c)
        assert n == LinConstraint(lin(x=-1, c=99), Rel.LE)
        for k in (98, 99, 100):
            env = {X: Fraction(k)}
            assert c.holds(env) != n.holds(env)

    @given(linexprs(), st.sampled_from(list(Rel)), envs)
    def test_exact_complement(self, e, rel, env):
        c = LinConstraint(e, rel)
        assert c.holds(env) != any(n.holds(env) for n in negate_constraint(c))


class TestRationals:
    @given(st.integers(-10**6, 10**6), st.integers(1, 10**6), st.integers(-10**6, 10**6), st.integers(1, 10**6))
    def test_order_matches_cross_multiplication(self, a, b, c, d):
        p, q = rat(Fraction(a, b)), rat(Fraction(c, d))
        assert (p < q) == (a * d < c * b)
        assert p.denominator > 0 and rat(p) == p

    def test_decimal_literals_are_exact(self):
        assert rat("0.01") == Fraction(1, 100)
        assert rat("-2.50") == Fraction(-5, 2)

    def test_canonical_zero(self):
        z = rat(Fraction(0, 7))
        assert (z.numerator, z.denominator) == (0, 1)


class TestExtRat:
    def test_total_order(self):
        xs = [POS_INF, ExtRat.of(3), NEG_INF, ExtRat.of(Fraction(-1, 2))]
        assert sorted(xs) == [NEG_INF, ExtRat.of(Fraction(-1, 2)), ExtRat.of(3), POS_INF]

    @given(fracs, fracs)
    def test_finite_order(self, a, b):
        assert (ExtRat.of(a) < ExtRat.of(b)) == (a < b)
        assert NEG_INF < ExtRat.of(a) < POS_INF


class TestIntegerForms:
    def test_strict_to_closed(self):
        c = normalize_int(LinConstraint(lin(x=1), Rel.LT))
        assert c == LinConstraint(lin(x=1, c=1), Rel.LE)

    def test_fractional_coefficients_scaled_first(self):
        # x/2 - 1/3 < 0 over the integers is x <= 0
        e = LinExpr.from_map({X: Fraction(1, 2)}, Fraction(-1, 3))
        assert normalize_int(LinConstraint(e, Rel.LT)) == LinConstraint(lin(x=1), Rel.LE)

    def test_rational_variables_untouched(self):
        c = LinConstraint(LinExpr.var(R), Rel.LT)
        assert normalize_int(c) == c

    def test_unsolvable_equality(self):
        c = normalize_int(LinConstraint(lin(x=2, c=-1), Rel.EQ))
        assert not c.holds({})

    @given(linexprs(), st.sampled_from(list(Rel)), st.fixed_dictionaries({v: st.integers(-30, 30) for v in VARS}))
    def test_equivalent_on_integers(self, e, rel, ienv):
        env = {v: Fraction(k) for v, k in ienv.items()}
        c = LinConstraint(e, rel)
        assert c.holds(env) == normalize_int(c).holds(env)

    @given(linexprs())
    def test_integer_scaled_is_positive_multiple(self, e):
        s = integer_scaled(e)
        vals = [k for _, k in s.terms] + [s.const]
        assert all(k.denominator == 1 for k in vals)
        if any(vals):
            ratio = {k / k0 for (_, k), (_, k0) in zip(s.terms, e.terms)}
            assert len(ratio) <= 1 and all(r > 0 for r in ratio)
