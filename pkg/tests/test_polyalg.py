"""Core polynomial/series layer.

Multiplication and substitution are checked against the evaluation
homomorphism at rational points (exact arithmetic, so equality is exact);
derivatives and truncated exp against sympy as an independent engine.
"""

from fractions import Fraction

import pytest
import sympy
from hypothesis import given, settings, strategies as st

from bergtoep.polyalg import (CRat, KSeries, WirtingerPoly, exp_truncated,
                              inverse_truncated, log_truncated, real_dx,
                              real_dy)


# --------------------------------------------------------------------- CRat

small_fracs = st.fractions(min_value=-4, max_value=4, max_denominator=6)
crats = st.builds(CRat, small_fracs, small_fracs)


@given(crats, crats, crats)
def test_crat_field_axioms(a, b, c):
    assert (a + b) * c == a * c + b * c
    assert a * (b * c) == (a * b) * c
    assert a + b == b + a
    if not b.is_zero:
        assert (a / b) * b == a


@given(crats, crats)
def test_crat_conjugate_multiplicative(a, b):
    assert (a * b).conjugate() == a.conjugate() * b.conjugate()
    assert complex(a).conjugate() == complex(a.conjugate())


def test_crat_mixed_arithmetic():
    assert CRat(1, 2) + Fraction(1, 3) == CRat(Fraction(4, 3), 2)
    assert CRat(0, 1) * CRat(0, 1) == CRat(-1)
    assert CRat(3, 4) * 2 == CRat(6, 8)
    # degrade to complex on float contact
    assert isinstance(CRat(1, 1) * 0.5, complex)
    assert CRat(1, 2) ** 2 == CRat(-3, 4)
    assert 1 / CRat(0, 1) == CRat(0, -1)


# ------------------------------------------------------------ poly strategies

def poly_strategy(nvars, max_terms=5, max_exp=3):
    exps = st.tuples(*[st.integers(0, max_exp) for _ in range(nvars)])
    term = st.tuples(exps, exps, crats)
    def build(terms):
        p = WirtingerPoly.zero(nvars)
        for a, b, c in terms:
            p = p + WirtingerPoly.monomial(nvars, a, b, c)
        return p
    return st.lists(term, max_size=max_terms).map(build)


points = st.tuples(small_fracs, small_fracs).map(lambda t: CRat(t[0], t[1]))


def pair_points(nvars):
    return st.tuples(st.tuples(*[points for _ in range(nvars)]),
                     st.tuples(*[points for _ in range(nvars)]))


@settings(max_examples=60)
@given(poly_strategy(2), poly_strategy(2), pair_points(2))
def test_mul_is_evaluation_homomorphism(p, q, pt):
    av, bv = pt
    lhs = (p * q).eval_pair(av, bv)
    assert lhs == p.eval_pair(av, bv) * q.eval_pair(av, bv)


@settings(max_examples=40)
@given(poly_strategy(2), poly_strategy(2), poly_strategy(2))
def test_ring_axioms(p, q, r):
    assert (p + q) * r == p * r + q * r
    assert (p * q) * r == p * (q * r)
    assert p * q == q * p
    assert p - p == WirtingerPoly.zero(2)


@settings(max_examples=30)
@given(poly_strategy(1), st.integers(0, 4))
def test_pow_matches_repeated_mul(p, n):
    expected = WirtingerPoly.const(1, 1)
    for _ in range(n):
        expected = expected * p
    assert p ** n == expected


@settings(max_examples=40)
@given(poly_strategy(2), poly_strategy(2), st.integers(0, 6))
def test_mul_truncated_agrees_with_full_product(p, q, d):
    assert p.mul_truncated(q, d) == (p * q).truncate(d)


def test_degree_valuation_constant():
    p = WirtingerPoly.monomial(2, (1, 0), (0, 2), CRat(1)) + WirtingerPoly.const(2, CRat(5))
    assert p.degree() == 3
    assert p.valuation() == 0
    assert p.constant_term() == CRat(5)
    assert WirtingerPoly.zero(2).degree() == -1
    assert WirtingerPoly.zero(2).valuation() is None
    assert p.homogeneous_part(3).degree() == 3
    assert p.homogeneous_part(1).is_zero


# -------------------------------------------------------- derivative oracles

def _sym_scalar(c):
    if isinstance(c, CRat):
        return sympy.Rational(c.re) + sympy.I * sympy.Rational(c.im)
    return sympy.Rational(c)


def _to_sympy(p, asyms, bsyms):
    e = sympy.Integer(0)
    for (a, b), c in p.terms.items():
        cc = _sym_scalar(c)
        m = sympy.Integer(1)
        for j, ex in enumerate(a):
            m *= asyms[j] ** ex
        for j, ex in enumerate(b):
            m *= bsyms[j] ** ex
        e += cc * m
    return sympy.expand(e)


@settings(max_examples=10, deadline=None)
@given(poly_strategy(2, max_terms=4, max_exp=2), st.integers(0, 1))
def test_derive_alpha_beta_match_sympy(p, j):
    asyms = sympy.symbols("a0 a1")
    bsyms = sympy.symbols("b0 b1")
    e = _to_sympy(p, asyms, bsyms)
    assert _to_sympy(p.derive_alpha(j), asyms, bsyms) == sympy.expand(sympy.diff(e, asyms[j]))
    assert _to_sympy(p.derive_beta(j), asyms, bsyms) == sympy.expand(sympy.diff(e, bsyms[j]))


@settings(max_examples=10, deadline=None)
@given(poly_strategy(1, max_terms=4, max_exp=2))
def test_real_derivatives_match_sympy_chain_rule(p):
    # p(z, zbar) with z = x + i y; real_dx/real_dy must match d/dx, d/dy.
    x, y = sympy.symbols("x y", real=True)
    z = x + sympy.I * y
    zb = x - sympy.I * y
    e = _to_sympy(p, [z], [zb])
    got_dx = _to_sympy(real_dx(p, 0), [z], [zb])
    got_dy = _to_sympy(real_dy(p, 0), [z], [zb])
    assert sympy.simplify(got_dx - sympy.diff(e, x)) == 0
    assert sympy.simplify(got_dy - sympy.diff(e, y)) == 0


def test_wirtinger_on_modulus_squared():
    # d/dz (z zbar) = zbar, d/dzbar (z zbar) = z
    p = WirtingerPoly.monomial(1, (1,), (1,), CRat(1))
    assert p.derive_alpha(0) == WirtingerPoly.conj_variable(1, 0, CRat(1))
    assert p.derive_beta(0) == WirtingerPoly.variable(1, 0, CRat(1))


# ------------------------------------------------------------- substitution

@settings(max_examples=40, deadline=None)
@given(poly_strategy(1, max_terms=3, max_exp=2),
       poly_strategy(2, max_terms=3, max_exp=1),
       poly_strategy(2, max_terms=3, max_exp=1),
       pair_points(2))
def test_subs_pair_matches_eval_composition(p, A, B, pt):
    av, bv = pt
    composed = p.subs_pair([A], [B])
    lhs = composed.eval_pair(av, bv)
    rhs = p.eval_pair([A.eval_pair(av, bv)], [B.eval_pair(av, bv)])
    assert lhs == rhs


def test_subs_pair_truncation():
    p = WirtingerPoly.monomial(1, (3,), (0,), CRat(1))
    A = WirtingerPoly.variable(1, 0) + WirtingerPoly.const(1, CRat(1))
    full = p.subs_pair([A], [WirtingerPoly.zero(1)])
    trunc = p.subs_pair([A], [WirtingerPoly.zero(1)], max_degree=2)
    assert trunc == full.truncate(2)


def test_embed_and_restrict():
    p = WirtingerPoly.monomial(1, (2,), (1,), CRat(3))
    q = p.embed(3, 1)
    assert q.coeff((0, 2, 0), (0, 1, 0)) == CRat(3)
    assert q.restrict_zero([1]).is_zero
    assert q.restrict_zero([0, 2]) == q


def test_conj_z_pointwise():
    p = (WirtingerPoly.variable(1, 0, CRat(2, 1))
         + WirtingerPoly.monomial(1, (1,), (2,), CRat(0, 3)))
    x = [complex(0.3, -0.7)]
    y = [complex(-1.1, 0.4)]
    q = p.conj_z()
    assert abs(complex(q.eval_z(x, x)) - complex(p.eval_z(x, x)).conjugate()) < 1e-12
    assert abs(complex(q.eval_z(x, y)) - complex(p.eval_z(y, x)).conjugate()) < 1e-12


# ------------------------------------------------------- truncated functions

@settings(max_examples=8, deadline=None)
@given(poly_strategy(1, max_terms=3, max_exp=2).filter(
    lambda p: p.constant_term() == 0 and not p.is_zero))
def test_exp_truncated_matches_sympy_series(p):
    D = 4
    t = sympy.Symbol("t")
    a0 = sympy.Symbol("a0")
    b0 = sympy.Symbol("b0")
    e = _to_sympy(p, [t * a0], [t * b0])
    want = sympy.series(sympy.exp(e), t, 0, D + 1).removeO()
    got = _to_sympy(exp_truncated(p, D), [t * a0], [t * b0])
    assert sympy.expand(got - want) == 0


def test_exp_truncated_rejects_constant_term():
    with pytest.raises(ValueError):
        exp_truncated(WirtingerPoly.const(1, CRat(1)), 3)


@settings(max_examples=20, deadline=None)
@given(poly_strategy(1, max_terms=3, max_exp=2).filter(
    lambda p: not (p.constant_term() == 0)))
def test_inverse_truncated_is_right_inverse(p):
    D = 5
    inv = inverse_truncated(p, D)
    assert (p * inv).truncate(D) == WirtingerPoly.const(1, CRat(1))


def test_log_exp_roundtrip():
    p = (WirtingerPoly.variable(1, 0, CRat(1, 2))
         + WirtingerPoly.monomial(1, (1,), (1,), CRat(-1, 3)))
    D = 6
    q = WirtingerPoly.const(1, CRat(1)) + p
    assert exp_truncated(log_truncated(q, D), D) == q.truncate(D)


# ---------------------------------------------------------------------- JSON

def test_records_roundtrip_and_canonical_order():
    p = (WirtingerPoly.monomial(2, (0, 1), (1, 0), 2.5)
         + WirtingerPoly.monomial(2, (1, 0), (0, 0), -1.0)
         + WirtingerPoly.const(2, complex(0, 3)))
    recs = p.to_records()
    degs = [sum(r["a"]) + sum(r["b"]) for r in recs]
    assert degs == sorted(degs)
    q = WirtingerPoly.from_records(2, recs)
    assert q == p
    # exact parse keeps binary float values exactly
    qe = WirtingerPoly.from_records(2, recs, exact=True)
    assert complex(qe.coeff((0, 1), (1, 0))) == 2.5


def test_records_reject_bad_exponents():
    with pytest.raises(ValueError):
        WirtingerPoly.from_records(2, [{"a": [1], "b": [0, 0], "re": 1.0, "im": 0.0}])
    with pytest.raises(ValueError):
        WirtingerPoly.from_records(1, [{"a": [-1], "b": [0], "re": 1.0, "im": 0.0}])


# ------------------------------------------------------------------- KSeries

def test_kseries_product_leading_power_adds():
    s = KSeries(2, [CRat(1), CRat(3)])          # k^2 + 3k
    t = KSeries(-1, [CRat(2), CRat(0), CRat(5)])  # 2/k + 5/k^3
    prod = s * t
    assert prod.lead == s.lead + t.lead
    assert prod.kpow(1) == CRat(2)
    assert prod.kpow(0) == CRat(6)
    assert prod.kpow(-1) == CRat(5)
    assert prod.kpow(-2) == CRat(15)
    assert prod.kpow(5) == 0


@given(st.lists(small_fracs, min_size=1, max_size=4),
       st.lists(small_fracs, min_size=1, max_size=4),
       st.integers(-2, 2), st.integers(-2, 2))
def test_kseries_eval_homomorphism(c1, c2, l1, l2):
    s = KSeries(l1, [CRat(c) for c in c1])
    t = KSeries(l2, [CRat(c) for c in c2])
    k = 1.7
    assert abs((s * t).eval_at(k) - s.eval_at(k) * t.eval_at(k)) < 1e-9
    assert abs((s + t).eval_at(k) - (s.eval_at(k) + t.eval_at(k))) < 1e-9


def test_kseries_normalization_and_truncate():
    s = KSeries(3, [CRat(0), CRat(1), CRat(0), CRat(2), CRat(0)])
    assert s.lead == 2
    assert s.powers() == [2, 1, 0]
    assert s.truncation_order == 2
    assert s.truncate_below(1).coeffs == [CRat(1)]
    poly_series = KSeries(1, [WirtingerPoly.variable(1, 0, CRat(1))])
    prod = poly_series.mul(poly_series, max_degree=1)
    assert prod.is_zero
