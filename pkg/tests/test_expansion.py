"""Expansion machinery tests.

The headline cross-check rebuilds the diagonal coefficients through a second
decomposition (direct Neumann factors 1 - rho per slot, rho the full weight
density ratio) sharing only the slot Laplacian with the library, and demands
exact agreement with the chain-factor route.
"""

import random
from fractions import Fraction
from math import factorial, pi

import numpy as np
import pytest

from bergtoep.errors import BudgetError, PreconditionError
from bergtoep.expansion import (ChainFactor, ExpansionResult, a1_closed_form,
                                a1_from_curvature, a1_ratio,
                                bergman_diagonal_coeffs, build_u, chain_factor,
                                delta_l_apply, scalar_curvature_center)
from bergtoep.gaussian_engine import chain_phase, lj_apply, realify
from bergtoep.polyalg import CRat, KSeries, WirtingerPoly
from bergtoep.weights import (WeightSpec, cubic_quartic_weight, flat_weight,
                              quartic_weight, quartic_weight_2d,
                              volume_bump_weight)


def poly_eq(p, q):
    return (p - q).is_zero


# --------------------------------------------------------------- chain factor


def test_flat_weight_gives_zero_factor():
    cf = chain_factor(flat_weight(), 6, 2)
    assert cf.is_zero
    u = build_u(flat_weight(), 3, 6, 2)
    assert u.is_zero


def test_quartic_factor_leading_term():
    w = quartic_weight()  # phi1 = z^2 zbar^2 / 10
    cf = chain_factor(w, 8, 3)
    k1 = cf.series.kpow(1)
    want = (WirtingerPoly.monomial(2, (2, 0), (2, 0), Fraction(1, 5))
            + WirtingerPoly.monomial(2, (0, 2), (0, 2), Fraction(-1, 5)))
    assert poly_eq(k1, want)
    assert cf.series.kpow(0, None) is None  # vol = 1: no k^0 part


def test_volume_factor_k0_term():
    eps = Fraction(1, 10)
    vol = (WirtingerPoly.const(1, 1)
           + WirtingerPoly.variable(1, 0, eps)
           + WirtingerPoly.conj_variable(1, 0, eps))
    w = WeightSpec((1,), vol=vol)
    cf = chain_factor(w, 6, 2)
    k0 = cf.series.kpow(0)
    assert k0.coeff((1, 0), (0, 0)) == CRat(-eps)   # -eps * x
    assert k0.coeff((0, 0), (1, 0)) == CRat(-eps)   # -eps * xbar
    assert k0.coeff((0, 1), (0, 0)) == CRat(eps)    # +eps * y
    assert k0.coeff((0, 0), (0, 1)) == CRat(eps)    # +eps * ybar
    # second order of vol(x)^{-1}: +2 eps^2 x xbar
    assert k0.coeff((1, 0), (1, 0)) == CRat(2 * eps * eps)


def test_factor_budget_validation():
    with pytest.raises(BudgetError):
        chain_factor(quartic_weight(), 0, 2)


# -------------------------------------------------------------------- build_u


def test_single_slot_chain_closes_at_center():
    w = quartic_weight()
    u = build_u(w, 1, 8, 3)
    k1 = u.kpow(1)
    want = WirtingerPoly.monomial(1, (2,), (2,), Fraction(1, 5))
    assert poly_eq(k1, want)


def test_two_slot_chain_cross_products():
    w = quartic_weight()
    u = build_u(w, 2, 8, 3)
    # the product of two k^1 factor coefficients lands at k^2; there is no
    # k^1 term because each factor starts at k^1 when vol = 1
    assert u.kpow(1, None) is None
    k2 = u.kpow(2)
    c2 = Fraction(1, 25)
    assert k2.coeff((2, 2), (2, 2)) == CRat(c2)
    assert k2.coeff((0, 4), (0, 4)) == CRat(-c2)


def test_chain_needs_positive_length():
    with pytest.raises(PreconditionError):
        build_u(quartic_weight(), 0, 6, 2)


# ------------------------------------------------------------- slot Laplacian


def test_delta_pinned_values():
    p = WirtingerPoly.monomial(1, (1,), (1,), 1)
    assert delta_l_apply(p, (Fraction(1),), 1, 1) == 1
    q = WirtingerPoly.monomial(1, (2,), (2,), 1)
    assert delta_l_apply(q, (Fraction(1),), 1, 2) == 4
    cross = WirtingerPoly.monomial(2, (0, 1), (1, 0), 1)  # wbar^1 w^2
    assert delta_l_apply(cross, (Fraction(1),), 2, 1) == 1
    assert delta_l_apply(p, (Fraction(2),), 1, 1) == Fraction(1, 2)


def test_delta_on_kseries_maps_coefficients():
    p = WirtingerPoly.monomial(1, (1,), (1,), 1)
    q = WirtingerPoly.monomial(1, (2,), (2,), 1)
    s = KSeries(1, [p, q])
    out = delta_l_apply(s, (Fraction(1),), 1, 1)
    assert out.kpow(1) == 1
    assert out.kpow(0) == 0  # delta of w^2 wbar^2 has no constant part


def test_delta_rejects_wrong_alphabet():
    p = WirtingerPoly.monomial(3, (1, 0, 0), (1, 0, 0), 1)
    with pytest.raises(PreconditionError):
        delta_l_apply(p, (1.0,), 2, 1)


def random_chain_poly(rng, nvars, max_degree, count=8):
    p = WirtingerPoly.zero(nvars)
    for _ in range(count):
        a = [0] * nvars
        b = [0] * nvars
        budget = rng.randrange(max_degree + 1)
        for _ in range(budget):
            side = a if rng.random() < 0.5 else b
            side[rng.randrange(nvars)] += 1
        c = complex(rng.uniform(-1, 1), rng.uniform(-1, 1))
        p = p + WirtingerPoly.monomial(nvars, tuple(a), tuple(b), c)
    return p


def test_delta_matches_phase_engine_normalization():
    # cross-engine identity: 2^{-j}/j! Delta^j == L_j of the chain phase
    rng = random.Random(20240812)
    for n, lam in ((1, (0.7,)), (2, (1.0, 2.0))):
        for ell in (1, 2, 3):
            phase = chain_phase(lam, ell)
            for j in (1, 2, 3, 4):
                p = random_chain_poly(rng, ell * n, 2 * j)
                lhs = lj_apply(phase, realify(p), j)
                rhs = complex(delta_l_apply(p, lam, ell, j))
                rhs *= 0.5 ** j / factorial(j)
                assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))


# --------------------------------------------------------- diagonal expansion


def test_flat_weight_expansion_is_exactly_the_model():
    res = bergman_diagonal_coeffs(flat_weight(), 2)
    assert res.ratios[0] == Fraction(1)
    assert res.ratios[1] == 0
    assert res.ratios[2] == 0
    assert abs(res.coefficients[0] - 1 / pi) < 1e-15
    assert res.partial_sum_at(10.0).real == pytest.approx(10.0 / pi, rel=1e-12)


def test_quartic_fixture_first_coefficient():
    res = bergman_diagonal_coeffs(quartic_weight(), 1)
    assert res.ratios[1] == Fraction(1, 10)
    assert abs(res.coefficients[1] - 0.1 / pi) < 1e-15
    rows = res.contributions[1]
    assert [(r["j"], r["l"]) for r in rows] == [(2, 1)]


def test_volume_bump_first_coefficient():
    res = bergman_diagonal_coeffs(volume_bump_weight(), 1)
    assert res.ratios[1] == Fraction(-1, 20)
    rows = res.contributions[1]
    assert [(r["j"], r["l"]) for r in rows] == [(1, 1)]


def test_two_variable_quartic_fixture():
    res = bergman_diagonal_coeffs(quartic_weight_2d(), 1)
    assert res.ratios[1] == Fraction(1, 40)
    assert a1_ratio(quartic_weight_2d()) == Fraction(1, 40)


def test_stabilization_under_enlarged_enumeration():
    for w in (quartic_weight(), volume_bump_weight(), cubic_quartic_weight()):
        base = bergman_diagonal_coeffs(w, 1)
        wide = bergman_diagonal_coeffs(w, 1, j_extra=1, l_extra=2,
                                       valuation_skip=False)
        assert base.ratios == wide.ratios


def test_budget_errors():
    with pytest.raises(BudgetError):
        bergman_diagonal_coeffs(quartic_weight(), 1, slot_budget=4)
    with pytest.raises(BudgetError):
        bergman_diagonal_coeffs(quartic_weight(), 1, k_budget=1)


def test_expansion_result_json_shape():
    res = bergman_diagonal_coeffs(quartic_weight(), 1)
    d = res.to_json_dict()
    assert set(d) == {"0", "1"}
    assert d["1"]["contributions"][0]["j"] == 2
    assert d["1"]["value"][1] == 0.0


# ------------------------------------- independent route: direct Neumann sums


def density_ratio_series(weight, slot_budget, k_budget):
    # 1 - rho with rho = e^{-2 k phi1} vol, as a one-slot KSeries
    n = weight.n
    vol = weight.vol.truncate(slot_budget)
    neg2psi = weight.phi1.scale(Fraction(-2)).truncate(slot_budget)
    layers = [WirtingerPoly.const(n, 1) - vol]
    term = WirtingerPoly.const(n, 1)
    for p in range(1, k_budget + 1):
        term = term.mul_truncated(neg2psi, slot_budget).scale(Fraction(1, p))
        if term.is_zero:
            break
        layers.append(term.mul_truncated(vol, slot_budget).scale(-1))
    return KSeries(len(layers) - 1, list(reversed(layers)))


def neumann_route_ratios(weight, order):
    slot_budget, k_budget = 6 * order, 2 * order
    n = weight.n
    one_slot = density_ratio_series(weight, slot_budget, k_budget)
    exact = weight.is_exact
    ratios = [Fraction(1) if exact else 1.0 + 0.0j]
    ratios += [Fraction(0) if exact else 0.0j for _ in range(order)]
    for ell in range(1, 2 * order + 1):
        u = None
        for nu in range(ell):
            piece = one_slot.map(
                lambda c, off=nu * n: c.embed(ell * n, off))
            u = piece if u is None else u.mul(piece, max_degree=slot_budget)
        if u.is_zero:
            continue
        for p in u.powers():
            if p > k_budget:
                continue
            poly = u.kpow(p)
            for m in range(1, order + 1):
                j = m + p
                if j > 3 * order or ell > 2 * j:
                    continue
                core = delta_l_apply(poly, weight.lam, ell, j)
                ratios[m] = ratios[m] + core * Fraction(
                    1, 2 ** j * factorial(j))
    return ratios


def test_chain_route_equals_neumann_route_exactly():
    cases = [
        (quartic_weight(), 2),
        (volume_bump_weight(), 2),
        (cubic_quartic_weight(), 1),
        (quartic_weight_2d(), 1),
    ]
    for w, order in cases:
        lib = bergman_diagonal_coeffs(w, order)
        alt = neumann_route_ratios(w, order)
        for m in range(order + 1):
            assert lib.ratios[m] == alt[m], (w, order, m)


def test_cubic_terms_contribute_through_squares():
    # cubic phase terms enter a_1 only via paired k^2 pieces; the closed
    # form must refuse and the machinery must produce a real value
    w = cubic_quartic_weight()
    with pytest.raises(PreconditionError):
        a1_closed_form(w)
    res = bergman_diagonal_coeffs(w, 1)
    assert res.ratios[1].im == 0
    pairs = {(r["j"], r["l"]) for r in res.contributions[1]}
    # the quartic piece sits at j = 2 and the paired cubics at j = 3
    assert (2, 1) in pairs
    assert (3, 1) in pairs or (3, 2) in pairs


# ------------------------------------------------------------- closed-form a1


def test_a1_closed_form_fixture_values():
    assert a1_ratio(quartic_weight()) == Fraction(1, 10)
    assert a1_ratio(volume_bump_weight()) == Fraction(-1, 20)
    assert abs(a1_closed_form(quartic_weight()) - 0.1 / pi) < 1e-16
    assert abs(a1_closed_form(volume_bump_weight()) + 0.05 / pi) < 1e-16


def random_exact_quartic_weight(rng, n):
    lam_pool = [Fraction(1), Fraction(1, 2), Fraction(2), Fraction(3, 2)]
    lam = tuple(rng.choice(lam_pool) for _ in range(n))
    exps = []

    def fill(prefix, left):
        if len(prefix) == n:
            exps.append(tuple(prefix))
            return
        for e in range(left + 1):
            fill(prefix + [e], left - e)

    for total in range(5):
        fill([], total)
    phi1 = WirtingerPoly.zero(n)
    seen = set()
    for a in exps:
        for b in exps:
            if sum(a) + sum(b) != 4 or (a, b) in seen:
                continue
            seen.add((a, b))
            seen.add((b, a))
            re = Fraction(rng.randrange(-3, 4), rng.choice([1, 2, 4]))
            if a == b:
                c = CRat(re)
                phi1 = phi1 + WirtingerPoly.monomial(n, a, b, c)
            else:
                im = Fraction(rng.randrange(-3, 4), rng.choice([1, 2, 4]))
                c = CRat(re, im)
                phi1 = (phi1 + WirtingerPoly.monomial(n, a, b, c)
                        + WirtingerPoly.monomial(n, b, a, c.conjugate()))
    vol = WirtingerPoly.const(n, 1)
    for j in range(n):
        bj = Fraction(rng.randrange(-2, 3), 4)
        vol = (vol + WirtingerPoly.variable(n, j, CRat(bj))
               + WirtingerPoly.conj_variable(n, j, CRat(bj)))
        dj = Fraction(rng.randrange(-2, 3), 4)
        a = [0] * n
        a[j] = 1
        vol = vol + WirtingerPoly.monomial(n, tuple(a), tuple(a), CRat(dj))
    return WeightSpec(lam, phi1=phi1, vol=vol)


def test_a1_closed_form_matches_machinery_on_random_quartics():
    rng = random.Random(20240813)
    for trial in range(6):
        n = 1 if trial % 2 == 0 else 2
        w = random_exact_quartic_weight(rng, n)
        lib = bergman_diagonal_coeffs(w, 1)
        assert a1_ratio(w) == lib.ratios[1], trial


# ------------------------------------------------------------ curvature route


def test_scalar_curvature_pinned_fixtures():
    assert scalar_curvature_center(quartic_weight()) == Fraction(-2, 5)
    assert scalar_curvature_center(quartic_weight_2d()) == Fraction(-1, 10)


def test_a1_from_curvature_matches_closed_form():
    for w in (quartic_weight(), quartic_weight_2d(),
              quartic_weight(c=Fraction(3, 7), lam=(Fraction(2),))):
        got = a1_from_curvature(w)
        want = a1_closed_form(w)
        assert abs(got - want) <= 1e-15 * max(1.0, abs(want))


def test_curvature_route_requires_trivial_volume():
    with pytest.raises(PreconditionError):
        scalar_curvature_center(volume_bump_weight())
