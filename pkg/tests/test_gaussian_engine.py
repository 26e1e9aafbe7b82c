"""Stationary-phase engine.

The chain Hessian is checked against second differences of the literal phase
function, the prefactor against the closed-form model value, and the two
moment routes (operator powers vs Isserlis pairing recursion) against each
other and against real-Gaussian closed forms.
"""

import math

import numpy as np
import pytest

from bergtoep.gaussian_engine import (QuadraticPhase, chain_phase, lj_apply,
                                      oscillatory_quadrature, realify,
                                      stationary_phase_series,
                                      wick_expectation)
from bergtoep.polyalg import CRat, WirtingerPoly


def psi_model(x, y, lam):
    """2i sum_j lam_j (|y_j|^2 - x_j conj(y_j)); the model phase seed."""
    return 2j * sum(l * (abs(yj) ** 2 - xj * np.conj(yj))
                    for l, xj, yj in zip(lam, x, y))


def chain_value(wflat, lam, z):
    n = len(lam)
    slots = [wflat[2 * n * nu:2 * n * (nu + 1)] for nu in range(len(wflat) // (2 * n))]
    pts = [[s[2 * j] + 1j * s[2 * j + 1] for j in range(n)] for s in slots]
    val = psi_model(z, pts[0], lam)
    for nu in range(len(pts) - 1):
        val += psi_model(pts[nu], pts[nu + 1], lam)
    val += psi_model(pts[-1], z, lam)
    return val


@pytest.mark.parametrize("lam,nslots", [([1.0], 1), ([1.0], 2), ([0.5, 2.0], 1),
                                        ([0.5, 2.0], 3), ([1.0, 1.5, 0.7], 2)])
def test_chain_hessian_matches_phase_second_differences(lam, nslots):
    ph = chain_phase(lam, nslots)
    d = ph.dim
    h = 1e-4
    z = [0.0] * len(lam)
    H_fd = np.zeros((d, d), dtype=complex)
    for a in range(d):
        for b in range(a, d):
            pts = []
            for sa, sb in [(1, 1), (1, -1), (-1, 1), (-1, -1)]:
                w = np.zeros(d)
                w[a] += sa * h
                w[b] += sb * h
                pts.append(chain_value(w, lam, z))
            H_fd[a, b] = H_fd[b, a] = (pts[0] - pts[1] - pts[2] + pts[3]) / (4 * h * h)
    assert np.allclose(H_fd, ph.hessian, atol=5e-7)


def test_chain_phase_critical_point_and_value():
    lam = [0.7, 1.3]
    z = [0.2 - 0.1j, -0.4 + 0.3j]
    nslots = 3
    n = len(lam)
    wflat = np.zeros(2 * n * nslots)
    for nu in range(nslots):
        for j in range(n):
            wflat[2 * (nu * n + j)] = z[j].real
            wflat[2 * (nu * n + j) + 1] = z[j].imag
    val = chain_value(wflat, lam, z)
    assert abs(val) < 1e-14
    h = 1e-6
    for a in range(len(wflat)):
        wp = wflat.copy(); wp[a] += h
        wm = wflat.copy(); wm[a] -= h
        grad = (chain_value(wp, lam, z) - chain_value(wm, lam, z)) / (2 * h)
        assert abs(grad) < 1e-9


def test_one_slot_one_dim_hessian_literal():
    ph = chain_phase([1.0], 1)
    assert np.allclose(ph.hessian, 4j * np.eye(2))
    assert ph.measure_factor == 2.0


@pytest.mark.parametrize("lam", [[1.0], [2.0, 0.5], [1.0, 3.0, 0.25]])
@pytest.mark.parametrize("nslots", [1, 2, 3, 4])
@pytest.mark.parametrize("k", [1.0, 7.0, 80.0])
def test_prefactor_identity(lam, nslots, k):
    # measure_factor * det(kF''/2 pi i)^{-1/2} = 1 / (C0^l k^{n l})
    n = len(lam)
    ph = chain_phase(lam, nslots)
    got = ph.measure_factor * ph.prefactor(k)
    c0 = np.prod(lam) / np.pi ** n
    want = 1.0 / (c0 ** nslots * k ** (n * nslots))
    assert abs(got - want) <= 1e-12 * abs(want)


def test_real_gaussian_moments():
    # F = i c x^2 so e^{ikF} = e^{-k c x^2}; compare with textbook moments.
    c = 0.8
    k = 3.0
    ph = QuadraticPhase(hessian=np.array([[2j * c, 0], [0, 2j * c]]))
    var = 1.0 / (2 * k * c)
    for mx, my in [(0, 0), (2, 0), (4, 2), (6, 0)]:
        u = WirtingerPoly.monomial(1, (mx,), (my,), 1.0)
        got = oscillatory_quadrature(ph, k, u)
        dfact = lambda m: math.prod(range(m - 1, 0, -2)) if m else 1
        want = (np.pi / (k * c)) * dfact(mx) * var ** (mx // 2) \
            * dfact(my) * var ** (my // 2)
        if (mx % 2) or (my % 2):
            want = 0.0
        assert abs(got - want) <= 1e-13 * max(1.0, abs(want))


def test_wick_pair_is_covariance_entry():
    ph = chain_phase([1.0], 2)
    cov = ph.covariance(5.0)
    for a in range(4):
        al = [0, 0]; be = [0, 0]
        (al if a % 2 == 0 else be)[a // 2] = 1
        for b in range(4):
            al2 = list(al); be2 = list(be)
            if b % 2 == 0:
                al2[b // 2] += 1
            else:
                be2[b // 2] += 1
            u = WirtingerPoly.monomial(2, al2, be2, 1.0)
            got = wick_expectation(cov, u)
            mult = 2.0 if a == b else 1.0  # x_a^2 vs x_a x_b monomial
            want = cov.sigma[a, b] * (1.0 if a != b else 1.0)
            if a == b:
                want = cov.sigma[a, a]
            assert abs(got - want) < 1e-14


def test_wick_odd_vanishes():
    cov = chain_phase([1.3], 1).covariance(2.0)
    u = WirtingerPoly.monomial(1, (2,), (1,), 1.0)
    assert wick_expectation(cov, u) == 0


def _random_phase(rng, d):
    A = rng.standard_normal((d, d))
    A = A + A.T
    R = rng.standard_normal((d, d))
    B = R @ R.T + np.eye(d)
    return QuadraticPhase(hessian=A + 1j * B)


def test_wick_matches_operator_series_random_phases():
    rng = np.random.default_rng(7)
    k = 2.5
    for trial in range(6):
        ph = _random_phase(rng, 4)
        cov = ph.covariance(k)
        for _ in range(5):
            al = tuple(rng.integers(0, 3, size=2))
            be = tuple(rng.integers(0, 3, size=2))
            u = WirtingerPoly.monomial(2, al, be, 1.0)
            got = wick_expectation(cov, u)
            want = stationary_phase_series(ph, k, u)
            assert abs(got - want) <= 1e-10 * max(1.0, abs(got))


def test_lj_zero_is_evaluation():
    u = WirtingerPoly.monomial(1, (1, ), (1,), 2.0) + WirtingerPoly.const(1, 3.0)
    ph = chain_phase([1.0], 1)
    assert lj_apply(ph, u, 0) == 3.0


def test_realify_preserves_values():
    p = (WirtingerPoly.monomial(2, (1, 0), (0, 2), CRat(1, 2))
         + WirtingerPoly.variable(2, 1, CRat(-2)))
    w = [0.3 - 0.2j, 0.1 + 0.5j]
    re = realify(p)
    got = complex(re.eval_pair([wi.real for wi in w], [wi.imag for wi in w]))
    want = complex(p.eval_pair(w, [np.conj(wi) for wi in w]))
    assert abs(got - want) < 1e-14


def test_degenerate_phase_rejected():
    from bergtoep.errors import ConditioningError
    ph = QuadraticPhase(hessian=np.zeros((2, 2), dtype=complex))
    with pytest.raises(ConditioningError):
        ph.prefactor(1.0)


def _eval_scalar_series(series, k):
    return sum(c * float(k) ** p for p, c in zip(series.powers(), series.coeffs))


def test_wick_oracle_scalar_covariance_pins():
    from bergtoep.gaussian_engine import GaussianCovariance, wick_oracle
    cov = GaussianCovariance(sigma=np.array([[0.7]], dtype=complex))
    assert wick_oracle(cov, (1,)) == 0.0
    assert abs(wick_oracle(cov, (2,)) - 0.7) < 1e-15
    assert abs(wick_oracle(cov, (4,)) - 3 * 0.7 ** 2) < 1e-14
    assert abs(wick_oracle(cov, (6,)) - 15 * 0.7 ** 3) < 1e-13


def test_wick_oracle_agrees_with_polynomial_route():
    from bergtoep.gaussian_engine import wick_oracle
    rng = np.random.default_rng(11)
    ph = chain_phase([0.5, 2.0], 1)
    cov = ph.covariance(3.0)
    d = ph.dim
    for _ in range(8):
        al = tuple(int(v) for v in rng.integers(0, 3, size=2))
        be = tuple(int(v) for v in rng.integers(0, 3, size=2))
        u = WirtingerPoly.monomial(2, al, be, 1.0)
        m = tuple(al[v // 2] if v % 2 == 0 else be[v // 2] for v in range(d))
        got = wick_oracle(cov, m)
        want = wick_expectation(cov, u)
        assert abs(got - want) <= 1e-12 * max(1.0, abs(want))


def test_wick_oracle_rejects_wrong_length():
    from bergtoep.errors import PreconditionError
    from bergtoep.gaussian_engine import wick_oracle
    cov = chain_phase([1.0], 1).covariance(2.0)
    with pytest.raises(PreconditionError):
        wick_oracle(cov, (1, 2, 3))


@pytest.mark.parametrize("lam,nslots", [([1.0], 1), ([1.0], 2), ([0.5, 2.0], 1),
                                        ([0.5, 2.0], 3), ([2.0], 3)])
def test_prefactor_identity_model_constant(lam, nslots):
    # measure_factor * det(kF''/2pi i)^{-1/2} == (pi^n / prod lam)^nslots * k^{-n*nslots}
    n = len(lam)
    ph = chain_phase(lam, nslots)
    c0 = np.prod(lam) / np.pi ** n
    for k in (1.0, 7.0, 40.0):
        got = ph.measure_factor * ph.prefactor(k)
        want = 1.0 / (c0 ** nslots * k ** (n * nslots))
        assert abs(got - want) <= 1e-12 * abs(want)


def test_quadratic_phase_expand_constant_is_prefactor():
    from bergtoep.gaussian_engine import quadratic_phase_expand
    ph = chain_phase([1.0], 1)
    series = quadratic_phase_expand(ph, WirtingerPoly.const(2, 1.0))
    assert series.powers() == [-1]
    assert abs(series.kpow(-1) - np.pi) < 1e-13


def test_quadratic_phase_expand_matches_quadrature():
    from bergtoep.gaussian_engine import quadratic_phase_expand
    rng = np.random.default_rng(23)
    for lam, nslots in [([1.0], 1), ([0.5, 2.0], 1), ([1.0], 3)]:
        ph = chain_phase(lam, nslots)
        nv = len(lam) * nslots
        terms = WirtingerPoly.zero(nv)
        for _ in range(4):
            al = tuple(int(v) for v in rng.integers(0, 3, size=nv))
            be = tuple(int(v) for v in rng.integers(0, 3, size=nv))
            terms = terms + WirtingerPoly.monomial(
                nv, al, be, complex(rng.normal(), rng.normal()))
        u = realify(terms)
        series = quadratic_phase_expand(ph, u)
        for k in (2.0, 9.0):
            got = _eval_scalar_series(series, k)
            want = oscillatory_quadrature(ph, k, u)
            assert abs(got - want) <= 1e-12 * max(1.0, abs(want))


def test_quadratic_phase_expand_kseries_input_shifts_grades():
    from bergtoep.gaussian_engine import quadratic_phase_expand
    from bergtoep.polyalg import KSeries
    ph = chain_phase([1.0], 1)
    w2 = realify(WirtingerPoly.monomial(1, (1,), (1,), 1.0))
    layered = KSeries(1, [w2, WirtingerPoly.const(1, 1.0)])
    series = quadratic_phase_expand(ph, layered)
    # k^1 layer w wbar contributes at j=1: prefactor pi/k times k^{1-1};
    # k^0 constant contributes pi/k times k^0.
    flat = quadratic_phase_expand(ph, w2)
    assert abs(series.kpow(-1) - (flat.kpow(-2) + np.pi)) < 1e-13


def test_quadratic_phase_expand_rejects_odd_dim():
    from bergtoep.errors import PreconditionError
    from bergtoep.gaussian_engine import quadratic_phase_expand
    ph = QuadraticPhase(hessian=np.array([[2j]], dtype=complex))
    with pytest.raises(PreconditionError):
        quadratic_phase_expand(ph, WirtingerPoly.const(1, 1.0))
