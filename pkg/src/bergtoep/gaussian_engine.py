"""Quadratic oscillatory integrals: Wick calculus and stationary-phase terms.

A QuadraticPhase is a complex-quadratic phase F(x) = (1/2) x . F'' x on R^d
with critical point 0 and critical value 0, plus the measure factor relating
the volume form the caller integrates against to Lebesgue measure on R^d.
Chain phases for the diagonal kernel calculus are built by chain_phase; their
real coordinates are ordered (Re w^1_1, Im w^1_1, Re w^1_2, Im w^1_2, ...),
slot-major, matching complex variable v = (slot index)*n + (dimension index)
of the polynomial layer: real pair (2v, 2v+1).

Two independent evaluation routes are provided on purpose.  lj_apply expands
the standard stationary-phase operator series; wick_expectation sums Isserlis
pairings recursively.  They must agree, and tests hold them to that.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial

import numpy as np

from .errors import ConditioningError, PreconditionError
from .polyalg import CRat, KSeries, WirtingerPoly

TWO_PI = 2.0 * np.pi


@dataclass
class QuadraticPhase:
    """Complex quadratic phase on R^d with positive semidefinite Im F''."""

    hessian: np.ndarray          # complex symmetric, d x d
    measure_factor: float = 1.0  # caller's volume form / Lebesgue
    label: str = ""

    def __post_init__(self):
        H = np.asarray(self.hessian, dtype=complex)
        if H.ndim != 2 or H.shape[0] != H.shape[1]:
            raise PreconditionError("hessian must be square")
        if not np.allclose(H, H.T, atol=1e-12):
            raise PreconditionError("hessian must be symmetric")
        self.hessian = H

    @property
    def dim(self):
        return self.hessian.shape[0]

    def inverse_hessian(self):
        try:
            return np.linalg.inv(self.hessian)
        except np.linalg.LinAlgError as exc:
            raise ConditioningError("singular phase hessian") from exc

    def covariance(self, k):
        """Formal Gaussian covariance i (k F'')^{-1}."""
        return GaussianCovariance(sigma=1j * self.inverse_hessian() / float(k),
                                  phase=self)

    def prefactor(self, k):
        """det(k F'' / 2 pi i)^{-1/2} via principal roots of eigenvalues.

        Every eigenvalue of k F''/(2 pi i) must lie in the closed right half
        plane (that is what Im F'' >= 0 buys); the branch is the product of
        principal square roots, each argument in (-pi/2, pi/2].
        """
        M = np.asarray(self.hessian, dtype=complex) * (float(k) / (2j * np.pi))
        eig = np.linalg.eigvals(M)
        if np.any(np.abs(eig) < 1e-300):
            raise ConditioningError("degenerate phase")
        if np.any(eig.real < -1e-10 * np.abs(eig)):
            raise ConditioningError("phase eigenvalue outside right half plane")
        return complex(np.prod(eig ** -0.5))


@dataclass
class GaussianCovariance:
    """Covariance matrix of the formal Gaussian attached to a phase at level k."""

    sigma: np.ndarray
    phase: QuadraticPhase | None = None
    _memo: dict = field(default_factory=dict, repr=False)

    @property
    def dim(self):
        return self.sigma.shape[0]


def chain_phase(lam, nslots):
    """Phase of the nslots-fold kernel chain through a center point.

    lam: model weight eigenvalues, one per complex dimension.  Returns the
    QuadraticPhase in the 2*n*nslots real coordinates described in the module
    docstring, with the 2^(n*nslots) complex-volume measure factor attached.
    """
    lam = [float(v) for v in lam]
    n = len(lam)
    if nslots < 1:
        raise PreconditionError("need at least one chain slot")
    d = 2 * n * nslots
    H = np.zeros((d, d), dtype=complex)
    link = np.array([[1.0, -1j], [1j, 1.0]])
    for j, lv in enumerate(lam):
        for nu in range(nslots):
            v = nu * n + j
            H[2 * v:2 * v + 2, 2 * v:2 * v + 2] = 4j * lv * np.eye(2)
        for nu in range(nslots - 1):
            v1 = nu * n + j
            v2 = (nu + 1) * n + j
            B = -2j * lv * link
            H[2 * v1:2 * v1 + 2, 2 * v2:2 * v2 + 2] = B
            H[2 * v2:2 * v2 + 2, 2 * v1:2 * v1 + 2] = B.T
    return QuadraticPhase(hessian=H, measure_factor=float(2 ** (n * nslots)),
                          label=f"chain l={nslots} n={n}")


def realify(p):
    """Rewrite a complex-pair polynomial in interleaved real coordinates.

    Slot v's primary variable becomes s_v + i t_v and its partner s_v - i t_v,
    where in the output polynomial slot v's primary/partner pair is (s_v, t_v).
    Exact coefficients stay exact.
    """
    n = p.nvars
    i1 = CRat(0, 1)
    apolys = []
    bpolys = []
    for v in range(n):
        s = WirtingerPoly.variable(n, v)
        t = WirtingerPoly.conj_variable(n, v)
        apolys.append(s + t.scale(i1))
        bpolys.append(s - t.scale(i1))
    return p.subs_pair(apolys, bpolys)


def _derive_real(p, a):
    v, parity = divmod(a, 2)
    return p.derive_alpha(v) if parity == 0 else p.derive_beta(v)


def _pair_operator(p, G, tol=0.0):
    """Apply sum_{ab} G[a,b] d_a d_b (G symmetric) to a real-alphabet poly."""
    d = G.shape[0]
    if p.nvars * 2 != d:
        raise PreconditionError("polynomial alphabet does not match phase dim")
    out = WirtingerPoly.zero(p.nvars)
    first = [_derive_real(p, a) for a in range(d)]
    for a in range(d):
        if first[a].is_zero:
            continue
        for b in range(a, d):
            g = G[a, b]
            if abs(g) <= tol:
                continue
            second = _derive_real(first[a], b)
            if second.is_zero:
                continue
            w = complex(g) if a == b else 2.0 * complex(g)
            out = out + second.scale(w)
    return out


def lj_apply(phase, u, j):
    """j-th stationary-phase coefficient operator applied to u, at the origin.

    Standard normalization: with D = -i d/dx,
    L_j u = i^{-j} 2^{-j} <(F'')^{-1} D, D>^j u(0) / j!
          = (i/2)^j [sum_{ab} ((F'')^{-1})_{ab} d_a d_b]^j u(0) / j!.
    u is a polynomial over the interleaved real alphabet.
    """
    if j == 0:
        return complex(u.constant_term())
    G = phase.inverse_hessian()
    q = u
    for _ in range(j):
        q = _pair_operator(q, G)
        if q.is_zero:
            return 0.0 + 0.0j
    return complex(q.constant_term()) * (0.5j) ** j / factorial(j)


def _gaussian_moment(cov, m):
    """Moment of the exponent vector m, by the Isserlis recursion
    E[x_a f] = sum_b Sigma[a,b] E[d_b f], memoized on the covariance."""
    s = sum(m)
    if s == 0:
        return 1.0 + 0.0j
    if s % 2:
        return 0.0 + 0.0j
    memo = cov._memo
    got = memo.get(m)
    if got is not None:
        return got
    sigma = cov.sigma
    a = next(i for i, e in enumerate(m) if e)
    m1 = list(m)
    m1[a] -= 1
    acc = 0.0 + 0.0j
    for b in range(len(m)):
        cnt = m1[b]
        if not cnt:
            continue
        g = sigma[a, b]
        if g == 0:
            continue
        m2 = list(m1)
        m2[b] -= 1
        acc += complex(g) * cnt * _gaussian_moment(cov, tuple(m2))
    memo[m] = acc
    return acc


def wick_oracle(cov, monomial):
    """Gaussian moment of a single monomial given as an exponent vector.

    monomial[a] is the exponent of real coordinate a, length cov.dim.  Sums
    over perfect matchings of products of covariance entries; odd total
    degree gives 0 outright.
    """
    m = tuple(int(e) for e in monomial)
    if len(m) != cov.dim:
        raise PreconditionError("exponent vector does not match covariance dim")
    if any(e < 0 for e in m):
        raise PreconditionError("exponents must be nonnegative")
    return _gaussian_moment(cov, m)


def wick_expectation(cov, u):
    """Moment of a polynomial under the formal Gaussian with covariance cov.

    Independent of the operator route: per-monomial wick_oracle sums, with
    the pairing recursion memoized across calls on the same covariance.
    """
    d = cov.dim
    if u.nvars * 2 != d:
        raise PreconditionError("polynomial alphabet does not match covariance dim")
    total = 0.0 + 0.0j
    for (al, be), c in u.terms.items():
        m = tuple(al[v // 2] if v % 2 == 0 else be[v // 2] for v in range(d))
        total += complex(c) * _gaussian_moment(cov, m)
    return total


def oscillatory_quadrature(phase, k, u):
    """Integral of u e^{ikF} against the phase's volume form, exactly.

    For polynomial u this is prefactor * measure_factor * Gaussian moment;
    no discretization is involved, the name records what it evaluates.
    """
    cov = phase.covariance(k)
    return phase.measure_factor * phase.prefactor(k) * wick_expectation(cov, u)


def stationary_phase_series(phase, k, u, jmax=None):
    """Sum of k^{-j} L_j u over j; equals the Gaussian moment for polynomials."""
    deg = u.degree()
    if deg < 0:
        return 0.0 + 0.0j
    top = deg // 2 if jmax is None else jmax
    return sum(float(k) ** (-j) * lj_apply(phase, u, j) for j in range(top + 1))


def quadratic_phase_expand(phase, u, order=None):
    """Expansion of the oscillatory integral of u against the phase, in k.

    Returns det(k F''/2 pi i)^{-1/2} * measure_factor * sum_j k^{-j} L_j u
    collected by k power as a KSeries with complex scalar coefficients.  u is
    a polynomial over the phase's 2*half real coordinates, or a KSeries of
    such polynomials carrying integer k grades of its own.  For polynomial u
    the series evaluated at any k reproduces the integral exactly once order
    covers deg(u)/2; order=None keeps every nonvanishing term.
    """
    d = phase.dim
    if d % 2:
        raise PreconditionError("odd-dimensional phase has no integer k grading")
    half = d // 2
    pref = phase.measure_factor * phase.prefactor(1.0)
    if isinstance(u, KSeries):
        layers = list(zip(u.powers(), u.coeffs))
    else:
        layers = [(0, u)]
    out = {}
    for p, up in layers:
        if not isinstance(up, WirtingerPoly):
            raise PreconditionError("expansion needs polynomial coefficients")
        top = max(up.degree(), 0) // 2 if order is None else order
        for j in range(top + 1):
            val = lj_apply(phase, up, j)
            if val == 0:
                continue
            q = p - j - half
            out[q] = out.get(q, 0.0 + 0.0j) + pref * val
    if not out:
        return KSeries.zero()
    lead = max(out)
    low = min(out)
    return KSeries(lead, [out.get(lead - m, 0.0 + 0.0j)
                          for m in range(lead - low + 1)])
