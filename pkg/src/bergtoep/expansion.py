"""Diagonal expansion of the weighted Bergman kernel at the frame center.

The kernel for weight e^{-2k(phi0 + phi1)} vol is developed as a chain of
model projectors joined by transition factors.  Integrating each chain
against the model Gaussian reduces every order to finitely many derivative
extractions: coefficient a_m collects the (j, l) terms with j <= 3m chain
derivatives on l <= 2j slots.  All arithmetic stays exact (CRat) when the
weight is exact.
"""

import math
from dataclasses import dataclass, field
from fractions import Fraction

from .errors import BergtoepError, BudgetError, PreconditionError
from .gaussian_engine import chain_phase, realify, wick_expectation
from .polyalg import (CRat, KSeries, WirtingerPoly, conj_scalar,
                      inverse_truncated, log_truncated, to_complex)


@dataclass
class ChainFactor:
    """Transition factor v_k(x, y) between consecutive chain slots.

    series: KSeries in k whose coefficients are WirtingerPolys in 2n
    variables (x = slots 0..n-1, y = slots n..2n-1), truncated to total slot
    degree <= slot_budget and k-power <= k_budget.  v_k has no constant term
    at k^0 and its k^p coefficient has valuation >= 3p in the phase part.
    """

    series: KSeries
    n: int
    slot_budget: int
    k_budget: int

    @property
    def is_zero(self):
        return self.series.is_zero


def chain_factor(weight, slot_budget, k_budget):
    """Expand v_k(x, y) = e^{2k(phi1(x) - phi1(y))} vol(x)^{-1} vol(y) - 1.

    Parameters
    ----------
    weight : WeightSpec
        Normalized weight (vol(0) = 1, phi1 valuation >= 3).
    slot_budget : int
        Keep slot monomials of total degree <= slot_budget.
    k_budget : int
        Keep k-powers <= k_budget.

    Returns
    -------
    ChainFactor
    """
    if slot_budget < 1 or k_budget < 0:
        raise BudgetError("chain factor budgets must be positive")
    n = weight.n
    m2 = 2 * n
    g = weight.phi1.embed(m2, 0) - weight.phi1.embed(m2, n)
    g = g.scale(Fraction(2)).truncate(slot_budget)
    vinv = inverse_truncated(weight.vol, slot_budget).embed(m2, 0)
    vy = weight.vol.truncate(slot_budget).embed(m2, n)
    base = vinv.mul_truncated(vy, slot_budget)
    layers = [base]
    term = WirtingerPoly.const(m2, 1)
    for p in range(1, k_budget + 1):
        term = term.mul_truncated(g, slot_budget).scale(Fraction(1, p))
        if term.is_zero:
            break
        layers.append(term.mul_truncated(base, slot_budget))
    series = KSeries(len(layers) - 1, list(reversed(layers)))
    series = series - KSeries.const(WirtingerPoly.const(m2, 1))
    cf = ChainFactor(series=series, n=n,
                     slot_budget=slot_budget, k_budget=k_budget)
    k0 = cf.series.kpow(0, None)
    if k0 is not None and not _scalar_zero(k0.constant_term()):
        raise BergtoepError("internal: transition factor has a constant term")
    return cf


def _scalar_zero(c):
    return to_complex(c) == 0


def _front_slot(p, n):
    # v(x, 0): kill the y slot and forget its variables
    kept = p.restrict_zero(range(n, 2 * n))
    return WirtingerPoly(n, {(a[:n], b[:n]): c
                             for (a, b), c in kept.terms.items()})


def _truncate_powers_above(series, pmax):
    if series.is_zero or series.lead <= pmax:
        return series
    return KSeries(pmax, series.coeffs[series.lead - pmax:])


def build_u(weight, ell, slot_budget, k_budget, factor=None):
    """Product of transition factors along a chain of ell slots ending at 0.

    Slot nu couples to slot nu+1 for nu < ell, and the last slot couples to
    the center.  Returns a KSeries whose coefficients are WirtingerPolys in
    ell * n variables.
    """
    if ell < 1:
        raise PreconditionError("chain needs at least one slot")
    cf = factor if factor is not None else chain_factor(
        weight, slot_budget, k_budget)
    n = cf.n
    N = ell * n
    u = None
    for nu in range(ell - 1):
        piece = cf.series.map(lambda c, off=nu * n: c.embed(N, off))
        u = piece if u is None else _truncate_powers_above(
            u.mul(piece, max_degree=slot_budget), k_budget)
    closing = cf.series.map(lambda c: _front_slot(c, n).embed(N, (ell - 1) * n))
    u = closing if u is None else _truncate_powers_above(
        u.mul(closing, max_degree=slot_budget), k_budget)
    return u


def _delta_once(p, inv_lam, n, ell):
    out = WirtingerPoly.zero(p.nvars)
    for axis in range(n):
        acc = WirtingerPoly.zero(p.nvars)
        for nu in range(ell):
            q = p.derive_alpha(nu * n + axis).derive_beta(nu * n + axis)
            if not q.is_zero:
                acc = acc + q
        for nu in range(ell):
            for mu in range(nu + 1, ell):
                q = p.derive_beta(nu * n + axis).derive_alpha(mu * n + axis)
                if not q.is_zero:
                    acc = acc + q
        if not acc.is_zero:
            out = out + acc.scale(inv_lam[axis])
    return out


def _inverse_lambdas(lam):
    out = []
    for l in lam:
        if isinstance(l, Fraction) or isinstance(l, int):
            out.append(Fraction(1, 1) / Fraction(l))
        else:
            out.append(1.0 / float(l))
    return out


def delta_l_apply(expr, lam, ell, j):
    """Apply the chain Laplacian j times and evaluate every slot at 0.

    The operator couples each complex axis within a slot and across ordered
    slot pairs:

        sum_a (1/lam_a) [ sum_nu d^2/dw_a^nu dwbar_a^nu
                          + sum_{nu<mu} d^2/dwbar_a^nu dw_a^mu ].

    expr may be a WirtingerPoly in ell*len(lam) variables or a KSeries of
    them (mapped coefficient-wise).  Returns a scalar, or a KSeries of
    scalars.
    """
    if isinstance(expr, KSeries):
        return expr.map(lambda c: delta_l_apply(c, lam, ell, j))
    n = len(lam)
    if expr.nvars != ell * n:
        raise PreconditionError("expression does not live on the chain slots")
    inv_lam = _inverse_lambdas(lam)
    q = expr
    for _ in range(j):
        if q.is_zero:
            break
        q = _delta_once(q, inv_lam, n, ell)
    return q.constant_term()


@dataclass
class ExpansionResult:
    """Diagonal coefficients a_0..a_M with per-(j, l) bookkeeping.

    ratios[m] is a_m divided by the leading density prod(lam)/pi^n, exact
    when the weight is exact; coefficients[m] is the complex float value.
    contributions[m] lists dicts {j, l, ratio, value} for each nonzero term.
    """

    n: int
    lam: tuple
    coefficients: list
    ratios: list
    contributions: dict = field(default_factory=dict)

    @property
    def order(self):
        return len(self.coefficients) - 1

    def leading_density(self):
        c0 = 1.0
        for l in self.lam:
            c0 *= float(l) / math.pi
        return c0

    def partial_sum_at(self, k, upto=None):
        """k^n sum_{m<=upto} a_m k^{-m} evaluated as a float."""
        top = self.order if upto is None else min(upto, self.order)
        kf = float(k)
        total = 0.0 + 0.0j
        for m in range(top + 1):
            total += self.coefficients[m] * kf ** (-m)
        return complex(kf ** self.n * total)

    def to_json_dict(self):
        out = {}
        for m in range(self.order + 1):
            entry = {
                "value": [self.coefficients[m].real, self.coefficients[m].imag],
                "contributions": [
                    {"j": c["j"], "l": c["l"],
                     "value": [c["value"].real, c["value"].imag]}
                    for c in self.contributions.get(m, [])
                ],
            }
            out[str(m)] = entry
        return out


def _odd_degree_part(p):
    terms = {(a, b): c for (a, b), c in p.terms.items()
             if (sum(a) + sum(b)) % 2}
    return WirtingerPoly(p.nvars, terms)


def bergman_diagonal_coeffs(weight, order, slot_budget=None, k_budget=None,
                            j_extra=0, l_extra=0, valuation_skip=True,
                            check_half_orders=True):
    """Coefficients a_0..a_order of B(0,0) ~ k^n sum_m a_m k^{-m}.

    Parameters
    ----------
    weight : WeightSpec
        Normalized weight at its Chern-Moser center.
    order : int
        Highest coefficient index M.
    slot_budget, k_budget : int, optional
        Truncation budgets; defaults are the proven-sufficient 6M and 2M.
        Explicit smaller values raise BudgetError.
    j_extra, l_extra : int
        Enlarge the (j, l) enumeration bounds; the result must not change
        (stabilization), which tests assert by passing these.
    valuation_skip : bool
        Skip (j, l) terms whose coefficient valuation proves them zero.
        Disable to force every enumerated term through the extraction.
    check_half_orders : bool
        Assert that odd-degree chain components integrate to zero against
        the model Gaussian instead of assuming parity cancellation.

    Returns
    -------
    ExpansionResult
    """
    if order < 0:
        raise PreconditionError("expansion order must be >= 0")
    j_max = 3 * order + j_extra
    needed_w = max(2 * j_max, 1)
    needed_k = max((2 * j_max) // 3, 1)
    if slot_budget is None:
        slot_budget = needed_w
    elif slot_budget < needed_w:
        raise BudgetError(
            f"slot budget {slot_budget} below required {needed_w}")
    if k_budget is None:
        k_budget = needed_k
    elif k_budget < needed_k:
        raise BudgetError(f"k budget {k_budget} below required {needed_k}")

    lam = weight.lam
    lamf = weight.lam_floats()
    n = weight.n
    exact = weight.is_exact
    zero_ratio = Fraction(0) if exact else 0.0j
    buckets = {m: {} for m in range(order + 1)}
    buckets[0][(0, 0)] = Fraction(1) if exact else 1.0 + 0.0j

    ell_cap = 2 * j_max + l_extra
    if valuation_skip:
        # each factor's k^q coefficient has valuation >= max(1, 3q), so the
        # (l, p) coefficient has valuation >= l + 2p > 2j whenever l > 2m
        ell_cap = min(ell_cap, 2 * order + l_extra)
    cf = chain_factor(weight, slot_budget, k_budget)
    for ell in range(1, ell_cap + 1):
        if cf.is_zero:
            break
        u = build_u(weight, ell, slot_budget, k_budget, factor=cf)
        if u.is_zero:
            continue
        if check_half_orders:
            cov = chain_phase(lamf, ell).covariance(1.0)
            for p in u.powers():
                odd = _odd_degree_part(u.kpow(p))
                if odd.is_zero:
                    continue
                leak = wick_expectation(cov, realify(odd))
                if leak != 0:
                    raise BergtoepError(
                        "internal: odd chain component survived integration")
        for p in u.powers():
            if p < 0:
                raise BergtoepError("internal: negative k-power in chain")
            poly = u.kpow(p)
            for m in range(order + 1):
                j = m + p
                if j < 1 or j > j_max or ell > 2 * j + l_extra:
                    continue
                if valuation_skip:
                    val = poly.valuation()
                    if val is None or val > 2 * j or poly.degree() < 2 * j:
                        continue
                core = delta_l_apply(poly, lam, ell, j)
                term = core * Fraction(1, 2 ** j * math.factorial(j))
                if _scalar_zero(term):
                    continue
                key = (j, ell)
                buckets[m][key] = buckets[m].get(key, zero_ratio) + term

    c0 = 1.0
    for l in lamf:
        c0 *= l / math.pi
    ratios = []
    coefficients = []
    contributions = {}
    for m in range(order + 1):
        total = zero_ratio
        rows = []
        for (j, ell) in sorted(buckets[m]):
            r = buckets[m][(j, ell)]
            if _scalar_zero(r):
                continue
            total = total + r
            rows.append({"j": j, "l": ell, "ratio": r,
                         "value": to_complex(r) * c0})
        ratios.append(total)
        coefficients.append(to_complex(total) * c0)
        contributions[m] = rows
    a0 = to_complex(ratios[0])
    if abs(a0 - 1.0) > 1e-9:
        raise BergtoepError("internal: leading coefficient is not the model density")
    for m, r in enumerate(ratios):
        v = to_complex(r)
        if abs(v.imag) > 1e-10 * (1.0 + abs(v.real)):
            raise BergtoepError(f"internal: coefficient a_{m} is not real")
    return ExpansionResult(n=n, lam=tuple(lam), coefficients=coefficients,
                           ratios=ratios, contributions=contributions)


def a1_ratio(weight):
    """a_1 divided by the leading density, from the closed-form expression.

    Requires phi1 = O(|z|^4); cubic phase terms need the chain algorithm.
    """
    val = weight.phi1.valuation()
    if val is not None and val < 4:
        raise PreconditionError(
            "closed form needs phi1 valuation >= 4; "
            "use bergman_diagonal_coeffs for cubic terms")
    inv_lam = _inverse_lambdas(weight.lam)
    vol = weight.vol
    phi1 = weight.phi1
    half = Fraction(1, 2)
    quarter = Fraction(1, 4)
    total = Fraction(0) if weight.is_exact else 0.0j
    for j in range(weight.n):
        dj = vol.derive_alpha(j).constant_term()
        dj_sq = dj * conj_scalar(dj)
        djj = vol.derive_alpha(j).derive_beta(j).constant_term()
        total = total + (dj_sq - djj) * inv_lam[j] * half
    for j in range(weight.n):
        pj = phi1.derive_alpha(j).derive_beta(j)
        for l in range(weight.n):
            d4 = pj.derive_alpha(l).derive_beta(l).constant_term()
            total = total + d4 * inv_lam[j] * inv_lam[l] * quarter
    return total


def a1_closed_form(weight):
    """Closed-form a_1 at the center, as a complex float.

    Must agree exactly (same arithmetic) with
    bergman_diagonal_coeffs(weight, 1).ratios[1] in exact mode.
    """
    c0 = 1.0
    for l in weight.lam_floats():
        c0 *= l / math.pi
    return to_complex(a1_ratio(weight)) * c0


def scalar_curvature_center(weight):
    """Scalar curvature of the metric 2 * d d-bar phi at the center.

    Only defined here for vol identically 1; the trace uses the center
    values h(0) = diag(2 lam).
    """
    if weight.vol.degree() > 0:
        raise PreconditionError("curvature route requires vol identically 1")
    n = weight.n
    phi2 = weight.phi_poly().scale(Fraction(2))
    h = [[phi2.derive_alpha(j).derive_beta(l).truncate(2) for l in range(n)]
         for j in range(n)]
    det = _poly_det(h, n)
    c0 = det.constant_term()
    if _scalar_zero(c0):
        raise PreconditionError("degenerate metric at the center")
    inv0 = CRat(1) / c0 if isinstance(c0, CRat) else 1.0 / to_complex(c0)
    logdet = log_truncated(det.scale(inv0), 2)
    inv_lam = _inverse_lambdas(weight.lam)
    s = Fraction(0) if weight.is_exact else 0.0j
    for j in range(n):
        ricci_jj = -logdet.derive_alpha(j).derive_beta(j).constant_term()
        s = s + ricci_jj * inv_lam[j]
    return s


def _poly_det(h, n):
    if n == 1:
        return h[0][0]
    # Laplace expansion along the first row; n stays small here
    out = None
    for col in range(n):
        minor = [[h[r][c] for c in range(n) if c != col] for r in range(1, n)]
        sub = _poly_det(minor, n - 1)
        piece = h[0][col].mul_truncated(sub, 2)
        if col % 2:
            piece = piece.scale(-1)
        out = piece if out is None else out + piece
    return out


def a1_from_curvature(weight):
    """a_1 via the curvature form: -(leading density) * s / 4."""
    s = scalar_curvature_center(weight)
    c0 = 1.0
    for l in weight.lam_floats():
        c0 *= l / math.pi
    return to_complex(s) * (-0.25) * c0
