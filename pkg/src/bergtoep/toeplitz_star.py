"""Diagonal expansions of multiplier sandwiches and the induced star product.

A multiplication operator squeezed between kernel projections has, at the
frame center, the same chain structure as the kernel diagonal: model
projectors joined by transition factors, with each multiplier evaluated at a
distinguished interior slot.  One inserted multiplier gives the Toeplitz
coefficients a_{m,f}; two give the composition diagonal, from which the star
coefficients C_j(f, g) are read off inductively.  Arithmetic stays exact
(CRat/Fraction) while the weight and the inserted jets are exact; the only
float-forced path is the order-2 star extraction, which rebuilds the order-1
coefficient at shifted centers by finite differences.
"""

import json
import math
from dataclasses import dataclass
from fractions import Fraction

from .chern_moser import RawJet, normalize_weight
from .errors import BergtoepError, BudgetError, PreconditionError
from .expansion import (ExpansionResult, _front_slot, _inverse_lambdas,
                        _odd_degree_part, _scalar_zero, _truncate_powers_above,
                        a1_ratio, chain_factor, delta_l_apply)
from .gaussian_engine import chain_phase, realify, wick_expectation
from .polyalg import (CRat, KSeries, WirtingerPoly, is_exact_scalar,
                      scalar_is_zero, to_complex)


@dataclass
class ObservableJet:
    """Jet of a multiplier at the frame center.

    poly holds the Taylor coefficients actually known; degree records the
    order through which they faithfully represent the function (None for a
    polynomial known exactly, whose higher derivatives all vanish).
    Complex-valued multipliers are allowed.
    """

    poly: WirtingerPoly
    degree: int | None = None

    def __post_init__(self):
        if self.degree is not None:
            if self.degree < 0:
                raise PreconditionError("jet degree must be >= 0")
            if self.poly.degree() > self.degree:
                raise PreconditionError(
                    "jet polynomial has terms beyond its stated degree")


def _as_jet_poly(f, n, min_degree=0, what="multiplier"):
    if isinstance(f, ObservableJet):
        if f.degree is not None and f.degree < min_degree:
            raise PreconditionError(
                f"{what} jet degree {f.degree} below required {min_degree}")
        p = f.poly
    elif isinstance(f, WirtingerPoly):
        p = f
    else:
        raise PreconditionError(
            f"{what} must be an ObservableJet or a WirtingerPoly")
    if p.nvars != n:
        raise PreconditionError(
            f"{what} lives on {p.nvars} variables, weight has {n}")
    return p


def chain_with_insertions(weight, seg_lengths, insertions, slot_budget,
                          k_budget, factor=None):
    """Chain numerator for a projector sandwich with inserted multipliers.

    seg_lengths gives the transition-factor count of each of the
    len(insertions)+1 segments; insertion i is evaluated at the slot between
    segments i and i+1, and only the final segment's last factor couples to
    the center.  Returns a KSeries over L*n variables with L =
    sum(seg_lengths) + len(insertions).
    """
    r = len(insertions)
    if len(seg_lengths) != r + 1:
        raise PreconditionError("need exactly one more segment than insertions")
    if any(s < 0 for s in seg_lengths):
        raise PreconditionError("segment lengths must be >= 0")
    big_l = sum(seg_lengths) + r
    if big_l < 1:
        raise PreconditionError("empty chain has no integration slots")
    cf = factor if factor is not None else chain_factor(
        weight, slot_budget, k_budget)
    n = cf.n
    nv = big_l * n
    u = None

    def push(piece):
        nonlocal u
        u = piece if u is None else _truncate_powers_above(
            u.mul(piece, max_degree=slot_budget), k_budget)

    pos = 1
    for i, seg in enumerate(seg_lengths):
        for t in range(seg):
            nu = pos + t
            if i == r and t == seg - 1:
                push(cf.series.map(
                    lambda c: _front_slot(c, n).embed(nv, (big_l - 1) * n)))
            else:
                push(cf.series.map(
                    lambda c, off=(nu - 1) * n: c.embed(nv, off)))
        pos += seg
        if i < r:
            ip = insertions[i].truncate(slot_budget).embed(nv, (pos - 1) * n)
            push(KSeries.const(ip))
            pos += 1
    return u


def _compositions(total, parts):
    if parts == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for rest in _compositions(total - head, parts - 1):
            yield (head,) + rest


_FACTOR_CACHE = {}


def _cached_chain_factor(weight, slot_budget, k_budget):
    key = (json.dumps(weight.to_json_dict(), sort_keys=True),
           slot_budget, k_budget)
    got = _FACTOR_CACHE.get(key)
    if got is None:
        if len(_FACTOR_CACHE) > 32:
            _FACTOR_CACHE.clear()
        got = chain_factor(weight, slot_budget, k_budget)
        _FACTOR_CACHE[key] = got
    return got


def chained_diagonal_coeffs(weight, insertions, order, slot_budget=None,
                            k_budget=None, j_extra=0, l_extra=0,
                            valuation_skip=True, check_half_orders=True):
    """Diagonal coefficients of a projector sandwich around multipliers.

    With insertions = [] this is the kernel diagonal; with [f] the Toeplitz
    operator of f; with [f, g] the composition of the two Toeplitz
    operators.  Insertions are WirtingerPolys over the weight's variables
    and are truncated to degree 2*order up front: a jet coefficient of
    higher degree cannot reach the requested orders (each chain factor has
    positive valuation and a j-fold extraction consumes exactly degree 2j
    with j <= order + k-power).  Returns an ExpansionResult whose leading
    ratio equals the product of the insertion values at the center.
    """
    if order < 0:
        raise PreconditionError("expansion order must be >= 0")
    n = weight.n
    ins = []
    for fp in insertions:
        if not isinstance(fp, WirtingerPoly) or fp.nvars != n:
            raise PreconditionError(
                "insertions must be WirtingerPolys over the weight variables")
        ins.append(fp.truncate(2 * order))
    r = len(ins)
    j_max = 3 * order + j_extra
    needed_w = max(2 * j_max, 1)
    needed_k = max((2 * j_max) // 3, 1)
    if slot_budget is None:
        slot_budget = needed_w
    elif slot_budget < needed_w:
        raise BudgetError(f"slot budget {slot_budget} below required {needed_w}")
    if k_budget is None:
        k_budget = needed_k
    elif k_budget < needed_k:
        raise BudgetError(f"k budget {k_budget} below required {needed_k}")

    lam = weight.lam
    lamf = weight.lam_floats()
    exact = weight.is_exact and all(
        is_exact_scalar(c) for fp in ins for c in fp.terms.values())
    zero_ratio = Fraction(0) if exact else 0.0j
    buckets = {m: {} for m in range(order + 1)}
    if r == 0:
        buckets[0][(0, 0)] = Fraction(1) if exact else 1.0 + 0.0j

    ell_cap = 2 * j_max + l_extra
    if valuation_skip:
        # as in the kernel expansion: the (l, p) coefficient of the factor
        # product has valuation >= l + 2p > 2j whenever l > 2*order, and the
        # insertions only raise the valuation further
        ell_cap = min(ell_cap, 2 * order + l_extra)
    cf = _cached_chain_factor(weight, slot_budget, k_budget)
    # a single real multiplier gives a self-adjoint sandwich, hence a real
    # diagonal; compositions of two or more are not self-adjoint
    hermitian = r <= 1 and all((fp - fp.conj_z()).is_zero for fp in ins)
    for ell in range(0 if r else 1, ell_cap + 1):
        if ell > 0 and cf.is_zero:
            break
        big_l = ell + r
        if big_l == 0:
            continue
        u = None
        for comp in _compositions(ell, r + 1):
            piece = chain_with_insertions(weight, comp, ins, slot_budget,
                                          k_budget, factor=cf)
            u = piece if u is None else u + piece
        if u.is_zero:
            continue
        if check_half_orders:
            cov = chain_phase(lamf, big_l).covariance(1.0)
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
                if j > j_max or ell > 2 * j + l_extra:
                    continue
                if r == 0 and j < 1:
                    continue
                if valuation_skip:
                    val = poly.valuation()
                    if val is None or val > 2 * j or poly.degree() < 2 * j:
                        continue
                core = delta_l_apply(poly, lam, big_l, j)
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
            rr = buckets[m][(j, ell)]
            if _scalar_zero(rr):
                continue
            total = total + rr
            rows.append({"j": j, "l": ell, "ratio": rr,
                         "value": to_complex(rr) * c0})
        ratios.append(total)
        coefficients.append(to_complex(total) * c0)
        contributions[m] = rows

    lead_expected = Fraction(1) if exact else 1.0 + 0.0j
    for fp in ins:
        lead_expected = lead_expected * fp.constant_term()
    diff = ratios[0] - lead_expected
    if is_exact_scalar(diff):
        if not scalar_is_zero(diff):
            raise BergtoepError(
                "internal: leading coefficient is not the multiplier product")
    elif abs(to_complex(diff)) > 1e-9 * (1.0 + abs(to_complex(lead_expected))):
        raise BergtoepError(
            "internal: leading coefficient is not the multiplier product")
    if hermitian:
        for m, rr in enumerate(ratios):
            v = to_complex(rr)
            if abs(v.imag) > 1e-10 * (1.0 + abs(v.real)):
                raise BergtoepError(
                    f"internal: coefficient a_{m} is not real for a real multiplier")
    return ExpansionResult(n=n, lam=tuple(lam), coefficients=coefficients,
                           ratios=ratios, contributions=contributions)


def toeplitz_diagonal_coeffs(weight, f, order, **kwargs):
    """Coefficients a_{0,f}..a_{order,f} of the Toeplitz diagonal at the center.

    The diagonal of the multiplier f squeezed between kernel projections
    expands as k^n sum_m a_{m,f} k^{-m}.  f may be an ObservableJet or a
    WirtingerPoly; a stated jet degree must be at least 2*order.  a_{0,f}
    equals the leading kernel density times f(0), and f identically 1
    reproduces the kernel diagonal expansion.

    Returns
    -------
    ExpansionResult
    """
    fp = _as_jet_poly(f, weight.n, min_degree=2 * order)
    return chained_diagonal_coeffs(weight, [fp], order, **kwargs)


def toeplitz_a1_ratio(weight, f):
    """a_{1,f} divided by the leading density, in closed form.

    Valid when phi1 = O(|z|^4): the kernel's own order-1 ratio multiplies
    f(0) and the only new term is half the lambda-weighted multiplier
    Laplacian; the volume-gradient cross terms cancel between the two
    one-factor chain splits.  Must agree exactly with the chain machinery.
    """
    fp = _as_jet_poly(f, weight.n, min_degree=2)
    base = a1_ratio(weight)
    inv_lam = _inverse_lambdas(weight.lam)
    half = Fraction(1, 2)
    total = base * fp.constant_term()
    for j in range(weight.n):
        d2 = fp.derive_alpha(j).derive_beta(j).constant_term()
        total = total + d2 * inv_lam[j] * half
    return total


def toeplitz_a1_closed_form(weight, f):
    """Closed-form a_{1,f} at the center, as a complex float."""
    c0 = 1.0
    for l in weight.lam_floats():
        c0 *= l / math.pi
    return to_complex(toeplitz_a1_ratio(weight, f)) * c0


def poisson_bracket_L(lam, f, g):
    """Poisson bracket of two jets in the centered frame.

    {f, g} = i sum_j (1/(2 lam_j)) (df/dz_j dg/dzbar_j - df/dzbar_j dg/dz_j);
    antisymmetric, Leibniz in each slot, and halved when lam doubles.  Exact
    coefficients stay exact.
    """
    lam = tuple(lam)
    n = len(lam)
    if f.nvars != n or g.nvars != n:
        raise PreconditionError("jet variable count does not match lambda")
    inv_lam = _inverse_lambdas(lam)
    out = WirtingerPoly.zero(n)
    for j in range(n):
        p = (f.derive_alpha(j) * g.derive_beta(j)
             - f.derive_beta(j) * g.derive_alpha(j))
        if p.is_zero:
            continue
        w = inv_lam[j] * Fraction(1, 2)
        c = CRat(0, w) if isinstance(w, Fraction) else complex(0.0, w)
        out = out + p.scale(c)
    return out


@dataclass
class StarCoefficients:
    """Star-product coefficients C_0..C_M at the frame center.

    values[j] is C_j(f, g)(0): exact scalars where the inputs are exact,
    complex floats where re-centering finite differences were involved
    (order 2).  product_jet is the exact jet of C_0(f, g) = f*g, the only
    jet needed when nesting into order-1 associativity checks.
    """

    lam: tuple
    values: list
    product_jet: WirtingerPoly

    @property
    def order(self):
        return len(self.values) - 1

    def to_json_dict(self):
        return {"C": [[to_complex(v).real, to_complex(v).imag]
                      for v in self.values]}


def star_coefficients(weight, f, g, order, h_step=1e-3):
    """Star coefficients C_0..C_order of two multipliers, at the center.

    C_j is read off inductively from the composition diagonal: subtract the
    Toeplitz expansions of every lower C_i, then divide the residual at
    order j by the leading kernel coefficient (1 in ratio form).  Orders 0
    and 1 are exact for exact input.  Order 2 needs the degree-2 jet of
    C_1(f, g)(.), rebuilt by re-centering the order-1 extraction at shifted
    points with step h_step (finite differences, about 1e-6 accuracy, one
    complex dimension only).  Higher orders would need deeper re-centered
    jets and are not provided.
    """
    if order < 0:
        raise PreconditionError("star order must be >= 0")
    if order > 2:
        raise PreconditionError(
            "star coefficients beyond order 2 need re-centered jets of C_2; "
            "only orders <= 2 are supported")
    n = weight.n
    min_deg = 2 * order + 2
    fp = _as_jet_poly(f, n, min_degree=min_deg)
    gp = _as_jet_poly(g, n, min_degree=min_deg, what="second multiplier")
    prod = fp * gp
    values = [fp.constant_term() * gp.constant_term()]
    if order >= 1:
        comp = chained_diagonal_coeffs(weight, [fp, gp], order)
        single = chained_diagonal_coeffs(weight, [prod], order)
        values.append(comp.ratios[1] - single.ratios[1])
    if order >= 2:
        if n != 1:
            raise PreconditionError(
                "order-2 star extraction re-centers in one complex "
                "dimension only")
        c1jet = _c1_jet_by_recentering(weight, fp, gp, h_step)
        corr = chained_diagonal_coeffs(weight, [c1jet], 1)
        values.append(to_complex(comp.ratios[2] - single.ratios[2])
                      - to_complex(corr.ratios[1]))
    return StarCoefficients(lam=tuple(weight.lam), values=values,
                            product_jet=prod)


def _recentered_c1(weight, fp, gp, t):
    """Order-1 star coefficient with the whole computation moved to center t.

    The weight jets are re-expanded at z = t + w, brought back to normal
    form (gauge, linear change, volume rescale all drop out of the ratio),
    and the multipliers transported through z = t + C w.
    """
    n = weight.n
    tc = complex(t)
    shift_a = [WirtingerPoly.const(n, tc) + WirtingerPoly.variable(n, 0)]
    shift_b = [WirtingerPoly.const(n, tc.conjugate())
               + WirtingerPoly.conj_variable(n, 0)]
    phi_t = weight.phi_poly().subs_pair(shift_a, shift_b)
    vol_t = weight.vol.subs_pair(shift_a, shift_b)
    nf = normalize_weight(RawJet(n, phi_t, vol_jet=vol_t))
    ws = nf.weight_spec(radius=weight.radius)
    cc = complex(nf.coord_change[0, 0])
    lin_a = [WirtingerPoly.const(n, tc) + WirtingerPoly.variable(n, 0, cc)]
    lin_b = [WirtingerPoly.const(n, tc.conjugate())
             + WirtingerPoly.conj_variable(n, 0, cc.conjugate())]
    ft = fp.subs_pair(lin_a, lin_b)
    gt = gp.subs_pair(lin_a, lin_b)
    comp = chained_diagonal_coeffs(ws, [ft, gt], 1)
    single = chained_diagonal_coeffs(ws, [ft * gt], 1)
    return to_complex(comp.ratios[1] - single.ratios[1])


def _c1_jet_by_recentering(weight, fp, gp, h):
    """Degree-2 jet of t -> C_1(f, g)(t) from a 9-point stencil at step h."""
    if not 0 < h < 0.1:
        raise PreconditionError("re-centering step must sit in (0, 0.1)")
    pts = [0j, h + 0j, -h + 0j, 1j * h, -1j * h,
           h + 1j * h, h - 1j * h, -h + 1j * h, -h - 1j * h]
    vals = {t: _recentered_c1(weight, fp, gp, t) for t in pts}
    c0 = vals[0j]
    ax = (vals[h + 0j] - vals[-h + 0j]) / (2 * h)
    ay = (vals[1j * h] - vals[-1j * h]) / (2 * h)
    bxx = (vals[h + 0j] - 2 * c0 + vals[-h + 0j]) / (h * h)
    byy = (vals[1j * h] - 2 * c0 + vals[-1j * h]) / (h * h)
    bxy = (vals[h + 1j * h] - vals[h - 1j * h]
           - vals[-h + 1j * h] + vals[-h - 1j * h]) / (4 * h * h)
    d_z = 0.5 * (ax - 1j * ay)
    d_zb = 0.5 * (ax + 1j * ay)
    d_zz = 0.25 * (bxx - byy - 2j * bxy)
    d_zbzb = 0.25 * (bxx - byy + 2j * bxy)
    d_zzb = 0.25 * (bxx + byy)
    return (WirtingerPoly.const(1, c0)
            + WirtingerPoly.variable(1, 0, d_z)
            + WirtingerPoly.conj_variable(1, 0, d_zb)
            + WirtingerPoly.monomial(1, (2,), (0,), 0.5 * d_zz)
            + WirtingerPoly.monomial(1, (0,), (2,), 0.5 * d_zbzb)
            + WirtingerPoly.monomial(1, (1,), (1,), d_zzb))


def commutator_residual(weight, f, g):
    """C_1(f, g) - C_1(g, f) - i {f, g}_L at the center; identically zero.

    Exact (a true scalar zero) whenever the weight and the jets are exact.
    """
    n = weight.n
    fp = _as_jet_poly(f, n)
    gp = _as_jet_poly(g, n)
    ab = star_coefficients(weight, fp, gp, 1).values[1]
    ba = star_coefficients(weight, gp, fp, 1).values[1]
    br = poisson_bracket_L(weight.lam, fp, gp).constant_term()
    ibr = CRat(0, 1) * br if is_exact_scalar(br) else 1j * to_complex(br)
    return ab - ba - ibr


def associativity_residual(weight, f, g, h, m):
    """Difference of the two associativity sums at order m; must vanish.

    sum_{i+j=m} C_i(f, C_j(g, h)) - C_j(C_i(f, g), h).  Supported for
    m <= 1, where the nested coefficient only ever needs the exact product
    jet C_0 = f*g; deeper nesting would need re-centered jets of C_1.
    """
    n = weight.n
    fp = _as_jet_poly(f, n)
    gp = _as_jet_poly(g, n, what="second multiplier")
    hp = _as_jet_poly(h, n, what="third multiplier")
    if m == 0:
        return (fp.constant_term() * (gp.constant_term() * hp.constant_term())
                - (fp.constant_term() * gp.constant_term()) * hp.constant_term())
    if m != 1:
        raise PreconditionError(
            "associativity check supports m <= 1; deeper nesting needs "
            "re-centered jets of C_1")

    def c1(a, b):
        return star_coefficients(weight, a, b, 1).values[1]

    left = fp.constant_term() * c1(gp, hp) + c1(fp, gp * hp)
    right = c1(fp * gp, hp) + c1(fp, gp) * hp.constant_term()
    return left - right
