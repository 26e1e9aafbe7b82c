"""Normal form for weight jets: kill sub-cubic terms, diagonalize the Hessian.

Given a real-valued weight jet phi, a Hermitian frame metric M at the center,
and a volume-density jet, produce coordinates w = C^{-1} z in which

    phi(C w) - Re(gauge)  =  sum_a lambda_a |w_a|^2 + O(|w|^3),

with the new frame M-orthonormal and lambda sorted descending.  The gauge is
the holomorphic polynomial built from the constant, holomorphic-linear and
holomorphic-quadratic jets of phi; subtracting its real part is a line-bundle
frame change, so nothing of substance is lost.
"""

import numpy as np

from .errors import PreconditionError
from .polyalg import WirtingerPoly, conj_scalar, to_complex
from .weights import WeightSpec, check_real_valued

_HERM_TOL = 1e-10
_NOISE_TOL = 1e-12


def bidegree_part(p, da, db):
    """Terms of p with holomorphic degree da and antiholomorphic degree db."""
    terms = {}
    for (a, b), c in p.terms.items():
        if sum(a) == da and sum(b) == db:
            terms[(a, b)] = c
    return WirtingerPoly(p.nvars, terms)


def gauge_polynomial(phi):
    """Holomorphic polynomial whose real part carries phi's sub-cubic
    holomorphic data: const + 2*(linear) + 2*(quadratic) pure-z parts."""
    p00 = bidegree_part(phi, 0, 0)
    p10 = bidegree_part(phi, 1, 0)
    p20 = bidegree_part(phi, 2, 0)
    return p00 + p10.scale(2) + p20.scale(2)


def _hermitian_matrix(p, n):
    """Coefficient matrix of the (1,1) bidegree part: H[j, l] = coeff(z_j zbar_l)."""
    H = np.zeros((n, n), dtype=complex)
    for j in range(n):
        ej = tuple(1 if t == j else 0 for t in range(n))
        for l in range(n):
            el = tuple(1 if t == l else 0 for t in range(n))
            H[j, l] = to_complex(p.coeff(ej, el))
    return H


def _check_hermitian(M, what):
    scale = max(1.0, float(np.max(np.abs(M))))
    if float(np.max(np.abs(M - M.conj().T))) > _HERM_TOL * scale:
        raise PreconditionError(f"{what} is not Hermitian")
    return 0.5 * (M + M.conj().T)


def _linear_subs(p, C):
    """Substitute z_j = sum_a C[j, a] w_a (and the conjugate) into p."""
    n = p.nvars
    apolys = []
    bpolys = []
    for j in range(n):
        row = WirtingerPoly.zero(n)
        crow = WirtingerPoly.zero(n)
        for a in range(n):
            cja = complex(C[j, a])
            if cja != 0:
                row = row + WirtingerPoly.variable(n, a, cja)
                crow = crow + WirtingerPoly.conj_variable(n, a, cja.conjugate())
        apolys.append(row)
        bpolys.append(crow)
    return p.subs_pair(apolys, bpolys)


class RawJet:
    """Weight jet + frame metric + volume jet at a center point."""

    def __init__(self, n, phi_jet, metric=None, vol_jet=None):
        n = int(n)
        if n < 1:
            raise PreconditionError("need at least one complex variable")
        if phi_jet.nvars != n:
            raise PreconditionError("phi jet variable count mismatch")
        check_real_valued(phi_jet, "phi jet")
        if metric is None:
            metric = np.eye(n, dtype=complex)
        metric = np.asarray(metric, dtype=complex)
        if metric.shape != (n, n):
            raise PreconditionError("metric must be n x n")
        metric = _check_hermitian(metric, "metric")
        evals = np.linalg.eigvalsh(metric)
        if evals[0] <= _HERM_TOL * max(1.0, evals[-1]):
            raise PreconditionError("metric is not positive definite")
        if vol_jet is None:
            vol_jet = WirtingerPoly.const(n, 1)
        if vol_jet.nvars != n:
            raise PreconditionError("vol jet variable count mismatch")
        check_real_valued(vol_jet, "vol jet")
        v0 = to_complex(vol_jet.constant_term()).real
        if v0 <= 0:
            raise PreconditionError("vol(0) must be positive")
        self.n = n
        self.phi_jet = phi_jet
        self.metric = metric
        self.vol_jet = vol_jet

    def to_json_dict(self):
        return {
            "n": self.n,
            "phi": self.phi_jet.to_records(),
            "metric": [[[M.real, M.imag] for M in row] for row in self.metric],
            "vol": self.vol_jet.to_records(),
        }

    @classmethod
    def from_json_dict(cls, d):
        n = int(d["n"])
        phi = WirtingerPoly.from_records(n, d["phi"])
        metric = None
        if "metric" in d and d["metric"] is not None:
            metric = np.array([[complex(e[0], e[1]) for e in row]
                               for row in d["metric"]], dtype=complex)
        vol = None
        if "vol" in d and d["vol"] is not None:
            vol = WirtingerPoly.from_records(n, d["vol"])
        return cls(n, phi, metric, vol)


class NormalForm:
    """Result of normalize_weight.

    Attributes
    ----------
    lam : tuple of float, descending
    phi1 : WirtingerPoly, valuation >= 3, in the new w coordinates
    vol : WirtingerPoly, vol(0) = 1, in the new w coordinates
    coord_change : ndarray, z = coord_change @ w
    psi : WirtingerPoly, holomorphic gauge in the original z coordinates
    vol_scale : float, the constant the transformed volume was divided by
    residual_subcubic : float, max |coeff| of the sub-cubic noise that was
        pruned from phi1 (should be at float-eps scale)
    """

    def __init__(self, lam, phi1, vol, coord_change, psi, vol_scale,
                 residual_subcubic):
        self.lam = tuple(float(l) for l in lam)
        self.phi1 = phi1
        self.vol = vol
        self.coord_change = np.asarray(coord_change, dtype=complex)
        self.psi = psi
        self.vol_scale = float(vol_scale)
        self.residual_subcubic = float(residual_subcubic)

    @property
    def n(self):
        return len(self.lam)

    def weight_spec(self, radius=3.0, coercivity=None):
        """Package as a WeightSpec; requires all lambda positive."""
        if min(self.lam) <= 0:
            raise PreconditionError(
                f"normal form has non-positive lambda {self.lam}")
        return WeightSpec(self.lam, phi1=self.phi1, vol=self.vol,
                          radius=radius, coercivity=coercivity)

    def normalized_phi(self):
        n = self.n
        p = WirtingerPoly.zero(n)
        for j, l in enumerate(self.lam):
            ej = tuple(1 if t == j else 0 for t in range(n))
            p = p + WirtingerPoly.monomial(n, ej, ej, l)
        return p + self.phi1

    def reconstruct(self):
        """Rebuild (phi_jet, vol_jet) in the original z coordinates."""
        Cinv = np.linalg.inv(self.coord_change)
        phi_back = _linear_subs(self.normalized_phi(), Cinv)
        re_psi = (self.psi + self.psi.conj_z()).scale(0.5)
        phi_rec = phi_back + re_psi
        det2 = abs(np.linalg.det(self.coord_change)) ** 2
        vol_rec = _linear_subs(self.vol, Cinv).scale(self.vol_scale / det2)
        return phi_rec, vol_rec

    def to_json_dict(self):
        return {
            "n": self.n,
            "lambda": list(self.lam),
            "coord_change": [[[c.real, c.imag] for c in row]
                             for row in self.coord_change],
            "psi": self.psi.to_records(),
            "phi1": self.phi1.to_records(),
            "vol": self.vol.to_records(),
            "vol_scale": self.vol_scale,
            "residual_subcubic": self.residual_subcubic,
        }

    @classmethod
    def from_json_dict(cls, d):
        n = int(d["n"])
        C = np.array([[complex(e[0], e[1]) for e in row]
                      for row in d["coord_change"]], dtype=complex)
        return cls(
            d["lambda"],
            WirtingerPoly.from_records(n, d["phi1"]),
            WirtingerPoly.from_records(n, d["vol"]),
            C,
            WirtingerPoly.from_records(n, d["psi"]),
            d["vol_scale"],
            d.get("residual_subcubic", 0.0),
        )


def _phase_fix_columns(C):
    n = C.shape[0]
    for a in range(n):
        col = C[:, a]
        nz = np.flatnonzero(np.abs(col) > 1e-9 * max(1e-300, np.linalg.norm(col)))
        if nz.size:
            piv = col[nz[0]]
            C[:, a] = col * (abs(piv) / piv)
    return C


def normalize_weight(raw):
    """Gauge + metric-orthonormal linear change bringing a weight jet to
    sum lambda_a |w_a|^2 + O(|w|^3) with descending lambda.

    Returns a NormalForm.  lambda positivity is NOT required here; packaging
    into a WeightSpec (which does require it) is a separate step.
    """
    n = raw.n
    phi = raw.phi_jet
    psi = gauge_polynomial(phi)
    gauged = phi + (psi + psi.conj_z()).scale(-0.5)

    H = _check_hermitian(_hermitian_matrix(gauged, n), "weight Hessian")
    # orthonormalize the frame for conj(metric), then diagonalize conj(H):
    # with z = C w the (1,1) matrix maps to C^T H conj(C) and the metric to
    # C^T M conj(C), so the conjugated pencil (conj(M), conj(H)) is the one
    # reduced by congruence C^dagger (.) C.
    K = raw.metric.conj()
    kvals, kvecs = np.linalg.eigh(K)
    S = (kvecs * (kvals ** -0.5)) @ kvecs.conj().T
    A = _check_hermitian(S @ H.conj() @ S, "reduced Hessian")
    mu, U = np.linalg.eigh(A)
    order = np.argsort(-mu, kind="stable")
    lam = mu[order]
    C = _phase_fix_columns(S @ U[:, order])

    phi_new = _linear_subs(gauged, C)
    for j, l in enumerate(lam):
        ej = tuple(1 if t == j else 0 for t in range(n))
        phi_new = phi_new + WirtingerPoly.monomial(n, ej, ej, -l)
    # phi_new is now O(|w|^3) up to float noise; prune and record the noise
    residual = 0.0
    kept = {}
    for (a, b), c in phi_new.terms.items():
        if sum(a) + sum(b) < 3:
            residual = max(residual, abs(to_complex(c)))
        else:
            kept[(a, b)] = c
    phi1 = WirtingerPoly(n, kept)
    # symmetrize away float-level reality violations from the substitution
    sym = {}
    for (a, b), c in phi1.terms.items():
        cc = 0.5 * (to_complex(c) + to_complex(conj_scalar(phi1.coeff(b, a))))
        if cc != 0:
            sym[(a, b)] = cc
    phi1 = WirtingerPoly(n, sym)

    det2 = abs(np.linalg.det(C)) ** 2
    vol_new = _linear_subs(raw.vol_jet, C).scale(det2)
    vol_scale = to_complex(vol_new.constant_term()).real
    vol_final = vol_new.scale(1.0 / vol_scale)
    vsym = {}
    for (a, b), c in vol_final.terms.items():
        cc = 0.5 * (to_complex(c) + to_complex(conj_scalar(vol_final.coeff(b, a))))
        if cc != 0:
            vsym[(a, b)] = cc
    vol_final = WirtingerPoly(n, vsym)

    return NormalForm(lam, phi1, vol_final, C, psi, vol_scale, residual)
