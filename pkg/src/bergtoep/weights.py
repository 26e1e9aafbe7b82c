"""Weight data: quadratic part, higher-order jet, volume density, oracle ball.

A weight is phi(z) = sum_j lambda_j |z_j|^2 + phi1(z) with phi1 a real-valued
polynomial jet of valuation >= 3, plus a real-valued volume density jet vol
with vol(0) = 1.  The numerical oracle integrates over the ball of radius R,
where 2*phi >= c*|z|^2 must hold for a recorded constant c > 0 (checked by
sampling, not proved).
"""

from fractions import Fraction
from numbers import Rational

import numpy as np

from .errors import InputError, PreconditionError
from .polyalg import (
    CRat,
    WirtingerPoly,
    conj_scalar,
    is_exact_scalar,
    scalar_is_zero,
    to_complex,
)

_REALITY_TOL = 1e-12
_SAMPLE_SEED = 20240801


def check_real_valued(p, what="polynomial", tol=_REALITY_TOL):
    """Require coeff(a, b) == conj(coeff(b, a)) for every stored term."""
    for (a, b), c in p.terms.items():
        diff = c - conj_scalar(p.coeff(b, a))
        if is_exact_scalar(diff):
            if not scalar_is_zero(diff):
                raise PreconditionError(
                    f"{what} is not real-valued (term alpha={a}, beta={b})")
        else:
            scale = max(1.0, abs(to_complex(c)))
            if abs(to_complex(diff)) > tol * scale:
                raise PreconditionError(
                    f"{what} is not real-valued (term alpha={a}, beta={b})")


def _lam_entry_ok(l):
    if isinstance(l, bool):
        return False
    if isinstance(l, Rational):
        return l > 0
    if isinstance(l, float):
        return l > 0
    return False


class WeightSpec:
    """Local weight phi = sum lambda_j |z_j|^2 + phi1 with volume density.

    Parameters
    ----------
    lam : sequence of positive rationals or floats
        Quadratic eigenvalues, one per complex coordinate.
    phi1 : WirtingerPoly, optional
        Real-valued higher-order part, valuation >= 3.  Defaults to 0.
    vol : WirtingerPoly, optional
        Real-valued volume density with vol(0) = 1.  Defaults to 1.
    radius : float
        Oracle integration-ball radius R.
    coercivity : float, optional
        Recorded constant c with 2*phi >= c*|z|^2 on the ball; verified by
        sampling when given.
    """

    def __init__(self, lam, phi1=None, vol=None, radius=3.0, coercivity=None,
                 check_coercivity_now=True):
        lam = tuple(lam)
        if not lam:
            raise PreconditionError("lambda vector is empty")
        for l in lam:
            if not _lam_entry_ok(l):
                raise PreconditionError(f"lambda entries must be positive reals, got {l!r}")
        n = len(lam)
        if phi1 is None:
            phi1 = WirtingerPoly.zero(n)
        if vol is None:
            vol = WirtingerPoly.const(n, 1)
        if phi1.nvars != n or vol.nvars != n:
            raise PreconditionError("phi1/vol variable count does not match lambda")
        check_real_valued(phi1, "phi1")
        check_real_valued(vol, "vol")
        v = phi1.valuation()
        if v is not None and v < 3:
            raise PreconditionError(f"phi1 must have valuation >= 3, got {v}")
        ct = vol.constant_term() - 1
        if is_exact_scalar(ct):
            if not scalar_is_zero(ct):
                raise PreconditionError("vol(0) must equal 1")
        elif abs(to_complex(ct)) > _REALITY_TOL:
            raise PreconditionError("vol(0) must equal 1")
        radius = float(radius)
        if not radius > 0:
            raise PreconditionError("radius must be positive")
        self.lam = lam
        self.phi1 = phi1
        self.vol = vol
        self.radius = radius
        self.coercivity = None if coercivity is None else float(coercivity)
        if self.coercivity is not None:
            if not self.coercivity > 0:
                raise PreconditionError("coercivity constant must be positive")
            if check_coercivity_now:
                self.check_coercivity(self.coercivity)

    @property
    def n(self):
        return len(self.lam)

    @property
    def is_exact(self):
        if not all(isinstance(l, Rational) for l in self.lam):
            return False
        for p in (self.phi1, self.vol):
            if not all(is_exact_scalar(c) for c in p.terms.values()):
                return False
        return True

    def lam_floats(self):
        return tuple(float(l) for l in self.lam)

    def phi0_poly(self):
        n = self.n
        p = WirtingerPoly.zero(n)
        for j, l in enumerate(self.lam):
            c = CRat(Fraction(l)) if isinstance(l, Rational) else l
            a = [0] * n
            a[j] = 1
            p = p + WirtingerPoly.monomial(n, tuple(a), tuple(a), c)
        return p

    def phi_poly(self):
        return self.phi0_poly() + self.phi1

    def phi0_value(self, point):
        return sum(float(l) * abs(z) ** 2 for l, z in zip(self.lam, point))

    def phi_value(self, point):
        return self.phi0_value(point) + to_complex(self.phi1.eval_z(point)).real

    def vol_value(self, point):
        return to_complex(self.vol.eval_z(point)).real

    def sample_points(self, count=400):
        """Deterministic sample of the integration ball (excluding 0)."""
        rng = np.random.default_rng(_SAMPLE_SEED)
        n = self.n
        pts = []
        for _ in range(count):
            v = rng.normal(size=2 * n)
            norm = np.linalg.norm(v)
            if norm < 1e-12:
                continue
            # uniform-in-ball radius plus a few near-boundary samples
            r = self.radius * rng.uniform() ** (1.0 / (2 * n))
            w = v / norm * max(r, 1e-3 * self.radius)
            pts.append(tuple(complex(w[2 * j], w[2 * j + 1]) for j in range(n)))
        for j in range(n):
            e = [0.0] * n
            e[j] = self.radius
            pts.append(tuple(complex(x) for x in e))
        return pts

    def estimate_coercivity(self, count=400):
        """min over sampled z of 2*phi(z)/|z|^2 (can be <= 0 if not coercive)."""
        best = None
        for z in self.sample_points(count):
            r2 = sum(abs(w) ** 2 for w in z)
            ratio = 2.0 * self.phi_value(z) / r2
            if best is None or ratio < best:
                best = ratio
        return best

    def check_coercivity(self, c, count=400, slack=1e-9):
        c = float(c)
        for z in self.sample_points(count):
            r2 = sum(abs(w) ** 2 for w in z)
            if 2.0 * self.phi_value(z) < c * r2 * (1.0 - slack) - slack:
                raise PreconditionError(
                    f"2*phi < {c}*|z|^2 at sampled point {z} (|z|={r2 ** 0.5:.3g})")

    def coercivity_or_estimate(self):
        if self.coercivity is not None:
            return self.coercivity
        est = self.estimate_coercivity()
        if est is None or est <= 0:
            raise PreconditionError(
                "weight is not coercive on the sampled ball; shrink the radius")
        return 0.9 * est

    def __eq__(self, other):
        if not isinstance(other, WeightSpec):
            return NotImplemented
        return (self.lam == other.lam and self.phi1 == other.phi1
                and self.vol == other.vol and self.radius == other.radius
                and self.coercivity == other.coercivity)

    def __repr__(self):
        return (f"WeightSpec(n={self.n}, lam={self.lam}, "
                f"phi1_terms={len(self.phi1.terms)}, vol_terms={len(self.vol.terms)}, "
                f"R={self.radius}, c={self.coercivity})")

    # JSON schema: {"n", "lambda": [..], "phi1": [records], "vol": [records],
    #               "R", "c"} with rationals as "p/q" strings in exact mode.
    def to_json_dict(self):
        exact = self.is_exact
        lam_out = [str(Fraction(l)) if isinstance(l, Rational) else float(l)
                   for l in self.lam]
        d = {
            "n": self.n,
            "lambda": lam_out,
            "phi1": self.phi1.to_records(exact=exact),
            "vol": self.vol.to_records(exact=exact),
            "R": self.radius,
        }
        if self.coercivity is not None:
            d["c"] = self.coercivity
        return d

    @classmethod
    def from_json_dict(cls, d):
        if not isinstance(d, dict):
            raise InputError("weight spec must be a JSON object")
        missing = [k for k in ("n", "lambda", "phi1", "vol", "R") if k not in d]
        if missing:
            raise InputError(f"weight spec missing keys: {', '.join(missing)}")
        try:
            n = int(d["n"])
        except (TypeError, ValueError):
            raise InputError("weight spec field 'n' must be an integer") from None
        raw_lam = d["lambda"]
        if not isinstance(raw_lam, list) or len(raw_lam) != n:
            raise InputError("weight spec field 'lambda' must be a list of length n")
        exact = all(isinstance(x, (str, int)) and not isinstance(x, bool)
                    for x in raw_lam)
        for key in ("phi1", "vol"):
            if not isinstance(d[key], list):
                raise InputError(f"weight spec field '{key}' must be a list of records")
            for r in d[key]:
                if not isinstance(r, dict) or "a" not in r or "b" not in r:
                    raise InputError(f"bad polynomial record in '{key}'")
                for part in ("re", "im"):
                    v = r.get(part, 0)
                    if isinstance(v, float):
                        exact = False
                    elif not isinstance(v, (str, int)):
                        raise InputError(f"bad coefficient in '{key}' record")
        lam = []
        for x in raw_lam:
            try:
                frac = Fraction(x) if isinstance(x, (str, int)) else None
                lam.append(frac if exact else
                           (float(frac) if frac is not None else float(x)))
            except (ValueError, TypeError, ZeroDivisionError):
                raise InputError(f"bad lambda entry {x!r}") from None
        try:
            phi1 = WirtingerPoly.from_records(n, d["phi1"], exact=exact)
            vol = WirtingerPoly.from_records(n, d["vol"], exact=exact)
        except (ValueError, TypeError, ZeroDivisionError) as e:
            raise InputError(f"bad polynomial records: {e}") from None
        try:
            radius = float(d["R"])
        except (TypeError, ValueError):
            raise InputError("weight spec field 'R' must be a number") from None
        coercivity = d.get("c")
        if coercivity is not None:
            try:
                coercivity = float(coercivity)
            except (TypeError, ValueError):
                raise InputError("weight spec field 'c' must be a number") from None
        return cls(lam, phi1, vol, radius=radius, coercivity=coercivity)


def flat_weight(lam=(1,), radius=3.0):
    lam = tuple(Fraction(l) for l in lam)
    return WeightSpec(lam, radius=radius, coercivity=float(2 * min(lam)))


def quartic_weight(c=Fraction(1, 10), lam=(Fraction(1),), radius=3.0):
    """n=1 weight with phi1 = c z^2 zbar^2 (c >= 0 keeps 2*min(lam) coercive)."""
    if len(lam) != 1:
        raise PreconditionError("quartic_weight is a 1-variable fixture")
    c = Fraction(c)
    if c < 0:
        raise PreconditionError("quartic fixture wants c >= 0")
    phi1 = WirtingerPoly.monomial(1, (2,), (2,), CRat(c))
    lam = tuple(Fraction(l) for l in lam)
    return WeightSpec(lam, phi1=phi1, radius=radius, coercivity=float(2 * min(lam)))


def volume_bump_weight(eps=Fraction(1, 10), lam=(Fraction(1),), radius=3.0):
    """Flat n=1 weight with vol = 1 + eps |z|^2."""
    eps = Fraction(eps)
    vol = WirtingerPoly.const(1, 1) + WirtingerPoly.monomial(1, (1,), (1,), CRat(eps))
    lam = tuple(Fraction(l) for l in lam)
    return WeightSpec(lam, vol=vol, radius=radius, coercivity=float(2 * min(lam)))


def cubic_quartic_weight(radius=2.0):
    """n=1, lam=1, phi1 = (1/10)(z^3 + zbar^3) + (1/20) z^2 zbar^2.

    On |z| <= 2: 2*phi >= r^2 (2 - 0.4 r + 0.1 r^2) >= 1.5 r^2.
    """
    c3 = CRat(Fraction(1, 10))
    c22 = CRat(Fraction(1, 20))
    phi1 = (WirtingerPoly.monomial(1, (3,), (0,), c3)
            + WirtingerPoly.monomial(1, (0,), (3,), c3)
            + WirtingerPoly.monomial(1, (2,), (2,), c22))
    return WeightSpec((Fraction(1),), phi1=phi1, radius=radius, coercivity=1.5)


def quartic_weight_2d(c=Fraction(1, 10), lam=(Fraction(1), Fraction(2)), radius=3.0):
    """n=2 weight with phi1 = c |z1|^2 |z2|^2."""
    if len(lam) != 2:
        raise PreconditionError("quartic_weight_2d is a 2-variable fixture")
    c = Fraction(c)
    if c < 0:
        raise PreconditionError("quartic fixture wants c >= 0")
    phi1 = WirtingerPoly.monomial(2, (1, 1), (1, 1), CRat(c))
    lam = tuple(Fraction(l) for l in lam)
    return WeightSpec(lam, phi1=phi1, radius=radius, coercivity=float(2 * min(lam)))


BUNDLED_WEIGHTS = {
    "flat": flat_weight,
    "quartic": quartic_weight,
    "volume-bump": volume_bump_weight,
    "cubic-quartic": cubic_quartic_weight,
    "quartic-2d": quartic_weight_2d,
}


def bundled_weight(name, **kwargs):
    try:
        builder = BUNDLED_WEIGHTS[name]
    except KeyError:
        raise InputError(f"unknown bundled weight {name!r}; "
                         f"choices: {sorted(BUNDLED_WEIGHTS)}") from None
    return builder(**kwargs)
