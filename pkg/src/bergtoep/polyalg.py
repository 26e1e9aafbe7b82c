"""Sparse polynomial and k-series arithmetic underlying the expansion machinery.

Every variable slot of a polynomial carries a pair of exponents: one for the
slot's primary variable and one for its partner.  For complex coordinate
frames the partner is the conjugate variable; for position/covector alphabets
it is the second real component.  Ring operations never look at the
interpretation.  Differentiation and evaluation helpers work on the raw
alpha/beta exponents, and each module that owns an alphabet calls them with
the slots it means.

Coefficients are either exact (int, Fraction, CRat) or inexact (float,
complex).  Mixed arithmetic degrades to complex; exact pipelines are expected
to keep their inputs exact throughout.
"""

from __future__ import annotations

from fractions import Fraction
from math import factorial
from numbers import Rational


class CRat:
    """Complex number with exact rational real and imaginary parts."""

    __slots__ = ("re", "im")

    def __init__(self, re=0, im=0):
        self.re = re if isinstance(re, Fraction) else Fraction(re)
        self.im = im if isinstance(im, Fraction) else Fraction(im)

    @classmethod
    def i(cls):
        return cls(0, 1)

    def conjugate(self):
        return CRat(self.re, -self.im)

    @property
    def is_zero(self):
        return not self.re and not self.im

    def __complex__(self):
        return complex(float(self.re), float(self.im))

    def __bool__(self):
        return not self.is_zero

    def __add__(self, other):
        if isinstance(other, CRat):
            return CRat(self.re + other.re, self.im + other.im)
        if isinstance(other, Rational):
            return CRat(self.re + other, self.im)
        if isinstance(other, (float, complex)):
            return complex(self) + other
        return NotImplemented

    __radd__ = __add__

    def __neg__(self):
        return CRat(-self.re, -self.im)

    def __sub__(self, other):
        return self + (-other if isinstance(other, (CRat, Rational)) else -complex(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, CRat):
            return CRat(self.re * other.re - self.im * other.im,
                        self.re * other.im + self.im * other.re)
        if isinstance(other, Rational):
            return CRat(self.re * other, self.im * other)
        if isinstance(other, (float, complex)):
            return complex(self) * other
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Rational):
            return CRat(self.re / other, self.im / other)
        if isinstance(other, CRat):
            d = other.re * other.re + other.im * other.im
            if not d:
                raise ZeroDivisionError("division by zero CRat")
            return self * CRat(other.re / d, -other.im / d)
        if isinstance(other, (float, complex)):
            return complex(self) / other
        return NotImplemented

    def __rtruediv__(self, other):
        d = self.re * self.re + self.im * self.im
        if not d:
            raise ZeroDivisionError("division by zero CRat")
        inv = CRat(self.re / d, -self.im / d)
        return inv * other

    def __pow__(self, n):
        if not isinstance(n, int) or n < 0:
            return NotImplemented
        out = CRat(1)
        base = self
        while n:
            if n & 1:
                out = out * base
            base = base * base
            n >>= 1
        return out

    def __eq__(self, other):
        if isinstance(other, CRat):
            return self.re == other.re and self.im == other.im
        if isinstance(other, Rational):
            return self.im == 0 and self.re == other
        if isinstance(other, (float, complex)):
            return complex(self) == other
        return NotImplemented

    def __hash__(self):
        if self.im == 0:
            return hash(self.re)
        return hash((self.re, self.im))

    def __repr__(self):
        if self.im == 0:
            return f"CRat({self.re})"
        return f"CRat({self.re}, {self.im})"


def conj_scalar(c):
    if isinstance(c, CRat):
        return c.conjugate()
    if isinstance(c, Rational):
        return c
    return c.conjugate() if isinstance(c, complex) else c


def scalar_is_zero(c):
    if isinstance(c, CRat):
        return c.is_zero
    return c == 0


def to_complex(c):
    return complex(c)


def is_exact_scalar(c):
    return isinstance(c, (CRat, Rational))


def crat_from(value):
    """Coerce value to CRat; floats are converted exactly (binary value)."""
    if isinstance(value, CRat):
        return value
    if isinstance(value, Rational):
        return CRat(Fraction(value))
    if isinstance(value, float):
        return CRat(Fraction(value))
    if isinstance(value, complex):
        return CRat(Fraction(value.real), Fraction(value.imag))
    raise TypeError(f"cannot make CRat from {type(value).__name__}")


_ZEROS = {}


def _zeros(n):
    t = _ZEROS.get(n)
    if t is None:
        t = (0,) * n
        _ZEROS[n] = t
    return t


class WirtingerPoly:
    """Sparse polynomial over paired-exponent variable slots.

    terms maps (alpha, beta) -> coefficient, where alpha and beta are
    integer tuples of length nvars.  Zero coefficients are never stored.
    """

    __slots__ = ("nvars", "terms")

    def __init__(self, nvars, terms=None):
        self.nvars = nvars
        self.terms = terms if terms is not None else {}

    # ---------------------------------------------------------------- builders

    @classmethod
    def zero(cls, nvars):
        return cls(nvars)

    @classmethod
    def const(cls, nvars, c):
        if scalar_is_zero(c):
            return cls(nvars)
        z = _zeros(nvars)
        return cls(nvars, {(z, z): c})

    @classmethod
    def variable(cls, nvars, j, c=1):
        a = [0] * nvars
        a[j] = 1
        return cls(nvars, {(tuple(a), _zeros(nvars)): c})

    @classmethod
    def conj_variable(cls, nvars, j, c=1):
        b = [0] * nvars
        b[j] = 1
        return cls(nvars, {(_zeros(nvars), tuple(b)): c})

    @classmethod
    def monomial(cls, nvars, alpha, beta, c=1):
        if scalar_is_zero(c):
            return cls(nvars)
        return cls(nvars, {(tuple(alpha), tuple(beta)): c})

    # ------------------------------------------------------------- inspection

    @property
    def is_zero(self):
        return not self.terms

    def degree(self):
        """Total degree, or -1 for the zero polynomial."""
        if not self.terms:
            return -1
        return max(sum(a) + sum(b) for a, b in self.terms)

    def valuation(self):
        """Minimal total degree of a term; None for the zero polynomial."""
        if not self.terms:
            return None
        return min(sum(a) + sum(b) for a, b in self.terms)

    def constant_term(self):
        z = _zeros(self.nvars)
        return self.terms.get((z, z), 0)

    def coeff(self, alpha, beta):
        return self.terms.get((tuple(alpha), tuple(beta)), 0)

    def canonical_terms(self):
        """Terms sorted by (total degree, alpha, beta); the output order."""
        return sorted(self.terms.items(),
                      key=lambda kv: (sum(kv[0][0]) + sum(kv[0][1]), kv[0][0], kv[0][1]))

    def __eq__(self, other):
        if not isinstance(other, WirtingerPoly):
            return NotImplemented
        return self.nvars == other.nvars and self.terms == other.terms

    def __repr__(self):
        if self.is_zero:
            return f"WirtingerPoly({self.nvars}, 0)"
        parts = []
        for (a, b), c in self.canonical_terms()[:6]:
            parts.append(f"{c!r}*a{list(a)}b{list(b)}")
        more = "" if len(self.terms) <= 6 else f" +{len(self.terms) - 6} terms"
        return f"WirtingerPoly({self.nvars}, {' + '.join(parts)}{more})"

    # ------------------------------------------------------------------- ring

    def __add__(self, other):
        if isinstance(other, WirtingerPoly):
            if other.nvars != self.nvars:
                raise ValueError("nvars mismatch")
            out = dict(self.terms)
            for key, c in other.terms.items():
                s = out.get(key, 0) + c
                if scalar_is_zero(s):
                    out.pop(key, None)
                else:
                    out[key] = s
            return WirtingerPoly(self.nvars, out)
        return self + WirtingerPoly.const(self.nvars, other)

    __radd__ = __add__

    def __neg__(self):
        return WirtingerPoly(self.nvars, {k: -c for k, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-other if isinstance(other, WirtingerPoly)
                       else WirtingerPoly.const(self.nvars, -other))

    def __rsub__(self, other):
        return (-self) + other

    def scale(self, c):
        if scalar_is_zero(c):
            return WirtingerPoly(self.nvars)
        return WirtingerPoly(self.nvars, {k: v * c for k, v in self.terms.items()})

    def __mul__(self, other):
        if isinstance(other, WirtingerPoly):
            if other.nvars != self.nvars:
                raise ValueError("nvars mismatch")
            out = {}
            for (a1, b1), c1 in self.terms.items():
                for (a2, b2), c2 in other.terms.items():
                    key = (tuple(x + y for x, y in zip(a1, a2)),
                           tuple(x + y for x, y in zip(b1, b2)))
                    s = out.get(key, 0) + c1 * c2
                    if scalar_is_zero(s):
                        out.pop(key, None)
                    else:
                        out[key] = s
            return WirtingerPoly(self.nvars, out)
        return self.scale(other)

    __rmul__ = __mul__

    def mul_truncated(self, other, max_degree):
        """Product with terms above max_degree total degree dropped."""
        if other.nvars != self.nvars:
            raise ValueError("nvars mismatch")
        out = {}
        deg2 = {k: sum(k[0]) + sum(k[1]) for k in other.terms}
        for (a1, b1), c1 in self.terms.items():
            d1 = sum(a1) + sum(b1)
            if d1 > max_degree:
                continue
            for key2, c2 in other.terms.items():
                if d1 + deg2[key2] > max_degree:
                    continue
                a2, b2 = key2
                key = (tuple(x + y for x, y in zip(a1, a2)),
                       tuple(x + y for x, y in zip(b1, b2)))
                s = out.get(key, 0) + c1 * c2
                if scalar_is_zero(s):
                    out.pop(key, None)
                else:
                    out[key] = s
        return WirtingerPoly(self.nvars, out)

    def __pow__(self, n):
        if not isinstance(n, int) or n < 0:
            raise ValueError("nonnegative integer powers only")
        out = WirtingerPoly.const(self.nvars, 1)
        base = self
        while n:
            if n & 1:
                out = out * base
            base = base * base if n > 1 else base
            n >>= 1
        return out

    # ---------------------------------------------------------- degree slices

    def truncate(self, max_degree):
        return WirtingerPoly(self.nvars, {
            k: c for k, c in self.terms.items()
            if sum(k[0]) + sum(k[1]) <= max_degree})

    def homogeneous_part(self, d):
        return WirtingerPoly(self.nvars, {
            k: c for k, c in self.terms.items()
            if sum(k[0]) + sum(k[1]) == d})

    def chop(self, tol=1e-14):
        """Drop float-noise coefficients below tol in magnitude (inexact mode)."""
        out = {}
        for k, c in self.terms.items():
            if is_exact_scalar(c):
                out[k] = c
            elif abs(c) > tol:
                out[k] = c
        return WirtingerPoly(self.nvars, out)

    # ------------------------------------------------------------ derivatives

    def derive_alpha(self, j):
        out = {}
        for (a, b), c in self.terms.items():
            e = a[j]
            if not e:
                continue
            a2 = a[:j] + (e - 1,) + a[j + 1:]
            key = (a2, b)
            s = out.get(key, 0) + c * e
            if scalar_is_zero(s):
                out.pop(key, None)
            else:
                out[key] = s
        return WirtingerPoly(self.nvars, out)

    def derive_beta(self, j):
        out = {}
        for (a, b), c in self.terms.items():
            e = b[j]
            if not e:
                continue
            b2 = b[:j] + (e - 1,) + b[j + 1:]
            key = (a, b2)
            s = out.get(key, 0) + c * e
            if scalar_is_zero(s):
                out.pop(key, None)
            else:
                out[key] = s
        return WirtingerPoly(self.nvars, out)

    # ------------------------------------------------- evaluation/substitution

    def eval_pair(self, avals, bvals):
        """Evaluate with slot j's primary variable = avals[j], partner = bvals[j]."""
        total = 0
        for (a, b), c in self.terms.items():
            v = c
            for j in range(self.nvars):
                if a[j]:
                    v = v * avals[j] ** a[j]
                if b[j]:
                    v = v * bvals[j] ** b[j]
            total = total + v
        return total

    def eval_z(self, x, y=None):
        """Polarized evaluation for complex frames: primary = x, partner = conj(y).

        With y omitted this is plain evaluation at x.
        """
        if y is None:
            y = x
        return self.eval_pair(list(x), [conj_scalar(v) for v in y])

    def conj_z(self):
        """Complex conjugate for complex frames: swaps exponent pairs."""
        return WirtingerPoly(self.nvars,
                             {(b, a): conj_scalar(c) for (a, b), c in self.terms.items()})

    def subs_pair(self, apolys, bpolys, max_degree=None):
        """Substitute a polynomial for every variable.

        apolys[j] replaces slot j's primary variable, bpolys[j] its partner.
        All replacement polynomials must share one target nvars.  max_degree
        truncates intermediate products.
        """
        tgt = apolys[0].nvars if apolys else bpolys[0].nvars
        one = WirtingerPoly.const(tgt, 1)
        pow_cache = {}

        def _pow(p_id, p, e):
            key = (p_id, e)
            got = pow_cache.get(key)
            if got is None:
                if e == 1:
                    got = p
                else:
                    prev = _pow(p_id, p, e - 1)
                    got = (prev.mul_truncated(p, max_degree)
                           if max_degree is not None else prev * p)
                pow_cache[key] = got
            return got

        out = WirtingerPoly.zero(tgt)
        for (a, b), c in self.terms.items():
            acc = one.scale(c)
            for j in range(self.nvars):
                if a[j]:
                    f = _pow(("a", j), apolys[j], a[j])
                    acc = acc.mul_truncated(f, max_degree) if max_degree is not None else acc * f
                    if acc.is_zero:
                        break
                if b[j]:
                    f = _pow(("b", j), bpolys[j], b[j])
                    acc = acc.mul_truncated(f, max_degree) if max_degree is not None else acc * f
                    if acc.is_zero:
                        break
            out = out + acc
        return out

    def embed(self, new_nvars, offset):
        """Reinterpret in a larger slot space, slots shifted by offset."""
        if offset + self.nvars > new_nvars:
            raise ValueError("embedding does not fit")
        pre = _zeros(offset)
        post = _zeros(new_nvars - offset - self.nvars)
        return WirtingerPoly(new_nvars, {
            (pre + a + post, pre + b + post): c for (a, b), c in self.terms.items()})

    def restrict_zero(self, var_indices):
        """Set the listed slots (both members of the pair) to zero."""
        idx = set(var_indices)
        out = {}
        for (a, b), c in self.terms.items():
            if any(a[j] or b[j] for j in idx):
                continue
            out[(a, b)] = c
        return WirtingerPoly(self.nvars, out)

    # ------------------------------------------------------------------- JSON

    def to_records(self, exact=False):
        # exact=True emits re/im as fraction strings; requires exact coefficients
        recs = []
        for (a, b), c in self.canonical_terms():
            if exact:
                cr = crat_from(c)
                recs.append({"a": list(a), "b": list(b),
                             "re": str(cr.re), "im": str(cr.im)})
            else:
                cc = complex(c)
                recs.append({"a": list(a), "b": list(b), "re": cc.real, "im": cc.imag})
        return recs

    @classmethod
    def from_records(cls, nvars, records, exact=False):
        terms = {}
        for r in records:
            a = tuple(int(e) for e in r["a"])
            b = tuple(int(e) for e in r["b"])
            if len(a) != nvars or len(b) != nvars:
                raise ValueError("exponent tuple length does not match nvars")
            if any(e < 0 for e in a + b):
                raise ValueError("negative exponent")
            re = r.get("re", 0.0)
            im = r.get("im", 0.0)
            if exact:
                c = CRat(Fraction(re), Fraction(im))
            else:
                c = complex(float(Fraction(re)) if isinstance(re, str) else re,
                            float(Fraction(im)) if isinstance(im, str) else im)
            key = (a, b)
            s = terms.get(key, 0) + c
            if scalar_is_zero(s):
                terms.pop(key, None)
            else:
                terms[key] = s
        return cls(nvars, terms)


def real_dx(p, j):
    """d/d(Re coordinate) of slot j in a complex frame."""
    return p.derive_alpha(j) + p.derive_beta(j)


def real_dy(p, j):
    """d/d(Im coordinate) of slot j in a complex frame."""
    i1 = CRat(0, 1)
    return (p.derive_alpha(j) - p.derive_beta(j)).scale(i1)


def exp_truncated(p, max_degree):
    """exp(p) as a polynomial mod degrees above max_degree.

    Requires p to have no constant term.
    """
    if not scalar_is_zero(p.constant_term()):
        raise ValueError("exp_truncated needs vanishing constant term")
    out = WirtingerPoly.const(p.nvars, 1)
    term = WirtingerPoly.const(p.nvars, 1)
    val = p.valuation()
    if val is None:
        return out
    jmax = max_degree // val
    for j in range(1, jmax + 1):
        term = term.mul_truncated(p, max_degree).scale(Fraction(1, j))
        if term.is_zero:
            break
        out = out + term
    return out


def inverse_truncated(p, max_degree):
    """1/p mod degrees above max_degree; p must have nonzero constant term."""
    c0 = p.constant_term()
    if scalar_is_zero(c0):
        raise ValueError("inverse_truncated needs nonzero constant term")
    inv0 = CRat(1) / c0 if is_exact_scalar(c0) else 1 / c0
    q = WirtingerPoly.const(p.nvars, 1) - p.scale(inv0)   # valuation >= 1
    out = WirtingerPoly.const(p.nvars, 1)
    term = WirtingerPoly.const(p.nvars, 1)
    val = q.valuation()
    if val is None:
        return out.scale(inv0)
    for _ in range(max_degree // val):
        term = term.mul_truncated(q, max_degree)
        if term.is_zero:
            break
        out = out + term
    return out.scale(inv0)


def log_truncated(p, max_degree):
    """log(p) mod degrees above max_degree; p must have constant term 1."""
    c0 = p.constant_term()
    if c0 != 1:
        raise ValueError("log_truncated needs constant term exactly 1")
    q = p - WirtingerPoly.const(p.nvars, 1)
    out = WirtingerPoly.zero(p.nvars)
    term = WirtingerPoly.const(p.nvars, 1)
    val = q.valuation()
    if val is None:
        return out
    for j in range(1, max_degree // val + 1):
        term = term.mul_truncated(q, max_degree)
        if term.is_zero:
            break
        out = out + term.scale(Fraction((-1) ** (j + 1), j))
    return out


class KSeries:
    """Finite series sum_m coeffs[m] * k**(lead - m).

    Coefficients may be scalars or WirtingerPoly values, but not mixed within
    one series.  The series is exact bookkeeping: arithmetic keeps every
    generated power unless a cutoff is requested, and truncation_order reports
    the depth below the leading power.
    """

    __slots__ = ("lead", "coeffs")

    def __init__(self, lead, coeffs):
        self.lead = lead
        self.coeffs = list(coeffs)
        self._normalize()

    def _normalize(self):
        while self.coeffs and self._iszero(self.coeffs[0]):
            self.coeffs.pop(0)
            self.lead -= 1
        while self.coeffs and self._iszero(self.coeffs[-1]):
            self.coeffs.pop()

    @staticmethod
    def _iszero(c):
        if isinstance(c, WirtingerPoly):
            return c.is_zero
        return scalar_is_zero(c)

    @classmethod
    def zero(cls):
        return cls(0, [])

    @classmethod
    def const(cls, c, power=0):
        return cls(power, [c])

    @property
    def is_zero(self):
        return not self.coeffs

    @property
    def truncation_order(self):
        return len(self.coeffs) - 1 if self.coeffs else 0

    def powers(self):
        return [self.lead - m for m in range(len(self.coeffs))]

    def kpow(self, p, zero=0):
        """Coefficient of k**p."""
        m = self.lead - p
        if 0 <= m < len(self.coeffs):
            return self.coeffs[m]
        return zero

    def _zero_like(self):
        for c in self.coeffs:
            if isinstance(c, WirtingerPoly):
                return WirtingerPoly.zero(c.nvars)
        return 0

    def __add__(self, other):
        if not isinstance(other, KSeries):
            return NotImplemented
        if self.is_zero:
            return KSeries(other.lead, other.coeffs)
        if other.is_zero:
            return KSeries(self.lead, self.coeffs)
        zero_elem = self._zero_like()
        hi = max(self.lead, other.lead)
        lo = min(self.lead - len(self.coeffs) + 1, other.lead - len(other.coeffs) + 1)
        out = []
        for p in range(hi, lo - 1, -1):
            a = self.kpow(p, None)
            b = other.kpow(p, None)
            if a is None and b is None:
                out.append(zero_elem)
            elif a is None:
                out.append(b)
            elif b is None:
                out.append(a)
            else:
                out.append(a + b)
        return KSeries(hi, out)

    def __neg__(self):
        return KSeries(self.lead, [-c for c in self.coeffs])

    def __sub__(self, other):
        return self + (-other)

    def scale(self, c):
        return KSeries(self.lead, [v * c if not isinstance(v, WirtingerPoly) else v.scale(c)
                                   for v in self.coeffs])

    def shift_power(self, d):
        return KSeries(self.lead + d, self.coeffs)

    def mul(self, other, min_power=None, max_degree=None):
        """Product; keeps all powers >= min_power (all, if None).

        max_degree prunes polynomial coefficients by total degree.
        """
        if self.is_zero or other.is_zero:
            return KSeries.zero()
        zero_elem = self._zero_like()
        hi = self.lead + other.lead
        lo = (self.lead - len(self.coeffs) + 1) + (other.lead - len(other.coeffs) + 1)
        if min_power is not None:
            lo = max(lo, min_power)
        out = []
        for p in range(hi, lo - 1, -1):
            acc = None
            for p1 in range(self.lead, self.lead - len(self.coeffs), -1):
                c1 = self.kpow(p1, None)
                c2 = other.kpow(p - p1, None)
                if c1 is None or c2 is None:
                    continue
                if isinstance(c1, WirtingerPoly):
                    v = c1.mul_truncated(c2, max_degree) if max_degree is not None else c1 * c2
                else:
                    v = c1 * c2
                acc = v if acc is None else acc + v
            out.append(acc if acc is not None else zero_elem)
        return KSeries(hi, out)

    def __mul__(self, other):
        if isinstance(other, KSeries):
            return self.mul(other)
        return self.scale(other)

    __rmul__ = __mul__

    def truncate_below(self, min_power):
        keep = [c for p, c in zip(self.powers(), self.coeffs) if p >= min_power]
        return KSeries(self.lead, keep)

    def map(self, fn):
        return KSeries(self.lead, [fn(c) for c in self.coeffs])

    def eval_at(self, k):
        total = 0
        for p, c in zip(self.powers(), self.coeffs):
            total = total + complex(c) * float(k) ** p
        return total

    def __eq__(self, other):
        if not isinstance(other, KSeries):
            return NotImplemented
        return self.lead == other.lead and self.coeffs == other.coeffs

    def __repr__(self):
        if self.is_zero:
            return "KSeries(0)"
        bits = [f"k^{p}*{c!r}" for p, c in zip(self.powers(), self.coeffs)]
        return "KSeries(" + " + ".join(bits) + ")"


def binom_fraction(n, j):
    return Fraction(factorial(n), factorial(j) * factorial(n - j))
