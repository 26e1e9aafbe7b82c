"""Brute-force numerical Bergman kernels, Toeplitz matrices and norms.

Everything here is quadrature + dense linear algebra on spans of (possibly
group-symmetrized) holomorphic monomials: the independent ground truth that
the symbolic expansion modules are tested against.

Conventions: inner product <u, v> = integral of u conj(v) e^{-2k phi} vol
over the polydisc with per-axis radius R/sqrt(n) (inscribed in the recorded
coercivity ball).  With a finite group the measure carries an extra 1/|G|.
"""

import math

import numpy as np

from .errors import ConditioningError, PreconditionError
from .model_kernel import (
    FiniteUnitaryGroup,
    act_on_poly,
    gaussian_monomial_norm,
    is_invariant_poly,
)
from .polyalg import WirtingerPoly, to_complex


def radial_node_count(k, lam_max, radius):
    """Node heuristic: resolve the Gaussian scale sqrt(2 k lam) over [0, R]."""
    return max(40, math.ceil(1.2 * math.sqrt(2.0 * k * lam_max) * radius) + 20)


def monomial_exponents(n, max_degree):
    """All alpha in N_0^n with |alpha| <= max_degree, ordered by (total, alpha)."""
    out = []

    def rec(prefix, remaining):
        if len(prefix) == n:
            out.append(tuple(prefix))
            return
        for e in range(remaining + 1):
            rec(prefix + [e], remaining - e)

    for total in range(max_degree + 1):
        level = []

        def rec_level(prefix, left):
            if len(prefix) == n - 1:
                level.append(tuple(prefix) + (left,))
                return
            for e in range(left + 1):
                rec_level(prefix + [e], left - e)

        rec_level([], total)
        out.extend(sorted(level))
    return out


class PolarGrid:
    """Tensor product of per-axis polar quadratures (radial Gauss-Legendre on
    [0, R_axis] times uniform angles), with weights 2 r dr dtheta per axis."""

    def __init__(self, n, radius_axis, num_radial, num_angular):
        if num_radial < 2 or num_angular < 4:
            raise PreconditionError("quadrature grid too small")
        t, w = np.polynomial.legendre.leggauss(num_radial)
        r = 0.5 * radius_axis * (t + 1.0)
        # measure convention: per complex axis d lambda = i dz ^ dzbar
        # = 2 dx dy = 2 r dr dtheta (matches the model-kernel normalization
        # B(0,0) = k^n prod lam/pi)
        wr = radius_axis * w * r
        theta = 2.0 * np.pi * np.arange(num_angular) / num_angular
        wt = 2.0 * np.pi / num_angular
        axis_pts = (r[:, None] * np.exp(1j * theta)[None, :]).ravel()
        axis_w = np.repeat(wr, num_angular) * wt
        pts = axis_pts.reshape(-1, 1)
        wts = axis_w
        for _ in range(n - 1):
            m = pts.shape[0]
            p2 = np.empty((m * axis_pts.size, pts.shape[1] + 1), dtype=complex)
            p2[:, :-1] = np.repeat(pts, axis_pts.size, axis=0)
            p2[:, -1] = np.tile(axis_pts, m)
            pts = p2
            wts = np.repeat(wts, axis_w.size) * np.tile(axis_w, m)
        self.n = n
        self.radius_axis = radius_axis
        self.num_radial = num_radial
        self.num_angular = num_angular
        self.points = pts
        self.weights = wts

    def integrate(self, values):
        return complex(np.asarray(values) @ self.weights)


def eval_poly_on_nodes(p, pts):
    """Vectorized evaluation of a WirtingerPoly at node rows (z, zbar pairing)."""
    out = np.zeros(pts.shape[0], dtype=complex)
    conj_pts = np.conj(pts)
    for (a, b), c in p.terms.items():
        term = np.full(pts.shape[0], to_complex(c), dtype=complex)
        for j, e in enumerate(a):
            if e:
                term *= pts[:, j] ** e
        for j, e in enumerate(b):
            if e:
                term *= conj_pts[:, j] ** e
        out += term
    return out


def model_reproducing_residual(lam, q, points, k=1.0, radius=None,
                               num_radial=None, num_angular=None):
    """Worst-case quadrature residual of the pure-quadratic reproducing
    identity: integral of K_model(x, y) q(y) e^{-2 k phi0(y)} d lambda(y)
    minus q(x), maximized over the given evaluation points.

    K_model is the weight-free sesquiholomorphic model kernel, so the exact
    value is q(x) for every holomorphic polynomial q; the return value is
    quadrature plus tail error only.  Residuals are relative against
    max(1, |q(x)|).
    """
    lamf = [float(l) for l in lam]
    n = len(lamf)
    if q.nvars != n:
        raise PreconditionError("polynomial variable count mismatch")
    if any(any(b) for (_, b) in q.terms):
        raise PreconditionError(
            "reproducing identity needs a holomorphic polynomial")
    if radius is None:
        radius = math.sqrt(24.0 / (k * min(lamf)))
    if num_radial is None:
        num_radial = radial_node_count(k, max(lamf), radius)
    if num_angular is None:
        num_angular = max(64, 4 * q.degree() + 4)
    grid = PolarGrid(n, radius, num_radial, num_angular)
    pts = grid.points
    expo = np.zeros(pts.shape[0])
    for j, l in enumerate(lamf):
        expo += l * np.abs(pts[:, j]) ** 2
    qvals = eval_poly_on_nodes(q, pts)
    base = qvals * np.exp(-2.0 * k * expo)
    pref = 1.0
    for l in lamf:
        pref *= k * l / math.pi
    worst = 0.0
    for x in points:
        kern = np.zeros(pts.shape[0], dtype=complex)
        for j, l in enumerate(lamf):
            kern += 2.0 * k * l * complex(x[j]) * np.conj(pts[:, j])
        val = grid.integrate(pref * np.exp(kern) * base)
        target = complex(q.eval_z(x))
        worst = max(worst, abs(val - target) / max(1.0, abs(target)))
    return worst


def _invariant_basis_matrix(n, exponents, group, k, lam):
    """Orthonormal (in model-scaled coordinates) basis of the G-invariant
    span of the monomials z^alpha, as a (num_monomials, num_invariant) matrix."""
    idx = {a: i for i, a in enumerate(exponents)}
    m = len(exponents)
    P = np.zeros((m, m), dtype=complex)
    scale = np.array([math.sqrt(gaussian_monomial_norm(a, k, lam))
                      for a in exponents])
    for i, a in enumerate(exponents):
        mono = WirtingerPoly.monomial(n, a, (0,) * n, 1)
        acc = np.zeros(m, dtype=complex)
        for g in group.elements:
            q = act_on_poly(g, mono)
            for (aa, bb), c in q.terms.items():
                if any(bb):
                    raise PreconditionError("group action left the holomorphic span")
                j = idx.get(aa)
                if j is None:
                    # unitary action preserves total degree; must stay in range
                    raise PreconditionError("group action left the degree range")
                acc[j] += to_complex(c)
        # Reynolds column in model-orthonormal coordinates
        P[:, i] = acc * scale / (len(group) * scale[i])
    P = 0.5 * (P + P.conj().T)
    evals, evecs = np.linalg.eigh(P)
    keep = evals > 0.5
    if not np.any(keep):
        raise PreconditionError("no invariant monomials at this degree cutoff")
    return evecs[:, keep]


class ToeplitzResult:
    def __init__(self, matrix, norm):
        self.matrix = matrix
        self.norm = norm


class GramOracle:
    """Gram matrix of scaled holomorphic monomials under the weighted measure,
    with kernel/Toeplitz evaluation on top.

    Parameters
    ----------
    weight : WeightSpec
    k : float, semiclassical parameter (> 0)
    max_degree : int, monomial degree cutoff D
    group : FiniteUnitaryGroup, optional; restricts to the invariant span and
        switches to the (1/|G|) measure convention
    num_radial, num_angular : quadrature sizes (defaults from heuristics)
    chunk : number of quadrature nodes per assembly block
    """

    def __init__(self, weight, k, max_degree, group=None,
                 num_radial=None, num_angular=None, chunk=200000):
        if k <= 0:
            raise PreconditionError("k must be positive")
        if max_degree < 0:
            raise PreconditionError("max_degree must be >= 0")
        n = weight.n
        lamf = weight.lam_floats()
        self.weight = weight
        self.k = float(k)
        self.max_degree = int(max_degree)
        self.group = group
        radius_axis = weight.radius / math.sqrt(n)
        if num_radial is None:
            num_radial = radial_node_count(self.k, max(lamf), radius_axis)
        if num_angular is None:
            num_angular = max(4 * self.max_degree + 4, 24)
        self.grid = PolarGrid(n, radius_axis, num_radial, num_angular)
        self.exponents = monomial_exponents(n, self.max_degree)
        self.scale = np.array([gaussian_monomial_norm(a, self.k, lamf) ** -0.5
                               for a in self.exponents])
        if group is not None:
            group.check_weight_invariance(weight.lam)
            if not is_invariant_poly(weight.phi1, group):
                raise PreconditionError("phi1 is not invariant under the group")
            if not is_invariant_poly(weight.vol, group):
                raise PreconditionError("vol is not invariant under the group")
            self.basis_matrix = _invariant_basis_matrix(
                n, self.exponents, group, self.k, lamf)
        else:
            self.basis_matrix = None
        self.coercivity = weight.coercivity_or_estimate()
        self._chunk = int(chunk)
        self.gram = self._assemble_gram()
        try:
            chol = np.linalg.cholesky(self.gram)
        except np.linalg.LinAlgError:
            raise ConditioningError(
                "Gram matrix is not numerically positive definite; "
                "raise quadrature resolution or lower max_degree") from None
        self.chol = chol
        self.gram_inv = np.linalg.inv(self.gram)
        self.diagnostics = {
            "num_nodes": self.grid.points.shape[0],
            "num_basis": self.gram.shape[0],
            "condition_number": float(np.linalg.cond(self.gram)),
            "min_chol_diag": float(np.min(np.real(np.diag(chol)))),
            "tail_exponent": float(self.k * self.coercivity * radius_axis ** 2),
        }

    # ------------------------------------------------------------ assembly

    def _weight_values(self, pts):
        lamf = self.weight.lam_floats()
        e = np.zeros(pts.shape[0])
        for j, l in enumerate(lamf):
            e += l * np.abs(pts[:, j]) ** 2
        if not self.weight.phi1.is_zero:
            e += np.real(eval_poly_on_nodes(self.weight.phi1, pts))
        w = np.exp(-2.0 * self.k * e)
        volp = self.weight.vol
        if volp.degree() > 0:
            w *= np.real(eval_poly_on_nodes(volp, pts))
        return w

    def _monomial_matrix(self, pts):
        A = np.empty((pts.shape[0], len(self.exponents)), dtype=complex)
        for i, a in enumerate(self.exponents):
            col = np.full(pts.shape[0], self.scale[i], dtype=complex)
            for j, e in enumerate(a):
                if e:
                    col *= pts[:, j] ** e
            A[:, i] = col
        return A

    def _assemble_gram(self):
        m = len(self.exponents)
        G = np.zeros((m, m), dtype=complex)
        pts = self.grid.points
        wts = self.grid.weights
        for start in range(0, pts.shape[0], self._chunk):
            sl = slice(start, start + self._chunk)
            block = pts[sl]
            A = self._monomial_matrix(block)
            wtot = wts[sl] * self._weight_values(block)
            G += (A.conj() * wtot[:, None]).T @ A
        # G[i, j] = int conj(f_i) f_j w = <f_j, f_i>; with this orientation
        # ||sum u_j f_j||^2 = u^dagger G u, which is what the Cholesky-based
        # Toeplitz orthonormalization assumes
        G = 0.5 * (G + G.conj().T)
        if self.basis_matrix is not None:
            G = self.basis_matrix.conj().T @ G @ self.basis_matrix
            G = G / len(self.group)
            G = 0.5 * (G + G.conj().T)
        return G

    # ------------------------------------------------------------ evaluation

    def basis_eval(self, x):
        x = np.asarray(x, dtype=complex).reshape(1, -1)
        v = self._monomial_matrix(x)[0]
        if self.basis_matrix is not None:
            v = v @ self.basis_matrix
        return v

    def bergman(self, x, y):
        """Sesquiholomorphic kernel sum_{ab} (G^{-1})_{ab} f_a(x) conj(f_b(y))."""
        vx = self.basis_eval(x)
        vy = self.basis_eval(y)
        return complex(vx @ (self.gram_inv @ np.conj(vy)))

    def localized(self, x, y):
        fx = math.exp(-self.k * self.weight.phi_value(x))
        fy = math.exp(-self.k * self.weight.phi_value(y))
        return fx * self.bergman(x, y) * fy

    def scaled_bergman(self, x, y):
        s = 1.0 / math.sqrt(self.k)
        xs = tuple(z * s for z in x)
        ys = tuple(z * s for z in y)
        return self.bergman(xs, ys) / self.k ** self.weight.n

    def scaled_localized(self, x, y):
        s = 1.0 / math.sqrt(self.k)
        xs = tuple(z * s for z in x)
        ys = tuple(z * s for z in y)
        return self.localized(xs, ys) / self.k ** self.weight.n

    def diagonal(self, x):
        return self.bergman(x, x).real

    # -------------------------------------------------------------- toeplitz

    def toeplitz(self, f):
        """Compression of multiplication by f to the basis span, expressed in
        the orthonormalized basis: T = L^{-1} F L^{-dagger}, G = L L^dagger.

        F[i, j] = <f e_j, e_i>.  Returns the matrix and its largest singular
        value (= operator norm; complex f allowed).
        """
        if f.nvars != self.weight.n:
            raise PreconditionError("observable variable count mismatch")
        m = self.gram.shape[0]
        F = np.zeros((m, m), dtype=complex)
        pts = self.grid.points
        wts = self.grid.weights
        for start in range(0, pts.shape[0], self._chunk):
            sl = slice(start, start + self._chunk)
            block = pts[sl]
            A = self._monomial_matrix(block)
            if self.basis_matrix is not None:
                A = A @ self.basis_matrix
            wtot = wts[sl] * self._weight_values(block) \
                * eval_poly_on_nodes(f, block)
            F += (A.conj() * wtot[:, None]).T @ A
        # F accumulated as sum w f conj(e_i) e_j with conjugate giving the row
        if self.group is not None:
            F = F / len(self.group)
        L = self.chol
        T = np.linalg.solve(L, np.linalg.solve(L, F.conj().T).conj().T)
        norm = float(np.linalg.norm(T, 2))
        return ToeplitzResult(T, norm)

    # ------------------------------------------------------------ diagnostics

    def convergence_check(self, x=None, y=None, factor=2):
        """Rebuild with a denser grid; report kernel and Gram drift."""
        if x is None:
            x = (0.0,) * self.weight.n
        if y is None:
            y = x
        denser = GramOracle(self.weight, self.k, self.max_degree,
                            group=self.group,
                            num_radial=factor * self.grid.num_radial,
                            num_angular=factor * self.grid.num_angular,
                            chunk=self._chunk)
        b0 = self.bergman(x, y)
        b1 = denser.bergman(x, y)
        gd = np.max(np.abs(self.gram - denser.gram)) / max(
            1e-300, np.max(np.abs(denser.gram)))
        return {
            "kernel_rel_delta": abs(b0 - b1) / max(1e-300, abs(b1)),
            "gram_rel_delta": float(gd),
        }


def invariant_gram(weight, k, max_degree, group, **kwargs):
    """Invariant-subspace oracle with the (1/|G|) measure convention."""
    if not isinstance(group, FiniteUnitaryGroup):
        raise PreconditionError("group must be a FiniteUnitaryGroup")
    return GramOracle(weight, k, max_degree, group=group, **kwargs)
