"""Closed-form kernels of the Gaussian model weights and their finite quotients.

The model weight with eigenvalues lam is phi0(z) = sum_j lam_j |z_j|^2 over
C^n, weight density e^{-2k phi0}.  Everything here is per-axis separable, so
kernels are explicit products; the quotient versions sum the model kernel over
a finite unitary group preserving the weight, which is the reproducing kernel
of the invariant subspace for the (1/|G|)-normalized measure.
"""

from __future__ import annotations

from math import factorial, pi

import numpy as np

from .errors import PreconditionError
from .polyalg import WirtingerPoly


def model_constant(lam):
    """Leading diagonal density prod_j lam_j / pi^n."""
    out = 1.0
    for l in lam:
        out *= float(l) / pi
    return out


def model_phase(x, y, lam):
    """Psi with e^{ik Psi(x,y)} = B_{k phi0}(x,y) / (k^n C0)."""
    return 2j * sum(float(l) * (abs(yj) ** 2 - xj * np.conj(yj))
                    for l, xj, yj in zip(lam, x, y))


def bergman_model_kernel(x, y, k, lam):
    """B_{k phi0}(x, y): holomorphic in x, includes the weight at y."""
    out = 1.0 + 0.0j
    for l, xj, yj in zip(lam, x, y):
        l = float(l)
        out *= (k * l / pi) * np.exp(2 * k * l * (xj * np.conj(yj) - abs(yj) ** 2))
    return out


def sesquiholomorphic_model_kernel(x, y, k, lam):
    """Weight-free reproducing kernel: holomorphic in x, antiholomorphic in y.

    Equals bergman_model_kernel(x, y, k, lam) * e^{+2k phi0(y)}; use this form
    when the weight factor is written separately in an integral.
    """
    out = 1.0 + 0.0j
    for l, xj, yj in zip(lam, x, y):
        l = float(l)
        out *= (k * l / pi) * np.exp(2 * k * l * xj * np.conj(yj))
    return out


def localized_model_kernel(x, y, k, lam):
    """Weight-symmetrized kernel e^{-k phi0(x)} B(x,y) e^{+k phi0(y)}... i.e.
    the conjugation that makes |kernel| symmetric in x and y."""
    out = 1.0 + 0.0j
    for l, xj, yj in zip(lam, x, y):
        l = float(l)
        out *= (k * l / pi) * np.exp(
            k * l * (2 * xj * np.conj(yj) - abs(xj) ** 2 - abs(yj) ** 2))
    return out


def gaussian_monomial_norm(alpha, k, lam):
    """Squared L^2 norm of z^alpha against e^{-2k phi0} d lambda, full space.

    Per axis: 2 pi a! / (2 k lam)^{a+1}.
    """
    out = 1.0
    for a, l in zip(alpha, lam):
        out *= 2.0 * pi * factorial(a) / (2.0 * k * float(l)) ** (a + 1)
    return out


class FiniteUnitaryGroup:
    """Finite subgroup of U(n) given by generators, closed by multiplication."""

    def __init__(self, elements):
        self.elements = [np.asarray(g, dtype=complex) for g in elements]

    @classmethod
    def trivial(cls, n):
        return cls([np.eye(n)])

    @classmethod
    def from_generators(cls, generators, tol=1e-8, cap=256):
        gens = [np.asarray(g, dtype=complex) for g in generators]
        if not gens:
            raise PreconditionError("need at least one generator")
        n = gens[0].shape[0]
        for g in gens:
            if g.shape != (n, n):
                raise PreconditionError("generator shapes differ")
            if not np.allclose(g @ g.conj().T, np.eye(n), atol=1e-10):
                raise PreconditionError("generator is not unitary")
        elements = [np.eye(n, dtype=complex)]

        def seen(m):
            return any(np.max(np.abs(m - e)) <= tol for e in elements)

        frontier = [np.eye(n, dtype=complex)]
        while frontier:
            nxt = []
            for e in frontier:
                for g in gens:
                    m = e @ g
                    if not seen(m):
                        elements.append(m)
                        nxt.append(m)
                        if len(elements) > cap:
                            raise PreconditionError(
                                f"group closure exceeded cap of {cap} elements")
            frontier = nxt
        return cls(elements)

    def __len__(self):
        return len(self.elements)

    def check_weight_invariance(self, lam, tol=1e-10):
        L = np.diag([float(l) for l in lam])
        for g in self.elements:
            if not np.allclose(g.conj().T @ L @ g, L, atol=tol):
                raise PreconditionError(
                    "group does not preserve the model weight")


def act_on_poly(g, p):
    """Pullback of a complex-frame polynomial by z -> g z."""
    n = p.nvars
    g = np.asarray(g, dtype=complex)
    apolys = []
    bpolys = []
    for j in range(n):
        row_a = WirtingerPoly.zero(n)
        row_b = WirtingerPoly.zero(n)
        for m in range(n):
            if g[j, m] != 0:
                row_a = row_a + WirtingerPoly.variable(n, m, complex(g[j, m]))
                row_b = row_b + WirtingerPoly.conj_variable(n, m, complex(np.conj(g[j, m])))
        apolys.append(row_a)
        bpolys.append(row_b)
    return p.subs_pair(apolys, bpolys)


def is_invariant_poly(p, group, tol=1e-10):
    for g in group.elements:
        diff = act_on_poly(g, p) - p
        if diff.is_zero:
            continue
        if max(abs(complex(c)) for c in diff.terms.values()) > tol:
            return False
    return True


def orbifold_bergman_kernel(x, y, k, lam, group):
    """Invariant-subspace kernel for the (1/|G|) d lambda measure."""
    return sum(bergman_model_kernel(x, g @ np.asarray(y, dtype=complex), k, lam)
               for g in group.elements)


def orbifold_localized_kernel(x, y, k, lam, group):
    return sum(localized_model_kernel(x, g @ np.asarray(y, dtype=complex), k, lam)
               for g in group.elements)


def orbifold_limit_kernel(x, y, lam, group):
    """Fixed-point scaling limit: k^{-n} P_k(x/sqrt k, y/sqrt k) is k-free."""
    return orbifold_localized_kernel(x, y, 1.0, lam, group)
