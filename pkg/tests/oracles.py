"""Independent reference values used by the test-suite.

Nothing here imports sbmfk: each oracle is a closed form or a separate
numerical method, so agreement with the package is a genuine cross-check.
Conventions match the package: B has E[B_t^2] = 2t, generator Delta, and
Psi(u) = u^{alpha/2} gives (-Delta)^{alpha/2}.
"""
from __future__ import annotations

import math

import numpy as np
from scipy import stats
from scipy.linalg import eigh
from scipy.special import eval_jacobi, gamma, gammaln, roots_jacobi


def getoor_mean_exit(alpha: float, d: int, radius: float, x: float) -> float:
    """E^x[tau] for the isotropic alpha-stable process leaving the ball B(0, radius)."""
    return (gamma(d / 2) * (radius ** 2 - x ** 2) ** (alpha / 2)
            / (2 ** alpha * gamma(1 + alpha / 2) * gamma((d + alpha) / 2)))


def brownian_exit_moment(k: int, x: float) -> float:
    """E^x[tau^k] on (-1, 1) for generator d^2/dx^2, k = 1, 2 (iterated Dynkin)."""
    if k == 1:
        return (1 - x * x) / 2
    if k == 2:
        return (5 - 6 * x * x + x ** 4) / 12
    raise ValueError("only k = 1, 2")


def brownian_hit_probability(x: float, r: float) -> float:
    """P^x(hit (-r, r) before leaving (-1, 1)) for 1-D Brownian motion, r < x < 1."""
    return (1 - x) / (1 - r)


def gaussian_kernel(t: float, d: int, r: float) -> float:
    return (4 * math.pi * t) ** (-d / 2) * math.exp(-r * r / (4 * t))


def cauchy_kernel(t: float, d: int, r: float) -> float:
    return gamma((d + 1) / 2) / math.pi ** ((d + 1) / 2) * t / (t * t + r * r) ** ((d + 1) / 2)


def half_stable_subordinator(t: float):
    """Law of S_t for Psi(u) = u^{1/2}: a Levy distribution with scale t^2 / 2."""
    return stats.levy(loc=0.0, scale=t * t / 2)


def stable_levy_density(alpha: float, y: float) -> float:
    a = alpha / 2
    return a / gamma(1 - a) * y ** (-1 - a)


def dirichlet_laplacian_eigenvalue(half_width: float, k: int = 1) -> float:
    """k-th eigenvalue of -d^2/dx^2 on (-L, L) with zero boundary values."""
    return (k * math.pi / (2 * half_width)) ** 2


def _galerkin_system(alpha: float, m: int, potential=None):
    # basis (1-x^2)^{a/2} P_n^{(a/2,a/2)}; (-Delta)^{a/2} maps it to Gamma(a+n+1)/n! P_n
    p = alpha / 2
    xq, wq = roots_jacobi(200, alpha, alpha)
    P = np.array([eval_jacobi(n, p, p, xq) for n in range(m)])
    mass = (P * wq) @ P.T
    xq2, wq2 = roots_jacobi(200, p, p)
    P2 = np.array([eval_jacobi(n, p, p, xq2) for n in range(m)])
    norms = np.diag((P2 * wq2) @ P2.T)
    mu = np.exp(gammaln(alpha + np.arange(m) + 1) - gammaln(np.arange(m) + 1))
    stiff = np.diag(mu * norms)
    if potential is not None:
        stiff = stiff + (P * wq * potential(xq)) @ P.T
    return stiff, mass


def galerkin_eigenvalue(alpha: float, m: int = 40, potential=None) -> float:
    """Principal Dirichlet eigenvalue of (-Delta)^{alpha/2} + V on (-1, 1) by a Jacobi spectral Galerkin method."""
    stiff, mass = _galerkin_system(alpha, m, potential)
    return float(eigh(stiff, mass, eigvals_only=True, subset_by_index=[0, 0])[0])


def galerkin_eigenfunction(alpha: float, x, m: int = 40, potential=None) -> np.ndarray:
    """Principal eigenfunction at points ``x``, normalized to 1 at the origin."""
    stiff, mass = _galerkin_system(alpha, m, potential)
    _, vec = eigh(stiff, mass, subset_by_index=[0, 0])
    c = vec[:, 0]
    p = alpha / 2

    def phi(z):
        z = np.asarray(z, dtype=float)
        return (1 - z * z) ** p * sum(c[n] * eval_jacobi(n, p, p, z) for n in range(m))

    return phi(x) / phi(0.0)


def lane_emden_exponent(p, q, mu1, mu2):
    """Hand arithmetic of the Lane-Emden critical quantity, as nested fractions."""
    from fractions import Fraction as F

    p, q, mu1, mu2 = F(p), F(q), F(mu1), F(mu2)
    a = (2 * q * mu2 + 2 * p * q * mu1) / (p * q - 1)
    b = (2 * p * mu1 + 2 * p * q * mu2) / (p * q - 1)
    return max(a, b)


def brownian_discounted_torsion(c: float, x: float) -> float:
    """E^x[int_0^tau e^{-c s} ds] on (-1, 1) for generator d^2/dx^2: (1 - cosh(sqrt(c) x)/cosh(sqrt(c))) / c."""
    r = math.sqrt(c)
    return (1 - math.cosh(r * x) / math.cosh(r)) / c


def brownian_survival(s: float, x: float = 0.0, terms: int = 200) -> float:
    """P^x(tau > s) on (-1, 1) by the sine series of the heat equation u_t = u_xx."""
    total = 0.0
    for n in range(1, 2 * terms, 2):
        k = n * math.pi / 2
        total += 4 / (n * math.pi) * math.sin(n * math.pi / 2) * math.cos(k * x) * math.exp(-k * k * s)
    return total
