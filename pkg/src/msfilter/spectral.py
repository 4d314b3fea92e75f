"""Hermite eigenbasis, Gaussian quadrature and the likelihood-CLT variances.

For a hidden OU process with invariant law N(m, s^2) the generator eigenfunctions
are the normalized probabilist Hermite polynomials ``He_i((x - m)/s) / sqrt(i!)``
with eigenvalues ``i``.  Projecting the observation function onto them gives the
coefficients from which the stationary variance ``v2`` and the initial-condition
variance ``u2`` are assembled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import mpmath
import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy import integrate

from msfilter.errors import NumericalError

__all__ = [
    "hermite",
    "normalized_hermite",
    "gh_nodes",
    "half_gh_nodes",
    "SpectralTable",
    "SummabilityReport",
    "eigen_coefficients",
    "v_squared",
    "u_squared",
    "summability_report",
    "gram_matrix",
    "invariant_mean",
    "HBAR_OFFSET_CANDIDATES",
]

SQRT_2PI = math.sqrt(2.0 * math.pi)

# Two closed forms circulate for E[max(u, 0)] under N(0, 1); only the first is correct.
HBAR_OFFSET_CANDIDATES = {
    "1/sqrt(2*pi)": 1.0 / SQRT_2PI,
    "1/(2*sqrt(pi))": 1.0 / (2.0 * math.sqrt(math.pi)),
}


def hermite(i: int, x):
    """Probabilist Hermite polynomial He_i evaluated by the three-term recurrence."""
    if i < 0:
        raise ValueError("Hermite index must be nonnegative")
    x = np.asarray(x, dtype=float)
    prev = np.ones_like(x)
    if i == 0:
        return prev if prev.ndim else float(prev)
    cur = x.copy()
    for k in range(1, i):
        prev, cur = cur, x * cur - k * prev
    return cur if cur.ndim else float(cur)


def normalized_hermite(i: int, u):
    """``He_i(u) / sqrt(i!)``, via the recurrence on the normalized polynomials.

    Working with the normalized family avoids the factorial growth of He_i.
    """
    if i < 0:
        raise ValueError("Hermite index must be nonnegative")
    u = np.asarray(u, dtype=float)
    prev = np.ones_like(u)
    if i == 0:
        return prev if prev.ndim else float(prev)
    cur = u.copy()
    for k in range(1, i):
        prev, cur = cur, (u * cur - math.sqrt(k) * prev) / math.sqrt(k + 1)
    return cur if cur.ndim else float(cur)


@lru_cache(maxsize=32)
def _gh_cached(n):
    x, w = hermegauss(n)
    w = w / SQRT_2PI
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gh_nodes(n: int):
    """Gauss-Hermite rule for the standard normal density.

    ``sum(w * f(x))`` approximates ``E f(Z)`` for ``Z ~ N(0, 1)`` and is exact for
    polynomials of degree ``2n - 1``.
    """
    if n < 1:
        raise ValueError("node count must be >= 1")
    try:
        x, w = _gh_cached(int(n))
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise ValueError(f"Gauss-Hermite node computation failed for n={n}") from exc
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(w))):
        raise ValueError(f"Gauss-Hermite node computation failed for n={n}")
    return x, w


@lru_cache(maxsize=32)
def _half_gh_cached(n):
    # Chebyshev algorithm on the exact half-normal moments, in extended
    # precision because the moment map is badly conditioned.
    with mpmath.workdps(60 + 3 * n):
        m = [
            mpmath.power(2, mpmath.mpf(k - 1) / 2) * mpmath.gamma(mpmath.mpf(k + 1) / 2)
            / mpmath.sqrt(2 * mpmath.pi)
            for k in range(2 * n)
        ]
        a = [mpmath.mpf(0)] * n
        b = [mpmath.mpf(0)] * n
        sig_prev = [mpmath.mpf(0)] * (2 * n)
        sig = list(m)
        a[0] = m[1] / m[0]
        b[0] = m[0]
        for k in range(1, n):
            new = [mpmath.mpf(0)] * (2 * n)
            for l in range(k, 2 * n - k):
                new[l] = sig[l + 1] - a[k - 1] * sig[l] - b[k - 1] * sig_prev[l]
            a[k] = new[k + 1] / new[k] - sig[k] / sig[k - 1]
            b[k] = new[k] / sig[k - 1]
            sig_prev, sig = sig, new
        alpha = np.array([float(v) for v in a])
        beta = np.array([float(v) for v in b])
    jac = np.diag(alpha) + np.diag(np.sqrt(beta[1:]), 1) + np.diag(np.sqrt(beta[1:]), -1)
    x, vec = np.linalg.eigh(jac)
    w = beta[0] * vec[0] ** 2
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def half_gh_nodes(n: int):
    """Gauss rule for the standard normal density restricted to ``[0, inf)``.

    Weights sum to 1/2; exact for polynomials of degree ``2n - 1`` on the half line.
    Mirroring the nodes gives the rule for ``(-inf, 0]``.
    """
    if n < 1:
        raise ValueError("node count must be >= 1")
    return _half_gh_cached(int(n))


def _standard_rule(n_quad, split):
    if not split:
        return gh_nodes(n_quad)
    x, w = half_gh_nodes(n_quad)
    return np.concatenate([-x[::-1], x]), np.concatenate([w[::-1], w])


def gram_matrix(model, theta: float, K: int, n_quad: int = 64, split: bool = False):
    """Quadrature Gram matrix of the model's eigenfunctions 0..K under the invariant law."""
    if model.gaussian_invariant is None:
        raise ValueError("gram_matrix needs a Gaussian invariant law")
    mean, std = model.gaussian_invariant(theta)
    u, w = _standard_rule(n_quad, split)
    psi = np.array([model.basis(i, theta, mean + std * u) for i in range(K + 1)])
    return (psi * w) @ psi.T


@dataclass(frozen=True)
class SpectralTable:
    """Truncated eigen-coefficients of an observation function and derived quantities.

    ``coeffs[i]`` is the projection on the i-th eigenfunction (i = 0..K);
    ``eigenvalues[i - 1]`` is the rate of eigenfunction i (i = 1..K).
    """

    theta: float
    K: int
    coeffs: np.ndarray
    eigenvalues: np.ndarray
    hbar: float
    hdot: float
    v2: float
    n_quad: int


def _project(model, theta, K, n_quad, split):
    if model.gaussian_invariant is not None:
        mean, std = model.gaussian_invariant(theta)
        u, w = _standard_rule(n_quad, split)
        x = mean + std * u
        hx = np.broadcast_to(np.asarray(model.observation(theta, x), dtype=float), x.shape)
        psi = np.array([model.basis(i, theta, x) for i in range(K + 1)])
        coeffs = psi @ (w * hx)
    else:
        if model.invariant_density is None:
            raise ValueError(
                f"model {model.name!r} has neither a Gaussian invariant law nor an invariant_density"
            )
        coeffs = np.empty(K + 1)
        for i in range(K + 1):
            def integrand(x, i=i):
                return (
                    float(model.observation(theta, x))
                    * float(model.basis(i, theta, x))
                    * float(model.invariant_density(theta, x))
                )

            left, _ = integrate.quad(integrand, -np.inf, 0.0, limit=200)
            right, _ = integrate.quad(integrand, 0.0, np.inf, limit=200)
            coeffs[i] = left + right
    if not np.all(np.isfinite(coeffs)):
        raise NumericalError(f"non-finite eigen-coefficient at theta={theta}")
    return coeffs


def invariant_mean(model, theta: float, n_quad: int = 64, split: bool = True) -> float:
    """Invariant mean of ``model.observation(theta, .)``; the zeroth coefficient alone."""
    return float(_project(model, theta, 0, n_quad, split)[0])


def _v2(coeffs, eigenvalues):
    c = np.asarray(coeffs, dtype=float)
    lam = np.asarray(eigenvalues, dtype=float)
    cc = np.outer(c, c)
    return float(np.sum(cc * cc / (lam[:, None] + lam[None, :])))


def eigen_coefficients(
    model, theta: float, K: int = 20, n_quad: int = 64, split: bool = True, hdot_step: float = 1e-4
) -> SpectralTable:
    """Project ``model.observation(theta, .)`` onto the first ``K + 1`` eigenfunctions.

    With ``split=True`` the Gaussian integral is evaluated as two half-line
    Gauss rules meeting at the invariant mean, where ``max(x, theta)`` has its kink.
    The derivative of the invariant mean in theta is a central difference.
    """
    if K < 1:
        raise ValueError("truncation K must be >= 1")
    if n_quad < 2 * K:
        raise ValueError(f"n_quad={n_quad} must be at least 2*K={2 * K}")
    coeffs = _project(model, theta, K, n_quad, split)
    up = _project(model, theta + hdot_step, 0, n_quad, split)[0]
    down = _project(model, theta - hdot_step, 0, n_quad, split)[0]
    hdot = (up - down) / (2.0 * hdot_step)
    eigenvalues = np.array([model.eigenvalue(i, theta) for i in range(1, K + 1)], dtype=float)
    coeffs.setflags(write=False)
    eigenvalues.setflags(write=False)
    return SpectralTable(
        theta=float(theta),
        K=K,
        coeffs=coeffs,
        eigenvalues=eigenvalues,
        hbar=float(coeffs[0]),
        hdot=float(hdot),
        v2=_v2(coeffs[1:], eigenvalues),
        n_quad=n_quad,
    )


def v_squared(table: SpectralTable) -> float:
    """Stationary CLT variance: sum over i, j >= 1 of (c_i c_j)^2 / (lambda_i + lambda_j)."""
    return _v2(table.coeffs[1 : table.K + 1], table.eigenvalues[: table.K])


def u_squared(table: SpectralTable, pi0) -> float:
    """Initial-condition CLT variance.

    ``pi0[i - 1]`` is the mean of eigenfunction i under the initial law; all zeros
    for an invariant start.
    """
    pi0 = np.asarray(pi0, dtype=float)
    if pi0.shape != (table.K,):
        raise ValueError(f"pi0 must have length K={table.K}")
    a = table.coeffs[1 : table.K + 1] * pi0
    lam = table.eigenvalues
    return float(np.sum(np.outer(a, a) / (lam[:, None] + lam[None, :])))


@dataclass(frozen=True)
class SummabilityReport:
    k_half: int
    k_full: int
    abs_sum_half: float
    abs_sum_full: float
    abs_sum_rel_change: float
    double_sum_half: float
    double_sum_full: float
    double_sum_rel_change: float


def _rel_change(a, b):
    return 0.0 if b == 0.0 else abs(b - a) / abs(b)


def summability_report(table: SpectralTable) -> SummabilityReport:
    """Partial sums of sum|c_i| and of sum |c_i c_j| (1/lambda_i + 1/lambda_j) at K/2 and K."""
    if table.K < 2:
        raise ValueError("summability_report needs K >= 2")

    def sums(k):
        c = np.abs(table.coeffs[1 : k + 1])
        inv = 1.0 / table.eigenvalues[:k]
        return float(c.sum()), float(np.sum(np.outer(c, c) * (inv[:, None] + inv[None, :])))

    k_half = table.K // 2
    a_half, d_half = sums(k_half)
    a_full, d_full = sums(table.K)
    return SummabilityReport(
        k_half=k_half,
        k_full=table.K,
        abs_sum_half=a_half,
        abs_sum_full=a_full,
        abs_sum_rel_change=_rel_change(a_half, a_full),
        double_sum_half=d_half,
        double_sum_full=d_full,
        double_sum_rel_change=_rel_change(d_half, d_full),
    )
