"""Reduced and Monte-Carlo log-likelihoods of an observation path.

The Monte-Carlo estimator propagates independent hidden particles under the
candidate parameter (no resampling) and weights each by

    A = sum_k [ h(X_k) (Y_{k+1} - Y_k) - 0.5 h(X_k)^2 dt ]

with the left-endpoint (Ito) convention.  The log-likelihood estimate is
``log(mean(exp(A)))``, computed in log space.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from msfilter.errors import NumericalError
from msfilter.sde import _check_dt, _euler_hidden, initial_states

__all__ = [
    "LogLikEstimate",
    "DegenerateWeightsWarning",
    "log_sum_exp",
    "reduced_log_lik",
    "particle_accumulators",
    "mc_log_lik",
    "filter_mean",
    "clt_statistic",
]

_BLOCK = 256


class DegenerateWeightsWarning(RuntimeWarning):
    """Effective sample size fell below 2."""


@dataclass(frozen=True)
class LogLikEstimate:
    value: float
    theta: float
    delta: float
    n_particles: int
    seed: int
    ess: float


def log_sum_exp(values) -> float:
    """``log(sum(exp(values)))`` shifted by the maximum to avoid overflow."""
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise ValueError("log_sum_exp of an empty sequence")
    m = float(np.max(v))
    if v.size == 1 or not math.isfinite(m):
        return m
    return m + math.log(float(np.sum(np.exp(v - m))))


def reduced_log_lik(hbar: float, y_T: float, T: float) -> float:
    """Log-likelihood with the observation function replaced by its invariant mean."""
    if T <= 0:
        raise ValueError("T must be positive")
    return hbar * y_T - 0.5 * hbar * hbar * T


def particle_accumulators(model, theta, path, N, seed, x0_mode=None):
    """Propagate ``N`` hidden particles along ``path`` and return ``(A, x_T)``.

    Particles are never stored as paths; noise is drawn in blocks of time steps.
    ``x0_mode`` defaults to the path's own initialization rule.
    """
    if N < 1:
        raise ValueError("need at least one particle")
    _check_dt(path.delta, path.dt)
    model.check_theta(theta)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))
    x = initial_states(model, theta, x0_mode or path.x0_mode, rng, N)
    dy = np.diff(path.y)
    dt = path.dt
    a = dt / path.delta
    b = math.sqrt(a)
    acc = np.zeros(N)
    n = dy.size
    with np.errstate(over="ignore", invalid="ignore"):
        for start in range(0, n, _BLOCK):
            xi = rng.standard_normal((min(_BLOCK, n - start), N))
            for j in range(xi.shape[0]):
                h = model.observation(theta, x)
                acc += h * dy[start + j] - 0.5 * dt * (h * h)
                x = _euler_hidden(model, theta, x, a, b, xi[j])
    if not (np.all(np.isfinite(acc)) and np.all(np.isfinite(x))):
        raise NumericalError(f"non-finite particle accumulator at theta={theta}")
    return acc, x


def _ess(acc):
    return math.exp(2.0 * log_sum_exp(acc) - log_sum_exp(2.0 * acc))


def mc_log_lik(model, theta: float, path, N: int, seed: int, x0_mode=None) -> LogLikEstimate:
    """Monte-Carlo estimate of the full log-likelihood at ``theta``."""
    acc, _ = particle_accumulators(model, theta, path, N, seed, x0_mode)
    return LogLikEstimate(
        value=log_sum_exp(acc) - math.log(N),
        theta=float(theta),
        delta=path.delta,
        n_particles=int(N),
        seed=int(seed),
        ess=min(float(N), max(1.0, _ess(acc))),
    )


def filter_mean(model, theta: float, path, f, N: int, seed: int, x0_mode=None, return_ess=False):
    """Self-normalized estimate of the filter mean of ``f(X_T)`` given the path.

    Emits :class:`DegenerateWeightsWarning` when the effective sample size is below 2.
    """
    acc, x = particle_accumulators(model, theta, path, N, seed, x0_mode)
    w = np.exp(acc - np.max(acc))
    fx = np.broadcast_to(np.asarray(f(x), dtype=float), x.shape)
    value = float(np.sum(w * fx) / np.sum(w))
    ess = min(float(N), max(1.0, _ess(acc)))
    if ess < 2.0:
        warnings.warn(f"effective sample size {ess:.3g} < 2 at theta={theta}", DegenerateWeightsWarning,
                      stacklevel=2)
    return (value, ess) if return_ess else value


def clt_statistic(rho: float, rho_bar: float, t: float, mode: str = "per_sqrt_t", delta: float | None = None) -> float:
    """Scaled log-likelihood gap: divided by sqrt(t) or by sqrt(delta)."""
    if t <= 0:
        raise ValueError("t must be positive")
    if mode == "per_sqrt_t":
        return (rho - rho_bar) / math.sqrt(t)
    if mode == "per_sqrt_delta":
        if delta is None or delta <= 0:
            raise ValueError("per_sqrt_delta needs a positive delta")
        return (rho - rho_bar) / math.sqrt(delta)
    raise ValueError(f"unknown mode {mode!r}")
