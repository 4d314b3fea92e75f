"""Maximum-likelihood point estimates from the reduced and full likelihoods."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["MleResult", "reduced_mle", "grid_mle", "predicted_mle_std", "IdentifiabilityError"]

INTERIOR = "interior"
CLAMPED_LOW = "clamped_low"
CLAMPED_HIGH = "clamped_high"


class IdentifiabilityError(ValueError):
    """The invariant mean of h is not strictly monotone over the parameter set."""


@dataclass(frozen=True)
class MleResult:
    theta_hat: float
    clamped: str
    objective_value: float
    method: str


def reduced_mle(model, hbar_of, y_T: float, T: float, tol: float = 1e-10, n_check: int = 32) -> MleResult:
    """Solve ``hbar(theta) = y_T / T`` on the parameter set, clamping to the bounds.

    ``hbar_of`` maps theta to the invariant mean of the observation function
    (e.g. ``lambda th: eigen_coefficients(model, th).hbar``).  The root is found
    by bisection; if the target lies outside the range of ``hbar`` the nearer
    bound is returned.  ``objective_value`` is the reduced log-likelihood at the
    estimate.
    """
    if T <= 0:
        raise ValueError("T must be positive")
    lo, hi = model.theta_bounds
    grid = np.linspace(lo, hi, n_check)
    values = np.array([hbar_of(t) for t in grid])
    steps = np.diff(values)
    if np.all(steps > 0):
        sign = 1.0
    elif np.all(steps < 0):
        sign = -1.0
    else:
        raise IdentifiabilityError(f"invariant mean of h is not strictly monotone on {[lo, hi]}")

    target = y_T / T
    h_lo, h_hi = values[0], values[-1]

    def objective(th, hb=None):
        hb = hbar_of(th) if hb is None else hb
        return hb * y_T - 0.5 * hb * hb * T

    if sign * (target - h_lo) <= 0:
        return MleResult(lo, CLAMPED_LOW, objective(lo, h_lo), "reduced_root")
    if sign * (target - h_hi) >= 0:
        return MleResult(hi, CLAMPED_HIGH, objective(hi, h_hi), "reduced_root")

    a, b = lo, hi
    while b - a > tol:
        mid = 0.5 * (a + b)
        if sign * (hbar_of(mid) - target) < 0:
            a = mid
        else:
            b = mid
    theta_hat = 0.5 * (a + b)
    return MleResult(theta_hat, INTERIOR, objective(theta_hat), "reduced_root")


def grid_mle(objective, theta_grid) -> MleResult:
    """Maximize ``objective`` over a sorted grid; ties go to the smallest theta."""
    grid = np.asarray(theta_grid, dtype=float)
    if grid.size == 0:
        raise ValueError("empty theta grid")
    values = np.array([objective(t) for t in grid], dtype=float)
    finite = np.isfinite(values)
    if not finite.any():
        raise ValueError("objective is non-finite at every grid point")
    values[~finite] = -np.inf
    k = int(np.argmax(values))  # first occurrence of the maximum
    if k == 0:
        flag = CLAMPED_LOW if grid.size > 1 else INTERIOR
    elif k == grid.size - 1:
        flag = CLAMPED_HIGH
    else:
        flag = INTERIOR
    return MleResult(float(grid[k]), flag, float(values[k]), "grid")


def predicted_mle_std(hdot: float, T: float) -> float:
    """Asymptotic standard error ``1 / (sqrt(T) |hdot|)`` of the reduced MLE."""
    if hdot == 0:
        raise ValueError("hdot = 0: parameter not identifiable")
    if T <= 0:
        raise ValueError("T must be positive")
    return 1.0 / (math.sqrt(T) * abs(hdot))
