"""Parameterized scalar state-space models for the fast/slow system.

A model stores slow-time coefficients only.  The hidden process evolves as

    dX = (1/delta) * drift(theta, X) dt + (1/sqrt(delta)) * diffusion(theta, X) dB
    dY = observation(theta, X) dt + dW

and the integrator in :mod:`msfilter.sde` applies the ``1/delta`` scalings, so a
single :class:`ModelSpec` serves every time-scale separation.

All coefficient functions must accept a numpy array for ``x`` and broadcast.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from msfilter.spectral import normalized_hermite

__all__ = [
    "ModelSpec",
    "ou_max_model",
    "constant_h_model",
    "register_model",
    "get_model",
    "available_models",
]


@dataclass(frozen=True)
class ModelSpec:
    """A theta-parameterized scalar diffusion with an observation function.

    ``invariant_sampler(theta, rng, size)`` draws from the invariant law of the
    hidden process.  ``eigenvalue(i, theta)`` returns the nonnegative rate of
    the i-th eigenfunction of the (negated) generator, with eigenvalue 0 for the
    constant function.  ``gaussian_invariant``, when set, maps theta to the
    (mean, std) of a Gaussian invariant law and enables Gauss-Hermite
    quadrature in the spectral module.
    """

    name: str
    theta_bounds: tuple[float, float]
    drift: Callable
    diffusion: Callable
    observation: Callable
    invariant_sampler: Callable
    eigenvalue: Callable[[int, float], float]
    basis: Callable
    invariant_density: Optional[Callable] = None
    gaussian_invariant: Optional[Callable[[float], tuple[float, float]]] = None

    def __post_init__(self):
        lo, hi = self.theta_bounds
        if not lo < hi:
            raise ValueError(f"theta_bounds must satisfy lo < hi, got {self.theta_bounds}")

    def contains(self, theta: float) -> bool:
        lo, hi = self.theta_bounds
        return lo <= theta <= hi

    def check_theta(self, theta: float) -> None:
        if not self.contains(theta):
            raise ValueError(
                f"theta={theta} outside parameter set {list(self.theta_bounds)} of model {self.name!r}"
            )


def _ou_density(theta, x):
    u = np.asarray(x, dtype=float) - theta
    return np.exp(-0.5 * u * u) / math.sqrt(2.0 * math.pi)


def _ou_sampler(theta, rng, size=None):
    return theta + rng.standard_normal(size)


def _ou_basis(i, theta, x):
    return normalized_hermite(i, np.asarray(x, dtype=float) - theta)


def _ou_model(name, observation, theta_bounds):
    return ModelSpec(
        name=name,
        theta_bounds=tuple(float(b) for b in theta_bounds),
        drift=lambda theta, x: theta - x,
        diffusion=lambda theta, x: math.sqrt(2.0),
        observation=observation,
        invariant_sampler=_ou_sampler,
        eigenvalue=lambda i, theta: float(i),
        basis=_ou_basis,
        invariant_density=_ou_density,
        gaussian_invariant=lambda theta: (theta, 1.0),
    )


def ou_max_model(theta_bounds=(0.0, 2.0)) -> ModelSpec:
    """OU hidden state reverting to theta with unit invariant variance, observed through max(x, theta)."""
    return _ou_model("ou-max", lambda theta, x: np.maximum(x, theta), theta_bounds)


def constant_h_model(c: float, theta_bounds=(0.0, 2.0)) -> ModelSpec:
    """Same hidden dynamics as :func:`ou_max_model` with a constant observation function.

    The Monte-Carlo and reduced log-likelihoods coincide exactly for this model.
    """
    c = float(c)

    def observation(theta, x):
        x = np.asarray(x, dtype=float)
        return np.full(x.shape, c) if x.ndim else c

    return _ou_model("constant-h", observation, theta_bounds)


_REGISTRY: dict[str, Callable[..., ModelSpec]] = {
    "ou-max": ou_max_model,
    "constant-h": constant_h_model,
}


def register_model(name: str, factory: Callable[..., ModelSpec]) -> None:
    """Make a user model (e.g. a CIR hidden state) selectable by name."""
    _REGISTRY[name] = factory


def available_models() -> list[str]:
    return sorted(_REGISTRY)


def get_model(name: str, **kwargs) -> ModelSpec:
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown model {name!r}; known: {available_models()}") from None
    return factory(**kwargs)
