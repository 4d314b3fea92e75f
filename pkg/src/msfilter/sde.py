"""Euler-Maruyama simulation of the coupled fast/slow system.

Hidden and observation noises come from two independent substreams spawned
from the path seed, so a path is a pure function of its arguments.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from msfilter.errors import NumericalError

__all__ = [
    "X0Mode",
    "PathPair",
    "default_dt",
    "n_steps_for",
    "simulate_xy",
    "simulate_batch",
    "step_hidden",
    "initial_states",
    "write_path_csv",
    "read_path_csv",
]

DEFAULT_STEPS_PER_DELTA = 50
MIN_STEPS_PER_DELTA = 10


@dataclass(frozen=True)
class X0Mode:
    """How the hidden state is initialized: ``invariant`` or ``fixed`` at ``x0``."""

    kind: str = "invariant"
    x0: float | None = None

    def __post_init__(self):
        if self.kind not in ("invariant", "fixed"):
            raise ValueError(f"unknown x0 mode {self.kind!r}")
        if self.kind == "fixed" and self.x0 is None:
            raise ValueError("fixed x0 mode needs a value")

    @classmethod
    def invariant(cls):
        return cls("invariant")

    @classmethod
    def fixed(cls, x0):
        return cls("fixed", float(x0))

    @classmethod
    def parse(cls, text: str) -> "X0Mode":
        """Parse ``invariant`` or ``fixed:<x0>``."""
        text = text.strip()
        if text == "invariant":
            return cls.invariant()
        if text.startswith("fixed:"):
            return cls.fixed(float(text.split(":", 1)[1]))
        raise ValueError(f"cannot parse x0 mode {text!r}; use 'invariant' or 'fixed:<x0>'")

    def __str__(self):
        return "invariant" if self.kind == "invariant" else f"fixed:{self.x0!r}"


@dataclass(frozen=True)
class PathPair:
    """A discretized hidden/observed trajectory on ``t_grid = 0, dt, ..., T``."""

    delta: float
    theta_sim: float
    dt: float
    t_grid: np.ndarray = field(repr=False)
    x: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)
    seed: int = 0
    x0_mode: X0Mode = X0Mode()

    @property
    def T(self) -> float:
        return float(self.t_grid[-1])

    @property
    def y_T(self) -> float:
        return float(self.y[-1])

    @property
    def n_steps(self) -> int:
        return len(self.t_grid) - 1


def default_dt(delta: float) -> float:
    return delta / DEFAULT_STEPS_PER_DELTA


def _check_dt(delta, dt):
    if not 0.0 < delta:
        raise ValueError(f"delta must be positive, got {delta}")
    if not 0.0 < dt <= delta / MIN_STEPS_PER_DELTA * (1.0 + 1e-12):
        raise ValueError(
            f"dt={dt} violates 0 < dt <= delta/{MIN_STEPS_PER_DELTA} = {delta / MIN_STEPS_PER_DELTA}"
        )


def n_steps_for(T: float, dt: float) -> int:
    if T <= 0:
        raise ValueError(f"T must be positive, got {T}")
    n = int(round(T / dt))
    if n < 1 or abs(n * dt - T) > 1e-9 * max(T, 1.0):
        raise ValueError(f"T={T} is not an integer multiple of dt={dt}")
    return n


def _euler_hidden(model, theta, x, a, b, xi):
    # a = dt/delta, b = sqrt(dt/delta)
    return x + a * model.drift(theta, x) + b * model.diffusion(theta, x) * xi


def step_hidden(model, theta: float, delta: float, dt: float, x, xi):
    """One Euler-Maruyama step of the hidden coordinate (scalar or array ``x``)."""
    _check_dt(delta, dt)
    with np.errstate(over="ignore", invalid="ignore"):
        out = _euler_hidden(model, theta, np.asarray(x, dtype=float), dt / delta, math.sqrt(dt / delta), xi)
    if not np.all(np.isfinite(out)):
        raise NumericalError("non-finite hidden state after Euler step")
    return out if np.ndim(out) else float(out)


def initial_states(model, theta, x0_mode: X0Mode, rng, size):
    """Draw ``size`` initial hidden states according to ``x0_mode``."""
    if x0_mode.kind == "fixed":
        return np.full(size, float(x0_mode.x0))
    return np.asarray(model.invariant_sampler(theta, rng, size), dtype=float)


def _path_streams(seed):
    hidden, obs = np.random.SeedSequence(int(seed)).spawn(2)
    return np.random.Generator(np.random.PCG64(hidden)), np.random.Generator(np.random.PCG64(obs))


def simulate_batch(model, theta, delta, T, dt=None, x0_mode=X0Mode(), seeds=(0,), keep_paths=True,
                   obs_noise=1.0):
    """Simulate one path per seed, stepping all of them together.

    Each path depends only on its own seed, so results do not depend on how
    seeds are grouped.  Returns ``(x, y)`` arrays of shape ``(len(seeds), n+1)``
    when ``keep_paths`` is true, otherwise the terminal values ``(x_T, y_T)``.
    ``obs_noise`` scales the observation noise; 0 gives ``Y_t = int_0^t h(X_s) ds``.
    """
    dt = default_dt(delta) if dt is None else float(dt)
    _check_dt(delta, dt)
    n = n_steps_for(T, dt)
    model.check_theta(theta)
    seeds = [int(s) for s in seeds]
    B = len(seeds)

    x = np.empty(B)
    xi = np.empty((n, B))
    zeta = np.empty((n, B))
    for j, s in enumerate(seeds):
        rh, ro = _path_streams(s)
        x[j] = initial_states(model, theta, x0_mode, rh, 1)[0]
        xi[:, j] = rh.standard_normal(n)
        zeta[:, j] = ro.standard_normal(n)

    a = dt / delta
    b = math.sqrt(dt / delta)
    sq = math.sqrt(dt) * obs_noise
    y = np.zeros(B)
    if keep_paths:
        xs = np.empty((n + 1, B))
        ys = np.empty((n + 1, B))
        xs[0] = x
        ys[0] = y
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(n):
            h = model.observation(theta, x)
            y = y + h * dt + sq * zeta[k]
            x = _euler_hidden(model, theta, x, a, b, xi[k])
            if keep_paths:
                xs[k + 1] = x
                ys[k + 1] = y
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        bad = int(np.flatnonzero(~(np.isfinite(x) & np.isfinite(y)))[0])
        raise NumericalError(f"non-finite path values (coefficient blow-up) for seed {seeds[bad]}")
    if keep_paths:
        return xs.T.copy(), ys.T.copy()
    return x, y


def simulate_xy(model, theta: float, delta: float, T: float, dt: float | None = None,
                x0_mode: X0Mode = X0Mode(), seed: int = 0) -> PathPair:
    """Simulate hidden state and observation on a uniform grid (``y[0] = 0``)."""
    dt = default_dt(delta) if dt is None else float(dt)
    xs, ys = simulate_batch(model, theta, delta, T, dt, x0_mode, [seed])
    n = xs.shape[1] - 1
    return PathPair(
        delta=float(delta),
        theta_sim=float(theta),
        dt=dt,
        t_grid=np.arange(n + 1) * dt,
        x=xs[0],
        y=ys[0],
        seed=int(seed),
        x0_mode=x0_mode,
    )


def write_path_csv(path: PathPair, fh=None) -> str | None:
    """Write ``t,x,y`` rows preceded by a comment line with the simulation settings."""
    out = io.StringIO() if fh is None else fh
    out.write(
        f"# delta={path.delta!r},theta={path.theta_sim!r},dt={path.dt!r},"
        f"seed={path.seed},x0_mode={path.x0_mode}\n"
    )
    out.write("t,x,y\n")
    for t, x, y in zip(path.t_grid, path.x, path.y):
        out.write(f"{float(t)!r},{float(x)!r},{float(y)!r}\n")
    return out.getvalue() if fh is None else None


def read_path_csv(fh) -> PathPair:
    """Inverse of :func:`write_path_csv`."""
    if isinstance(fh, str):
        fh = io.StringIO(fh)
    meta = {}
    rows = []
    for line in fh:
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            for item in line.lstrip("# ").split(","):
                if "=" in item:
                    k, v = item.split("=", 1)
                    meta[k.strip()] = v.strip()
            continue
        if line.startswith("t,"):
            continue
        rows.append([float(v) for v in line.split(",")])
    missing = {"delta", "theta", "dt", "seed"} - meta.keys()
    if missing:
        raise ValueError(f"path CSV header missing {sorted(missing)}")
    data = np.array(rows, dtype=float)
    return PathPair(
        delta=float(meta["delta"]),
        theta_sim=float(meta["theta"]),
        dt=float(meta["dt"]),
        t_grid=data[:, 0],
        x=data[:, 1],
        y=data[:, 2],
        seed=int(meta["seed"]),
        x0_mode=X0Mode.parse(meta.get("x0_mode", "invariant")),
    )
