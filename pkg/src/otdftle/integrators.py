"""Fixed-step classical RK4 for state and matrix-valued ODEs.

The coupled driver advances a tuple of arrays together, so a trajectory
and the matrix systems evaluated along it (equation of variations, OTD
modes, reduced fundamental matrix) share every RK4 stage.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, DimensionError, IntegrationDivergedError

SCHEMES = ("rk4",)


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float
    T: float
    t0: float = 0.0
    scheme: str = "rk4"

    def __post_init__(self):
        if not (self.dt > 0 and np.isfinite(self.dt)):
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if not (self.T > 0 and np.isfinite(self.T)):
            raise ConfigError(f"T must be positive, got {self.T}")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        k = round(self.T / self.dt)
        if k < 1 or abs(k * self.dt - self.T) > 1e-9 * max(1.0, abs(self.T)):
            raise ConfigError(f"T={self.T} is not a multiple of dt={self.dt}")

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))

    @property
    def times(self) -> np.ndarray:
        return np.linspace(self.t0, self.t0 + self.T, self.n_steps + 1)

    def with_horizon(self, T: float) -> "IntegratorConfig":
        return IntegratorConfig(dt=self.dt, T=T, t0=self.t0, scheme=self.scheme)


@dataclass
class Trajectory:
    """Sampled states; ``states[k]`` is the state at ``times[k]``.

    Leading batch axes of the initial condition are kept after the time axis.
    """

    times: np.ndarray
    states: np.ndarray

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def interpolate(self, t: float) -> np.ndarray:
        """Piecewise-linear state at ``t``.

        Approximate: only meant for replaying stored samples.
        """
        times = self.times
        if t <= times[0]:
            return self.states[0]
        if t >= times[-1]:
            return self.states[-1]
        k = int(np.searchsorted(times, t, side="right")) - 1
        w = (t - times[k]) / (times[k + 1] - times[k])
        return (1.0 - w) * self.states[k] + w * self.states[k + 1]


def _axpy(y, a, k):
    return tuple(yi + a * ki for yi, ki in zip(y, k))


def rk4_step(rhs: Callable, t: float, y: tuple, dt: float) -> tuple:
    """One classical RK4 step for a tuple-valued state."""
    h2 = 0.5 * dt
    k1 = rhs(t, y)
    k2 = rhs(t + h2, _axpy(y, h2, k1))
    k3 = rhs(t + h2, _axpy(y, h2, k2))
    k4 = rhs(t + dt, _axpy(y, dt, k3))
    return tuple(
        yi + (dt / 6.0) * (a + 2.0 * b + 2.0 * c + d)
        for yi, a, b, c, d in zip(y, k1, k2, k3, k4)
    )


def integrate_coupled(
    rhs: Callable,
    y0: Sequence[np.ndarray],
    cfg: IntegratorConfig,
    post_step: Callable | None = None,
    observe: Callable | None = None,
    check_finite: bool = True,
) -> tuple:
    """Advance ``y' = rhs(t, y)`` for a tuple of arrays over ``cfg``.

    Parameters
    ----------
    rhs : callable
        ``rhs(t, y) -> tuple`` with the same shapes as ``y``.
    y0 : sequence of arrays
        Initial values.
    cfg : IntegratorConfig
    post_step : callable, optional
        ``post_step(t, y) -> y`` applied after every full step (used for
        re-orthonormalisation); never applied inside RK4 stages.
    observe : callable, optional
        ``observe(k, t, y)`` called at ``t0`` and after every step.

    Returns
    -------
    tuple
        The state at ``t0 + T``.

    Raises
    ------
    IntegrationDivergedError
        On the first step that produces a non-finite entry.
    """
    y = tuple(np.array(a, dtype=float) for a in y0)
    times = cfg.times
    if observe is not None:
        observe(0, times[0], y)
    for k in range(cfg.n_steps):
        y = rk4_step(rhs, times[k], y, cfg.dt)
        if post_step is not None:
            y = tuple(post_step(times[k + 1], y))
        if check_finite and not all(np.isfinite(a).all() for a in y):
            raise IntegrationDivergedError(k + 1, times[k + 1])
        if observe is not None:
            observe(k + 1, times[k + 1], y)
    return y


def integrate_state(sys, z0, cfg: IntegratorConfig) -> Trajectory:
    """RK4 trajectory of ``z' = f(z, t)`` with every step stored."""
    z0 = np.asarray(z0, dtype=float)
    if z0.shape[-1] != sys.dimension:
        raise DimensionError(f"state has length {z0.shape[-1]}, model needs {sys.dimension}")
    states = np.empty((cfg.n_steps + 1,) + z0.shape)

    def keep(k, t, y):
        states[k] = y[0]

    integrate_coupled(lambda t, y: (sys.vector_field(y[0], t),), (z0,), cfg, observe=keep)
    return Trajectory(cfg.times, states)


@dataclass
class MatrixTrajectory:
    times: np.ndarray
    values: np.ndarray

    @property
    def final(self) -> np.ndarray:
        return self.values[-1]


def integrate_matrix_ode(
    rhs: Callable,
    M0,
    cfg: IntegratorConfig,
    post_step: Callable | None = None,
) -> MatrixTrajectory:
    """RK4 for ``M' = rhs(M, t)``; ``post_step(M, t)`` runs after each step."""
    M0 = np.asarray(M0, dtype=float)
    values = np.empty((cfg.n_steps + 1,) + M0.shape)

    def keep(k, t, y):
        values[k] = y[0]

    hook = None
    if post_step is not None:
        hook = lambda t, y: (post_step(y[0], t),)  # noqa: E731
    integrate_coupled(lambda t, y: (rhs(y[0], t),), (M0,), cfg, post_step=hook, observe=keep)
    return MatrixTrajectory(cfg.times, values)
