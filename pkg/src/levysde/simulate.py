"""Fine-grid Euler-Maruyama simulation with subsampling to the observation grid."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import DomainError, NonFiniteState
from .levy import LevyDriver
from .models import CoefficientModel


@dataclass(frozen=True)
class ObservationSeries:
    """Equally spaced sample ``X_{t_0}, ..., X_{t_n}`` with ``t_j = j * h``."""

    h: float
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or values.size < 2:
            raise ValueError("an observation series needs at least two values")
        if not self.h > 0:
            raise ValueError("observation step h must be positive")
        if not np.all(np.isfinite(values)):
            raise ValueError("observation series contains non-finite values")
        values.setflags(write=False)
        object.__setattr__(self, "h", float(self.h))
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        """Number of increments."""
        return self.values.size - 1

    @property
    def x0(self) -> float:
        return float(self.values[0])

    @property
    def horizon(self) -> float:
        return self.n * self.h

    @property
    def times(self) -> np.ndarray:
        return self.h * np.arange(self.values.size)

    @cached_property
    def increments(self) -> np.ndarray:
        return np.diff(self.values)

    @cached_property
    def previous(self) -> np.ndarray:
        """Left endpoints ``X_{t_{j-1}}``, ``j = 1..n``."""
        return self.values[:-1]


@dataclass(frozen=True)
class SimulationPlan:
    model: CoefficientModel
    theta0: np.ndarray
    driver: LevyDriver
    n: int
    h: float
    fine_factor: int = 10
    x0: float = 0.0
    seed: int = 0
    check_domain: bool = field(default=True, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "theta0", np.atleast_1d(np.asarray(self.theta0, dtype=float)))
        if int(self.n) < 1:
            raise ValueError("n must be >= 1")
        if int(self.fine_factor) < 1:
            raise ValueError("fine_factor must be >= 1")
        if not self.h > 0:
            raise ValueError("h must be positive")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")


def fine_increments(driver: LevyDriver, n: int, h: float, fine_factor: int, seed: int) -> np.ndarray:
    """The driver stream consumed by one path: ``n * fine_factor`` increments of span ``h / fine_factor``."""
    rng = np.random.default_rng(int(seed))
    return driver.sample(h / fine_factor, n * fine_factor, rng)


def euler_paths(model: CoefficientModel, theta, dj: np.ndarray, h: float,
                fine_factor: int, x0: float | np.ndarray = 0.0) -> np.ndarray:
    """Run the Euler recursion on a batch of driver streams.

    Parameters
    ----------
    dj : array, shape (R, n * fine_factor)
        Fine-step driver increments, one row per path.

    Returns
    -------
    array, shape (R, n + 1)
        Every ``fine_factor``-th state, starting with ``x0``.
    """
    alpha, gamma = model.split(theta)
    dj = np.atleast_2d(np.asarray(dj, dtype=float))
    reps, total = dj.shape
    if total % fine_factor:
        raise ValueError("stream length must be a multiple of fine_factor")
    n = total // fine_factor
    dt = h / fine_factor
    steps = np.ascontiguousarray(dj.T)
    out = np.empty((n + 1, reps))
    x = np.broadcast_to(np.asarray(x0, dtype=float), (reps,)).copy()
    out[0] = x
    drift, scale = model.drift, model.scale
    k = 0
    with np.errstate(over="ignore", invalid="ignore"):
        for j in range(1, n + 1):
            for _ in range(fine_factor):
                x = x + dt * drift(x, alpha) + scale(x, gamma) * steps[k]
                k += 1
            out[j] = x
    if not np.all(np.isfinite(out)):
        bad = np.argwhere(~np.isfinite(out))
        step, path = (int(v) for v in bad[np.argmin(bad[:, 0])])
        raise NonFiniteState(
            f"path {path} became non-finite at observation index {step}", step=step
        )
    return out.T


def simulate_paths(plan: SimulationPlan, seeds: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    """Simulate one path per seed sharing everything else in ``plan``.

    Returns ``(values, driver_increments)`` with shapes ``(R, n+1)`` and
    ``(R, n)``; row ``r`` is bit-identical to ``simulate_path`` run with
    ``seeds[r]``.
    """
    if plan.check_domain and not plan.model.domain.contains(plan.theta0):
        raise DomainError(f"theta0={plan.theta0} outside the model's parameter box")
    m = int(plan.fine_factor)
    dj = np.stack([fine_increments(plan.driver, plan.n, plan.h, m, s) for s in seeds])
    values = euler_paths(plan.model, plan.theta0, dj, plan.h, m, plan.x0)
    coarse = dj.reshape(len(seeds), plan.n, m).sum(axis=2)
    return values, coarse


def simulate_path(plan: SimulationPlan, return_increments: bool = False):
    """Simulate ``X_{t_0..t_n}`` for ``plan``.

    With ``return_increments=True`` also returns the driver increments
    ``Delta_j J`` aggregated over each observation interval, which pairs the
    path with its (normally unobservable) noise.
    """
    values, coarse = simulate_paths(plan, [plan.seed])
    series = ObservationSeries(plan.h, values[0])
    if return_increments:
        return series, coarse[0]
    return series


def simulate_driver_path(driver: LevyDriver, n: int, h: float, seed: int) -> np.ndarray:
    """``n`` iid driver increments of span ``h``."""
    if n < 1 or not h > 0:
        raise ValueError("need n >= 1 and h > 0")
    return driver.sample(h, n, np.random.default_rng(int(seed)))
