"""Euler residuals and moment fitting of Lévy-measure functionals.

With a fitted ``theta`` the residuals

    delta_j = (X_{t_j} - X_{t_{j-1}} - h a(X_{t_{j-1}}, alpha)) / c(X_{t_{j-1}}, gamma)

stand in for the unobserved driver increments, and ``(1/(nh)) sum_j phi(delta_j)``
estimates ``int phi(z) nu_0(dz)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import SingularScaleError
from .models import SCALE_FLOOR, CoefficientModel
from .simulate import ObservationSeries


@dataclass(frozen=True)
class MomentFunction:
    """Vector moment function ``phi: R -> R^q`` with its analytic derivative.

    ``value`` and ``derivative`` map an array of shape ``(n,)`` to ``(n, q)``.
    ``admissible`` is False for test-only functions (e.g. pure powers) that do
    not vanish fast enough at the origin for inference output.
    """

    dim_q: int
    value: Callable[[np.ndarray], np.ndarray]
    derivative: Callable[[np.ndarray], np.ndarray]
    labels: tuple[str, ...] = ()
    admissible: bool = True
    name: str = "phi"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dim_q < 1:
            raise ValueError("a moment function needs at least one component")
        if not self.labels:
            object.__setattr__(self, "labels", tuple(f"nu[{k}]" for k in range(self.dim_q)))

    def __call__(self, z) -> np.ndarray:
        return self.value(np.atleast_1d(np.asarray(z, dtype=float)))

    def zeta(self, z) -> np.ndarray:
        """``z * phi'(z)``, componentwise."""
        z = np.atleast_1d(np.asarray(z, dtype=float))
        return z[:, None] * self.derivative(z)


def builtin_phi_cos(us: Sequence[float]) -> MomentFunction:
    """``phi_k(z) = cos(u_k z) - 1``; its Lévy-measure integral is the cumulant ``kappa(u_k)``."""
    u = np.asarray(us, dtype=float).ravel()
    if u.size == 0:
        raise ValueError("need at least one u")
    u.setflags(write=False)

    def value(z):
        return np.cos(np.multiply.outer(z, u)) - 1.0

    def derivative(z):
        return -u * np.sin(np.multiply.outer(z, u))

    labels = tuple(f"kappa({v:g})" for v in u)
    return MomentFunction(u.size, value, derivative, labels=labels, name="cos", params={"u": u.tolist()})


def phi_power(k: int) -> MomentFunction:
    """Test-only ``phi(z) = z^k``; exact oracle moments, not admissible for inference."""
    return MomentFunction(
        1,
        lambda z: (z**k)[:, None],
        lambda z: (k * z ** (k - 1))[:, None],
        labels=(f"z^{k}",),
        admissible=False,
        name=f"power{k}",
        params={"k": k},
    )


@dataclass(frozen=True)
class ResidualSet:
    residuals: np.ndarray
    h: float
    theta_used: np.ndarray

    def __post_init__(self):
        res = np.asarray(self.residuals, dtype=float)
        if res.ndim != 1 or res.size < 1:
            raise ValueError("residual set must be a non-empty vector")
        if not np.all(np.isfinite(res)):
            raise ValueError("residuals must be finite")
        object.__setattr__(self, "residuals", res)
        object.__setattr__(self, "theta_used", np.asarray(self.theta_used, dtype=float))

    @property
    def n(self) -> int:
        return self.residuals.size

    @property
    def nh(self) -> float:
        return self.n * self.h


def _scale_along_path(model: CoefficientModel, obs: ObservationSeries, gamma) -> np.ndarray:
    c = np.asarray(model.scale(obs.previous, gamma), dtype=float) * np.ones(obs.n)
    if np.any(np.abs(c) < SCALE_FLOOR):
        raise SingularScaleError(f"|c(X_(j-1), gamma)| < {SCALE_FLOOR:g} along the path")
    return c


def euler_residuals(model: CoefficientModel, obs: ObservationSeries, theta) -> ResidualSet:
    alpha, gamma = model.check(theta)
    c = _scale_along_path(model, obs, gamma)
    res = (obs.increments - obs.h * model.drift(obs.previous, alpha)) / c
    return ResidualSet(res, obs.h, np.concatenate([alpha, gamma]))


def moment_estimate(res: ResidualSet, phi: MomentFunction) -> np.ndarray:
    """``(1/(nh)) sum_j phi(delta_j)``."""
    return phi(res.residuals).sum(axis=0) / res.nh


def zeta_estimate(res: ResidualSet, phi: MomentFunction) -> np.ndarray:
    """``(1/(nh)) sum_j delta_j phi'(delta_j)``."""
    return phi.zeta(res.residuals).sum(axis=0) / res.nh


def scale_log_gradient_mean(model: CoefficientModel, obs: ObservationSeries, theta) -> np.ndarray:
    """``(1/n) sum_j grad_gamma c / c`` evaluated along the path."""
    _, gamma = model.check(theta)
    c = _scale_along_path(model, obs, gamma)
    dc = np.broadcast_to(model.scale_dgamma(obs.previous, gamma), (obs.n, model.p_gamma))
    return (dc / c[:, None]).mean(axis=0)


def bias_matrix(res: ResidualSet, model: CoefficientModel, obs: ObservationSeries, theta,
                phi: MomentFunction) -> np.ndarray:
    """Plug-in correction ``b_n`` (``q x p_gamma``) for using fitted residuals.

    ``b_n = -zeta_estimate  (outer)  mean(grad_gamma c / c)``, so that the
    fitted-residual statistic equals the true-increment statistic plus
    ``b_n @ sqrt(nh) (gamma_hat - gamma_0)`` to first order.
    """
    return -np.outer(zeta_estimate(res, phi), scale_log_gradient_mean(model, obs, theta))
