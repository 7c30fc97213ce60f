"""Parametric coefficient pairs ``(a(x, alpha), c(x, gamma))`` for the SDE

    dX_t = a(X_t, alpha) dt + c(X_{t-}, gamma) dJ_t.

Every coefficient callable is vectorised in ``x``: given an array of states of
shape ``s`` it returns shape ``s`` (values), ``s + (p,)`` (gradients) or
``s + (p, p)`` (Hessians).  Parameters are always 1-D float arrays.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DomainError, SingularScaleError

SCALE_FLOOR = 1e-12

Coefficient = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ParamDomain:
    """Closed box ``[lower, upper]`` in parameter space."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("lower and upper must be 1-D vectors of equal length")
        if not np.all(lo < hi):
            raise ValueError(f"empty box: lower={lo} upper={hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def midpoint(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def contains(self, theta) -> bool:
        theta = np.asarray(theta, dtype=float)
        return bool(np.all(theta >= self.lower) and np.all(theta <= self.upper))

    def clip(self, theta) -> np.ndarray:
        return np.clip(np.asarray(theta, dtype=float), self.lower, self.upper)

    def on_boundary(self, theta, rtol: float = 1e-9) -> bool:
        theta = np.asarray(theta, dtype=float)
        slack = rtol * (self.upper - self.lower)
        return bool(np.any(theta <= self.lower + slack) or np.any(theta >= self.upper - slack))

    @staticmethod
    def product(first: "ParamDomain", second: "ParamDomain") -> "ParamDomain":
        return ParamDomain(np.concatenate([first.lower, second.lower]),
                           np.concatenate([first.upper, second.upper]))


@dataclass(frozen=True)
class CoefficientModel:
    """Drift/scale pair with analytic parameter derivatives up to order two."""

    name: str
    p_alpha: int
    p_gamma: int
    domain_alpha: ParamDomain
    domain_gamma: ParamDomain
    drift: Coefficient
    scale: Coefficient
    drift_dalpha: Coefficient
    drift_d2alpha: Coefficient
    scale_dgamma: Coefficient
    scale_d2gamma: Coefficient

    def __post_init__(self):
        if self.domain_alpha.dim != self.p_alpha or self.domain_gamma.dim != self.p_gamma:
            raise ValueError("domain dimensions do not match p_alpha / p_gamma")

    @property
    def p(self) -> int:
        return self.p_alpha + self.p_gamma

    @property
    def domain(self) -> ParamDomain:
        return ParamDomain.product(self.domain_alpha, self.domain_gamma)

    def split(self, theta) -> tuple[np.ndarray, np.ndarray]:
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if theta.shape != (self.p,):
            raise DomainError(f"expected parameter vector of length {self.p}, got shape {theta.shape}")
        return theta[: self.p_alpha], theta[self.p_alpha:]

    def check(self, theta) -> tuple[np.ndarray, np.ndarray]:
        """Split ``theta`` after verifying it lies in the closed box."""
        alpha, gamma = self.split(theta)
        if not self.domain.contains(np.concatenate([alpha, gamma])):
            raise DomainError(
                f"theta={np.concatenate([alpha, gamma])} outside "
                f"[{self.domain.lower}, {self.domain.upper}]"
            )
        return alpha, gamma

    def param_names(self) -> list[str]:
        def names(prefix, k):
            return [prefix] if k == 1 else [f"{prefix}[{i}]" for i in range(k)]
        return names("alpha", self.p_alpha) + names("gamma", self.p_gamma)


def _checked_scale(model: CoefficientModel, x, gamma) -> np.ndarray:
    c = np.asarray(model.scale(x, gamma), dtype=float)
    if np.any(np.abs(c) < SCALE_FLOOR):
        raise SingularScaleError(f"|c(x, gamma)| < {SCALE_FLOOR:g} for gamma={gamma}")
    return c


def eval_eta(model: CoefficientModel, x, theta):
    """Drift-to-scale ratio ``a(x, alpha) / c(x, gamma)``."""
    alpha, gamma = model.check(theta)
    c = _checked_scale(model, x, gamma)
    return model.drift(x, alpha) / c


def eval_big_m(model: CoefficientModel, x, theta):
    """``grad_alpha a(x, alpha) * c(x, gamma)**-2``, shape ``x.shape + (p_alpha,)``."""
    alpha, gamma = model.check(theta)
    c = _checked_scale(model, x, gamma)
    return model.drift_dalpha(x, alpha) / (c**2)[..., None]


# --- built-in models ---------------------------------------------------------

def _col(v):
    return np.asarray(v, dtype=float)[..., None]


def _zeros_hess(x, k=1):
    return np.zeros(np.shape(x) + (k, k))


def builtin_cmodel() -> CoefficientModel:
    """``a = -alpha x``, ``c = -gamma / (1 + x^2)`` on ``[0.01, 5]^2``."""
    return CoefficientModel(
        name="cmodel",
        p_alpha=1,
        p_gamma=1,
        domain_alpha=ParamDomain([0.01], [5.0]),
        domain_gamma=ParamDomain([0.01], [5.0]),
        drift=lambda x, a: -a[0] * x,
        scale=lambda x, g: -g[0] / (1.0 + x * x),
        drift_dalpha=lambda x, a: _col(-np.asarray(x, dtype=float)),
        drift_d2alpha=lambda x, a: _zeros_hess(x),
        scale_dgamma=lambda x, g: _col(-1.0 / (1.0 + np.asarray(x, dtype=float) ** 2)),
        scale_d2gamma=lambda x, g: _zeros_hess(x),
    )


def builtin_ou_const_scale() -> CoefficientModel:
    """Linear drift with constant scale; its GQMLE has closed form."""
    return CoefficientModel(
        name="ou-const-scale",
        p_alpha=1,
        p_gamma=1,
        domain_alpha=ParamDomain([0.01], [5.0]),
        domain_gamma=ParamDomain([0.01], [5.0]),
        drift=lambda x, a: -a[0] * x,
        scale=lambda x, g: g[0] + 0.0 * x,
        drift_dalpha=lambda x, a: _col(-np.asarray(x, dtype=float)),
        drift_d2alpha=lambda x, a: _zeros_hess(x),
        scale_dgamma=lambda x, g: np.ones(np.shape(x) + (1,)),
        scale_d2gamma=lambda x, g: _zeros_hess(x),
    )


MODELS = {
    "cmodel": builtin_cmodel,
    "ou-const-scale": builtin_ou_const_scale,
}


def get_model(name: str) -> CoefficientModel:
    try:
        return MODELS[name]()
    except KeyError:
        raise ValueError(f"unknown model {name!r}; choose from {sorted(MODELS)}") from None
