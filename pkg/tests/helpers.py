"""Small coefficient models and data builders shared by the tests."""

import numpy as np

from levysde.models import CoefficientModel, ParamDomain
from levysde.simulate import ObservationSeries


def _zeros(x, k):
    return np.zeros(np.shape(x) + (k,))


def _zeros2(x, k):
    return np.zeros(np.shape(x) + (k, k))


def constant_model(a: float, c: float) -> CoefficientModel:
    """``a`` and ``c`` constant; one dummy parameter each (domain [0.5, 5])."""
    return CoefficientModel(
        name=f"const({a},{c})", p_alpha=1, p_gamma=1,
        domain_alpha=ParamDomain([0.5], [5.0]), domain_gamma=ParamDomain([0.5], [5.0]),
        drift=lambda x, al: a + 0.0 * np.asarray(x, dtype=float),
        scale=lambda x, g: c + 0.0 * np.asarray(x, dtype=float),
        drift_dalpha=lambda x, al: _zeros(x, 1),
        drift_d2alpha=lambda x, al: _zeros2(x, 1),
        scale_dgamma=lambda x, g: _zeros(x, 1),
        scale_d2gamma=lambda x, g: _zeros2(x, 1),
    )


def zero_drift_scale_gamma() -> CoefficientModel:
    """``a = 0 * alpha``, ``c = gamma``: the scale is the parameter itself."""
    return CoefficientModel(
        name="zero-drift", p_alpha=1, p_gamma=1,
        domain_alpha=ParamDomain([0.01], [5.0]), domain_gamma=ParamDomain([0.01], [5.0]),
        drift=lambda x, al: 0.0 * np.asarray(x, dtype=float),
        scale=lambda x, g: g[0] + 0.0 * np.asarray(x, dtype=float),
        drift_dalpha=lambda x, al: _zeros(x, 1),
        drift_d2alpha=lambda x, al: _zeros2(x, 1),
        scale_dgamma=lambda x, g: np.ones(np.shape(x) + (1,)),
        scale_d2gamma=lambda x, g: _zeros2(x, 1),
    )


def linear_unit_model() -> CoefficientModel:
    """``a = alpha x``, ``c = 1``."""
    return CoefficientModel(
        name="linear-unit", p_alpha=1, p_gamma=1,
        domain_alpha=ParamDomain([-5.0], [5.0]), domain_gamma=ParamDomain([0.5], [5.0]),
        drift=lambda x, al: al[0] * np.asarray(x, dtype=float),
        scale=lambda x, g: 1.0 + 0.0 * np.asarray(x, dtype=float),
        drift_dalpha=lambda x, al: np.asarray(x, dtype=float)[..., None],
        drift_d2alpha=lambda x, al: _zeros2(x, 1),
        scale_dgamma=lambda x, g: _zeros(x, 1),
        scale_d2gamma=lambda x, g: _zeros2(x, 1),
    )


def nonlinear_model() -> CoefficientModel:
    """Two drift and two scale parameters with non-zero second derivatives.

    ``a = -a0 x - a1 sin(x) + a0 a1 / 4``,  ``c = g0 + g1^2 cos(x)^2 / 2``.
    """
    def drift(x, al):
        x = np.asarray(x, dtype=float)
        return -al[0] * x - al[1] * np.sin(x) + al[0] * al[1] / 4.0

    def d_drift(x, al):
        x = np.asarray(x, dtype=float)
        return np.stack([-x + al[1] / 4.0, -np.sin(x) + al[0] / 4.0], axis=-1)

    def d2_drift(x, al):
        out = np.zeros(np.shape(x) + (2, 2))
        out[..., 0, 1] = out[..., 1, 0] = 0.25
        return out

    def scale(x, g):
        return g[0] + 0.5 * g[1] ** 2 * np.cos(np.asarray(x, dtype=float)) ** 2

    def d_scale(x, g):
        x = np.asarray(x, dtype=float)
        return np.stack([np.ones_like(x), g[1] * np.cos(x) ** 2], axis=-1)

    def d2_scale(x, g):
        x = np.asarray(x, dtype=float)
        out = np.zeros(np.shape(x) + (2, 2))
        out[..., 1, 1] = np.cos(x) ** 2
        return out

    return CoefficientModel(
        name="nonlinear", p_alpha=2, p_gamma=2,
        domain_alpha=ParamDomain([0.05, 0.05], [3.0, 3.0]),
        domain_gamma=ParamDomain([0.05, 0.05], [3.0, 3.0]),
        drift=drift, scale=scale, drift_dalpha=d_drift, drift_d2alpha=d2_drift,
        scale_dgamma=d_scale, scale_d2gamma=d2_scale,
    )


def series_from_increments(increments, h, x0=0.0) -> ObservationSeries:
    return ObservationSeries(h, np.concatenate([[x0], x0 + np.cumsum(increments)]))


def central_difference(f, theta, eps=1e-6):
    theta = np.asarray(theta, dtype=float)
    cols = []
    for k in range(theta.size):
        e = np.zeros_like(theta)
        e[k] = eps * max(1.0, abs(theta[k]))
        cols.append((np.asarray(f(theta + e)) - np.asarray(f(theta - e))) / (2 * e[k]))
    return np.stack(cols, axis=-1)
