"""Gaussian quasi-likelihood estimating functions and their root (the GQMLE).

For an observation series with left endpoints ``x_{j-1}`` and increments
``dX_j`` put ``r_j = dX_j - h a(x_{j-1}, alpha)``.  Then

    G_alpha(theta) = 1/(nh) sum_j  grad_a a / c^2 * r_j
    G_gamma(theta) = 1/(nh) sum_j  ( 2 grad_g c / c^3 * r_j^2  -  2 h grad_g c / c )

(``-grad_g c^{-2} = 2 grad_g c / c^3`` and ``grad_g c^2 / c^2 = 2 grad_g c / c``).
The estimator is the minimiser of ``|(G_alpha, G_gamma)|`` over the closed
parameter box.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import optimize
from scipy.stats import qmc

from .errors import NoProgressError, SingularScaleError
from .models import SCALE_FLOOR, CoefficientModel
from .simulate import ObservationSeries

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EstimatingFunctionValue:
    g_alpha: np.ndarray
    g_gamma: np.ndarray
    jacobian: Optional[np.ndarray] = None

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.g_alpha, self.g_gamma])

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.vector))


@dataclass(frozen=True)
class GqmleFit:
    theta_hat: np.ndarray
    objective: float
    converged: bool
    iterations: int
    neg_jacobian_at_fit: np.ndarray
    on_boundary: bool = False
    starts_used: int = 1

    def to_dict(self) -> dict:
        return {
            "theta_hat": self.theta_hat.tolist(),
            "objective": self.objective,
            "converged": self.converged,
            "iterations": self.iterations,
            "neg_jacobian": self.neg_jacobian_at_fit.tolist(),
        }


class _Terms:
    """Per-observation coefficient evaluations at one ``theta``."""

    __slots__ = ("r", "c", "da", "d2a", "dc", "d2c")

    def __init__(self, model: CoefficientModel, obs: ObservationSeries, theta, second: bool):
        alpha, gamma = model.split(theta)
        x = obs.previous
        c = np.asarray(model.scale(x, gamma), dtype=float) * np.ones_like(x)
        if np.any(np.abs(c) < SCALE_FLOOR):
            raise SingularScaleError(f"|c(X_(j-1), gamma)| < {SCALE_FLOOR:g} at gamma={gamma}")
        self.c = c
        self.r = obs.increments - obs.h * model.drift(x, alpha)
        self.da = np.broadcast_to(model.drift_dalpha(x, alpha), x.shape + (model.p_alpha,))
        self.dc = np.broadcast_to(model.scale_dgamma(x, gamma), x.shape + (model.p_gamma,))
        if second:
            pa, pg = model.p_alpha, model.p_gamma
            self.d2a = np.broadcast_to(model.drift_d2alpha(x, alpha), x.shape + (pa, pa))
            self.d2c = np.broadcast_to(model.scale_d2gamma(x, gamma), x.shape + (pg, pg))


def _g_from_terms(t: _Terms, h: float):
    nh = t.r.size * h
    inv_c2 = 1.0 / t.c**2
    g_alpha = (t.da * (t.r * inv_c2)[:, None]).sum(axis=0) / nh
    dc_over_c = t.dc / t.c[:, None]
    g_gamma = (dc_over_c * (2.0 * (t.r**2 * inv_c2) - 2.0 * h)[:, None]).sum(axis=0) / nh
    return g_alpha, g_gamma


def estimating_function(model: CoefficientModel, obs: ObservationSeries, theta) -> EstimatingFunctionValue:
    """Values of ``(G_alpha(theta), G_gamma(theta))`` on ``obs``."""
    g_alpha, g_gamma = _g_from_terms(_Terms(model, obs, theta, second=False), obs.h)
    return EstimatingFunctionValue(g_alpha, g_gamma)


def _jacobian_from_terms(t: _Terms, h: float) -> np.ndarray:
    n = t.r.size
    nh = n * h
    c, r, da, dc = t.c, t.r, t.da, t.dc
    inv_c2 = 1.0 / c**2
    r2 = r * r
    # grad_g c^{-2} = -2 dc / c^3 ;  hess_g c^{-2} = 6 dc dc^T / c^4 - 2 d2c / c^3
    dinv_c2_r = dc * (-2.0 * r / c**3)[:, None]
    j_aa = (np.tensordot(r * inv_c2, t.d2a, axes=(0, 0)) - h * (da * inv_c2[:, None]).T @ da) / nh
    j_ag = da.T @ dinv_c2_r / nh
    j_ga = 2.0 / n * (dinv_c2_r.T @ da)
    j_gg = (-6.0 * (dc * (r2 * inv_c2**2)[:, None]).T @ dc
            + 2.0 * np.tensordot(r2 / c**3, t.d2c, axes=(0, 0))
            + 2.0 * h * ((dc * inv_c2[:, None]).T @ dc - np.tensordot(1.0 / c, t.d2c, axes=(0, 0)))) / nh
    return np.block([[j_aa, j_ag], [j_ga, j_gg]])


def estimating_function_jacobian(model: CoefficientModel, obs: ObservationSeries, theta) -> np.ndarray:
    """Analytic ``d(G_alpha, G_gamma) / d(alpha, gamma)``, a ``p x p`` matrix."""
    return _jacobian_from_terms(_Terms(model, obs, theta, second=True), obs.h)


def _scale_from_terms(t: _Terms, h: float) -> float:
    nh = t.r.size * h
    inv_c2 = 1.0 / t.c**2
    sa = np.abs(t.da * (t.r * inv_c2)[:, None]).sum(axis=0) / nh
    dcc = np.abs(t.dc / t.c[:, None])
    sg = (dcc * (2.0 * t.r**2 * inv_c2 + 2.0 * h)[:, None]).sum(axis=0) / nh
    return float(np.linalg.norm(np.concatenate([sa, sg])))


def _evaluate(model, obs, theta):
    t = _Terms(model, obs, theta, second=True)
    ga, gg = _g_from_terms(t, obs.h)
    return np.concatenate([ga, gg]), _jacobian_from_terms(t, obs.h), _scale_from_terms(t, obs.h)


def data_scale(model: CoefficientModel, obs: ObservationSeries, theta) -> float:
    """Gross magnitude of the summands of ``G``; sets the attainable root tolerance."""
    return _scale_from_terms(_Terms(model, obs, theta, second=False), obs.h)


def neg_quasi_loglik(model: CoefficientModel, obs: ObservationSeries, theta) -> float:
    """Per-observation negative Gaussian quasi-log-likelihood.

    Its gradient is a positive block rescaling of ``-(G_alpha, G_gamma)``, so
    its interior minimisers are exactly the roots of the estimating equations.
    Used only to steer the multistart search.
    """
    alpha, gamma = model.split(theta)
    x = obs.previous
    c = np.asarray(model.scale(x, gamma), dtype=float) * np.ones_like(x)
    if np.any(np.abs(c) < SCALE_FLOOR):
        return np.inf
    r = obs.increments - obs.h * model.drift(x, alpha)
    return float(np.mean(np.log(np.abs(c)) + r * r / (2.0 * obs.h * c * c)))


@dataclass
class _NewtonResult:
    theta: np.ndarray
    norm: float
    iterations: int
    converged: bool


def _newton(model, obs, theta0, tol, max_iter) -> _NewtonResult:
    """Damped, box-projected Newton with Armijo backtracking on ``|G|^2``.

    Converged means ``|G| <= tol * (1 + data_scale)`` at the current iterate.
    """
    box = model.domain
    theta = box.clip(theta0)
    g, jac, scale = _evaluate(model, obs, theta)
    f = float(g @ g)
    for it in range(max_iter + 1):
        if np.sqrt(f) <= tol * (1.0 + scale):
            return _NewtonResult(theta, np.sqrt(f), it, True)
        if it == max_iter:
            break
        try:
            step = -np.linalg.solve(jac, g)
        except np.linalg.LinAlgError:
            step = -np.linalg.lstsq(jac, g, rcond=None)[0]
        if not np.all(np.isfinite(step)):
            break
        t = 1.0
        accepted = False
        while t > 1e-12:
            cand = box.clip(theta + t * step)
            try:
                g_new, jac_new, scale_new = _evaluate(model, obs, cand)
            except SingularScaleError:
                t *= 0.5
                continue
            f_new = float(g_new @ g_new)
            if f_new <= (1.0 - 2e-4 * t) * f:
                accepted = True
                break
            t *= 0.5
        if not accepted or np.array_equal(cand, theta):
            return _NewtonResult(theta, np.sqrt(f), it + 1, False)
        theta, g, jac, scale, f = cand, g_new, jac_new, scale_new, f_new
    return _NewtonResult(theta, np.sqrt(f), max_iter, False)


def latin_hypercube_starts(model: CoefficientModel, count: int) -> np.ndarray:
    """Deterministic Latin-hypercube sample of ``count`` points in the box."""
    box = model.domain
    unit = qmc.LatinHypercube(d=model.p, seed=20240101).random(count)
    return box.lower + unit * (box.upper - box.lower)


def fit_gqmle(model: CoefficientModel, obs: ObservationSeries, theta_init=None, *,
              tol: float = 1e-10, multistart: int = 8, max_iter: int = 200) -> GqmleFit:
    """GQMLE ``argmin |(G_alpha, G_gamma)|`` over the closed parameter box.

    Newton from ``theta_init`` (default: box midpoint) first; if that stalls or
    ends on the boundary, Nelder-Mead searches started from a Latin hypercube
    over the box descend the quasi-likelihood and each end point is polished
    by Newton.  Among all candidates the one with the smallest ``|G|`` wins,
    ties broken lexicographically in ``theta``.

    Raises
    ------
    NoProgressError
        Fewer increments than parameters, or no finite candidate at all.
    """
    if obs.n < model.p:
        raise NoProgressError(f"{obs.n} increment(s) cannot identify {model.p} parameters")
    box = model.domain
    start = box.midpoint if theta_init is None else np.asarray(theta_init, dtype=float)

    first = _newton(model, obs, start, tol, max_iter)
    candidates = [first]
    total_iter = first.iterations
    starts_used = 1
    if not first.converged or box.on_boundary(first.theta):
        width = box.upper - box.lower
        for x0 in latin_hypercube_starts(model, multistart):
            # simplex edges of 10% of the box, pointing towards its interior
            toward = np.where(x0 < box.midpoint, 1.0, -1.0)
            simplex = np.vstack([x0, x0 + np.diag(0.1 * width * toward)])
            res = optimize.minimize(
                lambda th: neg_quasi_loglik(model, obs, th), x0, method="Nelder-Mead",
                bounds=list(zip(box.lower, box.upper)),
                options={"xatol": 1e-3, "fatol": 1e-7, "maxiter": max_iter * model.p,
                         "initial_simplex": simplex},
            )
            polished = _newton(model, obs, res.x, tol, max_iter)
            total_iter += int(res.nit) + polished.iterations
            candidates.append(polished)
            starts_used += 1
    finite = [c for c in candidates if np.isfinite(c.norm)]
    if not finite:
        raise NoProgressError("no start produced a finite estimating-function value")
    best = min(finite, key=lambda c: (c.norm, tuple(c.theta)))
    boundary = box.on_boundary(best.theta)
    jac = estimating_function_jacobian(model, obs, best.theta)
    converged = bool(best.converged and not boundary and np.all(np.isfinite(jac)))
    if converged and abs(np.linalg.det(jac)) == 0.0:
        converged = False
    if not converged:
        log.debug("GQMLE not converged: |G|=%g theta=%s boundary=%s", best.norm, best.theta, boundary)
    return GqmleFit(
        theta_hat=best.theta.copy(),
        objective=best.norm,
        converged=converged,
        iterations=total_iter,
        neg_jacobian_at_fit=-jac,
        on_boundary=boundary,
        starts_used=starts_used,
    )
