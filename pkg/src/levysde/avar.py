"""Joint asymptotic covariance of ``(nu_hat(phi), theta_hat)`` and derived inference.

Coordinates are ordered ``(nu_1..nu_q, alpha_1..alpha_pa, gamma_1..gamma_pg)``
throughout.  ``sqrt(nh) (estimate - truth)`` is approximately
``N(0, Gamma^{-1} Sigma Gamma^{-T})``, where ``Sigma`` and ``Gamma`` are
replaced by the plug-in statistics assembled here.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import special

from .errors import (
    DimensionError,
    NotPositiveDefiniteError,
    SingularGammaError,
    SingularJacobianError,
)
from .gqmle import GqmleFit, fit_gqmle
from .models import CoefficientModel
from .residual import (
    MomentFunction,
    ResidualSet,
    _scale_along_path,
    bias_matrix,
    euler_residuals,
    moment_estimate,
)
from .simulate import ObservationSeries

GAMMA_CONDITION_CAP = 1e12
EIGEN_FLOOR = 1e-14


@dataclass(frozen=True)
class SigmaHat:
    s11: np.ndarray
    s12: np.ndarray
    s22: np.ndarray

    @property
    def full(self) -> np.ndarray:
        m = np.block([[self.s11, self.s12], [self.s12.T, self.s22]])
        return 0.5 * (m + m.T)


@dataclass(frozen=True)
class GammaHat:
    matrix: np.ndarray
    q: int
    p_alpha: int
    p_gamma: int

    @property
    def b_block(self) -> np.ndarray:
        """``B_n = [0 | b_n]`` as stored (with its sign restored)."""
        return -self.matrix[: self.q, self.q:]

    @property
    def neg_jacobian(self) -> np.ndarray:
        return self.matrix[self.q:, self.q:]


@dataclass(frozen=True)
class Interval:
    name: str
    estimate: float
    lower: float
    upper: float
    level: float

    def to_dict(self) -> dict:
        return {"name": self.name, "lower": self.lower, "upper": self.upper, "level": self.level}


@dataclass(frozen=True)
class JointFit:
    theta_hat: np.ndarray
    nu_hat: np.ndarray
    sigma_hat: SigmaHat
    gamma_hat: GammaHat
    joint_cov: np.ndarray
    nh: float
    n: int
    h: float
    names: tuple[str, ...]
    b_hat: Optional[np.ndarray] = None
    gqmle: Optional[GqmleFit] = None
    residuals: Optional[ResidualSet] = None
    ci: tuple[Interval, ...] = ()

    @property
    def estimate(self) -> np.ndarray:
        return np.concatenate([self.nu_hat, self.theta_hat])

    def to_dict(self) -> dict:
        return {
            "theta_hat": self.theta_hat.tolist(),
            "nu_hat": self.nu_hat.tolist(),
            "sigma_hat": {
                "s11": self.sigma_hat.s11.tolist(),
                "s12": self.sigma_hat.s12.tolist(),
                "s22": self.sigma_hat.s22.tolist(),
            },
            "gamma_hat": self.gamma_hat.matrix.tolist(),
            "joint_cov": self.joint_cov.tolist(),
            "ci": [iv.to_dict() for iv in self.ci],
            "nh": self.nh,
            "n": self.n,
            "h": self.h,
        }


def sigma_hat(model: CoefficientModel, obs: ObservationSeries, theta_hat,
              res: ResidualSet, phi: MomentFunction) -> SigmaHat:
    """Plug-in estimate of the covariance of ``sqrt(nh) (u_n, G_n(theta_0))``."""
    alpha, gamma = model.check(theta_hat)
    x = obs.previous
    n, nh = res.n, res.nh
    d = res.residuals
    c = _scale_along_path(model, obs, gamma)
    da = np.broadcast_to(model.drift_dalpha(x, alpha), (n, model.p_alpha))
    dc = np.broadcast_to(model.scale_dgamma(x, gamma), (n, model.p_gamma))
    f = phi(d)

    s11 = f.T @ f / nh
    s12_alpha = np.outer((f * d[:, None]).sum(axis=0) / nh, (da / c[:, None]).mean(axis=0))
    s12_gamma = np.outer(2.0 * (f * (d * d)[:, None]).sum(axis=0) / nh, (dc / c[:, None]).mean(axis=0))
    s12 = np.hstack([s12_alpha, s12_gamma])

    m3 = np.sum(d**3) / nh
    m4 = np.sum(d**4) / nh
    wa = da / c[:, None]
    wg = dc / c[:, None]
    s_aa = wa.T @ wa / n
    s_gg = 4.0 * (wg.T @ wg / n) * m4
    s_ag = 2.0 * (wa.T @ wg / n) * m3
    s22 = np.block([[s_aa, s_ag], [s_ag.T, s_gg]])
    return SigmaHat(0.5 * (s11 + s11.T), s12, 0.5 * (s22 + s22.T))


def gamma_hat(jacobian_at_fit, b_hat) -> GammaHat:
    """Assemble ``[[I_q, -B_n], [0, -dG(theta_hat)]]`` with ``B_n = [0 | b_n]``."""
    jac = np.atleast_2d(np.asarray(jacobian_at_fit, dtype=float))
    b = np.atleast_2d(np.asarray(b_hat, dtype=float))
    p = jac.shape[0]
    if jac.shape != (p, p):
        raise DimensionError(f"Jacobian must be square, got {jac.shape}")
    q, p_gamma = b.shape
    if p_gamma > p:
        raise DimensionError(f"b_hat has {p_gamma} columns but only {p} parameters")
    p_alpha = p - p_gamma
    top = np.hstack([np.eye(q), np.zeros((q, p_alpha)), -b])
    bottom = np.hstack([np.zeros((p, q)), -jac])
    return GammaHat(np.vstack([top, bottom]), q, p_alpha, p_gamma)


def joint_covariance(sigma: SigmaHat, gamma: GammaHat) -> np.ndarray:
    """``Gamma^{-1} Sigma Gamma^{-T}``, symmetrised."""
    g = gamma.matrix
    s = sigma.full
    if s.shape != g.shape:
        raise DimensionError(f"Sigma {s.shape} and Gamma {g.shape} disagree")
    cond = np.linalg.cond(g)
    if not np.isfinite(cond) or cond > GAMMA_CONDITION_CAP:
        raise SingularGammaError(f"Gamma_hat condition number {cond:.3g} exceeds {GAMMA_CONDITION_CAP:g}")
    ginv_s = np.linalg.solve(g, s)
    cov = np.linalg.solve(g, ginv_s.T).T
    return 0.5 * (cov + cov.T)


def inverse_sqrt(matrix: np.ndarray) -> np.ndarray:
    """Symmetric inverse square root via eigendecomposition."""
    w, v = np.linalg.eigh(0.5 * (matrix + matrix.T))
    if w[-1] <= 0 or np.any(w <= EIGEN_FLOOR * w[-1]):
        raise NotPositiveDefiniteError(f"eigenvalues {w} not positive definite (floor {EIGEN_FLOOR:g} x max)")
    return (v / np.sqrt(w)) @ v.T


def studentize(u_hat, v_hat, sigma: SigmaHat, gamma: GammaHat) -> np.ndarray:
    """``Sigma^{-1/2} Gamma (u_hat, v_hat)``; approximately standard normal.

    ``u_hat = sqrt(nh) (nu_hat - nu_0)`` and ``v_hat = sqrt(nh) (theta_hat - theta_0)``.
    """
    vec = np.concatenate([np.atleast_1d(u_hat), np.atleast_1d(v_hat)]).astype(float)
    return inverse_sqrt(sigma.full) @ (gamma.matrix @ vec)


def normal_quantile(p: float) -> float:
    return float(special.ndtri(p))


def confidence_intervals(fit: JointFit, level: float) -> tuple[Interval, ...]:
    """Wald intervals ``estimate +- z_{(1+level)/2} sqrt(cov_ii / nh)``."""
    if not 0.0 <= level < 1.0:
        raise ValueError("level must lie in [0, 1)")
    z = normal_quantile(0.5 * (1.0 + level))
    half = z * np.sqrt(np.clip(np.diag(fit.joint_cov), 0.0, None) / fit.nh)
    est = fit.estimate
    return tuple(
        Interval(name, float(e), float(e - w), float(e + w), level)
        for name, e, w in zip(fit.names, est, half)
    )


def delta_method(transform: Callable, jacobian: Callable, fit: JointFit) -> dict:
    """Propagate the joint fit through ``F(nu, theta) = (xi, theta)``.

    Returns ``xi_hat`` (first ``q`` coordinates of ``F``), ``theta_hat`` and
    ``cov = dF C dF^T`` where ``C`` is the joint asymptotic covariance.
    """
    q = fit.nu_hat.size
    out = np.asarray(transform(fit.nu_hat, fit.theta_hat), dtype=float)
    dF = np.atleast_2d(np.asarray(jacobian(fit.nu_hat, fit.theta_hat), dtype=float))
    dim = q + fit.theta_hat.size
    if dF.shape != (dim, dim):
        raise DimensionError(f"transform Jacobian must be {dim}x{dim}, got {dF.shape}")
    if not np.all(np.isfinite(dF)) or np.linalg.matrix_rank(dF) < dim:
        raise SingularJacobianError("transform Jacobian is singular at the fitted point")
    cov = dF @ fit.joint_cov @ dF.T
    return {"xi_hat": out[:q], "theta_hat": out[q:], "cov": 0.5 * (cov + cov.T)}


def joint_fit(model: CoefficientModel, obs: ObservationSeries, phi: MomentFunction, *,
              level: float = 0.95, gqmle: Optional[GqmleFit] = None, tol: float = 1e-10,
              multistart: int = 8) -> JointFit:
    """Full two-step pipeline: GQMLE, residuals, ``b_n``, ``Sigma``, ``Gamma``, intervals."""
    if gqmle is None:
        gqmle = fit_gqmle(model, obs, tol=tol, multistart=multistart)
    theta = gqmle.theta_hat
    res = euler_residuals(model, obs, theta)
    nu = moment_estimate(res, phi)
    b = bias_matrix(res, model, obs, theta, phi)
    sig = sigma_hat(model, obs, theta, res, phi)
    gam = gamma_hat(-gqmle.neg_jacobian_at_fit, b)
    cov = joint_covariance(sig, gam)
    names = tuple(phi.labels) + tuple(model.param_names())
    fit = JointFit(theta, nu, sig, gam, cov, res.nh, res.n, res.h, names,
                   b_hat=b, gqmle=gqmle, residuals=res)
    return JointFit(**{**fit.__dict__, "ci": confidence_intervals(fit, level)})
