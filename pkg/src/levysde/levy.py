"""Pure-jump Lévy drivers normalised to ``E[J_1] = 0`` and ``Var[J_1] = 1``.

Two drivers are provided:

* :class:`NIGDriver` -- symmetric normal inverse Gaussian process with
  ``L(J_t) = NIG(delta, 0, delta * t, 0)`` in the (tail, skew, scale,
  location) convention, so that ``log E exp(iuJ_1) = delta (delta - sqrt(delta^2 + u^2))``.
* :class:`CompoundPoissonNormalDriver` -- rate ``lam`` with ``N(0, 1/lam)`` jumps.

Samplers take an explicit :class:`numpy.random.Generator`; drivers themselves
are immutable and can be shared between workers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate, special

from .errors import OriginError, UnsupportedMoment


def sample_inverse_gaussian(mean, shape, rng: np.random.Generator, size=None):
    """Inverse Gaussian variates by transformation with rejection.

    Uses the root-selection construction of Michael, Schucany and Haas: the
    smaller root of the chi-square transformation is computed in the
    cancellation-free form ``mean - 2 mean^2 y / (mean y + sqrt(mean^2 y^2 + 4 mean shape y))``
    and accepted with probability ``mean / (mean + root)``; otherwise the
    conjugate root ``mean^2 / root`` is returned.
    """
    mean = np.asarray(mean, dtype=float)
    shape = np.asarray(shape, dtype=float)
    if np.any(mean <= 0) or np.any(shape <= 0):
        raise ValueError("inverse Gaussian needs mean > 0 and shape > 0")
    if size is None:
        size = np.broadcast(mean, shape).shape
    y = rng.standard_normal(size) ** 2
    u = rng.random(size)
    my = mean * y
    root = mean - 2.0 * mean * my / (my + np.sqrt(my * my + 4.0 * mean * shape * y))
    # root == 0 only when y underflows huge; conjugate root then is +inf, keep root
    accept = u * (mean + root) <= mean
    out = np.where(accept, root, mean * mean / np.where(root > 0, root, 1.0))
    return out if out.shape else float(out)


def nig_cumulant(delta: float, u):
    """``kappa(u) = delta * (delta - sqrt(delta^2 + u^2))`` (real: the law is symmetric)."""
    u = np.asarray(u, dtype=float)
    # delta^2 - delta*sqrt(delta^2+u^2) rewritten to avoid cancellation for small u
    return -delta * u * u / (delta + np.sqrt(delta * delta + u * u))


def nig_cumulant_dudelta(delta: float, u):
    """Derivative of :func:`nig_cumulant` with respect to ``delta``."""
    r = np.sqrt(delta * delta + np.asarray(u, dtype=float) ** 2)
    return 2.0 * delta - r - delta * delta / r


def nig_delta_from_cumulant(kappa, u):
    """Invert ``kappa = nig_cumulant(delta, u)`` for ``delta`` (closed form).

    Requires ``-u^2/2 < kappa < 0``, the range of the map over ``delta > 0``.
    """
    kappa = np.asarray(kappa, dtype=float)
    u = np.asarray(u, dtype=float)
    denom = u * u + 2.0 * kappa
    if np.any(kappa >= 0) or np.any(denom <= 0):
        raise ValueError("cumulant value outside the NIG range (-u^2/2, 0)")
    return np.sqrt(kappa * kappa / denom)


def nig_levy_moment(delta: float, q: int) -> float:
    """``int z^q nu_0(dz)`` for ``q in {2, 3, 4}``."""
    if q == 2:
        return 1.0
    if q == 3:
        return 0.0
    if q == 4:
        return 3.0 / delta**2
    raise UnsupportedMoment(f"Lévy moment of order {q} not available (supported: 2, 3, 4)")


def nig_phi_variance(delta: float, u):
    """``int (cos(u z) - 1)^2 nu_0(dz)``, the asymptotic variance of the cos-moment estimator.

    Follows from ``(cos(uz) - 1)^2 = -2 (cos(uz) - 1) + (cos(2uz) - 1) / 2``.
    """
    u = np.asarray(u, dtype=float)
    return -1.5 * delta**2 + delta * (2.0 * np.sqrt(delta**2 + u * u) - 0.5 * np.sqrt(delta**2 + 4.0 * u * u))


def nig_levy_density(delta: float, z):
    """Lévy density ``(delta^2 / pi) K_1(delta |z|) / |z|`` of the unit-variance NIG process."""
    z = np.asarray(z, dtype=float)
    if np.any(z == 0):
        raise OriginError("the NIG Lévy density is not defined at z = 0")
    az = np.abs(z)
    # k1e(x) = exp(x) K_1(x) keeps the product finite for large arguments
    return delta * delta / np.pi * special.k1e(delta * az) * np.exp(-delta * az) / az


def nig_levy_integral(delta: float, func: Callable[[float], float], *,
                      z_min: float = 1e-10, z_max: float = 60.0) -> float:
    """Adaptive quadrature of ``int func(z) nu_0(dz)`` over ``z_min < |z| < z_max``.

    The integration range is split at ``1/delta`` (inside which the density
    behaves like ``delta / (pi z^2)``) and at multiples of the decay length
    so QUADPACK sees smooth pieces.  For integrands behaving like ``z^2`` at
    the origin the inner cutoff costs about ``z_min * delta / pi`` times the
    curvature; the outer cutoff is negligible because ``K_1`` decays like
    ``exp(-delta |z|)``.
    """
    def integrand(z):
        return func(z) * nig_levy_density(delta, z)

    knot = min(1.0 / delta, z_max)
    edges = [z_min, knot]
    step = 5.0 / delta
    while edges[-1] + step < z_max:
        edges.append(edges[-1] + step)
    edges.append(z_max)
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        for sign in (1.0, -1.0):
            val, _ = integrate.quad(lambda z: integrand(sign * z), lo, hi,
                                    limit=400, epsabs=1e-12, epsrel=1e-10)
            total += val
    return total


@dataclass(frozen=True)
class NIGDriver:
    delta: float

    kind = "nig"

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("NIG delta must be positive")

    def sample(self, span: float, size, rng: np.random.Generator) -> np.ndarray:
        """Exact increments over ``span`` by inverse-Gaussian subordination.

        ``W ~ IG(mean=span, shape=(delta*span)^2)`` and the increment is
        ``sqrt(W) * N(0, 1)``.  All subordinator draws come before the normal
        draws, so the stream depends only on ``(span, size)``.
        """
        if not span > 0:
            raise ValueError("span must be positive")
        w = sample_inverse_gaussian(span, (self.delta * span) ** 2, rng, size=size)
        return np.sqrt(w) * rng.standard_normal(size)

    def cumulant(self, u):
        return nig_cumulant(self.delta, u)

    def levy_moment(self, q: int) -> float:
        return nig_levy_moment(self.delta, q)

    def describe(self) -> dict:
        return {"driver": "nig", "delta": self.delta}


@dataclass(frozen=True)
class CompoundPoissonNormalDriver:
    rate: float

    kind = "cpn"

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError("compound Poisson rate must be positive")

    def sample(self, span: float, size, rng: np.random.Generator) -> np.ndarray:
        if not span > 0:
            raise ValueError("span must be positive")
        counts = rng.poisson(self.rate * span, size=size)
        # a sum of N iid N(0, 1/rate) jumps is N(0, N/rate)
        return np.sqrt(counts / self.rate) * rng.standard_normal(size)

    def cumulant(self, u):
        u = np.asarray(u, dtype=float)
        return self.rate * np.expm1(-u * u / (2.0 * self.rate))

    def levy_moment(self, q: int) -> float:
        if q == 2:
            return 1.0
        if q == 3:
            return 0.0
        if q == 4:
            return 3.0 / self.rate
        raise UnsupportedMoment(f"Lévy moment of order {q} not available (supported: 2, 3, 4)")

    def describe(self) -> dict:
        return {"driver": "cpn", "rate": self.rate}


LevyDriver = NIGDriver | CompoundPoissonNormalDriver


def make_driver(kind: str, *, delta: float | None = None, rate: float | None = None) -> LevyDriver:
    if kind == "nig":
        if delta is None:
            raise ValueError("driver 'nig' needs delta")
        return NIGDriver(float(delta))
    if kind == "cpn":
        if rate is None:
            raise ValueError("driver 'cpn' needs rate")
        return CompoundPoissonNormalDriver(float(rate))
    raise ValueError(f"unknown driver {kind!r}; choose 'nig' or 'cpn'")


def sample_increment(driver: LevyDriver, span: float, rng: np.random.Generator) -> float:
    """A single driver increment over ``span``."""
    return float(driver.sample(span, 1, rng)[0])
