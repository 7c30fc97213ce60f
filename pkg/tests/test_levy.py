import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from levysde.errors import OriginError, UnsupportedMoment
from levysde.levy import (
    CompoundPoissonNormalDriver,
    NIGDriver,
    make_driver,
    nig_cumulant,
    nig_cumulant_dudelta,
    nig_delta_from_cumulant,
    nig_levy_density,
    nig_levy_integral,
    nig_levy_moment,
    nig_phi_variance,
    sample_increment,
    sample_inverse_gaussian,
)

# Independent oracle: mpmath quadrature of the density (delta^2/pi) K_1(delta z)/z
# at 30 digits, frozen here.
MP_CUMULANT = {
    (1, 1): -0.414213562373095, (1, 3): -2.16227766016838, (1, 5): -4.09901951359278,
    (5, 1): -0.495097567963924, (5, 3): -4.1547594742265, (5, 5): -10.3553390593274,
    (10, 1): -0.498756211208903, (10, 3): -4.4030650891055, (10, 5): -11.8033988749895,
}
MP_PHI_VARIANCE = {(1, 1): 0.210393135996295, (10, 1): 0.0073172864899571, (1, 3): 1.78317405518765}


def test_nig_sample_mean_delta10():
    j = NIGDriver(10.0).sample(1.0, 10**6, np.random.default_rng(1))
    assert abs(j.mean()) < 0.004


def test_nig_sample_variance_delta1():
    j = NIGDriver(1.0).sample(0.05, 10**6, np.random.default_rng(2))
    assert j.var() == pytest.approx(0.05, rel=0.01)


def test_cpn_sample_variance():
    j = CompoundPoissonNormalDriver(1.0).sample(2.0, 10**6, np.random.default_rng(3))
    assert j.var() == pytest.approx(2.0, rel=0.02)
    assert abs(j.mean()) < 3 * np.sqrt(2.0 / 10**6)


def test_sample_increment_scalar():
    v = sample_increment(NIGDriver(2.0), 0.1, np.random.default_rng(0))
    assert isinstance(v, float)


def test_inverse_gaussian_degenerate_shape():
    w = sample_inverse_gaussian(1.0, 1e12, np.random.default_rng(4), size=1000)
    assert w.std() < 1e-5 and abs(w.mean() - 1.0) < 1e-5


def test_inverse_gaussian_moments():
    w = sample_inverse_gaussian(2.0, 8.0, np.random.default_rng(5), size=10**6)
    assert w.mean() == pytest.approx(2.0, rel=0.003)
    assert w.var() == pytest.approx(1.0, rel=0.02)


def test_inverse_gaussian_rejects_bad_parameters():
    with pytest.raises(ValueError):
        sample_inverse_gaussian(-1.0, 1.0, np.random.default_rng())
    with pytest.raises(ValueError):
        sample_inverse_gaussian(1.0, 0.0, np.random.default_rng())


def test_inverse_gaussian_matches_scipy_law():
    # scipy's invgauss(mu/lambda, scale=lambda) is IG(mean=mu, shape=lambda)
    from scipy import stats

    mean, shape = 0.7, 2.5
    w = sample_inverse_gaussian(mean, shape, np.random.default_rng(6), size=20000)
    assert stats.kstest(w, stats.invgauss(mean / shape, scale=shape).cdf).pvalue > 0.01


@pytest.mark.parametrize("delta,u", sorted(MP_CUMULANT))
def test_cumulant_matches_mpmath_oracle(delta, u):
    assert nig_cumulant(delta, u) == pytest.approx(MP_CUMULANT[(delta, u)], abs=1e-12)


def test_cumulant_examples():
    assert nig_cumulant(1.0, 1.0) == pytest.approx(-0.4142, abs=5e-5)
    assert nig_cumulant(5.0, 5.0) == pytest.approx(-10.3553, abs=5e-5)
    assert nig_cumulant(3.0, 0.0) == 0.0


def test_cumulant_unit_variance():
    e = 1e-4
    for delta in (0.5, 1.0, 10.0):
        d2 = (nig_cumulant(delta, e) - 2 * nig_cumulant(delta, 0.0) + nig_cumulant(delta, -e)) / e**2
        assert d2 == pytest.approx(-1.0, abs=1e-6)


@settings(max_examples=100, deadline=None)
@given(delta=st.floats(0.05, 50.0), u=st.floats(0.01, 20.0))
def test_cumulant_inverse_roundtrip(delta, u):
    # kappa depends on delta only weakly when u << delta; allow for that conditioning
    k = nig_cumulant(delta, u)
    cond = abs(k / (delta * nig_cumulant_dudelta(delta, u)))
    assert nig_delta_from_cumulant(k, u) == pytest.approx(delta, rel=1e-13 * cond + 1e-12)


def test_levy_moments():
    assert nig_levy_moment(10.0, 4) == pytest.approx(0.03)
    assert nig_levy_moment(5.0, 3) == 0.0
    assert nig_levy_moment(2.0, 2) == 1.0
    with pytest.raises(UnsupportedMoment):
        nig_levy_moment(1.0, 5)


@pytest.mark.parametrize("delta,u", sorted(MP_PHI_VARIANCE))
def test_phi_variance_matches_mpmath_oracle(delta, u):
    assert nig_phi_variance(delta, u) == pytest.approx(MP_PHI_VARIANCE[(delta, u)], rel=1e-12)


def test_phi_variance_examples():
    assert nig_phi_variance(1.0, 1.0) == pytest.approx(0.21039, abs=5e-6)
    assert nig_phi_variance(4.0, 0.0) == 0.0
    assert nig_phi_variance(1.0, 3.0) > nig_phi_variance(1.0, 1.0)


@settings(max_examples=50, deadline=None)
@given(delta=st.floats(0.1, 20.0), z=st.floats(1e-6, 30.0))
def test_density_even_and_positive(delta, z):
    assert nig_levy_density(delta, z) == nig_levy_density(delta, -z)
    assert nig_levy_density(delta, z) >= 0.0


def test_density_origin_error():
    with pytest.raises(OriginError):
        nig_levy_density(1.0, 0.0)


def test_quadrature_examples():
    v = nig_levy_integral(1.0, lambda z: np.cos(z) - 1.0)
    assert v == pytest.approx(-0.4142, abs=1e-4)
    assert nig_levy_integral(10.0, lambda z: z**4) == pytest.approx(0.03, abs=1e-5)


@pytest.mark.parametrize("delta,u", sorted(MP_CUMULANT))
def test_quadrature_reproduces_cumulant(delta, u):
    v = nig_levy_integral(delta, lambda z: np.cos(u * z) - 1.0)
    assert v == pytest.approx(MP_CUMULANT[(delta, u)], abs=1e-4)


def test_quadrature_reproduces_phi_variance():
    for (delta, u), val in MP_PHI_VARIANCE.items():
        q = nig_levy_integral(delta, lambda z: (np.cos(u * z) - 1.0) ** 2)
        assert q == pytest.approx(val, abs=1e-4)


def test_small_time_fourth_moment_convergence():
    # E[J_h^4 | W] = 3 W^2 for J_h = sqrt(W) Z, so mean(3 W^2) / h is an
    # unbiased, lower-variance estimate of E|J_h|^4 / h.
    delta = 3.0
    target = nig_levy_moment(delta, 4)
    gaps = []
    for k, h in enumerate((0.05, 0.01, 0.002)):
        w = sample_inverse_gaussian(h, (delta * h) ** 2, np.random.default_rng(100 + k), size=10**7)
        gaps.append(abs(np.mean(3.0 * w * w) / h - target) / target)
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 0.05


def test_fourth_moment_direct_and_conditional_routes_agree():
    delta, h = 3.0, 0.05
    j = NIGDriver(delta).sample(h, 10**6, np.random.default_rng(7))
    direct = np.mean(j**4) / h
    exact = 3.0 / delta**2 + 3.0 * h
    assert direct == pytest.approx(exact, rel=0.05)


@pytest.mark.parametrize("u", [1.0, 3.0, 5.0])
def test_sampler_characteristic_function(u):
    n = 10**6
    j = NIGDriver(1.0).sample(1.0, n, np.random.default_rng(int(u)))
    c = np.cos(u * j)
    se = c.std() / np.sqrt(n)
    assert abs(c.mean() - np.exp(nig_cumulant(1.0, u))) < 3 * se


def test_cpn_cumulant_and_moments():
    d = CompoundPoissonNormalDriver(2.0)
    assert d.levy_moment(4) == pytest.approx(1.5)
    j = d.sample(1.0, 10**6, np.random.default_rng(8))
    c = np.cos(j)
    assert abs(c.mean() - np.exp(d.cumulant(1.0))) < 3 * c.std() / 1e3


def test_make_driver():
    assert make_driver("nig", delta=2).describe() == {"driver": "nig", "delta": 2.0}
    assert make_driver("cpn", rate=1).describe() == {"driver": "cpn", "rate": 1.0}
    with pytest.raises(ValueError):
        make_driver("nig")
    with pytest.raises(ValueError):
        make_driver("stable", delta=1)
    with pytest.raises(ValueError):
        NIGDriver(0.0)


def test_sampler_stream_is_reproducible():
    a = NIGDriver(5.0).sample(0.01, 1000, np.random.default_rng(9))
    b = NIGDriver(5.0).sample(0.01, 1000, np.random.default_rng(9))
    assert np.array_equal(a, b)
