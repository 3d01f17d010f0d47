import math

import numpy as np
import pytest
from scipy import integrate, optimize, stats

from rggricci.geometry import BOLZA_R, BOLZA_RK, DomainError, Surface, in_octagon
from rggricci.sampling import SampleMode, SamplerConfig, hyperbolic_radius_icdf, sample_points

TORUS, SPHERE, BOLZA = Surface.of("torus"), Surface.of("sphere"), Surface.of("bolza")


def test_icdf_endpoints():
    assert hyperbolic_radius_icdf(0.0) == 0.0
    assert hyperbolic_radius_icdf(1.0) == pytest.approx(BOLZA_R, abs=1e-15)


def test_icdf_matches_numeric_inversion():
    # invert the normalised radial CDF of 4r/(1-r^2)^2 by quadrature and root finding
    dens = lambda r: 4 * r / (1 - r * r) ** 2
    total = integrate.quad(dens, 0, BOLZA_R, epsabs=1e-13, epsrel=1e-13)[0]
    for u in (0.1, 0.5, 0.9):
        f = lambda rho: integrate.quad(dens, 0, rho, epsabs=1e-13, epsrel=1e-13)[0] / total - u
        root = optimize.brentq(f, 0, BOLZA_R, xtol=1e-15, rtol=1e-15)
        assert hyperbolic_radius_icdf(u) == pytest.approx(root, abs=1e-10)


def test_icdf_monotone_and_domain():
    u = np.linspace(0, 1, 1001)
    rho = hyperbolic_radius_icdf(u)
    assert np.all(np.diff(rho) > 0)
    with pytest.raises(DomainError):
        hyperbolic_radius_icdf(1.5)
    with pytest.raises(DomainError):
        hyperbolic_radius_icdf(0.5, R=1.0)


def test_fixed_count_torus():
    pts = sample_points(TORUS, SamplerConfig(1000, SampleMode.FIXED, seed=1))
    assert pts.shape == (1000, 2)
    assert abs(pts[:, 0].mean() - 0.5) < 0.05
    assert len(sample_points(TORUS, SamplerConfig(10.2, seed=1))) == 11


def test_poisson_count_sphere():
    n = 5000
    rate = n / SPHERE.volume
    inside = 0
    for seed in range(100):
        count = len(sample_points(SPHERE, SamplerConfig(rate, SampleMode.POISSON, seed=seed)))
        inside += abs(count - n) <= 3 * math.sqrt(n)
    assert inside >= 99


def test_points_in_chart():
    for s in (TORUS, SPHERE, BOLZA):
        s.validate(sample_points(s, SamplerConfig(5000, seed=2)))


def test_determinism():
    for s in (TORUS, SPHERE, BOLZA):
        a = sample_points(s, SamplerConfig(500, seed=77))
        b = sample_points(s, SamplerConfig(500, seed=77))
        assert a.tobytes() == b.tobytes()
        c = sample_points(s, SamplerConfig(500, seed=78))
        assert not np.array_equal(a, c)


def test_torus_chi_square():
    pts = sample_points(TORUS, SamplerConfig(100_000, seed=3))
    counts, _, _ = np.histogram2d(pts[:, 0], pts[:, 1], bins=8, range=[[0, 1], [0, 1]])
    assert stats.chisquare(counts.ravel()).pvalue > 1e-3


def test_sphere_uniform_in_cos_theta_and_phi():
    pts = sample_points(SPHERE, SamplerConfig(100_000, seed=4))
    assert stats.kstest(np.cos(pts[:, 0]), stats.uniform(-1, 2).cdf).pvalue > 1e-3
    assert stats.kstest(pts[:, 1], stats.uniform(0, 2 * np.pi).cdf).pvalue > 1e-3


def test_bolza_chi_square_over_sectors_and_radius():
    # eight angular sectors are congruent, so each carries 1/8 of the area
    pts = sample_points(BOLZA, SamplerConfig(100_000, seed=5))
    z = pts[:, 0] + 1j * pts[:, 1]
    sector = np.floor(np.mod(np.angle(z), 2 * np.pi) / (np.pi / 4)).astype(int)
    counts = np.bincount(sector, minlength=8)
    assert stats.chisquare(counts).pvalue > 1e-3
    # inside the inscribed disk, the hyperbolic area law fixes the radial CDF
    rk = BOLZA_RK * math.cos(np.pi / 8)  # Klein distance to the side midpoints
    r_in = (1 - math.sqrt(1 - rk * rk)) / rk
    r = np.abs(z)
    r_small = r[r < r_in]
    cdf = lambda x: (x * x / (1 - x * x)) / (r_in**2 / (1 - r_in**2))
    assert stats.kstest(r_small, cdf).pvalue > 1e-3


def test_bolza_acceptance_rate_stable():
    from rggricci.sampling import hyperbolic_radius_icdf as icdf

    rates = []
    for seed in range(100):
        rng = np.random.default_rng(seed)
        z = icdf(rng.random(5000)) * np.exp(2j * np.pi * rng.random(5000))
        rates.append(np.mean(in_octagon(z)))
    rates = np.array(rates)
    assert rates.std() < 0.05 * rates.mean()


def test_config_validation():
    with pytest.raises(ValueError):
        SamplerConfig(0)
    with pytest.raises(ValueError):
        SamplerConfig(10, seed=-1)
    assert SamplerConfig(5, "poisson").mode is SampleMode.POISSON
