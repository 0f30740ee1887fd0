import math

import mpmath
import numpy as np
import pytest

from radweight import weierstrass as S


@pytest.fixture(scope="module")
def sigma10():
    return S.SigmaLattice(10.0)


def test_cardinality(sigma10):
    # Gauss circle count for radius 100
    n = sum(2 * math.isqrt(100 * 100 - a * a) + 1 for a in range(-100, 101))
    assert len(sigma10) == n
    assert sigma10.points[0] == 0
    with pytest.raises(ValueError):
        S.SigmaLattice(5.0)


def test_neumaier():
    vals = [1e16, 1.0, -1e16] * 1000
    assert S.neumaier(vals) == 1000.0
    assert S.neumaier([]) == 0.0


def test_zeros(sigma10):
    m, a = sigma10.eval(np.array([0j, 3 + 4j, -7j, 100 + 0j]))
    assert np.all(m == -np.inf) and np.all(a == 0)
    assert np.isfinite(sigma10.eval(np.array([101 + 0j]))[0][0])


def test_conjugate_and_rotation_symmetry(sigma10, rng):
    z = rng.uniform(-8, 8, 20) + 1j * rng.uniform(-8, 8, 20)
    m, a = sigma10.eval(z)
    mc, ac = sigma10.eval(np.conj(z))
    mi, _ = sigma10.eval(1j * z)
    np.testing.assert_allclose(mc, m, rtol=1e-11, atol=1e-9)
    np.testing.assert_allclose(mi, m, rtol=1e-11, atol=1e-9)
    np.testing.assert_allclose(np.cos(ac), np.cos(-a), atol=1e-8)
    np.testing.assert_allclose(np.sin(ac), np.sin(-a), atol=1e-8)


def test_against_mpmath(sigma10):
    mpmath.mp.dps = 30
    lam = [mpmath.mpc(float(p.real), float(p.imag)) for p in sigma10.nonzero]
    for z in (0.37 + 0.21j, 4.5 - 2.25j, -7.1 + 6.3j):
        zz = mpmath.mpc(z.real, z.imag)
        ref = mpmath.log(abs(zz)) + mpmath.fsum(mpmath.log(abs(1 - zz / l)) for l in lam)
        got = sigma10.eval_one(z)
        assert got.log_mag == pytest.approx(float(ref), rel=1e-11, abs=1e-10)
        # argument mod 2 pi from the complex product
        val = zz * mpmath.fprod(1 - zz / l for l in lam)
        assert math.cos(got.arg - float(mpmath.arg(val))) == pytest.approx(1.0, abs=1e-9)
    m, _ = sigma10.eval(np.array([4.5 - 2.25j]), with_arg=False)
    assert m[0] == pytest.approx(sigma10.eval_one(4.5 - 2.25j).log_mag, rel=1e-12)


def test_dist(sigma10):
    d = sigma10.dist(np.array([0.5 + 0.5j, 3.2 + 0j, 150 + 0j]))
    np.testing.assert_allclose(d, [math.sqrt(0.5), 0.2, 50.0], atol=1e-12)


def test_small_band(sigma10):
    b = S.sigma_band(sigma10, n=600)
    assert b.report.width <= 4
    assert np.all(sigma10.dist(b.points) >= 0.1)
    assert b.report.grid["n"] == 600


def test_lower_margins(sigma10):
    z = S.outside_samples(10.0, n=30, seed=3)
    t = np.abs(z)
    assert np.all((t > 10) & (t <= 10 ** 1.5))
    kept, margin = S.lower_margins(sigma10, z)
    # the first sample, R + 1, is itself a lattice point
    assert kept.size == 29 and 11 not in kept
    assert margin.min() > -10
    with pytest.raises(ValueError):
        S.lower_margins(sigma10, np.array([40.0 + 0j]))


def test_band_stable_under_doubling(sigma10):
    a = S.sigma_band(sigma10, n=800).report.width
    b = S.sigma_band(sigma10, n=1600).report.width
    assert abs(b / a - 1) <= 0.10


def test_margin_meets_band_at_radius(sigma10):
    th = np.linspace(0.05, 2 * math.pi, 12, endpoint=False)
    z = 10.0 * np.exp(1j * th)
    kept, margin = S.lower_margins(sigma10, z)
    np.testing.assert_allclose(margin, S.band_values(sigma10, kept), atol=1e-9)


def test_value_inside_band(sigma10):
    b = S.sigma_band(sigma10, n=800).report
    v = S.band_values(sigma10, np.array([0.5 + 0.5j]))[0]
    assert b.min - 0.05 <= v <= b.max + 0.05


def test_margin_just_outside(sigma10):
    kept, margin = S.lower_margins(sigma10, np.array([11.5 + 0j, 11 + 0.5j]))
    assert kept.size == 2 and np.all(np.isfinite(margin))
