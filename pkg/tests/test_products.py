import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from radweight import atomize as A
from radweight import products as P
from radweight import weight as W


@pytest.fixture(scope="module")
def prod(disc_rings):
    return P.RingProduct(disc_rings)


@pytest.fixture(scope="module")
def fock_prod(beta):
    return P.RingProduct(A.build_rings(beta, 60.0))


def _ref_log1m_exp(a, b):
    v = mpmath.log(-mpmath.expm1(mpmath.mpc(a, b)))
    return float(v.real), float(v.imag)


@settings(max_examples=300, deadline=None)
@given(st.floats(-40, 40, allow_subnormal=False), st.floats(-3.1, 3.1, allow_subnormal=False))
def test_log1m_exp_against_mpmath(a, b):
    mpmath.mp.dps = 40
    if a == 0 and b == 0:
        return
    re, im = P.log1m_exp(a, b)
    ref_re, ref_im = _ref_log1m_exp(a, b)
    assert float(re) == pytest.approx(ref_re, rel=1e-12, abs=1e-14)
    assert math.isclose((float(im) - ref_im + math.pi) % (2 * math.pi) - math.pi, 0.0, abs_tol=1e-12)


@pytest.mark.parametrize("a", [-1e-2, -1e-3, -9.99e-4, -1e-5, -1e-9, 0.5e-3, 2e-3])
def test_log1m_exp_regime_switch(a):
    mpmath.mp.dps = 40
    for b in (1e-7, 1e-3, 0.3, 3.0):
        re, _ = P.log1m_exp(a, b)
        assert float(re) == pytest.approx(_ref_log1m_exp(a, b)[0], rel=1e-12)


def test_log_complex_arithmetic():
    x = P.LogComplex.from_complex(3 - 4j)
    y = P.LogComplex.from_complex(1j)
    assert (x * y).to_complex() == pytest.approx((3 - 4j) * 1j)
    assert (x / y).to_complex() == pytest.approx((3 - 4j) / 1j)
    z = P.LogComplex.from_complex(0)
    assert z.is_zero and z.arg == 0.0
    assert -math.pi < (P.LogComplex(0.0, 3.0) * P.LogComplex(0.0, 3.0)).arg <= math.pi


def test_zeros_and_origin(prod, disc_rings):
    for k in (0, 5, 30):
        assert P.eval_f(prod, complex(disc_rings.s[k])).log_mag == -math.inf
        n = int(disc_rings.N[k])
        lam = disc_rings.s[k] * np.exp(2j * math.pi * 3 / n)
        # rounding puts lam about 1e-16 off the true zero
        assert P.eval_f(prod, lam).log_mag < P.eval_f(prod, lam * (1 + 1e-6)).log_mag - 20
    v = P.eval_f(prod, 0j)
    assert v.log_mag == 0.0


def test_matches_brute_force_disc(prod, disc_rings, rng):
    rs = A.build_rings(W.pow_inv(), 0.999)
    p = P.RingProduct(rs)
    z = 0.5 * np.exp(1j)
    ref = P.brute_force_log(rs, np.array([z]))[0]
    assert P.eval_f(p, z).log_mag == pytest.approx(ref, rel=1e-8)
    t = rng.uniform(0.0, 0.96, 1000)
    zz = t * np.exp(1j * rng.uniform(0, 2 * math.pi, 1000))
    lf, _ = p.eval(zz)
    # every ring is materialized, so the oracle sees all factors
    ref = P.brute_force_log(rs, zz[:200])
    np.testing.assert_allclose(lf[:200], ref, rtol=1e-8, atol=1e-10)


def test_matches_brute_force_plane(fock_prod, rng):
    zz = rng.uniform(0, 30, 200) * np.exp(1j * rng.uniform(0, 2 * math.pi, 200))
    lf, _ = fock_prod.eval(zz)
    ref = P.brute_force_log(fock_prod.rings, zz)
    np.testing.assert_allclose(lf, ref, rtol=1e-8, atol=1e-9)


def test_argument_matches_factor_product(rng):
    rs = A.build_rings(W.pow_inv(), 0.95)
    p = P.RingProduct(rs)
    z = 0.6 * np.exp(0.7j)
    lam = np.concatenate([s * np.exp(2j * math.pi * np.arange(n) / n) for s, n in zip(rs.s, rs.N)])
    val = np.prod((1 - z / lam) / (1 - z * np.conj(lam)))
    got = P.eval_f(p, z)
    assert got.to_complex() == pytest.approx(val, rel=1e-9)


def test_diag_A_origin_and_zero(prod, fock_prod, beta, pow_inv):
    a = P.diag_A(fock_prod, beta, np.array([0j]))
    d0 = fock_prod.lattice().nearest_distance(np.array([0j]))[0]
    assert a[0] == pytest.approx(-math.log(d0 / beta.rho(0.0)))
    with pytest.raises(ValueError, match="indeterminate at zero"):
        P.diag_A(prod, pow_inv, np.array([complex(prod.rings.s[7])]))


def test_band_width_stable(pow_inv, disc_rings):
    rs = A.RingSequence(pow_inv, disc_rings.r[:57], disc_rings.s[:56], disc_rings.N[:56])
    rep, z, a = P.band_A(P.RingProduct(rs), pow_inv, 10, 45)
    assert rep.width <= 6
    # values at a fixed radius spread no more than the whole band
    i = np.argsort(np.abs(z))[:16]
    assert np.ptp(a[i]) <= rep.width
    js = rep.to_json()
    assert '"width"' in js


def test_divided_log_removes_zeros(prod, disc_rings):
    k = 20
    n = int(disc_rings.N[k])
    lam = disc_rings.s[k] * np.exp(2j * math.pi * np.array([0, 1, 3]) / n)
    at = P.divided_log(prod, lam[:1], lam, [k, k, k])
    assert np.isfinite(at[0].real)
    w = np.array([lam[0] + 0.3 * disc_rings.s[k] * 2 * math.pi / n * 1j, 0.5 + 0.1j])
    ref = prod.eval(w)[0] - np.sum(np.log(np.abs(w[:, None] - lam[None, :])), axis=1)
    np.testing.assert_allclose(P.divided_log(prod, w, lam, [k, k, k]).real, ref, rtol=1e-9)
    # continuity across the removed zero
    eps = 1e-12 * disc_rings.s[k]
    near = P.divided_log(prod, lam[:1] + eps, lam, [k, k, k])
    assert near[0].real == pytest.approx(at[0].real, rel=1e-6)


def test_eval_truncated(pow_inv, disc_rings):
    K = 30
    p = P.RingProduct(disc_rings, truncation=K)
    full = P.RingProduct(disc_rings)
    z = np.array([0.3 + 0.2j, 0.5j])
    lf, _, diag = P.eval_truncated(p, pow_inv, z)
    np.testing.assert_allclose(lf, full.eval(z)[0], atol=1e-6)
    assert np.all(np.isfinite(diag))
    lf2, _, d2 = P.eval_truncated(p, pow_inv, np.array([complex(disc_rings.s[K - 1])]))
    assert lf2[0] == -math.inf and np.isnan(d2[0])
    with pytest.raises(ValueError):
        P.eval_truncated(full, pow_inv, z)


def test_truncated_band(pow_inv, disc_rings):
    K = 30
    p = P.RingProduct(disc_rings, truncation=K)
    rng = np.random.default_rng(5)
    r = rng.uniform(0.2, 0.999, 3000)
    z = r * np.exp(1j * rng.uniform(0, 2 * math.pi, 3000))
    z = z[p.lattice().nearest_distance(z) >= 0.1 * pow_inv.rho_at(z)]
    _, _, diag = P.eval_truncated(p, pow_inv, z)
    assert np.ptp(diag) <= 6
