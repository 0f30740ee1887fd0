import math

import mpmath
import numpy as np
import pytest

from radweight import atomize as A
from radweight import geometry as G
from radweight import peaks as K
from radweight import weight as W


@pytest.fixture(scope="module")
def fock_rings(beta):
    return A.build_rings(beta, 120.0)


def test_cubic_peak(pow_inv, disc_rings):
    z = 0.5 * disc_rings.s[30] + 0.5 * disc_rings.s[31]
    g = K.peak_cubic(pow_inv, disc_rings, z * np.exp(0.4j))
    assert g.removed.size == 3
    v = g.log_eval(g.removed)
    assert np.all(np.isfinite(v.real))
    band = g.flat_band(200)
    assert np.isfinite(band.width)
    with pytest.raises(K.AnchorTooCentral):
        K.peak_cubic(pow_inv, disc_rings, 0.0)


def test_gaussian_center(beta, fock_rings):
    k = 20
    z = fock_rings.s[k] * np.exp(0.3j)
    g = K.peak_gaussian(beta, z, 6.0, rings=fock_rings)
    assert g.anchor == k
    assert g.divisor[0] == pytest.approx(fock_rings.s[k], abs=1e-12)
    assert g.mapped_grid()[0] == pytest.approx(z, abs=1e-12)
    assert np.isfinite(g.weighted(z)[0])
    # the divisor cancels the zeros of f there
    assert np.all(np.isfinite(g.log_eval(g.mapped_grid()).real))
    assert g.divisor.size == K.gaussian_integers(36 / (2 * math.pi)).size


def test_gaussian_band_plane(beta, fock_rings):
    rings = A.build_rings(beta, 200.0)
    z = rings.s[40]
    g = K.peak_gaussian(beta, z, 8.0, rings=rings, balance=1)
    rep, w, v = g.band(n=800)
    assert rep.width <= 0.5
    # the plain quotient keeps a term linear in w - z
    plain = K.peak_gaussian(beta, z, 8.0, rings=rings).band(n=800)[0]
    assert plain.width > 10 * rep.width
    m = g.decay_margins(g.outside_samples(n=100), log_c=4.0)
    assert m.min() >= 0


def test_divisor_out_of_range(fock_rings):
    with pytest.raises(K.GridOutOfRange):
        K.divisor_points(fock_rings, 2, 5.0)
    with pytest.raises(K.GridOutOfRange):
        K.divisor_points(fock_rings, len(fock_rings) - 2, 5.0)


def test_taylor_constant():
    t = K.taylor_truncate([1.0], 10)
    z = np.array([0.1, 2.0 + 1j, 50j])
    np.testing.assert_allclose(t(z), 1.0)
    assert t.R == pytest.approx(math.sqrt(20 / 0.8))


def test_taylor_exp_square():
    N = 60
    t = K.taylor_truncate(K.exp_square_coeffs(200), N)
    assert t.inner_bound == pytest.approx(2.0 ** -28.5)
    r = t.inner_radius
    err = K.exp_square_tail(r, N)
    assert err <= t.inner_bound
    mpmath.mp.dps = 50
    ref = mpmath.exp(mpmath.mpf(1.5) ** 2) - mpmath.fsum(mpmath.mpf(1.5) ** (2 * m) / mpmath.factorial(m) for m in range(31))
    assert K.exp_square_tail(1.5, N) == pytest.approx(float(ref), rel=1e-10)
    radii = np.linspace(t.inner_radius, 3 * t.R, 100)
    assert t.section_margins(radii).min() >= 0


def test_growth_failure():
    c = np.zeros(30)
    c[0] = 1.0
    c[4] = 1.0
    c[20] = 1.0
    with pytest.raises(K.GrowthHypothesisFailed) as err:
        K.taylor_truncate(c, 24)
    assert err.value.index == 20
    K.check_growth(K.exp_square_coeffs(50))


def test_poly_from_roots():
    c = K.poly_from_roots([2.0, -1j])
    z = np.array([0.3, 5 + 2j])
    np.testing.assert_allclose(np.polyval(c[::-1], z), (1 - z / 2) * (1 + z / 1j))


def test_interp_atom(beta, fock_rings):
    z = fock_rings.s[30] * np.exp(0.2j)
    lat = G.Lattice(fock_rings)
    rz = beta.rho(abs(z))
    nodes = lat.points_in_disc(z, 3 * rz)
    nodes = nodes[np.abs(nodes - z) > 1e-9]
    a = 0.7 - 0.2j
    atom = K.interp_atom(beta, z, 10.0, a, nodes=nodes, rings=fock_rings)
    assert atom.exact_section and not atom.fallback
    assert atom(np.array([z]))[0] == pytest.approx(a, abs=1e-10)
    # weighted values at the other nodes vanish
    rel = atom.log_V(nodes).real - beta.h_at(nodes) + beta.h_at(np.array([z]))
    assert rel.max() < math.log(1e-8)
    zero = K.interp_atom(beta, z, 10.0, 0.0, rings=fock_rings)
    assert np.all(zero(nodes[:5]) == 0)


def test_tail_sum(beta, fock_rings):
    z = fock_rings.s[30]
    assert K.tail_sum_AR(beta, np.zeros(0, dtype=complex), z, 10.0) == 0.0
    far = np.array([z + 1000.0])
    assert K.tail_sum_AR(beta, far, z, 10.0) < 1e-15
    with pytest.raises(K.SeparationRequired):
        K.tail_sum_AR(beta, np.array([z + 5.0, z + 5.0 + 1e-6]), z, 10.0)
    lat = G.Lattice(fock_rings)
    a10 = K.tail_sum_AR(beta, lat, z, 10.0)
    a14 = K.tail_sum_AR(beta, lat, z, 14.0)
    assert 0 < a14 <= a10


def test_cubic_bounded_at_anchor(pow_inv, disc_rings):
    z = 0.5 * (disc_rings.s[30] + disc_rings.s[31]) * np.exp(0.4j)
    g = K.peak_cubic(pow_inv, disc_rings, z)
    band = g.flat_band(400)
    assert band.min <= g.weighted(z)[0] <= band.max


@pytest.mark.parametrize("which", ["disc", "plane"])
def test_cubic_decay_rate(which, pow_inv, disc_rings, beta, plane_rings):
    if which == "disc":
        w, rings, k, dists = pow_inv, disc_rings, 30, (2.0, 5.0, 10.0, 20.0)
    else:
        w, rings, k, dists = beta, plane_rings, 30, (5.0, 20.0, 60.0)
    z = 0.5 * (rings.s[k] + rings.s[k + 1]) * np.exp(0.3j)
    g = K.peak_cubic(w, rings, z)
    log_c = g.flat_band(400).max + 4.0
    th = np.linspace(0, 2 * math.pi, 256, endpoint=False)
    mins = [g.decay_margins(z + D * g.rho_z * np.exp(1j * th), log_c).min() for D in dists]
    assert min(mins) >= 0
    # the cubic rate holds out to the farthest circle
    assert mins[-1] >= mins[1] - 0.5


def test_gaussian_bounded_at_anchor(beta):
    rings = A.build_rings(beta, 200.0)
    g = K.peak_gaussian(beta, rings.s[40], 8.0, rings=rings, balance=1)
    rep = g.band(n=800)[0]
    assert rep.min <= g.weighted(rings.s[40])[0] <= rep.max


def test_interp_atom_gaussian_decay(beta, fock_rings):
    from radweight.weierstrass import sunflower

    z = fock_rings.s[30] * np.exp(0.2j)
    nodes = G.Lattice(fock_rings).points_in_disc(z, 3.0)
    nodes = nodes[np.abs(nodes - z) > 1e-9]
    atom = K.interp_atom(beta, z, 10.0, 1.0, nodes=nodes, rings=fock_rings)

    def excess(pts):
        rel = atom.log_V(pts).real - beta.h_at(pts) + beta.h_at(np.array([z]))
        return rel + np.abs(pts - z) ** 2 / 8

    # c fitted on one grid must cover an independent finer one
    fit = excess(z + sunflower(2000, 25.0)).max()
    check = excess(z + sunflower(5000, 25.0, offset=0.25)).max()
    assert np.isfinite(fit) and check <= fit + 0.5
