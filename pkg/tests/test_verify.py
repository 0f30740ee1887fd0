import math

import numpy as np
import pytest

from radweight import atomize as A
from radweight import geometry as G
from radweight import products as P
from radweight import verify as V
from radweight import weight as W
from radweight.peaks import GridOutOfRange, peak_gaussian


def test_test_function_algebra():
    f = V.polynomial([1.0, 2.0])
    g = V.constant(3.0)
    w = np.array([0.5, -1.0, 2j])
    np.testing.assert_allclose((f + g)(w), 1 + 2 * w + 3)
    np.testing.assert_allclose(f.scaled(-2.0)(w), -2 * (1 + 2 * w))
    np.testing.assert_allclose(f.times(f)(w), (1 + 2 * w) ** 2)
    assert np.all(V.constant(0)(w) == 0)
    assert np.all(f(np.array([-0.5])) == 0)
    # large terms do not overflow
    big = V.from_log(lambda z: np.full(z.shape, 800.0 + 0j))
    lv = (big + big).log_eval(w)
    np.testing.assert_allclose(lv.real, 800 + math.log(2))


def test_l2_norm_oracles(beta):
    # h = |z|^2 / 4 so |f|^2 e^{-2h} integrates in closed form
    spec = V.NormSpec.lp(2, 0j, 5.0)
    assert V.norm(beta, V.constant(1), spec) == pytest.approx(math.sqrt(2 * math.pi * (1 - math.exp(-12.5))), rel=1e-10)
    z2 = 4 * math.pi * (1 - 13.5 * math.exp(-12.5))
    assert V.norm(beta, V.polynomial([0, 1]), spec) == pytest.approx(math.sqrt(z2), rel=1e-10)
    l1 = V.NormSpec.lp(1, 0j, 5.0)
    assert V.norm(beta, V.constant(1), l1) == pytest.approx(4 * math.pi * (1 - math.exp(-6.25)), rel=1e-10)


def test_sup_norm_oracle(beta, pow_inv):
    # max of r e^{-r^2/4} is sqrt(2) e^{-1/2}
    spec = V.NormSpec.sup(0j, 5.0, step=0.02)
    got = V.norm(beta, V.polynomial([0, 1]), spec)
    assert got == pytest.approx(math.sqrt(2) * math.exp(-0.5), rel=1e-3)
    assert got <= math.sqrt(2) * math.exp(-0.5) * (1 + 1e-12)
    assert V.norm(pow_inv, V.constant(1), V.NormSpec.sup(0j, 0.5)) == pytest.approx(1.0)
    with pytest.raises(GridOutOfRange):
        V.norm(pow_inv, V.constant(1), V.NormSpec.sup(0.5, 0.6))
    with pytest.raises(ValueError):
        V.NormSpec.lp(0.5)


def test_discrete_norm_single_point(pow_inv):
    z = np.array([0.6 + 0.1j])
    f = V.polynomial([1.0, 1.0])
    expect = abs(1 + z[0]) * math.exp(-pow_inv.h(abs(z[0])))
    assert V.discrete_norm(pow_inv, f, z) == pytest.approx(expect)
    assert V.discrete_norm(pow_inv, f, z, p=2) == pytest.approx(expect * pow_inv.rho(abs(z[0])))
    assert V.discrete_norm(pow_inv, f, np.zeros(0, dtype=complex)) == 0.0


def test_fine_grid_discrete_norm(beta):
    # rho = 1, so a unit square grid is a Riemann sum for the L^2 norm
    i = np.arange(-12, 13)
    X, Y = np.meshgrid(i, i)
    grid = (X + 1j * Y).ravel()
    grid = grid[np.abs(grid) <= 10]
    f = V.polynomial([1.0, 0.3])
    spec = V.NormSpec.lp(2, 0j, 10.0)
    assert V.discrete_norm(beta, f, grid, 2) == pytest.approx(V.norm(beta, f, spec), rel=0.01)


def test_lipschitz_and_mean_value(beta):
    f = V.constant(1)
    rep = V.lipschitz_check(beta, f, 0j, 2.0, pairs=500, grid=1000)
    assert rep.stable and 0 < rep.constant <= rep.constant_doubled < 1
    mv = V.mean_value_check(beta, f, 0j, 1.0)
    # int over the unit disc of e^{-r^2/4} is 4 pi (1 - e^{-1/4})
    assert mv["right"] == pytest.approx(1.2 * 4 * math.pi * (1 - math.exp(-0.25)), rel=1e-8)
    assert mv["margin"] > 0
    zero = V.mean_value_check(beta, V.constant(0), 1.0, 1.0)
    assert zero["margin"] == 0.0


def test_duplication_scales_norm(beta, plane_rings):
    lat = G.Lattice(plane_rings)
    z = complex(plane_rings.s[20])
    spec = V.NormSpec.lp(2, z, 6.0, radial=24, angular=64)
    gamma = lat.points_in_disc(z, 6.0)
    ens = [V.from_peak(peak_gaussian(beta, z, 6.0, rings=plane_rings))]
    one = V.discrete_norm_bound(beta, gamma, ens, 2, spec)
    dup = V.discrete_norm_bound(beta, V.duplicated(gamma, 8), ens, 2, spec)
    assert dup["max_ratio"] == pytest.approx(math.sqrt(8) * one["max_ratio"], rel=1e-12)
    assert V.discrete_norm_bound(beta, np.zeros(0, dtype=complex), ens, 2, spec)["max_ratio"] == 0.0
    with pytest.raises(ValueError):
        V.discrete_norm_bound(beta, gamma, ens)


def test_single_node_interp(beta, plane_rings):
    z = np.array([complex(plane_rings.s[20])])
    prob = V.InterpProblem.from_values(beta, z, [2.0 - 1j], rings=plane_rings)
    res = V.interp_solve(prob)
    assert res.status == "converged" and res.iterations == 1
    val = res.solution(z)[0]
    assert val == pytest.approx(2.0 - 1j, rel=1e-10)
    assert res.trace_csv().splitlines()[0] == "iteration,residual,factor"
    far = np.array([complex(plane_rings.s[60])])
    with pytest.raises(ValueError, match="underflows"):
        V.InterpProblem.from_values(beta, far, [1.0], rings=plane_rings)


def test_interp_bad_data(beta):
    with pytest.raises(ValueError):
        V.InterpProblem(beta, np.array([1.0 + 0j]), np.array([np.inf + 0j]))
    with pytest.raises(ValueError):
        V.InterpProblem(beta, np.array([1.0 + 0j, 2.0]), np.array([1.0 + 0j]))


@pytest.fixture(scope="module")
def beta_window(beta, plane_rings):
    lat = G.Lattice(plane_rings)
    return lat, plane_rings


def test_interp_contracts_on_lambda1(beta, beta_window):
    lat, rings = beta_window
    nodes = V.window_nodes(G.thin_lambda_d(lat, 1), 100, 106, 8.0, R=10.0)
    assert nodes.size > 20
    prob = V.InterpProblem(beta, nodes, V.bounded_data(beta, nodes, seed=1), rings=rings)
    res = V.interp_solve(prob)
    assert res.status == "converged"
    assert res.contraction <= 0.8
    assert res.node_error <= 1e-10
    assert res.info["fallbacks"] == 0


def test_interp_midpoints_no_contraction(beta, beta_window):
    lat, rings = beta_window
    nodes = V.window_nodes(lat.with_midpoints(), 100, 106, 6.0, R=10.0)
    prob = V.InterpProblem(beta, nodes, V.bounded_data(beta, nodes, seed=1), rings=rings)
    with pytest.raises(V.NoContraction) as err:
        V.interp_solve(prob)
    assert len(err.value.trace) >= 2


def test_sampling_monotone_under_deletion(beta, plane_rings):
    lat = G.Lattice(plane_rings)
    k = 30
    z = complex(plane_rings.s[k])
    spec = V.NormSpec.sup(z, 12.0, step=0.5)
    ens = V.peak_ensemble(beta, plane_rings, [28, 29, 30, 31, 32], 4, R=8.0, seed=2)
    ens.append(V.hole_witness(beta, plane_rings, k, R=8.0))
    prev = V.sampling_ratio(beta, lat.points_in_disc(z, 12.0), ens, spec)
    for cut in ([30], [29, 30, 31], [28, 29, 30, 31, 32]):
        holed = lat.without_rings(cut).points_in_disc(z, 12.0)
        cur = V.sampling_ratio(beta, holed, ens, spec)
        assert all(b <= a for a, b in zip(prev.ratios, cur.ratios))
        prev = cur
    assert prev.ratios[-1] < 1e-3


def test_jensen(disc_rings):
    rs = disc_rings
    f = V.from_product(P.RingProduct(rs))
    s10 = float(rs.s[10])
    for r, mc in ((0.5, 1021), (0.8, 1021), (s10 * (1 + 1e-5), 1021), (s10 * (1 + 1e-7), 65521)):
        M = V.jensen_count(rs.N[rs.s < r], mc)
        rep = V.jensen_diagnostic(f, r, zero_term=V.ring_zero_term(rs, r), M=M)
        assert abs(rep.residual) <= 1e-10
    # just above a ring a coarse circle grid aliases the nearby zeros
    coarse = V.jensen_diagnostic(f, s10 * (1 + 1e-7), zero_term=V.ring_zero_term(rs, s10 * (1 + 1e-7)),
                                 M=V.jensen_count(rs.N[rs.s < s10 * 1.1]))
    assert abs(coarse.residual) > 1e-6
    c = V.jensen_diagnostic(V.constant(2.5), 3.0)
    assert abs(c.residual) < 1e-13
    p = V.jensen_diagnostic(V.polynomial([1.0, -2.0]), 1.0, zeros=[0.5])
    assert abs(p.residual) < 1e-10
    with pytest.raises(ValueError):
        V.jensen_diagnostic(V.polynomial([0, 1]), 1.0)


def test_jensen_count():
    m = V.jensen_count([1021 * 3, 1031])
    assert m == 1033
    assert V._is_prime(m)


def test_lattice_norm_poly(beta, plane_rings):
    c = np.array([1.0, 0.5j, 0.1])
    # p = 2 closed form versus explicit sum over ring points
    direct = 0.0
    for k in range(len(plane_rings)):
        s, n = plane_rings.s[k], int(plane_rings.N[k])
        pts = s * np.exp(2j * math.pi * np.arange(n) / n)
        direct += np.sum(np.abs(np.polyval(c[::-1], pts)) ** 2) * math.exp(-2 * beta.h(s))
        if s > 40:
            break
    assert V.lattice_norm_poly(beta, plane_rings, c) == pytest.approx(math.sqrt(direct), rel=1e-10)
    v3 = V.lattice_norm_poly(beta, plane_rings, c, p=3)
    assert np.isfinite(v3) and v3 > 0


def test_tilde_weight(pow_inv):
    wt = V.tilde_weight(pow_inv)
    chk = V.tilde_checks(pow_inv, wt, 1 - np.logspace(-1, -4, 5))
    assert chk["above"]
    assert abs(chk["h_ratio"][-1]) < abs(chk["h_ratio"][0])
    assert abs(chk["log_rho_over_gap"][-1]) < abs(chk["log_rho_over_gap"][0])


def test_index_demo_small(pow_inv):
    rep = V.index_demo(pow_inv, R=10.0, k_lo=20, k_hi=25, n_ensemble=10, per_ring=4)
    assert rep.disjoint
    assert rep.validation_ok
    assert set(rep.densities) == {"lambda", "d0", "d1", "d2"}
    assert rep.expected["d1"] == 0.375
    assert rep.g0_ratio_max > 0


def test_lipschitz_stable_across_anchors(beta, plane_rings):
    consts = []
    for k in (30, 31, 32):
        z = complex(plane_rings.s[k]) * np.exp(0.3j)
        f = V.from_peak(peak_gaussian(beta, z, 8.0, rings=plane_rings, balance=1))
        rep = V.lipschitz_check(beta, f, z, 8.0, pairs=500, grid=1500)
        assert rep.stable
        consts.append(rep.constant_doubled)
    assert max(consts) <= 1.25 * min(consts)


def test_mean_value_for_peak(beta, plane_rings):
    z = complex(plane_rings.s[30])
    f = V.from_peak(peak_gaussian(beta, z, 8.0, rings=plane_rings, balance=1))
    assert V.mean_value_check(beta, f, z, 4.0)["margin"] > 0


def test_norm_bound_stable_under_ensemble_doubling(beta, plane_rings):
    lat = G.Lattice(plane_rings)
    z = complex(plane_rings.s[30])
    spec = V.NormSpec.lp(2, z, 10.0, radial=24, angular=64)
    gamma = lat.points_in_disc(z, 10.0)
    ens = V.peak_ensemble(beta, plane_rings, range(28, 33), 16, R=8.0, seed=5)
    half = V.discrete_norm_bound(beta, gamma, ens[:8], 2, spec)["max_ratio"]
    full = V.discrete_norm_bound(beta, gamma, ens, 2, spec)["max_ratio"]
    assert half <= full <= 1.25 * half


def test_sampling_union_with_rotation(beta, plane_rings):
    lat = G.Lattice(plane_rings)
    z = complex(plane_rings.s[30])
    spec = V.NormSpec.sup(z, 12.0, step=0.5)
    base = lat.points_in_disc(z, 12.0)
    union = np.concatenate([base, base * np.exp(0.01j)])
    ens = V.peak_ensemble(beta, plane_rings, range(28, 33), 8, R=8.0, seed=7)
    a = V.sampling_ratio(beta, base, ens, spec)
    b = V.sampling_ratio(beta, union, ens, spec)
    b2 = V.sampling_ratio(beta, union, ens[:4], spec)
    assert b.min_ratio >= a.min_ratio > 0.1
    assert b2.min_ratio >= b.min_ratio and b2.min_ratio <= 1.25 * b.min_ratio


def test_index_demo_ratio_stable(pow_inv):
    rep = V.index_demo(pow_inv, R=10.0, k_lo=20, k_hi=25, n_ensemble=10, per_ring=4)
    assert rep.g0_ratio_stable
    assert rep.g0_ratio_max <= rep.g0_ratio_max_doubled
