"""Peak functions built from the ring products.

* ``peak_cubic``: truncated product divided by three nearby zeros, flat on
  ``D(z, rho(z))`` with cubic decay outside.
* ``peak_gaussian``: full product divided by a lattice-shaped divisor around
  ``z``; ``|g| e^{-h}`` follows ``exp(-|z-w|^2 / (4 rho(z)^2))``.
* ``taylor_truncate``: degree-``N`` Taylor sections with their certified
  regional bounds.
* ``interp_atom`` / ``tail_sum_AR``: interpolation atoms and the far-field sum
  that controls their interaction.

All values are complex logarithms (real part is ``log|.|``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .atomize import RingSequence, anchored_rings, build_rings
from .geometry import Lattice, PointSet, separation
from .products import BandReport, LogComplex, RingProduct, divided_log, wrap
from .weierstrass import gaussian_integers, sunflower
from .weight import Domain, RadialWeight

TWO_PI = 2.0 * math.pi
TAIL_TERM = 1e-30
EPSILON = 0.2


class PeakError(RuntimeError):
    pass


class AnchorTooCentral(PeakError):
    pass


class GridOutOfRange(PeakError):
    pass


class DegenerateAtom(PeakError):
    pass


class GrowthHypothesisFailed(PeakError):
    def __init__(self, index, msg=None):
        super().__init__(msg or f"growth hypothesis failed at coefficient {index}")
        self.index = index


class SeparationRequired(PeakError):
    pass


def _disc_samples(z, radius, n, offset=0.5):
    return z + sunflower(n, radius, offset)


def _rho(w: RadialWeight, z):
    return float(w.rho(abs(complex(z))))


# -- cubic peak ---------------------------------------------------------------


@dataclass
class PeakCubic:
    weight: RadialWeight
    product: RingProduct
    z: complex
    removed: np.ndarray
    removed_rings: np.ndarray
    rho_z: float

    def log_eval(self, w):
        w = np.atleast_1d(np.asarray(w, dtype=complex))
        return divided_log(self.product, w, self.removed, self.removed_rings) + 3.0 * math.log(self.rho_z)

    def __call__(self, w) -> LogComplex:
        v = self.log_eval(np.array([complex(w)]))[0]
        return LogComplex(float(v.real), float(wrap(v.imag)))

    def weighted(self, w):
        """``log(|g_z(w)| e^{-h(w)})``."""
        w = np.atleast_1d(np.asarray(w, dtype=complex))
        return self.log_eval(w).real - self.weight.h_at(w)

    def flat_band(self, n=400) -> BandReport:
        """Band of ``log|g| - h`` over ``D(z, rho(z))``."""
        pts = _disc_samples(self.z, self.rho_z, n)
        return BandReport.of(self.weighted(pts), {"disc": "rho", "n": n})

    def decay_margins(self, w, log_c):
        """``log c + 3 log min(1, min(rho(z), rho(w)) / |z-w|) - (log|g| - h)``."""
        w = np.atleast_1d(np.asarray(w, dtype=complex))
        m = np.minimum(self.rho_z, self.weight.rho_at(w))
        with np.errstate(divide="ignore"):
            ratio = np.minimum(1.0, m / np.abs(w - self.z))
        return log_c + 3.0 * np.log(ratio) - self.weighted(w)


def peak_cubic(w: RadialWeight, rings: RingSequence, z) -> PeakCubic:
    """Cubic-decay peak at ``z``: rings with ``s <= |z|``, three nearest zeros removed."""
    z = complex(z)
    t = abs(z)
    K = int(np.searchsorted(rings.s, t, side="right"))
    if K == 0:
        raise AnchorTooCentral("no ring inside |z|")
    p = RingProduct(rings, truncation=K)
    rz = _rho(w, z)
    lat = Lattice(rings, p.mask)
    k, m, _ = lat.index_in_disc(z, 5.0 * rz)
    if k.size < 3:
        raise AnchorTooCentral(f"only {k.size} lattice points within 5 rho of z")
    pts = rings.s[k] * np.exp(1j * TWO_PI * m / rings.N[k])
    order = np.argsort(np.abs(pts - z), kind="stable")[:3]
    return PeakCubic(w, p, z, pts[order], k[order], rz)


# -- Gaussian peak ------------------------------------------------------------


@dataclass
class PeakGaussian:
    weight: RadialWeight
    rings: RingSequence
    z: complex
    R: float
    anchor: int
    theta: float
    grid: np.ndarray
    divisor: np.ndarray
    divisor_rings: np.ndarray
    product: RingProduct
    log_const: complex
    rho_z: float
    balance: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=complex))

    @property
    def radius(self):
        return self.R * self.rho_z

    def _frame(self, w):
        return np.atleast_1d(np.asarray(w, dtype=complex)) * np.exp(-1j * self.theta)

    def log_eval(self, w):
        wr = self._frame(w)
        v = divided_log(self.product, wr, self.divisor, self.divisor_rings) + self.log_const
        if self.balance.size:
            d = wr - self.divisor[0]
            v = v + sum(c * d ** (j + 1) for j, c in enumerate(self.balance))
        return v

    def __call__(self, w) -> LogComplex:
        v = self.log_eval(np.array([complex(w)]))[0]
        return LogComplex(float(v.real), float(wrap(v.imag)))

    def mapped_grid(self):
        """Divisor points in the original coordinates."""
        return self.divisor * np.exp(1j * self.theta)

    def zero_distance(self, w):
        """Distance to the zeros of the rotated product (a superset of the divisor)."""
        return Lattice(self.rings, self.product.mask).nearest_distance(self._frame(w))

    def weighted(self, w):
        w = np.atleast_1d(np.asarray(w, dtype=complex))
        return self.log_eval(w).real - self.weight.h_at(w)

    def profile(self, w):
        """``log|g| - h + |z-w|^2 / (4 rho(z)^2)``, flat where the Gaussian law holds."""
        w = np.atleast_1d(np.asarray(w, dtype=complex))
        return self.weighted(w) + np.abs(w - self.z) ** 2 / (4.0 * self.rho_z ** 2)

    def band(self, n=2000, min_dist=0.1):
        """Profile band on ``D(z, R rho(z))`` away from the zeros; returns ``(report, w, values)``."""
        w = _disc_samples(self.z, self.radius, n)
        w = w[self.zero_distance(w) >= min_dist * self.rho_z]
        v = self.profile(w)
        grid = {"R": self.R, "n": n, "min_dist": min_dist, "anchor": int(self.anchor)}
        return BandReport.of(v, grid), w, v

    def outside_samples(self, n=200, spread=20.0, seed=0):
        """Points with ``R rho < |w - z| <= spread R rho``, log-uniform in distance."""
        rng = np.random.default_rng(seed)
        d = self.radius * np.exp(rng.uniform(0.0, math.log(spread), n)) * (1.0 + 1e-9)
        ang = rng.uniform(-math.pi, math.pi, n)
        w = self.z + d * np.exp(1j * ang)
        top = float(self.rings.r[len(self.rings) - 1])
        if self.weight.domain is Domain.DISC:
            top = min(top, 1.0)
        return w[np.abs(w) < top]

    def decay_margins(self, w, log_c):
        """``log c + (R^2/4) log(R^2 min(rho)^2 / (e |z-w|^2)) - (log|g| - h)``."""
        w = np.atleast_1d(np.asarray(w, dtype=complex))
        m = np.minimum(self.rho_z, self.weight.rho_at(w))
        base = np.log(self.R ** 2 * m * m / (math.e * np.abs(w - self.z) ** 2))
        return log_c + 0.25 * self.R ** 2 * base - self.weighted(w)


def _rings_for(w, z, rings, r_max):
    t = abs(complex(z))
    if rings is not None:
        k = int(np.searchsorted(rings.s, t))
        for j in (k - 1, k):
            if 0 <= j < len(rings) and abs(rings.s[j] - t) <= 1e-14 * t:
                return rings, j
    if r_max is None:
        r_max = 1.0 - 1e-3 * (1.0 - t) if w.domain is Domain.DISC else 3.0 * t + 10.0
    seq = anchored_rings(w, t, r_max, base=rings if rings is not None and rings.r[-1] > r_max else None)
    return seq, int(seq.anchor_index)


def divisor_points(rings: RingSequence, k, A):
    """``lambda_{a,b} = s_{k+a} exp(2 pi i b / N_{k+a})`` for ``a + ib`` with ``|a+ib| <= A``."""
    grid = gaussian_integers(A)
    a = grid.real.astype(int)
    b = grid.imag.astype(int)
    ring = k + a
    if ring.min() < 0 or ring.max() >= len(rings) - 1:
        raise GridOutOfRange(f"divisor needs rings {ring.min()}..{ring.max()}, have 0..{len(rings) - 1}")
    if rings.core and ring.min() == 0:
        raise GridOutOfRange("divisor reaches the core ring")
    n = rings.N[ring]
    if np.any(2 * np.abs(b) >= n):
        raise GridOutOfRange("ring too small for the divisor width")
    lam = rings.s[ring] * np.exp(1j * TWO_PI * b / n)
    return grid, lam, ring


def peak_gaussian(w: RadialWeight, z, R: float, rings: RingSequence | None = None,
                  r_max: float | None = None, balance: int = 0) -> PeakGaussian:
    """Gaussian peak ``g = f / Q`` centred at ``z`` with scale ``R``.

    ``rings`` may be any sequence that has ``|z|`` as a centroid; otherwise
    an anchored sequence is built.  The divisor ``Q`` vanishes on the image
    of the Gaussian integers of modulus at most ``R^2 / (2 pi)``.

    ``balance = j > 0`` gives every divisor factor the convergence factor
    ``exp(sum_{i<=j} ((w-z)/(z-lam))^i / i)``.  On a symmetric divisor these
    sums vanish, so the choice only matters where the mapped grid is
    distorted; ``0`` is the plain quotient.
    """
    z = complex(z)
    seq, k = _rings_for(w, z, rings, r_max)
    theta = math.atan2(z.imag, z.real)
    A = R * R / TWO_PI
    grid, lam, lam_rings = divisor_points(seq, k, A)
    p = RingProduct(seq)
    zr = complex(seq.s[k])
    rz = _rho(w, z)
    others = lam[1:]
    log_const = math.log(rz) + np.sum(np.log(zr - others))
    # log of prod exp(sum_i (d/(z-lam))^i / i) is sum_i d^i S_i / i
    bal = np.array([np.sum((zr - others) ** -(i + 1)) / (i + 1) for i in range(int(balance))], dtype=complex)
    return PeakGaussian(w, seq, z, float(R), k, theta, grid, lam, lam_rings, p, complex(log_const), rz, bal)


# -- Taylor sections ----------------------------------------------------------


def coefficient_bound_log(n):
    """``-(n/2) log(n / (2e))``, the Cauchy bound for ``|F| <= exp|z|^2``."""
    n = np.asarray(n, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        v = -0.5 * n * np.log(n / (2.0 * math.e))
    return np.where(n == 0, 0.0, v)


def _poly_log(coeffs, z):
    """``log sum c_n z^n`` without overflow (reversed Horner for ``|z| > 1``)."""
    c = np.asarray(coeffs, dtype=complex)
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    N = c.size - 1
    out = np.empty(z.shape, dtype=complex)
    inner = np.abs(z) <= 1.0
    with np.errstate(divide="ignore"):
        if np.any(inner):
            out[inner] = np.log(np.polyval(c[::-1], z[inner]))
        if np.any(~inner):
            zz = z[~inner]
            out[~inner] = np.log(np.polyval(c, 1.0 / zz)) + N * np.log(zz)
    return out


@dataclass
class TaylorTruncation:
    coeffs: np.ndarray
    N: int
    eps: float = EPSILON

    @property
    def R(self):
        return math.sqrt(2.0 * self.N / (1.0 - self.eps))

    @property
    def inner_radius(self):
        return math.sqrt(self.N / (4.0 * math.e))

    @property
    def middle_radius(self):
        return math.sqrt(self.N / 2.0)

    @property
    def inner_bound(self):
        return 2.0 ** (-(self.N - 3) / 2.0)

    def log_eval(self, z):
        return _poly_log(self.coeffs, z)

    def __call__(self, z):
        return np.exp(self.log_eval(z))

    def log_bound(self, t):
        """Log of the certified bound on ``|T_N F|`` at modulus ``t`` (middle and outer regions)."""
        t = np.asarray(t, dtype=float)
        N = self.N
        mid = math.log(N + 1) + t * t
        with np.errstate(divide="ignore"):
            out = math.log(N + 1) + N * np.log(t) + 0.5 * N * math.log(2.0 * math.e / N)
        return np.where(t <= self.middle_radius, mid, out)

    def bounds(self) -> dict:
        return {
            "N": self.N,
            "eps": self.eps,
            "R": self.R,
            "inner_radius": self.inner_radius,
            "inner_bound": self.inner_bound,
            "middle_radius": self.middle_radius,
        }

    def section_margins(self, radii, angles=64):
        """``log bound - log max_theta |T_N F|`` for radii above the inner region."""
        radii = np.asarray(radii, dtype=float)
        th = TWO_PI * (np.arange(angles) + 0.5) / angles
        z = radii[:, None] * np.exp(1j * th[None, :])
        lv = self.log_eval(z.ravel()).real.reshape(z.shape).max(axis=1)
        return self.log_bound(radii) - lv

    def corollary_outer_margins(self, t):
        """For ``||F||_{(1-eps) beta} <= 1``: log RHS - log LHS of the bound for ``|z| > R``."""
        t = np.asarray(t, dtype=float)
        R2 = self.R ** 2
        base = np.log(math.e * t * t / R2)
        z = t.astype(complex)
        lhs = self.log_eval(z).real - 0.25 * R2 * base
        return -self.eps * R2 / 5.0 * base - lhs


def check_growth(coeffs, tol=1e-12):
    """Raise :class:`GrowthHypothesisFailed` at the first coefficient above the Cauchy bound."""
    c = np.abs(np.asarray(coeffs, dtype=complex))
    n = np.arange(c.size)
    with np.errstate(divide="ignore"):
        lc = np.log(c)
    bad = np.nonzero(lc > coefficient_bound_log(n) + tol)[0]
    if bad.size:
        raise GrowthHypothesisFailed(int(bad[0]))


def taylor_truncate(coeffs, N: int, eps: float = EPSILON, check=True) -> TaylorTruncation:
    """Degree-``N`` section of ``sum c_n z^n``; coefficients past ``N`` are ignored."""
    c = np.zeros(N + 1, dtype=complex)
    src = np.asarray(coeffs, dtype=complex)
    c[: min(N + 1, src.size)] = src[: N + 1]
    if check:
        check_growth(src)
    return TaylorTruncation(c, int(N), float(eps))


def exp_square_coeffs(n_max, a=1.0):
    """Taylor coefficients of ``exp(a z^2)`` up to degree ``n_max``."""
    c = np.zeros(n_max + 1)
    for m in range(n_max // 2 + 1):
        c[2 * m] = math.exp(m * math.log(a) - math.lgamma(m + 1)) if a > 0 else (1.0 if m == 0 else 0.0)
    return c


def exp_square_tail(r, N):
    """``sum_{2m > N} r^{2m} / m!``, the exact section error of ``exp(z^2)`` on the real axis."""
    m0 = N // 2 + 1
    terms = []
    m = m0
    while True:
        term = math.exp(2 * m * math.log(r) - math.lgamma(m + 1)) if r > 0 else 0.0
        terms.append(term)
        if term < 1e-40 * max(terms[0], 1e-300) or m > m0 + 10_000:
            break
        m += 1
    return math.fsum(terms)


def poly_from_roots(roots):
    """Coefficients (ascending) of ``prod (1 - z / gamma)``."""
    c = np.array([1.0 + 0j])
    for g in np.asarray(roots, dtype=complex):
        c = np.concatenate([c, [0.0]]) - np.concatenate([[0.0], c]) / g
    return c


# -- interpolation atoms ------------------------------------------------------


@dataclass
class InterpAtom:
    peak: PeakGaussian
    a: complex
    roots: np.ndarray
    section: TaylorTruncation | None
    exact_section: bool
    fallback: bool
    log_norm: complex = 0j
    info: dict = field(default_factory=dict)

    @property
    def z(self):
        return self.peak.z

    def log_U(self, w):
        w = np.atleast_1d(np.asarray(w, dtype=complex))
        v = self.peak.log_eval(w)
        zeta = (w - self.peak.z) / self.peak.rho_z
        if self.section is not None:
            v = v + self.section.log_eval(zeta)
        elif not self.fallback and self.roots.size:
            with np.errstate(divide="ignore"):
                v = v + np.log1p(-zeta[:, None] / self.roots[None, :]).sum(axis=1)
        return v

    def log_V(self, w):
        """``log V_n(w)``; ``-inf`` everywhere when ``a = 0``."""
        w = np.atleast_1d(np.asarray(w, dtype=complex))
        if self.a == 0:
            return np.full(w.shape, -np.inf + 0j)
        return np.log(self.a) + self.log_U(w) - self.log_norm

    def __call__(self, w):
        w = np.atleast_1d(np.asarray(w, dtype=complex))
        lv = self.log_V(w)
        return np.where(np.isneginf(lv.real), 0j, np.exp(lv))


def interp_atom(w: RadialWeight, z_n, R: float, a_n, nodes=None, eps: float = EPSILON,
                rings: RingSequence | None = None, R_kill: float | None = None,
                balance: int = 0) -> InterpAtom:
    """Atom ``V_n = a_n U / U(z_n)`` with ``U = g_{z,R} * T_N F((w - z)/rho(z))``.

    ``F`` is the finite product over the rescaled ``nodes`` within
    ``R_kill`` (default ``R``) of ``z_n``, normalised to ``F(0) = 1``.  The
    section degree is ``N = floor((1 - eps) R^2 / 2)``.  If the rescaled
    coefficients fail the growth check the atom keeps ``F = 1``.
    """
    peak = peak_gaussian(w, z_n, R, rings=rings, balance=balance)
    rz = peak.rho_z
    N = int(math.floor((1.0 - eps) * R * R / 2.0))
    R_kill = R if R_kill is None else R_kill
    roots = np.zeros(0, dtype=complex)
    if nodes is not None:
        pts = nodes.points if isinstance(nodes, PointSet) else np.asarray(nodes, dtype=complex)
        zeta = (pts - peak.z) / rz
        near = (np.abs(zeta) <= R_kill) & (np.abs(zeta) > 1e-12)
        roots = zeta[near]
    section = None
    exact = roots.size <= N
    fallback = False
    info = {"degree": int(roots.size), "N": N}
    if roots.size and not exact:
        coeffs = poly_from_roots(roots)
        # F in the (1-eps) beta class rescales to the exp|z|^2 class by z -> 2z / sqrt(1-eps)
        sigma = 2.0 / math.sqrt(1.0 - eps)
        scaled = coeffs * sigma ** np.arange(coeffs.size)
        try:
            check_growth(scaled / np.max(np.abs(scaled)))
            section = taylor_truncate(coeffs, N, eps, check=False)
        except GrowthHypothesisFailed as err:
            fallback = True
            info["growth_failed_at"] = err.index
    atom = InterpAtom(peak, complex(a_n), roots, section, exact, fallback, info=info)
    ln = atom.log_U(np.array([peak.z]))[0]
    if not np.isfinite(ln.real):
        raise DegenerateAtom("U vanishes at its own node")
    atom.log_norm = ln
    return atom


# -- tail sums ----------------------------------------------------------------


def _node_points(nodes):
    if isinstance(nodes, PointSet):
        return nodes.points
    return np.asarray(nodes, dtype=complex)


def _lattice_candidates(lat: Lattice, z, R, rz, q):
    """Lattice points whose term can reach ``TAIL_TERM``, ring by ring.

    On ring ``j`` every term is at most ``(R^2 m_j^2 / (e d^2))^q`` with
    ``m_j = min(rho(s_j), rho(z))``, which bounds the distance ``d`` worth
    visiting.
    """
    t = abs(z)
    theta = math.atan2(z.imag, z.real)
    s = lat._s
    m = np.minimum(lat.weight.rho(s), rz)
    cut = R * m / math.sqrt(math.e) * TAIL_TERM ** (-1.0 / (2.0 * q))
    out = []
    for j in np.nonzero(np.abs(s - t) < cut)[0]:
        n = int(lat._N[j])
        num = cut[j] ** 2 - (t - s[j]) ** 2
        den = 4.0 * t * s[j]
        if den == 0.0 or num >= den:
            idx = np.arange(n)
        else:
            half = 2.0 * math.asin(math.sqrt(num / den))
            lo = math.floor((theta - half) * n / TWO_PI) - 1
            hi = math.ceil((theta + half) * n / TWO_PI) + 1
            idx = np.arange(lo, hi + 1) % n if hi - lo + 1 < n else np.arange(n)
        idx = np.unique(idx)
        for p in lat.phases:
            out.append(s[j] * np.exp(1j * TWO_PI * (idx + p) / n))
    return np.concatenate(out) if out else np.zeros(0, dtype=complex)


def tail_sum_AR(w: RadialWeight, nodes, z, R: float, eps: float = EPSILON, min_separation=0.1,
                check=True) -> float:
    """``A_R(z) = sum over |z - z_n| > R rho(z_n) of (R^2 min(rho)^2 / (e |z - z_n|^2))^{eps R^2 / 5}``.

    ``nodes`` may be a :class:`PointSet`, an array, or a :class:`Lattice`
    (summed ring by ring inside the disc beyond which every term is below
    ``1e-30``).
    """
    z = complex(z)
    q = eps * R * R / 5.0
    rz = _rho(w, z)
    # term <= (R^2 rho(z)^2 / (e d^2))^q, so no term above TAIL_TERM lies beyond d_cut
    d_cut = R * rz / math.sqrt(math.e) * TAIL_TERM ** (-1.0 / (2.0 * q))
    if isinstance(nodes, Lattice):
        pts = _lattice_candidates(nodes, z, R, rz, q)
        lat_sep = None
    else:
        pts = _node_points(nodes)
        lat_sep = pts
        pts = pts[np.abs(pts - z) < d_cut]
    if check and lat_sep is not None and lat_sep.size >= 2:
        gamma = nodes if isinstance(nodes, PointSet) else PointSet(w, lat_sep)
        if separation(gamma) < min_separation:
            raise SeparationRequired("nodes are not d_rho-separated")
    if pts.size == 0:
        return 0.0
    rn = w.rho_at(pts)
    d = np.abs(pts - z)
    far = d > R * rn
    if not np.any(far):
        return 0.0
    m = np.minimum(rn[far], rz)
    logt = q * np.log(R * R * m * m / (math.e * d[far] ** 2))
    logt = logt[logt > math.log(TAIL_TERM)]
    return float(math.fsum(np.exp(logt)))
