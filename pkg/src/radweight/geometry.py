"""Point sets measured in the local metric ``d_rho``.

``d_rho(z, w) = |z - w| / min(rho(z), rho(w))``.  Two kinds of point sets
share one query interface:

* :class:`Lattice` keeps the ring structure implicitly (``s_k``, ``N_k``) and
  answers disc queries by angular windows, so rings with millions of points
  cost nothing until queried.
* :class:`PointSet` holds explicit points behind a polar grid whose cells
  are a few local scales wide.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .atomize import RingSequence
from .weight import Domain, RadialWeight

TWO_PI = 2.0 * math.pi
GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))


def d_rho(w: RadialWeight, z, v):
    z = np.asarray(z, dtype=complex)
    v = np.asarray(v, dtype=complex)
    scale = np.minimum(w.rho_at(z), w.rho_at(v))
    return np.abs(z - v) / scale


def _wrap(x):
    """Reduce angles to ``(-pi, pi]``."""
    return x - TWO_PI * np.round(x / TWO_PI)


# -- implicit lattice ---------------------------------------------------------


class Lattice:
    """Points ``s_k exp(2 pi i (m + phase_j) / N_k)`` over the active rings.

    Parameters
    ----------
    rings : RingSequence
    active : boolean mask over rings, default all
    phases : angular offsets in units of one point spacing; ``(0, 0.5)``
        adds the midpoints between neighbours on every ring.
    """

    def __init__(self, rings: RingSequence, active=None, phases=(0.0,), label="lattice"):
        self.rings = rings
        self.weight = rings.weight
        self.domain = rings.domain
        n = len(rings)
        self.active = np.ones(n, dtype=bool) if active is None else np.asarray(active, dtype=bool).copy()
        self.phases = tuple(float(p) for p in phases)
        self.label = label
        self._idx = np.nonzero(self.active)[0]
        self._s = rings.s[self._idx]
        self._N = rings.N[self._idx]

    # construction helpers
    def without_rings(self, ks, label=None):
        mask = self.active.copy()
        ks = np.asarray(list(ks), dtype=int)
        ks = ks[(ks >= 0) & (ks < len(mask))]
        mask[ks] = False
        return Lattice(self.rings, mask, self.phases, label or self.label)

    def with_midpoints(self):
        return Lattice(self.rings, self.active, (0.0, 0.5), self.label + "+mid")

    def __len__(self):
        return int(self._N.sum()) * len(self.phases)

    def ring_points(self, k):
        n = int(self.rings.N[k])
        m = np.arange(n)
        pts = [self.rings.s[k] * np.exp(1j * TWO_PI * (m + p) / n) for p in self.phases]
        return np.concatenate(pts)

    def materialize(self, k_lo=0, k_hi=None) -> "PointSet":
        k_hi = len(self.rings) if k_hi is None else k_hi
        ks = [k for k in range(k_lo, k_hi) if self.active[k]]
        pts = np.concatenate([self.ring_points(k) for k in ks]) if ks else np.zeros(0, complex)
        return PointSet(self.weight, pts)

    # queries
    def _disc_hits(self, z, radius):
        """Ring positions, angular indices and phases of points in ``D(z, radius)``."""
        t = abs(z)
        theta = math.atan2(z.imag, z.real)
        lo = np.searchsorted(self._s, t - radius, side="left")
        hi = np.searchsorted(self._s, t + radius, side="right")
        out_k, out_m, out_p = [], [], []
        for j in range(lo, hi):
            s = float(self._s[j])
            n = int(self._N[j])
            num = radius * radius - (t - s) ** 2
            if num < 0:
                continue
            denom = 4.0 * t * s
            if denom == 0.0 or num >= denom:
                cand = np.arange(n)
                full = True
            else:
                full = False
                half = 2.0 * math.asin(math.sqrt(num / denom))
            for ip, p in enumerate(self.phases):
                if not full:
                    a = (theta - half) * n / TWO_PI - p
                    b = (theta + half) * n / TWO_PI - p
                    m0, m1 = math.floor(a) - 1, math.ceil(b) + 1
                    if m1 - m0 + 1 >= n:
                        cand = np.arange(n)
                    else:
                        cand = np.arange(m0, m1 + 1) % n
                ang = TWO_PI * (cand + p) / n
                d2 = (t - s) ** 2 + 4.0 * t * s * np.sin(0.5 * (theta - ang)) ** 2
                keep = d2 < radius * radius
                if np.any(keep):
                    mk = np.unique(cand[keep])
                    out_k.append(np.full(mk.size, self._idx[j]))
                    out_m.append(mk)
                    out_p.append(np.full(mk.size, ip))
        if not out_k:
            e = np.zeros(0, dtype=np.int64)
            return e, e, e
        return np.concatenate(out_k), np.concatenate(out_m), np.concatenate(out_p)

    def points_in_disc(self, z, radius):
        k, m, p = self._disc_hits(complex(z), float(radius))
        if k.size == 0:
            return np.zeros(0, dtype=complex)
        ph = np.asarray(self.phases)[p]
        n = self.rings.N[k]
        return self.rings.s[k] * np.exp(1j * TWO_PI * (m + ph) / n)

    def count_in_disc(self, z, radius) -> int:
        return int(self._disc_hits(complex(z), float(radius))[0].size)

    def index_in_disc(self, z, radius):
        """``(ring, m, phase index)`` triples of the points in the disc."""
        return self._disc_hits(complex(z), float(radius))

    def nearest_distance(self, z):
        """Distance from each ``z`` to the nearest lattice point."""
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        t = np.abs(z)
        theta = np.angle(z)
        ns = len(self._s)
        j0 = np.clip(np.searchsorted(self._s, t), 0, ns - 1)
        best = np.full(t.shape, np.inf)

        def ring_dist(j):
            s = self._s[j]
            n = self._N[j].astype(float)
            d = np.full(t.shape, np.inf)
            for p in self.phases:
                m = np.round(theta * n / TWO_PI - p)
                ang = TWO_PI * (m + p) / n
                d2 = (t - s) ** 2 + 4.0 * t * s * np.sin(0.5 * (theta - ang)) ** 2
                d = np.minimum(d, np.sqrt(d2))
            return d

        for inward in (True, False):
            off = 0
            while True:
                j = j0 - 1 - off if inward else j0 + off
                valid = (j >= 0) & (j < ns)
                if not np.any(valid):
                    break
                jj = np.clip(j, 0, ns - 1)
                todo = valid & (np.abs(self._s[jj] - t) < best)
                if not np.any(todo):
                    break
                best = np.where(todo, np.minimum(best, ring_dist(jj)), best)
                off += 1
        return best


# -- explicit point sets ------------------------------------------------------


class PointSet:
    """Explicit points with a polar grid index.

    Radial bands are about ``cell`` local scales thick; each band is cut into
    angular cells of comparable arc length.  A disc query visits only the
    cells that can meet the disc and then filters exactly.
    """

    def __init__(self, weight: RadialWeight, points, cell=4.0):
        self.weight = weight
        self.domain = weight.domain
        self.points = np.asarray(points, dtype=complex).ravel()
        if self.domain is Domain.DISC and np.any(np.abs(self.points) >= 1):
            raise ValueError("points must lie inside the unit disc")
        self.cell = float(cell)
        self._build()

    def __len__(self):
        return self.points.size

    def _band_edges(self, t_max):
        edges = [0.0]
        w = self.weight
        while edges[-1] <= t_max:
            e = edges[-1]
            try:
                step = self.cell * float(w.rho(max(e, 1e-9)))
            except Exception:
                step = self.cell
            if self.domain is Domain.DISC:
                step = min(step, 0.5 * (1.0 - e))
            step = max(step, 1e-15)
            edges.append(e + step)
            if len(edges) > 2_000_000:
                raise RuntimeError("index would need too many bands")
        return np.asarray(edges)

    def _build(self):
        t = np.abs(self.points)
        t_max = float(t.max()) if t.size else 0.0
        self._edges = self._band_edges(t_max)
        band = np.searchsorted(self._edges, t, side="right") - 1
        inner = self._edges[:-1]
        widths = np.diff(self._edges)
        self._ncell = np.maximum(1, np.minimum(np.floor(TWO_PI * inner / widths), 1 << 22)).astype(np.int64)
        theta = np.mod(np.angle(self.points), TWO_PI)
        cell = np.minimum((theta / TWO_PI * self._ncell[band]).astype(np.int64), self._ncell[band] - 1)
        key = band.astype(np.int64) * (1 << 23) + cell
        order = np.argsort(key, kind="stable")
        self._order = order
        skey = key[order]
        uniq, start, counts = np.unique(skey, return_index=True, return_counts=True)
        self._cells = {int(u): (int(a), int(a + c)) for u, a, c in zip(uniq, start, counts)}

    def _candidates(self, z, radius):
        t = abs(z)
        theta = math.atan2(z.imag, z.real) % TWO_PI
        b0 = max(0, int(np.searchsorted(self._edges, t - radius, side="right")) - 1)
        b1 = min(len(self._edges) - 2, int(np.searchsorted(self._edges, t + radius, side="right")) - 1)
        picks = []
        for b in range(b0, b1 + 1):
            n = int(self._ncell[b])
            r_in = float(self._edges[b])
            if r_in <= radius or n == 1:
                cells = range(n)
            else:
                half = math.asin(min(1.0, radius / r_in))
                c0 = math.floor((theta - half) / TWO_PI * n) - 1
                c1 = math.floor((theta + half) / TWO_PI * n) + 1
                cells = range(n) if c1 - c0 + 1 >= n else [c % n for c in range(c0, c1 + 1)]
            base = b * (1 << 23)
            for c in cells:
                span = self._cells.get(base + c)
                if span is not None:
                    picks.append(self._order[span[0]:span[1]])
        if not picks:
            return np.zeros(0, dtype=np.int64)
        return np.unique(np.concatenate(picks))

    def indices_in_disc(self, z, radius):
        z = complex(z)
        idx = self._candidates(z, float(radius))
        if idx.size == 0:
            return idx
        keep = np.abs(self.points[idx] - z) < radius
        return idx[keep]

    def points_in_disc(self, z, radius):
        return self.points[self.indices_in_disc(z, radius)]

    def count_in_disc(self, z, radius) -> int:
        return int(self.indices_in_disc(z, radius).size)

    def nearest_distance(self, z):
        from scipy.spatial import cKDTree

        z = np.atleast_1d(np.asarray(z, dtype=complex))
        if self.points.size == 0:
            return np.full(z.shape, np.inf)
        tree = getattr(self, "_tree", None)
        if tree is None:
            tree = self._tree = cKDTree(np.column_stack([self.points.real, self.points.imag]))
        d, _ = tree.query(np.column_stack([z.real, z.imag]))
        return d

    def without(self, mask_remove):
        return PointSet(self.weight, self.points[~np.asarray(mask_remove, dtype=bool)], self.cell)

    def to_csv(self) -> str:
        buf = io.StringIO()
        out = csv.writer(buf, lineterminator="\n")
        out.writerow(["re", "im"])
        for p in self.points:
            out.writerow(["%.17g" % p.real, "%.17g" % p.imag])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, weight, text: str) -> "PointSet":
        rows = list(csv.DictReader(io.StringIO(text)))
        if rows and set(rows[0].keys()) != {"re", "im"}:
            raise ValueError("point CSV needs header re,im")
        pts = np.array([complex(float(r["re"]), float(r["im"])) for r in rows], dtype=complex)
        return cls(weight, pts)


def brute_count(points, z, radius) -> int:
    return int(np.count_nonzero(np.abs(np.asarray(points) - z) < radius))


# -- local statistics ---------------------------------------------------------


def local_count(gamma, z, R):
    """``card(Gamma ∩ D(z, R rho(z)))`` and the rescaled configuration ``(gamma - z)/rho(z)``."""
    rz = float(gamma.weight.rho_at(z))
    pts = gamma.points_in_disc(z, R * rz)
    return int(pts.size), (pts - z) / rz


def separation(gamma, k_lo=None, k_hi=None) -> float:
    """Exact ``inf d_rho(gamma, gamma')`` over distinct points.

    A :class:`Lattice` is materialized on rings ``k_lo..k_hi`` first.  A
    first pass over Euclidean neighbours gives an upper bound ``delta``; any
    pair beating it lies within ``delta * rho(z)`` of ``z``, so a second
    pass over those balls makes the infimum exact.
    """
    if isinstance(gamma, Lattice):
        gamma = gamma.materialize(k_lo or 0, k_hi)
    pts = gamma.points
    if pts.size < 2:
        raise ValueError("undefined separation: fewer than two points")
    from scipy.spatial import cKDTree

    w = gamma.weight
    xy = np.column_stack([pts.real, pts.imag])
    tree = cKDTree(xy)
    d, j = tree.query(xy, k=2)
    rho = w.rho_at(pts)
    if np.any(d[:, 1] == 0):
        return 0.0
    best = float(np.min(d[:, 1] / np.minimum(rho, rho[j[:, 1]])))
    balls = tree.query_ball_point(xy, best * rho)
    for a, nb in enumerate(balls):
        for b in nb:
            if b != a:
                best = min(best, abs(pts[a] - pts[b]) / min(rho[a], rho[b]))
    return float(best)


@dataclass
class DensityReport:
    """Finite-scale density profile: ``q_-(R)`` and ``q_+(R)`` over a grid of ``R``."""

    R_grid: list
    q_minus: list
    q_plus: list
    rings: list
    annulus: list
    centers: int
    seed: int
    label: str = ""
    separation: float | None = None

    def at(self, R):
        i = self.R_grid.index(R)
        return self.q_minus[i], self.q_plus[i]

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def density_centers(lat: Lattice, k_lo, k_hi, per_ring=64, seed=0):
    """Centres spread over rings ``k_lo..k_hi``: golden-angle steps, random radial jitter."""
    rng = np.random.default_rng(seed)
    out = []
    for k in range(k_lo, k_hi + 1):
        base = rng.uniform(0, TWO_PI)
        ang = base + np.arange(per_ring) * GOLDEN_ANGLE
        rad = rng.uniform(lat.rings.r[k], lat.rings.r[k + 1], per_ring)
        out.append(rad * np.exp(1j * ang))
    return np.concatenate(out)


def density_profile(gamma, R_grid, k_lo, k_hi, per_ring=64, seed=0, label="",
                    rings=None, with_separation=False) -> DensityReport:
    """Min and max of ``card Gamma(z, R) / R^2`` over centres on rings ``k_lo..k_hi``.

    ``rings`` supplies the ring geometry for centre placement when ``gamma``
    is an explicit point set.
    """
    R_grid = [float(R) for R in np.atleast_1d(R_grid)]
    if rings is None:
        rings = gamma.rings
    holder = Lattice(rings)
    cz = density_centers(holder, k_lo, k_hi, per_ring, seed)
    qm, qp = [], []
    for R in R_grid:
        q = np.array([local_count(gamma, z, R)[0] for z in cz], dtype=float) / (R * R)
        qm.append(float(q.min()))
        qp.append(float(q.max()))
    sep = None
    if with_separation:
        sep = separation(gamma, max(0, k_lo - 1), k_hi + 2) if isinstance(gamma, Lattice) else separation(gamma)
    return DensityReport(R_grid, qm, qp, [int(k_lo), int(k_hi)],
                         [float(rings.r[k_lo]), float(rings.r[k_hi + 1])],
                         int(cz.size), int(seed), label, sep)


def thinning_rings(n_rings, d, literal=False):
    """Ring indices removed to form ``Lambda_d``.

    By default the rings whose index has 2-adic valuation exactly ``d`` are
    removed, a ``2^-(d+1)`` share of all rings.  ``literal=True`` removes the
    valuation ``d + 1`` rings instead, a ``2^-(d+2)`` share.
    """
    if d < 0:
        raise ValueError("d must be non-negative")
    v = d + 1 if literal else d
    k = np.arange(1, n_rings)
    val = np.zeros_like(k)
    x = k.copy()
    while True:
        even = (x % 2 == 0) & (x > 0)
        if not np.any(even):
            break
        val = val + even
        x = np.where(even, x // 2, x)
    return k[val == v]


def thin_lambda_d(lat: Lattice, d: int, literal=False) -> Lattice:
    return lat.without_rings(thinning_rings(len(lat.rings), d, literal), label="lambda_%d" % d)


def q_monotone_check(rep: DensityReport, tol=0.05) -> dict:
    """``q_-(R) <= max_{R' > R} q_-(R') + tol`` along the grid."""
    if len(rep.R_grid) < 3:
        raise ValueError("need at least three R values")
    order = np.argsort(rep.R_grid)
    qm = np.asarray(rep.q_minus)[order]
    worst = -math.inf
    for i in range(len(qm) - 1):
        worst = max(worst, float(qm[i] - qm[i + 1:].max()))
    return {"ok": bool(worst <= tol), "worst_excess": worst, "tol": tol}
