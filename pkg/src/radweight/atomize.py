"""Atomization of the Laplacian measure ``Δh dm/2π`` into rings of integer mass.

Rings ``[r_k, r_{k+1})`` are built from the origin outward.  Each ring is
about one local scale ``rho`` wide and holds an integer amount ``N_k`` of
mass; ``s_k`` is its logarithmic centroid.  Placing ``N_k`` equally spaced
points on the circle of radius ``s_k`` gives the lattice used everywhere else.

In the plane the ring circumference grows with the radius, so the width
equation carries a factor ``r_k`` (``r*`` for the first ring).  Passing
``scaled=False`` restores the unit-circumference form on either domain.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .weight import Domain, RadialWeight

TWO_PI = 2.0 * math.pi


class AtomizeError(RuntimeError):
    pass


class RingOverflow(AtomizeError):
    """The domain boundary came before the ring reached integer mass."""

    def __init__(self, msg, partial_mass=float("nan")):
        super().__init__(msg)
        self.partial_mass = partial_mass


class AnchorInfeasible(AtomizeError):
    pass


@dataclass(frozen=True)
class Ring:
    k: int
    r_lo: float
    r_hi: float
    s: float
    N: int
    core: bool = False


class _Flux:
    """Fast scalar access to ``r h'(r)`` and its derivative ``r Δh(r)``."""

    def __init__(self, w: RadialWeight):
        self.w = w
        self.disc = w.domain is Domain.DISC
        self._dh = w._dh
        self._d2h = w._d2h

    def F(self, r):
        return r * float(self._dh(r)) if r > 0 else 0.0

    def dF(self, r):
        return float(self._d2h(r)) * r + float(self._dh(r))

    def upper(self):
        return 1.0 if self.disc else math.inf

    def centroid(self, a, b, n):
        lm = self.w.log_moment(a, b)
        return math.exp(lm / n)


def _expand(fun, lo, step, top):
    """Find ``hi > lo`` with ``fun(hi) > 0``; ``fun(lo) <= 0`` is assumed."""
    hi = lo + step
    for _ in range(200):
        if hi >= top:
            hi = lo + 0.5 * (top - lo)
        try:
            val = fun(hi)
        except (ValueError, FloatingPointError, OverflowError):
            val = math.inf
        if val > 0:
            return hi
        lo_new = hi
        if top < math.inf and top - hi < 1e-15:
            break
        step *= 2.0
        hi = lo_new + step
        lo = lo_new
    raise RingOverflow("no bracket below the domain boundary")


def _solve(fun, lo, hi, scale):
    x = brentq(fun, lo, hi, xtol=1e-15 * max(scale, 1e-300), rtol=1e-15, maxiter=300)
    return x


def _mass_radius(fx: _Flux, base_F, target, start):
    """Smallest ``r >= start`` with ``F(r) - base_F = target`` (Newton-polished)."""
    g = lambda r: fx.F(r) - base_F - target
    if g(start) >= 0:
        return start
    d = fx.dF(start)
    step = max((target - (fx.F(start) - base_F)) / d, 1e-300) if d > 0 else 1e-3
    hi = _expand(g, start, 1.5 * step, fx.upper())
    r = _solve(g, start, hi, hi - start)
    for _ in range(3):
        d = fx.dF(r)
        if d <= 0:
            break
        r_new = r - g(r) / d
        if not (start <= r_new <= hi):
            break
        if abs(g(r_new)) >= abs(g(r)):
            break
        r = r_new
    return r


def next_ring(w: RadialWeight, r_k: float, k: int = 0, scaled: bool | None = None) -> tuple[Ring, float]:
    """Ring starting at ``r_k``; returns the ring and its provisional radius ``r*``."""
    fx = _Flux(w)
    plane = w.domain is Domain.PLANE
    if scaled is None:
        scaled = plane
    top = fx.upper()
    if r_k < 0 or r_k >= top:
        raise RingOverflow("ring start outside the domain")
    Fk = fx.F(r_k)
    if scaled and r_k == 0.0:
        # first plane ring: (r* - 0) M(0, r*) = 2 pi r*
        phi = lambda r: fx.F(r) - Fk - TWO_PI
    else:
        ell = r_k if scaled else 1.0
        phi = lambda r: (r - r_k) * (fx.F(r) - Fk) - TWO_PI * ell
    try:
        lap = float(w.laplacian(r_k)) if r_k > 0 else 1.0
    except Exception:
        lap = 1.0
    guess = math.sqrt(TWO_PI) * lap**-0.5
    if top < math.inf:
        guess = min(guess, 0.5 * (top - r_k))
    hi = _expand(phi, r_k, guess, top)
    r_star = _solve(phi, r_k, hi, hi - r_k)
    m_star = fx.F(r_star) - Fk
    n = int(math.ceil(m_star - 1e-9 * max(1.0, m_star)))
    n = max(n, 1)
    try:
        r_next = _mass_radius(fx, Fk, float(n), r_star)
    except RingOverflow as exc:
        raise RingOverflow("ring overflow after r* = %.17g" % r_star, m_star) from exc
    s = fx.centroid(r_k, r_next, n)
    return Ring(k, float(r_k), float(r_next), float(s), n), float(r_star)


class RingSequence:
    """Contiguous rings ``[r_k, r_{k+1})`` with centroids ``s_k`` and counts ``N_k``.

    Stored as arrays: ``r`` has one more entry than ``s`` and ``N``.
    """

    def __init__(self, weight, r, s, N, anchored_at=None, anchor_index=None,
                 core=False, dropped=None, scaled=None):
        self.weight = weight
        self.r = np.asarray(r, dtype=float)
        self.s = np.asarray(s, dtype=float)
        self.N = np.asarray(N, dtype=np.int64)
        self.anchored_at = anchored_at
        self.anchor_index = anchor_index
        self.core = bool(core)
        self.dropped = dropped
        self.scaled = scaled
        if len(self.r) != len(self.s) + 1 or len(self.s) != len(self.N):
            raise ValueError("inconsistent ring arrays")
        self.log_s = np.log(self.s)

    @property
    def domain(self):
        return self.weight.domain

    def __len__(self):
        return len(self.s)

    def __getitem__(self, k) -> Ring:
        if k < 0:
            k += len(self)
        return Ring(k, float(self.r[k]), float(self.r[k + 1]), float(self.s[k]), int(self.N[k]),
                    core=self.core and k == 0)

    def __iter__(self):
        for k in range(len(self)):
            yield self[k]

    @property
    def total_points(self) -> int:
        return int(self.N.sum())

    def ring_of_radius(self, t):
        """Index ``k`` with ``r_k <= t < r_{k+1}`` (clipped to the stored range)."""
        k = np.searchsorted(self.r, t, side="right") - 1
        return np.clip(k, 0, len(self) - 1)

    def nearest_s(self, t):
        k = np.searchsorted(self.s, t)
        k = np.clip(k, 1, len(self) - 1)
        left = np.abs(t - self.s[k - 1]) <= np.abs(self.s[k] - t)
        return np.where(left, k - 1, k)

    def ratios(self) -> dict:
        """The four per-ring ratios whose limits describe the atomization."""
        r, s, N = self.r, self.s, self.N.astype(float)
        dr = np.diff(r)
        rho = self.weight.rho(np.maximum(r[:-1], 1e-12))
        width = dr / rho
        if self.domain is Domain.DISC:
            count = N * dr
        else:
            with np.errstate(divide="ignore", invalid="ignore"):
                count = N * dr / r[:-1]
        step = np.full_like(dr, np.nan)
        step[1:] = dr[1:] / dr[:-1]
        centroid = (r[1:] - s) / dr
        return {"width": width, "count": count, "step": step, "centroid": centroid}

    def limit_report(self, frac=0.25, tol=0.02) -> dict:
        """Deviation of the four ratios from their limits over the last ``frac`` of rings."""
        q = self.ratios()
        n = len(self)
        lo = max(1, int(math.floor(n * (1.0 - frac))))
        if self.core:
            lo = max(lo, 2)
        targets = {"width": math.sqrt(TWO_PI), "count": TWO_PI, "step": 1.0, "centroid": 0.5}
        out = {"rings": [lo, n - 1], "tolerance": tol}
        for key, target in targets.items():
            vals = q[key][lo:]
            if key == "centroid":
                dev = np.abs(vals - target)
            else:
                dev = np.abs(vals / target - 1.0)
            out[key] = {"target": target, "max_dev": float(np.max(dev)), "ok": bool(np.max(dev) <= tol)}
        out["ok"] = all(out[k]["ok"] for k in targets)
        return out

    def mass_residuals(self, quadrature=False) -> np.ndarray:
        """``|M(r_k, r_{k+1}) - N_k| / N_k`` per ring."""
        w = self.weight
        m = np.empty(len(self))
        for k in range(len(self)):
            a, b = float(self.r[k]), float(self.r[k + 1])
            m[k] = w.mass_quad(a, b) if quadrature else w.mass(a, b)
        return np.abs(m - self.N) / self.N

    def to_csv(self) -> str:
        buf = io.StringIO()
        out = csv.writer(buf, lineterminator="\n")
        out.writerow(["k", "r_lo", "r_hi", "s", "N"])
        for k in range(len(self)):
            out.writerow([k, "%.17g" % self.r[k], "%.17g" % self.r[k + 1], "%.17g" % self.s[k], int(self.N[k])])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, weight, text: str) -> "RingSequence":
        rows = list(csv.DictReader(io.StringIO(text)))
        if not rows:
            raise ValueError("empty ring table")
        r = [float(rows[0]["r_lo"])] + [float(x["r_hi"]) for x in rows]
        for a, b in zip(rows[:-1], rows[1:]):
            if float(a["r_hi"]) != float(b["r_lo"]):
                raise ValueError("rings are not contiguous")
        return cls(weight, r, [float(x["s"]) for x in rows], [int(x["N"]) for x in rows])

    def extended(self, r_max, max_points=None) -> "RingSequence":
        """Append rings beyond the current outer radius."""
        r, s, N = list(self.r), list(self.s), list(self.N)
        dropped = _grow(self.weight, r, s, N, r_max, max_points, self.scaled)
        return RingSequence(self.weight, r, s, N, self.anchored_at, self.anchor_index,
                            self.core, dropped, self.scaled)


def _grow(w, r, s, N, r_max, max_points, scaled):
    while True:
        try:
            ring, _ = next_ring(w, r[-1], len(s), scaled)
        except RingOverflow as exc:
            return {"reason": "overflow", "partial_mass": exc.partial_mass}
        if ring.r_hi > r_max:
            return {"reason": "r_max", "r_hi": ring.r_hi}
        if max_points is not None and ring.N > max_points:
            return {"reason": "max_points", "N": ring.N}
        r.append(ring.r_hi)
        s.append(ring.s)
        N.append(ring.N)


def build_rings(w: RadialWeight, r_max: float, max_points: int | None = None,
                scaled: bool | None = None) -> RingSequence:
    """Rings from the origin until the next one would pass ``r_max`` or exceed ``max_points``."""
    if w.domain is Domain.DISC and not 0 < r_max < 1:
        raise AtomizeError("r_max must lie in (0, 1)")
    if r_max <= 0:
        raise AtomizeError("r_max must be positive")
    r, s, N = [0.0], [], []
    dropped = _grow(w, r, s, N, r_max, max_points, scaled)
    if not s:
        raise AtomizeError("no complete ring below r_max")
    return RingSequence(w, r, s, N, dropped=dropped, scaled=scaled)


def _anchor_ring(w, fx, s, n):
    """Inner radius ``a`` and outer ``b`` with mass ``n`` and log-centroid ``s``."""

    def outer(a):
        return _mass_radius(fx, fx.F(a), float(n), a)

    def gap(a):
        b = outer(a)
        return math.log(fx.centroid(a, b, n)) - math.log(s)

    lo = 0.0
    # the centroid sits inside the ring, so a < s; the ring must reach past s
    hi = s
    if gap(lo) > 0:
        raise AnchorInfeasible("anchor %.6g too close to the origin for %d points" % (s, n))
    while True:
        try:
            g_hi = gap(hi)
            break
        except RingOverflow:
            hi = 0.5 * (lo + hi)
    if g_hi < 0:
        raise AnchorInfeasible("no ring with centroid %.6g" % s)
    a = brentq(gap, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=400)
    return a, outer(a)


def _backward_ring(w, fx, b, scaled):
    """Inner neighbour of a ring starting at ``b``; ``None`` when the core is reached."""
    Fb = fx.F(b)
    if scaled:
        phi = lambda x: (b - x) * (Fb - fx.F(x)) - TWO_PI * x
    else:
        phi = lambda x: (b - x) * (Fb - fx.F(x)) - TWO_PI
    if phi(0.0) < 0:
        return None
    x_star = brentq(phi, 0.0, b, xtol=1e-15 * b, rtol=1e-15, maxiter=400)
    m_star = Fb - fx.F(x_star)
    n = int(math.ceil(m_star - 1e-9 * max(1.0, m_star)))
    if Fb - fx.F(0.0) < n:
        return None
    g = lambda x: Fb - fx.F(x) - n
    a = brentq(g, 0.0, x_star, xtol=1e-15 * b, rtol=1e-15, maxiter=400)
    for _ in range(3):
        d = fx.dF(a)
        if d <= 0:
            break
        a_new = a + g(a) / d
        if not (0.0 <= a_new <= x_star) or abs(g(a_new)) >= abs(g(a)):
            break
        a = a_new
    return a, n


def anchored_rings(w: RadialWeight, s: float, r_max: float, max_points: int | None = None,
                   scaled: bool | None = None, base: RingSequence | None = None) -> RingSequence:
    """Rings in which ``s`` is one of the centroids.

    The anchor ring keeps the point count of the ordinary ring containing
    ``s``; rings outside it follow the forward recursion and rings inside it
    a mirrored backward recursion.  Whatever mass is left near the origin is
    gathered into one core ring whose count is rounded to an integer.
    """
    plane = w.domain is Domain.PLANE
    if scaled is None:
        scaled = plane
    if not s < r_max:
        raise AtomizeError("need s < r_max")
    if base is None:
        base = build_rings(w, min(r_max, _outer_cap(w, s)), scaled=scaled)
    if s < base.s[0]:
        raise AnchorInfeasible("anchor lies inside the first ring centroid")
    k = int(np.searchsorted(base.s, s, side="right") - 1)
    if k + 1 < len(base) and base.s[k + 1] == s:
        k += 1
    if base.s[k] == s:
        inner = base.r[: k + 1].tolist()
        N_in = base.N[:k].tolist()
        s_in = base.s[:k].tolist()
        r = inner + [float(base.r[k + 1])]
        svals = s_in + [float(s)]
        N = N_in + [int(base.N[k])]
        seq_r, seq_s, seq_N = r, svals, N
        dropped = _grow(w, seq_r, seq_s, seq_N, r_max, max_points, scaled)
        return RingSequence(w, seq_r, seq_s, seq_N, anchored_at=float(s), anchor_index=k,
                            dropped=dropped, scaled=scaled)

    fx = _Flux(w)
    n = int(base.N[k])
    a, b = _anchor_ring(w, fx, s, n)
    radii_in, counts_in = [a], []
    while True:
        step = _backward_ring(w, fx, radii_in[-1], scaled)
        if step is None:
            break
        a_prev, n_prev = step
        radii_in.append(a_prev)
        counts_in.append(n_prev)
    radii_in.reverse()
    counts_in.reverse()
    core_r = radii_in[0]
    core = core_r > 0
    r = ([0.0] if core else []) + radii_in
    N = []
    if core:
        m_core = fx.F(core_r) - fx.F(0.0)
        N.append(max(1, int(round(m_core))))
    N += counts_in
    svals = []
    for j in range(len(r) - 1):
        if core and j == 0:
            svals.append(fx.centroid(0.0, core_r, fx.F(core_r) - fx.F(0.0)))
        else:
            svals.append(fx.centroid(r[j], r[j + 1], N[j]))
    anchor_index = len(svals)
    r.append(b)
    svals.append(float(s))
    N.append(n)
    dropped = _grow(w, r, svals, N, r_max, max_points, scaled)
    return RingSequence(w, r, svals, N, anchored_at=float(s), anchor_index=anchor_index,
                        core=core, dropped=dropped, scaled=scaled)


def _outer_cap(w, s):
    if w.domain is Domain.DISC:
        return 1.0 - 0.5 * (1.0 - s) * 0.5
    return s * 1.5 + 10.0
