"""Log-space evaluation of the canonical ring products.

Disc::

    f(z) = prod_m (1 - z^N s^-N) / (1 - z^N s^N)

Plane::

    f(z) = prod_m (1 - (z/s)^N)

with ``(s, N) = (s_m, N_m)``.  Every factor is a function of the single
complex exponent ``u = N (log z - log s)``, so it is evaluated as
``log(1 - e^u)`` without ever forming the power.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .atomize import RingSequence
from .geometry import Lattice
from .weight import Domain, RadialWeight

TWO_PI = 2.0 * math.pi
TAIL_CUTOFF = math.log(1e-18)
# below this e^a is small enough for the log1p branch
LOG1P_SWITCH = -1e-3


@dataclass(frozen=True)
class LogComplex:
    """``log|w|`` and ``arg w`` of a complex number held in log form."""

    log_mag: float
    arg: float

    def __mul__(self, other):
        return LogComplex(self.log_mag + other.log_mag, _wrap_scalar(self.arg + other.arg))

    def __truediv__(self, other):
        return LogComplex(self.log_mag - other.log_mag, _wrap_scalar(self.arg - other.arg))

    @property
    def is_zero(self):
        return self.log_mag == -math.inf

    def to_complex(self):
        if self.is_zero:
            return 0j
        return complex(math.exp(self.log_mag) * math.cos(self.arg), math.exp(self.log_mag) * math.sin(self.arg))

    @classmethod
    def from_complex(cls, w):
        if w == 0:
            return cls(-math.inf, 0.0)
        return cls(math.log(abs(w)), math.atan2(w.imag, w.real))


def _wrap_scalar(x):
    if -math.pi < x <= math.pi:
        return x
    y = math.remainder(x, TWO_PI)
    return math.pi if y == -math.pi else y


def wrap(x):
    x = np.asarray(x, dtype=float)
    inside = (x > -math.pi) & (x <= math.pi)
    y = np.remainder(x + math.pi, TWO_PI) - math.pi
    y = np.where(y == -math.pi, math.pi, y)
    return np.where(inside, x, y)


def log1m_exp(a, b):
    """``log(1 - e^{a + ib})`` as ``(real, imag)`` arrays.

    Three regimes: ``a`` well below zero uses ``log1p``; ``a`` near zero uses
    ``|1 - e^u|^2 = expm1(a)^2 + 4 e^a sin^2(b/2)``, which has no
    cancellation; ``a > 0`` factors out ``e^u``.
    """
    a = np.asarray(a, dtype=float)
    b = wrap(np.asarray(b, dtype=float))
    pos = a > 0
    A = np.where(pos, -a, a)
    B = np.where(pos, -b, b)
    eA = np.exp(A)
    half = np.sin(0.5 * B)
    em1 = np.expm1(A)
    with np.errstate(divide="ignore", invalid="ignore"):
        far = A < LOG1P_SWITCH
        mag2m1 = eA * eA - 2.0 * eA * np.cos(B)
        re_far = 0.5 * np.log1p(mag2m1)
        re_near = np.log(np.hypot(em1, 2.0 * np.sqrt(eA) * half))
        re = np.where(far, re_far, re_near)
        im = np.arctan2(-eA * np.sin(B), 2.0 * half * half - em1 * np.cos(B))
    re = np.where(pos, re + a, re)
    im = np.where(pos, wrap(im + b + math.pi), im)
    return re, im


class RingProduct:
    """The ring product over a :class:`RingSequence`.

    ``truncation=K`` keeps only rings ``k < K``; ``active`` drops rings.
    """

    def __init__(self, rings: RingSequence, truncation: int | None = None, active=None):
        self.rings = rings
        self.domain = rings.domain
        K = len(rings) if truncation is None else int(truncation)
        if not 0 <= K <= len(rings):
            raise ValueError("truncation index outside the ring range")
        self.truncation = truncation
        mask = np.zeros(len(rings), dtype=bool)
        mask[:K] = True
        if active is not None:
            mask &= np.asarray(active, dtype=bool)
        self.mask = mask
        self.s = rings.s[mask]
        self.log_s = rings.log_s[mask]
        self.N = rings.N[mask].astype(float)
        self.N_int = rings.N[mask]

    def lattice(self) -> Lattice:
        return Lattice(self.rings, self.mask)

    def log_terms(self, z, split=False):
        """Per-point, per-ring complex log factors, shape ``(len(z), rings)``.

        Returns ``(re, im)``; with ``split=True`` the disc numerator and
        denominator come back separately as ``(re, im, den_re, den_im)``.
        """
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        t = np.abs(z)
        theta = np.angle(z)
        with np.errstate(divide="ignore"):
            lt = np.log(t)
        # N arg z reduced per ring; fraction of a turn keeps the phase accurate for large N
        turns = theta / TWO_PI
        phase = TWO_PI * np.remainder(np.outer(turns, self.N), 1.0)
        a = (lt[:, None] - self.log_s[None, :]) * self.N[None, :]
        with np.errstate(invalid="ignore"):
            a = np.where(np.isnan(a), -np.inf, a)
        re, im = log1m_exp(a, phase)
        dre = np.zeros_like(re)
        dim = np.zeros_like(im)
        if self.domain is Domain.DISC:
            d = (lt[:, None] + self.log_s[None, :]) * self.N[None, :]
            d = np.where(np.isnan(d), -np.inf, d)
            dre, dim = log1m_exp(d, phase)
        if split:
            return re, im, dre, dim
        return re - dre, im - dim

    def position(self, k):
        """Column of global ring ``k`` in the per-ring arrays."""
        if not self.mask[k]:
            raise ValueError(f"ring {k} is not part of the product")
        return int(np.count_nonzero(self.mask[:k]))

    def eval(self, z):
        """``log|f|`` and ``arg f`` at each ``z`` (arrays)."""
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        out_re = np.empty(z.shape, dtype=float)
        out_im = np.empty(z.shape, dtype=float)
        chunk = max(1, int(2_000_000 // max(1, len(self.N))))
        for i in range(0, z.size, chunk):
            zz = z[i:i + chunk]
            re, im = self.log_terms(zz)
            live = self._live(zz)
            with np.errstate(invalid="ignore"):
                out_re[i:i + chunk] = np.where(live, re, 0.0).sum(axis=1)
            out_im[i:i + chunk] = wrap(np.where(live, im, 0.0).sum(axis=1))
        out_im = np.where(out_re == -np.inf, 0.0, out_im)
        return out_re, out_im

    def _live(self, z):
        """Mask of ring factors above the tail cutoff."""
        t = np.abs(z)
        with np.errstate(divide="ignore"):
            lt = np.log(t)
        a = (lt[:, None] - self.log_s[None, :]) * self.N[None, :]
        live = ~(a < TAIL_CUTOFF)
        if self.domain is Domain.DISC:
            d = (lt[:, None] + self.log_s[None, :]) * self.N[None, :]
            live = live | ~(d < TAIL_CUTOFF)
        return live

    def eval_one(self, z) -> LogComplex:
        re, im = self.eval(np.array([z]))
        return LogComplex(float(re[0]), float(im[0]))


def _log_expm1_over(u):
    """``log((e^u - 1)/u)`` for complex ``u``, series near 0."""
    u = np.asarray(u, dtype=complex)
    small = np.abs(u) < 1e-3
    ser = np.log(1.0 + u / 2.0 + u * u / 6.0 + u ** 3 / 24.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        re, im = log1m_exp(u.real, u.imag)
        big = re + 1j * (im + math.pi) - np.log(np.where(small, 1.0, u))
    return np.where(small, ser, big)


def _log_log1p_over(d):
    """``log(log(1 + d)/d)`` for complex ``d``, series near 0."""
    d = np.asarray(d, dtype=complex)
    small = np.abs(d) < 1e-4
    ser = np.log(1.0 - d / 2.0 + d * d / 3.0 - d ** 3 / 4.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        safe = np.where(small, 1.0, d)
        big = np.log(np.log(1.0 + safe) / safe)
    return np.where(small, ser, big)


def divided_log(p: RingProduct, w, removed, removed_rings, near=0.5):
    """``log f(w) - sum_j log(w - lam_j)`` with the zeros ``lam_j`` removed.

    ``removed`` are lattice points of ``p`` on the global rings
    ``removed_rings``.  When ``w`` sits within ``near`` of an angular step
    of some ``lam_j``, the ring factor and ``w - lam_j`` are merged through
    ``1 - (w/s)^N = 1 - (1 + d)^N`` with ``d = w/lam - 1``, which is finite
    at ``w = lam``.  Returns complex logs (real = log-modulus).
    """
    w = np.atleast_1d(np.asarray(w, dtype=complex))
    lam = np.atleast_1d(np.asarray(removed, dtype=complex))
    rings = np.atleast_1d(np.asarray(removed_rings, dtype=int))
    cols = np.array([p.position(k) for k in rings], dtype=int)
    out = np.empty(w.shape, dtype=complex)
    chunk = max(1, int(1_000_000 // max(1, len(p.N) + lam.size)))
    for i in range(0, w.size, chunk):
        ww = w[i:i + chunk]
        re, im, dre, dim = p.log_terms(ww, split=True)
        live = p._live(ww)
        diff = ww[:, None] - lam[None, :]
        d = diff / lam[None, :]
        step = TWO_PI / p.N[cols]
        j = np.argmin(np.abs(d), axis=1)
        rows = np.arange(ww.size)
        merge = np.abs(d[rows, j]) < near * step[j]
        with np.errstate(divide="ignore"):
            lin = np.log(diff)
        # merged term: log((1 - (1+d)^N) / (lam d)) = log(-N) + log((e^u-1)/u) + log(log1p(d)/d) - log(lam)
        if np.any(merge):
            mr = rows[merge]
            mj = j[merge]
            dd = d[mr, mj]
            n = p.N[cols[mj]]
            u = n * np.log1p(dd)
            small = np.abs(dd) < 1e-8
            u = np.where(small, n * (dd - dd * dd / 2.0), u)
            merged = np.log(n) + 1j * math.pi + _log_expm1_over(u) + _log_log1p_over(dd) - np.log(lam[mj])
            c = cols[mj]
            re[mr, c] = merged.real
            im[mr, c] = merged.imag
            lin[mr, mj] = 0.0
            live[mr, c] = True
        with np.errstate(invalid="ignore"):
            tot_re = np.where(live, re - dre, 0.0).sum(axis=1) - lin.real.sum(axis=1)
        tot_im = np.where(live, im - dim, 0.0).sum(axis=1) - lin.imag.sum(axis=1)
        out[i:i + chunk] = tot_re + 1j * wrap(tot_im)
    return out


def eval_f(p: RingProduct, z):
    if np.ndim(z) == 0:
        return p.eval_one(complex(z))
    return p.eval(z)


def brute_force_log(rings: RingSequence, z, k_max=None, domain=None):
    """Factor-by-factor ``log|f|`` over materialized points (oracle)."""
    domain = rings.domain if domain is None else domain
    k_max = len(rings) if k_max is None else k_max
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    tot = np.zeros(z.shape)
    comp = np.zeros(z.shape)
    for k in range(k_max):
        n = int(rings.N[k])
        lam = rings.s[k] * np.exp(1j * TWO_PI * np.arange(n) / n)
        for i, zz in enumerate(z):
            v = np.log(np.abs(1.0 - zz / lam))
            if domain is Domain.DISC:
                v = v - np.log(np.abs(1.0 - zz * np.conj(lam)))
            term = math.fsum(v)
            y = term - comp[i]
            tmp = tot[i] + y
            comp[i] = (tmp - tot[i]) - y
            tot[i] = tmp
    return tot


def diag_A(p: RingProduct, w: RadialWeight, z, lattice: Lattice | None = None):
    """``log|f(z)| - h(z) - log(dist(z, Lambda) / rho(z))``."""
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    lat = p.lattice() if lattice is None else lattice
    lf, _ = p.eval(z)
    dist = lat.nearest_distance(z)
    if np.any(dist == 0) or np.any(np.isinf(-lf)):
        raise ValueError("indeterminate at zero: z lies on the lattice")
    return lf - w.h_at(z) - np.log(dist / w.rho_at(z))


def eval_truncated(p: RingProduct, w: RadialWeight, z):
    """Truncated product and ``log|f_K| - h_{r_K} - log min(1, dist/rho)``.

    The diagnostic is ``nan`` at the zeros of ``f_K``.
    """
    if p.truncation is None:
        raise ValueError("product has no truncation index")
    K = p.truncation
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    lf, arg = p.eval(z)
    tw = w.truncated(float(p.rings.r[K]))
    lat = p.lattice()
    dist = lat.nearest_distance(z)
    with np.errstate(divide="ignore", invalid="ignore"):
        diag = lf - tw(z) - np.minimum(0.0, np.log(dist / w.rho_at(z)))
    return lf, arg, diag


@dataclass
class BandReport:
    min: float
    max: float
    mean: float
    width: float
    count: int
    grid: dict

    @classmethod
    def of(cls, values, grid=None):
        v = np.asarray(values, dtype=float)
        v = v[np.isfinite(v)]
        return cls(float(v.min()), float(v.max()), float(v.mean()), float(v.max() - v.min()), int(v.size),
                   grid or {})

    def to_dict(self):
        return {"min": self.min, "max": self.max, "mean": self.mean, "width": self.width,
                "count": self.count, "grid": self.grid}

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def ring_grid(rings: RingSequence, k_lo, k_hi, radial=4, angular=16, seed=0):
    """Sample points over rings ``k_lo..k_hi``: ``radial`` radii per ring, jittered angles."""
    rng = np.random.default_rng(seed)
    pts = []
    for k in range(k_lo, k_hi + 1):
        a, b = rings.r[k], rings.r[k + 1]
        rad = a + (b - a) * (np.arange(radial) + rng.uniform(0, 1, radial)) / radial
        for r in rad:
            ang = rng.uniform(0, TWO_PI) + TWO_PI * np.arange(angular) / angular
            pts.append(r * np.exp(1j * ang))
    return np.concatenate(pts)


def band_A(p: RingProduct, w: RadialWeight, k_lo, k_hi, radial=4, angular=16, seed=0, min_dist=0.1):
    """Band of ``A`` over the ring grid, keeping points at least ``min_dist * rho`` from the lattice."""
    z = ring_grid(p.rings, k_lo, k_hi, radial, angular, seed)
    lat = p.lattice()
    keep = lat.nearest_distance(z) >= min_dist * w.rho_at(z)
    z = z[keep]
    a = diag_A(p, w, z, lat)
    grid = {"rings": [int(k_lo), int(k_hi)], "radial": radial, "angular": angular, "seed": seed,
            "min_dist": min_dist}
    return BandReport.of(a, grid), z, a
