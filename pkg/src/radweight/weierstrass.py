"""Partial products of the Weierstrass sigma function on the Gaussian integers.

``P_R(z) = z * prod (1 - z/lam)`` over ``lam`` in ``Z + iZ`` with
``0 < |lam| <= R^2``.  Values are kept as ``log|P|`` and ``arg P``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .products import BandReport, LogComplex, wrap

HALF_PI = 0.5 * math.pi


def neumaier(values):
    """Compensated running sum (Neumaier's variant of Kahan)."""
    s = 0.0
    c = 0.0
    for x in values:
        t = s + x
        if abs(s) >= abs(x):
            c += (s - t) + x
        else:
            c += (x - t) + s
        s = t
    return s + c


def gaussian_integers(radius):
    """All ``a + ib`` with ``a^2 + b^2 <= radius^2``, sorted by modulus."""
    m = int(math.floor(radius))
    a = np.arange(-m, m + 1)
    A, B = np.meshgrid(a, a, indexing="ij")
    keep = A * A + B * B <= radius * radius + 1e-9
    pts = (A[keep] + 1j * B[keep]).astype(complex)
    order = np.lexsort((np.angle(pts), np.abs(pts)))
    return pts[order]


class SigmaLattice:
    """The point set ``Sigma_R`` and its partial product ``P_R``."""

    def __init__(self, R: float, shells: int = 64, min_R: float = 10.0):
        if R < min_R:
            raise ValueError(f"R must be at least {min_R}")
        self.R = float(R)
        self.radius = self.R * self.R
        self.points = gaussian_integers(self.radius)
        self.nonzero = self.points[1:]
        # shell boundaries for the compensated sum
        mod = np.abs(self.nonzero)
        edges = np.linspace(0.0, mod[-1] + 1e-9, shells + 1)
        self._cuts = np.searchsorted(mod, edges[1:-1])
        self._tree = None

    def __len__(self):
        return len(self.points)

    def contains(self, z):
        z = np.asarray(z, dtype=complex)
        re, im = np.round(z.real), np.round(z.imag)
        on = (re == z.real) & (im == z.imag)
        return on & (re * re + im * im <= self.radius * self.radius + 1e-9)

    def dist(self, z):
        """Distance to ``Sigma``; closed form by rounding inside the disc."""
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        near = np.round(z.real) + 1j * np.round(z.imag)
        d = np.abs(z - near)
        outside = np.abs(near) > self.radius
        if np.any(outside):
            if self._tree is None:
                self._tree = cKDTree(np.column_stack([self.points.real, self.points.imag]))
            zz = z[outside]
            d[outside] = self._tree.query(np.column_stack([zz.real, zz.imag]))[0]
        return d

    def log_terms(self, z):
        """``log(1 - z/lam)`` over ``Sigma \\ {0}`` for each ``z``; shape ``(len(z), |Sigma|-1)``."""
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        with np.errstate(divide="ignore"):
            return np.log1p(-z[:, None] / self.nonzero[None, :])

    def log_abs_terms(self, z):
        """``log|1 - z/lam|`` only, in real arithmetic."""
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        q = z[:, None] / self.nonzero[None, :]
        with np.errstate(divide="ignore"):
            return 0.5 * np.log1p(q.real * (q.real - 2.0) + q.imag * q.imag)

    def eval(self, z, chunk=256, with_arg=True):
        """``log|P_R|`` and ``arg P_R`` with shell-ordered compensated sums.

        ``with_arg=False`` skips the argument (returned as zeros), which
        halves the cost of band sweeps.
        """
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        mag = np.empty(z.shape)
        arg = np.zeros(z.shape)
        on = self.contains(z)
        with np.errstate(divide="ignore", invalid="ignore"):
            for i in range(0, z.size, chunk):
                zz = z[i:i + chunk]
                lead = np.log(np.abs(zz))
                if with_arg:
                    t = self.log_terms(zz)
                    re = t.real
                    im_parts = [p.sum(axis=1) for p in np.split(t.imag, self._cuts, axis=1)]
                    lead_arg = np.angle(zz)
                    for j in range(zz.size):
                        arg[i + j] = neumaier([lead_arg[j]] + [p[j] for p in im_parts])
                else:
                    re = self.log_abs_terms(zz)
                re_parts = [p.sum(axis=1) for p in np.split(re, self._cuts, axis=1)]
                for j in range(zz.size):
                    mag[i + j] = neumaier([lead[j]] + [p[j] for p in re_parts])
        # a vanishing factor turns the compensated sum into nan
        mag = np.where(on | np.isnan(mag), -np.inf, mag)
        arg = np.where(np.isfinite(mag), wrap(arg), 0.0)
        return mag, arg

    def eval_one(self, z) -> LogComplex:
        m, a = self.eval(np.array([complex(z)]))
        return LogComplex(float(m[0]), float(a[0]))


def eval_P(s: SigmaLattice, z):
    if np.ndim(z) == 0:
        return s.eval_one(z)
    return s.eval(z)


def sunflower(n, radius, offset=0.5):
    """Deterministic quasi-uniform disc grid (Vogel spiral)."""
    k = np.arange(n) + offset
    r = radius * np.sqrt(k / n)
    theta = k * math.pi * (3.0 - math.sqrt(5.0))
    return r * np.exp(1j * theta)


def band_values(s: SigmaLattice, z):
    m, _ = s.eval(z, with_arg=False)
    return m - HALF_PI * np.abs(z) ** 2 - np.log(s.dist(z))


@dataclass
class SigmaBand:
    report: BandReport
    points: np.ndarray
    values: np.ndarray


def sigma_band(s: SigmaLattice, n=4000, radius=None, min_dist=0.1) -> SigmaBand:
    """Band of ``log|P_R| - pi/2 |z|^2 - log dist(z, Sigma)`` over a disc grid.

    ``n`` points are laid out over ``|z| <= R`` (or ``radius``) and points
    closer than ``min_dist`` to ``Sigma`` are dropped.
    """
    radius = s.R if radius is None else float(radius)
    z = sunflower(n, radius)
    z = z[s.dist(z) >= min_dist]
    v = band_values(s, z)
    grid = {"R": s.R, "n": int(n), "radius": radius, "min_dist": min_dist}
    return SigmaBand(BandReport.of(v, grid), z, v)


def outside_samples(R, n=100, seed=0):
    """``n`` points with ``R < |z| <= R^1.5``, uniform in modulus and angle."""
    rng = np.random.default_rng(seed)
    t = rng.uniform(R, R ** 1.5, n)
    t[0] = R + 1.0
    th = rng.uniform(-math.pi, math.pi, n)
    th[0] = 0.0
    return t * np.exp(1j * th)


def lower_margins(s: SigmaLattice, z, min_dist=0.1):
    """Margins ``log|P_R| - log dist - (pi/2) R^2 log(e |z|^2 / R^2)``.

    Points on (or within ``min_dist`` of) ``Sigma`` are filtered out.
    Returns ``(kept points, margins)``.
    """
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    t = np.abs(z)
    if np.any(t > s.R ** 1.5 * (1 + 1e-12)):
        raise ValueError("samples must satisfy |z| <= R^1.5")
    d = s.dist(z)
    keep = d >= min_dist
    z, t, d = z[keep], t[keep], d[keep]
    m, _ = s.eval(z, with_arg=False)
    R2 = s.R * s.R
    margin = m - np.log(d) - HALF_PI * R2 * (1.0 + np.log(t * t / R2))
    return z, margin
