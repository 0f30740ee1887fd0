"""Radial subharmonic weights on the unit disc or the plane.

A weight is a radial function ``h(z) = h(|z|)`` with ``Δh >= 1``.  Its local
length scale is ``rho = (Δh)^(-1/2)`` (up to a bounded factor) and all
geometry in this package is measured in units of ``rho``.

Every weight is normalized so that ``h(0) = 0``.  Built-in families carry
closed-form first and second derivatives; user weights given only as a
function or a table fall back to central finite differences whose step is
tied to the local scale.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.interpolate import PchipInterpolator


class Domain(str, enum.Enum):
    DISC = "disc"
    PLANE = "plane"


class WeightError(ValueError):
    """Raised when a weight cannot be evaluated where it was asked to."""


class OriginSingularity(WeightError):
    pass


class DomainError(WeightError):
    pass


KINDS = ("pow_inv", "exp_inv", "pow", "exp", "log_log", "custom")

# exponents tried when testing the power-type growth condition on rho
CLASS_SWEEP = tuple(range(1, 17))

QUAD_RTOL = 1e-10


@dataclass
class ValidationReport:
    domain: str
    r_lo: float
    r_hi: float
    laplacian_ok: bool
    rho_decreasing: bool
    rho_slope_decreasing: bool
    weight_class: str | None
    exponent: int | None
    violations: list[dict] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations and self.weight_class is not None

    def to_dict(self) -> dict:
        return {
            "domain": self.domain,
            "r_lo": self.r_lo,
            "r_hi": self.r_hi,
            "laplacian_ok": self.laplacian_ok,
            "rho_decreasing": self.rho_decreasing,
            "rho_slope_decreasing": self.rho_slope_decreasing,
            "weight_class": self.weight_class,
            "exponent": self.exponent,
            "violations": self.violations,
        }


def _as_array(r):
    return np.asarray(r, dtype=float)


class RadialWeight:
    """A radial weight ``h`` with first and second radial derivatives.

    Parameters
    ----------
    domain : Domain
    h, dh, d2h : callables
        Vectorized functions of the radius.  ``h`` need not vanish at the
        origin; the offset is removed here.
    name : str
        Short label used in reports.
    config : dict
        Serializable description (see :func:`from_config`).
    """

    def __init__(self, domain, h, dh, d2h, name="weight", config=None):
        self.domain = Domain(domain)
        self._h_raw = h
        self._dh = dh
        self._d2h = d2h
        self.name = name
        self.config = config or {"domain": self.domain.value, "kind": "custom"}
        self._h0 = float(h(np.array(0.0)))

    # -- pointwise quantities -------------------------------------------------

    def _check_domain(self, r):
        r = _as_array(r)
        if np.any(r < 0):
            raise DomainError("radius must be non-negative")
        if self.domain is Domain.DISC and np.any(r >= 1.0):
            raise DomainError("radius outside the unit disc")
        return r

    def h(self, r):
        r = self._check_domain(r)
        return self._h_raw(r) - self._h0

    def dh(self, r):
        return self._dh(self._check_domain(r))

    def d2h(self, r):
        return self._d2h(self._check_domain(r))

    def flux(self, r):
        """``r h'(r)``: the mass of ``Δh dm/2π`` inside ``D(0, r)``."""
        r = self._check_domain(r)
        return r * self._dh(r)

    def laplacian(self, r):
        """``h'' + h'/r`` at radius ``r``; the origin uses the limit ``2h''(0)``."""
        r = self._check_domain(r)
        scalar = r.ndim == 0
        r = np.atleast_1d(r)
        out = np.empty_like(r)
        pos = r > 0
        if np.any(pos):
            rp = r[pos]
            out[pos] = self._d2h(rp) + self._dh(rp) / rp
        if np.any(~pos):
            slope = float(self._dh(np.array(0.0)))
            if abs(slope) > 1e-12:
                raise OriginSingularity(
                    "h'(0) = %.3g is non-zero, Laplacian is singular at the origin" % slope
                )
            out[~pos] = 2.0 * float(self._d2h(np.array(0.0)))
        return out[0] if scalar else out

    def rho(self, r):
        lap = self.laplacian(r)
        if np.any(lap <= 0):
            raise WeightError("Laplacian is not positive")
        return lap ** -0.5

    def rho_at(self, z):
        return self.rho(np.abs(np.asarray(z)))

    def h_at(self, z):
        return self.h(np.abs(np.asarray(z)))

    # -- radial integrals -----------------------------------------------------

    def mass(self, a, b):
        """``∫_a^b Δh(t) t dt``, the normalized Laplacian mass of an annulus."""
        return float(self.flux(b) - self.flux(a))

    def log_moment(self, a, b):
        """``∫_a^b Δh(t) t log t dt`` via integration by parts."""

        def prim(t):
            if t == 0.0:
                return -float(self.h(0.0))
            return float(self.flux(t) * math.log(t) - self.h(t))

        return prim(b) - prim(a)

    def mass_quad(self, a, b):
        """Same as :meth:`mass` but by adaptive quadrature of ``Δh t``."""
        f = lambda t: float(self._lap_dt(t))
        return _quad(f, a, b, self.domain)

    def _lap_dt(self, t):
        t = np.asarray(t, dtype=float)
        if t == 0.0:
            return 0.0
        return (self.d2h(t) + self.dh(t) / t) * t

    def core_mass(self, r):
        return self.mass_quad(0.0, r)

    # -- derived objects ------------------------------------------------------

    def truncated(self, r):
        return TruncatedWeight(self, r)

    def green_check(self, r) -> float:
        """Residual of ``h(r) = ∫_0^r Δh(s) s log(r/s) ds``."""
        f = lambda s: 0.0 if s == 0.0 else float(self._lap_dt(s)) * math.log(r / s)
        rhs = _quad(f, 0.0, r, self.domain)
        lhs = float(self.h(r))
        return abs(lhs - rhs) / max(1.0, abs(lhs))

    def validate(self, r_lo, r_hi, n=801) -> ValidationReport:
        return validate(self, r_lo, r_hi, n)

    def __repr__(self):
        return "RadialWeight(%s, %s)" % (self.name, self.domain.value)


class QuadratureError(WeightError):
    pass


def _checked_quad(f, a, b):
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err = integrate.quad(f, a, b, epsabs=0.0, epsrel=QUAD_RTOL, limit=400)
    if not np.isfinite(val) or err > 1e-7 * abs(val) + 1e-13:
        raise QuadratureError("quadrature failure on [%g, %g]: achieved error %.3g" % (a, b, err))
    return val


def _quad(f, a, b, domain):
    """Adaptive Gauss-Kronrod on ``[a, b]``.

    Near the disc boundary the integrand may grow like ``exp(1/(1-t))``; the
    substitution ``t = 1 - e^{-u}`` spreads that growth over a long interval.
    """
    if b <= a:
        return 0.0
    if domain is Domain.DISC and b > 0.5:
        split = max(a, 0.5)
        head = _checked_quad(f, a, split) if split > a else 0.0
        ua, ub = -math.log1p(-split), -math.log1p(-b)
        g = lambda u: f(-math.expm1(-u)) * math.exp(-u)
        return head + _checked_quad(g, ua, ub)
    return _checked_quad(f, a, b)


class TruncatedWeight:
    """``h`` inside ``D(0, r)``, harmonic continuation ``h(r) + M log(|w|/r)`` outside."""

    def __init__(self, weight: RadialWeight, r: float):
        if r <= 0:
            raise WeightError("truncation radius must be positive")
        weight._check_domain(r)
        self.weight = weight
        self.radius = float(r)
        self.core = weight.core_mass(self.radius)
        self.h_r = float(weight.h(self.radius))

    def __call__(self, w):
        s = np.abs(np.asarray(w, dtype=complex))
        inner = s < self.radius
        out = np.empty(s.shape, dtype=float)
        if np.any(inner):
            out[inner] = self.weight.h(s[inner])
        outer = ~inner
        if np.any(outer):
            with np.errstate(divide="ignore"):
                out[outer] = self.h_r + self.core * np.log(s[outer] / self.radius)
        return out if out.ndim else float(out)


# -- built-in families --------------------------------------------------------


def pow_inv(alpha=1.0, scale=1.0):
    """``scale * (1 - r)^-alpha`` on the disc."""
    a, c = float(alpha), float(scale)
    h = lambda r: c * (1.0 - r) ** (-a)
    dh = lambda r: c * a * (1.0 - r) ** (-a - 1.0)
    d2h = lambda r: c * a * (a + 1.0) * (1.0 - r) ** (-a - 2.0)
    cfg = {"domain": "disc", "kind": "pow_inv", "params": {"alpha": a, "scale": c}}
    return RadialWeight(Domain.DISC, h, dh, d2h, "pow_inv", cfg)


def exp_inv(scale=1.0):
    """``exp(scale / (1 - r))`` on the disc."""
    c = float(scale)

    def h(r):
        return np.exp(c / (1.0 - r))

    def dh(r):
        x = 1.0 - r
        return c * np.exp(c / x) / x**2

    def d2h(r):
        x = 1.0 - r
        return np.exp(c / x) * (c * c / x**4 + 2.0 * c / x**3)

    cfg = {"domain": "disc", "kind": "exp_inv", "params": {"scale": c}}
    return RadialWeight(Domain.DISC, h, dh, d2h, "exp_inv", cfg)


def power(p=2.0, scale=0.25):
    """``scale * r^p`` on the plane.  ``power(2, 1/4)`` has ``Δh = 1``."""
    p, c = float(p), float(scale)
    if p < 2:
        raise WeightError("power weights need p >= 2")
    h = lambda r: c * r**p
    dh = lambda r: c * p * r ** (p - 1.0)
    d2h = lambda r: c * p * (p - 1.0) * r ** (p - 2.0)
    cfg = {"domain": "plane", "kind": "pow", "params": {"p": p, "scale": c}}
    return RadialWeight(Domain.PLANE, h, dh, d2h, "pow", cfg)


def fock():
    return power(2.0, 0.25)


def exponential(rate=1.0):
    """``exp(rate * r)`` on the plane."""
    a = float(rate)
    h = lambda r: np.exp(a * r)
    dh = lambda r: a * np.exp(a * r)
    d2h = lambda r: a * a * np.exp(a * r)
    cfg = {"domain": "plane", "kind": "exp", "params": {"rate": a}}
    return RadialWeight(Domain.PLANE, h, dh, d2h, "exp", cfg)


def log_log(domain="disc"):
    """``L log(e + L)`` with ``L = log 1/(1-r)`` (disc) or ``r^2 log(e + log(1+r))`` (plane)."""
    domain = Domain(domain)
    E = math.e
    if domain is Domain.DISC:

        def h(r):
            L = -np.log1p(-r)
            return L * np.log(E + L)

        def dh(r):
            L = -np.log1p(-r)
            return (np.log(E + L) + L / (E + L)) / (1.0 - r)

        def d2h(r):
            L = -np.log1p(-r)
            x = 1.0 - r
            first = np.log(E + L) + L / (E + L)
            second = 1.0 / (E + L) + E / (E + L) ** 2
            return first / x**2 + second / x**2

    else:

        def h(r):
            return r * r * np.log(E + np.log1p(r))

        def dh(r):
            g = np.log1p(r)
            return 2.0 * r * np.log(E + g) + r * r / ((1.0 + r) * (E + g))

        def d2h(r):
            g = np.log1p(r)
            g1 = 1.0 / (1.0 + r)
            l1 = g1 / (E + g)
            l2 = -g1 * g1 / (E + g) - l1 * l1
            return 2.0 * np.log(E + g) + 4.0 * r * l1 + r * r * l2

    cfg = {"domain": domain.value, "kind": "log_log", "params": {}}
    return RadialWeight(domain, h, dh, d2h, "log_log", cfg)


def from_function(h, domain, name="custom", rel_step=0.1, config=None):
    """Weight from ``h`` alone, derivatives by central differences.

    The step is first sized by the distance to the disc boundary (or by the
    radius in the plane), then refined to ``rel_step * rho``; one Richardson
    step combines the stencils at ``step`` and ``step / 2``.
    """
    domain = Domain(domain)

    def coarse(r):
        r = np.asarray(r, dtype=float)
        if domain is Domain.DISC:
            return np.maximum(1e-3 * (1.0 - r), 1e-9)
        return np.maximum(1e-3 * np.maximum(r, 1.0), 1e-9)

    def diffs(r, step):
        r = np.asarray(r, dtype=float)
        lo = np.maximum(r - step, 0.0)
        hi = r + step
        # one-sided near the origin keeps the stencil inside the domain
        fwd = lo == 0.0
        hm, h0, hp = h(lo), h(r), h(hi)
        d1 = np.where(fwd, (hp - h0) / step, (hp - hm) / (2 * step))
        d2 = np.where(fwd, (h(r + 2 * step) - 2 * hp + h0) / step**2, (hp - 2 * h0 + hm) / step**2)
        return d1, d2

    def refined(r):
        r = np.asarray(r, dtype=float)
        s0 = coarse(r)
        d1, d2 = diffs(r, s0)
        rr = np.where(r > 0, r, 1.0)
        lap = np.where(r > 0, d2 + d1 / rr, 2 * d2)
        lap = np.where(lap > 0, lap, 1.0)
        step = np.minimum(np.maximum(rel_step * lap**-0.5, 1e-7 * np.maximum(r, 1e-3)), s0 * 1e3)
        if domain is Domain.DISC:
            step = np.minimum(step, 0.5 * (1.0 - r))
        a1, a2 = diffs(r, step)
        b1, b2 = diffs(r, 0.5 * step)
        # Richardson step; the one-sided stencil at the origin is first order
        fwd = np.maximum(r - step, 0.0) == 0.0
        d1 = np.where(fwd, 2 * b1 - a1, (4 * b1 - a1) / 3)
        d2 = np.where(fwd, 2 * b2 - a2, (4 * b2 - a2) / 3)
        return d1, d2

    dh = lambda r: refined(r)[0]
    d2h = lambda r: refined(r)[1]
    return RadialWeight(domain, h, dh, d2h, name, config)


def from_table(r, hv, domain, rel_step=0.1):
    """Weight from sampled ``(r, h)`` pairs, monotone cubic interpolation."""
    r = np.asarray(r, dtype=float)
    hv = np.asarray(hv, dtype=float)
    if r[0] != 0.0:
        raise WeightError("a weight table must start at r = 0")
    interp = PchipInterpolator(r, hv, extrapolate=False)

    def h(x):
        x = np.asarray(x, dtype=float)
        if np.any(x > r[-1]) or np.any(x < 0):
            raise DomainError("radius outside the tabulated range")
        return interp(x)

    cfg = {"domain": Domain(domain).value, "kind": "custom",
           "params": {"r": r.tolist(), "h": hv.tolist()}}
    return from_function(h, domain, "custom", rel_step, cfg)


def from_config(cfg: dict) -> RadialWeight:
    """Build a weight from ``{"domain", "kind", "params"}``."""
    kind = cfg.get("kind")
    if kind not in KINDS and kind != "fock":
        raise WeightError("unknown weight kind %r" % kind)
    domain = Domain(cfg.get("domain", "disc"))
    params = dict(cfg.get("params") or {})
    if kind == "pow_inv":
        w = pow_inv(**params)
    elif kind == "exp_inv":
        w = exp_inv(**params)
    elif kind == "pow":
        w = power(**params)
    elif kind == "fock":
        w = fock()
    elif kind == "exp":
        w = exponential(**params)
    elif kind == "log_log":
        w = log_log(domain)
    else:
        if "r" not in params or "h" not in params:
            raise WeightError("custom weights need params.r and params.h tables")
        w = from_table(params["r"], params["h"], domain)
    if w.domain is not domain:
        raise WeightError("kind %r lives on the %s, not the %s" % (kind, w.domain.value, domain.value))
    return w


# -- validation ---------------------------------------------------------------


def _needed_exponent(w, r, rho, drho):
    """Largest local exponent needed for ``rho (1-r)^-C`` (disc) or ``rho r^C`` (plane) to increase."""
    if w.domain is Domain.DISC:
        need = -(1.0 - r) * drho / rho
    else:
        need = -r * drho / rho
    return float(np.max(need))


def validate(w: RadialWeight, r_lo: float, r_hi: float, n: int = 801) -> ValidationReport:
    """Check the standing assumptions on ``[r_lo, r_hi]`` and classify the weight.

    Class I holds when some exponent of the sweep makes ``rho (1-r)^-C``
    (disc) or ``rho r^C`` (plane) increasing and the needed exponent does not
    drift upward by more than one between the two halves of the range.
    Class II holds when ``|rho' log(1/rho)|`` decays over the outer range.
    """
    if not r_hi > r_lo >= 0:
        raise WeightError("need 0 <= r_lo < r_hi")
    if n < 8:
        raise WeightError("need at least 8 grid points")
    r = np.linspace(r_lo, r_hi, n)
    if r[0] == 0.0:
        r[0] = min(1e-9, r_hi * 1e-6)
    lap = w.laplacian(r)
    violations = []
    bad = np.nonzero(lap < 1.0 - 1e-12)[0]
    if bad.size:
        violations.append({"check": "laplacian>=1", "r": float(r[bad[0]]), "value": float(lap[bad[0]])})
    lap = np.maximum(lap, 1e-300)
    rho = lap**-0.5
    drho = np.gradient(rho, r)
    tol = 1e-9 * float(np.max(rho)) / (r_hi - r_lo)
    dec = bool(np.all(drho <= tol))
    if not dec:
        i = int(np.argmax(drho > tol))
        violations.append({"check": "rho_decreasing", "r": float(r[i]), "value": float(drho[i])})
    # rho' -> 0: over the outer half of the range |rho'| must not grow
    half = n // 2
    slope = np.abs(drho[half:])
    dslope = np.diff(slope)
    stol = 1e-6 * float(np.max(np.abs(drho))) + tol
    slope_dec = bool(np.all(dslope <= stol))
    if not slope_dec:
        i = int(np.argmax(dslope > stol))
        violations.append({"check": "rho_slope_decreasing", "r": float(r[half + i]), "value": float(dslope[i])})

    need_lo = _needed_exponent(w, r[:half], rho[:half], drho[:half])
    need_hi = _needed_exponent(w, r[half:], rho[half:], drho[half:])
    exponent = next((c for c in CLASS_SWEEP if c >= max(need_lo, need_hi)), None)
    class_i = exponent is not None and need_hi <= need_lo + 1.0
    psi = np.abs(drho * np.log(1.0 / rho))
    q = n // 4
    class_ii = bool(np.all(np.diff(psi[q:]) <= 1e-9 * float(np.max(psi)) + tol)) and psi[-1] <= psi[q]

    wclass = None
    if class_i:
        wclass = "I"
    elif class_ii:
        wclass = "II"
    else:
        violations.append({"check": "class", "r": float(r_hi), "value": float(psi[-1])})
    return ValidationReport(
        domain=w.domain.value,
        r_lo=float(r_lo),
        r_hi=float(r_hi),
        laplacian_ok=not bad.size,
        rho_decreasing=dec,
        rho_slope_decreasing=slope_dec,
        weight_class=wclass,
        exponent=exponent if class_i else None,
        violations=violations,
    )
