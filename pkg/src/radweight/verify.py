"""Norms and numerical experiments on top of the products and peaks.

Functions are handled as :class:`TestFunction` objects, sums of log-space
terms evaluated with a max shift so that ``|f| e^{-h}`` never overflows.
The experiments (Lipschitz and mean-value checks, discrete norms, the
interpolation solver, sampling ratios, Jensen's formula, the index demo)
all return plain dataclasses or dicts that serialise to JSON.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from .atomize import RingSequence, build_rings
from .geometry import Lattice, PointSet, density_profile, thin_lambda_d, thinning_rings
from .peaks import EPSILON, GridOutOfRange, InterpAtom, interp_atom, peak_gaussian
from .products import RingProduct
from .weierstrass import sunflower
from .weight import Domain, RadialWeight, from_function, validate

TWO_PI = 2.0 * math.pi


def _map(fn, items, threads=1):
    items = list(items)
    if threads is None or threads <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


# -- test functions -----------------------------------------------------------


LogFn = Callable[[np.ndarray], np.ndarray]


@dataclass
class TestFunction:
    """``f = sum_j exp(c_j) * exp(L_j(w))`` with complex logs ``c_j`` and ``L_j``."""

    __test__ = False  # keep pytest from collecting this class

    terms: list
    label: str = ""

    def log_eval(self, w):
        w = np.atleast_1d(np.asarray(w, dtype=complex))
        if not self.terms:
            return np.full(w.shape, -np.inf + 0j)
        vals = np.array([c + fn(w) for c, fn in self.terms])
        if len(self.terms) == 1:
            return vals[0]
        re = vals.real
        M = np.max(re, axis=0)
        M = np.where(np.isfinite(M), M, 0.0)
        with np.errstate(invalid="ignore", over="ignore"):
            acc = np.where(np.isneginf(re), 0j, np.exp(vals - M)).sum(axis=0)
            out = M + np.log(acc)
        return np.where(acc == 0, -np.inf + 0j, out)

    def log_abs(self, w):
        return self.log_eval(w).real

    def __call__(self, w):
        lv = self.log_eval(w)
        return np.where(np.isneginf(lv.real), 0j, np.exp(lv))

    def __add__(self, other):
        return TestFunction(self.terms + other.terms, f"{self.label}+{other.label}")

    def scaled(self, c):
        lc = complex(np.log(complex(c))) if c != 0 else complex(-np.inf)
        return TestFunction([(t + lc, fn) for t, fn in self.terms], self.label)

    def times(self, other):
        """Product of two functions; both are evaluated once per call."""
        return TestFunction([(0j, lambda w, a=self, b=other: a.log_eval(w) + b.log_eval(w))],
                            f"{self.label}*{other.label}")


def constant(c) -> TestFunction:
    c = complex(c)
    if c == 0:
        return TestFunction([], "zero")
    return TestFunction([(complex(np.log(c)), lambda w: np.zeros(np.shape(w), dtype=complex))], "const")


def polynomial(coeffs) -> TestFunction:
    """Polynomial with ascending coefficients."""
    c = np.asarray(coeffs, dtype=complex)

    def fn(w):
        with np.errstate(divide="ignore"):
            return np.log(np.polyval(c[::-1], w).astype(complex))

    return TestFunction([(0j, fn)], f"poly{c.size - 1}")


def from_product(p: RingProduct) -> TestFunction:
    def fn(w):
        lf, arg = p.eval(np.atleast_1d(w))
        return lf + 1j * np.where(np.isfinite(lf), arg, 0.0)

    return TestFunction([(0j, fn)], "ring_product")


def from_log(fn: LogFn, label="") -> TestFunction:
    return TestFunction([(0j, fn)], label)


def from_peak(peak) -> TestFunction:
    return TestFunction([(0j, peak.log_eval)], "peak")


def from_atom(atom: InterpAtom) -> TestFunction:
    return TestFunction([(0j, atom.log_V)], "atom")


# -- norms --------------------------------------------------------------------


@dataclass(frozen=True)
class NormSpec:
    """A weighted norm restricted to the disc ``D(center, radius)``.

    ``space`` is ``"sup"`` or ``"lp"``.  The sup grid is polar with spacing
    ``step * rho`` (``rho`` at the outer edge of the region); the ``L^p``
    integral uses Gauss-Legendre nodes in the radius and the trapezoid rule
    in the angle.  ``radial`` and ``angular`` override the node counts.
    """

    space: str = "sup"
    p: float = math.inf
    center: complex = 0j
    radius: float = 1.0
    step: float = 0.25
    radial: int | None = None
    angular: int | None = None

    def __post_init__(self):
        if self.space not in ("sup", "lp"):
            raise ValueError("space must be 'sup' or 'lp'")
        if self.space == "lp" and not (1.0 <= self.p < math.inf):
            raise ValueError("p must satisfy 1 <= p < inf")
        if self.radius <= 0:
            raise ValueError("radius must be positive")

    @classmethod
    def sup(cls, center=0j, radius=1.0, **kw):
        return cls("sup", math.inf, complex(center), float(radius), **kw)

    @classmethod
    def lp(cls, p, center=0j, radius=1.0, **kw):
        return cls("lp", float(p), complex(center), float(radius), **kw)

    def _rho_min(self, w: RadialWeight):
        top = abs(self.center) + self.radius
        if w.domain is Domain.DISC and top >= 1.0:
            raise GridOutOfRange(f"region reaches |w| = {top} outside the disc")
        return float(w.rho(top))

    def counts(self, w: RadialWeight):
        h = self.step * self._rho_min(w)
        nr = self.radial or max(32, int(math.ceil(self.radius / h)))
        na = self.angular or max(64, int(math.ceil(TWO_PI * self.radius / h)))
        return nr, na

    def grid(self, w: RadialWeight):
        """Sample points and quadrature weights (area element included)."""
        nr, na = self.counts(w)
        th = TWO_PI * (np.arange(na) + 0.5) / na
        if self.space == "sup":
            t = self.radius * np.arange(nr + 1) / nr
            pts = self.center + (t[:, None] * np.exp(1j * th[None, :])).ravel()
            return pts, None
        x, wx = np.polynomial.legendre.leggauss(nr)
        t = 0.5 * self.radius * (x + 1.0)
        wt = 0.5 * self.radius * wx * t
        pts = self.center + (t[:, None] * np.exp(1j * th[None, :])).ravel()
        wts = np.repeat(wt * (TWO_PI / na), na)
        return pts, wts

    def to_dict(self):
        d = asdict(self)
        d["center"] = [self.center.real, self.center.imag]
        return d


def weighted_log(w: RadialWeight, f: TestFunction, pts):
    """``log(|f| e^{-h})`` at ``pts``."""
    pts = np.atleast_1d(np.asarray(pts, dtype=complex))
    return f.log_abs(pts) - w.h_at(pts)


def log_norm(w: RadialWeight, f: TestFunction, spec: NormSpec) -> float:
    pts, wts = spec.grid(w)
    lv = weighted_log(w, f, pts)
    if spec.space == "sup":
        return float(np.max(lv))
    with np.errstate(divide="ignore"):
        return float(logsumexp(spec.p * lv + np.log(wts)) / spec.p)


def norm(w: RadialWeight, f: TestFunction, spec: NormSpec) -> float:
    """``sup |f| e^{-h}`` or ``(int |f|^p e^{-ph} dm)^{1/p}`` over the region of ``spec``."""
    return float(math.exp(log_norm(w, f, spec)))


def _points(gamma):
    if isinstance(gamma, PointSet):
        return gamma.points
    return np.atleast_1d(np.asarray(gamma, dtype=complex))


def log_discrete_norm(w: RadialWeight, f: TestFunction, gamma, p=math.inf) -> float:
    pts = _points(gamma)
    if pts.size == 0:
        return -math.inf
    lv = weighted_log(w, f, pts)
    if math.isinf(p):
        return float(np.max(lv))
    return float(logsumexp(p * lv + 2.0 * np.log(w.rho_at(pts))) / p)


def discrete_norm(w: RadialWeight, f: TestFunction, gamma, p=math.inf) -> float:
    """``(sum |f|^p e^{-ph} rho^2)^{1/p}`` over ``gamma``; the max of ``|f| e^{-h}`` for ``p = inf``."""
    return float(math.exp(log_discrete_norm(w, f, gamma, p)))


# -- regularity checks --------------------------------------------------------


@dataclass
class LipschitzReport:
    constant: float
    constant_doubled: float
    pairs: int
    stable: bool

    def to_dict(self):
        return asdict(self)


def _lipschitz_once(w, f, z, R, pairs, rng, log_max):
    rz = float(w.rho_at(z))
    r = 0.5 * R * rz * np.sqrt(rng.uniform(0, 1, (2, pairs)))
    th = rng.uniform(0, TWO_PI, (2, pairs))
    z1, z2 = z + r[0] * np.exp(1j * th[0]), z + r[1] * np.exp(1j * th[1])
    keep = z1 != z2
    z1, z2 = z1[keep], z2[keep]
    v1 = np.exp(weighted_log(w, f, z1) - log_max)
    v2 = np.exp(weighted_log(w, f, z2) - log_max)
    dr = np.abs(z1 - z2) / np.minimum(w.rho_at(z1), w.rho_at(z2))
    return float(np.max(np.abs(v1 - v2) / dr))


def lipschitz_check(w: RadialWeight, f: TestFunction, z, R, pairs=2000, seed=0, grid=4000,
                    tol=0.25) -> LipschitzReport:
    """Largest ``| |f|e^{-h}(z1) - |f|e^{-h}(z2) | / (d_rho(z1, z2) max_D |f|e^{-h})``.

    Pairs are drawn from ``D(z, R rho(z) / 2)``; the maximum runs over
    ``D = D(z, R rho(z))``.  The measurement is repeated with twice as many
    pairs and called stable when it grows by at most ``tol``.
    """
    z = complex(z)
    rz = float(w.rho_at(z))
    disc = z + sunflower(grid, R * rz)
    log_max = float(np.max(weighted_log(w, f, np.concatenate([disc, [z]]))))
    c1 = _lipschitz_once(w, f, z, R, pairs, np.random.default_rng(seed), log_max)
    c2 = max(c1, _lipschitz_once(w, f, z, R, 2 * pairs, np.random.default_rng(seed + 1), log_max))
    return LipschitzReport(c1, c2, int(pairs), bool(c2 <= (1.0 + tol) * c1))


def mean_value_check(w: RadialWeight, f: TestFunction, z, R, c=1.2, radial=48, angular=128) -> dict:
    """Compare ``|f(z)| e^{-h(z)}`` with ``c rho(z)^{-2} int_D |f| e^{-h} dm``, ``D = D(z, R rho(z))``.

    ``margin`` is ``log(right) - log(left)`` (``0`` when ``f`` vanishes
    identically) and ``c_needed`` the smallest constant that would do.
    """
    z = complex(z)
    rz = float(w.rho_at(z))
    spec = NormSpec.lp(1.0, z, R * rz, radial=radial, angular=angular)
    log_int = log_norm(w, f, spec)
    log_left = float(weighted_log(w, f, [z])[0])
    if math.isinf(log_left) and math.isinf(log_int):
        return {"left": 0.0, "right": 0.0, "margin": 0.0, "c": c, "c_needed": 0.0}
    log_right = math.log(c) - 2.0 * math.log(rz) + log_int
    return {
        "left": math.exp(log_left),
        "right": math.exp(log_right),
        "margin": log_right - log_left,
        "c": c,
        "c_needed": math.exp(log_left + 2.0 * math.log(rz) - log_int),
    }


# -- discrete norms -----------------------------------------------------------


def in_region(spec: NormSpec, pts):
    pts = _points(pts)
    return pts[np.abs(pts - spec.center) <= spec.radius]


def discrete_norm_bound(w: RadialWeight, gamma, ensemble, p=2.0, spec: NormSpec | None = None,
                        threads=1) -> dict:
    """Ratios ``||f||_{p,h,Gamma} / ||f||_{p,h}`` over an ensemble.

    Both norms are taken over the region of ``spec`` (``Gamma`` is cut to
    it).  An empty ``Gamma`` gives ratio ``0``.
    """
    if spec is None:
        raise ValueError("a NormSpec fixing the region is required")
    if spec.space == "sup":
        p = math.inf
    elif spec.p != p:
        spec = NormSpec.lp(p, spec.center, spec.radius, step=spec.step, radial=spec.radial, angular=spec.angular)
    pts = in_region(spec, gamma)

    def one(f):
        if pts.size == 0:
            return 0.0
        return math.exp(log_discrete_norm(w, f, pts, p) - log_norm(w, f, spec))

    ratios = _map(one, ensemble, threads)
    return {"max_ratio": float(max(ratios)) if ratios else 0.0, "ratios": [float(r) for r in ratios],
            "points": int(pts.size), "p": p}


def duplicated(gamma, k):
    """Every point repeated ``k`` times (an artificially clustered set)."""
    return np.repeat(_points(gamma), int(k))


def peak_ensemble(w: RadialWeight, rings: RingSequence, ks, n, R=10.0, seed=0, balance=1,
                  poly_degree=0) -> list:
    """Gaussian peaks at ring centroids ``s_k e^{i theta}`` with random ``k`` in ``ks`` and angle jitter.

    With ``poly_degree > 0`` every peak is multiplied by a random polynomial
    in ``(w - z) / rho(z)``.
    """
    rng = np.random.default_rng(seed)
    out = []
    ks = list(ks)
    for _ in range(n):
        k = int(rng.choice(ks))
        th = rng.uniform(-0.5, 0.5) * w.rho(rings.s[k]) / rings.s[k] * 4.0
        z = rings.s[k] * np.exp(1j * th)
        f = from_peak(peak_gaussian(w, z, R, rings=rings, balance=balance))
        if poly_degree:
            c = rng.normal(size=poly_degree + 1) + 1j * rng.normal(size=poly_degree + 1)
            rz = float(w.rho(rings.s[k]))
            f = f.times(polynomial_in(c, z, rz))
        out.append(f)
    return out


def polynomial_in(coeffs, z, scale) -> TestFunction:
    """``sum_j c_j ((w - z) / scale)^j``."""
    c = np.asarray(coeffs, dtype=complex)
    z = complex(z)

    def fn(w):
        with np.errstate(divide="ignore"):
            return np.log(np.polyval(c[::-1], (w - z) / scale).astype(complex))

    return TestFunction([(0j, fn)], f"poly{c.size - 1}")


# -- interpolation ------------------------------------------------------------


class NoContraction(RuntimeError):
    """The node residual failed to decrease; ``trace`` holds the residual norms."""

    def __init__(self, trace, msg=None):
        super().__init__(msg or "no contraction: residual norm non-decreasing")
        self.trace = list(trace)


def inner_cutoff_ring(anchor: int, R: float) -> int:
    """Ring bounding the inner cutoff disc: ``max(5, anchor - 3 R)``."""
    return int(max(5, anchor - 3 * R))


def window_nodes(lat: Lattice, k_lo, k_hi, half_width, k_center=None, R=None):
    """Lattice points on active rings ``k_lo..k_hi`` with ``|arg| <= half_width rho / s``.

    The angular half-width is ``half_width`` local scales at ring
    ``k_center`` (default the middle ring).  With ``R`` given, rings inside
    the inner cutoff are dropped.
    """
    rs = lat.rings
    kc = (k_lo + k_hi) // 2 if k_center is None else int(k_center)
    if R is not None:
        k_lo = max(k_lo, inner_cutoff_ring(kc, R))
    ang = half_width * float(lat.weight.rho(rs.s[kc])) / rs.s[kc]
    out = []
    for k in range(k_lo, k_hi + 1):
        if not lat.active[k]:
            continue
        n = int(rs.N[k])
        top = int(ang * n / TWO_PI) + 1
        m = np.arange(-top, top + 1)
        for ph in lat.phases:
            p = rs.s[k] * np.exp(1j * TWO_PI * (m + ph) / n)
            out.append(p[np.abs(np.angle(p)) <= ang])
    return np.concatenate(out) if out else np.zeros(0, dtype=complex)


def bounded_data(w: RadialWeight, nodes, seed=0):
    """Weighted data ``u_n = a_n e^{-h(z_n)}`` uniform in the unit disc (sup model)."""
    pts = _points(nodes)
    rng = np.random.default_rng(seed)
    return np.sqrt(rng.uniform(0, 1, pts.size)) * np.exp(1j * rng.uniform(0, TWO_PI, pts.size))


@dataclass
class InterpProblem:
    """Data at ``nodes``; atoms at scale ``R`` with ``eps`` and peak ``balance``.

    ``data`` holds the weighted values ``u_n = a_n e^{-h(z_n)}`` so that
    large weights never overflow; :meth:`from_values` takes raw ``a_n``.

    ``space`` selects the residual norm: ``"sup"`` uses
    ``max |r_n| e^{-h(z_n)}``, ``"lp"`` uses
    ``(sum |r_n|^p e^{-p h(z_n)} rho(z_n)^2)^{1/p}``.
    """

    weight: RadialWeight
    nodes: np.ndarray
    data: np.ndarray
    rings: RingSequence | None = None
    R: float = 10.0
    eps: float = EPSILON
    max_iter: int = 30
    target: float = 1e-12
    balance: int = 1
    space: str = "sup"
    p: float = math.inf
    threads: int = 1

    def __post_init__(self):
        self.nodes = _points(self.nodes)
        self.data = np.atleast_1d(np.asarray(self.data, dtype=complex))
        if self.nodes.shape != self.data.shape:
            raise ValueError("nodes and data must have the same length")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("data norm must be finite")

    @classmethod
    def from_values(cls, weight, nodes, values, **kw):
        pts = _points(nodes)
        a = np.asarray(values, dtype=complex)
        u = a * np.exp(-weight.h_at(pts))
        if np.any((u == 0) & (a != 0)):
            raise ValueError("weighted data underflows; pass weighted values to InterpProblem")
        return cls(weight, pts, u, **kw)


@dataclass
class InterpResult:
    """``log_coefficients[n]`` is the log of the total multiple of the unit atom at node ``n``."""

    solution: TestFunction
    log_coefficients: np.ndarray
    trace: list
    factors: list
    contraction: float
    iterations: int
    node_error: float
    status: str
    info: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {
            "trace": [float(x) for x in self.trace],
            "factors": [float(x) for x in self.factors],
            "contraction": float(self.contraction),
            "iterations": int(self.iterations),
            "node_error": float(self.node_error),
            "status": self.status,
            "info": self.info,
        }

    def trace_csv(self) -> str:
        lines = ["iteration,residual,factor"]
        for i, r in enumerate(self.trace):
            f = "" if i == 0 else repr(float(self.factors[i - 1]))
            lines.append(f"{i},{float(r)!r},{f}")
        return "\n".join(lines) + "\n"


def _residual_norm(prob, r, rho2):
    if prob.space == "sup":
        return float(np.max(np.abs(r))) if r.size else 0.0
    return float(np.sum(np.abs(r) ** prob.p * rho2) ** (1.0 / prob.p))


def interp_solve(prob: InterpProblem) -> InterpResult:
    """Iterate ``f <- f + sum_n V_n(residual_n)`` until the node residual meets ``target``.

    Residuals are tracked in weighted units ``r_n e^{-h(z_n)}`` through the
    normalised node matrix ``K[k, n] = U_n(z_k) e^{h(z_n) - h(z_k)} / U_n(z_n)``,
    and recomputed from the accumulated coefficients every step.  Raises
    :class:`NoContraction` once the residual norm has failed to decrease
    three times in a row (or becomes non-finite).
    """
    w = prob.weight
    z = prob.nodes
    h = w.h_at(z)
    rho2 = w.rho_at(z) ** 2
    atoms = _map(lambda zn: interp_atom(w, zn, prob.R, 1.0, nodes=z, eps=prob.eps, rings=prob.rings,
                                        balance=prob.balance), z, prob.threads)
    n = z.size
    K = np.empty((n, n), dtype=complex)
    with np.errstate(over="ignore", invalid="ignore"):
        for j, a in enumerate(atoms):
            K[:, j] = np.exp(a.log_V(z) + h[j] - h)
    b = prob.data.copy()
    c = np.zeros(n, dtype=complex)
    r = b.copy()
    b_norm = _residual_norm(prob, b, rho2)
    base = b_norm if b_norm > 0 else 1.0
    trace = [_residual_norm(prob, r, rho2) / base]
    factors = []
    stalls = 0
    status = "max_iter"
    for _ in range(prob.max_iter):
        if trace[-1] <= prob.target:
            status = "converged"
            break
        c = c + r
        with np.errstate(over="ignore", invalid="ignore"):
            r = b - K @ c
        cur = _residual_norm(prob, r, rho2) / base
        factors.append(cur / trace[-1] if trace[-1] > 0 else 0.0)
        trace.append(cur)
        if not math.isfinite(cur):
            raise NoContraction(trace, "no contraction: residual overflowed")
        stalls = stalls + 1 if cur >= trace[-2] else 0
        if stalls >= 3:
            raise NoContraction(trace)
    else:
        if trace[-1] <= prob.target:
            status = "converged"
    with np.errstate(divide="ignore"):
        log_coef = np.log(c) + h
    sol = TestFunction([(lc, a.log_V) for lc, a in zip(log_coef, atoms) if np.isfinite(lc.real)], "interp")
    err = float(np.max(np.abs(r)) / np.max(np.abs(b))) if np.any(b != 0) else 0.0
    off = np.abs(K - np.diag(np.diag(K)))
    info = {
        "nodes": int(n),
        "exact_sections": int(sum(a.exact_section for a in atoms)),
        "fallbacks": int(sum(a.fallback for a in atoms)),
        "offdiag_max": float(off.max()) if n > 1 else 0.0,
        "offdiag_row_sum": float(off.sum(axis=1).max()) if n > 1 else 0.0,
    }
    contraction = float(max(factors)) if factors else 0.0
    return InterpResult(sol, log_coef, trace, factors, contraction, len(factors), err, status, info)


# -- sampling -----------------------------------------------------------------


@dataclass
class SamplingReport:
    min_ratio: float
    ratios: list
    labels: list
    spec: dict

    def to_dict(self):
        return asdict(self)


def sampling_ratio(w: RadialWeight, gamma, ensemble, spec: NormSpec, threads=1) -> SamplingReport:
    """Smallest ``||f||_{h,Gamma} / ||f||_h`` (sup) or its ``L^p`` analogue over the ensemble.

    Both norms are restricted to the region of ``spec``.  For the sup space
    the discrete norm is a maximum over a subset of values that do not
    depend on ``Gamma``, so deleting nodes can only lower every ratio.
    """
    pts = in_region(spec, gamma)
    p = math.inf if spec.space == "sup" else spec.p

    def one(f):
        if pts.size == 0:
            return 0.0
        return math.exp(log_discrete_norm(w, f, pts, p) - log_norm(w, f, spec))

    ratios = _map(one, ensemble, threads)
    return SamplingReport(float(min(ratios)), [float(x) for x in ratios], [f.label for f in ensemble],
                          spec.to_dict())


def hole_witness(w: RadialWeight, rings: RingSequence, k, R=10.0, balance=1, theta=0.0) -> TestFunction:
    """Gaussian peak at the centroid of ring ``k``, for probing a gap in a point set."""
    z = rings.s[k] * np.exp(1j * theta)
    f = from_peak(peak_gaussian(w, z, R, rings=rings, balance=balance))
    f.label = f"witness@{k}"
    return f


# -- Jensen's formula --------------------------------------------------------


def _is_prime(n):
    if n < 2:
        return False
    for q in range(2, int(math.isqrt(n)) + 1):
        if n % q == 0:
            return False
    return True


def jensen_count(counts, min_count=1021):
    """Smallest prime ``>= min_count`` dividing none of ``counts``."""
    m = int(min_count)
    counts = [int(c) for c in counts]
    while not (_is_prime(m) and all(c % m for c in counts)):
        m += 1
    return m


@dataclass
class JensenReport:
    residual: float
    log_f0: float
    circle_mean: float
    zero_term: float
    r: float
    M: int

    def to_dict(self):
        return asdict(self)


def ring_zero_term(rings: RingSequence, r, active=None) -> float:
    """``sum N_k log(r / s_k)`` over (active) rings with ``s_k < r``."""
    mask = np.ones(len(rings), dtype=bool) if active is None else np.asarray(active, dtype=bool)
    inside = mask & (rings.s < r)
    return float(math.fsum(rings.N[inside] * np.log(r / rings.s[inside])))


def jensen_diagnostic(f: TestFunction, r, zeros=None, zero_term=None, M=None, seed=0) -> JensenReport:
    """``(1/2pi) int log|f(r e^{i theta})| dtheta - sum log(r/|w_k|) - log|f(0)|``.

    The zeros inside ``D(r)`` are given either as points (``zeros``) or as
    their precomputed sum (``zero_term``).  The angle grid has ``M``
    points (a prime by default) shifted by a random fraction of a step so
    that it avoids zeros on the circle.
    """
    if M is None:
        M = jensen_count([], 4099)
    log0 = float(f.log_abs(np.array([0j]))[0])
    if not math.isfinite(log0):
        raise ValueError("f(0) must be non-zero")
    if zero_term is None:
        zs = np.atleast_1d(np.asarray([] if zeros is None else zeros, dtype=complex))
        zs = zs[np.abs(zs) < r]
        zero_term = float(math.fsum(np.log(r / np.abs(zs)))) if zs.size else 0.0
    shift = np.random.default_rng(seed).uniform(0.0, 1.0)
    th = TWO_PI * (np.arange(M) + shift) / M
    vals = f.log_abs(r * np.exp(1j * th))
    mean = float(math.fsum(vals) / M)
    return JensenReport(mean - zero_term - log0, log0, mean, float(zero_term), float(r), int(M))


# -- index demo ---------------------------------------------------------------


def tilde_weight(w: RadialWeight) -> RadialWeight:
    """``h~ = h + sqrt(h log(1/rho) + 1) - 1`` with derivatives by finite differences."""
    def ht(r):
        r = np.asarray(r, dtype=float)
        hv = w.h(r)
        lr = np.log(1.0 / w.rho(np.maximum(r, 1e-300)))
        return hv + np.sqrt(np.maximum(hv * lr, 0.0) + 1.0) - 1.0

    return from_function(ht, w.domain, name=f"tilde({w.name})")


def tilde_checks(w: RadialWeight, wt: RadialWeight, radii) -> dict:
    """The three limit conditions on a grid approaching the boundary.

    Each list should tend to ``0``: ``h~/h - 1``, ``rho~/rho - 1`` and
    ``log(1/rho) / (h~ - h)``.
    """
    r = np.asarray(radii, dtype=float)
    h, htv = w.h(r), wt.h(r)
    rho, rhot = w.rho(r), wt.rho(r)
    a = htv / h - 1.0
    b = rhot / rho - 1.0
    c = np.log(1.0 / rho) / (htv - h)
    dec = lambda x: bool(np.all(np.diff(np.abs(x)) <= 1e-12))
    return {
        "radii": r.tolist(),
        "h_ratio": a.tolist(),
        "rho_ratio": b.tolist(),
        "log_rho_over_gap": c.tolist(),
        "decreasing": [dec(a), dec(b), dec(c)],
        "above": bool(np.all(htv > h)),
    }


def random_polynomials(n, degree=4, seed=0):
    rng = np.random.default_rng(seed)
    return [rng.normal(size=degree + 1) + 1j * rng.normal(size=degree + 1) for _ in range(n)]


def lattice_norm_poly(w: RadialWeight, rings: RingSequence, coeffs, p=2.0, active=None,
                      floor=1e-30) -> float:
    """``(sum_Lambda |g|^p e^{-ph} rho^2)^{1/p}`` for a polynomial ``g`` (ascending coefficients).

    Rings are visited outward until a ring's bound
    ``N_k max|g|^p e^{-p h(s_k)} rho(s_k)^2`` drops below ``floor`` times
    the running sum for five rings in a row.  For ``p = 2`` and
    ``deg g < N_k`` the ring sum is ``N_k sum |c_j|^2 s^{2j}`` exactly.
    """
    c = np.asarray(coeffs, dtype=complex)
    deg = c.size - 1
    mask = np.ones(len(rings), dtype=bool) if active is None else np.asarray(active, dtype=bool)
    logs = []
    quiet = 0
    for k in range(len(rings)):
        s, n = float(rings.s[k]), int(rings.N[k])
        lw = -p * float(w.h(s)) + 2.0 * math.log(float(w.rho(s)))
        bound = math.log(n) + p * math.log(max(np.sum(np.abs(c) * s ** np.arange(deg + 1)), 1e-300)) + lw
        if mask[k]:
            if p == 2.0 and deg < n:
                lt = math.log(n * float(np.sum(np.abs(c) ** 2 * s ** (2 * np.arange(deg + 1))))) + lw
            else:
                pts = s * np.exp(1j * TWO_PI * np.arange(n) / n)
                g = np.abs(np.polyval(c[::-1], pts))
                with np.errstate(divide="ignore"):
                    lt = float(logsumexp(p * np.log(g))) + lw
            logs.append(lt)
        tot = float(logsumexp(logs)) if logs else -math.inf
        quiet = quiet + 1 if bound < tot + math.log(floor) else 0
        if quiet >= 5:
            break
    else:
        if logs:
            raise GridOutOfRange("rings end before the lattice sum is negligible")
    return math.exp(float(logsumexp(logs)) / p) if logs else 0.0


@dataclass
class IndexReport:
    densities: dict
    expected: dict
    g0_ratio_max: float
    g0_ratio_max_doubled: float
    g0_ratio_stable: bool
    disjoint: bool
    tilde: dict
    validation_ok: bool
    info: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def index_demo(w: RadialWeight, p=2.0, d_list=(0, 1, 2), R=20.0, k_lo=30, k_hi=45, n_ensemble=100,
               seed=0, r_max=None, per_ring=16, literal=False, tol=0.1) -> IndexReport:
    """Lattice for ``h~``, the densities of ``Lambda_d``, the ``|g(0)|`` bound and disjointness.

    The ``|g(0)| / ||g||_{p,h,Lambda}`` ratio is measured over ``n_ensemble``
    random quartic polynomials and again over twice as many; ``g0_ratio_stable``
    means the maximum moved by at most ``tol`` (relative).
    """
    wt = tilde_weight(w)
    if w.domain is Domain.DISC:
        r_max = 1.0 - 1e-6 if r_max is None else r_max
        radii = 1.0 - np.logspace(-1, -5, 9)
    else:
        r_max = 400.0 if r_max is None else r_max
        radii = np.logspace(0.5, 2.5, 9)
    lo, hi = (0.5, 0.999) if w.domain is Domain.DISC else (1.0, 30.0)
    rep = validate(wt, lo, hi, 201)
    rings = build_rings(wt, r_max, max_points=10 ** 6)
    lat = Lattice(rings)
    q = density_profile(lat, [R], k_lo, k_hi, per_ring=per_ring, seed=seed)
    dens = {"lambda": [q.q_minus[0], q.q_plus[0]]}
    expected = {"lambda": 0.5}
    for d in d_list:
        q = density_profile(thin_lambda_d(lat, d, literal), [R], k_lo, k_hi, per_ring=per_ring, seed=seed)
        dens[f"d{d}"] = [q.q_minus[0], q.q_plus[0]]
        expected[f"d{d}"] = (1.0 - 2.0 ** (-d - 1)) / 2.0
    polys = random_polynomials(2 * n_ensemble, seed=seed)
    ratios = [abs(c[0]) / lattice_norm_poly(w, rings, c, p) for c in polys]
    m1, m2 = max(ratios[:n_ensemble]), max(ratios)
    sets = [set(thinning_rings(len(rings), d, literal).tolist()) for d in d_list]
    disjoint = all(not (sets[i] & sets[j]) for i in range(len(sets)) for j in range(i + 1, len(sets)))
    return IndexReport(dens, expected, float(m1), float(m2), bool(m2 <= (1.0 + tol) * m1), bool(disjoint),
                       tilde_checks(w, wt, radii), bool(rep.ok),
                       {"rings": len(rings), "p": p, "R": R, "k_range": [k_lo, k_hi], "n_ensemble": n_ensemble})
