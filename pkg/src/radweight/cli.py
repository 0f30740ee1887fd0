"""Command-line driver: one subcommand per operation, JSON and CSV out.

Exit status is 0 on success, 2 when a report carries an assumption
violation, 1 on runtime errors and 64 on bad usage or config.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import atomize, geometry, peaks, products, verify, weierstrass
from . import weight as wmod

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_VIOLATION = 2
EXIT_USAGE = 64

DEFAULT_WEIGHT = {"domain": "disc", "kind": "pow_inv", "params": {}}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- helpers ------------------------------------------------------------------


def _clean(obj):
    """Make ``obj`` JSON-safe: numpy scalars, complex numbers, non-finite floats."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (complex, np.complexfloating)):
        return [_clean(float(obj.real)), _clean(float(obj.imag))]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"


def _emit(args, payload, name="result"):
    text = dumps(payload)
    if getattr(args, "out", None):
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _write(path, text):
    with open(path, "w") as fh:
        fh.write(text)


def _plot_spec(path_csv, x, ys, title, logy=False):
    return {
        "title": title,
        "data": os.path.basename(path_csv),
        "x": {"field": x},
        "y": {"fields": list(ys), "scale": "log" if logy else "linear"},
        "mark": "line",
    }


def _floats(text):
    try:
        return [float(x) for x in str(text).split(",") if x.strip()]
    except ValueError as exc:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from exc


def _ints(text):
    try:
        return [int(x) for x in str(text).split(",") if x.strip()]
    except ValueError as exc:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from exc


def load_weight(path):
    if path is None:
        return wmod.from_config(DEFAULT_WEIGHT)
    if not os.path.exists(path):
        raise UsageError(f"weight config not found: {path}")
    try:
        with open(path) as fh:
            cfg = json.load(fh)
        return wmod.from_config(cfg)
    except (json.JSONDecodeError, wmod.WeightError, ValueError, TypeError) as exc:
        raise UsageError(f"bad weight config {path}: {exc}") from exc


def _default_rmax(w, r_max):
    if r_max is not None:
        return r_max
    return 1.0 - 1e-6 if w.domain is wmod.Domain.DISC else 400.0


def _rings(args, w):
    return atomize.build_rings(w, _default_rmax(w, args.r_max), max_points=args.max_points)


def _lattice(args, w, rings):
    lat = geometry.Lattice(rings)
    if getattr(args, "d", None) is not None and args.d >= 0:
        lat = geometry.thin_lambda_d(lat, args.d, getattr(args, "literal", False))
    if getattr(args, "midpoints", False):
        lat = lat.with_midpoints()
    return lat


# -- subcommands --------------------------------------------------------------


def cmd_validate(args):
    w = load_weight(args.weight)
    rep = w.validate(args.r_lo, args.r_hi, args.n)
    _emit(args, rep.to_dict())
    return EXIT_OK if rep.ok else EXIT_VIOLATION


def cmd_atomize(args):
    w = load_weight(args.weight)
    rings = _rings(args, w)
    if args.out:
        _write(args.out, rings.to_csv())
    summary = {"rings": len(rings), "points": rings.total_points, "r_max": float(rings.r[-1]),
               "limits": rings.limit_report(), "weight": w.config}
    if args.summary:
        _write(args.summary, dumps(summary))
    if not args.out and not args.summary:
        sys.stdout.write(dumps(summary))
    return EXIT_OK


def cmd_lattice(args):
    w = load_weight(args.weight)
    rings = _rings(args, w)
    lat = _lattice(args, w, rings)
    k_hi = min(args.k_hi, len(rings) - 1)
    pts = lat.materialize(args.k_lo, k_hi + 1)
    text = pts.to_csv()
    if args.out:
        _write(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_density(args):
    w = load_weight(args.weight)
    lo, hi = _floats(args.annulus) if args.annulus else (None, None)
    r_max = args.r_max
    if r_max is None and hi is not None:
        r_max = min(1.0 - 0.25 * (1.0 - hi), 1.0 - 1e-9) if w.domain is wmod.Domain.DISC else 1.5 * hi + 50.0
    rings = atomize.build_rings(w, _default_rmax(w, r_max), max_points=args.max_points)
    if args.points:
        if not os.path.exists(args.points):
            raise UsageError(f"points file not found: {args.points}")
        with open(args.points) as fh:
            gamma = geometry.PointSet.from_csv(w, fh.read())
    else:
        gamma = _lattice(args, w, rings)
    if lo is not None:
        ks = np.nonzero((rings.r[:-1] >= lo) & (rings.r[1:] <= hi))[0]
        if ks.size == 0:
            raise UsageError("annulus contains no complete ring")
        k_lo, k_hi = int(ks[0]), int(ks[-1])
    else:
        k_lo, k_hi = args.k_lo, args.k_hi
    rep = geometry.density_profile(gamma, _floats(args.R), k_lo, k_hi, per_ring=args.per_ring,
                                   seed=args.seed, rings=rings)
    out = rep.to_dict()
    if len(rep.R_grid) >= 3:
        out["monotone"] = geometry.q_monotone_check(rep)
    _emit(args, out)
    if args.plot:
        csv = args.plot + ".csv"
        lines = ["R,q_minus,q_plus"] + [f"{R!r},{a!r},{b!r}" for R, a, b in zip(rep.R_grid, rep.q_minus, rep.q_plus)]
        _write(csv, "\n".join(lines) + "\n")
        _write(args.plot + ".plot.json", dumps(_plot_spec(csv, "R", ["q_minus", "q_plus"], "density profile")))
    return EXIT_OK


def cmd_product_band(args):
    w = load_weight(args.weight)
    rings = _rings(args, w)
    p = products.RingProduct(rings, truncation=args.truncation)
    rep, z, a = products.band_A(p, w, args.k_lo, args.k_hi, args.radial, args.angular, args.seed)
    out = rep.to_dict()
    if args.values:
        out["values"] = {"re": z.real, "im": z.imag, "A": a}
    _emit(args, out)
    return EXIT_OK


def cmd_sigma_band(args):
    s = weierstrass.SigmaLattice(args.R)
    band = weierstrass.sigma_band(s, n=args.grid, min_dist=args.min_dist)
    out = {"band": band.report.to_dict(), "points": len(s)}
    if args.outside:
        zo = weierstrass.outside_samples(args.R, args.outside, args.seed)
        _, m = weierstrass.lower_margins(s, zo)
        out["lower_margin_min"] = float(m.min())
    _emit(args, out)
    return EXIT_OK


def cmd_peak(args):
    w = load_weight(args.weight)
    rings = _rings(args, w)
    k = args.ring
    if k >= len(rings):
        raise UsageError(f"ring {k} not built (have {len(rings)})")
    z = rings.s[k] * np.exp(2j * math.pi * args.phase / rings.N[k])
    if args.kind == "cubic":
        pc = peaks.peak_cubic(w, rings, z)
        band = pc.flat_band()
        out = {"kind": "cubic", "band": band.to_dict(), "z": z}
    else:
        pg = peaks.peak_gaussian(w, z, args.R, rings=rings, balance=args.balance)
        rep, _, _ = pg.band(args.grid)
        wo = pg.outside_samples(args.outside, seed=args.seed)
        m = pg.decay_margins(wo, rep.max)
        out = {"kind": "gaussian", "band": rep.to_dict(), "z": z, "R": args.R, "balance": args.balance,
               "decay_margin_min": float(m.min()) if m.size else None}
    _emit(args, out)
    return EXIT_OK


def cmd_truncate(args):
    coeffs = peaks.exp_square_coeffs(max(4 * args.N, 200))
    T = peaks.taylor_truncate(coeffs, args.N, args.eps)
    r0 = T.inner_radius
    radii = np.linspace(r0 * 1.001, 3.0 * math.sqrt(args.N), args.radii)
    out = {"bounds": T.bounds(), "inner_tail": peaks.exp_square_tail(r0, args.N),
           "section_margin_min": float(T.section_margins(radii).min())}
    _emit(args, out)
    return EXIT_OK


def cmd_interp(args):
    w = load_weight(args.weight)
    rings = _rings(args, w)
    lat = _lattice(args, w, rings)
    nodes = verify.window_nodes(lat, args.k_lo, args.k_hi, args.half_width, R=args.R)
    data = verify.bounded_data(w, nodes, args.seed)
    prob = verify.InterpProblem(w, nodes, data, rings=rings, R=args.R, eps=args.eps, max_iter=args.max_iter,
                                target=args.target, balance=args.balance, threads=args.threads)
    try:
        res = verify.interp_solve(prob)
        out = res.summary()
        trace_csv = res.trace_csv()
    except verify.NoContraction as exc:
        out = {"status": "no_contraction", "trace": exc.trace, "nodes": int(nodes.size)}
        trace_csv = "iteration,residual\n" + "".join(f"{i},{float(r)!r}\n" for i, r in enumerate(exc.trace))
    _emit(args, out)
    if args.trace:
        _write(args.trace, trace_csv)
        _write(args.trace + ".plot.json", dumps(_plot_spec(args.trace, "iteration", ["residual"],
                                                           "node residual", logy=True)))
    return EXIT_OK


def cmd_sample(args):
    w = load_weight(args.weight)
    rings = _rings(args, w)
    lat = geometry.Lattice(rings)
    lo, hi = _ints(args.delete)
    holed = lat.without_rings(range(lo, hi + 1))
    k = args.witness
    f = verify.hole_witness(w, rings, k, args.R, balance=args.balance)
    rz = float(w.rho(rings.s[k]))
    spec = verify.NormSpec.sup(rings.s[k], args.window * rz)
    full = verify.sampling_ratio(w, lat.points_in_disc(rings.s[k], args.window * rz), [f], spec)
    cut = verify.sampling_ratio(w, holed.points_in_disc(rings.s[k], args.window * rz), [f], spec)
    _emit(args, {"full": full.to_dict(), "deleted": cut.to_dict(), "rings_deleted": [lo, hi], "witness": k})
    return EXIT_OK


def cmd_jensen(args):
    w = load_weight(args.weight)
    rings = _rings(args, w)
    p = products.RingProduct(rings)
    f = verify.from_product(p)
    out = []
    for r in _floats(args.r):
        M = verify.jensen_count(rings.N[rings.s < r], args.min_count)
        out.append(verify.jensen_diagnostic(f, r, zero_term=verify.ring_zero_term(rings, r), M=M,
                                            seed=args.seed).to_dict())
    _emit(args, {"reports": out})
    return EXIT_OK


def cmd_index_demo(args):
    w = load_weight(args.weight)
    rep = verify.index_demo(w, p=args.p, d_list=_ints(args.d), R=args.R, k_lo=args.k_lo, k_hi=args.k_hi,
                            n_ensemble=args.ensemble, seed=args.seed, literal=args.literal)
    _emit(args, rep.to_dict())
    return EXIT_OK if rep.validation_ok else EXIT_VIOLATION


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="radweight", description="Atomization, products and peaks for radial weights.")
    ap.add_argument("--threads", type=int, default=1, help="cap on worker threads")
    ap.add_argument("--seed", type=int, default=0, help="seed for every random choice")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(func=fn)
        p.add_argument("--out", help="output path (stdout when omitted)")
        return p

    def weighted(p, rings=True):
        p.add_argument("--weight", help="weight config JSON (default pow_inv on the disc)")
        if rings:
            p.add_argument("--r-max", type=float, default=None)
            p.add_argument("--max-points", type=int, default=10 ** 6)

    p = add("validate", cmd_validate, "check the standing assumptions")
    weighted(p, rings=False)
    p.add_argument("--r-lo", type=float, required=True)
    p.add_argument("--r-hi", type=float, required=True)
    p.add_argument("--n", type=int, default=801)

    p = add("atomize", cmd_atomize, "ring sequence as CSV")
    weighted(p)
    p.add_argument("--summary", help="also write a JSON summary here")

    p = add("lattice", cmd_lattice, "materialize lattice points as CSV")
    weighted(p)
    p.add_argument("--k-lo", type=int, default=0)
    p.add_argument("--k-hi", type=int, default=10)
    p.add_argument("--d", type=int, default=None, help="thin to Lambda_d")
    p.add_argument("--literal", action="store_true")
    p.add_argument("--midpoints", action="store_true")

    p = add("density", cmd_density, "density profile q_-(R), q_+(R)")
    weighted(p)
    p.add_argument("--points", help="point CSV (default: the lattice)")
    p.add_argument("--R", default="20")
    p.add_argument("--annulus", help="r_lo,r_hi; overrides --k-lo/--k-hi")
    p.add_argument("--k-lo", type=int, default=30)
    p.add_argument("--k-hi", type=int, default=45)
    p.add_argument("--per-ring", type=int, default=64)
    p.add_argument("--d", type=int, default=None)
    p.add_argument("--literal", action="store_true")
    p.add_argument("--midpoints", action="store_true")
    p.add_argument("--plot", help="prefix for CSV and plot-spec output")

    p = add("product-band", cmd_product_band, "band of the product diagnostic A")
    weighted(p)
    p.add_argument("--k-lo", type=int, default=10)
    p.add_argument("--k-hi", type=int, default=45)
    p.add_argument("--radial", type=int, default=4)
    p.add_argument("--angular", type=int, default=16)
    p.add_argument("--truncation", type=int, default=None)
    p.add_argument("--values", action="store_true", help="include per-point values")

    p = add("sigma-band", cmd_sigma_band, "band of the sigma partial product")
    p.add_argument("--R", type=float, default=10.0)
    p.add_argument("--grid", type=int, default=4000)
    p.add_argument("--min-dist", type=float, default=0.1)
    p.add_argument("--outside", type=int, default=0, help="also sample this many outside points")

    p = add("peak", cmd_peak, "peak function band and decay")
    weighted(p)
    p.add_argument("--ring", type=int, default=40)
    p.add_argument("--phase", type=float, default=7.0, help="angle in units of 2 pi / N_k")
    p.add_argument("--R", type=float, default=15.0)
    p.add_argument("--kind", choices=("gaussian", "cubic"), default="gaussian")
    p.add_argument("--balance", type=int, default=0)
    p.add_argument("--grid", type=int, default=2000)
    p.add_argument("--outside", type=int, default=200)

    p = add("truncate", cmd_truncate, "Taylor truncation bounds for exp(z^2)")
    p.add_argument("--N", type=int, default=60)
    p.add_argument("--eps", type=float, default=peaks.EPSILON)
    p.add_argument("--radii", type=int, default=100)

    p = add("interp", cmd_interp, "interpolation solver on a lattice window")
    weighted(p)
    p.add_argument("--k-lo", type=int, default=30)
    p.add_argument("--k-hi", type=int, default=45)
    p.add_argument("--half-width", type=float, default=20.0, help="window half-width in local scales")
    p.add_argument("--d", type=int, default=1, help="thin to Lambda_d; negative keeps the full lattice")
    p.add_argument("--literal", action="store_true")
    p.add_argument("--midpoints", action="store_true")
    p.add_argument("--R", type=float, default=10.0)
    p.add_argument("--eps", type=float, default=peaks.EPSILON)
    p.add_argument("--balance", type=int, default=1)
    p.add_argument("--max-iter", type=int, default=30)
    p.add_argument("--target", type=float, default=1e-12)
    p.add_argument("--trace", help="CSV of residual per iteration (plus plot spec)")

    p = add("sample", cmd_sample, "sampling ratio with a hole witness")
    weighted(p)
    p.add_argument("--delete", default="35,40", help="ring range removed")
    p.add_argument("--witness", type=int, default=37)
    p.add_argument("--R", type=float, default=10.0)
    p.add_argument("--balance", type=int, default=1)
    p.add_argument("--window", type=float, default=20.0, help="region radius in local scales")

    p = add("jensen", cmd_jensen, "Jensen diagnostic for the ring product")
    weighted(p)
    p.add_argument("--r", default="0.9", help="comma-separated radii")
    p.add_argument("--min-count", type=int, default=1021)

    p = add("index-demo", cmd_index_demo, "Lambda_d densities and the |g(0)| bound")
    weighted(p, rings=False)
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--d", default="0,1,2")
    p.add_argument("--R", type=float, default=20.0)
    p.add_argument("--k-lo", type=int, default=30)
    p.add_argument("--k-hi", type=int, default=45)
    p.add_argument("--ensemble", type=int, default=100)
    p.add_argument("--literal", action="store_true")
    return ap


def run(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
        if args.threads < 1:
            ap.error("--threads must be at least 1")
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        sys.stderr.write(f"radweight: {exc}\n")
        return EXIT_USAGE
    except (wmod.WeightError, atomize.AtomizeError, peaks.PeakError) as exc:
        sys.stderr.write(f"radweight: {type(exc).__name__}: {exc}\n")
        return EXIT_VIOLATION
    except Exception as exc:  # noqa: BLE001
        sys.stderr.write(f"radweight: error: {exc}\n")
        return EXIT_ERROR


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
