"""Command-line interface.

Subcommands: ``geodesic``, ``curvature-scan``, ``curve-geodesic``,
``distance`` and ``submersion-verify``. Exit codes are stable:

====  =========================================================
0     success
1     usage error (bad flags, malformed input, invalid dimensions)
2     rank deficiency, non-SPD input or non-immersed curve
3     time at or beyond a blow-up
4     shooting did not converge
5     a verification check failed
====  =========================================================

Errors are reported on stderr as a single JSON object. Floats are written
with 17 significant digits so they round-trip. Files are written to a
temporary name in the target directory and renamed into place.
"""

import argparse
import csv
import io
import json
import os
import sys
import tempfile

import numpy as np

from . import forms as F
from .curvature import curvature_scan
from .errors import (BeyondBlowup, GeometryError, NoConvergence, NotImmersed, NotSPD,
                     RankDeficient, RankLossAt)
from .geodesics import eval_geodesic, geodesic_length, integrate_numeric, shoot_bvp, solve_ivp
from .linalg import matrix_from_json, matrix_to_json
from .metric import Frame
from .submersion import verify_submersion

EXIT_OK, EXIT_USAGE, EXIT_RANK, EXIT_BLOWUP, EXIT_NOCONV, EXIT_CHECK = 0, 1, 2, 3, 4, 5


class UsageError(Exception):
    pass


def fmt(x):
    return "%.17g" % x


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    raise TypeError(f"cannot encode {type(obj).__name__}")


def _round_trip(obj):
    """Replace floats by their 17-digit representation before dumping."""
    if isinstance(obj, dict):
        return {k: _round_trip(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_trip(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _round_trip(obj.tolist())
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if not np.isfinite(x) else float(fmt(x))
    return obj


def dumps(obj):
    return json.dumps(_round_trip(obj), default=_json_default, sort_keys=True)


def write_atomic(path, text):
    """Write ``text`` to ``path`` via a temporary file and :func:`os.replace`."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def emit(text, path):
    if path is None:
        sys.stdout.write(text)
    else:
        write_atomic(path, text)


def csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(x) if isinstance(x, (float, np.floating)) else x for x in row])
    return buf.getvalue()


def read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as err:
        raise UsageError(f"cannot read JSON from {path}: {err}") from err


def parse_t_grid(spec, default=(0.0, 1.0, 11)):
    """``start:stop:num`` (inclusive linspace) or a comma-separated list."""
    if spec is None:
        start, stop, num = default
        return np.linspace(start, stop, num)
    try:
        if ":" in spec:
            start, stop, num = spec.split(":")
            grid = np.linspace(float(start), float(stop), int(num))
        else:
            grid = np.array([float(x) for x in spec.split(",")])
    except ValueError as err:
        raise UsageError(f"bad --t-grid {spec!r}") from err
    if grid.size == 0 or np.any(grid < 0) or np.any(np.diff(grid) <= 0) or not np.all(np.isfinite(grid)):
        raise UsageError("--t-grid must be nonnegative and strictly increasing")
    return grid


def read_curve_csv(path):
    """Read a curve or vector field stored as ``theta, x1..xn``."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as err:
        raise UsageError(f"cannot read {path}: {err}") from err
    if len(rows) < 2 or rows[0][0].strip() != "theta":
        raise UsageError(f"{path}: expected a header starting with 'theta'")
    try:
        data = np.array([[float(x) for x in r] for r in rows[1:] if r], dtype=float)
    except ValueError as err:
        raise UsageError(f"{path}: {err}") from err
    if data.ndim != 2 or data.shape[1] != len(rows[0]) or data.shape[1] < 2:
        raise UsageError(f"{path}: ragged or empty table")
    return data[:, 0], data[:, 1:]


def curve_csv(nodes, points):
    header = ["theta"] + [f"x{i + 1}" for i in range(points.shape[1])]
    return csv_text(header, ([t, *p] for t, p in zip(nodes, points)))


def form_from_json(obj):
    """Decode a list of ``{"theta", "weight", "matrix"}`` records."""
    if not isinstance(obj, list) or not obj:
        raise UsageError("a one-form must be a nonempty JSON array")
    try:
        nodes = np.array([float(r["theta"]) for r in obj])
        weights = np.array([float(r["weight"]) for r in obj])
        values = np.array([matrix_from_json(r["matrix"]) for r in obj])
    except (KeyError, TypeError, ValueError) as err:
        raise UsageError(f"malformed one-form: {err}") from err
    return F.DiscreteOneForm(nodes, values, weights)


def form_to_json(alpha):
    return [{"theta": float(t), "weight": float(w), "matrix": matrix_to_json(v)}
            for t, w, v in zip(alpha.nodes, alpha.weights, alpha.values)]


# -- commands ---------------------------------------------------------------


def cmd_geodesic(args):
    data = read_json(args.input)
    try:
        a0, u0 = matrix_from_json(data["a0"]), matrix_from_json(data["u0"])
    except (KeyError, TypeError, ValueError) as err:
        raise UsageError(f"geodesic input needs matrices a0 and u0: {err}") from err
    times = parse_t_grid(args.t_grid)
    sol = solve_ivp(a0, u0)
    rows = []
    for t in times:
        a, _ = eval_geodesic(sol, float(t), frame=False)
        rows.append([float(t), *a.ravel()])
    n, m = a0.shape
    header = ["t"] + [f"a{i + 1}_{j + 1}" for i in range(n) for j in range(m)]
    emit(csv_text(header, rows), args.output)
    summary = {"blowup": sol.blowup, "points": len(times)}
    if args.verify:
        T = float(times[-1])
        if T <= 0:
            raise UsageError("--verify needs a positive final time")
        path = integrate_numeric(a0, u0, T, args.steps)
        dev = max(float(np.abs(eval_geodesic(sol, float(t), frame=False)[0] - f.mat).max())
                  for t, f in zip(path.times, path.frames))
        summary["max_deviation"] = dev
        summary["steps"] = args.steps
    _summary(summary, args)
    return EXIT_OK


def _summary(summary, args):
    text = dumps(summary) + "\n"
    if args.output is None:
        sys.stderr.write(text)
    else:
        sys.stdout.write(text)
    if getattr(args, "summary", None):
        write_atomic(args.summary, text)


def cmd_curvature_scan(args):
    if args.m is None or args.n is None:
        raise UsageError("--m and --n are required")
    if not 1 <= args.m <= args.n or args.m * args.n < 2:
        raise UsageError(f"need 1 <= m <= n and n*m >= 2, got m = {args.m}, n = {args.n}")
    if args.samples < 1 or args.bins < 1:
        raise UsageError("--samples and --bins must be positive")
    hist = curvature_scan(args.m, args.n, args.samples, bins=args.bins, seed=args.seed,
                          workers=args.workers, law=args.law)
    rows = [(float(lo), float(hi), int(c)) for lo, hi, c in zip(hist.bin_edges[:-1], hist.bin_edges[1:], hist.counts)]
    emit(csv_text(["bin_left", "bin_right", "count"], rows), args.output)
    _summary({"m": hist.m, "n": hist.n, "samples": hist.samples, "seed": hist.seed,
              "positive_fraction": hist.positive_fraction, "redraws": hist.redraws, "law": hist.law,
              "min": hist.min_value, "max": hist.max_value}, args)
    return EXIT_OK


def cmd_curve_geodesic(args):
    nodes, points = read_curve_csv(args.input)
    if args.tangent is None:
        raise UsageError("--tangent is required")
    hn, h = read_curve_csv(args.tangent)
    if hn.shape != nodes.shape or not np.allclose(hn, nodes, rtol=0, atol=1e-14) or h.shape != points.shape:
        raise UsageError("tangent field must be sampled on the curve's nodes")
    if args.output is None:
        raise UsageError("--output (a directory) is required")
    c0 = F.DiscreteCurve(nodes, points)
    sol = F.solve_curve_geodesic(c0, h)
    times = parse_t_grid(args.t_grid)
    files = []
    for k, t in enumerate(times):
        c = F.curve_geodesic(c0, h, float(t), solution=sol)
        name = f"curve_{k:04d}.csv"
        write_atomic(os.path.join(args.output, name), curve_csv(c.nodes, c.points))
        files.append({"t": float(t), "file": name})
    index = {"blowup": sol.blowup, "blowup_node": sol.blowup_node, "samples": files}
    write_atomic(os.path.join(args.output, "index.json"), dumps(index) + "\n")
    sys.stdout.write(dumps(index) + "\n")
    return EXIT_OK


def _load_pair(args):
    if args.other is None:
        raise UsageError("--other is required")
    return read_json(args.input), read_json(args.other)


def cmd_distance(args):
    x, y = _load_pair(args)
    def is_form(obj):
        return isinstance(obj, list) and bool(obj) and all(isinstance(r, dict) for r in obj)

    if not is_form(x) and not is_form(y):
        try:
            a0, a1 = Frame(matrix_from_json(x)), Frame(matrix_from_json(y))
        except (KeyError, TypeError) as err:
            raise UsageError(f"malformed matrix: {err}") from err
        if a0.shape != a1.shape:
            raise UsageError("matrices must have the same shape")
        u0, res = shoot_bvp(a0, a1, max_iter=args.max_iter, tol=args.tol)
        result = {"length": geodesic_length(a0, u0), "lower": F.pointwise_volume_bound(a0, a1),
                  "upper": F.pointwise_upper_bound(a0, a1), "residual": res, "u0": matrix_to_json(u0)}
    else:
        alpha, beta = form_from_json(x), form_from_json(y)
        if not np.array_equal(alpha.nodes, beta.nodes) or alpha.shape != beta.shape:
            raise UsageError("one-forms must share nodes and matrix shape")
        b = F.distance_bounds(alpha, beta, max_iter=args.max_iter, tol=args.tol)
        result = {"lower": b.lower, "upper": b.upper, "volume_lower": b.volume_lower,
                  "partial": b.partial,
                  "node_lengths": [None if not np.isfinite(d) else float(d) for d in b.node_lengths]}
    emit(dumps(result) + "\n", args.output)
    return EXIT_OK


def cmd_submersion_verify(args):
    report = verify_submersion(seed=args.seed, samples=args.samples if args.samples is not None else 100)
    report["seed"] = args.seed
    emit(dumps(report) + "\n", args.output)
    return EXIT_OK if report["passed"] else EXIT_CHECK


# -- parser -----------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="oneforms", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, input_required=True):
        if input_required:
            sp.add_argument("--input", required=True, help="input file")
        sp.add_argument("--output", help="output file (stdout when omitted)")
        sp.add_argument("--seed", type=int, default=0)

    g = sub.add_parser("geodesic", help="closed-form geodesic from JSON {a0, u0}, written as CSV")
    common(g)
    g.add_argument("--t-grid", help="start:stop:num or comma list (default 0:1:11)")
    g.add_argument("--verify", action="store_true", help="cross-check against RK4")
    g.add_argument("--steps", type=int, default=1000, help="RK4 steps for --verify")
    g.add_argument("--summary", help="also write the JSON summary here")
    g.set_defaults(func=cmd_geodesic)

    s = sub.add_parser("curvature-scan", help="histogram of sectional curvatures of random planes")
    common(s, input_required=False)
    s.add_argument("--m", type=int)
    s.add_argument("--n", type=int)
    s.add_argument("--samples", type=int, default=100000)
    s.add_argument("--bins", type=int, default=200)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--law", choices=("gaussian", "uniform"), default="gaussian",
                   help="entry distribution of a, u, v")
    s.add_argument("--summary", help="also write the JSON summary here")
    s.set_defaults(func=cmd_curvature_scan)

    c = sub.add_parser("curve-geodesic", help="geodesic of curves modulo translation")
    common(c)
    c.add_argument("--tangent", help="CSV with the initial vector field h (theta, x1..xn)")
    c.add_argument("--t-grid", help="start:stop:num or comma list (default 0:1:11)")
    c.set_defaults(func=cmd_curve_geodesic)

    d = sub.add_parser("distance", help="distance bounds between two matrices or two one-forms")
    common(d)
    d.add_argument("--other", help="second matrix or one-form (JSON)")
    d.add_argument("--max-iter", type=int, default=50)
    d.add_argument("--tol", type=float, default=1e-10)
    d.set_defaults(func=cmd_distance)

    v = sub.add_parser("submersion-verify", help="check the submersion invariants on random data")
    common(v, input_required=False)
    v.add_argument("--samples", type=int)
    v.set_defaults(func=cmd_submersion_verify)
    return p


def _fail(code, kind, message, **extra):
    sys.stderr.write(dumps({"error": kind, "message": message, "exit_code": code, **extra}) + "\n")
    return code


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    for name in ("steps", "samples", "bins", "workers", "max_iter"):
        val = getattr(args, name, None)
        if val is not None and val < 1:
            return _fail(EXIT_USAGE, "UsageError", f"--{name.replace('_', '-')} must be positive")
    if getattr(args, "tol", 1.0) <= 0:
        return _fail(EXIT_USAGE, "UsageError", "--tol must be positive")
    try:
        return args.func(args)
    except UsageError as err:
        return _fail(EXIT_USAGE, "UsageError", str(err))
    except BeyondBlowup as err:
        return _fail(EXIT_BLOWUP, "BeyondBlowup", str(err), blowup=err.blowup, node=err.node)
    except RankLossAt as err:
        return _fail(EXIT_BLOWUP, "RankLossAt", str(err), time=err.time)
    except NotImmersed as err:
        return _fail(EXIT_RANK, "NotImmersed", str(err), node=err.node)
    except (RankDeficient, NotSPD) as err:
        return _fail(EXIT_RANK, type(err).__name__, str(err))
    except NoConvergence as err:
        return _fail(EXIT_NOCONV, "NoConvergence", str(err), residual=err.residual)
    except (GeometryError, ValueError) as err:
        return _fail(EXIT_USAGE, type(err).__name__, str(err))


if __name__ == "__main__":
    sys.exit(main())
