"""Command line entry point: ``cubeval {eval,iou,bench,stats,losses}``.

Exit codes: 0 success, 1 usage error, 2 bad input file, 3 internal error.
The worker thread count defaults to the ``CUBEVAL_THREADS`` environment
variable, then to the CPU count.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from cubeval import camera, dataset
from cubeval.errors import CubevalError, SchemaError
from cubeval.evaluation import ALL, APReport, EvalConfig, bands_from_cutoffs, default_thresholds, evaluate, threshold_grid
from cubeval.geometry import CubeParams, Roi2D
from cubeval.intersect import exact, iou3d_approx_groundplane, mc_iou_oracle
from cubeval.losses import DecodeContext, loss_breakdown
from cubeval.synthetic import random_cuboids

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_INTERNAL = 0, 1, 2, 3

log = logging.getLogger("cubeval")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def fmt(x) -> str:
    """Shortest repr that round-trips (at most 17 significant digits); empty for missing."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_csv(rows, header=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if header:
        w.writerow(header)
    for row in rows:
        w.writerow([v if isinstance(v, str) else fmt(v) for v in row])
    return buf.getvalue()


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, default=_json_default, allow_nan=False) + "\n"


def _emit(text: str, output: str | None) -> None:
    if output:
        Path(output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


# eval ---------------------------------------------------------------------

EVAL_CSV_HEADER = ("category", "tau", "band", "ap", "n_gt", "n_ignored", "n_pred", "n_tp")


def eval_csv(report: APReport) -> str:
    return write_csv(report.csv_rows(), EVAL_CSV_HEADER)


def eval_table(report: APReport) -> str:
    cols = ["AP3D", "AP3D_25", "AP3D_50", *(f"AP3D_{b}" for b in report.config.bands)]
    lines = ["category".ljust(20) + "".join(c.rjust(13) for c in cols)]

    def cell(v):
        return ("-" if v is None else f"{v:.4f}").rjust(13)

    for name, res in sorted(report.categories.items()):
        t = report.config.thresholds
        vals = [res.mean_ap(ALL, t), res.ap[ALL][0.25], res.ap[ALL][0.5], *(res.mean_ap(b, t) for b in report.config.bands)]
        lines.append(name[:19].ljust(20) + "".join(cell(v) for v in vals))
    summary = report.summary()
    lines.append("mean".ljust(20) + "".join(cell(summary[c]) for c in cols))
    return "\n".join(lines) + "\n"


def eval_config_from_args(args) -> EvalConfig:
    if args.bands:
        try:
            near, far = (float(x) for x in args.bands.split(","))
        except ValueError:
            raise UsageError("--bands expects two cutoffs, e.g. 10,35") from None
    try:
        taus = default_thresholds()
        if args.tau_min is not None or args.tau_max is not None or args.tau_step is not None:
            taus = threshold_grid(
                0.05 if args.tau_min is None else args.tau_min,
                0.50 if args.tau_max is None else args.tau_max,
                0.05 if args.tau_step is None else args.tau_step,
            )
        kwargs = {"thresholds": taus}
        if args.bands:
            kwargs["bands"] = bands_from_cutoffs(near, far)
        return EvalConfig(**kwargs)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_eval(args) -> int:
    config = eval_config_from_args(args)
    gt = dataset.load(args.gt)
    preds = dataset.load_predictions(args.pred)
    report = evaluate(preds, gt.gt_records(), config, categories=gt.categories.keys(), threads=args.threads)
    if args.output:
        out = Path(args.output)
        if args.format in ("json", "both"):
            out.with_suffix(".json").write_text(dump_json(report.to_dict()), encoding="utf-8")
        if args.format in ("csv", "both"):
            out.with_suffix(".csv").write_text(eval_csv(report), encoding="utf-8")
    sys.stdout.write(eval_table(report))
    return EXIT_OK


# iou ----------------------------------------------------------------------


def cmd_iou(args) -> int:
    a = dataset.load_boxes(args.boxes_a)
    b = dataset.load_boxes(args.boxes_b)
    if args.approx:
        mat = np.array([[iou3d_approx_groundplane(x, y) for y in b] for x in a]).reshape(len(a), len(b))
    else:
        mat = exact.iou3d_batched(a, b, threads=args.threads)
    if args.oracle:
        rows = []
        for i in range(len(a)):
            for j in range(len(b)):
                est, se = mc_iou_oracle(a[i], b[j], args.oracle, seed=args.seed + i * len(b) + j)
                rows.append((i, j, mat[i, j], est, se))
        text = write_csv(rows, ("row", "col", "iou", "mc_iou", "mc_stderr"))
    else:
        text = write_csv(mat.tolist())
    _emit(text, args.output)
    return EXIT_OK


# bench --------------------------------------------------------------------


def _timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


def bench(n_pairs: int, threads: int, seed: int, oracle_samples: int = 10_000, subset: int = 256) -> dict:
    n = max(1, math.isqrt(n_pairs))
    m = max(1, n_pairs // n)
    boxes_a = random_cuboids(n, seed=seed)
    boxes_b = random_cuboids(m, seed=seed + 1)
    pa, pb = exact.pack(boxes_a), exact.pack(boxes_b)
    exact.iou3d_packed(exact.pack(boxes_a[:1]), exact.pack(boxes_b[:1]), threads=1)  # JIT warm-up
    single, t1 = _timed(lambda: exact.iou3d_packed(pa, pb, threads=1))
    multi, tt = _timed(lambda: exact.iou3d_packed(pa, pb, threads=threads))
    pairs = [(boxes_a[k % n], boxes_b[(k // n) % m]) for k in range(min(subset, n * m))]
    _, ta = _timed(lambda: [iou3d_approx_groundplane(x, y) for x, y in pairs])
    n_oracle = max(1, min(16, len(pairs)))
    _, to = _timed(lambda: [mc_iou_oracle(x, y, oracle_samples, seed) for x, y in pairs[:n_oracle]])
    return {
        "seed": seed,
        "shape": [n, m],
        "n_pairs": n * m,
        "exact_1_thread": {"seconds": t1, "pairs_per_sec": n * m / t1},
        "exact_threads": {"threads": threads, "seconds": tt, "pairs_per_sec": n * m / tt},
        "speedup": t1 / tt,
        "identical_across_threads": bool(np.array_equal(single, multi)),
        "approx": {"pairs": len(pairs), "seconds": ta, "pairs_per_sec": len(pairs) / ta},
        "oracle": {"pairs": n_oracle, "samples": oracle_samples, "seconds": to, "pairs_per_sec": n_oracle / to},
        "iou_sha256": hashlib.sha256(single.tobytes()).hexdigest(),
        "iou_mean": float(single.mean()),
    }


def cmd_bench(args) -> int:
    threads = args.threads or exact.default_threads()
    report = bench(args.n_pairs, threads, args.seed, args.oracle_samples)
    _emit(dump_json(report), args.output)
    return EXIT_OK


# stats --------------------------------------------------------------------


def cmd_stats(args) -> int:
    ds = dataset.load(args.dataset)
    config = dataset.StatsConfig(grid=args.grid, depth_range=tuple(args.depth_range), x_range=tuple(args.x_range))
    if not config.depth_range[0] < config.depth_range[1] or not config.x_range[0] < config.x_range[1]:
        raise UsageError("ranges must be increasing")
    report = dataset.stats(ds, config)
    if args.output:
        out = Path(args.output)
        out.with_suffix(".json").write_text(dump_json(report.to_dict()), encoding="utf-8")
        stem = out.with_suffix("")
        Path(f"{stem}_center.csv").write_text(write_csv(report.center_hist.astype(int).tolist()), encoding="utf-8")
        Path(f"{stem}_xz.csv").write_text(write_csv(report.xz_hist.astype(int).tolist()), encoding="utf-8")
        Path(f"{stem}_size.csv").write_text(
            write_csv(enumerate(report.size_hist.astype(int).tolist()), ("bin", "count")), encoding="utf-8"
        )
    else:
        sys.stdout.write(dump_json(report.to_dict()))
    print(
        f"annotations={report.n_annotations} corr(y_norm,z)={fmt(report.corr_y_z) or 'n/a'} "
        f"corr(rel_size,z)={fmt(report.corr_size_z) or 'n/a'}",
        file=sys.stderr if not args.output else sys.stdout,
    )
    return EXIT_OK


# losses -------------------------------------------------------------------

_PARAM_KEYS = ("u", "v", "z", "w_bar", "h_bar", "l_bar", "p")


def _params(obj, where) -> CubeParams:
    if not isinstance(obj, dict) or any(k not in obj for k in _PARAM_KEYS):
        raise SchemaError(f"{where}: expected keys {list(_PARAM_KEYS)} (+ optional mu)")
    try:
        return CubeParams(*(obj[k] for k in _PARAM_KEYS), mu=float(obj.get("mu", 0.0)))
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"{where}: {exc}") from None


def cmd_losses(args) -> int:
    data = dataset.read_json(args.pairs)
    try:
        k = data["intrinsics"]
        K = camera.Intrinsics(k["fx"], k["fy"], k["px"], k["py"], k["height"], k["width"])
        priors = {name: tuple(v) for name, v in data["priors"].items()}
        pairs = data["pairs"]
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"losses file: {exc}") from None
    rows = []
    for i, pair in enumerate(pairs):
        where = f"pairs[{i}]"
        try:
            ctx = DecodeContext(Roi2D(*pair["roi"]), K, priors, pair["category"])
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"{where}: {exc}") from None
        lb = loss_breakdown(_params(pair.get("pred"), where + ".pred"), _params(pair.get("gt"), where + ".gt"), ctx)
        rows.append((i, *lb.to_dict().values()))
    _emit(write_csv(rows, ("pair", "l_all", "l_uv", "l_z", "l_whl", "l_pose", "mu", "total")), args.output)
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cubeval", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def threads(sp):
        sp.add_argument("--threads", type=int, default=None, help="worker threads (default: $CUBEVAL_THREADS or CPU count)")

    e = sub.add_parser("eval", help="mean AP3D of predictions against ground truth")
    e.add_argument("gt")
    e.add_argument("pred")
    e.add_argument("--output", help="report path; .json/.csv suffixes are substituted")
    e.add_argument("--format", choices=("json", "csv", "both"), default="both")
    e.add_argument("--tau-min", type=float)
    e.add_argument("--tau-max", type=float)
    e.add_argument("--tau-step", type=float)
    e.add_argument("--bands", help="near,far depth cutoffs in meters (default 10,35)")
    threads(e)
    e.set_defaults(func=cmd_eval)

    i = sub.add_parser("iou", help="pairwise IoU matrix of two box lists")
    i.add_argument("boxes_a")
    i.add_argument("boxes_b")
    i.add_argument("--approx", action="store_true", help="ground-plane approximation instead of exact IoU")
    i.add_argument("--oracle", type=int, default=0, metavar="N", help="add Monte-Carlo estimates with N samples")
    i.add_argument("--seed", type=int, default=0)
    i.add_argument("--output")
    threads(i)
    i.set_defaults(func=cmd_iou)

    b = sub.add_parser("bench", help="throughput of the IoU kernels")
    b.add_argument("--n-pairs", type=int, default=16384)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--oracle-samples", type=int, default=10_000)
    b.add_argument("--output")
    threads(b)
    b.set_defaults(func=cmd_bench)

    s = sub.add_parser("stats", help="spatial and category statistics of a dataset file")
    s.add_argument("dataset")
    s.add_argument("--depth-range", type=float, nargs=2, default=(0.0, 20.0), metavar=("MIN", "MAX"))
    s.add_argument("--x-range", type=float, nargs=2, default=(-10.0, 10.0), metavar=("MIN", "MAX"))
    s.add_argument("--grid", type=int, default=64)
    s.add_argument("--output", help="report path; writes .json plus _center/_xz/_size CSVs")
    s.set_defaults(func=cmd_stats)

    lo = sub.add_parser("losses", help="3D loss breakdown for predicted vs ground-truth cube parameters")
    lo.add_argument("pairs")
    lo.add_argument("--output")
    lo.set_defaults(func=cmd_losses)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "threads", None) is not None and args.threads < 1:
        print("cubeval: error: --threads must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"cubeval: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SchemaError, OSError) as exc:
        print(f"cubeval: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except CubevalError as exc:
        print(f"cubeval: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        print(f"cubeval: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
