"""Command-line harness for the synthetic experiments.

Subcommands: synth, calibrate, sweep-noise, error-dist, track, bench.
Exit codes: 0 success, 1 usage or I/O error, 2 solver failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from .errors import SolverError
from .experiments import (
    ERROR_DIST_COLUMNS,
    SWEEP_COLUMNS,
    TRACK_K_COLUMNS,
    TRACK_PATH_COLUMNS,
    calibrate_dataset,
    emit_report,
    run_bench,
    run_error_dist,
    run_sweep_noise,
    run_track,
)
from .synthetic import (
    SceneConfig,
    SyntheticDataset,
    TrackConfig,
    add_noise,
    add_outliers,
    generate_scene,
    generate_track,
)

USAGE_ERROR, SOLVER_FAILURE = 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def _build_parser():
    parser = _Parser(prog="sixpoint", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic dataset JSON")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--noise-px", type=float, default=0.0)
    p.add_argument("--outlier-rate", type=float, default=0.0)
    p.add_argument("--track", action="store_true",
                   help="generate a circular camera track instead of a "
                        "3-view 6-point scene")
    p.add_argument("--cameras", type=int, default=20)
    p.add_argument("--points", type=int, default=150)
    p.add_argument("--radius", type=float, default=1.0)

    p = sub.add_parser("calibrate", help="auto-calibrate a stored dataset")
    p.add_argument("--in", dest="path_in", required=True)
    p.add_argument("--out", default=None, help="result JSON (default stdout)")

    p = sub.add_parser("sweep-noise", help="median errors over a noise grid")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--levels", default="0,0.25,0.5,0.75,1.0")
    p.add_argument("--out", required=True, help="CSV path")
    p.add_argument("--report", default=None, help="JSON report path")

    p = sub.add_parser("error-dist", help="per-trial numerical error table")
    p.add_argument("--trials", type=int, default=10000)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--noise-px", type=float, default=0.0)
    p.add_argument("--out", required=True, help="CSV path")
    p.add_argument("--report", default=None, help="JSON report path")

    p = sub.add_parser("track", help="robust sliding-window sequence run")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--cameras", type=int, default=20)
    p.add_argument("--points", type=int, default=150)
    p.add_argument("--outlier-rate", type=float, default=0.2)
    p.add_argument("--noise-px", type=float, default=1.0)
    p.add_argument("--hypotheses", type=int, default=200)
    p.add_argument("--block", type=int, default=50)
    p.add_argument("--out-k", required=True, help="per-window K CSV")
    p.add_argument("--out-track", required=True, help="camera track CSV")
    p.add_argument("--report", default=None, help="JSON report path")

    p = sub.add_parser("bench", help="per-stage timing medians (indicative)")
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="JSON path (default stdout)")
    return parser


def _cmd_synth(ns):
    if ns.track:
        cfg = TrackConfig(n_cameras=ns.cameras, n_points=ns.points,
                          circle_radius=ns.radius,
                          outlier_rate=ns.outlier_rate, noise_px=ns.noise_px)
        ds = generate_track(cfg, ns.seed)
        width, height = cfg.image_width, cfg.image_height
    else:
        cfg = SceneConfig()
        ds = generate_scene(cfg, ns.seed)
        width, height = cfg.image_width, cfg.image_height
    if ns.noise_px > 0:
        ds = add_noise(ds, ns.noise_px, ns.seed, stream=10_000_000)
    if ns.outlier_rate > 0:
        ds = add_outliers(ds, ns.outlier_rate, ns.seed, stream=12_000_000,
                          image_width=width, image_height=height)
    ds.save_json(ns.out)
    print(f"wrote {ns.out}")
    return 0


def _cmd_calibrate(ns):
    try:
        ds = SyntheticDataset.load_json(ns.path_in)
    except (OSError, ValueError, KeyError, TypeError, json.JSONDecodeError) as exc:
        print("could not read dataset:", exc, file=sys.stderr)
        print("expected schema: {version, seed, K, cameras:[{R,t}], points,",
              "observations:[[view,point,u,v]], outlier_mask, noise_px}",
              file=sys.stderr)
        return USAGE_ERROR
    try:
        candidates = calibrate_dataset(ds)
    except ValueError as exc:
        print(str(exc), file=sys.stderr)
        return USAGE_ERROR
    if not candidates:
        print("solver produced no calibration candidates", file=sys.stderr)
        return SOLVER_FAILURE
    payload = {"candidates": candidates, "best": candidates[0]}
    text = json.dumps(payload, sort_keys=True, default=float)
    if ns.out:
        with open(ns.out, "w") as fh:
            fh.write(text + "\n")
        print(f"wrote {ns.out}")
    else:
        print(text)
    return 0


def _cmd_sweep(ns):
    levels = tuple(float(x) for x in ns.levels.split(","))
    report = run_sweep_noise(ns.trials, ns.seed, levels)
    rows = [tuple(level[c] for c in SWEEP_COLUMNS) for level in report.records]
    emit_report(report, json_path=ns.report,
                csv_specs=[(ns.out, SWEEP_COLUMNS, rows)])
    print(f"wrote {ns.out}")
    return 0


def _cmd_error_dist(ns):
    report = run_error_dist(ns.trials, ns.seed, noise_px=ns.noise_px)
    rows = []
    for r in report.records:
        if r["ok"]:
            rows.append((float(r["trial"]), r["k_err"], r["rot2_deg"],
                         r["rot3_deg"], r["dir2_deg"], r["dir3_deg"]))
        else:
            rows.append((float(r["trial"]), "", "", "", "", ""))
    emit_report(report, json_path=ns.report,
                csv_specs=[(ns.out, ERROR_DIST_COLUMNS, rows)])
    med = report.summary["k_err_median"]
    print(f"wrote {ns.out} (median k_err: "
          f"{'n/a' if med is None else format(med, '.3e')})")
    return 0


def _cmd_track(ns):
    report, k_rows, path_rows = run_track(
        ns.seed, n_cameras=ns.cameras, n_points=ns.points,
        outlier_rate=ns.outlier_rate, noise_px=ns.noise_px,
        n_hypotheses=ns.hypotheses, block_size=ns.block)
    emit_report(report, json_path=ns.report,
                csv_specs=[(ns.out_k, TRACK_K_COLUMNS, k_rows),
                           (ns.out_track, TRACK_PATH_COLUMNS, path_rows)])
    print(f"wrote {ns.out_k} and {ns.out_track}")
    return 0


def _cmd_bench(ns):
    report = run_bench(ns.trials, ns.seed)
    text = json.dumps(report.to_json_dict(), sort_keys=True, default=float)
    if ns.out:
        with open(ns.out, "w") as fh:
            fh.write(text + "\n")
        print(f"wrote {ns.out}")
    else:
        print(text)
    summary = report.summary
    print(f"projective (median): {summary['projective_us_median']:.1f} us; "
          f"metric per root (median): {summary['metric_per_root_us_median']:.1f} us; "
          f"full solve (median): {summary['full_ms_median']:.2f} ms "
          f"[indicative]")
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "calibrate": _cmd_calibrate,
    "sweep-noise": _cmd_sweep,
    "error-dist": _cmd_error_dist,
    "track": _cmd_track,
    "bench": _cmd_bench,
}


def dispatch(argv):
    """Run one CLI invocation; returns the process exit code."""
    parser = _build_parser()
    try:
        ns = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    try:
        return _COMMANDS[ns.command](ns)
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return SOLVER_FAILURE


def main():
    return dispatch(sys.argv[1:])


if __name__ == "__main__":
    sys.exit(main())
