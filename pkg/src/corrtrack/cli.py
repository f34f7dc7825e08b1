"""Command-line entry point: ``corrtrack {track,eval,bench,gradcheck,scenario}``.

Exit codes: 0 success, 1 check failure, 2 missing input, 3 parse error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from . import bench as bench_mod
from . import gradcheck as gradcheck_mod
from .errors import CorrTrackError, ParseError
from .io_formats import (
    crossing_scenario,
    format_scenario_config,
    generate_scenario,
    parse_mot_file,
    parse_scenario_config,
    read_features,
    write_features,
    write_mot_detections,
    write_mot_results,
    ScenarioSpec,
)
from .metrics import evaluate_sequences, metrics_to_csv, metrics_to_json
from .tracker import Tracker, TrackerConfig, detections_from_rows, track_sequence

EXIT_OK, EXIT_CHECK, EXIT_MISSING, EXIT_PARSE = 0, 1, 2, 3


class InputMissing(Exception):
    pass


def _read_text(path) -> str:
    p = Path(path)
    if not p.is_file():
        raise InputMissing(f"no such file: {path}")
    return p.read_text()


def _read_rows(path):
    return parse_mot_file(_read_text(path).splitlines())


def _int_list(text: str) -> list[int]:
    """``"1-8"``, ``"1,3,5"`` or a mix such as ``"1-3,7"``."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part:
            lo, hi = part.split("-")
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    return out


def _sizes(text: str) -> list[tuple[int, int]]:
    out = []
    for part in text.split(","):
        h, w = part.lower().split("x")
        out.append((int(h), int(w)))
    return out


def cmd_track(args) -> int:
    rows = _read_rows(args.dets)
    features = read_features(_read_text(args.features).splitlines()) if args.features else None
    cfg = TrackerConfig(alpha=args.alpha, tau_loss=args.tau_loss, ema_beta=args.ema_beta,
                        gate=args.gate, min_confidence=args.min_conf)
    tracker = Tracker(cfg)
    t0 = time.perf_counter()
    results = track_sequence(detections_from_rows(rows, features), tracker=tracker)
    elapsed = time.perf_counter() - t0
    Path(args.out).write_text(write_mot_results(results))
    summary = {
        "frames": len({r.frame for r in rows}),
        "detections": len(rows),
        "rejected_rows": len(rows.rejected),
        "result_rows": len(results),
        "tracks_created": tracker.created,
        "tracks_removed": len(tracker.removed),
        "wall_time_s": round(elapsed, 6),
    }
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def cmd_eval(args) -> int:
    gt = _read_rows(args.gt)
    res = _read_rows(args.res)
    name = Path(args.res).stem
    overall, per = evaluate_sequences({name: (gt, res)}, args.iou_threshold)
    if args.format == "csv":
        sys.stdout.write(metrics_to_csv(overall))
    else:
        sys.stdout.write(metrics_to_json(overall, per))
    return EXIT_OK


def cmd_bench(args) -> int:
    radii = _int_list(args.radius) if args.radius else [5]
    channels = args.channels
    ops = {"local": ["local_correlation"], "nonlocal": ["non_local"],
           "both": ["local_correlation", "non_local"]}[args.operator]
    rows = []
    for h, w in _sizes(args.sizes):
        for op in ops:
            if op == "local_correlation":
                rows += bench_mod.bench_operator(op, [(h, w, channels, r) for r in radii],
                                                 args.repeats, args.seed, dilation=args.dilation or 1)
            else:
                # radius does not affect the dense volume: time once, report per radius
                (base,) = bench_mod.bench_operator(op, [(h, w, channels, radii[0])], args.repeats, args.seed)
                rows += [bench_mod.BenchRow(**{**base.__dict__, "r": r}) for r in radii]
    text = bench_mod.rows_to_csv(rows, with_ratios=True)
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    errors = gradcheck_mod.run_gradcheck(seed=args.seed, radius=args.radius if args.radius is not None else 1,
                                         dilation=args.dilation or 1, levels=args.levels)
    failed = [name for name, err in errors.items() if not err < gradcheck_mod.TOLERANCE]
    report = {
        "seed": args.seed,
        "tolerance": gradcheck_mod.TOLERANCE,
        "max_relative_error": errors,
        "failed": failed,
    }
    print(json.dumps(report, sort_keys=True))
    if failed:
        print(f"gradient check failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


def cmd_scenario(args) -> int:
    if args.config:
        spec = parse_scenario_config(_read_text(args.config))
    elif args.preset == "crossing":
        spec = crossing_scenario(args.feature_mode or "orthogonal", seed=args.seed)
    else:
        spec = ScenarioSpec(1, 10, ((100.0, 100.0),), ((3.0, 0.0),),
                            feature_mode=args.feature_mode or "orthogonal", seed=args.seed)
    gt, dets, feats = generate_scenario(spec)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "gt.txt").write_text(write_mot_results(gt))
    (out / "det.txt").write_text(write_mot_detections(dets))
    (out / "det_features.txt").write_text(write_features(feats))
    (out / "scenario.cfg").write_text(format_scenario_config(spec))
    print(json.dumps({"out_dir": str(out), "gt_rows": len(gt), "det_rows": len(dets)}, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="corrtrack", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("track", help="run the tracker over a detection file")
    p.add_argument("--dets", required=True)
    p.add_argument("--features", help="sidecar with one feature row per detection")
    p.add_argument("--out", required=True)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--tau-loss", type=int, default=30)
    p.add_argument("--ema-beta", type=float, default=0.1)
    p.add_argument("--gate", type=float, default=0.7)
    p.add_argument("--min-conf", type=float, default=0.4)
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("eval", help="CLEAR-MOT and IDF1 against ground truth")
    p.add_argument("--gt", required=True)
    p.add_argument("--res", required=True)
    p.add_argument("--iou-threshold", type=float, default=0.5)
    p.add_argument("--format", choices=("csv", "json"), default="json")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="time local correlation against the non-local volume")
    p.add_argument("--operator", choices=("local", "nonlocal", "both"), default="both")
    p.add_argument("--sizes", default="64x64", help="comma list of HxW")
    p.add_argument("--channels", type=int, default=8)
    p.add_argument("--radius", default="5", help='radii, e.g. "5", "1-8" or "1,3,5"')
    p.add_argument("--dilation", type=int, default=1)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("gradcheck", help="finite-difference checks of all analytic gradients")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--radius", type=int, default=1)
    p.add_argument("--dilation", type=int, default=1)
    p.add_argument("--levels", type=int, default=1)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("scenario", help="write a synthetic scene (gt, detections, features)")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--config", help="key=value scenario file")
    src.add_argument("--preset", choices=("single", "crossing"), default="crossing")
    p.add_argument("--feature-mode", choices=("orthogonal", "identical", "noisy"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_scenario)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InputMissing as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (ParseError, CorrTrackError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
