"""rmtrack command line: simulate, track, pipeline, evaluate.

Exit codes: 0 ok, 2 bad scenario/config/usage, 3 frame ranges disagree,
4 malformed input file, 5 solver capacity exceeded, 6 dangling detection id,
7 a joint solution broke an assignment constraint.
Log verbosity comes from the RMTRACK_LOG environment variable (default WARNING).
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from dataclasses import fields
from pathlib import Path

from .assoc import DetectionFormatError, group_by_frame, read_detections, write_detections
from .config import HELP, ConfigError, RunConfig
from .evaluate import FrameRangeError, evaluate_run, write_report
from .evaluate.tracking import instance_rows
from .simulate import GroundTruthLog, Scenario, ScenarioError, generate, get_preset
from .simulate.scenario import full_suite, occlusion_suite, preset_suite
from .tracker.joint import CapacityError
from .tracker.sort import ConstraintError, FrameOrderError, TrackFormatError, read_tracks, run_tracker, write_tracks
from .violate import DanglingDetectionError, assemble_etickets, read_etickets, write_etickets

log = logging.getLogger("rmtrack")

SUITES = {"presets": preset_suite, "occlusion": occlusion_suite, "full": full_suite}

EXIT_CODES = [
    (ScenarioError, 2), (ConfigError, 2),
    (FrameRangeError, 3),
    (DetectionFormatError, 4), (TrackFormatError, 4), (FrameOrderError, 4),
    (CapacityError, 5),
    (DanglingDetectionError, 6),
    (ConstraintError, 7),
]


class InputError(ValueError):
    """Unreadable or malformed input file."""


# --- config flags --------------------------------------------------------------

def add_config_args(p: argparse.ArgumentParser):
    g = p.add_argument_group("run config (flags override --config)")
    g.add_argument("--config", metavar="JSON", help="run config file; unknown keys are rejected")
    defaults = RunConfig()
    for f in fields(RunConfig):
        kind = int if f.type == "int" else float
        g.add_argument("--" + f.name.replace("_", "-"), dest=f.name, type=kind, default=None,
                       metavar=kind.__name__.upper(),
                       help=f"{HELP[f.name]} (default: {getattr(defaults, f.name)})")


def config_from_args(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    return cfg.override(**{f.name: getattr(args, f.name) for f in fields(RunConfig)})


# --- helpers -----------------------------------------------------------------

def _read_gt(path) -> GroundTruthLog:
    try:
        return GroundTruthLog.read(path)
    except (OSError, ValueError) as exc:
        raise InputError(str(exc)) from exc


def _scenarios(args) -> list[Scenario]:
    if getattr(args, "scenario", None):
        return [Scenario.load(args.scenario)]
    if getattr(args, "suite", None):
        return SUITES[args.suite]()
    try:
        return [get_preset(args.preset)]
    except KeyError:
        names = [s.name for s in full_suite()]
        raise ConfigError(f"unknown preset {args.preset!r}; choose from {', '.join(names)}") from None


def _n_frames(dets, given: int | None) -> int:
    last = max((d.frame for d in dets), default=-1)
    if given is None:
        return last + 1
    if last >= given:
        raise FrameRangeError(f"detections reach frame {last} but --n-frames is {given}")
    return given


def simulate_to(sc: Scenario, out: Path):
    out.mkdir(parents=True, exist_ok=True)
    gt, dets = generate(sc)
    gt.write(out / "gt.jsonl")
    write_detections(out / "detections.jsonl", dets)
    write_tracks(out / "gt_tracks.csv", gt.track_rows())
    return gt, dets


def run_one(gt: GroundTruthLog, dets, cfg: RunConfig, out: Path, baseline: bool, mode: str,
            figures: bool = True, check_constraints: bool = True):
    """Track, consolidate and score one sequence; writes its artifacts under ``out``.
    Every joint solution is checked against the assignment constraints."""
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    rows = run_tracker(group_by_frame(dets), _n_frames(dets, gt.n_frames), cfg, baseline=baseline,
                       check_constraints=check_constraints)
    log.info("%s: tracked %d frames in %.2fs", gt.name, gt.n_frames, time.perf_counter() - t0)
    tickets = assemble_etickets(rows, dets, cfg.triple_min_count)
    write_tracks(out / "tracks.csv", rows)
    write_etickets(out / "etickets.json", tickets)
    rep = evaluate_run(gt, rows, dets, tickets, cfg, mode)
    write_report(out / "report.json", [rep])
    if figures:
        from . import plots
        plots.plot_tracks(out / "tracks.png", instance_rows(gt.track_rows()), instance_rows(rows),
                          gt.image_w, gt.image_h, f"{gt.name}: R-M instance centres")
        plots.plot_hota_alpha(out / "hota_alpha.png", {
            "objects": (rep.tracking["alphas"], rep.tracking["hota_alpha"]),
            "R-M instances": (rep.rm_tracking["alphas"], rep.rm_tracking["hota_alpha"])})
    return rep


# --- commands ------------------------------------------------------------------

def cmd_simulate(args) -> int:
    out = Path(args.out)
    for sc in _scenarios(args):
        dest = out / sc.name if args.suite else out
        simulate_to(sc, dest)
        log.info("%s: wrote %s", sc.name, dest)
    return 0


def cmd_track(args) -> int:
    cfg = config_from_args(args)
    dets = read_detections(args.detections)
    n = _n_frames(dets, args.n_frames)
    rows = run_tracker(group_by_frame(dets), n, cfg, baseline=args.baseline)
    write_tracks(args.out, rows)
    if args.etickets:
        write_etickets(args.etickets, assemble_etickets(rows, dets, cfg.triple_min_count))
    return 0


def cmd_pipeline(args) -> int:
    cfg = config_from_args(args)
    out = Path(args.out)
    reports = []
    if args.detections:
        if not args.gt:
            raise ConfigError("--detections needs --gt")
        gt = _read_gt(args.gt)
        reports.append(run_one(gt, read_detections(args.detections), cfg, out, args.baseline,
                               args.mode, not args.no_figures))
    else:
        scenarios = _scenarios(args)
        for sc in scenarios:
            dest = out / sc.name if len(scenarios) > 1 or args.suite else out
            gt, dets = simulate_to(sc, dest)
            reports.append(run_one(gt, dets, cfg, dest, args.baseline, args.mode, not args.no_figures))
    if len(reports) > 1:
        write_report(out / "report.json", reports)
    if not args.no_figures:
        from . import plots
        plots.plot_metrics(out / "metrics.png", reports)
    return 0


def cmd_evaluate(args) -> int:
    cfg = config_from_args(args)
    gt = _read_gt(args.gt)
    rows = read_tracks(args.tracks)
    dets = read_detections(args.detections) if args.detections else None
    tickets = None
    if args.etickets:
        try:
            tickets = read_etickets(args.etickets)
        except (OSError, ValueError) as exc:
            raise InputError(str(exc)) from exc
    rep = evaluate_run(gt, rows, dets, tickets, cfg, args.mode)
    write_report(args.out, [rep])
    return 0


# --- parser --------------------------------------------------------------------

def _source_args(p, required=True):
    src = p.add_mutually_exclusive_group(required=required)
    src.add_argument("--scenario", metavar="JSON", help="scenario file")
    src.add_argument("--preset", help="named preset scenario, e.g. noiseless")
    src.add_argument("--suite", choices=sorted(SUITES), help="every scenario of a shipped suite")
    return src


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rmtrack", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate ground truth and noisy detections")
    _source_args(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("track", help="track a detections file")
    p.add_argument("--detections", required=True)
    p.add_argument("--out", required=True, help="tracks CSV")
    p.add_argument("--etickets", help="also write consolidated e-tickets here")
    p.add_argument("--n-frames", type=int, help="sequence length (default: last detection frame + 1)")
    p.add_argument("--baseline", action="store_true", help="independent per-class SORT ablation")
    add_config_args(p)
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("pipeline", help="simulate (optional), track, consolidate, evaluate")
    src = _source_args(p, required=False)
    src.add_argument("--detections", help="existing detections file (needs --gt)")
    p.add_argument("--gt", help="ground truth log for --detections")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--baseline", action="store_true", help="independent per-class SORT ablation")
    p.add_argument("--mode", choices=["auto", "hil", "both"], default="both",
                   help="e-ticket scoring mode (default: both)")
    p.add_argument("--no-figures", action="store_true", help="skip PNG figures")
    add_config_args(p)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("evaluate", help="score tracks (and e-tickets) against ground truth")
    p.add_argument("--gt", required=True)
    p.add_argument("--tracks", required=True)
    p.add_argument("--detections", help="enables the per-frame association metric")
    p.add_argument("--etickets", help="enables violation, e-ticket and plate metrics")
    p.add_argument("--mode", choices=["auto", "hil", "both"], default="both")
    p.add_argument("--out", required=True, help="report JSON")
    add_config_args(p)
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("RMTRACK_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        if args.command == "pipeline" and not (args.scenario or args.preset or args.suite or args.detections):
            raise ConfigError("pipeline needs --scenario, --preset, --suite or --detections")
        return args.func(args)
    except tuple(e for e, _ in EXIT_CODES) as exc:
        code = next(c for e, c in EXIT_CODES if isinstance(exc, e))
        print(f"rmtrack: error: {exc}", file=sys.stderr)
        return code
    except (InputError, OSError) as exc:
        print(f"rmtrack: error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
