"""Batch command-line frontend.

Subcommands cover the pipeline stages individually (stack, detect,
track, join, eval-det, eval-track, motility, synth) plus a composed
``pipeline`` run. A flat key=value config file can supply calibration
constants; explicit flags always win over the file, the file over
defaults.

Exit codes: 0 success, 1 processing error (bad data), 2 usage or
configuration error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from .model import CalibrationConfig
from . import engine, evaluation, ingest, joiner, motility, synth


class UsageError(Exception):
    """Bad invocation or configuration; maps to exit code 2."""


def _read_config_file(path: str) -> Dict[str, str]:
    file = Path(path)
    if not file.is_file():
        raise UsageError(f"{path}: not found")
    values: Dict[str, str] = {}
    for lineno, raw in enumerate(file.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"{path}: line {lineno}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    return values


def _calibration(args) -> CalibrationConfig:
    """Merge defaults, config file and command-line flags."""
    merged: Dict[str, object] = {}
    if getattr(args, "config", None):
        for key, value in _read_config_file(args.config).items():
            if key not in CalibrationConfig.field_names():
                raise UsageError(f"{args.config}: unknown config key {key!r}")
            merged[key] = value
    for name in CalibrationConfig.field_names():
        flag_value = getattr(args, name, None)
        if flag_value is not None:
            merged[name] = flag_value
    try:
        return CalibrationConfig.from_mapping(merged)
    except (ValueError, KeyError) as exc:
        raise UsageError(str(exc)) from exc


def _add_calibration_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="FILE",
                        help="key=value file with calibration overrides")
    group = parser.add_argument_group("calibration overrides")
    for fi in dataclasses.fields(CalibrationConfig):
        flag = "--" + fi.name.replace("_", "-")
        kind = int if fi.type in ("int", int) else float
        group.add_argument(flag, dest=fi.name, type=kind, default=None,
                           metavar="V", help=f"default {fi.default}")


def _load_detections(path: str):
    try:
        return ingest.read_detections(path)
    except FileNotFoundError as exc:
        raise UsageError(str(exc)) from exc


def _load_tracks(path: str):
    try:
        return engine.read_tracks(path)
    except FileNotFoundError as exc:
        raise UsageError(str(exc)) from exc


def _load_frames(path: str):
    try:
        return ingest.load_sequence(path)
    except FileNotFoundError as exc:
        raise UsageError(str(exc)) from exc


def _filter_detections(per_frame, min_score: float):
    return {f: [d for d in dets if d.score >= min_score]
            for f, dets in per_frame.items()}


def _emit(args, doc: dict) -> None:
    if getattr(args, "json", False):
        json.dump(doc, sys.stdout, indent=2)
        sys.stdout.write("\n")


def cmd_stack(args) -> dict:
    frames = _load_frames(args.frames)
    centers = [args.center] if args.center is not None else range(len(frames))
    written = []
    for center in centers:
        stacked = ingest.stack_frames(frames, center, args.n)
        written.append(str(ingest.export_stacked_tiff(stacked, args.out)))
    return {"written": written}


def cmd_detect(args) -> dict:
    frames = _load_frames(args.frames)
    params = ingest.BlobDetectorParams(
        gaussian_sigma=args.gaussian_sigma,
        log_sigma=args.log_sigma,
        min_area_px=args.min_area,
    )
    detections = []
    for frame in frames:
        if args.stack_n > 1:
            source = ingest.stack_frames(frames, frame.index, args.stack_n)
            detections.extend(ingest.detect_blobs(source, params))
        else:
            detections.extend(ingest.detect_blobs(frame, params))
    ingest.write_detections(detections, args.out)
    return {"detections": len(detections), "out": args.out}


def cmd_track(args) -> dict:
    cfg = _calibration(args)
    frames = _load_frames(args.frames)
    per_frame = _filter_detections(_load_detections(args.detections), args.min_score)
    tracks = engine.run(frames, per_frame, cfg)
    engine.write_tracks(tracks, args.out)
    return {"tracks": len(tracks), "out": args.out}


def _frame_size_for_join(args) -> Optional[tuple]:
    if args.width is not None and args.height is not None:
        return (args.width, args.height)
    if args.frames is not None:
        frames = _load_frames(args.frames)
        return (frames[0].width, frames[0].height)
    raise UsageError("join needs --width/--height or --frames to locate borders")


def cmd_join(args) -> dict:
    cfg = _calibration(args)
    tracks = _load_tracks(args.tracks)
    frame_size = _frame_size_for_join(args)
    joined, decisions = joiner.join_all(tracks, cfg, frame_size=frame_size)
    engine.write_tracks(joined, args.out)
    if args.decisions:
        joiner.write_decisions(decisions, args.decisions)
    return {"tracks_in": len(tracks), "tracks_out": len(joined),
            "joins": len(decisions), "out": args.out}


def cmd_eval_det(args) -> dict:
    cfg = _calibration(args)
    dets = [d for group in _load_detections(args.detections).values() for d in group]
    gts = [d for group in _load_detections(args.gt).values() for d in group]
    report = evaluation.eval_detections(dets, gts, cfg, score_threshold=args.min_score)
    doc = evaluation.report_to_json(detection=report)
    if args.out:
        evaluation.write_report(doc, args.out)
    return doc


def cmd_eval_track(args) -> dict:
    cfg = _calibration(args)
    est = _load_tracks(args.tracks)
    gt = _load_tracks(args.gt)
    matches, report = evaluation.match_tracks(est, gt, cfg)
    doc = evaluation.report_to_json(tracking=report, matches=matches)
    if args.out:
        evaluation.write_report(doc, args.out)
    return doc


def cmd_motility(args) -> dict:
    cfg = _calibration(args)
    tracks = [t for t in _load_tracks(args.tracks) if len(t.points) >= 2]
    reports = motility.analyze(tracks, cfg)
    motility.write_motility_csv(reports, args.out)
    doc: dict = {"tracks": len(reports), "out": args.out}
    if reports:
        summary = motility.summarize(reports)
        doc["summary"] = summary
        if args.aggregate_out:
            motility.write_summary(summary, args.aggregate_out)
    return doc


def cmd_synth(args) -> dict:
    out = Path(args.out)
    spec = synth.random_scenario(
        seed=args.seed,
        num_objects=args.objects,
        num_frames=args.num_frames,
        width=args.width,
        height=args.height,
        speed_range=(args.speed_min, args.speed_max),
        noise_sigma=args.noise_sigma,
    )
    frames, gt_tracks, gt_dets = synth.synth_video(spec)
    ingest.write_sequence(frames, out / "frames")
    engine.write_tracks(gt_tracks, out / "gt_tracks.csv")
    ingest.write_detections(gt_dets, out / "gt_detections.csv")
    pspec = synth.PerturbSpec(seed=args.seed, fp_rate=args.fp_rate,
                              fn_rate=args.fn_rate, jitter_sigma=args.jitter_sigma)
    perturbed = synth.perturb(gt_dets, pspec, gt_tracks=gt_tracks,
                              frame_size=(spec.width, spec.height))
    ingest.write_detections(perturbed, out / "detections.csv")
    synth.write_scenario(spec, out / "scenario.json")
    return {"out": str(out), "objects": len(gt_tracks),
            "gt_detections": len(gt_dets), "detections": len(perturbed)}


def _pipeline_one(video_dir: str, out_dir: Path, args, cfg: CalibrationConfig) -> dict:
    frames = _load_frames(video_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.detections:
        per_frame = _load_detections(args.detections)
    else:
        params = ingest.BlobDetectorParams(
            gaussian_sigma=args.gaussian_sigma,
            log_sigma=args.log_sigma,
            min_area_px=args.min_area,
        )
        detections = []
        for frame in frames:
            if args.stack_n > 1:
                source = ingest.stack_frames(frames, frame.index, args.stack_n)
                detections.extend(ingest.detect_blobs(source, params))
            else:
                detections.extend(ingest.detect_blobs(frame, params))
        ingest.write_detections(detections, out_dir / "detections.csv")
        per_frame = ingest.read_detections(out_dir / "detections.csv")
    per_frame = _filter_detections(per_frame, args.min_score)
    raw_tracks = engine.run(frames, per_frame, cfg)
    engine.write_tracks(raw_tracks, out_dir / "tracks_raw.csv")
    joined, decisions = joiner.join_all(
        raw_tracks, cfg, frame_size=(frames[0].width, frames[0].height))
    engine.write_tracks(joined, out_dir / "tracks.csv")
    joiner.write_decisions(decisions, out_dir / "joins.json")
    reports = motility.analyze([t for t in joined if len(t.points) >= 2], cfg)
    motility.write_motility_csv(reports, out_dir / "motility.csv")
    if reports:
        motility.write_summary(motility.summarize(reports), out_dir / "motility_summary.json")
    return {"video": video_dir, "tracks": len(joined), "joins": len(decisions),
            "out": str(out_dir)}


def _video_out_names(videos: Sequence[str]) -> List[str]:
    """Distinct output directory names for a batch of video directories."""
    names = [Path(v).name for v in videos]
    if len(set(names)) == len(names):
        return names
    names = [f"{Path(v).parent.name}_{Path(v).name}".lstrip("_") for v in videos]
    if len(set(names)) == len(names):
        return names
    return [f"video_{i:03d}_{Path(v).name}" for i, v in enumerate(videos)]


def cmd_pipeline(args) -> dict:
    cfg = _calibration(args)
    videos: List[str] = args.frames
    out_root = Path(args.out)
    if len(videos) == 1:
        return _pipeline_one(videos[0], out_root, args, cfg)
    names = _video_out_names(videos)
    results = []
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            futures = [
                pool.submit(_pipeline_one, video, out_root / name, args, cfg)
                for video, name in zip(videos, names)
            ]
            results = [f.result() for f in futures]
    else:
        for video, name in zip(videos, names):
            results.append(_pipeline_one(video, out_root / name, args, cfg))
    return {"videos": results}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spermtrack",
        description="Track motile micro-objects in microscopy video and "
                    "report detection, tracking and motility metrics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(func=func)
        p.add_argument("--json", action="store_true",
                       help="print a JSON result document on stdout")
        return p

    p = add("stack", cmd_stack, "export stacked multi-frame TIFF inputs")
    p.add_argument("--frames", required=True, metavar="DIR")
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--n", type=int, default=3, help="channel count (odd)")
    p.add_argument("--center", type=int, default=None,
                   help="only this center frame (default: all)")

    p = add("detect", cmd_detect, "run the fallback blob detector")
    p.add_argument("--frames", required=True, metavar="DIR")
    p.add_argument("--out", required=True, metavar="CSV")
    p.add_argument("--stack-n", type=int, default=3,
                   help="frames per stacked input; 1 disables stacking")
    p.add_argument("--gaussian-sigma", type=float, default=1.0)
    p.add_argument("--log-sigma", type=float, default=3.0)
    p.add_argument("--min-area", type=int, default=5)

    p = add("track", cmd_track, "link detections into tracks")
    p.add_argument("--frames", required=True, metavar="DIR")
    p.add_argument("--detections", required=True, metavar="CSV")
    p.add_argument("--out", required=True, metavar="CSV")
    p.add_argument("--min-score", type=float, default=0.5)
    _add_calibration_flags(p)

    p = add("join", cmd_join, "repair fragmented tracks and prune noise")
    p.add_argument("--tracks", required=True, metavar="CSV")
    p.add_argument("--out", required=True, metavar="CSV")
    p.add_argument("--decisions", metavar="JSON", help="write the join decision log")
    p.add_argument("--frames", metavar="DIR", help="video directory, for frame size")
    p.add_argument("--width", type=int, default=None)
    p.add_argument("--height", type=int, default=None)
    _add_calibration_flags(p)

    p = add("eval-det", cmd_eval_det, "detection metrics against ground truth")
    p.add_argument("--detections", required=True, metavar="CSV")
    p.add_argument("--gt", required=True, metavar="CSV")
    p.add_argument("--out", metavar="JSON")
    p.add_argument("--min-score", type=float, default=0.5)
    _add_calibration_flags(p)

    p = add("eval-track", cmd_eval_track, "track metrics against ground truth")
    p.add_argument("--tracks", required=True, metavar="CSV")
    p.add_argument("--gt", required=True, metavar="CSV")
    p.add_argument("--out", metavar="JSON")
    _add_calibration_flags(p)

    p = add("motility", cmd_motility, "kinematics and motility classes per track")
    p.add_argument("--tracks", required=True, metavar="CSV")
    p.add_argument("--out", required=True, metavar="CSV")
    p.add_argument("--aggregate-out", metavar="JSON")
    _add_calibration_flags(p)

    p = add("synth", cmd_synth, "generate a seeded synthetic scenario")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--objects", type=int, default=20)
    p.add_argument("--num-frames", type=int, default=25)
    p.add_argument("--width", type=int, default=768)
    p.add_argument("--height", type=int, default=576)
    p.add_argument("--speed-min", type=float, default=0.0)
    p.add_argument("--speed-max", type=float, default=8.0)
    p.add_argument("--noise-sigma", type=float, default=8.0)
    p.add_argument("--fp-rate", type=float, default=0.0)
    p.add_argument("--fn-rate", type=float, default=0.0)
    p.add_argument("--jitter-sigma", type=float, default=0.0)

    p = add("pipeline", cmd_pipeline, "detect, track, join and analyze video(s)")
    p.add_argument("--frames", required=True, nargs="+", metavar="DIR",
                   help="one or more video directories")
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--detections", metavar="CSV",
                   help="use these detections instead of the fallback detector "
                        "(single video only)")
    p.add_argument("--min-score", type=float, default=0.5)
    p.add_argument("--stack-n", type=int, default=3)
    p.add_argument("--gaussian-sigma", type=float, default=1.0)
    p.add_argument("--log-sigma", type=float, default=3.0)
    p.add_argument("--min-area", type=int, default=5)
    p.add_argument("--jobs", type=int, default=1,
                   help="parallel workers across videos")
    _add_calibration_flags(p)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        doc = args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    _emit(args, doc)
    return 0


if __name__ == "__main__":
    sys.exit(main())
