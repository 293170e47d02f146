"""Command-line entry point.

Subcommands: simulate, calibrate, track, evaluate, apply-edits, serve.
Exit codes: 0 ok, 2 configuration error, 3 data error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import annotate, calibration, io, metrics, pipeline, simulate
from .detect import DetectorParams
from .geometry import CameraIntrinsics, CameraModel
from .track import TrackerParams

log = logging.getLogger("toptrack")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3

_CONFIG_ERRORS = (
    FileNotFoundError,
    NotADirectoryError,
    IsADirectoryError,
    simulate.InvalidSpec,
)
_DATA_ERRORS = (
    io.FormatError,
    pipeline.StreamLengthMismatch,
    pipeline.FrameProcessingError,
    calibration.DisconnectedGraph,
    calibration.InsufficientCorners,
    calibration.DivergedSolve,
    calibration.SingularNormalEquations,
    calibration.MissingEntity,
    calibration.EmptyInput,
    metrics.EmptyGroundTruth,
    annotate.UnknownId,
    annotate.FrameConflict,
    annotate.InvalidRange,
    annotate.DigestMismatch,
)


class CliError(Exception):
    def __init__(self, code: int, message: str):
        self.code = code
        super().__init__(message)


def _load_config_file(path: str) -> dict:
    p = Path(path)
    if not p.is_file():
        raise CliError(EXIT_CONFIG, f"config file not found: {path}")
    try:
        if p.suffix.lower() == ".toml":
            import tomli

            return tomli.loads(p.read_text())
        return json.loads(p.read_text())
    except ValueError as exc:
        raise CliError(EXIT_CONFIG, f"cannot parse config {path}: {exc}") from exc


def _params_from_config(cfg: dict):
    try:
        detector = DetectorParams(**cfg.get("detector", {}))
        tracker = TrackerParams(**cfg.get("tracker", {}))
    except (TypeError, ValueError) as exc:
        raise CliError(EXIT_CONFIG, f"bad parameter in config: {exc}") from exc
    return detector, tracker


#  simulate


def cmd_simulate(args) -> int:
    try:
        spec = io.load_scene_spec(args.spec)
    except io.FormatError as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from exc
    if args.seed is not None:
        spec = dataclasses.replace(spec, seed=args.seed)
    scene = simulate.generate_scene(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    for camera in spec.cameras:
        for f in range(scene.n_frames):
            rendered = simulate.render_depth_frame(
                scene, camera, f, noise_sigma_mm=args.noise_sigma_mm,
                with_rgb=args.rgb,
            )
            if args.rgb:
                frame, rgb = rendered
                io.save_rgb_frame(out, camera.id, f, rgb)
            else:
                frame = rendered
            io.save_depth_frame(out, frame)

    widths = {c.intrinsics.width for c in spec.cameras}
    heights = {c.intrinsics.height for c in spec.cameras}
    io.write_meta(
        out, fps=spec.fps, width=widths.pop() if len(widths) == 1 else -1,
        height=heights.pop() if len(heights) == 1 else -1,
        n_frames=scene.n_frames, camera_ids=[c.id for c in spec.cameras],
    )
    io.save_calibration(out / "calib.json", spec.cameras)
    io.save_tracks(out / "gt.jsonl", scene.ground_truth)
    io.save_observations(
        out / "observations.jsonl",
        simulate.synth_marker_observations(scene, noise_px=args.obs_noise_px),
    )
    log.info("wrote %d frames x %d cameras to %s", scene.n_frames,
             len(spec.cameras), out)
    return EXIT_OK


#  calibrate


def _load_intrinsics(path) -> dict:
    """Accepts the calibration JSON shape; poses are optional and ignored."""
    try:
        doc = json.loads(Path(path).read_text())
        out = {}
        for c in doc["cameras"]:
            k = c["intrinsics"]
            out[c["id"]] = CameraIntrinsics(
                fx=k["fx"], fy=k["fy"], cx=k["cx"], cy=k["cy"],
                width=int(k["width"]), height=int(k["height"]),
            )
        return out
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise io.FormatError(f"{path}: bad intrinsics file: {exc}") from exc


def cmd_calibrate(args) -> int:
    observations = io.load_observations(args.observations)
    intrinsics = _load_intrinsics(args.intrinsics)
    marker_ids = {o.marker_id for o in observations}
    if args.anchor not in marker_ids:
        raise CliError(
            EXIT_CONFIG, f"anchor {args.anchor!r} has no observations"
        )
    graph = calibration.CalibrationGraph(
        cameras=intrinsics,
        markers={m: args.side_mm for m in marker_ids},
        observations=observations,
    )
    init = calibration.initialize_poses(graph, args.anchor)
    result = calibration.solve_extrinsics(graph, init, args.anchor)
    out = Path(args.out)
    io.save_calibration(
        out,
        [
            CameraModel(id=c, intrinsics=intrinsics[c], pose=result.poses[c])
            for c in sorted(intrinsics, key=str)
        ],
    )
    markers_out = (
        Path(args.markers_out) if args.markers_out else out.parent / "markers.json"
    )
    io.save_markers(markers_out, result.marker_corners)
    stats = calibration.reprojection_rms(result, graph)
    log.info(
        "solved %d cameras / %d markers in %d iterations, rms %.4g px",
        len(result.poses), len(result.marker_corners), result.iterations,
        stats.rms,
    )
    print(f"rms_px={stats.rms:.6g} max_px={stats.max:.6g} "
          f"iterations={result.iterations}")
    return EXIT_OK


#  track


def cmd_track(args) -> int:
    cfg_file = _load_config_file(args.config) if args.config else {}
    detector, tracker = _params_from_config(cfg_file)
    config = pipeline.PipelineConfig(
        depth_dir=Path(args.depth),
        calib_path=Path(args.calib),
        out_dir=Path(args.out),
        detector=detector,
        tracker=tracker,
        emit_labels=args.labels,
        emit_tracks=args.tracks,
        use_rgb=args.rgb,
        seed=args.seed,
    )
    result = pipeline.run_autoannotation(config)
    confirmed = sum(
        1 for t in result.track_set.tracklets.values() if t.was_confirmed
    )
    log.info("tracked %d frames: %d confirmed tracklets", result.n_frames,
             confirmed)
    print(f"frames={result.n_frames} confirmed_tracklets={confirmed} "
          f"out={result.manifest_path.parent}")
    return EXIT_OK


#  evaluate


def cmd_evaluate(args) -> int:
    gt = io.load_tracks(args.gt)
    pred = io.load_tracks(args.pred)
    report = metrics.evaluate(gt, pred, threshold_mm=args.threshold_mm)
    doc = report.as_dict()
    if args.out:
        Path(args.out).write_text(json.dumps(doc, indent=2))
    print(
        f"IDF1={report.idf1:.1f} MOTA={report.mota:.1f} FP={report.fp} "
        f"FN={report.fn} IDs={report.ids}"
    )
    return EXIT_OK


#  apply-edits


def cmd_apply_edits(args) -> int:
    base = io.load_tracks(args.tracks)
    log_ = io.load_edit_log(args.edits)
    edited = annotate.replay_edit_log(base, log_)
    io.save_tracks(args.out, edited)
    print(f"applied {len(log_.ops)} edits -> {args.out}")
    return EXIT_OK


#  serve


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(Path(args.data))
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="toptrack",
        description="Multi-camera top-down people tracking and annotation.",
    )
    parser.add_argument("--config", help="TOML/JSON file with detector/tracker parameters")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--log-level", default="warning",
                        choices=["debug", "info", "warning", "error"])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="render a synthetic RGB-D sequence")
    p.add_argument("--spec", required=True, help="scene.json")
    p.add_argument("--out", required=True)
    p.add_argument("--rgb", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--noise-sigma-mm", type=float, default=0.0)
    p.add_argument("--obs-noise-px", type=float, default=0.0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("calibrate", help="solve camera extrinsics from marker observations")
    p.add_argument("--observations", required=True)
    p.add_argument("--intrinsics", required=True)
    p.add_argument("--anchor", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--markers-out")
    p.add_argument("--side-mm", type=float, default=calibration.DEFAULT_MARKER_SIDE_MM)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("track", help="run auto-annotation over a depth directory")
    p.add_argument("--depth", required=True)
    p.add_argument("--calib", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--labels", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--tracks", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--rgb", action=argparse.BooleanOptionalAction, default=True)
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("evaluate", help="CLEAR-MOT / IDF1 against ground truth")
    p.add_argument("--gt", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--threshold-mm", type=float, default=1000.0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("apply-edits", help="replay an edit log over a track file")
    p.add_argument("--tracks", required=True)
    p.add_argument("--edits", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_apply_edits)

    p = sub.add_parser("serve", help="run the annotation review service")
    p.add_argument("--data", required=True)
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--host", default="127.0.0.1")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        log.error("%s", exc)
        return exc.code
    except _CONFIG_ERRORS as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except _DATA_ERRORS as exc:
        log.error("data error: %s", exc)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
