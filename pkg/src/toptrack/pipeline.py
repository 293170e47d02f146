"""End-to-end auto-annotation: depth streams in, tracks and per-camera
box labels out.

Per frame, strictly in order: backproject all depth images into one world
point cloud, voxelize, flatten to the top-down heightmap, detect people
on it, advance the tracker, and finally project confirmed tracks into
every camera view.  Tracking is the only stateful stage, so everything
before it could be computed ahead; this implementation just streams
frame by frame.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__, io
from .detect import CropClassifier, DetectorParams, HeightBandClassifier, detect_people
from .fusion import (
    DEFAULT_MAX_DEPTH_MM,
    grid_from_rig,
    reconstruct_point_cloud,
    topdown_heightmap,
    voxelize,
)
from .geometry import GridSpec
from .project import generate_label_records
from .track import TrackerParams, TrackSet, tracker_step


class StreamLengthMismatch(ValueError):
    """Camera streams do not all have the declared frame count."""


class FrameProcessingError(RuntimeError):
    """A pipeline stage failed; carries the frame index, original error
    as __cause__."""

    def __init__(self, frame_index: int, cause: BaseException):
        self.frame_index = frame_index
        super().__init__(f"frame {frame_index}: {cause}")


@dataclass
class PipelineConfig:
    depth_dir: Path
    calib_path: Path
    out_dir: Path
    detector: DetectorParams = field(default_factory=DetectorParams)
    tracker: TrackerParams = field(default_factory=TrackerParams)
    grid: GridSpec | None = None  # None: derive from the rig footprint
    classifier: CropClassifier = field(default_factory=HeightBandClassifier)
    emit_labels: bool = True
    emit_tracks: bool = True
    use_rgb: bool = True  # attach color when PNGs are present
    max_depth_mm: float = DEFAULT_MAX_DEPTH_MM
    seed: int | None = None  # recorded in the manifest for provenance

    def digest(self) -> str:
        doc = {
            "depth_dir": str(self.depth_dir),
            "calib_path": str(self.calib_path),
            "out_dir": str(self.out_dir),
            "detector": vars(self.detector).copy(),
            "tracker": vars(self.tracker).copy(),
            "grid": None
            if self.grid is None
            else {
                "origin": list(self.grid.origin),
                "dims": list(self.grid.dims),
                "cell_mm": self.grid.cell_mm,
            },
            "classifier": repr(self.classifier),
            "emit_labels": self.emit_labels,
            "emit_tracks": self.emit_tracks,
            "use_rgb": self.use_rgb,
            "max_depth_mm": self.max_depth_mm,
            "seed": self.seed,
        }
        blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


@dataclass
class PipelineResult:
    track_set: TrackSet
    n_frames: int
    tracks_path: Path | None
    label_paths: dict
    manifest_path: Path


def _check_streams(depth_dir: Path, camera_ids, n_frames: int) -> None:
    counts = {}
    for cid in camera_ids:
        cam_dir = depth_dir / f"cam{cid}"
        counts[cid] = len(list(cam_dir.glob("*.pgm"))) if cam_dir.is_dir() else 0
    bad = {c: n for c, n in counts.items() if n != n_frames}
    if bad:
        raise StreamLengthMismatch(
            f"expected {n_frames} frames per camera, found {bad}"
        )


def run_autoannotation(config: PipelineConfig) -> PipelineResult:
    """Run the full chain over a recorded depth directory.

    Expects ``meta.json`` and ``cam{ID}/{frame:06}.pgm`` under
    ``config.depth_dir`` and a calibration file covering every stream
    camera.  Writes ``tracks.jsonl``, per-camera ``labels_cam{ID}.csv``
    and ``manifest.json`` under ``config.out_dir``.
    """
    depth_dir = Path(config.depth_dir)
    out_dir = Path(config.out_dir)
    rig = io.load_calibration(config.calib_path)
    meta = io.read_meta(depth_dir)
    fps = float(meta["fps"])
    n_frames = int(meta["n_frames"])
    camera_ids = list(meta["cameras"])

    missing = [c for c in camera_ids if c not in rig]
    if missing:
        raise io.FormatError(f"calibration missing cameras {missing}")
    _check_streams(depth_dir, camera_ids, n_frames)

    stream_rig = {c: rig[c] for c in camera_ids}
    grid = config.grid or grid_from_rig(stream_rig.values())
    with_rgb = config.use_rgb and all(
        io.rgb_frame_path(depth_dir, c, 0).is_file() for c in camera_ids
    ) and n_frames > 0

    track_set = TrackSet()
    for f in range(n_frames):
        try:
            frames = [io.load_depth_frame(depth_dir, c, f, fps) for c in camera_ids]
            rgb = (
                {c: io.load_rgb_frame(depth_dir, c, f) for c in camera_ids}
                if with_rgb
                else None
            )
            cloud = reconstruct_point_cloud(
                frames, stream_rig, rgb=rgb, max_depth_mm=config.max_depth_mm
            )
            topdown = topdown_heightmap(voxelize(cloud, grid))
            detections = detect_people(topdown, config.classifier, config.detector)
            tracker_step(track_set, f, detections, cloud, config.tracker)
        except Exception as exc:
            raise FrameProcessingError(f, exc) from exc

    out_dir.mkdir(parents=True, exist_ok=True)
    tracks_path = None
    if config.emit_tracks:
        tracks_path = out_dir / "tracks.jsonl"
        io.save_tracks(tracks_path, track_set)

    label_paths = {}
    if config.emit_labels:
        records = generate_label_records(track_set, stream_rig)
        by_camera = {c: [] for c in camera_ids}
        for r in records:
            by_camera[r.camera].append(r)
        for cid in camera_ids:
            path = io.label_csv_path(out_dir, cid)
            io.save_label_csv(path, by_camera[cid])
            label_paths[cid] = path

    manifest_path = out_dir / "manifest.json"
    manifest = {
        "config_digest": config.digest(),
        "versions": _versions(),
        "seed": config.seed,
        "n_frames": n_frames,
        "cameras": camera_ids,
        "fps": fps,
        "grid": {
            "origin": list(grid.origin),
            "dims": list(grid.dims),
            "cell_mm": grid.cell_mm,
        },
        "outputs": {
            "tracks": tracks_path.name if tracks_path else None,
            "labels": {str(c): p.name for c, p in label_paths.items()},
        },
    }
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return PipelineResult(
        track_set=track_set,
        n_frames=n_frames,
        tracks_path=tracks_path,
        label_paths=label_paths,
        manifest_path=manifest_path,
    )


def _versions() -> dict:
    import cv2
    import numpy
    import scipy

    return {
        "toptrack": __version__,
        "numpy": numpy.__version__,
        "scipy": scipy.__version__,
        "opencv": cv2.__version__,
    }
