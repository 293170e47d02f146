"""On-disk formats.

- depth: 16-bit binary PGM (P5, maxval 65535, big-endian samples),
  millimetres, one file per camera per frame under ``cam{ID}/{frame:06}.pgm``,
  with a ``meta.json`` carrying fps / dims / frame count
- calibration: one JSON file with intrinsics and world->camera poses
  (quaternion ``[w,x,y,z]`` plus translation in mm)
- marker observations, detections, tracks, edit logs: JSON Lines
- per-camera labels: MOT-style CSV
- heatmaps: raw float32 binary with a JSON sidecar

Pixel convention everywhere: ``u`` = column index, ``v`` = row index.
"""

from __future__ import annotations

import csv
import json
import re
from pathlib import Path

import numpy as np
from PIL import Image

from .annotate import EditLog, EditOp
from .calibration import MarkerObservation
from .detect import Detection
from .fusion import DepthFrame
from .geometry import CameraIntrinsics, CameraModel, Pose
from .project import LabelRecord
from .simulate import ActorSpec, BoxSpec, MarkerSpec, SceneSpec
from .track import CONFIRMED, TrackSet, Tracklet, TrackState


class FormatError(ValueError):
    """File contents do not match the expected format."""


# ---------------------------------------------------------------------------
# 16-bit PGM depth frames


def write_pgm16(path, values: np.ndarray) -> None:
    values = np.asarray(values)
    if values.ndim != 2 or values.dtype != np.uint16:
        raise FormatError("depth image must be 2-D uint16")
    h, w = values.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n65535\n".encode("ascii"))
        f.write(values.astype(">u2").tobytes())


def read_pgm16(path) -> np.ndarray:
    data = Path(path).read_bytes()
    m = re.match(rb"P5\s+(\d+)\s+(\d+)\s+(\d+)\s", data)
    if not m:
        raise FormatError(f"{path}: not a binary PGM")
    w, h, maxval = (int(g) for g in m.groups())
    if maxval != 65535:
        raise FormatError(f"{path}: expected maxval 65535, got {maxval}")
    pixels = data[m.end():]
    if len(pixels) < 2 * w * h:
        raise FormatError(f"{path}: truncated pixel data")
    return np.frombuffer(pixels, dtype=">u2", count=w * h).reshape(h, w).astype(np.uint16)


def depth_frame_path(root, camera_id, frame_index: int) -> Path:
    return Path(root) / f"cam{camera_id}" / f"{frame_index:06d}.pgm"


def rgb_frame_path(root, camera_id, frame_index: int) -> Path:
    return Path(root) / f"cam{camera_id}" / f"{frame_index:06d}.png"


def save_depth_frame(root, frame: DepthFrame) -> Path:
    path = depth_frame_path(root, frame.camera_id, frame.frame_index)
    path.parent.mkdir(parents=True, exist_ok=True)
    write_pgm16(path, frame.depth)
    return path


def load_depth_frame(root, camera_id, frame_index: int, fps: float = 15.0) -> DepthFrame:
    depth = read_pgm16(depth_frame_path(root, camera_id, frame_index))
    return DepthFrame(
        camera_id=camera_id,
        frame_index=frame_index,
        timestamp_ms=int(round(frame_index * 1000.0 / fps)),
        depth=depth,
    )


def save_rgb_frame(root, camera_id, frame_index: int, rgb: np.ndarray) -> Path:
    path = rgb_frame_path(root, camera_id, frame_index)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.asarray(rgb, dtype=np.uint8)).save(path)
    return path


def load_rgb_frame(root, camera_id, frame_index: int) -> np.ndarray:
    return np.asarray(Image.open(rgb_frame_path(root, camera_id, frame_index)))


def write_meta(root, fps: float, width: int, height: int, n_frames: int,
               camera_ids) -> None:
    meta = {
        "fps": fps,
        "width": width,
        "height": height,
        "n_frames": n_frames,
        "cameras": list(camera_ids),
    }
    (Path(root) / "meta.json").write_text(json.dumps(meta, indent=2))


def read_meta(root) -> dict:
    return json.loads((Path(root) / "meta.json").read_text())


# ---------------------------------------------------------------------------
# calibration JSON


def camera_to_dict(camera: CameraModel) -> dict:
    k = camera.intrinsics
    return {
        "id": camera.id,
        "intrinsics": {
            "fx": k.fx, "fy": k.fy, "cx": k.cx, "cy": k.cy,
            "width": k.width, "height": k.height,
        },
        "pose": {
            "q": [float(x) for x in camera.pose.q],
            "t_mm": [float(x) for x in camera.pose.t],
        },
    }


def camera_from_dict(d: dict) -> CameraModel:
    k = d["intrinsics"]
    return CameraModel(
        id=d["id"],
        intrinsics=CameraIntrinsics(
            fx=k["fx"], fy=k["fy"], cx=k["cx"], cy=k["cy"],
            width=int(k["width"]), height=int(k["height"]),
        ),
        pose=Pose(q=tuple(d["pose"]["q"]), t=tuple(d["pose"]["t_mm"])),
    )


def save_calibration(path, cameras) -> None:
    cams = list(cameras.values()) if isinstance(cameras, dict) else list(cameras)
    doc = {"cameras": [camera_to_dict(c) for c in cams], "ground": {"z": 0}}
    Path(path).write_text(json.dumps(doc, indent=2))


def load_calibration(path) -> dict:
    """Calibration file -> {camera_id: CameraModel}."""
    try:
        doc = json.loads(Path(path).read_text())
        return {c["id"]: camera_from_dict(c) for c in doc["cameras"]}
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: bad calibration file: {exc}") from exc


def save_markers(path, corners: dict) -> None:
    """Solved marker corners -> ``markers.json`` ({id: 4x[x,y,z] mm})."""
    doc = {str(m): np.asarray(c, dtype=float).reshape(4, 3).tolist()
           for m, c in corners.items()}
    Path(path).write_text(json.dumps(doc, indent=2))


def load_markers(path) -> dict:
    doc = json.loads(Path(path).read_text())
    return {m: np.array(c, dtype=float) for m, c in doc.items()}


# ---------------------------------------------------------------------------
# JSON Lines formats


def _write_jsonl(path, rows) -> None:
    with open(path, "w") as f:
        for row in rows:
            f.write(json.dumps(row, separators=(",", ":")) + "\n")


def _read_jsonl(path):
    with open(path) as f:
        for line in f:
            line = line.strip()
            if line:
                yield json.loads(line)


def save_observations(path, observations) -> None:
    _write_jsonl(
        path,
        (
            {"camera": o.camera_id, "marker": o.marker_id,
             "corner": o.corner_index, "u": o.pixel[0], "v": o.pixel[1]}
            for o in observations
        ),
    )


def load_observations(path) -> list[MarkerObservation]:
    try:
        return [
            MarkerObservation(
                camera_id=r["camera"], marker_id=r["marker"],
                corner_index=int(r["corner"]), pixel=(float(r["u"]), float(r["v"])),
            )
            for r in _read_jsonl(path)
        ]
    except (KeyError, ValueError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: bad observations file: {exc}") from exc


def save_detections(path, per_frame: dict) -> None:
    """``{frame: [Detection, ...]}`` -> JSONL rows {frame, x_mm, y_mm, score}."""
    rows = []
    for frame in sorted(per_frame):
        for d in per_frame[frame]:
            rows.append(
                {"frame": frame, "x_mm": float(d.world_xy[0]),
                 "y_mm": float(d.world_xy[1]), "score": float(d.score)}
            )
    _write_jsonl(path, rows)


def load_detections(path) -> dict:
    out: dict[int, list[Detection]] = {}
    for r in _read_jsonl(path):
        out.setdefault(int(r["frame"]), []).append(
            Detection(cell=(-1, -1), world_xy=(float(r["x_mm"]), float(r["y_mm"])),
                      score=float(r["score"]))
        )
    return out


def save_tracks(path, track_set: TrackSet, statuses=None) -> None:
    """Track rows {frame, id, x_mm, y_mm, h_mm, score}, sorted by
    (frame, id); also the ground-truth exchange format.

    By default every tracklet that ever reached confirmed status is
    exported — termination does not retract earlier output.  Pass
    `statuses` to filter on current lifecycle status instead.
    """
    rows = []
    for t in track_set.tracklets.values():
        if statuses is None:
            if not t.was_confirmed:
                continue
        elif t.status not in statuses:
            continue
        for s in t.states:
            rows.append(
                {"frame": s.frame_index, "id": t.id,
                 "x_mm": float(s.world_xy[0]), "y_mm": float(s.world_xy[1]),
                 "h_mm": float(s.height_mm), "score": float(s.score)}
            )
    rows.sort(key=lambda r: (r["frame"], r["id"]))
    _write_jsonl(path, rows)


def load_tracks(path) -> TrackSet:
    """Track JSONL -> TrackSet of confirmed tracklets (the file format
    carries no lifecycle data)."""
    states: dict[int, list[TrackState]] = {}
    try:
        for r in _read_jsonl(path):
            states.setdefault(int(r["id"]), []).append(
                TrackState(
                    frame_index=int(r["frame"]),
                    world_xy=(float(r["x_mm"]), float(r["y_mm"])),
                    height_mm=float(r["h_mm"]),
                    score=float(r.get("score", 1.0)),
                )
            )
    except (KeyError, ValueError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: bad track file: {exc}") from exc
    ts = TrackSet()
    for tid in sorted(states):
        tracklet_states = sorted(states[tid], key=lambda s: s.frame_index)
        ts.add(Tracklet(id=tid, states=tracklet_states, status=CONFIRMED))
        ts.frame_cursor = max(ts.frame_cursor, tracklet_states[-1].frame_index)
    return ts


def save_edit_log(path, log: EditLog) -> None:
    """Header line {base_digest}, then one EditOp per line."""
    rows = [{"base_digest": log.base_digest}]
    rows.extend(op.to_dict() for op in log.ops)
    _write_jsonl(path, rows)


def load_edit_log(path) -> EditLog:
    rows = list(_read_jsonl(path))
    if not rows or "base_digest" not in rows[0]:
        raise FormatError(f"{path}: edit log must start with a base_digest line")
    try:
        ops = [EditOp.from_dict(r) for r in rows[1:]]
    except (TypeError, ValueError) as exc:
        raise FormatError(f"{path}: bad edit op: {exc}") from exc
    return EditLog(base_digest=rows[0]["base_digest"], ops=ops)


# ---------------------------------------------------------------------------
# per-camera label CSV


def label_csv_path(root, camera_id) -> Path:
    return Path(root) / f"labels_cam{camera_id}.csv"


def save_label_csv(path, records: list[LabelRecord]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(
            ["frame", "id", "bb_left", "bb_top", "bb_width", "bb_height", "conf"]
        )
        for r in records:
            writer.writerow(
                [r.frame, r.track_id, f"{r.box.left:.2f}", f"{r.box.top:.2f}",
                 f"{r.box.width:.2f}", f"{r.box.height:.2f}", f"{r.conf:.4f}"]
            )


def load_label_csv(path) -> list[dict]:
    with open(path, newline="") as f:
        return [
            {
                "frame": int(row["frame"]), "id": int(row["id"]),
                "bb_left": float(row["bb_left"]), "bb_top": float(row["bb_top"]),
                "bb_width": float(row["bb_width"]),
                "bb_height": float(row["bb_height"]),
                "conf": float(row["conf"]),
            }
            for row in csv.DictReader(f)
        ]


# ---------------------------------------------------------------------------
# heatmaps (externally produced ground-point model output)


def save_heatmap(path, values: np.ndarray, camera_id) -> None:
    """Raw float32 binary at ``path`` plus a ``path + '.json'`` sidecar."""
    values = np.asarray(values, dtype=np.float32)
    Path(path).write_bytes(values.tobytes())
    sidecar = {"camera": camera_id, "shape": list(values.shape), "dtype": "float32"}
    Path(str(path) + ".json").write_text(json.dumps(sidecar))


def load_heatmap(path) -> tuple[np.ndarray, object]:
    sidecar = json.loads(Path(str(path) + ".json").read_text())
    if sidecar.get("dtype") != "float32":
        raise FormatError(f"{path}: unsupported heatmap dtype")
    raw = np.frombuffer(Path(path).read_bytes(), dtype=np.float32)
    values = raw.reshape(sidecar["shape"]).copy()
    return values, sidecar.get("camera")


# ---------------------------------------------------------------------------
# scene specs


def scene_spec_from_dict(doc: dict) -> SceneSpec:
    try:
        cameras = tuple(camera_from_dict(c) for c in doc["cameras"])
        actors = tuple(
            ActorSpec(
                waypoints=tuple((float(x), float(y)) for x, y in a["waypoints"]),
                height_mm=float(a["height_mm"]),
                radius_mm=float(a.get("radius_mm", 160.0)),
                speed_mm_s=float(a.get("speed_mm_s", 1000.0)),
                color=tuple(a.get("color", (200, 60, 60))),
            )
            for a in doc.get("actors", [])
        )
        markers = tuple(
            MarkerSpec(
                id=m["id"], x_mm=float(m["x_mm"]), y_mm=float(m["y_mm"]),
                yaw_rad=float(m.get("yaw_rad", 0.0)),
                side_mm=float(m.get("side_mm", 150.0)),
            )
            for m in doc.get("markers", [])
        )
        boxes = tuple(
            BoxSpec(
                min_corner=tuple(float(v) for v in b["min_corner"]),
                max_corner=tuple(float(v) for v in b["max_corner"]),
                color=tuple(b.get("color", (120, 120, 120))),
            )
            for b in doc.get("boxes", [])
        )
        bounds = doc.get("bounds_mm")
        return SceneSpec(
            duration_s=float(doc["duration_s"]),
            cameras=cameras,
            actors=actors,
            markers=markers,
            boxes=boxes,
            fps=float(doc.get("fps", 15.0)),
            seed=int(doc.get("seed", 0)),
            ground=bool(doc.get("ground", True)),
            bounds_mm=(tuple(bounds[0]), tuple(bounds[1])) if bounds else None,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"bad scene spec: {exc}") from exc


def load_scene_spec(path) -> SceneSpec:
    return scene_spec_from_dict(json.loads(Path(path).read_text()))
