"""HTTP annotation service.

Serves sequences found under a data directory; each sequence is a
subdirectory holding at least ``tracks.jsonl``, plus (for top-down frame
rendering) ``meta.json``, ``calib.json`` and the ``cam{ID}/*.pgm`` depth
streams, and optionally ``gt.jsonl`` for metrics.  Edits are persisted to
``edits.jsonl`` beside the track file and replayed on startup, so the
service is stateless across restarts.

Concurrency: reads are lock-free against an immutable snapshot; each
sequence serializes writers through one lock, and a POSTed edit is
applied, persisted and published atomically under it.

Top-down PNGs are rendered with pixel column = grid x-cell (m), pixel
row = grid y-cell (n); brightness encodes surface height.  The
``GET /sequences/{s}`` info endpoint exposes the grid so a client can map
canvas clicks back to world millimetres.
"""

from __future__ import annotations

import colorsys
import io as iolib
import json
import threading
from dataclasses import dataclass
from pathlib import Path

from fastapi import FastAPI, HTTPException, Query, Request
from fastapi.responses import JSONResponse, Response
from fastapi.staticfiles import StaticFiles
from PIL import Image, ImageDraw

from . import io as tio
from .annotate import (
    DigestMismatch,
    EditLog,
    EditOp,
    FrameConflict,
    InvalidRange,
    UnknownId,
    apply_edit,
    replay_edit_log,
    track_set_digest,
)
from .fusion import grid_from_rig, reconstruct_point_cloud, topdown_heightmap, voxelize
from .geometry import GridSpec
from .metrics import EmptyGroundTruth, evaluate
from .track import TrackSet

EDITS_NAME = "edits.jsonl"
TRACKS_NAME = "tracks.jsonl"


def id_color(track_id: int) -> tuple[int, int, int]:
    """Deterministic, well-spread per-id RGB color (golden-angle hue)."""
    hue = (track_id * 0.61803398875) % 1.0
    r, g, b = colorsys.hsv_to_rgb(hue, 0.85, 1.0)
    return int(r * 255), int(g * 255), int(b * 255)


@dataclass
class _Sequence:
    root: Path
    base: TrackSet
    current: TrackSet
    digest: str
    log: EditLog
    lock: threading.Lock
    rig: dict | None
    meta: dict | None
    grid: GridSpec | None

    @property
    def n_frames(self) -> int:
        if self.meta is not None:
            return int(self.meta["n_frames"])
        frames = [
            s.frame_index
            for t in self.current.tracklets.values()
            for s in t.states
        ]
        return max(frames) + 1 if frames else 0


def _load_sequence(root: Path) -> _Sequence:
    base = tio.load_tracks(root / TRACKS_NAME)
    edits_path = root / EDITS_NAME
    if edits_path.is_file():
        log = tio.load_edit_log(edits_path)
        current = replay_edit_log(base, log)
    else:
        log = EditLog(base_digest=track_set_digest(base))
        current = base

    meta = tio.read_meta(root) if (root / "meta.json").is_file() else None
    rig = (
        tio.load_calibration(root / "calib.json")
        if (root / "calib.json").is_file()
        else None
    )
    grid = None
    if rig is not None:
        manifest = root / "manifest.json"
        if manifest.is_file():
            g = json.loads(manifest.read_text()).get("grid")
            if g:
                grid = GridSpec(
                    origin=tuple(g["origin"]), dims=tuple(g["dims"]),
                    cell_mm=g["cell_mm"],
                )
        if grid is None:
            grid = grid_from_rig(rig.values())
    return _Sequence(
        root=root, base=base, current=current,
        digest=track_set_digest(current), log=log,
        lock=threading.Lock(), rig=rig, meta=meta, grid=grid,
    )


def _tracks_rows(track_set: TrackSet, lo=None, hi=None) -> list[dict]:
    rows = []
    for t in sorted(track_set.tracklets.values(), key=lambda t: t.id):
        for s in t.states:
            if lo is not None and s.frame_index < lo:
                continue
            if hi is not None and s.frame_index > hi:
                continue
            rows.append(
                {
                    "frame": s.frame_index, "id": t.id,
                    "x_mm": s.world_xy[0], "y_mm": s.world_xy[1],
                    "h_mm": s.height_mm, "score": s.score,
                }
            )
    rows.sort(key=lambda r: (r["frame"], r["id"]))
    return rows


def create_app(data_dir: Path, frontend_dir: Path | None = None) -> FastAPI:
    data_dir = Path(data_dir)
    if not data_dir.is_dir():
        raise NotADirectoryError(f"data directory {data_dir} does not exist")
    app = FastAPI(title="toptrack annotation service")
    sequences: dict[str, _Sequence] = {}
    registry_lock = threading.Lock()

    def seq(name: str) -> _Sequence:
        with registry_lock:
            if name not in sequences:
                root = data_dir / name
                if not (root.is_dir() and (root / TRACKS_NAME).is_file()):
                    raise HTTPException(404, f"unknown sequence {name!r}")
                sequences[name] = _load_sequence(root)
            return sequences[name]

    @app.get("/sequences")
    def list_sequences():
        names = sorted(
            p.parent.name for p in data_dir.glob(f"*/{TRACKS_NAME}")
        )
        return {"sequences": names}

    @app.get("/sequences/{name}")
    def sequence_info(name: str):
        s = seq(name)
        return {
            "id": name,
            "n_frames": s.n_frames,
            "digest": s.digest,
            "track_count": len(s.current.tracklets),
            "grid": None
            if s.grid is None
            else {
                "origin": list(s.grid.origin),
                "dims": list(s.grid.dims),
                "cell_mm": s.grid.cell_mm,
            },
            "cameras": sorted(s.rig, key=str) if s.rig else [],
        }

    @app.get("/sequences/{name}/tracks")
    def get_tracks(
        name: str,
        from_: int | None = Query(None, alias="from"),
        to: int | None = Query(None),
    ):
        s = seq(name)
        return {"digest": s.digest, "tracks": _tracks_rows(s.current, from_, to)}

    @app.get("/sequences/{name}/frames/{frame}/topdown")
    def topdown_png(name: str, frame: int, scale: int = 4, trail: int = 30):
        s = seq(name)
        if s.rig is None or s.grid is None or s.meta is None:
            raise HTTPException(404, "sequence has no depth data to render")
        if not 0 <= frame < s.n_frames:
            raise HTTPException(404, f"frame {frame} out of range")
        scale = max(1, min(8, scale))
        png = _render_topdown(s, frame, scale, trail)
        return Response(content=png, media_type="image/png")

    @app.post("/sequences/{name}/edits")
    def post_edit(name: str, payload: dict):
        s = seq(name)
        client_digest = payload.pop("base_digest", None)
        try:
            op = EditOp.from_dict(payload)
        except (TypeError, ValueError) as exc:
            raise HTTPException(422, f"bad edit op: {exc}") from exc
        with s.lock:
            if client_digest != s.digest:
                return JSONResponse(
                    status_code=409,
                    content={
                        "detail": "digest mismatch: tracks changed since fetch",
                        "digest": s.digest,
                    },
                )
            try:
                updated = apply_edit(s.current, op)
            except (UnknownId, FrameConflict, InvalidRange) as exc:
                raise HTTPException(409, str(exc)) from exc
            created = sorted(set(updated.tracklets) - set(s.current.tracklets))
            s.log.ops.append(op)
            tio.save_edit_log(s.root / EDITS_NAME, s.log)
            s.current = updated
            s.digest = track_set_digest(updated)
            return {"digest": s.digest, "created_ids": created}

    @app.get("/sequences/{name}/metrics")
    def get_metrics(name: str, gt: str = Query("gt.jsonl")):
        s = seq(name)
        gt_path = (s.root / Path(gt).name).resolve()
        if not gt_path.is_file():
            raise HTTPException(404, f"no ground truth file {gt!r}")
        try:
            report = evaluate(tio.load_tracks(gt_path), s.current)
        except EmptyGroundTruth as exc:
            raise HTTPException(422, str(exc)) from exc
        return report.as_dict()

    @app.get("/sequences/{name}/editlog")
    def get_editlog(name: str):
        s = seq(name)
        return {
            "base_digest": s.log.base_digest,
            "ops": [op.to_dict() for op in s.log.ops],
        }

    @app.exception_handler(DigestMismatch)
    def digest_mismatch_handler(request: Request, exc: DigestMismatch):
        return JSONResponse(status_code=409, content={"detail": str(exc)})

    if frontend_dir is None:
        candidate = Path(__file__).resolve().parents[2] / "frontend" / "dist"
        frontend_dir = candidate if candidate.is_dir() else None
    if frontend_dir is not None and Path(frontend_dir).is_dir():
        app.mount("/", StaticFiles(directory=frontend_dir, html=True), name="ui")

    return app


def _render_topdown(s: _Sequence, frame: int, scale: int, trail: int) -> bytes:
    import numpy as np

    fps = float(s.meta["fps"])
    cameras = list(s.meta["cameras"])
    frames = [tio.load_depth_frame(s.root, c, frame, fps) for c in cameras]
    cloud = reconstruct_point_cloud(frames, s.rig)
    top = topdown_heightmap(voxelize(cloud, s.grid))

    nz = max(1, s.grid.dims[2])
    gray = np.clip(top.values.astype(float) / nz * 255.0, 0, 255).astype(np.uint8)
    # values are indexed [m, n] = (x-cell, y-cell): transpose so x runs
    # along image columns
    img = Image.fromarray(gray.T, mode="L").convert("RGB")
    img = img.resize((img.width * scale, img.height * scale), Image.NEAREST)
    draw = ImageDraw.Draw(img)

    ox, oy, _ = s.grid.origin
    cell = s.grid.cell_mm

    def to_px(x_mm: float, y_mm: float) -> tuple[float, float]:
        return ((x_mm - ox) / cell * scale, (y_mm - oy) / cell * scale)

    for t in sorted(s.current.tracklets.values(), key=lambda t: t.id):
        color = id_color(t.id)
        pts = [
            to_px(*st.world_xy)
            for st in t.states
            if frame - trail <= st.frame_index <= frame
        ]
        if len(pts) >= 2:
            draw.line(pts, fill=color, width=max(1, scale // 2))
        here = next(
            (st for st in t.states if st.frame_index == frame), None
        )
        if here is not None:
            x, y = to_px(*here.world_xy)
            r = 3 * scale
            draw.ellipse([x - r, y - r, x + r, y + r], outline=color,
                         width=max(1, scale // 2))
            draw.text((x + r + 2, y - r), str(t.id), fill=color)

    buf = iolib.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()
