"""Lift confirmed tracks to 3D person boxes and project them into each
camera view as tight 2D bounding boxes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fusion import TopDownMap
from .geometry import CameraModel, project_points
from .track import TrackSet

PERSON_FOOTPRINT_MM = 1000.0  # 100 cm x 100 cm box, bottom-centered on the track


class EmptyRegion(ValueError):
    """Height requested over a region with no occupied cells."""


class NonPositiveHeight(ValueError):
    pass


@dataclass(frozen=True)
class BoundingBox2D:
    """Axis-aligned pixel box, already clipped to the image."""

    left: float
    top: float
    width: float
    height: float
    clipped: bool = False


@dataclass(frozen=True)
class LabelRecord:
    frame: int
    camera: str
    track_id: int
    box: BoundingBox2D
    conf: float = 1.0


def estimate_height(topdown: TopDownMap, region) -> float:
    """Person height in mm from the peak heightmap value in a cell region.

    ``region`` is a half-open cell rectangle (m0, n0, m1, n1).  Each
    heightmap unit is cell_mm (20 mm by default).
    """
    m0, n0, m1, n1 = region
    patch = topdown.values[max(0, m0):m1, max(0, n0):n1]
    if patch.size == 0 or not patch.any():
        raise EmptyRegion(f"no occupied cells in region {region}")
    return float(patch.max()) * topdown.cell_mm


def person_cube(ground_xy, height_mm: float, footprint_mm: float = PERSON_FOOTPRINT_MM) -> np.ndarray:
    """8 world corners of the person box: footprint x footprint x height,
    bottom-centered at ground_xy on z = 0."""
    if height_mm <= 0:
        raise NonPositiveHeight(f"height must be positive, got {height_mm}")
    x, y = float(ground_xy[0]), float(ground_xy[1])
    h = footprint_mm / 2.0
    corners = []
    for dz in (0.0, height_mm):
        for dx, dy in ((-h, -h), (-h, h), (h, -h), (h, h)):
            corners.append((x + dx, y + dy, dz))
    return np.array(corners)


def project_person_box(corners: np.ndarray, camera: CameraModel) -> BoundingBox2D | None:
    """Tightest pixel rectangle enclosing the projected box corners,
    clipped to the image.  Returns None when no corner is in front of the
    camera or the clipped box is empty.

    Corners behind the camera are ignored (partial-visibility policy), so
    the box covers the visible part of the person only.
    """
    pixels, valid = project_points(camera, corners)
    if not valid.any():
        return None
    pixels = pixels[valid]
    u0, v0 = pixels.min(axis=0)
    u1, v1 = pixels.max(axis=0)
    w, h = camera.intrinsics.width, camera.intrinsics.height
    cu0, cv0 = max(u0, 0.0), max(v0, 0.0)
    cu1, cv1 = min(u1, float(w)), min(v1, float(h))
    if cu1 - cu0 <= 0 or cv1 - cv0 <= 0:
        return None
    clipped = bool(not valid.all() or cu0 > u0 or cv0 > v0 or cu1 < u1 or cv1 < v1)
    return BoundingBox2D(left=float(cu0), top=float(cv0),
                         width=float(cu1 - cu0), height=float(cv1 - cv0),
                         clipped=clipped)


def generate_label_records(tracks: TrackSet, rig) -> list[LabelRecord]:
    """Project every confirmed track state into every camera.

    One record per (frame, camera, track_id) where the person box is
    visible; sorted by that key.  Heights come from the per-state height
    estimate stored during tracking.
    """
    cameras = list(rig.values()) if isinstance(rig, dict) else list(rig)
    records = []
    for tracklet in tracks.tracklets.values():
        # ever-confirmed: a terminated tracklet keeps the labels it earned
        if not tracklet.was_confirmed:
            continue
        for state in tracklet.states:
            if state.height_mm <= 0:
                continue
            corners = person_cube(state.world_xy, state.height_mm)
            for cam in cameras:
                box = project_person_box(corners, cam)
                if box is not None:
                    records.append(
                        LabelRecord(frame=state.frame_index, camera=cam.id,
                                    track_id=tracklet.id, box=box,
                                    conf=state.score)
                    )
    records.sort(key=lambda r: (r.frame, r.camera, r.track_id))
    return records
