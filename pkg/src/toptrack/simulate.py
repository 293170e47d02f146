"""Synthetic multi-camera RGB-D scene generation with exact ground truth.

People are capsules: a vertical cylinder of radius r from the floor up to
height h - r, closed by a hemispherical cap (total height h).  Depth is
rendered by analytic ray casting against capsules, optional axis-aligned
boxes, and the ground plane; the stored value is the z-distance along the
optical axis in integer millimetres, matching the depth convention of the
fusion stage, so backprojecting a rendered pixel recovers the surface
point exactly (up to quantization).

Rays are cast through integer pixel coordinates — the same lattice the
fusion stage lifts — with (u, v) = (column, row).
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from .calibration import MarkerObservation, canonical_corners
from .fusion import DepthFrame
from .geometry import CameraModel
from .track import CONFIRMED, TrackSet, Tracklet, TrackState

DEFAULT_ACTOR_RADIUS_MM = 160.0
DEFAULT_MARKER_SIDE_MM = 150.0
MAX_SPEED_MM_S = 1500.0

GROUND_COLOR = (70, 70, 70)


class InvalidSpec(ValueError):
    """Scene specification failed validation; message lists each problem."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("; ".join(problems))


@dataclass(frozen=True)
class ActorSpec:
    """A person: capsule of total height ``height_mm`` walking the waypoint
    loop at constant speed."""

    waypoints: tuple
    height_mm: float
    radius_mm: float = DEFAULT_ACTOR_RADIUS_MM
    speed_mm_s: float = 1000.0
    color: tuple[int, int, int] = (200, 60, 60)


@dataclass(frozen=True)
class MarkerSpec:
    """A flat fiducial square on the floor (z = 0), yawed about vertical."""

    id: str
    x_mm: float
    y_mm: float
    yaw_rad: float = 0.0
    side_mm: float = DEFAULT_MARKER_SIDE_MM


@dataclass(frozen=True)
class BoxSpec:
    """Static axis-aligned box — false-positive bait for the detector."""

    min_corner: tuple[float, float, float]
    max_corner: tuple[float, float, float]
    color: tuple[int, int, int] = (120, 120, 120)


@dataclass(frozen=True)
class SceneSpec:
    duration_s: float
    cameras: tuple[CameraModel, ...]
    actors: tuple[ActorSpec, ...] = ()
    markers: tuple[MarkerSpec, ...] = ()
    boxes: tuple[BoxSpec, ...] = ()
    fps: float = 15.0
    seed: int = 0
    ground: bool = True
    bounds_mm: tuple | None = None  # ((xmin, ymin), (xmax, ymax))

    @property
    def n_frames(self) -> int:
        return int(round(self.duration_s * self.fps))


@dataclass
class Scene:
    spec: SceneSpec
    positions: np.ndarray  # (n_frames, n_actors, 2) ground positions, mm
    ground_truth: TrackSet

    @property
    def n_frames(self) -> int:
        return self.positions.shape[0]


def _validate(spec: SceneSpec) -> list[str]:
    problems = []
    if spec.fps <= 0:
        problems.append(f"fps must be > 0, got {spec.fps}")
    if spec.duration_s < 0:
        problems.append(f"duration_s must be >= 0, got {spec.duration_s}")
    for i, a in enumerate(spec.actors):
        tag = f"actors[{i}]"
        if not 1500.0 <= a.height_mm <= 1900.0:
            problems.append(f"{tag}.height_mm {a.height_mm} outside [1500, 1900]")
        if a.radius_mm <= 0 or a.radius_mm >= a.height_mm:
            problems.append(f"{tag}.radius_mm {a.radius_mm} invalid for height")
        if not 0 < a.speed_mm_s <= MAX_SPEED_MM_S:
            problems.append(f"{tag}.speed_mm_s {a.speed_mm_s} outside (0, {MAX_SPEED_MM_S}]")
        if len(a.waypoints) == 0:
            problems.append(f"{tag}.waypoints empty")
        if spec.bounds_mm is not None:
            (x0, y0), (x1, y1) = spec.bounds_mm
            for w in a.waypoints:
                if not (x0 <= w[0] <= x1 and y0 <= w[1] <= y1):
                    problems.append(f"{tag} waypoint {tuple(w)} outside bounds")
        if not (len(a.color) == 3 and all(0 <= c <= 255 for c in a.color)):
            problems.append(f"{tag}.color {a.color} not an RGB triple")
    for i, m in enumerate(spec.markers):
        if m.side_mm <= 0:
            problems.append(f"markers[{i}].side_mm must be > 0")
    ids = [m.id for m in spec.markers]
    if len(ids) != len(set(ids)):
        problems.append("duplicate marker ids")
    return problems


def _loop_path(waypoints) -> tuple[np.ndarray, np.ndarray]:
    """Closed polyline vertices and cumulative arc length, duplicate
    consecutive points removed."""
    pts = [np.asarray(w, dtype=float) for w in waypoints]
    verts = [pts[0]]
    for p in pts[1:] + [pts[0]]:
        if np.linalg.norm(p - verts[-1]) > 0:
            verts.append(p)
    v = np.array(verts)
    seg = np.linalg.norm(np.diff(v, axis=0), axis=1)
    return v, np.concatenate([[0.0], np.cumsum(seg)])


def actor_position(actor: ActorSpec, t_s: float) -> np.ndarray:
    """Ground position after walking ``t_s`` seconds along the loop."""
    verts, cum = _loop_path(actor.waypoints)
    total = cum[-1]
    if total == 0:
        return verts[0].copy()
    d = (actor.speed_mm_s * t_s) % total
    i = int(np.searchsorted(cum, d, side="right")) - 1
    i = min(i, len(verts) - 2)
    f = (d - cum[i]) / (cum[i + 1] - cum[i])
    return verts[i] * (1.0 - f) + verts[i + 1] * f


def generate_scene(spec: SceneSpec) -> Scene:
    """Expand a SceneSpec into per-frame actor positions and the
    ground-truth track set (one confirmed track per actor, all frames)."""
    problems = _validate(spec)
    if problems:
        raise InvalidSpec(problems)

    n = spec.n_frames
    positions = np.zeros((n, len(spec.actors), 2))
    for j, actor in enumerate(spec.actors):
        for f in range(n):
            positions[f, j] = actor_position(actor, f / spec.fps)

    gt = TrackSet(frame_cursor=n - 1)
    for j, actor in enumerate(spec.actors):
        states = [
            TrackState(
                frame_index=f,
                world_xy=(float(positions[f, j, 0]), float(positions[f, j, 1])),
                height_mm=actor.height_mm,
            )
            for f in range(n)
        ]
        gt.add(Tracklet(id=j + 1, states=states, status=CONFIRMED))
    return Scene(spec=spec, positions=positions, ground_truth=gt)


# ---------------------------------------------------------------------------
# rendering


def _ray_ground(origin, dirs):
    with np.errstate(divide="ignore", invalid="ignore"):
        s = -origin[2] / dirs[:, 2]
    s[~np.isfinite(s) | (s <= 0)] = np.inf
    return s


def _ray_capsule(origin, dirs, center_xy, radius, height):
    """Nearest positive hit parameter against one capsule, inf on miss.
    ``height`` is total height; the cylinder spans z in [0, height-radius]
    and the cap is a hemisphere on top."""
    cap_z = height - radius
    best = np.full(len(dirs), np.inf)

    # cylinder wall
    oxy = origin[:2] - np.asarray(center_xy, dtype=float)
    dxy = dirs[:, :2]
    a = np.einsum("ij,ij->i", dxy, dxy)
    b = 2.0 * dxy @ oxy
    e = oxy @ oxy - radius**2
    disc = b**2 - 4.0 * a * e
    ok = (disc >= 0) & (a > 1e-12)
    sq = np.sqrt(np.where(ok, disc, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        s1 = (-b - sq) / (2.0 * a)
    z1 = origin[2] + s1 * dirs[:, 2]
    hit = ok & (s1 > 1e-9) & (z1 >= 0.0) & (z1 <= cap_z)
    best[hit] = s1[hit]

    # hemispherical cap: both sphere roots, constrained to z >= cap_z
    oc = origin - np.array([center_xy[0], center_xy[1], cap_z])
    a3 = np.einsum("ij,ij->i", dirs, dirs)
    b3 = 2.0 * dirs @ oc
    e3 = oc @ oc - radius**2
    disc3 = b3**2 - 4.0 * a3 * e3
    ok3 = disc3 >= 0
    sq3 = np.sqrt(np.where(ok3, disc3, 0.0))
    for sign in (-1.0, 1.0):
        s = (-b3 + sign * sq3) / (2.0 * a3)
        z = origin[2] + s * dirs[:, 2]
        hit = ok3 & (s > 1e-9) & (z >= cap_z - 1e-9)
        best[hit] = np.minimum(best[hit], s[hit])

    return best


def _ray_box(origin, dirs, lo, hi):
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (np.asarray(lo) - origin) / dirs
        t2 = (np.asarray(hi) - origin) / dirs
    near = np.nanmax(np.minimum(t1, t2), axis=1)
    far = np.nanmin(np.maximum(t1, t2), axis=1)
    s = np.where((near <= far) & (near > 1e-9), near, np.inf)
    return s


def _pixel_rays(camera: CameraModel):
    """World-frame ray origin and per-pixel directions with unit
    optical-axis component, so the hit parameter is the z-depth."""
    k = camera.intrinsics
    us, vs = np.meshgrid(np.arange(k.width), np.arange(k.height))
    d_cam = np.stack(
        [
            (us.ravel() - k.cx) / k.fx,
            (vs.ravel() - k.cy) / k.fy,
            np.ones(k.width * k.height),
        ],
        axis=1,
    )
    rot = camera.pose.rotation
    return camera.pose.center, d_cam @ rot  # rows d_cam @ R == R.T d per ray


def render_depth_frame(
    scene: Scene,
    camera: CameraModel,
    frame_index: int,
    noise_sigma_mm: float = 0.0,
    with_rgb: bool = False,
):
    """Ray-cast one camera's depth image for one frame.

    Misses are 0; hits are z-depth in mm quantized to uint16 after adding
    optional Gaussian noise.  With ``with_rgb`` a registered (H, W, 3)
    uint8 color image rendered on the same rays is returned alongside.
    """
    if not 0 <= frame_index < scene.n_frames:
        raise IndexError(f"frame {frame_index} outside 0..{scene.n_frames - 1}")
    spec = scene.spec
    k = camera.intrinsics
    origin, dirs = _pixel_rays(camera)

    n_px = k.width * k.height
    depth = np.full(n_px, np.inf)
    label = np.full(n_px, -1, dtype=int)  # -2 ground, >=0 actor, <=-3 box

    if spec.ground:
        s = _ray_ground(origin, dirs)
        closer = s < depth
        depth[closer] = s[closer]
        label[closer] = -2
    for j, actor in enumerate(spec.actors):
        s = _ray_capsule(
            origin, dirs, scene.positions[frame_index, j], actor.radius_mm,
            actor.height_mm,
        )
        closer = s < depth
        depth[closer] = s[closer]
        label[closer] = j
    for j, box in enumerate(spec.boxes):
        s = _ray_box(origin, dirs, box.min_corner, box.max_corner)
        closer = s < depth
        depth[closer] = s[closer]
        label[closer] = -3 - j

    hit = np.isfinite(depth)
    if noise_sigma_mm > 0:
        rng = np.random.default_rng(
            [spec.seed, frame_index, zlib.crc32(str(camera.id).encode())]
        )
        depth[hit] += rng.normal(0.0, noise_sigma_mm, int(hit.sum()))
    quant = np.zeros(n_px, dtype=np.uint16)
    quant[hit] = np.clip(np.round(depth[hit]), 0, 65535).astype(np.uint16)

    frame = DepthFrame(
        camera_id=camera.id,
        frame_index=frame_index,
        timestamp_ms=int(round(frame_index * 1000.0 / spec.fps)),
        depth=quant.reshape(k.height, k.width),
    )
    if not with_rgb:
        return frame

    rgb = np.zeros((n_px, 3), dtype=np.uint8)
    rgb[label == -2] = GROUND_COLOR
    for j, actor in enumerate(spec.actors):
        rgb[label == j] = actor.color
    for j, box in enumerate(spec.boxes):
        rgb[label == -3 - j] = box.color
    return frame, rgb.reshape(k.height, k.width, 3)


# ---------------------------------------------------------------------------
# calibration targets


def marker_world_corners(marker: MarkerSpec) -> np.ndarray:
    """(4, 3) world corner coordinates of an on-floor marker."""
    c, s = np.cos(marker.yaw_rad), np.sin(marker.yaw_rad)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    return canonical_corners(marker.side_mm) @ rot.T + np.array(
        [marker.x_mm, marker.y_mm, 0.0]
    )


def synth_marker_observations(
    scene: Scene, noise_px: float = 0.0, seed: int | None = None
) -> list[MarkerObservation]:
    """Project every marker corner into every camera that sees it.

    A corner is visible when it is in front of the camera and its
    (noise-shifted) pixel stays inside the image.
    """
    spec = scene.spec
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    out: list[MarkerObservation] = []
    for camera in spec.cameras:
        kin = camera.intrinsics
        for marker in spec.markers:
            corners = marker_world_corners(marker)
            cam_pts = camera.pose.apply(corners)
            for idx in range(4):
                x, y, z = cam_pts[idx]
                if z <= 1e-6:
                    continue
                u = kin.fx * x / z + kin.cx
                v = kin.fy * y / z + kin.cy
                if noise_px > 0:
                    u += rng.normal(0.0, noise_px)
                    v += rng.normal(0.0, noise_px)
                if 0.0 <= u <= kin.width and 0.0 <= v <= kin.height:
                    out.append(
                        MarkerObservation(
                            camera_id=camera.id,
                            marker_id=marker.id,
                            corner_index=idx,
                            pixel=(float(u), float(v)),
                        )
                    )
    return out
