"""Pinhole camera model, rigid poses and ground-plane homographies.

Conventions used throughout the package:

  World frame (right-handed):
    - X, Y parallel to the ground plane, Z vertical (up).
    - Ground plane: z = 0.  Units: millimeters.

  Camera frame (standard computer vision):
    - X right, Y down, Z forward along the optical axis.
    - A ``Pose`` maps world coordinates to camera coordinates:
      ``x_cam = R @ x_world + t``.

  Image frame:
    - u right (column), v down (row), origin at the top-left corner.
    - A depth image pixel (u, v) with depth d lifts to camera coordinates
      ``((u - cx) / fx * d, (v - cy) / fy * d, d)``.  Depth is the
      z-distance along the optical axis, not the ray length.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np


class NonPositiveDepth(ValueError):
    """Point is on or behind the camera's principal plane."""


class InvalidDepth(ValueError):
    """Depth value is not a positive measurement (0 means 'no data')."""


class DegenerateView(ValueError):
    """Camera geometry does not admit a usable ground-plane homography."""


def _as_vec(x, n) -> np.ndarray:
    v = np.asarray(x, dtype=float).reshape(-1)
    if v.shape != (n,):
        raise ValueError(f"expected a {n}-vector, got shape {np.shape(x)}")
    return v


@dataclass(frozen=True)
class CameraIntrinsics:
    """Ideal pinhole intrinsics (no distortion model).

    fx, fy, cx, cy are in pixels; width/height give the image size.
    """

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not (0 <= self.cx < self.width) or not (0 <= self.cy < self.height):
            raise ValueError(
                f"principal point ({self.cx}, {self.cy}) outside image {self.width}x{self.height}"
            )

    @property
    def matrix(self) -> np.ndarray:
        """3x3 intrinsic matrix K."""
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )


@dataclass(frozen=True)
class Pose:
    """Rigid transform mapping world coordinates to camera coordinates.

    Stored as a unit quaternion (w, x, y, z) plus a translation in mm.
    The quaternion is renormalized on construction; a quaternion whose
    norm is not within 1e-6 of 1 is rejected rather than silently fixed.
    """

    q: tuple[float, float, float, float] = (1.0, 0.0, 0.0, 0.0)
    t: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        q = _as_vec(self.q, 4)
        t = _as_vec(self.t, 3)
        norm = float(np.linalg.norm(q))
        if abs(norm - 1.0) > 1e-6:
            raise ValueError(f"quaternion norm {norm} too far from 1")
        q = q / norm
        if q[0] < 0:  # canonical sign, w >= 0
            q = -q
        object.__setattr__(self, "q", tuple(q))
        object.__setattr__(self, "t", tuple(t))

    @staticmethod
    def identity() -> "Pose":
        return Pose()

    @staticmethod
    def from_matrix(rotation: np.ndarray, translation) -> "Pose":
        """Build from a 3x3 rotation matrix and a translation vector."""
        return Pose(q=tuple(quat_from_matrix(np.asarray(rotation, dtype=float))),
                    t=tuple(_as_vec(translation, 3)))

    @property
    def rotation(self) -> np.ndarray:
        """3x3 rotation matrix."""
        return quat_to_matrix(np.asarray(self.q))

    @property
    def translation(self) -> np.ndarray:
        return np.asarray(self.t)

    def apply(self, points) -> np.ndarray:
        """Transform world points (3,) or (N, 3) into this frame."""
        p = np.asarray(points, dtype=float)
        return p @ self.rotation.T + self.translation

    def inverse(self) -> "Pose":
        r_inv = self.rotation.T
        return Pose.from_matrix(r_inv, -r_inv @ self.translation)

    def compose(self, other: "Pose") -> "Pose":
        """Return the pose equivalent to applying ``other`` first, then ``self``."""
        r = self.rotation @ other.rotation
        t = self.rotation @ other.translation + self.translation
        return Pose.from_matrix(r, t)

    @property
    def center(self) -> np.ndarray:
        """Camera center in world coordinates (-R^T t)."""
        return -self.rotation.T @ self.translation


@dataclass(frozen=True)
class CameraModel:
    """A calibrated camera: identifier, intrinsics and world-to-camera pose."""

    id: str
    intrinsics: CameraIntrinsics
    pose: Pose = dataclasses.field(default_factory=Pose)


@dataclass(frozen=True)
class GridSpec:
    """Axis-aligned lattice over the world, shared by voxelization and the
    ground-plane maps.  ``origin`` is the world position (mm) of the corner
    of cell (0, 0, 0); each cell is the half-open cube
    ``[origin + k*cell, origin + (k+1)*cell)``.
    """

    origin: tuple[float, float, float]
    dims: tuple[int, int, int]
    cell_mm: float = 20.0

    def __post_init__(self):
        object.__setattr__(self, "origin", tuple(_as_vec(self.origin, 3)))
        dims = tuple(int(d) for d in self.dims)
        object.__setattr__(self, "dims", dims)
        if self.cell_mm <= 0:
            raise ValueError(f"cell_mm must be positive, got {self.cell_mm}")

    def cell_center_xy(self, m: int, n: int) -> np.ndarray:
        ox, oy, _ = self.origin
        return np.array([ox + (m + 0.5) * self.cell_mm, oy + (n + 0.5) * self.cell_mm])


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    """Unit quaternion (w, x, y, z) to 3x3 rotation matrix."""
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_from_matrix(r: np.ndarray) -> np.ndarray:
    """3x3 rotation matrix to unit quaternion (w, x, y, z), w >= 0."""
    m00, m01, m02 = r[0]
    m10, m11, m12 = r[1]
    m20, m21, m22 = r[2]
    trace = m00 + m11 + m22
    if trace > 0:
        s = 2.0 * np.sqrt(trace + 1.0)
        q = np.array([0.25 * s, (m21 - m12) / s, (m02 - m20) / s, (m10 - m01) / s])
    elif m00 >= m11 and m00 >= m22:
        s = 2.0 * np.sqrt(1.0 + m00 - m11 - m22)
        q = np.array([(m21 - m12) / s, 0.25 * s, (m01 + m10) / s, (m02 + m20) / s])
    elif m11 >= m22:
        s = 2.0 * np.sqrt(1.0 + m11 - m00 - m22)
        q = np.array([(m02 - m20) / s, (m01 + m10) / s, 0.25 * s, (m12 + m21) / s])
    else:
        s = 2.0 * np.sqrt(1.0 + m22 - m00 - m11)
        q = np.array([(m10 - m01) / s, (m02 + m20) / s, (m12 + m21) / s, 0.25 * s])
    q = q / np.linalg.norm(q)
    return q if q[0] >= 0 else -q


def rotation_angle_rad(a: Pose, b: Pose) -> float:
    """Geodesic angle between the rotations of two poses."""
    r_rel = a.rotation.T @ b.rotation
    cos_ang = np.clip((np.trace(r_rel) - 1.0) / 2.0, -1.0, 1.0)
    return float(np.arccos(cos_ang))


def project_point(camera: CameraModel, world_point) -> np.ndarray:
    """Project a world point (mm) to pixel coordinates (u, v).

    Raises NonPositiveDepth if the point is not strictly in front of the
    camera.  The result may lie outside the image bounds; callers filter.
    """
    cam = camera.pose.apply(_as_vec(world_point, 3))
    z = cam[2]
    if z <= 0:
        raise NonPositiveDepth(f"point has camera-frame depth {z} <= 0")
    k = camera.intrinsics
    return np.array([k.fx * cam[0] / z + k.cx, k.fy * cam[1] / z + k.cy])


def project_points(camera: CameraModel, world_points) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized projection of (N, 3) world points.

    Returns (pixels (N, 2), valid (N,)) where valid marks positive depth;
    pixels of invalid points are NaN.
    """
    cam = camera.pose.apply(np.asarray(world_points, dtype=float).reshape(-1, 3))
    z = cam[:, 2]
    valid = z > 0
    k = camera.intrinsics
    with np.errstate(divide="ignore", invalid="ignore"):
        u = k.fx * cam[:, 0] / z + k.cx
        v = k.fy * cam[:, 1] / z + k.cy
    px = np.stack([u, v], axis=1)
    px[~valid] = np.nan
    return px, valid


def backproject_pixel(camera: CameraModel, pixel, depth_mm: float) -> np.ndarray:
    """Lift a pixel with a depth measurement (mm) back to a world point.

    Raises InvalidDepth for depth <= 0 (the 0 sentinel means "no data").
    """
    if depth_mm <= 0:
        raise InvalidDepth(f"depth must be positive, got {depth_mm}")
    u, v = _as_vec(pixel, 2)
    k = camera.intrinsics
    cam = np.array([(u - k.cx) / k.fx * depth_mm, (v - k.cy) / k.fy * depth_mm, depth_mm])
    return camera.pose.inverse().apply(cam)


def ground_plane_homography(camera: CameraModel, grid: GridSpec,
                            max_condition: float = 1e12) -> np.ndarray:
    """Homography mapping homogeneous image coordinates to continuous
    ground-grid cell coordinates on the z = 0 plane.

    Grid coordinates follow the half-open cell convention: world (x, y, 0)
    maps to ((x - ox) / cell, (y - oy) / cell), so the integer part is the
    cell index.  Raises DegenerateView when the world-to-image plane
    mapping's condition number exceeds ``max_condition`` (e.g. a camera
    whose center lies on the ground plane).
    """
    r = camera.pose.rotation
    t = camera.pose.translation
    # world (x, y, 1) on z=0  ->  image, up to scale
    m = camera.intrinsics.matrix @ np.column_stack([r[:, 0], r[:, 1], t])
    cond = np.linalg.cond(m)
    if not np.isfinite(cond) or cond > max_condition:
        raise DegenerateView(
            f"camera {camera.id}: ground homography condition {cond:.3g} exceeds {max_condition:.3g}"
        )
    ox, oy, _ = grid.origin
    c = grid.cell_mm
    world_to_cell = np.array([[1 / c, 0.0, -ox / c], [0.0, 1 / c, -oy / c], [0.0, 0.0, 1.0]])
    return world_to_cell @ np.linalg.inv(m)


def apply_homography(h: np.ndarray, points) -> np.ndarray:
    """Apply a 3x3 homography to (N, 2) points, with perspective division."""
    p = np.asarray(points, dtype=float).reshape(-1, 2)
    hom = np.column_stack([p, np.ones(len(p))]) @ h.T
    return hom[:, :2] / hom[:, 2:3]


def rigid_align(src: np.ndarray, dst: np.ndarray) -> Pose:
    """Best-fit rigid transform (Kabsch, no scaling) mapping src points
    onto dst points in the least-squares sense.  Both are (N, 3), N >= 3.
    """
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    mu_s = src.mean(axis=0)
    mu_d = dst.mean(axis=0)
    h = (src - mu_s).T @ (dst - mu_d)
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    r = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    return Pose.from_matrix(r, mu_d - r @ mu_s)
