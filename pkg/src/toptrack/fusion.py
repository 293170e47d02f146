"""Depth fusion: merge synchronized depth frames into a world point cloud,
voxelize it, and project the voxels to a top-down heightmap.

Heightmap semantics: a cell value k > 0 means the highest occupied voxel in
that column is the k-th layer above the grid origin, so k * cell_mm is the
height of the column's top surface (with the default ground-anchored grid).
0 means the column is empty.  One heightmap unit = 20 mm at the default
resolution.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import CameraModel, GridSpec

DEFAULT_CELL_MM = 20.0
DEFAULT_MAX_DEPTH_MM = 6000.0
DEFAULT_Z_MAX_MM = 2600.0


class UnknownCamera(KeyError):
    """A depth frame references a camera that is not in the rig."""


class MismatchedFrameIndex(ValueError):
    """Frames passed to fusion do not share a single frame index."""


class EmptyGrid(ValueError):
    """Voxel grid has a zero-sized dimension."""


@dataclass
class DepthFrame:
    """One camera's depth image: uint16 millimeters, 0 = no measurement."""

    camera_id: str
    frame_index: int
    timestamp_ms: float
    depth: np.ndarray  # (height, width) uint16

    def __post_init__(self):
        self.depth = np.asarray(self.depth)
        if self.depth.ndim != 2:
            raise ValueError(f"depth must be 2-D, got shape {self.depth.shape}")
        if self.depth.dtype != np.uint16:
            self.depth = self.depth.astype(np.uint16)

    @property
    def height(self) -> int:
        return self.depth.shape[0]

    @property
    def width(self) -> int:
        return self.depth.shape[1]


@dataclass
class PointCloud:
    """World-frame points (mm) with optional per-point RGB colors."""

    points: np.ndarray  # (N, 3) float
    colors: np.ndarray | None = None  # (N, 3) uint8

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if self.colors is not None:
            self.colors = np.asarray(self.colors, dtype=np.uint8).reshape(-1, 3)
            if len(self.colors) != len(self.points):
                raise ValueError(
                    f"{len(self.colors)} colors for {len(self.points)} points"
                )

    def __len__(self) -> int:
        return len(self.points)

    @staticmethod
    def empty(with_colors: bool = False) -> "PointCloud":
        return PointCloud(
            np.empty((0, 3)), np.empty((0, 3), dtype=np.uint8) if with_colors else None
        )


@dataclass
class VoxelGrid:
    """Binary occupancy over a GridSpec lattice."""

    grid: GridSpec
    occupancy: np.ndarray  # (nx, ny, nz) bool
    dropped: int = 0  # points that fell outside the grid

    def __post_init__(self):
        self.occupancy = np.asarray(self.occupancy, dtype=bool)
        if self.occupancy.shape != tuple(self.grid.dims):
            raise ValueError(
                f"occupancy shape {self.occupancy.shape} != grid dims {self.grid.dims}"
            )


@dataclass
class TopDownMap:
    """Per-column height of the occupied voxel stack (0 = empty column)."""

    values: np.ndarray  # (nx, ny) uint16
    cell_mm: float = DEFAULT_CELL_MM
    origin_xy: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.uint16)
        if self.values.ndim != 2:
            raise ValueError(f"values must be 2-D, got shape {self.values.shape}")

    @property
    def dims(self) -> tuple[int, int]:
        return self.values.shape

    def cell_center_xy(self, m: int, n: int) -> np.ndarray:
        ox, oy = self.origin_xy
        return np.array([ox + (m + 0.5) * self.cell_mm, oy + (n + 0.5) * self.cell_mm])


def reconstruct_point_cloud(
    frames,
    rig,
    rgb=None,
    max_depth_mm: float = DEFAULT_MAX_DEPTH_MM,
) -> PointCloud:
    """Backproject all valid depth pixels of synchronized frames into one
    world point cloud.

    Args:
        frames: iterable of DepthFrame sharing one frame_index.
        rig: iterable of CameraModel (or a dict id -> CameraModel).
        rgb: optional dict camera_id -> (H, W, 3) uint8 registered color
            image; when given for every frame, colors are attached.
        max_depth_mm: measurements beyond this are discarded as outliers.

    Raises UnknownCamera / MismatchedFrameIndex on inconsistent input.
    """
    if isinstance(rig, dict):
        cameras = dict(rig)
    else:
        cameras = {c.id: c for c in rig}
    frames = list(frames)

    indices = {f.frame_index for f in frames}
    if len(indices) > 1:
        raise MismatchedFrameIndex(f"frames span multiple indices: {sorted(indices)}")

    want_colors = rgb is not None and all(f.camera_id in rgb for f in frames)
    chunks, color_chunks = [], []
    for frame in frames:
        cam = cameras.get(frame.camera_id)
        if cam is None:
            raise UnknownCamera(frame.camera_id)
        d = frame.depth.astype(float)
        valid = (d > 0) & (d <= max_depth_mm)
        if not valid.any():
            continue
        vs, us = np.nonzero(valid)
        z = d[vs, us]
        k = cam.intrinsics
        pts_cam = np.stack(
            [(us - k.cx) / k.fx * z, (vs - k.cy) / k.fy * z, z], axis=1
        )
        inv = cam.pose.inverse()
        chunks.append(pts_cam @ inv.rotation.T + inv.translation)
        if want_colors:
            color_chunks.append(np.asarray(rgb[frame.camera_id])[vs, us])

    if not chunks:
        return PointCloud.empty(with_colors=want_colors)
    points = np.concatenate(chunks)
    colors = np.concatenate(color_chunks) if want_colors else None
    return PointCloud(points, colors)


def voxelize(cloud: PointCloud, grid: GridSpec) -> VoxelGrid:
    """Discretize a point cloud into binary voxel occupancy.

    A cell is set iff at least one point lies in its half-open cube; a
    point exactly on a boundary belongs to the higher-index cell.  Points
    outside the grid are dropped and counted.
    """
    nx, ny, nz = grid.dims
    if nx <= 0 or ny <= 0 or nz <= 0:
        raise EmptyGrid(f"grid dims must be positive, got {grid.dims}")
    occ = np.zeros((nx, ny, nz), dtype=bool)
    if len(cloud) == 0:
        return VoxelGrid(grid, occ)
    idx = np.floor((cloud.points - np.asarray(grid.origin)) / grid.cell_mm).astype(np.int64)
    inside = np.all((idx >= 0) & (idx < np.array([nx, ny, nz])), axis=1)
    kept = idx[inside]
    occ[kept[:, 0], kept[:, 1], kept[:, 2]] = True
    return VoxelGrid(grid, occ, dropped=int(len(cloud) - inside.sum()))


def topdown_heightmap(grid: VoxelGrid) -> TopDownMap:
    """Collapse a voxel grid to its per-column top surface heights."""
    occ = grid.occupancy
    nz = occ.shape[2]
    any_col = occ.any(axis=2)
    # argmax over the reversed z axis finds the highest occupied voxel
    top_from_above = np.argmax(occ[:, :, ::-1], axis=2)
    values = np.where(any_col, nz - top_from_above, 0).astype(np.uint16)
    ox, oy, _ = grid.grid.origin
    return TopDownMap(values, cell_mm=grid.grid.cell_mm, origin_xy=(ox, oy))


def grid_from_rig(
    rig,
    margin_mm: float = 1000.0,
    z_max_mm: float = DEFAULT_Z_MAX_MM,
    cell_mm: float = DEFAULT_CELL_MM,
) -> GridSpec:
    """Derive a ground-anchored grid covering the rig's footprint.

    The XY extent is the bounding box of the camera centers and of each
    camera's optical-axis intersection with the ground plane, expanded by
    ``margin_mm``.  Z spans [0, z_max_mm].
    """
    pts = []
    for cam in rig:
        c = cam.pose.center
        pts.append(c[:2])
        axis = cam.pose.rotation.T @ np.array([0.0, 0.0, 1.0])
        if axis[2] < -1e-9:  # looking downward: axis hits the ground
            s = -c[2] / axis[2]
            pts.append((c + s * axis)[:2])
    if not pts:
        raise ValueError("rig is empty")
    pts = np.asarray(pts)
    lo = pts.min(axis=0) - margin_mm
    hi = pts.max(axis=0) + margin_mm
    nx = int(np.ceil((hi[0] - lo[0]) / cell_mm))
    ny = int(np.ceil((hi[1] - lo[1]) / cell_mm))
    nz = int(np.ceil(z_max_mm / cell_mm))
    return GridSpec(origin=(lo[0], lo[1], 0.0), dims=(nx, ny, nz), cell_mm=cell_mm)
