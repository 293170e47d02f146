"""Top-down person detection.

Two detectors are provided:
  - a two-stage detector on the fused heightmap: local-maxima proposals
    followed by a pluggable crop classifier (the built-in one is a simple
    height-band heuristic; a learned model can be dropped in);
  - rule-based fusion of per-camera ground-point heatmaps warped onto the
    ground grid (per-cell max across views, Gaussian blur, local maxima).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import ndimage

from .fusion import TopDownMap
from .geometry import GridSpec

CROP_SIDE = 20  # cells; 40 cm at the default 20 mm resolution


class BadCropShape(ValueError):
    """Classifier fed a crop that is not CROP_SIDE x CROP_SIDE."""


class DimensionMismatch(ValueError):
    """Heatmap inputs are inconsistent with each other or the grid."""


@dataclass(frozen=True)
class Proposal:
    """A candidate person location: a local maximum of the heightmap with
    the surrounding crop."""

    cell: tuple[int, int]
    peak_value: int
    crop: np.ndarray  # (CROP_SIDE, CROP_SIDE) uint16


@dataclass(frozen=True)
class Detection:
    """A scored ground-plane person detection."""

    cell: tuple[int, int]
    world_xy: tuple[float, float]
    score: float
    peak_value: int = 0


@dataclass
class Heatmap:
    """Non-negative response map, either per camera view or fused ("ground")."""

    camera_id: str
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.ndim != 2:
            raise DimensionMismatch(f"heatmap must be 2-D, got shape {self.values.shape}")
        if (self.values < 0).any():
            raise ValueError("heatmap values must be non-negative")


@dataclass(frozen=True)
class DetectorParams:
    min_height_cells: int = 10
    window: int = 5
    nms_radius_cells: float = 10.0
    keep_threshold: float = 0.5


@dataclass(frozen=True)
class FuseParams:
    blur_sigma_cells: float = 2.0
    min_score: float = 0.1
    window: int = 5
    nms_radius_cells: float = 10.0
    bilinear: bool = False


# Crop classifiers are callables Proposal -> score in [0, 1].
CropClassifier = Callable[[Proposal], float]


@dataclass(frozen=True)
class HeightBandClassifier:
    """Heuristic stand-in for a learned crop classifier: accept a proposal
    iff its peak height is in the human band and the crop has enough
    support cells."""

    min_height_mm: float = 1000.0
    max_height_mm: float = 2200.0
    min_support_cells: int = 30
    cell_mm: float = 20.0

    def __call__(self, proposal: Proposal) -> float:
        height_mm = proposal.peak_value * self.cell_mm
        support = int(np.count_nonzero(proposal.crop))
        ok = self.min_height_mm <= height_mm <= self.max_height_mm and support >= self.min_support_cells
        return 1.0 if ok else 0.0


def _local_maxima(values: np.ndarray, window: int, min_value: float) -> np.ndarray:
    """Local maxima of ``values`` over a ``window`` x ``window`` neighborhood,
    collapsing ties: a connected plateau of equal-valued window-maximal cells
    yields a single cell (the member nearest the plateau centroid, row-major on
    ties).  A plateau with no strictly lower cell in any member's window is not
    a maximum, so a constant map yields nothing.  Returns an (K, 2) index array
    in row-major order.

    Isolated single-cell maxima come out unchanged; the collapse only matters
    when quantization flattens a peak into a plateau.
    """
    if window < 3 or window % 2 == 0:
        raise ValueError(f"window must be odd and >= 3, got {window}")
    values = values.astype(np.float64)
    size = (window, window)
    window_max = ndimage.maximum_filter(values, size=size, mode="constant", cval=-np.inf)
    window_min = ndimage.minimum_filter(values, size=size, mode="constant", cval=np.inf)
    candidates = (values >= window_max) & (values >= min_value)
    # Adjacent candidates are equal by construction (each lies in the other's
    # window), so plain 8-connected labeling groups exactly the plateaus.
    labels, n_labels = ndimage.label(candidates, structure=np.ones((3, 3), dtype=bool))
    out: list[tuple[int, int]] = []
    for lab in range(1, n_labels + 1):
        members = np.argwhere(labels == lab)
        value = values[members[0, 0], members[0, 1]]
        if window_min[members[:, 0], members[:, 1]].min() >= value:
            continue  # flat out to every window edge: not a peak
        centroid = members.mean(axis=0)
        d2 = ((members - centroid) ** 2).sum(axis=1)
        best = members[np.lexsort((members[:, 1], members[:, 0], d2))[0]]
        out.append((int(best[0]), int(best[1])))
    out.sort()
    return np.asarray(out, dtype=int).reshape(-1, 2)


def _greedy_nms(cells: np.ndarray, values: np.ndarray, radius: float) -> list[int]:
    """Greedy suppression by descending value, ties broken row-major.
    Returns indices into ``cells`` in the kept order."""
    order = np.lexsort((cells[:, 1], cells[:, 0], -np.asarray(values, dtype=float)))
    kept: list[int] = []
    for i in order:
        c = cells[i]
        if all(np.hypot(*(c - cells[j])) > radius for j in kept):
            kept.append(int(i))
    return kept


def extract_crop(values: np.ndarray, cell: tuple[int, int], side: int = CROP_SIDE) -> np.ndarray:
    """Zero-padded ``side`` x ``side`` patch centered at ``cell``
    (rows cell[0]-side//2 .. cell[0]+side//2-1, same for columns)."""
    m, n = cell
    half = side // 2
    crop = np.zeros((side, side), dtype=values.dtype)
    m0, m1 = max(0, m - half), min(values.shape[0], m + half)
    n0, n1 = max(0, n - half), min(values.shape[1], n + half)
    crop[m0 - (m - half): m1 - (m - half), n0 - (n - half): n1 - (n - half)] = values[m0:m1, n0:n1]
    return crop


def extract_proposals(topdown: TopDownMap, params: DetectorParams = DetectorParams()) -> list[Proposal]:
    """Local maxima of the heightmap above the minimum height, greedily
    NMS-suppressed within ``nms_radius_cells``.

    Equal-valued plateaus collapse to one proposal each (height quantization
    flattens every rounded top into a small plateau); a map with no strictly
    lower surround anywhere -- e.g. a constant map -- produces none.  Output
    order is deterministic: value descending, then row-major.
    """
    values = topdown.values
    cells = _local_maxima(values, params.window, params.min_height_cells)
    if len(cells) == 0:
        return []
    peak = values[cells[:, 0], cells[:, 1]]
    kept = _greedy_nms(cells, peak, params.nms_radius_cells)
    return [
        Proposal(
            cell=(int(cells[i, 0]), int(cells[i, 1])),
            peak_value=int(peak[i]),
            crop=extract_crop(values, (int(cells[i, 0]), int(cells[i, 1]))),
        )
        for i in kept
    ]


def classify_crop(proposal: Proposal, classifier: CropClassifier) -> float:
    """Score a proposal with the given classifier; validates crop shape."""
    if proposal.crop.shape != (CROP_SIDE, CROP_SIDE):
        raise BadCropShape(f"crop shape {proposal.crop.shape}, expected {(CROP_SIDE, CROP_SIDE)}")
    return float(classifier(proposal))


def detect_people(
    topdown: TopDownMap,
    classifier: CropClassifier = HeightBandClassifier(),
    params: DetectorParams = DetectorParams(),
) -> list[Detection]:
    """Two-stage detector: proposals, then crop classification, keeping
    scores >= params.keep_threshold."""
    detections = []
    for prop in extract_proposals(topdown, params):
        score = classify_crop(prop, classifier)
        if score >= params.keep_threshold:
            m, n = prop.cell
            x, y = topdown.cell_center_xy(m, n)
            detections.append(
                Detection(cell=prop.cell, world_xy=(float(x), float(y)),
                          score=score, peak_value=prop.peak_value)
            )
    return detections


def warp_heatmap_to_grid(
    heatmap: Heatmap, homography: np.ndarray, grid: GridSpec, bilinear: bool = False
) -> np.ndarray:
    """Resample a camera-view heatmap onto the ground grid.

    ``homography`` maps homogeneous image coordinates to grid cell
    coordinates; sampling inverts it and reads the image at each cell
    center (nearest-neighbor by default).  Cells falling outside the image
    get 0.
    """
    nx, ny = grid.dims[0], grid.dims[1]
    h_inv = np.linalg.inv(homography)
    mm, nn = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    cells = np.stack([mm.ravel() + 0.5, nn.ravel() + 0.5, np.ones(nx * ny)])
    img = h_inv @ cells
    with np.errstate(divide="ignore", invalid="ignore"):
        u = img[0] / img[2]
        v = img[1] / img[2]
    in_front = img[2] > 0
    height, width = heatmap.values.shape
    out = np.zeros(nx * ny, dtype=np.float32)
    if bilinear:
        coords = np.stack([np.where(in_front, v, -1), np.where(in_front, u, -1)])
        out = ndimage.map_coordinates(heatmap.values, coords, order=1, mode="constant", cval=0.0)
        out[~in_front] = 0.0
    else:
        ui = np.round(u).astype(np.int64)
        vi = np.round(v).astype(np.int64)
        ok = in_front & (ui >= 0) & (ui < width) & (vi >= 0) & (vi < height)
        out[ok] = heatmap.values[vi[ok], ui[ok]]
    return out.reshape(nx, ny)


def fuse_ground_heatmaps(
    views: Sequence[tuple[Heatmap, np.ndarray]],
    grid: GridSpec,
    params: FuseParams = FuseParams(),
) -> tuple[Heatmap, list[Detection]]:
    """Fuse per-view heatmaps on the ground plane and extract detections.

    Each view is warped with its image-to-grid homography; the fused map
    takes the per-cell maximum across views (not the sum), is blurred with
    ``blur_sigma_cells``, and local maxima above ``min_score``
    become detections with the blurred response as score (clamped to 1).
    """
    nx, ny = grid.dims[0], grid.dims[1]
    fused = np.zeros((nx, ny), dtype=np.float32)
    for heatmap, homography in views:
        homography = np.asarray(homography, dtype=float)
        if homography.shape != (3, 3):
            raise DimensionMismatch(f"homography must be 3x3, got {homography.shape}")
        warped = warp_heatmap_to_grid(heatmap, homography, grid, bilinear=params.bilinear)
        np.maximum(fused, warped, out=fused)
    if params.blur_sigma_cells > 0:
        fused = ndimage.gaussian_filter(fused, sigma=params.blur_sigma_cells)
    ground = Heatmap("ground", fused)

    cells = _local_maxima(fused, params.window, params.min_score)
    detections: list[Detection] = []
    if len(cells):
        peaks = fused[cells[:, 0], cells[:, 1]]
        kept = _greedy_nms(cells, peaks, params.nms_radius_cells)
        ox, oy, _ = grid.origin
        for i in kept:
            m, n = int(cells[i, 0]), int(cells[i, 1])
            detections.append(
                Detection(
                    cell=(m, n),
                    world_xy=(ox + (m + 0.5) * grid.cell_mm, oy + (n + 0.5) * grid.cell_mm),
                    score=float(min(1.0, peaks[i])),
                )
            )
    return ground, detections
