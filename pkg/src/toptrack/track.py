"""Tracking-by-detection on the ground plane.

Per frame: a cost matrix mixing spatial distance and color-histogram
appearance distance is built between live tracklets and detections,
solved with Hungarian matching, and the tracklet lifecycle is updated
(candidate -> confirmed after a run of hits, terminated after a run of
misses).  There is no motion model: association is against each
tracklet's last position.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .detect import Detection
from .fusion import PointCloud

CANDIDATE = "candidate"
CONFIRMED = "confirmed"
TERMINATED = "terminated"

HIST_BINS = 64  # 4 x 4 x 4 RGB

_INFEASIBLE = 1e9  # dominates any sum of real costs during assignment


class NoColor(ValueError):
    """Point cloud has no colors; appearance distance is unavailable."""


class FrameOrderViolation(ValueError):
    """tracker_step called out of frame order."""


@dataclass
class TrackState:
    frame_index: int
    world_xy: tuple[float, float]
    height_mm: float
    histogram: np.ndarray | None = None  # (64,) L1-normalized
    matched: bool = True
    score: float = 1.0


@dataclass
class Tracklet:
    id: int
    states: list[TrackState] = field(default_factory=list)
    status: str = CANDIDATE
    misses: int = 0
    hit_streak: int = 0
    ever_confirmed: bool = False

    @property
    def was_confirmed(self) -> bool:
        """True once confirmed, even after a later termination."""
        return self.ever_confirmed or self.status == CONFIRMED

    @property
    def last(self) -> TrackState:
        return self.states[-1]

    @property
    def first_frame(self) -> int:
        return self.states[0].frame_index

    @property
    def last_frame(self) -> int:
        return self.states[-1].frame_index

    def last_histogram(self) -> np.ndarray | None:
        for state in reversed(self.states):
            if state.histogram is not None:
                return state.histogram
        return None


@dataclass
class TrackSet:
    tracklets: dict[int, Tracklet] = field(default_factory=dict)
    next_id: int = 1
    frame_cursor: int = -1

    def add(self, tracklet: Tracklet):
        if tracklet.id in self.tracklets:
            raise ValueError(f"duplicate tracklet id {tracklet.id}")
        self.tracklets[tracklet.id] = tracklet
        self.next_id = max(self.next_id, tracklet.id + 1)

    def new_id(self) -> int:
        i = self.next_id
        self.next_id += 1
        return i

    def active(self) -> list[Tracklet]:
        return [t for t in self.tracklets.values() if t.status != TERMINATED]

    def confirmed(self) -> list[Tracklet]:
        return [t for t in self.tracklets.values() if t.status == CONFIRMED]


@dataclass(frozen=True)
class TrackerParams:
    w_spatial: float = 0.7
    w_appearance: float = 0.3
    gate_mm: float = 1000.0
    init_score: float = 0.5
    confirm_hits: int = 3
    max_misses: int = 15
    cell_mm: float = 20.0
    appearance_halfwidth_mm: float = 250.0

    def __post_init__(self):
        if self.w_spatial < 0 or self.w_appearance < 0:
            raise ValueError("weights must be non-negative")
        if abs(self.w_spatial + self.w_appearance - 1.0) > 1e-9:
            raise ValueError("w_spatial + w_appearance must equal 1")


def appearance_histogram(cloud: PointCloud, center_xy, halfwidth_mm: float = 250.0):
    """64-bin (4x4x4 RGB) color histogram of the cloud points whose (x, y)
    fall inside the square column around ``center_xy``.

    L1-normalized.  Raises NoColor when the cloud carries no colors;
    returns None when no points fall in the column.
    """
    if cloud.colors is None:
        raise NoColor("point cloud has no colors")
    cx, cy = float(center_xy[0]), float(center_xy[1])
    xy = cloud.points[:, :2]
    inside = (np.abs(xy[:, 0] - cx) <= halfwidth_mm) & (np.abs(xy[:, 1] - cy) <= halfwidth_mm)
    if not inside.any():
        return None
    rgb = cloud.colors[inside].astype(np.int64) // 64  # 4 levels per channel
    bins = rgb[:, 0] * 16 + rgb[:, 1] * 4 + rgb[:, 2]
    hist = np.bincount(bins, minlength=HIST_BINS).astype(float)
    return hist / hist.sum()


def bhattacharyya(h1: np.ndarray, h2: np.ndarray) -> float:
    """Bhattacharyya distance between two normalized histograms, in [0, 1]."""
    bc = float(np.sum(np.sqrt(np.asarray(h1) * np.asarray(h2))))
    return float(np.sqrt(max(0.0, 1.0 - bc)))


def cost_matrix(
    tracklets: list[Tracklet],
    detections: list[Detection],
    cloud: PointCloud | None,
    params: TrackerParams = TrackerParams(),
) -> tuple[np.ndarray, np.ndarray]:
    """Association cost between live tracklets (rows) and detections
    (columns): w_s * min(dist/gate, 1) + w_a * bhattacharyya.

    Pairs farther apart than the gate are marked infeasible.  When either
    side has no histogram (or the cloud has no colors), the appearance
    term is 0 for that pair.  Returns (cost, feasible mask).
    """
    n_t, n_d = len(tracklets), len(detections)
    cost = np.zeros((n_t, n_d))
    feasible = np.ones((n_t, n_d), dtype=bool)
    if n_t == 0 or n_d == 0:
        return cost, feasible

    det_hists = _detection_histograms(detections, cloud, params)
    track_pos = np.array([t.last.world_xy for t in tracklets])
    det_pos = np.array([d.world_xy for d in detections])
    dist = np.linalg.norm(track_pos[:, None, :] - det_pos[None, :, :], axis=2)
    feasible = dist <= params.gate_mm
    cost = params.w_spatial * np.minimum(dist / params.gate_mm, 1.0)
    if params.w_appearance > 0:
        for i, t in enumerate(tracklets):
            h_t = t.last_histogram()
            if h_t is None:
                continue
            for j, h_d in enumerate(det_hists):
                if h_d is not None:
                    cost[i, j] += params.w_appearance * bhattacharyya(h_t, h_d)
    return cost, feasible


def _detection_histograms(detections, cloud, params):
    if cloud is None or cloud.colors is None:
        return [None] * len(detections)
    return [
        appearance_histogram(cloud, d.world_xy, params.appearance_halfwidth_mm)
        for d in detections
    ]


def hungarian_assign(
    cost: np.ndarray, feasible: np.ndarray | None = None
) -> tuple[list[tuple[int, int]], list[int], list[int]]:
    """Minimum-cost feasible assignment of rows to columns.

    Among feasible matchings the result has maximum cardinality (no
    feasible pair is left with both sides unmatched) and minimum total
    cost at that cardinality.  Returns (pairs, unmatched_rows,
    unmatched_cols).
    """
    cost = np.asarray(cost, dtype=float)
    n_r, n_c = cost.shape
    if n_r == 0 or n_c == 0:
        return [], list(range(n_r)), list(range(n_c))
    work = cost.copy()
    if feasible is not None:
        work[~feasible] = _INFEASIBLE
    rows, cols = linear_sum_assignment(work)
    pairs = [
        (int(r), int(c)) for r, c in zip(rows, cols) if work[r, c] < _INFEASIBLE
    ]
    matched_r = {r for r, _ in pairs}
    matched_c = {c for _, c in pairs}
    return (
        pairs,
        [r for r in range(n_r) if r not in matched_r],
        [c for c in range(n_c) if c not in matched_c],
    )


def tracker_step(
    track_set: TrackSet,
    frame_index: int,
    detections: list[Detection],
    cloud: PointCloud | None = None,
    params: TrackerParams = TrackerParams(),
) -> TrackSet:
    """Advance the tracker by one frame.

    Matched tracklets append a state and reset their miss count; unmatched
    detections above the init threshold start new candidate tracklets;
    candidates confirm after ``confirm_hits`` consecutive matches and
    tracklets terminate after ``max_misses`` consecutive misses.
    """
    if frame_index != track_set.frame_cursor + 1:
        raise FrameOrderViolation(
            f"expected frame {track_set.frame_cursor + 1}, got {frame_index}"
        )
    live = track_set.active()
    cost, feasible = cost_matrix(live, detections, cloud, params)
    pairs, unmatched_t, unmatched_d = hungarian_assign(cost, feasible)

    det_hists = _detection_histograms(detections, cloud, params)

    for ti, di in pairs:
        t = live[ti]
        d = detections[di]
        t.states.append(
            TrackState(
                frame_index=frame_index,
                world_xy=(float(d.world_xy[0]), float(d.world_xy[1])),
                height_mm=float(d.peak_value * params.cell_mm),
                histogram=det_hists[di],
                score=float(d.score),
            )
        )
        t.misses = 0
        t.hit_streak += 1
        if t.status == CANDIDATE and t.hit_streak >= params.confirm_hits:
            t.status = CONFIRMED
            t.ever_confirmed = True

    for ti in unmatched_t:
        t = live[ti]
        t.misses += 1
        t.hit_streak = 0
        if t.misses >= params.max_misses:
            t.status = TERMINATED

    for di in unmatched_d:
        d = detections[di]
        if d.score >= params.init_score:
            tid = track_set.new_id()
            track_set.tracklets[tid] = Tracklet(
                id=tid,
                states=[
                    TrackState(
                        frame_index=frame_index,
                        world_xy=(float(d.world_xy[0]), float(d.world_xy[1])),
                        height_mm=float(d.peak_value * params.cell_mm),
                        histogram=det_hists[di],
                        score=float(d.score),
                    )
                ],
                status=CANDIDATE,
                misses=0,
                hit_streak=1,
            )

    track_set.frame_cursor = frame_index
    return track_set
