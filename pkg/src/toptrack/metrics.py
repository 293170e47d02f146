"""CLEAR-MOT and IDF1 evaluation on the ground plane.

Objects are ground points; a predicted point matches a ground-truth point
when their Euclidean distance is within the threshold (1 m by default).
Frame-level matching keeps previous GT-prediction correspondences while
they remain within the threshold before Hungarian-matching the remainder,
so jitter does not inflate ID switches.  An ID switch is counted per
affected GT track (a clean two-track swap counts 2).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .track import TrackSet, hungarian_assign

DEFAULT_THRESHOLD_MM = 1000.0

_BIG = 1e9


class EmptyGroundTruth(ValueError):
    """No ground-truth points; MOTA is undefined."""


@dataclass
class MotReport:
    mota: float
    fp: int
    fn: int
    ids: int
    gt_total: int
    idf1: float | None = None
    idp: float | None = None
    idr: float | None = None

    def as_dict(self) -> dict:
        return {
            "idf1": self.idf1,
            "mota": self.mota,
            "fp": self.fp,
            "fn": self.fn,
            "ids": self.ids,
            "idp": self.idp,
            "idr": self.idr,
            "gt_total": self.gt_total,
        }


def as_frame_points(obj) -> dict[int, list[tuple[int, np.ndarray]]]:
    """Normalize a TrackSet or {frame: [(id, x, y), ...]} mapping into
    {frame: [(id, xy array), ...]}."""
    frames: dict[int, list[tuple[int, np.ndarray]]] = {}
    if isinstance(obj, TrackSet):
        for t in obj.tracklets.values():
            for s in t.states:
                frames.setdefault(s.frame_index, []).append(
                    (t.id, np.asarray(s.world_xy, dtype=float))
                )
    else:
        for f, entries in obj.items():
            out = []
            for entry in entries:
                i, *rest = entry
                xy = rest[0] if len(rest) == 1 else rest
                out.append((int(i), np.asarray(xy, dtype=float).reshape(2)))
            frames[int(f)] = out
    return frames


def _frame_match(g_entries, p_entries, corr, threshold_mm):
    """One frame of CLEAR-MOT matching: persist valid correspondences,
    Hungarian on the rest.  Returns {gt_id: pred_id}."""
    g_pos = {i: xy for i, xy in g_entries}
    p_pos = {i: xy for i, xy in p_entries}
    matches: dict[int, int] = {}
    for gid, xy in g_entries:
        pid = corr.get(gid)
        if pid is not None and pid in p_pos:
            if np.linalg.norm(xy - p_pos[pid]) <= threshold_mm:
                matches[gid] = pid
    rem_g = [gid for gid, _ in g_entries if gid not in matches]
    used = set(matches.values())
    rem_p = [pid for pid, _ in p_entries if pid not in used]
    if rem_g and rem_p:
        dist = np.array(
            [[np.linalg.norm(g_pos[g] - p_pos[p]) for p in rem_p] for g in rem_g]
        )
        pairs, _, _ = hungarian_assign(dist, dist <= threshold_mm)
        for ri, ci in pairs:
            matches[rem_g[ri]] = rem_p[ci]
    return matches


def clear_mot_evaluate(gt, pred, threshold_mm: float = DEFAULT_THRESHOLD_MM) -> MotReport:
    """FP / FN / ID-switch counts and MOTA over a sequence."""
    gt_frames = as_frame_points(gt)
    pred_frames = as_frame_points(pred)
    gt_total = sum(len(v) for v in gt_frames.values())
    if gt_total == 0:
        raise EmptyGroundTruth("ground truth has no points")

    fp = fn = ids = 0
    corr: dict[int, int] = {}
    last_matched: dict[int, int] = {}
    for f in sorted(set(gt_frames) | set(pred_frames)):
        g = gt_frames.get(f, [])
        p = pred_frames.get(f, [])
        matches = _frame_match(g, p, corr, threshold_mm)
        for gid, pid in matches.items():
            prev = last_matched.get(gid)
            if prev is not None and prev != pid:
                ids += 1
            last_matched[gid] = pid
            corr[gid] = pid
        fp += len(p) - len(matches)
        fn += len(g) - len(matches)

    mota = 100.0 * (1.0 - (fp + fn + ids) / gt_total)
    return MotReport(mota=mota, fp=fp, fn=fn, ids=ids, gt_total=gt_total)


def idf1_evaluate(gt, pred, threshold_mm: float = DEFAULT_THRESHOLD_MM) -> tuple[float, float, float]:
    """(IDF1, IDP, IDR) percentages under a global trajectory-level
    bipartite matching; the cost of pairing a GT with a prediction is the
    number of frames where they fail the 1 m rule."""
    gt_frames = as_frame_points(gt)
    pred_frames = as_frame_points(pred)
    gt_total = sum(len(v) for v in gt_frames.values())
    if gt_total == 0:
        raise EmptyGroundTruth("ground truth has no points")
    pred_total = sum(len(v) for v in pred_frames.values())

    gt_traj = _trajectories(gt_frames)
    pred_traj = _trajectories(pred_frames)
    g_ids, p_ids = list(gt_traj), list(pred_traj)
    n_g, n_p = len(g_ids), len(p_ids)

    overlap = np.zeros((n_g, n_p), dtype=np.int64)
    for i, gid in enumerate(g_ids):
        g_t = gt_traj[gid]
        for j, pid in enumerate(p_ids):
            p_t = pred_traj[pid]
            common = set(g_t) & set(p_t)
            overlap[i, j] = sum(
                1 for f in common if np.linalg.norm(g_t[f] - p_t[f]) <= threshold_mm
            )

    g_len = np.array([len(gt_traj[g]) for g in g_ids])
    p_len = np.array([len(pred_traj[p]) for p in p_ids])
    # (n_g + n_p) square problem with per-trajectory dummy rows/columns
    size = n_g + n_p
    cost = np.full((size, size), _BIG)
    for i in range(n_g):
        for j in range(n_p):
            cost[i, j] = g_len[i] + p_len[j] - 2 * overlap[i, j]
        cost[i, n_p + i] = g_len[i]
    for j in range(n_p):
        cost[n_g + j, j] = p_len[j]
    cost[n_g:, n_p:] = 0.0

    rows, cols = linear_sum_assignment(cost)
    idtp = int(sum(overlap[r, c] for r, c in zip(rows, cols) if r < n_g and c < n_p))

    idr = 100.0 * idtp / gt_total
    idp = 100.0 * idtp / pred_total if pred_total > 0 else 0.0
    idf1 = 100.0 * 2 * idtp / (gt_total + pred_total)
    return idf1, idp, idr


def _trajectories(frames: dict[int, list[tuple[int, np.ndarray]]]) -> dict[int, dict[int, np.ndarray]]:
    traj: dict[int, dict[int, np.ndarray]] = {}
    for f, entries in frames.items():
        for i, xy in entries:
            traj.setdefault(i, {})[f] = xy
    return traj


def evaluate(gt, pred, threshold_mm: float = DEFAULT_THRESHOLD_MM) -> MotReport:
    """Full MotReport (CLEAR-MOT counters plus the ID metrics)."""
    report = clear_mot_evaluate(gt, pred, threshold_mm)
    report.idf1, report.idp, report.idr = idf1_evaluate(gt, pred, threshold_mm)
    return report
