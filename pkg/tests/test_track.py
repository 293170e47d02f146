import itertools

import numpy as np
import pytest

from toptrack.detect import Detection
from toptrack.fusion import PointCloud
from toptrack.track import (
    CANDIDATE,
    CONFIRMED,
    TERMINATED,
    FrameOrderViolation,
    NoColor,
    TrackerParams,
    TrackSet,
    Tracklet,
    TrackState,
    appearance_histogram,
    bhattacharyya,
    cost_matrix,
    hungarian_assign,
    tracker_step,
)


def det(x, y, score=1.0, peak=85) -> Detection:
    return Detection(cell=(0, 0), world_xy=(float(x), float(y)), score=score,
                     peak_value=peak)


def colored_cloud(spots) -> PointCloud:
    """spots: list of ((x, y), (r, g, b)) one point each."""
    pts = np.array([[x, y, 900.0] for (x, y), _ in spots])
    cols = np.array([c for _, c in spots], dtype=np.uint8)
    return PointCloud(pts, cols)


# ---------------------------------------------------------------------------
# appearance


def test_histogram_bins_and_normalization():
    cloud = colored_cloud([
        ((0.0, 0.0), (0, 0, 0)),        # bin 0
        ((10.0, 0.0), (255, 255, 255)),  # bin 63
        ((0.0, 10.0), (255, 255, 255)),
        ((0.0, -10.0), (64, 128, 192)),  # 1*16 + 2*4 + 3 = 27
    ])
    h = appearance_histogram(cloud, (0.0, 0.0), halfwidth_mm=50.0)
    assert h.shape == (64,)
    assert h.sum() == pytest.approx(1.0)
    assert h[0] == pytest.approx(0.25)
    assert h[63] == pytest.approx(0.5)
    assert h[27] == pytest.approx(0.25)


def test_histogram_column_bounds_inclusive():
    cloud = colored_cloud([((250.0, 0.0), (10, 10, 10))])
    assert appearance_histogram(cloud, (0.0, 0.0), halfwidth_mm=250.0) is not None
    assert appearance_histogram(cloud, (0.0, 0.0), halfwidth_mm=249.0) is None


def test_histogram_requires_colors():
    with pytest.raises(NoColor):
        appearance_histogram(PointCloud(np.zeros((2, 3))), (0.0, 0.0))


def test_bhattacharyya_extremes():
    a = np.zeros(64)
    a[0] = 1.0
    b = np.zeros(64)
    b[1] = 1.0
    assert bhattacharyya(a, a) == pytest.approx(0.0, abs=1e-7)
    assert bhattacharyya(a, b) == pytest.approx(1.0)
    mixed = 0.5 * a + 0.5 * b
    assert 0.0 < bhattacharyya(a, mixed) < 1.0


# ---------------------------------------------------------------------------
# association costs


def track_at(tid, x, y, histogram=None, status=CANDIDATE) -> Tracklet:
    state = TrackState(frame_index=0, world_xy=(float(x), float(y)),
                       height_mm=1700.0, histogram=histogram)
    return Tracklet(id=tid, states=[state], status=status)


def test_cost_matrix_spatial_term_and_gate():
    tracks = [track_at(1, 0.0, 0.0)]
    dets = [det(300.0, 400.0), det(0.0, 1500.0)]  # 500 mm and 1500 mm away
    cost, feasible = cost_matrix(tracks, dets, None)
    assert cost[0, 0] == pytest.approx(0.7 * 0.5)
    assert feasible[0, 0]
    assert not feasible[0, 1]


def test_cost_matrix_appearance_term():
    red = np.zeros(64)
    red[48] = 1.0
    blue = np.zeros(64)
    blue[3] = 1.0
    tracks = [track_at(1, 0.0, 0.0, histogram=red)]
    dets = [det(100.0, 0.0)]
    cloud = colored_cloud([((100.0, 0.0), (0, 0, 255))])  # blue detection
    cost_plain, _ = cost_matrix(tracks, dets, None)
    cost_app, _ = cost_matrix(tracks, dets, cloud)
    assert cost_app[0, 0] == pytest.approx(cost_plain[0, 0] + 0.3 * 1.0)


def test_cost_matrix_empty_sides():
    cost, feasible = cost_matrix([], [det(0, 0)], None)
    assert cost.shape == (0, 1)
    cost, feasible = cost_matrix([track_at(1, 0, 0)], [], None)
    assert cost.shape == (1, 0)


# ---------------------------------------------------------------------------
# assignment


def brute_best(cost, feasible):
    """Exhaustive best assignment: maximum cardinality, then minimum cost."""
    n_r, n_c = cost.shape
    best = (0, 0.0, [])
    for k in range(min(n_r, n_c), -1, -1):
        candidates = []
        for rows in itertools.combinations(range(n_r), k):
            for cols in itertools.permutations(range(n_c), k):
                if all(feasible[r, c] for r, c in zip(rows, cols)):
                    candidates.append(
                        (sum(cost[r, c] for r, c in zip(rows, cols)),
                         list(zip(rows, cols)))
                    )
        if candidates:
            total, pairs = min(candidates, key=lambda x: x[0])
            return k, total, pairs
    return best


def test_hungarian_simple():
    cost = np.array([[1.0, 10.0], [10.0, 1.0]])
    pairs, ur, uc = hungarian_assign(cost)
    assert sorted(pairs) == [(0, 0), (1, 1)]
    assert ur == [] and uc == []


def test_hungarian_respects_feasibility():
    cost = np.array([[0.1, 0.2]])
    feasible = np.array([[False, True]])
    pairs, ur, uc = hungarian_assign(cost, feasible)
    assert pairs == [(0, 1)]
    assert uc == [0]


def test_hungarian_matches_brute_force():
    rng = np.random.default_rng(6)
    for trial in range(60):
        n_r = int(rng.integers(1, 6))
        n_c = int(rng.integers(1, 6))
        cost = rng.uniform(0.0, 1.0, size=(n_r, n_c))
        feasible = rng.uniform(size=(n_r, n_c)) < 0.7
        pairs, ur, uc = hungarian_assign(cost, feasible)
        k_best, total_best, _ = brute_best(cost, feasible)
        assert all(feasible[r, c] for r, c in pairs)
        assert len(pairs) == k_best
        total = sum(cost[r, c] for r, c in pairs)
        assert total == pytest.approx(total_best, abs=1e-9)
        assert len(pairs) + len(ur) == n_r and len(pairs) + len(uc) == n_c


# ---------------------------------------------------------------------------
# tracker stepping


def test_first_frame_starts_candidates():
    ts = TrackSet()
    out = tracker_step(ts, 0, [det(0.0, 0.0, peak=85), det(900.0, 0.0, peak=90)])
    assert out is ts
    assert sorted(ts.tracklets) == [1, 2]
    for t in ts.tracklets.values():
        assert t.status == CANDIDATE
        assert t.hit_streak == 1
    assert ts.tracklets[1].last.height_mm == pytest.approx(85 * 20.0)
    assert ts.frame_cursor == 0


def test_low_score_detections_do_not_start_tracks():
    ts = TrackSet()
    tracker_step(ts, 0, [det(0.0, 0.0, score=0.49)])
    assert ts.tracklets == {}
    tracker_step(ts, 1, [det(0.0, 0.0, score=0.5)])
    assert list(ts.tracklets) == [1]


def test_frame_order_enforced():
    ts = TrackSet()
    tracker_step(ts, 0, [])
    with pytest.raises(FrameOrderViolation):
        tracker_step(ts, 2, [])
    with pytest.raises(FrameOrderViolation):
        tracker_step(ts, 0, [])


def test_confirmation_after_three_consecutive_hits():
    ts = TrackSet()
    for f in range(3):
        tracker_step(ts, f, [det(f * 30.0, 0.0)])
        expected = CANDIDATE if f < 2 else CONFIRMED
        assert ts.tracklets[1].status == expected
    assert [s.frame_index for s in ts.tracklets[1].states] == [0, 1, 2]
    assert ts.tracklets[1].ever_confirmed


def test_miss_resets_streak_and_terminates():
    params = TrackerParams(confirm_hits=3, max_misses=2)
    ts = TrackSet()
    tracker_step(ts, 0, [det(0.0, 0.0)], params=params)
    tracker_step(ts, 1, [det(10.0, 0.0)], params=params)
    tracker_step(ts, 2, [], params=params)  # miss: streak back to zero
    t = ts.tracklets[1]
    assert t.status == CANDIDATE and t.misses == 1 and t.hit_streak == 0
    tracker_step(ts, 3, [det(20.0, 0.0)], params=params)
    assert t.status == CANDIDATE  # confirmation restarts from scratch
    tracker_step(ts, 4, [], params=params)
    tracker_step(ts, 5, [], params=params)
    assert t.status == TERMINATED
    assert not t.was_confirmed  # died a candidate: not system output
    # terminated tracks never come back; the detection founds a new track
    tracker_step(ts, 6, [det(20.0, 0.0)], params=params)
    assert t.status == TERMINATED
    assert sorted(ts.tracklets) == [1, 2]


def test_confirmed_then_terminated_remains_output():
    params = TrackerParams(confirm_hits=2, max_misses=2)
    ts = TrackSet()
    tracker_step(ts, 0, [det(0.0, 0.0)], params=params)
    tracker_step(ts, 1, [det(10.0, 0.0)], params=params)
    t = ts.tracklets[1]
    assert t.status == CONFIRMED
    tracker_step(ts, 2, [], params=params)
    tracker_step(ts, 3, [], params=params)
    assert t.status == TERMINATED
    assert t.was_confirmed  # termination does not retract the tracklet


def test_gate_prevents_teleport_match():
    ts = TrackSet()
    tracker_step(ts, 0, [det(0.0, 0.0)])
    tracker_step(ts, 1, [det(0.0, 1200.0)])  # beyond the 1 m gate
    assert sorted(ts.tracklets) == [1, 2]
    assert len(ts.tracklets[1].states) == 1


def test_appearance_prevents_identity_swap():
    # two targets pass close by; spatial cost alone prefers the swapped
    # matching, color histograms keep identities straight
    params = TrackerParams(appearance_halfwidth_mm=4.0)
    red, blue = (255, 0, 0), (0, 0, 255)
    ts = TrackSet()
    tracker_step(ts, 0, [det(0.0, 0.0), det(400.0, 0.0)],
                 colored_cloud([((0.0, 0.0), red), ((400.0, 0.0), blue)]),
                 params)
    tracker_step(ts, 1, [det(205.0, 0.0), det(195.0, 0.0)],
                 colored_cloud([((205.0, 0.0), red), ((195.0, 0.0), blue)]),
                 params)
    assert ts.tracklets[1].last.world_xy == (205.0, 0.0)
    assert ts.tracklets[2].last.world_xy == (195.0, 0.0)


def test_spatial_only_would_swap_in_same_geometry():
    # control for the appearance test above: without color the same
    # geometry crosses over
    ts = TrackSet()
    tracker_step(ts, 0, [det(0.0, 0.0), det(400.0, 0.0)])
    tracker_step(ts, 1, [det(205.0, 0.0), det(195.0, 0.0)])
    assert ts.tracklets[1].last.world_xy == (195.0, 0.0)
    assert ts.tracklets[2].last.world_xy == (205.0, 0.0)


def test_track_set_ids_and_accessors():
    ts = TrackSet()
    ts.add(track_at(5, 0.0, 0.0, status=CONFIRMED))
    assert ts.new_id() == 6
    with pytest.raises(ValueError):
        ts.add(track_at(5, 1.0, 1.0))
    ts.add(track_at(9, 0.0, 0.0, status=TERMINATED))
    assert [t.id for t in ts.active()] == [5]
    assert [t.id for t in ts.confirmed()] == [5]


def test_last_histogram_falls_back_to_earlier_states():
    h = np.zeros(64)
    h[7] = 1.0
    t = Tracklet(id=1, states=[
        TrackState(frame_index=0, world_xy=(0.0, 0.0), height_mm=1700.0,
                   histogram=h),
        TrackState(frame_index=1, world_xy=(0.0, 0.0), height_mm=1700.0),
    ])
    np.testing.assert_array_equal(t.last_histogram(), h)
    t2 = track_at(2, 0.0, 0.0)
    assert t2.last_histogram() is None
