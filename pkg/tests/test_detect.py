import numpy as np
import pytest

from toptrack.detect import (
    CROP_SIDE,
    BadCropShape,
    Detection,
    DetectorParams,
    DimensionMismatch,
    FuseParams,
    Heatmap,
    HeightBandClassifier,
    Proposal,
    classify_crop,
    detect_people,
    extract_crop,
    extract_proposals,
    fuse_ground_heatmaps,
    warp_heatmap_to_grid,
)
from toptrack.fusion import TopDownMap
from toptrack.geometry import GridSpec

PARAMS = DetectorParams()


def topdown(values) -> TopDownMap:
    return TopDownMap(np.asarray(values, dtype=np.uint16))


def flat_map(shape=(40, 40), value=1):
    return np.full(shape, value, dtype=np.uint16)


def put_peak(values, cell, peak=85, halo=40):
    m, n = cell
    values[m - 2:m + 3, n - 2:n + 3] = halo
    values[m, n] = peak
    return values


# ---------------------------------------------------------------------------
# crops


def test_extract_crop_interior():
    values = np.arange(100, dtype=np.uint16).reshape(10, 10)
    crop = extract_crop(values, (5, 5), side=4)
    np.testing.assert_array_equal(crop, values[3:7, 3:7])


def test_extract_crop_zero_pads_edges():
    values = np.arange(36, dtype=np.uint16).reshape(6, 6)
    crop = extract_crop(values, (0, 0), side=4)
    assert crop.shape == (4, 4)
    assert (crop[:2] == 0).all() and (crop[:, :2] == 0).all()
    np.testing.assert_array_equal(crop[2:, 2:], values[:2, :2])


def test_classify_crop_validates_shape():
    bad = Proposal(cell=(0, 0), peak_value=85, crop=np.zeros((4, 4), np.uint16))
    with pytest.raises(BadCropShape):
        classify_crop(bad, HeightBandClassifier())


# ---------------------------------------------------------------------------
# proposals


def test_single_peak_yields_one_proposal():
    values = put_peak(flat_map(), (20, 14))
    props = extract_proposals(topdown(values))
    assert [p.cell for p in props] == [(20, 14)]
    assert props[0].peak_value == 85
    assert props[0].crop.shape == (CROP_SIDE, CROP_SIDE)
    assert props[0].crop[CROP_SIDE // 2, CROP_SIDE // 2] == 85


def test_plateau_collapses_to_single_proposal():
    # quantized heads are flat: a 3x3 plateau must come out as one proposal
    # at its center, not nine (or zero)
    values = flat_map()
    values[10:15, 10:15] = 40
    values[11:14, 11:14] = 85
    props = extract_proposals(topdown(values))
    assert [p.cell for p in props] == [(12, 12)]
    assert props[0].peak_value == 85


def test_plateau_tie_breaks_row_major():
    # a 2x2 plateau has four members equidistant from the centroid; the
    # row-major first one wins
    values = flat_map()
    values[10:16, 10:16] = 40
    values[12:14, 12:14] = 85
    props = extract_proposals(topdown(values))
    assert [p.cell for p in props] == [(12, 12)]


def test_constant_map_has_no_proposals():
    assert extract_proposals(topdown(flat_map(value=50))) == []
    assert extract_proposals(topdown(np.zeros((30, 30), np.uint16))) == []


def test_min_height_filters_low_peaks():
    values = put_peak(flat_map(), (20, 20), peak=9, halo=5)
    assert extract_proposals(topdown(values)) == []
    values = put_peak(flat_map(), (20, 20), peak=10, halo=5)
    assert [p.cell for p in extract_proposals(topdown(values))] == [(20, 20)]


def test_nms_suppresses_near_ties_keeps_far_peaks():
    values = flat_map(shape=(60, 60))
    put_peak(values, (20, 20), peak=85)
    put_peak(values, (20, 28), peak=80)   # 8 cells away: inside 10-cell radius
    put_peak(values, (45, 45), peak=70)   # far: survives
    props = extract_proposals(topdown(values))
    assert [p.cell for p in props] == [(20, 20), (45, 45)]


def test_nms_equal_peaks_tie_break_row_major():
    values = flat_map(shape=(60, 60))
    put_peak(values, (30, 34), peak=85)
    put_peak(values, (30, 26), peak=85)
    props = extract_proposals(topdown(values))
    assert [p.cell for p in props] == [(30, 26)]


def test_proposal_order_is_value_then_row_major():
    values = flat_map(shape=(80, 80))
    put_peak(values, (60, 10), peak=90)
    put_peak(values, (10, 10), peak=85)
    put_peak(values, (10, 60), peak=85)
    props = extract_proposals(topdown(values))
    assert [p.cell for p in props] == [(60, 10), (10, 10), (10, 60)]


def test_window_must_be_odd():
    with pytest.raises(ValueError):
        extract_proposals(topdown(flat_map()), DetectorParams(window=4))


# ---------------------------------------------------------------------------
# classification


def test_height_band_classifier_band_edges():
    clf = HeightBandClassifier()
    crop = np.zeros((CROP_SIDE, CROP_SIDE), np.uint16)
    crop[:6, :6] = 50  # 36 support cells
    assert clf(Proposal(cell=(0, 0), peak_value=85, crop=crop)) == 1.0
    assert clf(Proposal(cell=(0, 0), peak_value=50, crop=crop)) == 1.0   # 1000 mm
    assert clf(Proposal(cell=(0, 0), peak_value=110, crop=crop)) == 1.0  # 2200 mm
    assert clf(Proposal(cell=(0, 0), peak_value=49, crop=crop)) == 0.0
    assert clf(Proposal(cell=(0, 0), peak_value=111, crop=crop)) == 0.0


def test_height_band_classifier_needs_support():
    clf = HeightBandClassifier()
    thin = np.zeros((CROP_SIDE, CROP_SIDE), np.uint16)
    thin[0, :] = 60
    thin[1, :9] = 60  # 29 support cells: one short
    assert clf(Proposal(cell=(0, 0), peak_value=85, crop=thin)) == 0.0
    thin[1, 9] = 60
    assert clf(Proposal(cell=(0, 0), peak_value=85, crop=thin)) == 1.0


def test_detect_people_scores_and_world_frame():
    values = flat_map(shape=(60, 60))
    put_peak(values, (20, 20), peak=85)           # person height
    put_peak(values, (45, 45), peak=20, halo=18)  # 400 mm box: rejected
    top = TopDownMap(values, cell_mm=20.0, origin_xy=(-400.0, -200.0))
    dets = detect_people(top)
    assert [d.cell for d in dets] == [(20, 20)]
    assert dets[0].score == 1.0
    assert dets[0].peak_value == 85
    np.testing.assert_allclose(dets[0].world_xy, [-400 + 20.5 * 20, -200 + 20.5 * 20])


def test_detect_people_keep_threshold():
    values = put_peak(flat_map(), (20, 20))
    top = topdown(values)
    none = detect_people(top, classifier=lambda p: 0.4)
    assert none == []
    kept = detect_people(top, classifier=lambda p: 0.5)
    assert len(kept) == 1 and kept[0].score == 0.5


# ---------------------------------------------------------------------------
# heatmap warping / fusion


def test_heatmap_validation():
    with pytest.raises(DimensionMismatch):
        Heatmap("c", np.zeros((4, 4, 2)))
    with pytest.raises(ValueError):
        Heatmap("c", np.full((4, 4), -1.0))


def half_shift_homography():
    # maps pixel (u, v) to cell coords (u + .5, v + .5): cell centers then
    # invert to exact integer pixels, removing rounding ambiguity
    return np.array([[1.0, 0.0, 0.5], [0.0, 1.0, 0.5], [0.0, 0.0, 1.0]])


def test_warp_transposes_image_to_grid_axes():
    rng = np.random.default_rng(0)
    img = rng.uniform(0, 1, size=(6, 9)).astype(np.float32)  # (rows=v, cols=u)
    grid = GridSpec(origin=(0.0, 0.0, 0.0), dims=(9, 6, 4), cell_mm=20.0)
    warped = warp_heatmap_to_grid(Heatmap("c", img), half_shift_homography(), grid)
    np.testing.assert_allclose(warped, img.T, atol=1e-6)


def test_warp_bilinear_matches_nearest_on_exact_hits():
    rng = np.random.default_rng(1)
    img = rng.uniform(0, 1, size=(5, 5)).astype(np.float32)
    grid = GridSpec(origin=(0.0, 0.0, 0.0), dims=(5, 5, 4), cell_mm=20.0)
    h = half_shift_homography()
    nearest = warp_heatmap_to_grid(Heatmap("c", img), h, grid, bilinear=False)
    linear = warp_heatmap_to_grid(Heatmap("c", img), h, grid, bilinear=True)
    np.testing.assert_allclose(nearest, linear, atol=1e-6)


def test_warp_out_of_image_cells_are_zero():
    img = np.ones((4, 4), dtype=np.float32)
    grid = GridSpec(origin=(0.0, 0.0, 0.0), dims=(10, 10, 4), cell_mm=20.0)
    warped = warp_heatmap_to_grid(Heatmap("c", img), half_shift_homography(), grid)
    assert warped[:4, :4].all()
    assert not warped[4:].any() and not warped[:, 4:].any()


def test_fuse_takes_per_cell_max_not_sum():
    grid = GridSpec(origin=(0.0, 0.0, 0.0), dims=(30, 30, 4), cell_mm=20.0)
    a = np.zeros((30, 30), dtype=np.float32)
    b = np.zeros((30, 30), dtype=np.float32)
    a[15, 15] = 0.6
    b[15, 15] = 0.8
    h = half_shift_homography()
    params = FuseParams(blur_sigma_cells=0.0)
    ground, dets = fuse_ground_heatmaps(
        [(Heatmap("a", a), h), (Heatmap("b", b), h)], grid, params)
    assert ground.values[15, 15] == pytest.approx(0.8)
    assert [d.cell for d in dets] == [(15, 15)]
    assert dets[0].score == pytest.approx(0.8)


def test_fuse_clamps_scores_and_maps_world():
    grid = GridSpec(origin=(-100.0, -100.0, 0.0), dims=(30, 30, 4), cell_mm=10.0)
    a = np.zeros((30, 30), dtype=np.float32)
    a[10, 20] = 3.0  # image row v=10, column u=20 -> grid cell (20, 10)
    ground, dets = fuse_ground_heatmaps(
        [(Heatmap("a", a), half_shift_homography())], grid,
        FuseParams(blur_sigma_cells=0.0))
    assert dets[0].score == 1.0
    assert dets[0].cell == (20, 10)
    np.testing.assert_allclose(dets[0].world_xy, [-100 + 20.5 * 10, -100 + 10.5 * 10])


def test_fuse_min_score_filters():
    grid = GridSpec(origin=(0.0, 0.0, 0.0), dims=(20, 20, 4), cell_mm=20.0)
    a = np.zeros((20, 20), dtype=np.float32)
    a[5, 5] = 0.05
    _, dets = fuse_ground_heatmaps(
        [(Heatmap("a", a), half_shift_homography())], grid,
        FuseParams(blur_sigma_cells=0.0))
    assert dets == []


def test_fuse_rejects_bad_homography():
    grid = GridSpec(origin=(0.0, 0.0, 0.0), dims=(10, 10, 4), cell_mm=20.0)
    with pytest.raises(DimensionMismatch):
        fuse_ground_heatmaps(
            [(Heatmap("a", np.zeros((4, 4))), np.eye(2))], grid)


def test_fuse_no_views_empty_result():
    grid = GridSpec(origin=(0.0, 0.0, 0.0), dims=(10, 10, 4), cell_mm=20.0)
    ground, dets = fuse_ground_heatmaps([], grid)
    assert ground.values.shape == (10, 10)
    assert not ground.values.any()
    assert dets == []


# ---------------------------------------------------------------------------
# end to end on rendered data


def test_detect_people_on_rendered_scene(walk_scene, rig):
    from toptrack.fusion import grid_from_rig, reconstruct_point_cloud, topdown_heightmap, voxelize
    from toptrack.simulate import render_depth_frame

    grid = grid_from_rig(rig)
    frame = 7
    frames = [render_depth_frame(walk_scene, cam, frame) for cam in rig]
    cloud = reconstruct_point_cloud(frames, rig)
    dets = detect_people(topdown_heightmap(voxelize(cloud, grid)))
    assert len(dets) == len(walk_scene.spec.actors)
    got = sorted(tuple(d.world_xy) for d in dets)
    want = sorted(map(tuple, walk_scene.positions[frame]))
    for g, w in zip(got, want):
        assert np.hypot(g[0] - w[0], g[1] - w[1]) < 60.0
