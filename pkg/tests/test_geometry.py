import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from toptrack.geometry import (
    CameraIntrinsics,
    CameraModel,
    DegenerateView,
    GridSpec,
    InvalidDepth,
    NonPositiveDepth,
    Pose,
    apply_homography,
    backproject_pixel,
    ground_plane_homography,
    project_point,
    project_points,
    quat_from_matrix,
    quat_to_matrix,
    rigid_align,
    rotation_angle_rad,
)

from conftest import look_at, make_camera


def random_rotation(rng) -> np.ndarray:
    a = rng.normal(size=(3, 3))
    q, r = np.linalg.qr(a)
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 2] *= -1
    return q


unit_quats = (
    st.lists(st.floats(-1.0, 1.0), min_size=4, max_size=4)
    .map(np.asarray)
    .filter(lambda q: np.linalg.norm(q) > 1e-3)
    .map(lambda q: q / np.linalg.norm(q))
)
translations = st.lists(
    st.floats(-5000.0, 5000.0), min_size=3, max_size=3
).map(np.asarray)


# ---------------------------------------------------------------------------
# quaternions


def test_quat_matrix_round_trip():
    rng = np.random.default_rng(0)
    for _ in range(100):
        r = random_rotation(rng)
        q = quat_from_matrix(r)
        assert q[0] >= 0
        assert np.linalg.norm(q) == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(quat_to_matrix(q), r, atol=1e-10)


def test_quat_identity():
    np.testing.assert_allclose(quat_to_matrix(np.array([1.0, 0, 0, 0])), np.eye(3))
    np.testing.assert_array_equal(quat_from_matrix(np.eye(3)), [1.0, 0, 0, 0])


def test_quat_near_180_degree_branches():
    # 180-degree rotations hit the non-trace branches of the conversion
    for axis in np.eye(3):
        r = 2.0 * np.outer(axis, axis) - np.eye(3)
        np.testing.assert_allclose(quat_to_matrix(quat_from_matrix(r)), r, atol=1e-10)


@given(unit_quats)
@settings(max_examples=80, deadline=None)
def test_quat_sign_ambiguity(q):
    np.testing.assert_allclose(quat_to_matrix(q), quat_to_matrix(-q), atol=1e-12)


# ---------------------------------------------------------------------------
# poses


def test_pose_canonical_hemisphere():
    p = Pose(q=(-1.0, 0.0, 0.0, 0.0), t=(1.0, 2.0, 3.0))
    assert p.q[0] >= 0


def test_pose_rejects_non_unit_quaternion():
    with pytest.raises(ValueError):
        Pose(q=(1.0, 1.0, 0.0, 0.0), t=(0.0, 0.0, 0.0))


def test_pose_apply_matches_matrix():
    rng = np.random.default_rng(1)
    r = random_rotation(rng)
    t = rng.normal(size=3) * 100
    pose = Pose.from_matrix(r, t)
    pts = rng.normal(size=(5, 3)) * 1000
    np.testing.assert_allclose(pose.apply(pts), pts @ r.T + t, atol=1e-9)
    np.testing.assert_allclose(pose.rotation, r, atol=1e-12)
    np.testing.assert_allclose(pose.translation, t, atol=1e-12)


def test_pose_center():
    rng = np.random.default_rng(2)
    r = random_rotation(rng)
    c = rng.normal(size=3) * 1000
    pose = Pose.from_matrix(r, -r @ c)
    np.testing.assert_allclose(pose.center, c, atol=1e-9)
    # the center maps to the camera-frame origin
    np.testing.assert_allclose(pose.apply(c), np.zeros(3), atol=1e-9)


@given(unit_quats, translations, unit_quats, translations)
@settings(max_examples=50, deadline=None)
def test_pose_compose_inverse(qa, ta, qb, tb):
    a = Pose(q=tuple(qa), t=tuple(ta))
    b = Pose(q=tuple(qb), t=tuple(tb))
    p = np.array([100.0, -40.0, 250.0])
    # compose applies the right-hand pose first
    np.testing.assert_allclose(a.compose(b).apply(p), a.apply(b.apply(p)), atol=1e-6)
    np.testing.assert_allclose(a.inverse().apply(a.apply(p)), p, atol=1e-6)
    ident = a.compose(a.inverse())
    np.testing.assert_allclose(ident.rotation, np.eye(3), atol=1e-9)
    np.testing.assert_allclose(ident.translation, np.zeros(3), atol=1e-6)


def test_rotation_angle():
    c, s = np.cos(0.3), np.sin(0.3)
    rz = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    a = Pose.identity()
    b = Pose.from_matrix(rz, np.zeros(3))
    assert rotation_angle_rad(a, b) == pytest.approx(0.3, abs=1e-12)
    assert rotation_angle_rad(a, a) == pytest.approx(0.0, abs=1e-12)


# ---------------------------------------------------------------------------
# intrinsics / projection


def test_intrinsics_validation():
    with pytest.raises(ValueError):
        CameraIntrinsics(fx=0.0, fy=100.0, cx=10.0, cy=10.0, width=64, height=48)
    with pytest.raises(ValueError):
        CameraIntrinsics(fx=100.0, fy=100.0, cx=10.0, cy=10.0, width=0, height=48)


def test_project_point_pinhole():
    cam = CameraModel(
        id="c",
        intrinsics=CameraIntrinsics(fx=100.0, fy=120.0, cx=32.0, cy=24.0,
                                    width=64, height=48),
    )
    uv = project_point(cam, (200.0, -100.0, 1000.0))
    assert uv[0] == pytest.approx(100.0 * 200.0 / 1000.0 + 32.0)
    assert uv[1] == pytest.approx(120.0 * -100.0 / 1000.0 + 24.0)
    with pytest.raises(NonPositiveDepth):
        project_point(cam, (0.0, 0.0, 0.0))
    with pytest.raises(NonPositiveDepth):
        project_point(cam, (0.0, 0.0, -5.0))


def test_project_points_marks_invalid():
    cam = make_camera("c", (0.0, 0.0, 2000.0))
    pts = np.array([[100.0, 50.0, 0.0], [0.0, 0.0, 3000.0]])  # second is behind
    px, valid = project_points(cam, pts)
    assert valid.tolist() == [True, False]
    assert np.isnan(px[1]).all()
    np.testing.assert_allclose(px[0], project_point(cam, pts[0]))


def test_backproject_integer_pixel_convention():
    # pixel (u, v) at depth z lifts to camera coords ((u-cx)/fx*z, ...),
    # with no half-pixel shift
    cam = CameraModel(
        id="c",
        intrinsics=CameraIntrinsics(fx=100.0, fy=100.0, cx=32.0, cy=24.0,
                                    width=64, height=48),
    )
    p = backproject_pixel(cam, (42.0, 24.0), 500.0)
    np.testing.assert_allclose(p, [(42 - 32) / 100 * 500, 0.0, 500.0])
    with pytest.raises(InvalidDepth):
        backproject_pixel(cam, (10.0, 10.0), 0.0)
    with pytest.raises(InvalidDepth):
        backproject_pixel(cam, (10.0, 10.0), -1.0)


def test_project_backproject_round_trip():
    rng = np.random.default_rng(3)
    cam = make_camera("c", (1500.0, -2000.0, 2500.0))
    for _ in range(200):
        world = rng.uniform([-800, -800, 0], [800, 800, 1900])
        z = cam.pose.apply(world)[2]
        uv = project_point(cam, world)
        back = backproject_pixel(cam, uv, z)
        assert np.linalg.norm(back - world) <= 1e-6 * max(1.0, np.linalg.norm(world))


# ---------------------------------------------------------------------------
# grid / homography


def test_grid_spec():
    g = GridSpec(origin=(-100.0, -100.0, 0.0), dims=(10, 10, 5), cell_mm=20.0)
    np.testing.assert_allclose(g.cell_center_xy(0, 0), [-90.0, -90.0])
    np.testing.assert_allclose(g.cell_center_xy(3, 7), [-100 + 3.5 * 20, -100 + 7.5 * 20])
    with pytest.raises(ValueError):
        GridSpec(origin=(0.0, 0.0, 0.0), dims=(10, 10, 5), cell_mm=0.0)


def test_ground_homography_matches_projection():
    cam = make_camera("c", (1800.0, 900.0, 2600.0))
    grid = GridSpec(origin=(-2000.0, -2000.0, 0.0), dims=(200, 200, 130))
    h = ground_plane_homography(cam, grid)
    rng = np.random.default_rng(4)
    for _ in range(50):
        x, y = rng.uniform(-1500, 1500, size=2)
        uv = project_point(cam, (x, y, 0.0))
        cell = apply_homography(h, uv)[0]
        expected = [(x - grid.origin[0]) / grid.cell_mm,
                    (y - grid.origin[1]) / grid.cell_mm]
        np.testing.assert_allclose(cell, expected, atol=1e-6)


def test_ground_homography_degenerate_on_ground_camera():
    # a camera whose center sits on z=0 cannot see the ground plane as a
    # non-degenerate homography
    cam = make_camera("c", (2000.0, 0.0, 0.0), target=(0.0, 0.0, 0.0))
    grid = GridSpec(origin=(-2000.0, -2000.0, 0.0), dims=(200, 200, 130))
    with pytest.raises(DegenerateView):
        ground_plane_homography(cam, grid)


def test_apply_homography_identity_and_scale():
    pts = np.array([[1.0, 2.0], [-3.0, 4.0]])
    np.testing.assert_allclose(apply_homography(np.eye(3), pts), pts)
    h = np.diag([2.0, 2.0, 1.0])
    np.testing.assert_allclose(apply_homography(h, pts), pts * 2)
    # scale invariance of homogeneous coordinates
    np.testing.assert_allclose(apply_homography(3.0 * h, pts), pts * 2)


# ---------------------------------------------------------------------------
# alignment


def test_rigid_align_recovers_transform():
    rng = np.random.default_rng(5)
    src = rng.normal(size=(12, 3)) * 500
    truth = Pose.from_matrix(random_rotation(rng), rng.normal(size=3) * 200)
    est = rigid_align(src, truth.apply(src))
    assert rotation_angle_rad(est, truth) < 1e-9
    assert np.linalg.norm(est.translation - truth.translation) < 1e-6


def test_rigid_align_reflection_guard():
    # planar points tempt the SVD toward a reflection; det must stay +1
    src = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0], [2, 1, 0]])
    pose = rigid_align(src, src[:, [1, 0, 2]] * [1, 1, 1])
    assert np.linalg.det(pose.rotation) == pytest.approx(1.0, abs=1e-9)


def test_look_at_helper_is_consistent():
    pose = look_at((1000.0, 500.0, 2000.0), (0.0, 0.0, 0.0))
    # optical axis points from the camera toward the target
    axis = pose.rotation.T @ np.array([0.0, 0.0, 1.0])
    d = -np.array([1000.0, 500.0, 2000.0])
    np.testing.assert_allclose(axis, d / np.linalg.norm(d), atol=1e-12)
    np.testing.assert_allclose(pose.center, [1000.0, 500.0, 2000.0], atol=1e-9)
