"""Shared fixtures: a reference overhead rig and a small rendered scene.

Rendering is the slow part, so the walked scene is rendered once per
session and reused by the fusion, detection, pipeline and service tests.
"""

import numpy as np
import pytest

from toptrack import io as tio
from toptrack.geometry import CameraIntrinsics, CameraModel, Pose
from toptrack.simulate import ActorSpec, SceneSpec, generate_scene, render_depth_frame


def look_at(center, target, up=(0.0, 0.0, 1.0)) -> Pose:
    """World->camera pose for a camera at ``center`` aimed at ``target``."""
    center = np.asarray(center, dtype=float)
    z = np.asarray(target, dtype=float) - center
    z = z / np.linalg.norm(z)
    x = np.cross(z, np.asarray(up, dtype=float))
    if np.linalg.norm(x) < 1e-9:  # aim parallel to up: fall back to another hint
        x = np.cross(z, np.array([0.0, 1.0, 0.0]))
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    rot = np.stack([x, y, z])
    return Pose.from_matrix(rot, -rot @ center)


def make_camera(cam_id, center, target=(0.0, 0.0, 0.0), width=256, height=192,
                fx=None) -> CameraModel:
    fx = width / 2.0 if fx is None else fx
    intr = CameraIntrinsics(fx=fx, fy=fx, cx=width / 2.0, cy=height / 2.0,
                            width=width, height=height)
    return CameraModel(id=cam_id, intrinsics=intr, pose=look_at(center, target))


def corner_rig(span_mm=2500.0, cam_z_mm=2800.0, width=256, height=192, fx=None,
               ids=None) -> list[CameraModel]:
    """Four cameras on the corners of a square, all aimed at the origin."""
    signs = [(-1, -1), (1, -1), (-1, 1), (1, 1)]
    ids = list(range(len(signs))) if ids is None else list(ids)
    return [
        make_camera(cid, (sx * span_mm, sy * span_mm, cam_z_mm),
                    width=width, height=height, fx=fx)
        for cid, (sx, sy) in zip(ids, signs)
    ]


@pytest.fixture(scope="session")
def rig():
    return corner_rig()


@pytest.fixture(scope="session")
def walk_scene(rig):
    """Two actors with distinct colors walking straight lines for 1 s."""
    actors = (
        ActorSpec(waypoints=((-600.0, -400.0), (600.0, -400.0)),
                  height_mm=1700.0, speed_mm_s=900.0, color=(220, 50, 50)),
        ActorSpec(waypoints=((500.0, 500.0), (-500.0, 500.0)),
                  height_mm=1820.0, speed_mm_s=800.0, color=(40, 120, 230)),
    )
    spec = SceneSpec(duration_s=1.0, cameras=tuple(rig), actors=actors,
                     fps=15.0, seed=7)
    return generate_scene(spec)


@pytest.fixture(scope="session")
def walk_dir(walk_scene, tmp_path_factory):
    """The walked scene rendered to disk: depth + RGB streams, meta,
    calibration and ground-truth tracks."""
    root = tmp_path_factory.mktemp("walk")
    spec = walk_scene.spec
    for cam in spec.cameras:
        for f in range(walk_scene.n_frames):
            frame, rgb = render_depth_frame(walk_scene, cam, f, with_rgb=True)
            tio.save_depth_frame(root, frame)
            tio.save_rgb_frame(root, cam.id, f, rgb)
    k = spec.cameras[0].intrinsics
    tio.write_meta(root, spec.fps, k.width, k.height, walk_scene.n_frames,
                   [c.id for c in spec.cameras])
    tio.save_calibration(root / "calib.json", spec.cameras)
    tio.save_tracks(root / "gt.jsonl", walk_scene.ground_truth)
    return root
