"""Joint extrinsic calibration from fiducial-marker corner observations.

Cameras and markers form a bipartite visibility graph.  One designated
anchor marker is pinned to a canonical square on the ground plane, which
fixes the world frame and the metric scale; every other camera pose and
marker corner is then recovered by minimizing total squared pixel
reprojection error with a Levenberg-Marquardt solver written against
analytic Jacobians.

Corner order of the canonical square (side ``s``, on z = 0), chosen to
match the convention expected by planar PnP:

    0: (-s/2, +s/2)    1: (+s/2, +s/2)
    3: (-s/2, -s/2)    2: (+s/2, -s/2)
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import cv2
import numpy as np

from .geometry import CameraIntrinsics, Pose, rotation_angle_rad

DEFAULT_MARKER_SIDE_MM = 150.0


class DisconnectedGraph(ValueError):
    """The camera-marker graph splits into several components."""

    def __init__(self, components):
        self.components = components
        parts = "; ".join(
            "{" + ", ".join(f"{kind}:{ident}" for kind, ident in sorted(c, key=str)) + "}"
            for c in components
        )
        super().__init__(f"calibration graph has {len(components)} components: {parts}")


class InsufficientCorners(ValueError):
    """Entities reachable only through partial (non 4-corner) observations."""

    def __init__(self, unplaced):
        self.unplaced = unplaced
        names = ", ".join(f"{kind}:{ident}" for kind, ident in sorted(unplaced, key=str))
        super().__init__(f"no fully observed marker chain reaches: {names}")


class DivergedSolve(RuntimeError):
    """No damping value produced a non-increasing cost."""


class SingularNormalEquations(RuntimeError):
    """Degenerate geometry: the damped normal equations cannot be solved."""


class MissingEntity(ValueError):
    """An observation references a camera or marker absent from the solution."""


class EmptyInput(ValueError):
    """No observations to evaluate."""


@dataclass(frozen=True)
class MarkerObservation:
    """One detected marker corner in one camera image."""

    camera_id: str
    marker_id: str
    corner_index: int
    pixel: tuple[float, float]

    def __post_init__(self):
        if self.corner_index not in (0, 1, 2, 3):
            raise ValueError(f"corner_index must be 0..3, got {self.corner_index}")


def canonical_corners(side_mm: float) -> np.ndarray:
    """(4, 3) corner coordinates of the canonical marker square on z = 0."""
    h = side_mm / 2.0
    return np.array(
        [[-h, h, 0.0], [h, h, 0.0], [h, -h, 0.0], [-h, -h, 0.0]], dtype=float
    )


class CalibrationGraph:
    """Bipartite camera-marker visibility graph built from observations.

    ``edges[(camera_id, marker_id)]`` holds that pair's observations sorted
    by corner index; an edge is "full" when all four corners were seen.
    """

    def __init__(self, cameras: dict[str, CameraIntrinsics],
                 markers: dict[str, float],
                 observations) -> None:
        self.cameras = dict(cameras)
        self.markers = {m: float(s) for m, s in markers.items()}
        self.edges: dict[tuple[str, str], list[MarkerObservation]] = {}
        seen = set()
        for obs in observations:
            if obs.camera_id not in self.cameras:
                raise MissingEntity(f"unknown camera {obs.camera_id!r}")
            if obs.marker_id not in self.markers:
                raise MissingEntity(f"unknown marker {obs.marker_id!r}")
            key3 = (obs.camera_id, obs.marker_id, obs.corner_index)
            if key3 in seen:
                raise ValueError(f"duplicate observation for {key3}")
            seen.add(key3)
            intr = self.cameras[obs.camera_id]
            u, v = obs.pixel
            if not (0.0 <= u <= intr.width and 0.0 <= v <= intr.height):
                raise ValueError(
                    f"pixel {obs.pixel} outside image of camera {obs.camera_id!r}"
                )
            self.edges.setdefault((obs.camera_id, obs.marker_id), []).append(obs)
        for group in self.edges.values():
            group.sort(key=lambda o: o.corner_index)

    def observations(self) -> list[MarkerObservation]:
        """All observations in a deterministic (camera, marker, corner) order."""
        out: list[MarkerObservation] = []
        for key in sorted(self.edges, key=lambda k: (str(k[0]), str(k[1]))):
            out.extend(self.edges[key])
        return out

    def full_edges(self) -> set[tuple[str, str]]:
        return {k for k, group in self.edges.items() if len(group) == 4}

    def components(self) -> list[set[tuple[str, str]]]:
        """Connected components over all edges (partial ones included)."""
        nodes = {("camera", c) for c in self.cameras} | {
            ("marker", m) for m in self.markers
        }
        adj: dict[tuple[str, str], set] = {n: set() for n in nodes}
        for cam, marker in self.edges:
            adj[("camera", cam)].add(("marker", marker))
            adj[("marker", marker)].add(("camera", cam))
        comps = []
        todo = set(nodes)
        while todo:
            start = min(todo, key=str)
            comp = {start}
            queue = deque([start])
            while queue:
                for nb in adj[queue.popleft()]:
                    if nb not in comp:
                        comp.add(nb)
                        queue.append(nb)
            comps.append(comp)
            todo -= comp
        return comps


@dataclass(frozen=True)
class SolverOptions:
    max_iterations: int = 200
    rel_tol: float = 1e-10
    lambda_init: float = 1e-3
    lambda_max: float = 1e12
    huber_delta_px: float | None = None

    def __post_init__(self):
        if self.max_iterations < 1 or self.lambda_init <= 0:
            raise ValueError("bad solver options")


@dataclass
class CalibrationResult:
    poses: dict[str, Pose]
    marker_corners: dict[str, np.ndarray]
    rms_px: float
    iterations: int
    converged: bool = True
    cost_history: list[float] = field(default_factory=list)


# ---------------------------------------------------------------------------
# initialization


def _solve_square_pnp(side_mm: float, pixels: np.ndarray,
                      intrinsics: CameraIntrinsics) -> Pose:
    """Marker-local -> camera transform from the 4 corner pixels."""
    obj = canonical_corners(side_mm).reshape(-1, 1, 3)
    img = np.ascontiguousarray(pixels, dtype=float).reshape(-1, 1, 2)
    ok, rvec, tvec = cv2.solvePnP(
        obj, img, intrinsics.matrix, None, flags=cv2.SOLVEPNP_IPPE_SQUARE
    )
    if not ok:
        raise SingularNormalEquations("planar PnP failed during initialization")
    rot, _ = cv2.Rodrigues(rvec)
    return Pose.from_matrix(rot, tvec.reshape(3))


def _triangulate(views: list[tuple[np.ndarray, tuple[float, float]]]) -> np.ndarray | None:
    """Linear (DLT) triangulation from >= 2 (projection matrix, pixel) views."""
    rows = []
    for p, (u, v) in views:
        rows.append(u * p[2] - p[0])
        rows.append(v * p[2] - p[1])
    _, _, vt = np.linalg.svd(np.asarray(rows))
    hom = vt[-1]
    if abs(hom[3]) < 1e-12:
        return None
    return hom[:3] / hom[3]


def initialize_poses(graph: CalibrationGraph, anchor: str
                     ) -> tuple[dict[str, Pose], dict[str, np.ndarray]]:
    """Seed every camera pose and marker corner set by walking a
    breadth-first spanning tree of fully observed edges out from the
    anchor marker."""
    if anchor not in graph.markers:
        raise MissingEntity(f"anchor marker {anchor!r} not in graph")
    comps = graph.components()
    if len(comps) > 1:
        raise DisconnectedGraph(comps)

    full = graph.full_edges()
    cam_nbrs: dict[str, list[str]] = {c: [] for c in graph.cameras}
    marker_nbrs: dict[str, list[str]] = {m: [] for m in graph.markers}
    for cam, marker in full:
        cam_nbrs[cam].append(marker)
        marker_nbrs[marker].append(cam)

    poses: dict[str, Pose] = {}
    marker_poses: dict[str, Pose] = {anchor: Pose.identity()}
    queue = deque([("marker", anchor)])
    while queue:
        kind, ident = queue.popleft()
        if kind == "marker":
            t_wm = marker_poses[ident]
            side = graph.markers[ident]
            for cam in sorted(marker_nbrs[ident], key=str):
                if cam in poses:
                    continue
                px = np.array([o.pixel for o in graph.edges[(cam, ident)]])
                t_mc = _solve_square_pnp(side, px, graph.cameras[cam])
                poses[cam] = t_mc.compose(t_wm.inverse())
                queue.append(("camera", cam))
        else:
            pose = poses[ident]
            for marker in sorted(cam_nbrs[ident], key=str):
                if marker in marker_poses:
                    continue
                px = np.array([o.pixel for o in graph.edges[(ident, marker)]])
                t_mc = _solve_square_pnp(graph.markers[marker], px,
                                         graph.cameras[ident])
                marker_poses[marker] = pose.inverse().compose(t_mc)
                queue.append(("marker", marker))

    unplaced = [("camera", c) for c in graph.cameras if c not in poses]
    unplaced += [("marker", m) for m in graph.markers if m not in marker_poses]
    if unplaced:
        raise InsufficientCorners(unplaced)

    corners = {
        m: marker_poses[m].apply(canonical_corners(graph.markers[m]))
        for m in graph.markers
    }
    # The spanning tree rests on single-view planar PnP, whose two-fold
    # ambiguity is frequently resolved wrong for small or distant markers.
    # Resection-intersection rounds repair that globally: triangulate every
    # non-anchor corner from the cameras that saw it, then re-solve each
    # camera over all of its placed corners, until the poses settle.
    for _ in range(10):
        _intersect_corners(graph, poses, corners, anchor)
        previous = dict(poses)
        _resect_cameras(graph, poses, corners)
        moved = max(
            (rotation_angle_rad(previous[c], poses[c])
             + np.linalg.norm(previous[c].translation - poses[c].translation))
            for c in poses
        )
        if moved < 1e-9:
            break
    _intersect_corners(graph, poses, corners, anchor)
    return poses, corners


def _intersect_corners(graph: CalibrationGraph, poses: dict[str, Pose],
                       corners: dict[str, np.ndarray], anchor: str) -> None:
    """Re-seed non-anchor corners by DLT from every camera that saw them."""
    proj = {
        c: graph.cameras[c].matrix
        @ np.column_stack([poses[c].rotation, poses[c].translation])
        for c in poses
    }
    for m in graph.markers:
        if m == anchor:
            continue
        for k in range(4):
            views = [
                (proj[cam], o.pixel)
                for (cam, marker), group in graph.edges.items()
                if marker == m
                for o in group
                if o.corner_index == k
            ]
            if len(views) >= 2:
                pt = _triangulate(views)
                if pt is not None:
                    corners[m][k] = pt


def _resect_cameras(graph: CalibrationGraph, poses: dict[str, Pose],
                    corners: dict[str, np.ndarray]) -> None:
    """Re-solve each camera by PnP over all corners it observes."""
    for cam in poses:
        obj, img = [], []
        for (c, m), group in graph.edges.items():
            if c != cam:
                continue
            for o in group:
                obj.append(corners[m][o.corner_index])
                img.append(o.pixel)
        if len(obj) < 4:
            continue
        ok, rvec, tvec = cv2.solvePnP(
            np.asarray(obj, dtype=float).reshape(-1, 1, 3),
            np.asarray(img, dtype=float).reshape(-1, 1, 2),
            graph.cameras[cam].matrix, None, flags=cv2.SOLVEPNP_SQPNP,
        )
        if ok:
            rot, _ = cv2.Rodrigues(rvec)
            poses[cam] = Pose.from_matrix(rot, tvec.reshape(3))


# ---------------------------------------------------------------------------
# joint refinement


@dataclass(frozen=True)
class ParamLayout:
    """Column layout of the packed parameter vector: 6 per camera
    (rotation perturbation then translation), then 12 per non-anchor
    marker (4 corners x 3)."""

    camera_ids: tuple
    free_marker_ids: tuple

    @property
    def n_params(self) -> int:
        return 6 * len(self.camera_ids) + 12 * len(self.free_marker_ids)

    def camera_slice(self, cid) -> slice:
        i = self.camera_ids.index(cid)
        return slice(6 * i, 6 * i + 6)

    def marker_slice(self, mid) -> slice:
        i = self.free_marker_ids.index(mid)
        base = 6 * len(self.camera_ids)
        return slice(base + 12 * i, base + 12 * i + 12)


def _layout(graph: CalibrationGraph, anchor: str) -> ParamLayout:
    cams = tuple(sorted(graph.cameras, key=str))
    free = tuple(m for m in sorted(graph.markers, key=str) if m != anchor)
    return ParamLayout(cams, free)


def _skew(v: np.ndarray) -> np.ndarray:
    return np.array(
        [[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]]
    )


def _exp_so3(omega: np.ndarray) -> np.ndarray:
    theta = np.linalg.norm(omega)
    k = _skew(omega)
    if theta < 1e-12:
        return np.eye(3) + k
    return (
        np.eye(3)
        + np.sin(theta) / theta * k
        + (1.0 - np.cos(theta)) / theta**2 * (k @ k)
    )


def residual_vector(graph: CalibrationGraph, poses: dict[str, Pose],
                    corners: dict[str, np.ndarray]) -> np.ndarray:
    """Stacked (predicted - observed) pixel residuals, 2 per observation,
    in the graph's deterministic observation order."""
    obs = graph.observations()
    r = np.empty(2 * len(obs))
    for i, o in enumerate(obs):
        pose = poses[o.camera_id]
        intr = graph.cameras[o.camera_id]
        x = pose.apply(corners[o.marker_id][o.corner_index])
        z = x[2]
        if z <= 1e-9:
            r[2 * i : 2 * i + 2] = 1e9
            continue
        r[2 * i] = intr.fx * x[0] / z + intr.cx - o.pixel[0]
        r[2 * i + 1] = intr.fy * x[1] / z + intr.cy - o.pixel[1]
    return r


def linearize(graph: CalibrationGraph, poses: dict[str, Pose],
              corners: dict[str, np.ndarray], anchor: str
              ) -> tuple[np.ndarray, np.ndarray, ParamLayout]:
    """Residual vector and its analytic Jacobian.

    A camera's rotation column block uses a left (camera-frame)
    perturbation R <- exp([w]x) R, giving d x_cam / d w = -[R p]x;
    translation and corner blocks are the identity and R.
    """
    layout = _layout(graph, anchor)
    obs = graph.observations()
    r = residual_vector(graph, poses, corners)
    jac = np.zeros((2 * len(obs), layout.n_params))
    for i, o in enumerate(obs):
        pose = poses[o.camera_id]
        intr = graph.cameras[o.camera_id]
        rot = pose.rotation
        p = corners[o.marker_id][o.corner_index]
        x = pose.apply(p)
        z = x[2]
        j_pix = np.array(
            [
                [intr.fx / z, 0.0, -intr.fx * x[0] / z**2],
                [0.0, intr.fy / z, -intr.fy * x[1] / z**2],
            ]
        )
        cs = layout.camera_slice(o.camera_id)
        jac[2 * i : 2 * i + 2, cs.start : cs.start + 3] = -j_pix @ _skew(rot @ p)
        jac[2 * i : 2 * i + 2, cs.start + 3 : cs.stop] = j_pix
        if o.marker_id != anchor:
            ms = layout.marker_slice(o.marker_id)
            col = ms.start + 3 * o.corner_index
            jac[2 * i : 2 * i + 2, col : col + 3] = j_pix @ rot
    return r, jac, layout


def _apply_step(poses, corners, step, layout):
    new_poses = dict(poses)
    for cid in layout.camera_ids:
        s = layout.camera_slice(cid)
        omega, dt = step[s][:3], step[s][3:]
        pose = poses[cid]
        new_poses[cid] = Pose.from_matrix(
            _exp_so3(omega) @ pose.rotation, pose.translation + dt
        )
    new_corners = {m: c.copy() for m, c in corners.items()}
    for mid in layout.free_marker_ids:
        s = layout.marker_slice(mid)
        new_corners[mid] = new_corners[mid] + step[s].reshape(4, 3)
    return new_poses, new_corners


def _robust_cost_and_weights(r: np.ndarray, delta: float | None):
    """Per-corner Huber weighting; plain squared loss when delta is None."""
    if delta is None:
        return float(r @ r), None
    e = np.linalg.norm(r.reshape(-1, 2), axis=1)
    small = e <= delta
    cost = float(np.sum(np.where(small, e**2, delta * (2 * e - delta))))
    w = np.where(small, 1.0, delta / np.maximum(e, 1e-12))
    return cost, np.repeat(w, 2)


def solve_extrinsics(graph: CalibrationGraph,
                     init: tuple[dict[str, Pose], dict[str, np.ndarray]],
                     anchor: str,
                     options: SolverOptions | None = None) -> CalibrationResult:
    """Levenberg-Marquardt refinement of all camera poses and non-anchor
    marker corners; the anchor marker stays pinned, fixing gauge and scale."""
    opts = options or SolverOptions()
    poses = dict(init[0])
    corners = {m: np.array(c, dtype=float).reshape(4, 3) for m, c in init[1].items()}
    if anchor not in corners:
        raise MissingEntity(f"anchor marker {anchor!r} missing from init")

    cost, _ = _robust_cost_and_weights(
        residual_vector(graph, poses, corners), opts.huber_delta_px
    )
    history = [cost]
    lam = opts.lambda_init
    iterations = 0
    converged = False
    # residuals around 1e-10 px are pure floating-point noise; no step can
    # reliably descend from there, so treat it as converged
    cost_floor = 1e-20 * 2 * len(graph.observations())
    for _ in range(opts.max_iterations):
        if cost <= cost_floor:
            converged = True
            break
        r, jac, layout = linearize(graph, poses, corners, anchor)
        _, w = _robust_cost_and_weights(r, opts.huber_delta_px)
        if w is not None:
            sw = np.sqrt(w)
            r = r * sw
            jac = jac * sw[:, None]
        jtj = jac.T @ jac
        g = jac.T @ r
        diag = np.maximum(np.diag(jtj), 1e-12)
        while True:
            try:
                step = np.linalg.solve(jtj + lam * np.diag(diag), -g)
            except np.linalg.LinAlgError as exc:
                raise SingularNormalEquations(str(exc)) from exc
            if not np.all(np.isfinite(step)):
                raise SingularNormalEquations("non-finite step")
            cand_poses, cand_corners = _apply_step(poses, corners, step, layout)
            new_cost, _ = _robust_cost_and_weights(
                residual_vector(graph, cand_poses, cand_corners),
                opts.huber_delta_px,
            )
            if new_cost <= cost:
                poses, corners = cand_poses, cand_corners
                lam = max(lam / 10.0, 1e-12)
                break
            lam *= 10.0
            if lam > opts.lambda_max:
                raise DivergedSolve(
                    f"no descent at damping {lam:.1e} (cost {cost:.3e})"
                )
        iterations += 1
        prev, cost = cost, new_cost
        history.append(cost)
        if prev - cost < opts.rel_tol * max(prev, 1e-30):
            converged = True
            break

    final = residual_vector(graph, poses, corners)
    rms = float(np.sqrt(np.mean(np.sum(final.reshape(-1, 2) ** 2, axis=1))))
    return CalibrationResult(
        poses=poses,
        marker_corners=corners,
        rms_px=rms,
        iterations=iterations,
        converged=converged,
        cost_history=history,
    )


@dataclass(frozen=True)
class ResidualStats:
    rms: float
    max: float
    per_camera: dict[str, float]


def reprojection_rms(result: CalibrationResult, graph: CalibrationGraph) -> ResidualStats:
    """Residual statistics of a solution over the graph's observations:
    (rms, max, per-camera rms), all in pixels over per-corner distances."""
    obs = graph.observations()
    if not obs:
        raise EmptyInput("no observations")
    for o in obs:
        if o.camera_id not in result.poses:
            raise MissingEntity(f"camera {o.camera_id!r} not in result")
        if o.marker_id not in result.marker_corners:
            raise MissingEntity(f"marker {o.marker_id!r} not in result")
    r = residual_vector(graph, result.poses, result.marker_corners)
    d = np.linalg.norm(r.reshape(-1, 2), axis=1)
    per_camera: dict[str, list[float]] = {}
    for o, di in zip(obs, d):
        per_camera.setdefault(o.camera_id, []).append(di * di)
    return ResidualStats(
        rms=float(np.sqrt(np.mean(d**2))),
        max=float(d.max()),
        per_camera={c: float(np.sqrt(np.mean(v))) for c, v in per_camera.items()},
    )
