"""Robust geometric estimators: RANSAC-PnP, multi-view triangulation,
and rigid point-set alignment (Orthogonal Procrustes).

All estimators are deterministic given the RansacConfig seed, and exact
(to ~1e-6) on noiseless synthetic data.
"""

from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np

from .errors import (
    DegenerateConfiguration,
    DegenerateRays,
    GeometryMismatch,
    InsufficientViews,
    NoConsensus,
)
from .geom import (
    CameraIntrinsics,
    CameraView,
    Pose6D,
    project_points,
    rotation_from_axis_angle,
)
from .lm import LmConfig, lm_minimize, projection_residual_jacobian

MIN_TRIANGULATION_ANGLE_RAD = np.radians(0.1)


@dataclass(frozen=True)
class Correspondence2D3D:
    """A known world point observed at a pixel; source_id names the marker corner."""

    point_world: np.ndarray
    pixel: np.ndarray
    source_id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "point_world", np.asarray(self.point_world, dtype=np.float64))
        object.__setattr__(self, "pixel", np.asarray(self.pixel, dtype=np.float64))


@dataclass(frozen=True)
class RansacConfig:
    """Robust-fitting parameters.

    inlier_threshold_px is in pixels for image-space estimators; fit_procrustes
    interprets the same field in meters (its residuals are 3D distances).
    """

    inlier_threshold_px: float = 2.0
    confidence: float = 0.999
    max_iterations: int = 1000
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.confidence < 1.0):
            raise ValueError("confidence must be in (0, 1)")
        if self.inlier_threshold_px <= 0:
            raise ValueError("inlier threshold must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass(frozen=True)
class TriangulatedPoint:
    position: np.ndarray
    reprojection_rmse_px: float
    view_count: int

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=np.float64))
        if self.view_count < 2:
            raise ValueError("view_count must be >= 2")


def _collinear(points: np.ndarray, rel_tol: float = 1e-9) -> bool:
    """True when the point set spans less than a 2D affine subspace."""
    c = points - points.mean(axis=0)
    s = np.linalg.svd(c, compute_uv=False)
    return s[0] < 1e-12 or s[1] <= rel_tol * s[0]


def _adaptive_iterations(inlier_ratio: float, sample_size: int, confidence: float) -> int:
    w = min(max(inlier_ratio, 1e-9), 1.0)
    if w >= 1.0:
        return 1
    denom = np.log1p(-min(w**sample_size, 1 - 1e-15))
    return int(np.ceil(np.log(1.0 - confidence) / denom))


def _p3p_candidates(obj4: np.ndarray, img4: np.ndarray, intrinsics: CameraIntrinsics):
    """Minimal 4-point pose via closed-form P3P (OpenCV backend)."""
    k = intrinsics.matrix
    dist = intrinsics.full_distortion()
    ok, rvec, tvec = cv2.solvePnP(
        obj4.astype(np.float64),
        img4.astype(np.float64).reshape(-1, 1, 2),
        k,
        dist,
        flags=cv2.SOLVEPNP_P3P,
    )
    if not ok:
        return None
    r = rotation_from_axis_angle(np.asarray(rvec, dtype=np.float64).ravel())
    t = np.asarray(tvec, dtype=np.float64).ravel()
    if not np.all(np.isfinite(r)) or not np.all(np.isfinite(t)):
        return None
    return Pose6D(r, t)


def _pnp_reprojection_errors(pose: Pose6D, points: np.ndarray, pixels: np.ndarray,
                             intrinsics: CameraIntrinsics) -> np.ndarray:
    view = CameraView(intrinsics, pose)
    proj, z = project_points(view, points)
    err = np.full(len(points), np.inf)
    ok = z > 1e-9
    err[ok] = np.linalg.norm(proj[ok] - pixels[ok], axis=1)
    return err


def solve_pnp(
    correspondences: list[Correspondence2D3D],
    intrinsics: CameraIntrinsics,
    config: RansacConfig,
    lm_config: LmConfig | None = None,
) -> tuple[Pose6D, np.ndarray]:
    """Camera pose from 2D-3D correspondences with RANSAC and LM refinement.

    Works on coplanar point sets (fiducial boards). Returns the refined
    world-to-camera pose and the boolean inlier mask of the winning
    consensus set; the refined pose never has a higher reprojection cost
    on that set than the raw RANSAC hypothesis.

    Raises DegenerateConfiguration (fewer than 4 correspondences, or
    collinear world points) and NoConsensus (best inlier set below 4).
    """
    n = len(correspondences)
    if n < 4:
        raise DegenerateConfiguration(f"PnP needs >= 4 correspondences, got {n}")
    points = np.stack([c.point_world for c in correspondences])
    pixels = np.stack([c.pixel for c in correspondences])
    if _collinear(points):
        raise DegenerateConfiguration("world points are collinear")

    rng = np.random.default_rng(config.seed)
    threshold = config.inlier_threshold_px
    best_mask = None
    best_pose = None
    best_count = 3
    max_iter = config.max_iterations
    i = 0
    while i < max_iter:
        i += 1
        sample = rng.choice(n, size=4, replace=False)
        if _collinear(points[sample], rel_tol=1e-6):
            continue
        pose = _p3p_candidates(points[sample], pixels[sample], intrinsics)
        if pose is None:
            continue
        err = _pnp_reprojection_errors(pose, points, pixels, intrinsics)
        mask = err < threshold
        count = int(mask.sum())
        if count > best_count:
            best_count, best_mask, best_pose = count, mask, pose
            max_iter = min(
                config.max_iterations,
                _adaptive_iterations(count / n, 4, config.confidence),
            )
    if best_pose is None:
        raise NoConsensus("no PnP hypothesis reached 4 inliers")

    idx = np.flatnonzero(best_mask)

    def residual_jacobian(pose):
        view = CameraView(intrinsics, Pose6D.identity())
        return projection_residual_jacobian(
            pose, points[idx], pixels[idx], [(view, np.arange(len(idx)))]
        )

    result = lm_minimize(best_pose, residual_jacobian, lm_config or LmConfig())
    return result.pose, best_mask


class _ObservationBundle:
    """Stacked per-view arrays for vectorized triangulation."""

    __slots__ = ("rot", "trans", "fx", "fy", "cx", "cy", "dist", "pixels", "centers")

    def __init__(self, observations):
        views = [v for v, _ in observations]
        self.rot = np.stack([v.pose_world_to_camera.rotation for v in views])
        self.trans = np.stack([v.pose_world_to_camera.translation for v in views])
        self.fx = np.array([v.intrinsics.fx for v in views])
        self.fy = np.array([v.intrinsics.fy for v in views])
        self.cx = np.array([v.intrinsics.cx for v in views])
        self.cy = np.array([v.intrinsics.cy for v in views])
        self.dist = np.stack([v.intrinsics.full_distortion() for v in views])
        self.pixels = np.stack(
            [np.asarray(p, dtype=np.float64) for _, p in observations]
        )
        self.centers = np.einsum("nba,nb->na", self.rot, -self.trans)

    def __len__(self):
        return len(self.fx)

    def normalized(self) -> np.ndarray:
        """Undistorted normalized coordinates of the measured pixels."""
        xd = np.stack(
            [(self.pixels[:, 0] - self.cx) / self.fx,
             (self.pixels[:, 1] - self.cy) / self.fy], axis=1
        )
        if not self.dist.any():
            return xd
        x = xd.copy()
        for _ in range(30):
            x = x + (xd - _distort_rows(x, self.dist))
        return x

    def camera_points(self, x: np.ndarray) -> np.ndarray:
        return self.rot @ x + self.trans

    def residuals(self, x: np.ndarray) -> np.ndarray:
        """(N, 2) pixel residuals; behind-camera rows are 1e6 px."""
        pc = self.camera_points(x)
        z = pc[:, 2]
        res = np.full((len(self), 2), 1e6)
        ok = z > 1e-9
        if np.any(ok):
            xy = pc[ok, :2] / z[ok, None]
            d = _distort_rows(xy, self.dist[ok])
            res[ok, 0] = self.fx[ok] * d[:, 0] + self.cx[ok] - self.pixels[ok, 0]
            res[ok, 1] = self.fy[ok] * d[:, 1] + self.cy[ok] - self.pixels[ok, 1]
        return res


def _distort_rows(xy: np.ndarray, dist: np.ndarray) -> np.ndarray:
    """Brown-Conrady with per-row coefficient sets; xy and dist are (N, ...)."""
    k1, k2, p1, p2, k3 = dist.T
    x, y = xy[:, 0], xy[:, 1]
    r2 = x * x + y * y
    radial = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3))
    xd = x * radial + 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x)
    yd = y * radial + p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y
    return np.stack([xd, yd], axis=1)


def _distortion_jacobian_rows(xy: np.ndarray, dist: np.ndarray) -> np.ndarray:
    k1, k2, p1, p2, k3 = dist.T
    x, y = xy[:, 0], xy[:, 1]
    r2 = x * x + y * y
    radial = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3))
    dradial = k1 + 2.0 * k2 * r2 + 3.0 * k3 * r2 * r2
    j = np.empty((xy.shape[0], 2, 2))
    j[:, 0, 0] = radial + 2.0 * x * x * dradial + 2.0 * p1 * y + 6.0 * p2 * x
    j[:, 0, 1] = 2.0 * x * y * dradial + 2.0 * p1 * x + 2.0 * p2 * y
    j[:, 1, 0] = j[:, 0, 1]
    j[:, 1, 1] = radial + 2.0 * y * y * dradial + 6.0 * p1 * y + 2.0 * p2 * x
    return j


def triangulate_point(
    observations: list[tuple[CameraView, np.ndarray]],
    refine: bool = True,
) -> TriangulatedPoint:
    """Multi-view point triangulation: linear DLT, then optional Gauss-Newton
    refinement of the summed squared pixel reprojection error.

    reprojection_rmse_px is the per-coordinate RMSE over all 2N residuals.
    Raises InsufficientViews (< 2 observations) and DegenerateRays (rays
    within 0.1 degrees of parallel, or coincident camera centers).
    """
    if len(observations) < 2:
        raise InsufficientViews(f"triangulation needs >= 2 views, got {len(observations)}")
    bundle = _ObservationBundle(observations)
    if np.max(np.linalg.norm(bundle.centers - bundle.centers[0], axis=1)) < 1e-12:
        raise DegenerateRays("all observations share one camera center")

    xn = bundle.normalized()
    dirs = np.einsum(
        "nba,nb->na", bundle.rot, np.column_stack([xn, np.ones(len(bundle))])
    )
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    dots = np.clip(np.abs(dirs @ dirs.T), -1.0, 1.0)
    np.fill_diagonal(dots, 1.0)
    angle = float(np.arccos(dots.min()))
    if angle < MIN_TRIANGULATION_ANGLE_RAD:
        raise DegenerateRays(
            f"max ray angle {np.degrees(angle):.4f} deg below 0.1 deg"
        )

    rt = np.concatenate([bundle.rot, bundle.trans[:, :, None]], axis=2)  # (N,3,4)
    a = np.concatenate(
        [xn[:, 0, None] * rt[:, 2] - rt[:, 0], xn[:, 1, None] * rt[:, 2] - rt[:, 1]]
    )
    _, _, vt = np.linalg.svd(a)
    xh = vt[-1]
    if abs(xh[3]) < 1e-12 * np.linalg.norm(xh[:3]):
        raise DegenerateRays("triangulated point at infinity")
    x = xh[:3] / xh[3]

    if refine:
        x = _refine_point(x, bundle)

    res = bundle.residuals(x)
    rmse = float(np.sqrt(np.mean(res**2)))
    return TriangulatedPoint(x, rmse, len(observations))


def _refine_point(x0: np.ndarray, bundle: _ObservationBundle,
                  iterations: int = 25) -> np.ndarray:
    """Gauss-Newton on the 3D point; accepts only cost decreases."""
    x = x0.copy()
    r = bundle.residuals(x)
    cost = float(np.sum(r * r))
    if cost < 1e-18:
        return x
    lam = 1e-12
    for _ in range(iterations):
        pc = bundle.camera_points(x)
        z = pc[:, 2]
        if np.any(z <= 1e-9):
            break
        xy = pc[:, :2] / z[:, None]
        jd = _distortion_jacobian_rows(xy, bundle.dist)
        dnorm = np.zeros((len(bundle), 2, 3))
        dnorm[:, 0, 0] = 1.0 / z
        dnorm[:, 0, 2] = -xy[:, 0] / z
        dnorm[:, 1, 1] = 1.0 / z
        dnorm[:, 1, 2] = -xy[:, 1] / z
        dpix = jd @ dnorm @ bundle.rot
        dpix[:, 0, :] *= bundle.fx[:, None]
        dpix[:, 1, :] *= bundle.fy[:, None]
        jac = dpix.reshape(-1, 3)
        g = jac.T @ r.reshape(-1)
        if np.abs(g).max() < 1e-14:
            break
        try:
            delta = np.linalg.solve(jac.T @ jac + lam * np.eye(3), -g)
        except np.linalg.LinAlgError:
            break
        x_new = x + delta
        r_new = bundle.residuals(x_new)
        cost_new = float(np.sum(r_new * r_new))
        if cost_new < cost:
            improved = cost - cost_new
            x, r, cost = x_new, r_new, cost_new
            lam = max(lam / 10.0, 1e-14)
            if improved < 1e-10 * max(cost, 1e-12):
                break
        else:
            lam *= 10.0
            if lam > 1e6:
                break
    return x


def triangulate_marker(
    corner_observations: list[list[tuple[CameraView, np.ndarray]]],
    marker_geometry: np.ndarray,
    refine: bool = True,
) -> list[TriangulatedPoint]:
    """Triangulate the four corners of a fiducial marker independently and
    check the recovered inter-corner distances against the measured geometry.

    marker_geometry is the (4, 3) corner layout in the marker frame; only
    its pairwise distances are used. The tolerance per corner pair is
    5x the expected 3D error (reprojection RMSE scaled by depth/focal)
    plus a 1 micrometer floor. Raises GeometryMismatch past that, and
    InsufficientViews naming any corner seen in fewer than 2 views.
    """
    geometry = np.asarray(marker_geometry, dtype=np.float64)
    if geometry.shape != (4, 3):
        raise ValueError("marker_geometry must be (4, 3)")
    if len(corner_observations) != 4:
        raise ValueError("corner_observations must list 4 corners")
    short = [i for i, obs in enumerate(corner_observations) if len(obs) < 2]
    if short:
        raise InsufficientViews(f"marker corners seen in < 2 views: {short}")

    points = [triangulate_point(obs, refine=refine) for obs in corner_observations]

    # expected 3D error per corner: the residual RMSE underestimates the
    # measurement noise by the fitted-DOF factor (2N residuals, 3 DOF),
    # and depth error grows as 1/sin(triangulation angle)
    expected = []
    for tp, obs in zip(points, corner_observations):
        depths, focals, dirs = [], [], []
        for view, _ in obs:
            pc = view.pose_world_to_camera.apply(tp.position)
            depths.append(max(pc[2], 1e-9))
            focals.append(0.5 * (view.intrinsics.fx + view.intrinsics.fy))
            ray = tp.position - view.camera_center
            dirs.append(ray / max(np.linalg.norm(ray), 1e-12))
        dirs = np.stack(dirs)
        dots = np.clip(np.abs(dirs @ dirs.T), -1.0, 1.0)
        np.fill_diagonal(dots, 1.0)
        angle = np.arccos(dots.min())
        n = 2 * len(obs)
        sigma = tp.reprojection_rmse_px * np.sqrt(n / max(n - 3, 1))
        expected.append(
            sigma * np.mean(depths) / np.mean(focals) / max(np.sin(angle), 0.1)
        )

    pairs = [(0, 1), (1, 2), (2, 3), (3, 0), (0, 2), (1, 3)]
    for i, j in pairs:
        measured = np.linalg.norm(points[i].position - points[j].position)
        nominal = np.linalg.norm(geometry[i] - geometry[j])
        tol = 5.0 * (expected[i] + expected[j]) + 1e-6
        if abs(measured - nominal) > tol:
            raise GeometryMismatch(
                f"corner pair ({i},{j}): measured {measured:.6f} m vs "
                f"nominal {nominal:.6f} m exceeds tolerance {tol:.6f} m"
            )
    return points


def _procrustes_direct(canonical: np.ndarray, observed: np.ndarray) -> Pose6D:
    """Closed-form rigid fit minimizing sum ||R x* + T - x||^2 (Kabsch)."""
    c0 = canonical.mean(axis=0)
    o0 = observed.mean(axis=0)
    h = (observed - o0).T @ (canonical - c0)
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(u @ vt))
    r = u @ np.diag([1.0, 1.0, d]) @ vt
    t = o0 - r @ c0
    return Pose6D(r, t)


def fit_procrustes(
    canonical: np.ndarray,
    observed: np.ndarray,
    config: RansacConfig | None = None,
) -> Pose6D:
    """Rigid pose aligning canonical keypoints to observed 3D points.

    SVD closed form with the reflection corrected to det +1. When config
    is given, RANSAC over minimal samples of 3 runs first, with
    config.inlier_threshold_px read as a distance threshold in METERS;
    if no sample reaches 3 inliers the all-pair fit is returned.

    Raises DegenerateConfiguration for < 3 pairs or collinear canonical
    points (2-keypoint objects need an external symmetry-axis convention).
    """
    canonical = np.asarray(canonical, dtype=np.float64).reshape(-1, 3)
    observed = np.asarray(observed, dtype=np.float64).reshape(-1, 3)
    if canonical.shape != observed.shape:
        raise ValueError("canonical and observed must pair up")
    n = canonical.shape[0]
    if n < 3:
        raise DegenerateConfiguration(
            f"Procrustes needs >= 3 point pairs, got {n}"
        )
    if _collinear(canonical):
        raise DegenerateConfiguration("canonical keypoints are collinear")

    if config is None:
        return _procrustes_direct(canonical, observed)

    threshold_m = config.inlier_threshold_px  # meters for this estimator
    rng = np.random.default_rng(config.seed)
    best_mask = None
    best_count = 2
    max_iter = config.max_iterations
    i = 0
    while i < max_iter:
        i += 1
        sample = rng.choice(n, size=3, replace=False)
        if _collinear(canonical[sample], rel_tol=1e-6):
            continue
        pose = _procrustes_direct(canonical[sample], observed[sample])
        err = np.linalg.norm(pose.apply(canonical) - observed, axis=1)
        mask = err < threshold_m
        count = int(mask.sum())
        if count > best_count:
            best_count, best_mask = count, mask
            max_iter = min(
                config.max_iterations,
                _adaptive_iterations(count / n, 3, config.confidence),
            )
    if best_mask is None or best_mask.sum() < 3:
        return _procrustes_direct(canonical, observed)
    if _collinear(canonical[best_mask]):
        return _procrustes_direct(canonical, observed)
    return _procrustes_direct(canonical[best_mask], observed[best_mask])
