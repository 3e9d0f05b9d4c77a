"""Object-level pose triangulation from 2D keypoint predictions.

Two routes from per-view keypoint predictions to a 6D pose:

  - classic_triangulation_pose: triangulate each keypoint to 3D, then fit
    the canonical keypoints with robust Orthogonal Procrustes.
  - object_triangulation_pose: optimize the 6D pose directly against the
    2D reprojection errors in every view (Levenberg-Marquardt with
    axis-angle updates and keypoint-level RANSAC).

The direct route never ends with a higher reprojection cost than the
classic pose it is initialized from.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateConfiguration,
    DegenerateRays,
    InsufficientKeypoints,
    InsufficientObservations,
    InsufficientViews,
    NoConsensus,
)
from .estimators import (
    Correspondence2D3D,
    RansacConfig,
    _adaptive_iterations,
    fit_procrustes,
    solve_pnp,
    triangulate_point,
)
from .geom import CameraView, Pose6D, compose, inverse, project_points
from .lm import LmConfig, lm_minimize, projection_residual_jacobian


@dataclass(frozen=True)
class KeypointPrediction:
    """A predicted 2D keypoint location in one view."""

    keypoint_id: int
    view_id: object
    pixel: np.ndarray
    confidence: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "pixel", np.asarray(self.pixel, dtype=np.float64))
        if self.confidence is not None and not (0.0 <= self.confidence <= 1.0):
            raise ValueError("confidence must be in [0, 1]")


@dataclass(frozen=True)
class PoseEstimate:
    pose: Pose6D
    final_cost_px2: float
    inlier_keypoints: frozenset
    iterations: int

    def __post_init__(self):
        if self.final_cost_px2 < 0:
            raise ValueError("cost must be nonnegative")


def _group_by_keypoint(predictions):
    groups = defaultdict(list)
    for p in predictions:
        groups[p.keypoint_id].append(p)
    return groups


def _check_keypoint_ids(groups, model):
    k = model.canonical_keypoints.shape[0]
    for kid in groups:
        if not (0 <= kid < k):
            raise ValueError(f"keypoint id {kid} outside model range [0, {k})")


def _observation_arrays(predictions, views, model):
    """Row-aligned (points, pixels, weights, per-view index lists, kp ids)."""
    points = np.stack([model.canonical_keypoints[p.keypoint_id] for p in predictions])
    pixels = np.stack([p.pixel for p in predictions])
    confidences = [p.confidence for p in predictions]
    if any(c is not None for c in confidences):
        weights = np.array([1.0 if c is None else c for c in confidences])
    else:
        weights = None
    by_view = defaultdict(list)
    for i, p in enumerate(predictions):
        by_view[p.view_id].append(i)
    view_groups = [
        (views[vid], np.asarray(idx, dtype=np.intp)) for vid, idx in sorted(
            by_view.items(), key=lambda kv: str(kv[0])
        )
    ]
    kp_ids = np.array([p.keypoint_id for p in predictions])
    return points, pixels, weights, view_groups, kp_ids


def reprojection_cost(pose: Pose6D, predictions, views, model,
                      use_weights: bool = True) -> float:
    """Sum of squared pixel reprojection errors of `pose` over predictions.

    Observations that land behind a camera contribute 1e12 px^2 each so
    that invalid poses compare as uniformly bad rather than crashing.
    """
    total = 0.0
    for p in predictions:
        view = views[p.view_id]
        point = model.canonical_keypoints[p.keypoint_id]
        proj, z = project_points(view, pose.apply(point)[None, :])
        if z[0] <= 1e-9:
            total += 1e12
            continue
        e = float(np.sum((proj[0] - p.pixel) ** 2))
        if use_weights and p.confidence is not None:
            e *= p.confidence
        total += e
    return total


def lm_jacobian(pose: Pose6D, predictions, views, model) -> np.ndarray:
    """Analytic Jacobian of the stacked reprojection residuals.

    Shape (2 * n_observations, 6); columns are the axis-angle increment
    then the translation increment. Raises BehindCamera if any referenced
    keypoint is behind its camera at `pose`.
    """
    points, pixels, weights, view_groups, _ = _observation_arrays(
        list(predictions), views, model
    )
    _, jac = projection_residual_jacobian(pose, points, pixels, view_groups, weights)
    return jac


def classic_triangulation_pose(
    predictions,
    views,
    model,
    config: RansacConfig | None = None,
) -> PoseEstimate:
    """Point-level baseline: triangulate keypoints, then robust Procrustes.

    Keypoints whose rays are degenerate are dropped; at least 3 must
    survive. final_cost_px2 reports the pose's reprojection cost over all
    input predictions. Raises InsufficientKeypoints.
    """
    predictions = list(predictions)
    groups = _group_by_keypoint(predictions)
    _check_keypoint_ids(groups, model)
    cfg = config or RansacConfig()

    triangulated = {}
    for kid, preds in sorted(groups.items()):
        obs = [(views[p.view_id], p.pixel) for p in preds]
        if len(obs) < 2:
            continue
        try:
            triangulated[kid] = triangulate_point(obs)
        except (DegenerateRays, InsufficientViews):
            continue
    if len(triangulated) < 3:
        raise InsufficientKeypoints(
            f"only {len(triangulated)} keypoints triangulated, need >= 3"
        )

    kids = sorted(triangulated)
    canonical = model.canonical_keypoints[kids]
    observed = np.stack([triangulated[k].position for k in kids])

    # pixel threshold -> meters through the scene's depth/focal scale
    scales = []
    for kid in kids:
        for p in groups[kid]:
            view = views[p.view_id]
            z = view.pose_world_to_camera.apply(triangulated[kid].position)[2]
            f = 0.5 * (view.intrinsics.fx + view.intrinsics.fy)
            if z > 1e-9:
                scales.append(z / f)
    scale = float(np.median(scales)) if scales else 1e-3
    procrustes_cfg = RansacConfig(
        inlier_threshold_px=cfg.inlier_threshold_px * scale,
        confidence=cfg.confidence,
        max_iterations=cfg.max_iterations,
        seed=cfg.seed,
    )
    pose = fit_procrustes(canonical, observed, procrustes_cfg)

    residuals = np.linalg.norm(pose.apply(canonical) - observed, axis=1)
    inliers = frozenset(
        k for k, r in zip(kids, residuals) if r < procrustes_cfg.inlier_threshold_px
    ) or frozenset(kids)
    cost = reprojection_cost(pose, predictions, views, model)
    return PoseEstimate(pose, cost, inliers, 0)


def _fallback_pnp_init(predictions, views, model, config):
    """Single-view PnP on the first view (by id order) with >= 4 keypoints."""
    by_view = defaultdict(list)
    for p in predictions:
        by_view[p.view_id].append(p)
    for vid in sorted(by_view, key=str):
        preds = by_view[vid]
        if len({p.keypoint_id for p in preds}) < 4:
            continue
        view = views[vid]
        corr = [
            Correspondence2D3D(model.canonical_keypoints[p.keypoint_id], p.pixel)
            for p in preds
        ]
        try:
            cam_pose, _ = solve_pnp(corr, view.intrinsics, config)
        except Exception:
            continue
        # solve_pnp treats canonical points as "world": cam_pose maps object
        # to this camera; lift back to world through the view extrinsics
        return compose(inverse(view.pose_world_to_camera), cam_pose)
    return None


def object_triangulation_pose(
    predictions,
    views,
    model,
    init: Pose6D | None = None,
    config: RansacConfig | None = None,
    lm_config: LmConfig | None = None,
) -> PoseEstimate:
    """Direct 6D pose optimization against 2D keypoints in two or more views.

    Minimizes the summed squared pixel reprojection error of the model
    keypoints over SE(3), starting from `init` (default: the classic
    triangulation pose, falling back to single-view PnP). RANSAC runs at
    keypoint granularity: a keypoint is an inlier iff every one of
    its per-view residuals is under the pixel threshold. The final LM
    pass starts from whichever of (init, best hypothesis) scores lower
    on the inlier set, so the returned cost never exceeds the
    initialization's cost on that set.
    """
    predictions = list(predictions)
    groups = _group_by_keypoint(predictions)
    _check_keypoint_ids(groups, model)
    if len(predictions) < 4 or len(groups) < 3:
        raise InsufficientObservations(
            f"{len(predictions)} observations of {len(groups)} keypoints; "
            "need >= 4 observations of >= 3 keypoints"
        )
    cfg = config or RansacConfig()
    lm_cfg = lm_config or LmConfig()

    if init is None:
        try:
            init = classic_triangulation_pose(predictions, views, model, cfg).pose
        except InsufficientKeypoints:
            init = _fallback_pnp_init(predictions, views, model, cfg)
        if init is None:
            raise InsufficientObservations(
                "no initialization available (classic triangulation degenerate, "
                "no view has 4 keypoints for PnP)"
            )

    def solve_on(pred_subset, start, config_lm):
        points, pixels, weights, view_groups, _ = _observation_arrays(
            pred_subset, views, model
        )

        def residual_jacobian(pose):
            return projection_residual_jacobian(pose, points, pixels, view_groups, weights)

        return lm_minimize(start, residual_jacobian, config_lm)

    def keypoint_inliers(pose):
        inl = set()
        for kid, preds in groups.items():
            errs = []
            for p in preds:
                view = views[p.view_id]
                proj, z = project_points(view, pose.apply(
                    model.canonical_keypoints[p.keypoint_id])[None, :])
                if z[0] <= 1e-9:
                    errs.append(np.inf)
                else:
                    errs.append(float(np.linalg.norm(proj[0] - p.pixel)))
            if max(errs) < cfg.inlier_threshold_px:
                inl.add(kid)
        return inl

    kids = sorted(groups)
    rng = np.random.default_rng(cfg.seed)
    sample_lm = LmConfig(
        initial_damping=lm_cfg.initial_damping,
        damping_factor=lm_cfg.damping_factor,
        relative_cost_tolerance=lm_cfg.relative_cost_tolerance,
        gradient_tolerance=lm_cfg.gradient_tolerance,
        max_iterations=min(lm_cfg.max_iterations, 25),
    )
    best_inliers: set = set()
    best_pose = init
    max_iter = cfg.max_iterations if len(kids) > 3 else 1
    i = 0
    while i < max_iter:
        i += 1
        if len(kids) > 3:
            sample = [kids[j] for j in rng.choice(len(kids), size=3, replace=False)]
        else:
            sample = kids
        subset = [p for p in predictions if p.keypoint_id in sample]
        if len(subset) < 4:
            continue
        try:
            hyp = solve_on(subset, init, sample_lm)
        except Exception:
            continue
        inl = keypoint_inliers(hyp.pose)
        if len(inl) > len(best_inliers):
            best_inliers, best_pose = inl, hyp.pose
            max_iter = min(
                cfg.max_iterations,
                _adaptive_iterations(len(inl) / len(kids), 3, cfg.confidence),
            )
            if len(inl) == len(kids):
                break
    if len(best_inliers) < 3:
        raise NoConsensus(
            f"only {len(best_inliers)} inlier keypoints under "
            f"{cfg.inlier_threshold_px} px"
        )

    final_preds = [p for p in predictions if p.keypoint_id in best_inliers]

    def subset_cost(pose):
        return reprojection_cost(pose, final_preds, views, model)

    start = init if subset_cost(init) <= subset_cost(best_pose) else best_pose
    result = solve_on(final_preds, start, lm_cfg)
    return PoseEstimate(
        result.pose, result.cost, frozenset(best_inliers), result.iterations
    )
