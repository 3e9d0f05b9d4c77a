"""Levenberg-Marquardt minimization over SE(3) with axis-angle local updates.

Shared by the PnP refinement step and the object-level pose optimizer.
The residual callback returns pixel-space residuals and their Jacobian
with respect to a 6-vector (axis-angle increment, translation increment)
applied through `axis_angle_update`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BehindCamera, DivergedOptimization
from .geom import (
    CameraView,
    Pose6D,
    axis_angle_update,
    distort_normalized,
    distortion_jacobian,
)


@dataclass(frozen=True)
class LmConfig:
    initial_damping: float = 1e-3
    damping_factor: float = 10.0
    relative_cost_tolerance: float = 1e-10
    gradient_tolerance: float = 1e-8
    max_iterations: int = 100
    max_damping: float = 1e12

    def __post_init__(self):
        if self.initial_damping <= 0 or self.damping_factor <= 1:
            raise ValueError("damping parameters out of range")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass(frozen=True)
class LmResult:
    pose: Pose6D
    cost: float
    iterations: int
    converged: bool


def projection_residual_jacobian(
    pose: Pose6D,
    points: np.ndarray,
    pixels: np.ndarray,
    views: list[tuple[CameraView, np.ndarray]],
    weights: np.ndarray | None = None,
):
    """Residuals and Jacobian of weighted reprojection errors.

    points are in the frame `pose` maps from (object canonical frame, or
    the world frame when `pose` is itself a camera pose). `views` pairs
    each CameraView with the integer indices of the observations it owns;
    `pixels` are the measured detections, row-aligned with `points`.

    Returns (residual (2N,), jacobian (2N, 6)). Raises BehindCamera when
    any observed point has camera-frame depth <= 0.
    """
    n = points.shape[0]
    transformed = pose.apply(points)
    residual = np.empty(2 * n)
    jac = np.empty((2 * n, 6))
    for view, idx in views:
        cam_pose = view.pose_world_to_camera
        intr = view.intrinsics
        pc = cam_pose.apply(transformed[idx])
        z = pc[:, 2]
        if np.any(z <= 1e-9):
            raise BehindCamera("observation behind camera during optimization")
        xy = pc[:, :2] / z[:, None]
        d = distort_normalized(intr, xy)
        proj = np.stack(
            [intr.fx * d[:, 0] + intr.cx, intr.fy * d[:, 1] + intr.cy], axis=1
        )
        res = proj - pixels[idx]

        # d(pixel)/d(camera point): diag(fx, fy) @ Jdist @ d(normalized)/d(Xc)
        jd = distortion_jacobian(intr, xy)
        dnorm = np.zeros((len(idx), 2, 3))
        dnorm[:, 0, 0] = 1.0 / z
        dnorm[:, 0, 2] = -xy[:, 0] / z
        dnorm[:, 1, 1] = 1.0 / z
        dnorm[:, 1, 2] = -xy[:, 1] / z
        dpix_dc = jd @ dnorm
        dpix_dc[:, 0, :] *= intr.fx
        dpix_dc[:, 1, :] *= intr.fy

        # camera point Xc = R_cam (exp(w) R p + T + dT) + t_cam
        # dXc/dw = -R_cam [R p]_x ; dXc/dT = R_cam
        tw = transformed[idx] - pose.translation
        sk = np.zeros((len(idx), 3, 3))
        sk[:, 0, 1] = -tw[:, 2]
        sk[:, 0, 2] = tw[:, 1]
        sk[:, 1, 0] = tw[:, 2]
        sk[:, 1, 2] = -tw[:, 0]
        sk[:, 2, 0] = -tw[:, 1]
        sk[:, 2, 1] = tw[:, 0]
        dc_dw = -np.einsum("ab,nbc->nac", cam_pose.rotation, sk)
        j_rot = dpix_dc @ dc_dw
        j_tr = dpix_dc @ cam_pose.rotation

        rows = np.stack([2 * idx, 2 * idx + 1], axis=1).ravel()
        residual[rows] = res.reshape(-1)
        jac[rows, :3] = j_rot.reshape(-1, 3)
        jac[rows, 3:] = j_tr.reshape(-1, 3)

    if weights is not None:
        w = np.repeat(np.sqrt(weights), 2)
        residual = residual * w
        jac = jac * w[:, None]
    return residual, jac


def lm_minimize(pose0: Pose6D, residual_jacobian, config: LmConfig | None = None) -> LmResult:
    """Minimize sum of squared residuals over SE(3).

    `residual_jacobian(pose)` returns (r, J). Steps are accepted only on a
    strict cost decrease, so the accepted-cost sequence is monotone.
    """
    cfg = config or LmConfig()
    pose = pose0
    try:
        r, j = residual_jacobian(pose)
    except BehindCamera as exc:
        raise DivergedOptimization(f"initial pose invalid: {exc}") from exc
    cost = float(r @ r)
    if not np.isfinite(cost):
        raise DivergedOptimization("initial cost is not finite")

    lam = cfg.initial_damping
    iterations = 0
    converged = False
    grad = j.T @ r
    if np.abs(grad).max() < cfg.gradient_tolerance:
        return LmResult(pose, cost, 0, True)

    while iterations < cfg.max_iterations:
        jtj = j.T @ j
        diag = np.diag(jtj).copy()
        diag[diag < 1e-12] = 1e-12
        step_accepted = False
        while lam <= cfg.max_damping:
            try:
                delta = np.linalg.solve(jtj + lam * np.diag(diag), -grad)
            except np.linalg.LinAlgError:
                lam *= cfg.damping_factor
                continue
            candidate = axis_angle_update(pose, delta)
            try:
                r_new, j_new = residual_jacobian(candidate)
            except BehindCamera:
                lam *= cfg.damping_factor
                continue
            cost_new = float(r_new @ r_new)
            if not np.isfinite(cost_new):
                raise DivergedOptimization("cost became non-finite")
            if cost_new < cost:
                rel = (cost - cost_new) / max(cost, 1e-300)
                pose, r, j, cost = candidate, r_new, j_new, cost_new
                lam = max(lam / cfg.damping_factor, 1e-12)
                iterations += 1
                step_accepted = True
                grad = j.T @ r
                if rel < cfg.relative_cost_tolerance or np.abs(grad).max() < cfg.gradient_tolerance:
                    converged = True
                break
            lam *= cfg.damping_factor
        if not step_accepted:
            converged = True  # damping exhausted: local minimum within tolerance
            break
        if converged:
            break
    return LmResult(pose, cost, iterations, converged)
