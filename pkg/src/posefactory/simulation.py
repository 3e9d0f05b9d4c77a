"""Synthetic scene generation and Monte Carlo labeling-error analysis.

The generator projects exact marker and keypoint geometry through exact
cameras, then corrupts observations with Gaussian pixel noise and
uniform outliers. Everything is deterministic given the spec seed, so
generated scenes double as ground-truth oracles for the estimators.
"""

from __future__ import annotations

import copy
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import InvalidSpec, NoAnnotations
from .geom import (
    CameraIntrinsics,
    CameraView,
    Pose6D,
    StereoRig,
    compose,
    look_at_pose,
    project_points,
)
from .pipeline import marker_corner_offsets, select_annotation_frames
from .scene import (
    CAMERAS,
    LEFT,
    RIGHT,
    Annotation,
    FrameDetections,
    FrameValidity,
    GroundTruth,
    ObjectModel,
    SceneRecord,
    frame_is_valid,
)

DEFAULT_INTRINSICS = CameraIntrinsics(
    fx=1000.0, fy=1000.0, cx=640.0, cy=360.0, image_width=1280, image_height=720
)


@dataclass(frozen=True)
class BoardLayout:
    """Large fiducial board: a grid of square markers on the z=0 plane."""

    rows: int = 4
    cols: int = 5
    marker_size: float = 0.06
    spacing: float = 0.02

    def corner_positions(self) -> dict:
        out = {}
        pitch = self.marker_size + self.spacing
        width = self.cols * pitch - self.spacing
        height = self.rows * pitch - self.spacing
        origin = np.array([-width / 2.0, -height / 2.0, 0.0])
        offsets = marker_corner_offsets(self.marker_size)
        for r in range(self.rows):
            for c in range(self.cols):
                center = origin + [
                    c * pitch + self.marker_size / 2.0,
                    r * pitch + self.marker_size / 2.0,
                    0.0,
                ]
                for k in range(4):
                    out[f"board/{r}_{c}/{k}"] = center + offsets[k]
        return out


@dataclass(frozen=True)
class TrajectorySpec:
    """Moving-camera path: an arc, a full orbit, or a handheld-style sweep."""

    kind: str = "arc"  # arc | orbit | handheld
    frame_count: int = 60
    center: tuple = (0.0, 0.0, 0.0)
    radius: float = 0.6
    elevation_deg: float = 40.0
    azimuth_start_deg: float = -70.0
    azimuth_end_deg: float = 70.0
    radius_jitter: float = 0.15
    elevation_jitter_deg: float = 12.0
    position_jitter: float = 0.008

    def __post_init__(self):
        if self.kind not in ("arc", "orbit", "handheld"):
            raise InvalidSpec(f"unknown trajectory kind {self.kind!r}")
        if self.frame_count < 1:
            raise InvalidSpec("trajectory frame_count must be >= 1")
        if self.radius <= 0:
            raise InvalidSpec("trajectory radius must be positive")


def _spherical(center, radius, azimuth, elevation):
    return np.asarray(center) + radius * np.array(
        [
            np.cos(elevation) * np.sin(azimuth),
            -np.cos(elevation) * np.cos(azimuth),
            np.sin(elevation),
        ]
    )


def trajectory_poses(spec: TrajectorySpec, rng: np.random.Generator) -> list:
    """Left-camera world-to-camera poses along the requested path."""
    n = spec.frame_count
    center = np.asarray(spec.center, dtype=np.float64)
    if spec.kind == "orbit":
        az = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
        el = np.full(n, np.radians(spec.elevation_deg))
        radius = np.full(n, spec.radius)
        positions = np.stack(
            [_spherical(center, radius[i], az[i], el[i]) for i in range(n)]
        )
    elif spec.kind == "arc":
        az = np.linspace(
            np.radians(spec.azimuth_start_deg), np.radians(spec.azimuth_end_deg), max(n, 2)
        )[:n]
        el = np.full(n, np.radians(spec.elevation_deg))
        radius = np.full(n, spec.radius)
        positions = np.stack(
            [_spherical(center, radius[i], az[i], el[i]) for i in range(n)]
        )
    else:  # handheld: smooth spline through random knots plus bounded jitter
        knots = max(4, n // 25)
        t_knots = np.linspace(0.0, 1.0, knots)
        az_k = np.sort(
            rng.uniform(np.radians(spec.azimuth_start_deg), np.radians(spec.azimuth_end_deg), knots)
        )
        el_base = np.radians(spec.elevation_deg)
        el_k = el_base + rng.uniform(-1.0, 1.0, knots) * np.radians(spec.elevation_jitter_deg)
        r_k = spec.radius * (1.0 + rng.uniform(-1.0, 1.0, knots) * spec.radius_jitter)
        t = np.linspace(0.0, 1.0, n)
        if knots >= 4:
            az = CubicSpline(t_knots, az_k)(t)
            el = CubicSpline(t_knots, el_k)(t)
            radius = CubicSpline(t_knots, r_k)(t)
        else:
            az = np.interp(t, t_knots, az_k)
            el = np.interp(t, t_knots, el_k)
            radius = np.interp(t, t_knots, r_k)
        positions = np.stack(
            [_spherical(center, radius[i], az[i], el[i]) for i in range(n)]
        )
        positions = positions + rng.uniform(-1.0, 1.0, positions.shape) * spec.position_jitter
    look_jitter = (
        rng.uniform(-1.0, 1.0, (n, 3)) * 0.01 if spec.kind == "handheld" else np.zeros((n, 3))
    )
    return [look_at_pose(positions[i], center + look_jitter[i]) for i in range(n)]


@dataclass(frozen=True)
class SyntheticSceneSpec:
    """Everything needed to render geometric observations of one scene."""

    rng_seed: int = 0
    scene_id: str = "synthetic"
    board: BoardLayout = field(default_factory=BoardLayout)
    n_small_markers: int = 6
    marker_size: float = 0.05
    objects: tuple = ()  # ((ObjectModel, Pose6D), ...)
    trajectory: TrajectorySpec = field(default_factory=TrajectorySpec)
    static_camera_poses: tuple | None = None
    intrinsics: CameraIntrinsics = DEFAULT_INTRINSICS
    stereo_baseline: float = 0.045
    pixel_noise_sigma: float = 0.0
    outlier_rate: float = 0.0
    annotated_frame_count: int = 4

    def __post_init__(self):
        if self.trajectory.frame_count < 1:
            raise InvalidSpec("frame count must be >= 1")
        if self.pixel_noise_sigma < 0:
            raise InvalidSpec("pixel_noise_sigma must be >= 0")
        if not (0.0 <= self.outlier_rate < 1.0):
            raise InvalidSpec("outlier_rate must be in [0, 1)")
        if self.n_small_markers < 2:
            raise InvalidSpec("need at least 2 small markers")
        if self.marker_size <= 0:
            raise InvalidSpec("marker_size must be positive")
        if self.annotated_frame_count < 2:
            raise InvalidSpec("annotated_frame_count must be >= 2")
        object.__setattr__(self, "objects", tuple(self.objects))
        if self.static_camera_poses is not None:
            object.__setattr__(
                self, "static_camera_poses", tuple(self.static_camera_poses)
            )

    def rig(self) -> StereoRig:
        return StereoRig(
            self.intrinsics,
            self.intrinsics,
            Pose6D(np.eye(3), np.array([-self.stereo_baseline, 0.0, 0.0])),
        )


def _default_static_poses(spec: SyntheticSceneSpec) -> list:
    views = []
    for az_deg in (-25.0, 25.0):
        pos = _spherical(spec.trajectory.center, 1.1, np.radians(az_deg), np.radians(42.0))
        views.append(look_at_pose(pos, spec.trajectory.center))
    return views


class _NoisyProjector:
    """Projects points and applies the spec's noise and outlier model."""

    def __init__(self, spec: SyntheticSceneSpec, rng: np.random.Generator):
        self.sigma = spec.pixel_noise_sigma
        self.outlier_rate = spec.outlier_rate
        self.rng = rng

    def observe(self, view: CameraView, point_world: np.ndarray):
        """Noisy pixel or None when the exact projection is not visible."""
        pix, z = project_points(view, point_world[None, :])
        if z[0] <= 1e-9 or not view.intrinsics.contains(pix)[0]:
            return None
        p = pix[0]
        if self.sigma > 0:
            p = p + self.rng.normal(0.0, self.sigma, 2)
        if self.outlier_rate > 0 and self.rng.uniform() < self.outlier_rate:
            intr = view.intrinsics
            p = np.array(
                [
                    self.rng.uniform(0, intr.image_width - 1),
                    self.rng.uniform(0, intr.image_height - 1),
                ]
            )
        return p


def _place_small_markers(spec: SyntheticSceneSpec, rng: np.random.Generator) -> dict:
    """Marker id -> (4, 3) world corners, scattered around the scene center."""
    center = np.asarray(spec.trajectory.center, dtype=np.float64)
    offsets = marker_corner_offsets(spec.marker_size)
    out = {}
    for m in range(spec.n_small_markers):
        ang = rng.uniform(0.0, 2.0 * np.pi)
        rad = rng.uniform(0.16, 0.42)
        pos = center + [rad * np.cos(ang), rad * np.sin(ang), rng.uniform(0.0, 0.06)]
        yaw = rng.uniform(0.0, 2.0 * np.pi)
        c, s = np.cos(yaw), np.sin(yaw)
        rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        out[f"m{m:02d}"] = offsets @ rot.T + pos
    return out


def generate_scene(spec: SyntheticSceneSpec) -> tuple[SceneRecord, GroundTruth]:
    """Render a full synthetic scene and its ground truth.

    Deterministic given spec.rng_seed: identical specs produce
    bit-identical records. Markers or keypoints behind a camera (or out
    of frame) are simply absent from that camera's detections, and frame
    validity reflects what was actually observed.
    """
    rng = np.random.default_rng(spec.rng_seed)
    noisy = _NoisyProjector(spec, rng)
    rig = spec.rig()

    board = spec.board.corner_positions()
    static_poses = (
        list(spec.static_camera_poses)
        if spec.static_camera_poses is not None
        else _default_static_poses(spec)
    )
    if len(static_poses) != 2:
        raise InvalidSpec("exactly two static camera poses required")
    static_views = [CameraView(spec.intrinsics, p) for p in static_poses]

    static_board_detections = []
    for view in static_views:
        det = {}
        for cid, pos in board.items():
            obs = noisy.observe(view, pos)
            if obs is not None:
                det[cid] = obs
        static_board_detections.append(det)

    markers = _place_small_markers(spec, rng)
    static_marker_detections = []
    for view in static_views:
        det = {}
        for mid, corners in sorted(markers.items()):
            obs = [noisy.observe(view, c) for c in corners]
            if any(o is not None for o in obs):
                det[mid] = obs
        static_marker_detections.append(det)

    left_poses = trajectory_poses(spec.trajectory, rng)
    frames = []
    moving_poses_gt = {}
    validity_gt = []
    for j, pose in enumerate(left_poses):
        moving_poses_gt[j] = pose
        views = {LEFT: CameraView(rig.left, pose),
                 RIGHT: CameraView(rig.right, rig.right_view(pose))}
        per_camera = {}
        for cam in CAMERAS:
            det = {}
            for mid, corners in sorted(markers.items()):
                obs = [noisy.observe(views[cam], c) for c in corners]
                if any(o is not None for o in obs):
                    det[mid] = obs
            per_camera[cam] = det
        frames.append(FrameDetections(j, j / 15.0, per_camera))
        m, c = _marker_corner_counts(per_camera[LEFT])
        validity_gt.append(FrameValidity(j, m, c, frame_is_valid(m, c)))

    keypoints_world = {}
    object_world_poses = {}
    object_ids = []
    for model, pose in spec.objects:
        object_ids.append(model.object_id)
        keypoints_world[model.object_id] = pose.apply(model.canonical_keypoints)
        object_world_poses[model.object_id] = pose

    valid_frames = {v.frame_index: moving_poses_gt[v.frame_index]
                    for v in validity_gt if v.valid}
    if len(valid_frames) < spec.annotated_frame_count:
        raise InvalidSpec(
            f"only {len(valid_frames)} valid frames generated; "
            f"{spec.annotated_frame_count} annotation frames requested"
        )
    annotated_frames = select_annotation_frames(valid_frames, spec.annotated_frame_count)

    annotations = []
    for j in annotated_frames:
        views = {LEFT: CameraView(rig.left, moving_poses_gt[j]),
                 RIGHT: CameraView(rig.right, rig.right_view(moving_poses_gt[j]))}
        for model, _pose in spec.objects:
            world = keypoints_world[model.object_id]
            for cam in CAMERAS:
                for k, x in enumerate(world):
                    obs = noisy.observe(views[cam], x)
                    if obs is not None:
                        annotations.append(
                            Annotation(j, cam, model.object_id, k, obs)
                        )

    record = SceneRecord(
        scene_id=spec.scene_id,
        rig=rig,
        board=board,
        static_intrinsics=[spec.intrinsics, spec.intrinsics],
        static_board_detections=static_board_detections,
        static_marker_detections=static_marker_detections,
        marker_sizes={mid: spec.marker_size for mid in markers},
        frames=frames,
        object_ids=object_ids,
        models={model.object_id: model for model, _ in spec.objects},
        annotations=annotations,
    )
    truth = GroundTruth(
        static_views=static_views,
        fiducial_map={mid: corners.copy() for mid, corners in markers.items()},
        moving_poses=moving_poses_gt,
        keypoints_world=keypoints_world,
        object_world_poses=object_world_poses,
        validity=validity_gt,
        annotated_frames=annotated_frames,
    )
    return record, truth


def _marker_corner_counts(detections: dict) -> tuple[int, int]:
    markers = 0
    corners = 0
    for obs in detections.values():
        seen = sum(1 for o in obs if o is not None)
        corners += seen
        if seen == 4:
            markers += 1
    return markers, corners


def reprojection_rmse(scene: SceneRecord, object_id: str) -> float:
    """Per-coordinate RMSE of the fitted pose's keypoint reprojections
    against the object's non-occluded annotations on valid frames.

    sqrt(mean over 2N scalar residuals): 1px-sigma Gaussian annotation
    noise yields a value near 1.0. Requires the object pose to be fitted.
    """
    pose = scene.object_world_poses.get(object_id)
    if pose is None:
        raise NoAnnotations(f"object {object_id!r} has no fitted pose")
    annotations = [
        a for a in scene.annotations_for(object_id) if a.frame_index in scene.moving_poses
    ]
    if not annotations:
        raise NoAnnotations(f"no usable annotations for object {object_id!r}")
    model = scene.models.get(object_id)
    if model is None:
        raise KeyError(f"scene has no model for object {object_id!r}")
    residuals = []
    for a in annotations:
        view = scene.view_for(a.frame_index, a.camera)
        world = pose.apply(model.canonical_keypoints[a.keypoint_id])
        pix, z = project_points(view, world[None, :])
        if z[0] <= 1e-9:
            residuals.extend([1e6, 1e6])
        else:
            residuals.extend((pix[0] - a.pixel).tolist())
    return float(np.sqrt(np.mean(np.square(residuals))))


@dataclass(frozen=True)
class ErrorReport:
    """Monte Carlo labeling-error summary (meters)."""

    per_keypoint_rmse_m: dict           # (object id, keypoint id) -> rmse
    mean_rmse_m: float
    trials: int
    dither_sigma_px: float
    vs_ground_truth_mean_rmse_m: float | None = None
    warning: str | None = None

    def __post_init__(self):
        if self.mean_rmse_m < 0 or any(v < 0 for v in self.per_keypoint_rmse_m.values()):
            raise ValueError("rmse values must be >= 0")


def monte_carlo_label_error(
    scene: SceneRecord,
    dither_sigma_px: float,
    trials: int,
    ground_truth: GroundTruth | None = None,
    seed: int = 0,
    threads: int = 1,
) -> ErrorReport:
    """Estimate 3D keypoint labeling error by dithering 2D annotations.

    Per trial, every non-occluded annotation is dithered with isotropic
    Gaussian noise of dither_sigma_px per axis and keypoint triangulation
    reruns; the report aggregates 3D deviations from the undithered
    triangulation (and from ground truth when provided). Per-trial RNG
    streams derive from (seed, trial index), so results do not depend on
    `threads`.
    """
    from .estimators import triangulate_point
    from .pipeline import triangulate_object_keypoints

    if trials < 1:
        raise ValueError("trials must be >= 1")
    if dither_sigma_px < 0:
        raise ValueError("dither_sigma_px must be >= 0")

    object_ids = sorted({a.object_id for a in scene.annotations})
    if not object_ids:
        raise NoAnnotations("scene has no annotations")

    reference = {}
    for oid in object_ids:
        for kid, tp in triangulate_object_keypoints(scene, oid).items():
            reference[(oid, kid)] = tp.position

    # freeze per-keypoint view geometry once; trials only move the pixels
    keys = sorted(reference)
    obs_views = {key: [] for key in keys}
    obs_pixels = {key: [] for key in keys}
    for a in scene.annotations:
        key = (a.object_id, a.keypoint_id)
        if a.occluded or key not in obs_views or a.frame_index not in scene.moving_poses:
            continue
        obs_views[key].append(scene.view_for(a.frame_index, a.camera))
        obs_pixels[key].append(a.pixel)
    base_pixels = {key: np.stack(obs_pixels[key]) for key in keys}

    def run_trial(t: int) -> dict:
        rng = np.random.default_rng([seed, t])
        out = {}
        for key in keys:
            pixels = base_pixels[key] + rng.normal(
                0.0, dither_sigma_px, base_pixels[key].shape
            )
            obs = list(zip(obs_views[key], pixels))
            out[key] = triangulate_point(obs).position
        return out

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            trial_results = list(pool.map(run_trial, range(trials)))
    else:
        trial_results = [run_trial(t) for t in range(trials)]

    sq_dev = {key: [] for key in reference}
    sq_dev_gt = []
    for result in trial_results:
        for key, pos in result.items():
            sq_dev[key].append(float(np.sum((pos - reference[key]) ** 2)))
            if ground_truth is not None:
                oid, kid = key
                gt = ground_truth.keypoints_world[oid][kid]
                sq_dev_gt.append(float(np.sum((pos - gt) ** 2)))

    per_keypoint = {
        key: float(np.sqrt(np.mean(vals))) for key, vals in sq_dev.items() if vals
    }
    pooled = float(np.sqrt(np.mean([v for vals in sq_dev.values() for v in vals])))
    vs_gt = float(np.sqrt(np.mean(sq_dev_gt))) if sq_dev_gt else None
    return ErrorReport(
        per_keypoint_rmse_m=per_keypoint,
        mean_rmse_m=pooled,
        trials=trials,
        dither_sigma_px=dither_sigma_px,
        vs_ground_truth_mean_rmse_m=vs_gt,
        warning="single-trial estimate" if trials == 1 else None,
    )


def replace_annotations(scene: SceneRecord, annotations: list) -> SceneRecord:
    """Shallow scene copy sharing everything except the annotation list."""
    clone = copy.copy(scene)
    clone.annotations = annotations
    return clone
