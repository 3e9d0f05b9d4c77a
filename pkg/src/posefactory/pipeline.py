"""The seven-step multi-view annotation pipeline over a SceneRecord.

Stages: static-camera localization (PnP on the measured board), fiducial
marker triangulation, per-frame moving-camera localization with frame
validity filtering, farthest-point frame selection for annotation,
keypoint triangulation across annotated frames, Procrustes pose fitting,
and propagation of the world pose to every valid frame.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateConfiguration,
    InsufficientFrames,
    KeypointUnderconstrained,
    NoAnnotations,
    PoseFactoryError,
)
from .estimators import (
    Correspondence2D3D,
    RansacConfig,
    fit_procrustes,
    solve_pnp,
    triangulate_marker,
    triangulate_point,
)
from .geom import CameraView, Pose6D, compose
from .scene import (
    LEFT,
    FrameValidity,
    ObjectModel,
    SceneRecord,
    frame_is_valid,
)

DEFAULT_ANNOTATION_FRAMES = 4


def marker_corner_offsets(size: float) -> np.ndarray:
    """Square marker corners in the marker frame, ordered counterclockwise."""
    s = size / 2.0
    return np.array([[-s, -s, 0.0], [s, -s, 0.0], [s, s, 0.0], [-s, s, 0.0]])


def localize_static_cameras(
    board: dict,
    detections: list,
    intrinsics: list,
    config: RansacConfig | None = None,
) -> list:
    """Step 1: PnP for the two static cameras against the measured board.

    `board` maps corner ids to world positions (the board frame IS the
    world frame); `detections[i]` maps corner ids to pixels for camera i.
    """
    if len(detections) != 2 or len(intrinsics) != 2:
        raise ValueError("exactly two static cameras expected")
    cfg = config or RansacConfig()
    views = []
    for i, (det, intr) in enumerate(zip(detections, intrinsics)):
        common = sorted(set(board) & set(det or {}))
        if len(common) < 4:
            raise DegenerateConfiguration(
                f"static camera {i + 1}: {len(common)} board corners detected, need >= 4"
            )
        corr = [Correspondence2D3D(board[c], det[c], source_id=str(c)) for c in common]
        try:
            pose, _ = solve_pnp(corr, intr, cfg)
        except PoseFactoryError as exc:
            raise type(exc)(f"static camera {i + 1}: {exc}") from exc
        views.append(CameraView(intr, pose))
    return views


def build_fiducial_map(
    static_views: list,
    marker_detections: list,
    marker_sizes: dict,
) -> dict:
    """Step 2: triangulate each small marker's corners from the static pair.

    Returns marker id -> (4, 3) world corner positions. Markers missing
    from either camera are skipped; an empty result is an error.
    """
    if len(static_views) != 2 or len(marker_detections) != 2:
        raise ValueError("exactly two static cameras expected")
    seen = set(marker_detections[0]) | set(marker_detections[1])
    if not seen:
        raise DegenerateConfiguration("no small-marker detections in static cameras")
    fiducial_map = {}
    for marker_id in sorted(seen):
        per_corner = []
        for corner in range(4):
            obs = []
            for view, det in zip(static_views, marker_detections):
                corners = det.get(marker_id)
                if corners is not None and corners[corner] is not None:
                    obs.append((view, np.asarray(corners[corner], dtype=np.float64)))
            per_corner.append(obs)
        size = marker_sizes.get(marker_id)
        if size is None:
            raise ValueError(f"marker {marker_id}: no measured size")
        points = triangulate_marker(per_corner, marker_corner_offsets(size))
        fiducial_map[marker_id] = np.stack([p.position for p in points])
    return fiducial_map


def _frame_counts(detections: dict) -> tuple[int, int]:
    markers = 0
    corners = 0
    for corner_list in detections.values():
        seen = sum(1 for c in corner_list if c is not None)
        corners += seen
        if seen == 4:
            markers += 1
    return markers, corners


def _localize_one_frame(frame, fiducial_map, intrinsics, config):
    det = frame.camera(LEFT)
    known = {m: c for m, c in det.items() if m in fiducial_map}
    markers, corners = _frame_counts(known)
    if not frame_is_valid(markers, corners):
        return None, FrameValidity(frame.frame_index, markers, corners, False,
                                   reason="below detection threshold")
    corr = []
    for marker_id, corner_list in sorted(known.items()):
        world = fiducial_map[marker_id]
        for k, pix in enumerate(corner_list):
            if pix is not None:
                corr.append(
                    Correspondence2D3D(world[k], pix, source_id=f"{marker_id}/{k}")
                )
    try:
        pose, _ = solve_pnp(corr, intrinsics, config)
    except PoseFactoryError as exc:
        return None, FrameValidity(frame.frame_index, markers, corners, False,
                                   reason=f"PnP failed: {exc}")
    return pose, FrameValidity(frame.frame_index, markers, corners, True)


def localize_moving_frames(
    scene: SceneRecord,
    config: RansacConfig | None = None,
    threads: int = 1,
) -> tuple[dict, list]:
    """Step 4: PnP per frame on left-camera corner detections against the
    fiducial map. Frames below the detection threshold (two full markers
    or eight corners) or failing PnP are marked invalid with a reason.
    """
    if not scene.fiducial_map:
        raise DegenerateConfiguration("fiducial map is empty; run steps 1-2 first")
    cfg = config or RansacConfig()

    def work(frame):
        return _localize_one_frame(frame, scene.fiducial_map, scene.rig.left, cfg)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, scene.frames))
    else:
        results = [work(f) for f in scene.frames]

    moving_poses = {}
    validity = []
    for frame, (pose, record) in zip(scene.frames, results):
        validity.append(record)
        if pose is not None:
            moving_poses[frame.frame_index] = pose
    return moving_poses, validity


def select_annotation_frames(moving_poses: dict, count: int) -> list:
    """Step 5: farthest point sampling over camera translations.

    Deterministic: seeded at the lowest valid frame index; distance ties
    break toward the lower index.
    """
    indices = sorted(moving_poses)
    if count > len(indices):
        raise InsufficientFrames(
            f"requested {count} annotation frames, only {len(indices)} valid"
        )
    if count <= 0:
        return []
    translations = np.stack([moving_poses[i].translation for i in indices])
    selected = [0]
    dist = np.linalg.norm(translations - translations[0], axis=1)
    while len(selected) < count:
        nxt = int(np.argmax(dist))  # argmax takes the first max: lower index wins
        selected.append(nxt)
        dist = np.minimum(dist, np.linalg.norm(translations - translations[nxt], axis=1))
    return [indices[i] for i in selected]


def triangulate_object_keypoints(scene: SceneRecord, object_id: str) -> dict:
    """Step 6: multi-view triangulation of each annotated keypoint.

    Uses every non-occluded annotation on valid frames, both cameras.
    Returns keypoint id -> TriangulatedPoint (world frame). Keypoints
    with a single usable annotation raise KeypointUnderconstrained;
    keypoints never annotated are simply absent.
    """
    annotations = scene.annotations_for(object_id)
    if not annotations:
        raise NoAnnotations(f"no annotations for object {object_id!r}")
    by_keypoint: dict = {}
    for a in annotations:
        if a.frame_index not in scene.moving_poses:
            continue
        by_keypoint.setdefault(a.keypoint_id, []).append(
            (scene.view_for(a.frame_index, a.camera), a.pixel)
        )
    underconstrained = [k for k, obs in by_keypoint.items() if len(obs) < 2]
    if underconstrained:
        raise KeypointUnderconstrained(underconstrained)
    return {
        k: triangulate_point(obs) for k, obs in sorted(by_keypoint.items())
    }


def fit_and_propagate(
    scene: SceneRecord,
    object_id: str,
    keypoints_world: dict,
    model: ObjectModel,
    config: RansacConfig | None = None,
) -> dict:
    """Step 7: fit the canonical model to the triangulated keypoints and
    express the object pose in every valid frame's left camera.

    Records the world pose on the scene and returns frame -> Pose6D.
    """
    kids = sorted(keypoints_world)
    if len(kids) < 3:
        raise DegenerateConfiguration(
            f"object {object_id!r}: {len(kids)} triangulated keypoints; a "
            "2-keypoint fit is rotationally underdetermined, supply a "
            "symmetry-axis convention"
        )
    canonical = model.canonical_keypoints[kids]
    observed = np.stack([
        keypoints_world[k].position if hasattr(keypoints_world[k], "position")
        else np.asarray(keypoints_world[k], dtype=np.float64)
        for k in kids
    ])
    world_pose = fit_procrustes(canonical, observed, config)
    scene.object_world_poses[object_id] = world_pose
    return {
        j: compose(scene.moving_poses[j], world_pose)
        for j in scene.valid_frame_indices()
    }


@dataclass
class PipelineResult:
    scene: SceneRecord
    validity: list
    frame_poses: dict = field(default_factory=dict)       # object -> {frame -> Pose6D}
    world_poses: dict = field(default_factory=dict)       # object -> Pose6D
    keypoints_world: dict = field(default_factory=dict)   # object -> {kid -> TriangulatedPoint}
    reprojection_rmse_px: dict = field(default_factory=dict)

    @property
    def valid_frame_count(self) -> int:
        return sum(1 for v in self.validity if v.valid)


def run_pipeline(
    scene: SceneRecord,
    models: dict,
    config: RansacConfig | None = None,
    threads: int = 1,
) -> PipelineResult:
    """Run steps 1, 2, 4, 6, 7 end to end on a populated SceneRecord.

    `models` maps object id -> ObjectModel for every annotated object.
    The record is filled stage by stage; annotation (steps 3 and 5) is
    human work and must already be present on the record.
    """
    cfg = config or RansacConfig()
    scene.models.update(models)
    scene.static_views = localize_static_cameras(
        scene.board, scene.static_board_detections, scene.static_intrinsics, cfg
    )
    scene.fiducial_map = build_fiducial_map(
        scene.static_views, scene.static_marker_detections, scene.marker_sizes
    )
    scene.moving_poses, scene.validity = localize_moving_frames(scene, cfg, threads)

    result = PipelineResult(scene=scene, validity=scene.validity)
    annotated = sorted({a.object_id for a in scene.annotations})
    for object_id in annotated:
        model = models.get(object_id)
        if model is None:
            raise KeyError(f"no model for annotated object {object_id!r}")
        kps = triangulate_object_keypoints(scene, object_id)
        frame_poses = fit_and_propagate(scene, object_id, kps, model, cfg)
        result.keypoints_world[object_id] = kps
        result.world_poses[object_id] = scene.object_world_poses[object_id]
        result.frame_poses[object_id] = frame_poses
        from .simulation import reprojection_rmse

        result.reprojection_rmse_px[object_id] = reprojection_rmse(scene, object_id)
    return result
