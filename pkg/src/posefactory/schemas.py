"""Versioned JSON file schemas and the on-disk project layout.

All files are JSON with an explicit schema_version. Units are meters and
pixels; rotation matrices are row-major 3x3 nested lists, and poses may
carry a (w, x, y, z) quaternion instead. A project root contains::

    scenes/<scene_id>/scene.json         fixed geometry + static detections
    scenes/<scene_id>/detections.json    per-frame moving-camera detections
    scenes/<scene_id>/annotations.json   2D keypoint clicks
    scenes/<scene_id>/poses.json         pipeline output
    scenes/<scene_id>/ground_truth.json  synthetic scenes only
    models/<object_id>.json              object models
    reports/                             evaluation and error reports
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from . import geom
from .errors import SchemaError
from .scene import (
    Annotation,
    FrameDetections,
    FrameValidity,
    ObjectModel,
    SceneRecord,
    Symmetry,
)

SCHEMA_VERSION = 1
DATA_ROOT_ENV = "POSEFACTORY_DATA_ROOT"

Vec2 = tuple[float, float]
Vec3 = tuple[float, float, float]


class PoseModel(BaseModel):
    """Rigid transform; exactly one of rotation / quaternion."""

    rotation: Optional[list[list[float]]] = None
    quaternion: Optional[list[float]] = None
    translation: Vec3

    @model_validator(mode="after")
    def _one_rotation_encoding(self):
        if (self.rotation is None) == (self.quaternion is None):
            raise ValueError("provide exactly one of rotation or quaternion")
        if self.rotation is not None:
            arr = np.asarray(self.rotation, dtype=np.float64)
            if arr.shape != (3, 3):
                raise ValueError("rotation must be 3x3")
        elif len(self.quaternion) != 4:
            raise ValueError("quaternion must be (w, x, y, z)")
        return self

    def to_pose(self) -> geom.Pose6D:
        if self.quaternion is not None:
            return geom.Pose6D.from_quaternion(self.quaternion, self.translation)
        rot = np.asarray(self.rotation, dtype=np.float64)
        if geom.orthogonality_error(rot) > geom.ORTHOGONALITY_TOL:
            rot = geom.project_to_so3(rot)
        return geom.Pose6D(rot, self.translation)

    @classmethod
    def from_pose(cls, pose: geom.Pose6D) -> "PoseModel":
        return cls(rotation=pose.rotation.tolist(),
                   translation=tuple(pose.translation))


class IntrinsicsModel(BaseModel):
    fx: float
    fy: float
    cx: float
    cy: float
    image_width: int
    image_height: int
    distortion: list[float] = Field(default_factory=list, max_length=5)

    def to_intrinsics(self) -> geom.CameraIntrinsics:
        return geom.CameraIntrinsics(
            fx=self.fx, fy=self.fy, cx=self.cx, cy=self.cy,
            image_width=self.image_width, image_height=self.image_height,
            distortion=tuple(self.distortion),
        )

    @classmethod
    def from_intrinsics(cls, intr: geom.CameraIntrinsics) -> "IntrinsicsModel":
        return cls(fx=intr.fx, fy=intr.fy, cx=intr.cx, cy=intr.cy,
                   image_width=intr.image_width, image_height=intr.image_height,
                   distortion=list(intr.distortion))


class RigModel(BaseModel):
    left: IntrinsicsModel
    right: IntrinsicsModel
    right_from_left: PoseModel

    def to_rig(self) -> geom.StereoRig:
        return geom.StereoRig(
            self.left.to_intrinsics(),
            self.right.to_intrinsics(),
            self.right_from_left.to_pose(),
        )

    @classmethod
    def from_rig(cls, rig: geom.StereoRig) -> "RigModel":
        return cls(
            left=IntrinsicsModel.from_intrinsics(rig.left),
            right=IntrinsicsModel.from_intrinsics(rig.right),
            right_from_left=PoseModel.from_pose(rig.right_from_left),
        )


CornerList = list[Optional[Vec2]]  # 4 entries, null = corner not detected


class StaticCameraModel(BaseModel):
    intrinsics: IntrinsicsModel
    board_detections: dict[str, Vec2] = Field(default_factory=dict)
    marker_detections: dict[str, CornerList] = Field(default_factory=dict)

    @field_validator("marker_detections")
    @classmethod
    def _four_corners(cls, v):
        for mid, corners in v.items():
            if len(corners) != 4:
                raise ValueError(f"marker {mid}: expected 4 corner slots")
        return v


class MarkerInfoModel(BaseModel):
    size: float = Field(gt=0)


class SceneFileModel(BaseModel):
    schema_version: int = SCHEMA_VERSION
    scene_id: str
    rig: RigModel
    board: dict[str, Vec3]
    static_cameras: list[StaticCameraModel] = Field(min_length=2, max_length=2)
    markers: dict[str, MarkerInfoModel]
    objects: list[str] = Field(default_factory=list)


class FrameModel(BaseModel):
    frame_index: int
    timestamp: float = 0.0
    cameras: dict[Literal["left", "right"], dict[str, CornerList]]
    image_left: Optional[str] = None
    image_right: Optional[str] = None


class DetectionsFileModel(BaseModel):
    schema_version: int = SCHEMA_VERSION
    scene_id: str
    frames: list[FrameModel]


class AnnotationModel(BaseModel):
    frame_index: int
    camera: Literal["left", "right"]
    object_id: str
    keypoint_id: int = Field(ge=0)
    pixel: Vec2
    occluded: bool = False


class AnnotationsFileModel(BaseModel):
    schema_version: int = SCHEMA_VERSION
    scene_id: str
    annotations: list[AnnotationModel] = Field(default_factory=list)


class SymmetryModel(BaseModel):
    kind: Literal["none", "discrete", "continuous"] = "none"
    axis: Optional[Vec3] = None
    order: Optional[int] = None

    def to_symmetry(self) -> Symmetry:
        return Symmetry(kind=self.kind, axis=self.axis, order=self.order)

    @classmethod
    def from_symmetry(cls, s: Symmetry) -> "SymmetryModel":
        return cls(kind=s.kind, axis=s.axis, order=s.order)


class ObjectModelFile(BaseModel):
    schema_version: int = SCHEMA_VERSION
    object_id: str
    keypoints: list[Vec3] = Field(min_length=2)
    model_points: list[Vec3] = Field(min_length=1)
    diameter: float = Field(gt=0)
    symmetry: SymmetryModel = Field(default_factory=SymmetryModel)

    def to_object(self) -> ObjectModel:
        return ObjectModel(
            object_id=self.object_id,
            canonical_keypoints=np.asarray(self.keypoints),
            model_points=np.asarray(self.model_points),
            diameter=self.diameter,
            symmetry=self.symmetry.to_symmetry(),
        )

    @classmethod
    def from_object(cls, obj: ObjectModel) -> "ObjectModelFile":
        return cls(
            object_id=obj.object_id,
            keypoints=[tuple(k) for k in obj.canonical_keypoints],
            model_points=[tuple(p) for p in obj.model_points],
            diameter=obj.diameter,
            symmetry=SymmetryModel.from_symmetry(obj.symmetry),
        )


class ValidityModel(BaseModel):
    frame_index: int
    detected_markers: int
    detected_corners: int
    valid: bool
    reason: Optional[str] = None


class ObjectPosesModel(BaseModel):
    world_pose: PoseModel
    reprojection_rmse_px: float
    frame_poses: dict[str, PoseModel] = Field(default_factory=dict)
    keypoints_world: dict[str, Vec3] = Field(default_factory=dict)


class PosesFileModel(BaseModel):
    schema_version: int = SCHEMA_VERSION
    scene_id: str
    objects: dict[str, ObjectPosesModel] = Field(default_factory=dict)
    validity: list[ValidityModel] = Field(default_factory=list)


class GroundTruthFileModel(BaseModel):
    schema_version: int = SCHEMA_VERSION
    scene_id: str
    static_camera_poses: list[PoseModel]
    fiducial_corners: dict[str, list[Vec3]]
    moving_poses: dict[str, PoseModel]
    keypoints_world: dict[str, list[Vec3]]
    object_world_poses: dict[str, PoseModel]
    annotated_frames: list[int]


class TrajectoryModel(BaseModel):
    kind: Literal["arc", "orbit", "handheld"] = "arc"
    frame_count: int = 60
    center: Vec3 = (0.0, 0.0, 0.0)
    radius: float = 0.6
    elevation_deg: float = 40.0
    azimuth_start_deg: float = -70.0
    azimuth_end_deg: float = 70.0
    radius_jitter: float = 0.15
    elevation_jitter_deg: float = 12.0
    position_jitter: float = 0.008


class BoardModel(BaseModel):
    rows: int = 4
    cols: int = 5
    marker_size: float = 0.06
    spacing: float = 0.02


class SceneObjectModel(BaseModel):
    model: ObjectModelFile
    pose: PoseModel


class SceneSpecFileModel(BaseModel):
    schema_version: int = SCHEMA_VERSION
    scene_id: str = "synthetic"
    rng_seed: int = 0
    board: BoardModel = Field(default_factory=BoardModel)
    n_small_markers: int = 6
    marker_size: float = 0.05
    intrinsics: Optional[IntrinsicsModel] = None
    stereo_baseline: float = 0.045
    trajectory: TrajectoryModel = Field(default_factory=TrajectoryModel)
    static_camera_poses: Optional[list[PoseModel]] = None
    pixel_noise_sigma: float = 0.0
    outlier_rate: float = 0.0
    annotated_frame_count: int = 4
    objects: list[SceneObjectModel] = Field(default_factory=list)


class EvaluationEntryModel(BaseModel):
    object_id: str
    sample_id: str
    pose: Optional[PoseModel] = None  # null = missing prediction
    confidence: Optional[float] = None


class EvaluationFileModel(BaseModel):
    schema_version: int = SCHEMA_VERSION
    entries: list[EvaluationEntryModel] = Field(default_factory=list)


class ObjectReportModel(BaseModel):
    auc_percent: float
    accuracy_percent: float
    count: int
    missing: int = 0


class ReportFileModel(BaseModel):
    schema_version: int = SCHEMA_VERSION
    per_object: dict[str, ObjectReportModel] = Field(default_factory=dict)
    mean_auc_percent: float = 0.0
    mean_accuracy_percent: float = 0.0
    missing_predictions: int = 0


class ErrorReportFileModel(BaseModel):
    schema_version: int = SCHEMA_VERSION
    scene_id: str
    per_keypoint_rmse_m: dict[str, float]  # "object_id/keypoint_id"
    mean_rmse_m: float
    trials: int
    dither_sigma_px: float
    vs_ground_truth_mean_rmse_m: Optional[float] = None
    warning: Optional[str] = None


def load_model_file(path, model_cls):
    """Parse and validate a JSON file; SchemaError names the file."""
    path = Path(path)
    if not path.exists():
        raise SchemaError(path, "file not found")
    try:
        payload = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(path, f"invalid JSON: {exc}") from exc
    try:
        model = model_cls.model_validate(payload)
    except ValidationError as exc:
        raise SchemaError(path, str(exc)) from exc
    version = getattr(model, "schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise SchemaError(path, f"unsupported schema_version {version}")
    return model


def write_model_file(path, model) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(model.model_dump_json(indent=1))


def _corners_to_arrays(corners: CornerList) -> list:
    return [None if c is None else np.asarray(c, dtype=np.float64) for c in corners]


def _corners_from_arrays(corners) -> CornerList:
    return [None if c is None else (float(c[0]), float(c[1])) for c in corners]


def scene_record_from_files(
    scene_file: SceneFileModel,
    detections_file: DetectionsFileModel,
    annotations_file: AnnotationsFileModel | None,
    models: dict,
) -> SceneRecord:
    """Assemble the in-memory SceneRecord from validated file models."""
    frames = [
        FrameDetections(
            frame_index=f.frame_index,
            timestamp=f.timestamp,
            corners={
                cam: {mid: _corners_to_arrays(cl) for mid, cl in det.items()}
                for cam, det in f.cameras.items()
            },
        )
        for f in detections_file.frames
    ]
    annotations = []
    if annotations_file is not None:
        annotations = [
            Annotation(
                frame_index=a.frame_index,
                camera=a.camera,
                object_id=a.object_id,
                keypoint_id=a.keypoint_id,
                pixel=np.asarray(a.pixel),
                occluded=a.occluded,
            )
            for a in annotations_file.annotations
        ]
    return SceneRecord(
        scene_id=scene_file.scene_id,
        rig=scene_file.rig.to_rig(),
        board={cid: np.asarray(p, dtype=np.float64) for cid, p in scene_file.board.items()},
        static_intrinsics=[c.intrinsics.to_intrinsics() for c in scene_file.static_cameras],
        static_board_detections=[
            {cid: np.asarray(p, dtype=np.float64) for cid, p in c.board_detections.items()}
            for c in scene_file.static_cameras
        ],
        static_marker_detections=[
            {mid: _corners_to_arrays(cl) for mid, cl in c.marker_detections.items()}
            for c in scene_file.static_cameras
        ],
        marker_sizes={mid: m.size for mid, m in scene_file.markers.items()},
        frames=frames,
        object_ids=list(scene_file.objects),
        models={oid: m for oid, m in models.items() if oid in scene_file.objects},
        annotations=annotations,
    )


def scene_record_to_files(scene: SceneRecord):
    """The inverse of scene_record_from_files, for the synthetic generator."""
    scene_file = SceneFileModel(
        scene_id=scene.scene_id,
        rig=RigModel.from_rig(scene.rig),
        board={cid: tuple(p) for cid, p in scene.board.items()},
        static_cameras=[
            StaticCameraModel(
                intrinsics=IntrinsicsModel.from_intrinsics(intr),
                board_detections={cid: tuple(p) for cid, p in det.items()},
                marker_detections={
                    mid: _corners_from_arrays(cl) for mid, cl in mdet.items()
                },
            )
            for intr, det, mdet in zip(
                scene.static_intrinsics,
                scene.static_board_detections,
                scene.static_marker_detections,
            )
        ],
        markers={mid: MarkerInfoModel(size=s) for mid, s in scene.marker_sizes.items()},
        objects=list(scene.object_ids),
    )
    detections_file = DetectionsFileModel(
        scene_id=scene.scene_id,
        frames=[
            FrameModel(
                frame_index=f.frame_index,
                timestamp=f.timestamp,
                cameras={
                    cam: {mid: _corners_from_arrays(cl) for mid, cl in det.items()}
                    for cam, det in f.corners.items()
                },
            )
            for f in scene.frames
        ],
    )
    annotations_file = AnnotationsFileModel(
        scene_id=scene.scene_id,
        annotations=[
            AnnotationModel(
                frame_index=a.frame_index,
                camera=a.camera,
                object_id=a.object_id,
                keypoint_id=a.keypoint_id,
                pixel=tuple(a.pixel),
                occluded=a.occluded,
            )
            for a in scene.annotations
        ],
    )
    return scene_file, detections_file, annotations_file


def poses_file_from_result(result) -> PosesFileModel:
    objects = {}
    for oid, world in result.world_poses.items():
        objects[oid] = ObjectPosesModel(
            world_pose=PoseModel.from_pose(world),
            reprojection_rmse_px=result.reprojection_rmse_px.get(oid, float("nan")),
            frame_poses={
                str(j): PoseModel.from_pose(p)
                for j, p in result.frame_poses.get(oid, {}).items()
            },
            keypoints_world={
                str(k): tuple(tp.position)
                for k, tp in result.keypoints_world.get(oid, {}).items()
            },
        )
    validity = [
        ValidityModel(
            frame_index=v.frame_index,
            detected_markers=v.detected_markers,
            detected_corners=v.detected_corners,
            valid=v.valid,
            reason=v.reason,
        )
        for v in result.validity
    ]
    return PosesFileModel(
        scene_id=result.scene.scene_id, objects=objects, validity=validity
    )


def ground_truth_to_file(scene_id: str, truth) -> GroundTruthFileModel:
    return GroundTruthFileModel(
        scene_id=scene_id,
        static_camera_poses=[
            PoseModel.from_pose(v.pose_world_to_camera) for v in truth.static_views
        ],
        fiducial_corners={
            mid: [tuple(c) for c in corners]
            for mid, corners in truth.fiducial_map.items()
        },
        moving_poses={str(j): PoseModel.from_pose(p) for j, p in truth.moving_poses.items()},
        keypoints_world={
            oid: [tuple(k) for k in kps] for oid, kps in truth.keypoints_world.items()
        },
        object_world_poses={
            oid: PoseModel.from_pose(p) for oid, p in truth.object_world_poses.items()
        },
        annotated_frames=list(truth.annotated_frames),
    )


def spec_from_file(model: SceneSpecFileModel):
    """SceneSpecFileModel -> SyntheticSceneSpec (with inline object models).

    Value-level violations (bad diameter, invalid pose numbers) surface
    as InvalidSpec rather than bare ValueErrors.
    """
    from .errors import InvalidSpec
    from .simulation import BoardLayout, SyntheticSceneSpec, TrajectorySpec

    try:
        return _spec_from_file(model, BoardLayout, SyntheticSceneSpec, TrajectorySpec)
    except ValueError as exc:
        raise InvalidSpec(str(exc)) from exc


def _spec_from_file(model, BoardLayout, SyntheticSceneSpec, TrajectorySpec):
    intr = (
        model.intrinsics.to_intrinsics()
        if model.intrinsics is not None
        else None
    )
    kwargs = dict(
        rng_seed=model.rng_seed,
        scene_id=model.scene_id,
        board=BoardLayout(
            rows=model.board.rows,
            cols=model.board.cols,
            marker_size=model.board.marker_size,
            spacing=model.board.spacing,
        ),
        n_small_markers=model.n_small_markers,
        marker_size=model.marker_size,
        stereo_baseline=model.stereo_baseline,
        trajectory=TrajectorySpec(**model.trajectory.model_dump()),
        static_camera_poses=(
            tuple(p.to_pose() for p in model.static_camera_poses)
            if model.static_camera_poses
            else None
        ),
        pixel_noise_sigma=model.pixel_noise_sigma,
        outlier_rate=model.outlier_rate,
        annotated_frame_count=model.annotated_frame_count,
        objects=tuple(
            (entry.model.to_object(), entry.pose.to_pose()) for entry in model.objects
        ),
    )
    if intr is not None:
        kwargs["intrinsics"] = intr
    return SyntheticSceneSpec(**kwargs)


class ProjectLayout:
    """Filesystem layout of a posefactory project root."""

    def __init__(self, root):
        self.root = Path(root)

    @classmethod
    def from_env(cls, fallback=".") -> "ProjectLayout":
        return cls(os.environ.get(DATA_ROOT_ENV, fallback))

    @property
    def scenes_dir(self) -> Path:
        return self.root / "scenes"

    @property
    def models_dir(self) -> Path:
        return self.root / "models"

    @property
    def reports_dir(self) -> Path:
        return self.root / "reports"

    def scene_dir(self, scene_id: str) -> Path:
        return self.scenes_dir / scene_id

    def scene_ids(self) -> list:
        if not self.scenes_dir.is_dir():
            return []
        return sorted(
            p.name for p in self.scenes_dir.iterdir() if (p / "scene.json").is_file()
        )

    def load_models(self) -> dict:
        models = {}
        if self.models_dir.is_dir():
            for path in sorted(self.models_dir.glob("*.json")):
                model = load_model_file(path, ObjectModelFile)
                try:
                    models[model.object_id] = model.to_object()
                except ValueError as exc:
                    raise SchemaError(path, str(exc)) from exc
        return models

    def write_model(self, obj: ObjectModel) -> Path:
        path = self.models_dir / f"{obj.object_id}.json"
        write_model_file(path, ObjectModelFile.from_object(obj))
        return path

    def load_scene_record(self, scene_id: str, require_annotations: bool = False) -> SceneRecord:
        d = self.scene_dir(scene_id)
        scene_file = load_model_file(d / "scene.json", SceneFileModel)
        detections = load_model_file(d / "detections.json", DetectionsFileModel)
        annotations = None
        ann_path = d / "annotations.json"
        if ann_path.exists():
            annotations = load_model_file(ann_path, AnnotationsFileModel)
        elif require_annotations:
            raise SchemaError(ann_path, "file not found")
        try:
            return scene_record_from_files(
                scene_file, detections, annotations, self.load_models()
            )
        except ValueError as exc:
            raise SchemaError(d / "scene.json", str(exc)) from exc

    def write_scene(self, scene: SceneRecord) -> Path:
        d = self.scene_dir(scene.scene_id)
        scene_file, detections_file, annotations_file = scene_record_to_files(scene)
        write_model_file(d / "scene.json", scene_file)
        write_model_file(d / "detections.json", detections_file)
        write_model_file(d / "annotations.json", annotations_file)
        for model in scene.models.values():
            self.write_model(model)
        return d
