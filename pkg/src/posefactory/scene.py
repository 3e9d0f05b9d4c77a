"""Scene-level domain types: object models, recorded sequences, annotations.

A SceneRecord accumulates pipeline outputs stage by stage (static camera
views, fiducial map, per-frame moving-camera poses, object poses); the
raw detection inputs it starts from are immutable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .geom import CameraIntrinsics, CameraView, Pose6D, StereoRig

LEFT = "left"
RIGHT = "right"
CAMERAS = (LEFT, RIGHT)


def point_set_diameter(points: np.ndarray) -> float:
    """Exact max pairwise distance; convex hull keeps it cheap for big sets."""
    pts = np.asarray(points, dtype=np.float64)
    if len(pts) > 32:
        try:
            pts = pts[ConvexHull(pts).vertices]
        except QhullError:
            pass  # degenerate (coplanar/collinear) sets: brute force below
    d2 = np.sum((pts[:, None, :] - pts[None, :, :]) ** 2, axis=-1)
    return float(np.sqrt(d2.max()))


@dataclass(frozen=True)
class Symmetry:
    """Object symmetry class: none, discrete n-fold about an axis, or continuous."""

    kind: str = "none"  # none | discrete | continuous
    axis: Optional[tuple] = None
    order: Optional[int] = None

    def __post_init__(self):
        if self.kind not in ("none", "discrete", "continuous"):
            raise ValueError(f"unknown symmetry kind {self.kind!r}")
        if self.kind != "none":
            if self.axis is None:
                raise ValueError("symmetric objects need an axis")
            a = np.asarray(self.axis, dtype=np.float64)
            n = np.linalg.norm(a)
            if n < 1e-12:
                raise ValueError("zero symmetry axis")
            object.__setattr__(self, "axis", tuple(a / n))
        if self.kind == "discrete" and (self.order is None or self.order < 2):
            raise ValueError("discrete symmetry needs order >= 2")

    @property
    def is_symmetric(self) -> bool:
        return self.kind != "none"


@dataclass(frozen=True)
class ObjectModel:
    """Canonical keypoints, the dense model point set, and symmetry metadata."""

    object_id: str
    canonical_keypoints: np.ndarray  # (K, 3), K >= 2
    model_points: np.ndarray         # (M, 3)
    diameter: float
    symmetry: Symmetry = field(default_factory=Symmetry)

    def __post_init__(self):
        kp = np.asarray(self.canonical_keypoints, dtype=np.float64).reshape(-1, 3)
        mp = np.asarray(self.model_points, dtype=np.float64).reshape(-1, 3)
        if kp.shape[0] < 2:
            raise ValueError("object model needs >= 2 keypoints")
        if mp.shape[0] < 1:
            raise ValueError("object model needs a nonempty point set")
        actual = point_set_diameter(mp)
        if abs(actual - self.diameter) > max(1e-6, 1e-6 * actual):
            raise ValueError(
                f"diameter {self.diameter} does not match point set "
                f"({actual:.9f})"
            )
        kp.setflags(write=False)
        mp.setflags(write=False)
        object.__setattr__(self, "canonical_keypoints", kp)
        object.__setattr__(self, "model_points", mp)

    @classmethod
    def create(cls, object_id, canonical_keypoints, model_points, symmetry=None):
        """Build with the diameter computed from the point set."""
        mp = np.asarray(model_points, dtype=np.float64).reshape(-1, 3)
        return cls(
            object_id=object_id,
            canonical_keypoints=canonical_keypoints,
            model_points=mp,
            diameter=point_set_diameter(mp),
            symmetry=symmetry or Symmetry(),
        )


# marker detections: marker_id -> list of 4 optional pixel arrays
MarkerDetections = dict


@dataclass
class FrameDetections:
    """Per-frame fiducial corner detections for the moving stereo pair."""

    frame_index: int
    timestamp: float
    corners: dict  # camera name -> MarkerDetections

    def camera(self, name: str) -> MarkerDetections:
        return self.corners.get(name, {})


@dataclass(frozen=True)
class FrameValidity:
    """Frame acceptance record: valid iff markers >= 2 or corners >= 8."""

    frame_index: int
    detected_markers: int
    detected_corners: int
    valid: bool
    reason: Optional[str] = None


def frame_is_valid(detected_markers: int, detected_corners: int) -> bool:
    return detected_markers >= 2 or detected_corners >= 8


@dataclass(frozen=True)
class Annotation:
    """A 2D keypoint click on one camera of one frame."""

    frame_index: int
    camera: str
    object_id: str
    keypoint_id: int
    pixel: np.ndarray
    occluded: bool = False

    def __post_init__(self):
        if self.camera not in CAMERAS:
            raise ValueError(f"camera must be one of {CAMERAS}")
        object.__setattr__(self, "pixel", np.asarray(self.pixel, dtype=np.float64))


@dataclass
class SceneRecord:
    """A recorded sequence plus everything the pipeline derives from it."""

    scene_id: str
    rig: StereoRig
    board: dict                       # corner id -> (3,) world position
    static_intrinsics: list           # 2 CameraIntrinsics
    static_board_detections: list     # per camera: corner id -> pixel
    static_marker_detections: list    # per camera: MarkerDetections
    marker_sizes: dict                # marker id -> side length (m)
    frames: list = field(default_factory=list)   # FrameDetections
    object_ids: list = field(default_factory=list)
    models: dict = field(default_factory=dict)   # object id -> ObjectModel

    # pipeline stage outputs
    static_views: Optional[list] = None            # 2 CameraView
    fiducial_map: dict = field(default_factory=dict)   # marker id -> (4,3)
    moving_poses: dict = field(default_factory=dict)   # frame -> Pose6D (left cam)
    validity: list = field(default_factory=list)       # FrameValidity
    annotations: list = field(default_factory=list)    # Annotation
    object_world_poses: dict = field(default_factory=dict)  # object id -> Pose6D

    def valid_frame_indices(self) -> list:
        return sorted(self.moving_poses)

    def left_view(self, frame_index: int) -> CameraView:
        return CameraView(self.rig.left, self.moving_poses[frame_index])

    def right_view(self, frame_index: int) -> CameraView:
        return CameraView(
            self.rig.right, self.rig.right_view(self.moving_poses[frame_index])
        )

    def view_for(self, frame_index: int, camera: str) -> CameraView:
        if camera == LEFT:
            return self.left_view(frame_index)
        if camera == RIGHT:
            return self.right_view(frame_index)
        raise ValueError(f"unknown camera {camera!r}")

    def annotations_for(self, object_id: str, include_occluded: bool = False):
        return [
            a
            for a in self.annotations
            if a.object_id == object_id and (include_occluded or not a.occluded)
        ]


@dataclass
class GroundTruth:
    """Everything the synthetic generator knows; the oracle for all tests."""

    static_views: list                     # 2 CameraView
    fiducial_map: dict                     # marker id -> (4,3) corners
    moving_poses: dict                     # frame -> Pose6D (left)
    keypoints_world: dict                  # object id -> (K,3)
    object_world_poses: dict               # object id -> Pose6D
    validity: list                         # FrameValidity
    annotated_frames: list                 # FPS-selected frame indices
