"""posefactory: multi-view 6D object pose annotation, optimization, and evaluation."""

from .geom import (
    CameraIntrinsics,
    CameraView,
    Pose6D,
    StereoRig,
    axis_angle_update,
    compose,
    inverse,
    project,
)

__all__ = [
    "CameraIntrinsics",
    "CameraView",
    "Pose6D",
    "StereoRig",
    "axis_angle_update",
    "compose",
    "inverse",
    "project",
]

__version__ = "0.1.0"
