"""Exception taxonomy shared by all posefactory modules."""


class PoseFactoryError(Exception):
    """Base class for all domain errors raised by this package."""


class BehindCamera(PoseFactoryError):
    """A point required to be in front of a camera has camera-frame z <= 0."""


class DegenerateConfiguration(PoseFactoryError):
    """Input geometry cannot constrain the requested estimate."""


class NoConsensus(PoseFactoryError):
    """RANSAC failed to find a large enough inlier set."""


class DegenerateRays(PoseFactoryError):
    """Triangulation rays are parallel, near-parallel, or share a center."""


class InsufficientViews(PoseFactoryError):
    """Fewer than two usable views for a triangulated point."""


class GeometryMismatch(PoseFactoryError):
    """Triangulated marker geometry deviates too far from measured dimensions."""


class InsufficientKeypoints(PoseFactoryError):
    """Fewer than three keypoints survive for pose fitting."""


class InsufficientObservations(PoseFactoryError):
    """Too few (keypoint, view) observations to optimize a 6D pose."""


class DivergedOptimization(PoseFactoryError):
    """Optimizer produced a non-finite cost."""


class KeypointUnderconstrained(PoseFactoryError):
    """Keypoints annotated in fewer than two views.

    Carries the offending ids in `keypoint_ids`.
    """

    def __init__(self, keypoint_ids, message=None):
        self.keypoint_ids = sorted(keypoint_ids)
        if message is None:
            message = f"keypoints annotated in fewer than 2 views: {self.keypoint_ids}"
        super().__init__(message)


class EmptyModel(PoseFactoryError):
    """Object model has no points."""


class CameraAtOrigin(PoseFactoryError):
    """Camera center coincides with the object origin on the viewpoint sphere."""


class NoAnnotations(PoseFactoryError):
    """No keypoint annotations available for the requested object."""


class InsufficientFrames(PoseFactoryError):
    """Fewer valid frames than the requested selection count."""


class InvalidSpec(PoseFactoryError):
    """Synthetic scene specification violates its invariants."""


class SchemaError(PoseFactoryError):
    """A persisted file does not validate against its schema."""

    def __init__(self, path, detail):
        self.path = str(path)
        self.detail = detail
        super().__init__(f"{path}: {detail}")
