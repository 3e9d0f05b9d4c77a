"""Rigid-body transforms, pinhole camera models, and projection.

Conventions used throughout the package:
  - poses map points INTO their target frame: x_out = R @ x_in + t
  - camera poses are world-to-camera
  - cameras look down their +z axis; pixels are (u, v) with u along +x
  - rotations are stored as 3x3 matrices; quaternions (w, x, y, z) are
    accepted at I/O boundaries only
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BehindCamera

ORTHOGONALITY_TOL = 1e-9
MIN_DEPTH = 1e-9


def _float_array(value, shape, name):
    a = np.asarray(value, dtype=np.float64)
    if a.shape != shape:
        raise ValueError(f"{name}: expected shape {shape}, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name}: non-finite entries")
    return a


def orthogonality_error(rotation: np.ndarray) -> float:
    """Max elementwise deviation of R^T R from the identity."""
    return float(np.abs(rotation.T @ rotation - np.eye(3)).max())


def project_to_so3(matrix: np.ndarray) -> np.ndarray:
    """Nearest proper rotation in Frobenius norm, via SVD."""
    u, _, vt = np.linalg.svd(matrix)
    r = u @ vt
    if np.linalg.det(r) < 0:
        r = u @ np.diag([1.0, 1.0, -1.0]) @ vt
    return r


def skew(v: np.ndarray) -> np.ndarray:
    return np.array(
        [[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]]
    )


def rotation_from_axis_angle(w) -> np.ndarray:
    """Rodrigues formula; w is axis * angle (radians)."""
    w = np.asarray(w, dtype=np.float64)
    theta = float(np.linalg.norm(w))
    k = skew(w)
    if theta < 1e-12:
        # second-order Taylor keeps orthogonality error at machine precision
        return np.eye(3) + k + 0.5 * (k @ k)
    return (
        np.eye(3)
        + (np.sin(theta) / theta) * k
        + ((1.0 - np.cos(theta)) / theta**2) * (k @ k)
    )


def rotation_angle(rotation: np.ndarray) -> float:
    """Rotation magnitude in radians, in [0, pi].

    atan2 form stays accurate near the identity, where arccos loses
    half the significant digits.
    """
    r = rotation
    s = 0.5 * np.linalg.norm(
        [r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]]
    )
    c = (np.trace(r) - 1.0) / 2.0
    return float(np.arctan2(s, c))


def quaternion_to_matrix(q) -> np.ndarray:
    """Unit quaternion (w, x, y, z) to rotation matrix; normalizes its input."""
    q = np.asarray(q, dtype=np.float64)
    n = np.linalg.norm(q)
    if n < 1e-12:
        raise ValueError("zero-norm quaternion")
    w, x, y, z = q / n
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def matrix_to_quaternion(rotation: np.ndarray) -> np.ndarray:
    """Rotation matrix to unit quaternion (w, x, y, z) with w >= 0."""
    r = rotation
    t = np.trace(r)
    if t > 0:
        s = np.sqrt(t + 1.0) * 2.0
        q = np.array(
            [0.25 * s, (r[2, 1] - r[1, 2]) / s, (r[0, 2] - r[2, 0]) / s, (r[1, 0] - r[0, 1]) / s]
        )
    else:
        i = int(np.argmax(np.diag(r)))
        if i == 0:
            s = np.sqrt(1.0 + r[0, 0] - r[1, 1] - r[2, 2]) * 2.0
            q = np.array(
                [(r[2, 1] - r[1, 2]) / s, 0.25 * s, (r[0, 1] + r[1, 0]) / s, (r[0, 2] + r[2, 0]) / s]
            )
        elif i == 1:
            s = np.sqrt(1.0 - r[0, 0] + r[1, 1] - r[2, 2]) * 2.0
            q = np.array(
                [(r[0, 2] - r[2, 0]) / s, (r[0, 1] + r[1, 0]) / s, 0.25 * s, (r[1, 2] + r[2, 1]) / s]
            )
        else:
            s = np.sqrt(1.0 - r[0, 0] - r[1, 1] + r[2, 2]) * 2.0
            q = np.array(
                [(r[1, 0] - r[0, 1]) / s, (r[0, 2] + r[2, 0]) / s, (r[1, 2] + r[2, 1]) / s, 0.25 * s]
            )
    if q[0] < 0:
        q = -q
    return q / np.linalg.norm(q)


@dataclass(frozen=True, eq=False)
class Pose6D:
    """Rigid transform [R | T]: x -> rotation @ x + translation.

    rotation is 3x3 orthonormal with det +1 (checked to 1e-9); translation
    is in meters. Instances are immutable; the arrays are read-only.
    """

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = _float_array(self.rotation, (3, 3), "rotation").copy()
        t = _float_array(self.translation, (3,), "translation").copy()
        if orthogonality_error(r) > ORTHOGONALITY_TOL:
            raise ValueError("rotation not orthonormal within 1e-9")
        if abs(np.linalg.det(r) - 1.0) > 1e-9:
            raise ValueError("rotation determinant is not +1 within 1e-9")
        r.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Pose6D":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_quaternion(cls, quaternion, translation) -> "Pose6D":
        return cls(quaternion_to_matrix(quaternion), translation)

    @classmethod
    def from_axis_angle(cls, axis_angle, translation) -> "Pose6D":
        return cls(rotation_from_axis_angle(axis_angle), translation)

    def quaternion(self) -> np.ndarray:
        return matrix_to_quaternion(self.rotation)

    def matrix(self) -> np.ndarray:
        """Homogeneous 4x4 matrix."""
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform a (3,) point or (N, 3) point array."""
        p = np.asarray(points, dtype=np.float64)
        if p.ndim == 1:
            return self.rotation @ p + self.translation
        return p @ self.rotation.T + self.translation


def compose(a: Pose6D, b: Pose6D) -> Pose6D:
    """Pose mapping x -> a(b(x))."""
    r = a.rotation @ b.rotation
    if orthogonality_error(r) > ORTHOGONALITY_TOL:
        r = project_to_so3(r)
    return Pose6D(r, a.rotation @ b.translation + a.translation)


def inverse(p: Pose6D) -> Pose6D:
    rt = p.rotation.T
    return Pose6D(rt.copy(), -rt @ p.translation)


def axis_angle_update(p: Pose6D, delta) -> Pose6D:
    """Left-multiplicative SE(3) update used by the LM optimizer.

    delta[:3] is an axis-angle increment applied as exp(delta) @ R;
    delta[3:] adds to the translation.
    """
    d = np.asarray(delta, dtype=np.float64)
    if d.shape != (6,):
        raise ValueError(f"delta must be a 6-vector, got {d.shape}")
    r = rotation_from_axis_angle(d[:3]) @ p.rotation
    if orthogonality_error(r) > ORTHOGONALITY_TOL:
        r = project_to_so3(r)
    return Pose6D(r, p.translation + d[3:])


def pose_difference(a: Pose6D, b: Pose6D) -> tuple[float, float]:
    """(rotation angle in radians, translation distance in meters) between poses."""
    ang = rotation_angle(a.rotation @ b.rotation.T)
    return ang, float(np.linalg.norm(a.translation - b.translation))


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics with Brown-Conrady distortion.

    distortion holds 0 to 5 coefficients ordered (k1, k2, p1, p2, k3);
    missing entries are treated as zero.
    """

    fx: float
    fy: float
    cx: float
    cy: float
    image_width: int
    image_height: int
    distortion: tuple = ()

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (self.image_width > 0 and self.image_height > 0):
            raise ValueError("image dimensions must be positive")
        if not (0 <= self.cx < self.image_width and 0 <= self.cy < self.image_height):
            raise ValueError("principal point must lie inside the image")
        d = tuple(float(c) for c in self.distortion)
        if len(d) > 5:
            raise ValueError("at most 5 distortion coefficients supported")
        object.__setattr__(self, "distortion", d)

    @property
    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    def full_distortion(self) -> np.ndarray:
        d = np.zeros(5)
        d[: len(self.distortion)] = self.distortion
        return d

    def contains(self, pixels: np.ndarray) -> np.ndarray:
        """Boolean mask of pixels inside the image bounds."""
        p = np.atleast_2d(pixels)
        return (
            (p[:, 0] >= 0)
            & (p[:, 0] <= self.image_width - 1)
            & (p[:, 1] >= 0)
            & (p[:, 1] <= self.image_height - 1)
        )


def distort_normalized(intrinsics: CameraIntrinsics, xy: np.ndarray) -> np.ndarray:
    """Apply Brown-Conrady distortion to normalized coordinates (N, 2)."""
    k1, k2, p1, p2, k3 = intrinsics.full_distortion()
    x, y = xy[:, 0], xy[:, 1]
    r2 = x * x + y * y
    radial = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3))
    xd = x * radial + 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x)
    yd = y * radial + p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y
    return np.stack([xd, yd], axis=1)


def distortion_jacobian(intrinsics: CameraIntrinsics, xy: np.ndarray) -> np.ndarray:
    """d(distorted)/d(normalized) as an (N, 2, 2) array."""
    k1, k2, p1, p2, k3 = intrinsics.full_distortion()
    x, y = xy[:, 0], xy[:, 1]
    r2 = x * x + y * y
    radial = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3))
    dradial = k1 + 2.0 * k2 * r2 + 3.0 * k3 * r2 * r2
    j = np.empty((xy.shape[0], 2, 2))
    j[:, 0, 0] = radial + 2.0 * x * x * dradial + 2.0 * p1 * y + 6.0 * p2 * x
    j[:, 0, 1] = 2.0 * x * y * dradial + 2.0 * p1 * x + 2.0 * p2 * y
    j[:, 1, 0] = 2.0 * x * y * dradial + 2.0 * p1 * x + 2.0 * p2 * y
    j[:, 1, 1] = radial + 2.0 * y * y * dradial + 6.0 * p1 * y + 2.0 * p2 * x
    return j


def undistort_pixel(intrinsics: CameraIntrinsics, pixel) -> np.ndarray:
    """Pixel to normalized camera coordinates, inverting the distortion.

    Fixed-point iteration; exact when distortion is zero.
    """
    p = np.asarray(pixel, dtype=np.float64)
    xd = np.array([(p[0] - intrinsics.cx) / intrinsics.fx, (p[1] - intrinsics.cy) / intrinsics.fy])
    if not any(intrinsics.distortion):
        return xd
    x = xd.copy()
    for _ in range(30):
        d = distort_normalized(intrinsics, x[None, :])[0]
        x = x + (xd - d)
    return x


@dataclass(frozen=True)
class CameraView:
    """A calibrated camera placed in the world: intrinsics + world-to-camera pose."""

    intrinsics: CameraIntrinsics
    pose_world_to_camera: Pose6D

    @property
    def camera_center(self) -> np.ndarray:
        p = self.pose_world_to_camera
        return -(p.rotation.T @ p.translation)


@dataclass(frozen=True)
class StereoRig:
    """Fixed stereo pair; right_from_left maps left-camera points to the right frame."""

    left: CameraIntrinsics
    right: CameraIntrinsics
    right_from_left: Pose6D

    def __post_init__(self):
        if np.linalg.norm(self.right_from_left.translation) <= 0:
            raise ValueError("stereo baseline must be positive")

    @property
    def baseline(self) -> float:
        return float(np.linalg.norm(self.right_from_left.translation))

    def right_view(self, left_pose: Pose6D) -> Pose6D:
        """World-to-right-camera pose from the left camera's world pose."""
        return compose(self.right_from_left, left_pose)


def project_camera_points(intrinsics: CameraIntrinsics, points_camera: np.ndarray):
    """Project camera-frame points. Returns (pixels (N, 2), depths (N,)).

    Points with depth <= MIN_DEPTH get NaN pixels; callers filter by depth.
    """
    pc = np.atleast_2d(np.asarray(points_camera, dtype=np.float64))
    z = pc[:, 2]
    ok = z > MIN_DEPTH
    xy = np.full((pc.shape[0], 2), np.nan)
    xy[ok] = pc[ok, :2] / z[ok, None]
    pix = np.full((pc.shape[0], 2), np.nan)
    if np.any(ok):
        d = distort_normalized(intrinsics, xy[ok])
        pix[ok, 0] = intrinsics.fx * d[:, 0] + intrinsics.cx
        pix[ok, 1] = intrinsics.fy * d[:, 1] + intrinsics.cy
    return pix, z


def project_points(view: CameraView, points_world: np.ndarray):
    """Project world points through a view. Returns (pixels, depths)."""
    pc = view.pose_world_to_camera.apply(np.atleast_2d(points_world))
    return project_camera_points(view.intrinsics, pc)


def project(view: CameraView, point_world) -> np.ndarray:
    """Project a single world point to pixel coordinates.

    Raises BehindCamera if the camera-frame depth is <= 1e-9.
    """
    pix, z = project_points(view, np.asarray(point_world, dtype=np.float64)[None, :])
    if z[0] <= MIN_DEPTH:
        raise BehindCamera(f"point at camera depth {z[0]:.3e}")
    return pix[0]


def visible_mask(view: CameraView, points_world: np.ndarray) -> np.ndarray:
    """In front of the camera and inside the image bounds."""
    pix, z = project_points(view, points_world)
    inside = np.zeros(len(z), dtype=bool)
    ok = z > MIN_DEPTH
    if np.any(ok):
        inside[ok] = view.intrinsics.contains(pix[ok])
    return inside


def look_at_pose(camera_position, target, up=(0.0, 0.0, 1.0)) -> Pose6D:
    """World-to-camera pose for a camera at `camera_position` looking at `target`.

    The camera +z axis points at the target; `up` resolves the roll.
    """
    c = np.asarray(camera_position, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    zc = t - c
    n = np.linalg.norm(zc)
    if n < 1e-12:
        raise ValueError("camera position coincides with target")
    zc = zc / n
    upv = np.asarray(up, dtype=np.float64)
    xc = np.cross(zc, upv)
    if np.linalg.norm(xc) < 1e-9:
        xc = np.cross(zc, np.array([0.0, 1.0, 0.0]))
    xc = xc / np.linalg.norm(xc)
    yc = np.cross(zc, xc)
    r = np.stack([xc, yc, zc], axis=0)
    r = project_to_so3(r)
    return Pose6D(r, -(r @ c))
