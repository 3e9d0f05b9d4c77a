"""Pose evaluation metrics: ADD, ADD-S, accuracy, AUC, detection AP,
and viewpoint coverage.

ADD is the mean distance between the model point set under the predicted
and ground-truth poses; ADD-S replaces the matched distance by each
point's nearest neighbor in the other set (for symmetric objects).
Symmetric objects are dispatched on ObjectModel.symmetry.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import CameraAtOrigin, EmptyModel
from .geom import Pose6D
from .scene import ObjectModel

MAX_EXACT_POINTS = 10_000


@dataclass(frozen=True)
class PosePairing:
    """Predicted vs ground-truth pose of one object instance.

    predicted may be None for a missing detection; distances are then
    infinite and the pairing counts as incorrect at every threshold.
    """

    predicted: Pose6D | None
    ground_truth: Pose6D
    object: ObjectModel


@dataclass(frozen=True)
class DetectionSet:
    """Scored pose detections against a set of ground-truth instances."""

    predictions: list          # (Pose6D, confidence score)
    ground_truths: list        # Pose6D
    object: ObjectModel

    def __post_init__(self):
        for _pose, score in self.predictions:
            if not np.isfinite(score):
                raise ValueError("confidence scores must be finite")


def farthest_point_subsample(points: np.ndarray, count: int, seed_index: int = 0) -> np.ndarray:
    """Deterministic FPS subsample used to bound ADD(-S) cost on huge models."""
    if len(points) <= count:
        return points
    selected = [seed_index]
    dist = np.linalg.norm(points - points[seed_index], axis=1)
    for _ in range(count - 1):
        nxt = int(np.argmax(dist))
        selected.append(nxt)
        dist = np.minimum(dist, np.linalg.norm(points - points[nxt], axis=1))
    return points[selected]


def _evaluation_points(model: ObjectModel) -> np.ndarray:
    pts = model.model_points
    if len(pts) == 0:
        raise EmptyModel(f"object {model.object_id!r} has no model points")
    if len(pts) > MAX_EXACT_POINTS:
        return farthest_point_subsample(pts, MAX_EXACT_POINTS)
    return pts


def add_distance(pairing: PosePairing) -> float:
    """Mean Euclidean distance between matched transformed model points."""
    if pairing.predicted is None:
        return float("inf")
    pts = _evaluation_points(pairing.object)
    a = pairing.predicted.apply(pts)
    b = pairing.ground_truth.apply(pts)
    return float(np.linalg.norm(a - b, axis=1).mean())


def add_s_distance(pairing: PosePairing) -> float:
    """Mean nearest-neighbor distance from predicted-pose points to the
    ground-truth-pose point set (symmetric-object metric)."""
    if pairing.predicted is None:
        return float("inf")
    pts = _evaluation_points(pairing.object)
    a = pairing.predicted.apply(pts)
    b = pairing.ground_truth.apply(pts)
    dist, _ = cKDTree(b).query(a, k=1)
    return float(np.mean(dist))


def adds_dispatch(pairing: PosePairing) -> float:
    """ADD-S for symmetric objects, ADD otherwise."""
    if pairing.object.symmetry.is_symmetric:
        return add_s_distance(pairing)
    return add_distance(pairing)


def add_accuracy(pairings: list, threshold_fraction: float = 0.10):
    """Fraction of pairings whose ADD(-S) distance is under
    threshold_fraction x object diameter.

    Returns (accuracy, warning flag); the flag is set for an empty input,
    which scores 0.
    """
    if not pairings:
        return 0.0, True
    correct = 0
    for p in pairings:
        if adds_dispatch(p) < threshold_fraction * p.object.diameter:
            correct += 1
    return correct / len(pairings), False


def add_auc(pairings: list, max_threshold: float = 0.10) -> float:
    """Exact area under the accuracy-vs-threshold step curve on
    [0, max_threshold], normalized to [0, 1].

    accuracy(t) = (1/n) sum 1[d_i < t], so the integral is
    (1/n) sum max(0, T - d_i) / T.
    """
    if max_threshold <= 0:
        raise ValueError("max_threshold must be positive")
    if not pairings:
        return 0.0
    d = np.array([adds_dispatch(p) for p in pairings])
    auc = np.mean(np.maximum(0.0, max_threshold - d)) / max_threshold
    return float(np.clip(auc, 0.0, 1.0))


def pose_detection_ap(detections: DetectionSet, threshold_fraction: float = 0.10) -> float:
    """Average precision of multi-instance pose detection.

    Predictions are sorted by descending confidence and greedily matched
    one-to-one to ground truths by ADD(-S) under threshold_fraction x
    diameter. AP integrates the exact precision-recall curve with
    all-point interpolation. No ground truths -> NaN.
    """
    n_gt = len(detections.ground_truths)
    if n_gt == 0:
        return float("nan")
    if not detections.predictions:
        return 0.0
    threshold = threshold_fraction * detections.object.diameter
    order = sorted(
        range(len(detections.predictions)),
        key=lambda i: -detections.predictions[i][1],
    )
    matched = set()
    tp_flags = []
    for i in order:
        pose = detections.predictions[i][0]
        best_j, best_d = -1, threshold
        for j, gt in enumerate(detections.ground_truths):
            if j in matched:
                continue
            d = adds_dispatch(PosePairing(pose, gt, detections.object))
            if d < best_d:
                best_j, best_d = j, d
        if best_j >= 0:
            matched.add(best_j)
            tp_flags.append(True)
        else:
            tp_flags.append(False)
    tp = np.cumsum(tp_flags)
    ranks = np.arange(1, len(tp_flags) + 1)
    recall = tp / n_gt
    precision = tp / ranks
    # all-point interpolation: integrate max precision at recall >= r
    interp = np.maximum.accumulate(precision[::-1])[::-1]
    ap = 0.0
    prev_recall = 0.0
    for r, p in zip(recall, interp):
        if r > prev_recall:
            ap += (r - prev_recall) * p
            prev_recall = r
    return float(ap)


def viewpoint_coverage(
    camera_poses_in_object_frame: list,
    grid: tuple = (24, 12),
):
    """Fraction of azimuth x elevation bins hit by the camera viewpoints.

    Camera centers are normalized onto the unit sphere around the object
    origin; the grid is equal-angle with `grid[0]` azimuth columns and
    `grid[1]` elevation rows. Returns (coverage fraction, (el, az) count
    histogram). Raises CameraAtOrigin for a camera at the origin.
    """
    if not camera_poses_in_object_frame:
        raise ValueError("need at least one camera pose")
    az_bins, el_bins = grid
    if az_bins < 1 or el_bins < 1:
        raise ValueError("grid must be positive")
    hist = np.zeros((el_bins, az_bins), dtype=np.int64)
    for pose in camera_poses_in_object_frame:
        center = -(pose.rotation.T @ pose.translation)
        norm = np.linalg.norm(center)
        if norm < 1e-9:
            raise CameraAtOrigin("camera center within 1e-9 of object origin")
        v = center / norm
        azimuth = np.arctan2(v[1], v[0])  # [-pi, pi]
        elevation = np.arcsin(np.clip(v[2], -1.0, 1.0))  # [-pi/2, pi/2]
        a = min(int((azimuth + np.pi) / (2 * np.pi) * az_bins), az_bins - 1)
        e = min(int((elevation + np.pi / 2) / np.pi * el_bins), el_bins - 1)
        hist[e, a] += 1
    coverage = float(np.count_nonzero(hist) / hist.size)
    return coverage, hist
