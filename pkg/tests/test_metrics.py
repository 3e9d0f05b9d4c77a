import numpy as np
import pytest

from conftest import make_object

from posefactory import geom
from posefactory.errors import CameraAtOrigin
from posefactory.geom import Pose6D
from posefactory.metrics import (
    DetectionSet,
    PosePairing,
    add_accuracy,
    add_auc,
    add_distance,
    add_s_distance,
    pose_detection_ap,
    viewpoint_coverage,
)
from posefactory.scene import ObjectModel, Symmetry


def rotz(deg):
    a = np.radians(deg)
    return np.array([[np.cos(a), -np.sin(a), 0.0],
                     [np.sin(a), np.cos(a), 0.0],
                     [0.0, 0.0, 1.0]])


TWO_POINT = ObjectModel(
    object_id="bar",
    canonical_keypoints=np.array([[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]]),
    model_points=np.array([[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]]),
    diameter=2.0,
)


def random_pose(rng):
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    return Pose6D(
        geom.rotation_from_axis_angle(axis * rng.uniform(0, np.pi)),
        rng.uniform(-0.5, 0.5, 3),
    )


def brute_force_add_s(model, predicted, truth):
    a = predicted.apply(model.model_points)
    b = truth.apply(model.model_points)
    total = 0.0
    for x in a:
        total += np.min(np.linalg.norm(b - x, axis=1))
    return total / len(a)


class TestAddDistance:
    def test_identical_poses(self, widget_model):
        p = PosePairing(Pose6D.identity(), Pose6D.identity(), widget_model)
        assert add_distance(p) == 0.0

    def test_translation_offset_passes_through(self, widget_model):
        t = np.array([0.0, 0.0, 0.5])
        pred = Pose6D(np.eye(3), t)
        p = PosePairing(pred, Pose6D.identity(), widget_model)
        assert add_distance(p) == pytest.approx(0.5, abs=1e-12)

    def test_two_point_rotation_fixture(self):
        pred = Pose6D(rotz(180), np.zeros(3))
        p = PosePairing(pred, Pose6D.identity(), TWO_POINT)
        assert add_distance(p) == pytest.approx(2.0, abs=1e-12)

    def test_symmetric_under_swap(self, widget_model):
        rng = np.random.default_rng(1)
        a, b = random_pose(rng), random_pose(rng)
        assert add_distance(PosePairing(a, b, widget_model)) == pytest.approx(
            add_distance(PosePairing(b, a, widget_model)), rel=1e-12
        )

    def test_left_invariance(self, widget_model):
        rng = np.random.default_rng(2)
        for _ in range(20):
            a, b, g = random_pose(rng), random_pose(rng), random_pose(rng)
            base = add_distance(PosePairing(a, b, widget_model))
            moved = add_distance(
                PosePairing(geom.compose(g, a), geom.compose(g, b), widget_model)
            )
            assert abs(base - moved) < 1e-10


class TestAddSDistance:
    def test_identical_poses(self, widget_model):
        p = PosePairing(Pose6D.identity(), Pose6D.identity(), widget_model)
        assert add_s_distance(p) == 0.0

    def test_symmetric_set_maps_to_itself(self):
        pred = Pose6D(rotz(180), np.zeros(3))
        p = PosePairing(pred, Pose6D.identity(), TWO_POINT)
        assert add_s_distance(p) == pytest.approx(0.0, abs=1e-12)

    def test_never_above_add_and_matches_brute_force(self, widget_model):
        rng = np.random.default_rng(3)
        for _ in range(1000):
            a, b = random_pose(rng), random_pose(rng)
            p = PosePairing(a, b, widget_model)
            s = add_s_distance(p)
            assert s <= add_distance(p) + 1e-12
            assert abs(s - brute_force_add_s(widget_model, a, b)) < 1e-10

    def test_exact_symmetry_group_element(self):
        # 4-point square is invariant under Rz(90)
        square = np.array(
            [[1.0, 0, 0], [0, 1.0, 0], [-1.0, 0, 0], [0, -1.0, 0]]
        )
        model = ObjectModel.create("square", square, square,
                                   symmetry=Symmetry("discrete", (0, 0, 1), 4))
        truth = Pose6D(rotz(25), np.array([0.1, -0.2, 0.3]))
        pred = geom.compose(truth, Pose6D(rotz(90), np.zeros(3)))
        assert add_s_distance(PosePairing(pred, truth, model)) < 1e-12

    def test_left_invariance(self, widget_model):
        rng = np.random.default_rng(4)
        for _ in range(20):
            a, b, g = random_pose(rng), random_pose(rng), random_pose(rng)
            base = add_s_distance(PosePairing(a, b, widget_model))
            moved = add_s_distance(
                PosePairing(geom.compose(g, a), geom.compose(g, b), widget_model)
            )
            assert abs(base - moved) < 1e-10


def pairing_at_distance(model, distance):
    """Pairing with exact ADD = distance (pure translation offset)."""
    pred = Pose6D(np.eye(3), np.array([distance, 0.0, 0.0]))
    return PosePairing(pred, Pose6D.identity(), model)


class TestAccuracyAndAuc:
    def test_all_exact(self, widget_model):
        pairs = [pairing_at_distance(widget_model, 0.0)] * 3
        acc, warn = add_accuracy(pairs)
        assert acc == 1.0 and not warn
        assert add_auc(pairs) == 1.0

    def test_all_far(self, widget_model):
        pairs = [pairing_at_distance(widget_model, 0.5)] * 3
        acc, _ = add_accuracy(pairs)
        assert acc == 0.0
        assert add_auc(pairs) == 0.0

    def test_threshold_fractions(self, widget_model):
        d = widget_model.diameter
        pairs = [pairing_at_distance(widget_model, f * d) for f in (0.05, 0.09, 0.11)]
        acc, _ = add_accuracy(pairs, threshold_fraction=0.10)
        assert acc == pytest.approx(2.0 / 3.0)
        pairs2 = [pairing_at_distance(widget_model, f * d) for f in (0.5, 2.0)]
        acc2, _ = add_accuracy(pairs2, threshold_fraction=0.10)
        assert acc2 == 0.0

    def test_auc_hand_integration(self):
        # distances 1cm, 5cm, 15cm with 10cm max:
        # (0.04/3 + 0.05*2/3)/0.10 = 0.466667
        big = np.array([[0.2, 0, 0], [-0.2, 0, 0], [0, 0.1, 0], [0, 0, 0.05]])
        model = ObjectModel.create("big", big, big)
        pairs = [pairing_at_distance(model, d) for d in (0.01, 0.05, 0.15)]
        assert add_auc(pairs, max_threshold=0.10) == pytest.approx(0.466667, abs=1e-6)

    def test_auc_monotone_in_max_threshold(self, widget_model):
        rng = np.random.default_rng(5)
        pairs = [pairing_at_distance(widget_model, rng.uniform(0, 0.2)) for _ in range(20)]
        aucs = [add_auc(pairs, t) for t in (0.01, 0.05, 0.10, 0.50)]
        assert all(a <= b + 1e-12 for a, b in zip(aucs, aucs[1:]))

    def test_auc_limit_is_zero_distance_fraction(self, widget_model):
        pairs = [pairing_at_distance(widget_model, d) for d in (0.0, 0.0, 0.1)]
        assert add_auc(pairs, max_threshold=1e-12) == pytest.approx(2.0 / 3.0)

    def test_empty_warns(self):
        acc, warn = add_accuracy([])
        assert acc == 0.0 and warn

    def test_missing_prediction_counts_incorrect(self, widget_model):
        pairs = [
            pairing_at_distance(widget_model, 0.0),
            PosePairing(None, Pose6D.identity(), widget_model),
        ]
        acc, _ = add_accuracy(pairs)
        assert acc == 0.5
        assert add_auc(pairs) == pytest.approx(0.5)


class TestPoseDetectionAp:
    def test_perfect_detections(self, widget_model):
        rng = np.random.default_rng(6)
        gts = [random_pose(rng) for _ in range(3)]
        preds = [(g, 0.9 - 0.1 * i) for i, g in enumerate(gts)]
        ap = pose_detection_ap(DetectionSet(preds, gts, widget_model))
        assert ap == pytest.approx(1.0)

    def test_nothing_matches(self, widget_model):
        rng = np.random.default_rng(7)
        gts = [random_pose(rng)]
        far = Pose6D(np.eye(3), np.array([5.0, 5.0, 5.0]))
        ap = pose_detection_ap(DetectionSet([(far, 0.9)], gts, widget_model))
        assert ap == 0.0

    def test_hand_pr_curve(self, widget_model):
        rng = np.random.default_rng(8)
        gt1, gt2 = random_pose(rng), random_pose(rng)
        far = Pose6D(np.eye(3), np.array([5.0, 5.0, 5.0]))
        preds = [(gt1, 0.9), (far, 0.8), (gt2, 0.7)]
        ap = pose_detection_ap(DetectionSet(preds, [gt1, gt2], widget_model))
        assert ap == pytest.approx(0.5 * 1.0 + 0.5 * (2.0 / 3.0), abs=1e-6)

    def test_no_ground_truth_is_nan(self, widget_model):
        ap = pose_detection_ap(DetectionSet([], [], widget_model))
        assert np.isnan(ap)


def pose_with_center(center):
    """World(object)-to-camera pose whose camera center is `center`."""
    return geom.look_at_pose(center, (0.0, 0.0, 0.0))


class TestViewpointCoverage:
    def test_single_viewpoint(self):
        cov, hist = viewpoint_coverage([pose_with_center([1.0, 0.2, 0.5])], grid=(24, 12))
        assert cov == pytest.approx(1.0 / (24 * 12))
        assert hist.sum() == 1

    def test_uniform_sphere_coverage_near_one(self):
        rng = np.random.default_rng(9)
        grid = (12, 6)
        n = 100 * grid[0] * grid[1]
        poses = []
        for _ in range(n):
            v = rng.normal(size=3)
            v /= np.linalg.norm(v)
            poses.append(pose_with_center(v))
        cov, _ = viewpoint_coverage(poses, grid=grid)
        assert cov > 0.98

    def test_upper_hemisphere_bounded(self):
        rng = np.random.default_rng(10)
        poses = []
        while len(poses) < 2000:
            v = rng.normal(size=3)
            v /= np.linalg.norm(v)
            if v[2] > 0:
                poses.append(pose_with_center(v))
        cov, _ = viewpoint_coverage(poses, grid=(24, 12))
        assert cov <= 0.5 + 1.0 / 12

    def test_camera_at_origin(self):
        with pytest.raises(CameraAtOrigin):
            viewpoint_coverage([Pose6D.identity()])
