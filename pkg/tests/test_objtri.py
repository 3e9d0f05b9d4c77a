import numpy as np
import pytest

from posefactory import geom
from posefactory.errors import InsufficientKeypoints, InsufficientObservations
from posefactory.estimators import RansacConfig
from posefactory.geom import CameraIntrinsics, CameraView, Pose6D, project
from posefactory.lm import LmConfig
from posefactory.objtri import (
    KeypointPrediction,
    classic_triangulation_pose,
    lm_jacobian,
    object_triangulation_pose,
    reprojection_cost,
)
from posefactory.scene import ObjectModel


INTR = CameraIntrinsics(fx=600.0, fy=600.0, cx=320.0, cy=240.0,
                        image_width=640, image_height=480)


def make_model(n_keypoints=5, seed=0, extent=0.08):
    rng = np.random.default_rng(seed)
    kp = rng.uniform(-extent, extent, size=(n_keypoints, 3))
    return ObjectModel.create("test_object", kp, kp)


def stereo_rig_views(baseline=0.1):
    left = CameraView(INTR, geom.look_at_pose([0.0, -0.6, 0.5], [0, 0, 0]))
    right_pose = geom.compose(
        Pose6D(np.eye(3), np.array([-baseline, 0.0, 0.0])),
        left.pose_world_to_camera,
    )
    return {"left": left, "right": CameraView(INTR, right_pose)}


def random_object_pose(rng, spread=0.1):
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    r = geom.rotation_from_axis_angle(axis * rng.uniform(0, np.pi))
    t = np.array([rng.uniform(-spread, spread), rng.uniform(-spread, spread),
                  rng.uniform(-0.02, 0.02)])
    return Pose6D(r, t)


def predict(model, pose, views, noise=0.0, rng=None, keypoints=None):
    preds = []
    world = pose.apply(model.canonical_keypoints)
    for vid, view in views.items():
        for k, x in enumerate(world):
            if keypoints is not None and k not in keypoints:
                continue
            pix = project(view, x)
            if noise and rng is not None:
                pix = pix + rng.normal(0, noise, 2)
            preds.append(KeypointPrediction(k, vid, pix))
    return preds


class TestClassicTriangulation:
    def test_noiseless_three_keypoints(self):
        model = make_model(3, seed=1)
        views = stereo_rig_views()
        truth = Pose6D(geom.rotation_from_axis_angle([0.1, -0.2, 0.3]),
                       np.array([0.02, 0.01, 0.0]))
        est = classic_triangulation_pose(predict(model, truth, views), views, model,
                                         RansacConfig(seed=2))
        ang, dist = geom.pose_difference(est.pose, truth)
        assert ang < 1e-6 and dist < 1e-6
        assert est.inlier_keypoints == frozenset({0, 1, 2})

    def test_gross_right_view_outlier_excluded(self):
        # 5 keypoints: minimal Procrustes samples can avoid the bad one
        model = make_model(5, seed=3)
        views = stereo_rig_views()
        truth = Pose6D(geom.rotation_from_axis_angle([0.0, 0.1, -0.2]),
                       np.array([0.01, -0.02, 0.0]))
        preds = predict(model, truth, views)
        idx = next(i for i, p in enumerate(preds)
                   if p.view_id == "right" and p.keypoint_id == 2)
        preds[idx] = KeypointPrediction(2, "right", preds[idx].pixel + [50.0, 0.0])
        est = classic_triangulation_pose(preds, views, model, RansacConfig(seed=4))
        ang, dist = geom.pose_difference(est.pose, truth)
        assert dist < 1e-3
        assert 2 not in est.inlier_keypoints

    def test_single_view_only(self):
        model = make_model(4, seed=5)
        views = stereo_rig_views()
        truth = Pose6D.identity()
        preds = [p for p in predict(model, truth, views) if p.view_id == "left"]
        with pytest.raises(InsufficientKeypoints):
            classic_triangulation_pose(preds, views, model, RansacConfig())


class TestObjectTriangulation:
    def test_init_at_truth_converges_immediately(self):
        model = make_model(4, seed=6)
        views = stereo_rig_views()
        truth = random_object_pose(np.random.default_rng(7))
        preds = predict(model, truth, views)
        est = object_triangulation_pose(preds, views, model, init=truth,
                                        config=RansacConfig(seed=8))
        assert est.iterations <= 2
        assert est.final_cost_px2 < 1e-12

    def test_recovers_from_perturbed_init(self):
        model = make_model(4, seed=9)
        views = stereo_rig_views()
        truth = Pose6D(geom.rotation_from_axis_angle([0.2, 0.1, -0.1]),
                       np.array([0.03, -0.01, 0.02]))
        delta = np.concatenate([
            np.array([0.0, 0.0, np.radians(5.0)]), [0.02, 0.0, 0.0]])
        init = geom.axis_angle_update(truth, delta)
        preds = predict(model, truth, views)
        est = object_triangulation_pose(preds, views, model, init=init,
                                        config=RansacConfig(seed=10))
        ang, dist = geom.pose_difference(est.pose, truth)
        assert ang < 1e-6 and dist < 1e-6
        assert est.final_cost_px2 < 1e-10

    def test_cost_never_above_classic(self):
        rng = np.random.default_rng(11)
        views = stereo_rig_views()
        for trial in range(100):
            model = make_model(5, seed=100 + trial)
            truth = random_object_pose(rng)
            preds = predict(model, truth, views, noise=1.0, rng=rng)
            try:
                classic = classic_triangulation_pose(preds, views, model,
                                                     RansacConfig(seed=trial))
            except InsufficientKeypoints:
                continue
            est = object_triangulation_pose(preds, views, model, init=classic.pose,
                                            config=RansacConfig(seed=trial))
            inlier_preds = [p for p in preds if p.keypoint_id in est.inlier_keypoints]
            cost_obj = reprojection_cost(est.pose, inlier_preds, views, model)
            cost_classic = reprojection_cost(classic.pose, inlier_preds, views, model)
            assert cost_obj <= cost_classic + 1e-9

    def test_default_init_runs_classic(self):
        model = make_model(4, seed=12)
        views = stereo_rig_views()
        truth = Pose6D(geom.rotation_from_axis_angle([0.0, 0.2, 0.1]),
                       np.array([-0.02, 0.0, 0.01]))
        preds = predict(model, truth, views)
        est = object_triangulation_pose(preds, views, model,
                                        config=RansacConfig(seed=13))
        ang, dist = geom.pose_difference(est.pose, truth)
        assert ang < 1e-6 and dist < 1e-6

    def test_three_views_exact(self):
        model = make_model(4, seed=14)
        views = stereo_rig_views()
        views["aux"] = CameraView(INTR, geom.look_at_pose([0.5, -0.3, 0.6], [0, 0, 0]))
        truth = Pose6D(geom.rotation_from_axis_angle([0.1, 0.0, 0.4]),
                       np.array([0.0, 0.02, -0.01]))
        preds = predict(model, truth, views)
        est = object_triangulation_pose(preds, views, model,
                                        config=RansacConfig(seed=15))
        ang, dist = geom.pose_difference(est.pose, truth)
        assert ang < 1e-6 and dist < 1e-6

    def test_stereo_label_swap_invariance(self):
        model = make_model(4, seed=16)
        views = stereo_rig_views()
        truth = Pose6D(geom.rotation_from_axis_angle([-0.1, 0.2, 0.0]),
                       np.array([0.01, 0.0, 0.015]))
        preds = predict(model, truth, views)
        swapped_views = {"left": views["right"], "right": views["left"]}
        swap = {"left": "right", "right": "left"}
        swapped_preds = [
            KeypointPrediction(p.keypoint_id, swap[p.view_id], p.pixel) for p in preds
        ]
        a = object_triangulation_pose(preds, views, model, config=RansacConfig(seed=17))
        b = object_triangulation_pose(swapped_preds, swapped_views, model,
                                      config=RansacConfig(seed=17))
        ang, dist = geom.pose_difference(a.pose, b.pose)
        assert ang < 1e-8 and dist < 1e-8

    def test_insufficient_observations(self):
        model = make_model(4, seed=18)
        views = stereo_rig_views()
        preds = predict(model, Pose6D.identity(), views, keypoints={0, 1})
        with pytest.raises(InsufficientObservations):
            object_triangulation_pose(preds, views, model, config=RansacConfig())

    def test_monotone_descent_reaches_lower_cost(self):
        rng = np.random.default_rng(19)
        model = make_model(5, seed=19)
        views = stereo_rig_views()
        truth = random_object_pose(rng)
        preds = predict(model, truth, views, noise=2.0, rng=rng)
        init = geom.axis_angle_update(truth, np.array([0.05, 0, 0, 0.01, 0, 0]))
        est = object_triangulation_pose(preds, views, model, init=init,
                                        config=RansacConfig(inlier_threshold_px=8.0, seed=20))
        inlier_preds = [p for p in preds if p.keypoint_id in est.inlier_keypoints]
        assert est.final_cost_px2 <= reprojection_cost(init, inlier_preds, views, model) + 1e-9


class TestLmJacobian:
    def central_difference(self, pose, preds, views, model, h=1e-6):
        def residuals(p):
            out = []
            for pr in preds:
                view = views[pr.view_id]
                proj = project(view, p.apply(model.canonical_keypoints[pr.keypoint_id]))
                out.extend((proj - pr.pixel).tolist())
            return np.asarray(out)

        jac = np.zeros((2 * len(preds), 6))
        for j in range(6):
            d = np.zeros(6)
            d[j] = h
            rp = residuals(geom.axis_angle_update(pose, d))
            rm = residuals(geom.axis_angle_update(pose, -d))
            jac[:, j] = (rp - rm) / (2 * h)
        return jac

    def test_matches_central_differences(self):
        rng = np.random.default_rng(21)
        views = stereo_rig_views()
        for trial in range(100):
            model = make_model(4, seed=300 + trial)
            pose = random_object_pose(rng)
            preds = predict(model, pose, views)
            # evaluate at a nearby pose so residuals are nonzero
            eval_pose = geom.axis_angle_update(pose, rng.normal(size=6) * 0.01)
            analytic = lm_jacobian(eval_pose, preds, views, model)
            numeric = self.central_difference(eval_pose, preds, views, model)
            scale = np.abs(numeric).max()
            assert np.abs(analytic - numeric).max() / scale < 1e-4

    def test_shape(self):
        model = make_model(4, seed=22)
        views = stereo_rig_views()
        preds = predict(model, Pose6D.identity(), views)
        jac = lm_jacobian(Pose6D.identity(), preds, views, model)
        assert jac.shape == (2 * len(preds), 6)

    def test_translation_column_pinhole_derivative(self):
        # axis-aligned camera, no distortion: du/dTx = fx / z
        model = ObjectModel.create("two_kp_probe",
                                   [[0.0, 0.0, 0.0], [0.1, 0.0, 0.0], [0.0, 0.1, 0.0]],
                                   [[0.0, 0.0, 0.0], [0.1, 0.0, 0.0], [0.0, 0.1, 0.0]])
        view = CameraView(INTR, Pose6D.identity())
        pose = Pose6D(np.eye(3), np.array([0.0, 0.0, 2.0]))
        preds = predict(model, pose, {"only": view})
        jac = lm_jacobian(pose, preds, {"only": view}, model)
        # row 0 is the u-residual of keypoint 0 at depth 2
        assert jac[0, 3] == pytest.approx(INTR.fx / 2.0, rel=1e-12)
        assert jac[1, 3] == pytest.approx(0.0, abs=1e-12)
