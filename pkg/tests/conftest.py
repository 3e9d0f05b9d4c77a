import numpy as np
import pytest

from posefactory.geom import Pose6D, rotation_from_axis_angle
from posefactory.scene import ObjectModel, Symmetry
from posefactory.simulation import SyntheticSceneSpec, TrajectorySpec


def make_object(object_id="widget", n_keypoints=4, seed=0, extent=0.06, symmetry=None):
    rng = np.random.default_rng(seed)
    kp = rng.uniform(-extent, extent, size=(n_keypoints, 3))
    dense = rng.uniform(-extent, extent, size=(60, 3))
    points = np.vstack([kp, dense])
    return ObjectModel.create(object_id, kp, points, symmetry=symmetry)


def object_pose(seed=0, spread=0.08):
    rng = np.random.default_rng(seed)
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    r = rotation_from_axis_angle(axis * rng.uniform(0.0, np.pi))
    t = np.array([rng.uniform(-spread, spread), rng.uniform(-spread, spread),
                  rng.uniform(0.0, 0.05)])
    return Pose6D(r, t)


def small_scene_spec(seed=0, frames=40, sigma=0.0, outliers=0.0, objects=None,
                     annotated=4, kind="arc"):
    if objects is None:
        objects = (
            (make_object("widget", 4, seed=seed + 1), object_pose(seed + 2)),
        )
    return SyntheticSceneSpec(
        rng_seed=seed,
        scene_id=f"scene{seed:04d}",
        objects=objects,
        trajectory=TrajectorySpec(kind=kind, frame_count=frames),
        pixel_noise_sigma=sigma,
        outlier_rate=outliers,
        annotated_frame_count=annotated,
    )


@pytest.fixture
def widget_model():
    return make_object()
