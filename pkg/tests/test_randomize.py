import math

import numpy as np
import pytest

from scenegen.posemath import Pose, Rotation
from scenegen.randomize import (CameraScheduler, RandomizationConfig,
                                SceneConfig, compatible, fibonacci_cap,
                                get_embodiment, map_gripper_to_scalar,
                                next_camera, sample_light, sample_scene,
                                sample_table_height, sample_texture,
                                validate_factors)
from scenegen.simworld import get_task


def spherical(pose, center):
    rel = pose.translation - np.asarray(center)
    r = np.linalg.norm(rel)
    theta = math.acos(rel[2] / r)
    phi = math.atan2(rel[1], rel[0])
    return r, theta, phi


def nn_geodesic_ratio(rig):
    """Brute-force pairwise oracle for lattice spacing uniformity."""
    dirs = np.array([(p.translation - rig.center) / rig.radius for p in rig.poses])
    dots = np.clip(dirs @ dirs.T, -1.0, 1.0)
    angles = np.arccos(dots)
    np.fill_diagonal(angles, np.inf)
    nearest = angles.min(axis=1)
    return nearest.max() / nearest.min()


def test_cap_single_pose_at_band_midpoint():
    rig = fibonacci_cap(num_poses=1)
    _, theta, _ = spherical(rig.poses[0], rig.center)
    th_min, th_max = rig.polar_range
    expect = math.acos(0.5 * (math.cos(th_min) + math.cos(th_max)))
    assert abs(theta - expect) <= 1e-9


def test_cap_points_on_sphere_and_in_band():
    rig = fibonacci_cap(num_poses=100)
    for pose in rig.poses:
        r, theta, phi = spherical(pose, rig.center)
        assert abs(r - rig.radius) <= 1e-9
        assert rig.polar_range[0] - 1e-12 <= theta <= rig.polar_range[1] + 1e-12
        assert rig.azimuth_range[0] - 1e-12 <= phi <= rig.azimuth_range[1] + 1e-12


def test_cap_spacing_uniformity():
    assert nn_geodesic_ratio(fibonacci_cap(num_poses=100)) <= 2.0


def test_cap_look_at_center():
    rig = fibonacci_cap(num_poses=25)
    for pose in rig.poses:
        forward = pose.rotation.to_matrix()[:, 2]
        to_center = rig.center - pose.translation
        # distance from the line position + t*forward to the center
        offset = np.linalg.norm(np.cross(to_center, forward))
        assert offset <= 1e-9
        assert np.dot(to_center, forward) > 0  # looking toward, not away


def test_cap_rejects_bad_ranges():
    with pytest.raises(ValueError):
        fibonacci_cap(polar_range=(1.0, 0.5))
    with pytest.raises(ValueError):
        fibonacci_cap(polar_range=(0.1, math.pi))
    with pytest.raises(ValueError):
        fibonacci_cap(radius=0.0)
    with pytest.raises(ValueError):
        fibonacci_cap(num_poses=0)


def test_scheduler_advances_on_success_only():
    sched = CameraScheduler(num_poses=100)
    assert [next_camera(sched, True) for _ in range(3)] == [0, 1, 2]

    sched = CameraScheduler(num_poses=100)
    seq = [next_camera(sched, ok) for ok in (True, False, False, True)]
    assert seq == [0, 1, 1, 1]
    assert next_camera(sched, True) == 2


def test_scheduler_balance_over_250_successes():
    sched = CameraScheduler(num_poses=100)
    counts = np.zeros(100, dtype=int)
    for _ in range(250):
        counts[next_camera(sched, True)] += 1
    assert set(np.unique(counts)) <= {2, 3}
    assert counts.max() - counts.min() <= 1


def test_scheduler_wraps():
    sched = CameraScheduler(num_poses=3)
    assert [next_camera(sched, True) for _ in range(7)] == [0, 1, 2, 0, 1, 2, 0]


def test_light_statistics():
    rng = np.random.default_rng(0)
    draws = np.array([sample_light(rng) for _ in range(10_000)])
    assert draws.min() >= 0.0
    assert draws.max() <= 0.5
    assert np.all(np.abs(draws.mean(axis=0) - 0.25) <= 0.01)
    corr = np.corrcoef(draws.T)
    off_diag = corr[~np.eye(3, dtype=bool)]
    assert np.all(np.abs(off_diag) < 0.05)


def test_light_reproducible():
    a = sample_light(np.random.default_rng(42))
    b = sample_light(np.random.default_rng(42))
    assert np.array_equal(a, b)


def test_texture_frequencies():
    rng = np.random.default_rng(1)
    draws = np.array([sample_texture(rng) for _ in range(17_000)])
    counts = np.bincount(draws, minlength=17)
    assert len(counts) == 17
    assert np.all(counts >= 1000 - 120)
    assert np.all(counts <= 1000 + 120)


def test_height_range():
    rng = np.random.default_rng(2)
    draws = [sample_table_height(rng) for _ in range(2000)]
    assert min(draws) >= -0.05
    assert max(draws) < 0.05


def test_gripper_mapping_endpoints():
    assert map_gripper_to_scalar([0.0, 0.0], "panda_gripper") == 0.0
    assert map_gripper_to_scalar([0.04, 0.04], "panda_gripper") == 1.0
    assert map_gripper_to_scalar([0.8, 0.8, -0.8, 0.8, 0.8, -0.8], "robotiq85") == 0.0
    assert map_gripper_to_scalar(np.zeros(6), "robotiq85") == 1.0


def test_gripper_mapping_midpoint():
    half = np.array([0.4, 0.4, -0.4, 0.4, 0.4, -0.4])
    assert abs(map_gripper_to_scalar(half, "robotiq85") - 0.5) <= 1e-12


def test_gripper_mapping_rejects_bad_input():
    with pytest.raises(ValueError):
        map_gripper_to_scalar([0.0, 0.0, 0.0], "panda_gripper")
    with pytest.raises(KeyError):
        map_gripper_to_scalar([0.0], "three_finger")


def test_compatibility():
    task = get_task("stack")
    assert compatible(get_embodiment("panda"), task.region)

    class FarRegion:
        x_range = (2.0, 2.1)
        y_range = (0.0, 0.1)

    assert not compatible(get_embodiment("panda"), FarRegion())


def test_scene_defaults_without_factors():
    task = get_task("stack")
    scene = sample_scene(task, (), np.random.default_rng(3))
    assert scene.camera_index == 0
    assert scene.light_rgb == (0.5, 0.5, 0.5)
    assert scene.texture_id == 0
    assert scene.table_height_delta == 0.0
    assert scene.embodiment_id == "panda"
    assert set(scene.object_placements) == {o.id for o in task.objects}


def test_single_factor_isolation():
    task = get_task("stack")
    scenes = [sample_scene(task, ("light",), np.random.default_rng(s))
              for s in range(8)]
    assert len({s.light_rgb for s in scenes}) > 1
    assert all(s.texture_id == 0 for s in scenes)
    assert all(s.camera_index == 0 for s in scenes)
    assert all(s.table_height_delta == 0.0 for s in scenes)


def test_scene_sampling_reproducible():
    task = get_task("stack")
    a = sample_scene(task, ("camera", "light", "texture", "height"),
                     np.random.default_rng(7))
    b = sample_scene(task, ("camera", "light", "texture", "height"),
                     np.random.default_rng(7))
    assert a.light_rgb == b.light_rgb
    assert a.camera_index == b.camera_index
    assert a.texture_id == b.texture_id
    assert a.table_height_delta == b.table_height_delta
    for oid, pose in a.object_placements.items():
        assert np.array_equal(pose.translation, b.object_placements[oid].translation)


def test_scene_scheduler_supplies_camera():
    task = get_task("stack")
    sched = CameraScheduler(num_poses=100, index=41)
    scene = sample_scene(task, ("camera",), np.random.default_rng(0),
                         scheduler=sched)
    assert scene.camera_index == 41
    assert sched.index == 41  # sample_scene peeks, never advances


def test_validate_factors():
    assert validate_factors(["camera", "height"]) == ("camera", "height")
    with pytest.raises(ValueError):
        validate_factors(["gravity"])


def test_scene_config_validation():
    with pytest.raises(ValueError):
        SceneConfig(light_rgb=(0.9, 0.1, 0.1))
    with pytest.raises(ValueError):
        SceneConfig(texture_id=17)
    with pytest.raises(ValueError):
        SceneConfig(camera_index=-1)


def test_config_rig_roundtrip(tmp_path):
    from scenegen.randomize import (load_randomization_config,
                                    save_randomization_config)
    cfg = RandomizationConfig(cap_num_poses=10, height_range=(-0.02, 0.02))
    path = tmp_path / "rand.yaml"
    save_randomization_config(cfg, path)
    loaded = load_randomization_config(path)
    assert loaded == cfg
    assert loaded.build_rig().num_poses == 10
