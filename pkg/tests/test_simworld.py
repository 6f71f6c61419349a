import math

import numpy as np
import pytest

from scenegen.posemath import (Pose, Rotation, compose, geodesic_distance,
                               inverse)
from scenegen.randomize import SceneConfig, fibonacci_cap, sample_scene
from scenegen.simworld import (ATTACH_THRESHOLD, DETACH_THRESHOLD,
                               GRIPPER_RATE, MAX_POS_STEP, MAX_ROT_STEP,
                               PlacementError, check_subtask, check_success,
                               expert_demonstration, get_task, grasp_point,
                               observation_dim, observe, reset, step)

DOWN = Rotation.from_axis_angle([math.pi, 0.0, 0.0])


def place(x, y, z=0.0, yaw=0.0):
    return Pose(Rotation.from_axis_angle([0, 0, yaw]), np.array([x, y, z]))


def stack_scene(**kw):
    return SceneConfig(object_placements={
        "cube_a": place(0.40, -0.05),
        "cube_b": place(0.50, 0.05),
    }, **kw)


def hold(state, grip_cmd):
    return step(state, np.array([0, 0, 0, 0, 0, 0, grip_cmd], dtype=float))


def grasp_cube_a(world):
    """Drive the ee onto cube_a's grasp point and close; returns the
    attached state."""
    task = world.task
    gp = grasp_point(task, "cube_a", world.object_poses["cube_a"])
    world = step(world, np.concatenate([
        np.zeros(3), np.zeros(3), [ATTACH_THRESHOLD + 0.1]]))
    # teleport-by-steps: jump is larger than one step, so walk there
    while np.linalg.norm(gp - world.ee_pose.translation) > 1e-12:
        d = gp - world.ee_pose.translation
        d_local = world.ee_pose.rotation.inverse().rotate(d)
        n = np.linalg.norm(d_local)
        if n > MAX_POS_STEP:
            d_local *= MAX_POS_STEP / n
        world = step(world, np.concatenate([
            d_local, np.zeros(3), [ATTACH_THRESHOLD + 0.1]]))
    world = hold(world, 0.0)
    assert world.attached_object == "cube_a"
    return world


def test_reset_places_objects_resting():
    task = get_task("stack")
    world = reset(task, stack_scene())
    assert world.object_poses["cube_a"].translation[2] == pytest.approx(0.02)
    assert world.object_poses["cube_b"].translation[2] == pytest.approx(0.025)
    assert world.attached_object is None
    assert world.gripper_opening == 1.0


def test_reset_deterministic():
    task = get_task("stack")
    a = reset(task, stack_scene())
    b = reset(task, stack_scene())
    for oid in a.object_poses:
        assert np.array_equal(a.object_poses[oid].translation,
                              b.object_poses[oid].translation)
    assert np.array_equal(a.ee_pose.translation, b.ee_pose.translation)


def test_reset_rejects_outside_region():
    task = get_task("stack")
    scene = SceneConfig(object_placements={
        "cube_a": place(0.90, 0.0),  # x range is [0.35, 0.55]
        "cube_b": place(0.50, 0.05),
    })
    with pytest.raises(PlacementError):
        reset(task, scene)


def test_reset_resamples_overlaps():
    task = get_task("stack")
    scene = SceneConfig(object_placements={
        "cube_a": place(0.45, 0.0),
        "cube_b": place(0.45, 0.0),
    })
    with pytest.raises(PlacementError):
        reset(task, scene)  # no rng: resampling unavailable
    world = reset(task, scene, np.random.default_rng(0))
    d = np.linalg.norm(world.object_poses["cube_a"].translation[:2]
                       - world.object_poses["cube_b"].translation[:2])
    assert d > 0.0


def test_zero_action_only_servos_gripper():
    task = get_task("stack")
    world = reset(task, stack_scene())
    nxt = hold(world, 0.0)
    assert np.array_equal(nxt.ee_pose.translation, world.ee_pose.translation)
    for oid in world.object_poses:
        assert np.array_equal(nxt.object_poses[oid].translation,
                              world.object_poses[oid].translation)
    assert nxt.gripper_opening == pytest.approx(1.0 - GRIPPER_RATE)


def test_gripper_servo_rate_limited():
    task = get_task("stack")
    world = reset(task, stack_scene())
    openings = []
    for _ in range(6):
        world = hold(world, 0.0)
        openings.append(world.gripper_opening)
    assert openings == pytest.approx([0.8, 0.6, 0.4, 0.2, 0.0, 0.0])


def test_translation_clamped_with_warning():
    task = get_task("stack")
    world = reset(task, stack_scene())
    big = np.array([0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0])
    with pytest.warns(UserWarning):
        nxt = step(world, big)
    moved = np.linalg.norm(nxt.ee_pose.translation - world.ee_pose.translation)
    assert moved == pytest.approx(MAX_POS_STEP)


def test_rotation_clamped_with_warning():
    task = get_task("stack")
    world = reset(task, stack_scene())
    big = np.array([0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0])
    with pytest.warns(UserWarning):
        nxt = step(world, big)
    assert geodesic_distance(nxt.ee_pose.rotation,
                             world.ee_pose.rotation) == pytest.approx(MAX_ROT_STEP)


def test_attach_fires_at_one_centimeter():
    # threshold arithmetic on a hand-built state: close exactly 1 cm above
    # the grasp point -> attach fires on the crossing step
    task = get_task("stack")
    world = reset(task, stack_scene())
    gp = grasp_point(task, "cube_a", world.object_poses["cube_a"])
    above = gp + np.array([0.0, 0.0, 0.01])
    world_at = type(world)(
        task=task, object_poses=world.object_poses,
        ee_pose=Pose(DOWN, above),
        gripper_opening=ATTACH_THRESHOLD + 0.05,
        table_height=world.table_height)
    attached = hold(world_at, 0.0)
    assert attached.attached_object == "cube_a"


def test_attach_needs_proximity():
    task = get_task("stack")
    world = reset(task, stack_scene())
    for _ in range(6):  # close fully while far from any cube
        world = hold(world, 0.0)
    assert world.gripper_opening < ATTACH_THRESHOLD
    assert world.attached_object is None


def test_attach_requires_crossing_not_level():
    # opening already below the threshold: no crossing, no attach
    task = get_task("stack")
    world = reset(task, stack_scene())
    gp = grasp_point(task, "cube_a", world.object_poses["cube_a"])
    world_at = type(world)(
        task=task, object_poses=world.object_poses,
        ee_pose=Pose(DOWN, gp),
        gripper_opening=0.05, table_height=world.table_height)
    nxt = hold(world_at, 0.0)
    assert nxt.attached_object is None


def test_attached_object_follows_rigidly():
    task = get_task("stack")
    world = grasp_cube_a(reset(task, stack_scene()))
    rel0 = compose(inverse(world.ee_pose), world.object_poses["cube_a"])
    rng = np.random.default_rng(4)
    for _ in range(20):
        a = np.concatenate([rng.uniform(-0.01, 0.01, 3),
                            rng.uniform(-0.05, 0.05, 3), [0.0]])
        world = step(world, a)
        rel = compose(inverse(world.ee_pose), world.object_poses["cube_a"])
        assert np.max(np.abs(rel.translation - rel0.translation)) <= 1e-12
        assert geodesic_distance(rel.rotation, rel0.rotation) <= 1e-12


def test_release_settles_on_lower_cube():
    task = get_task("stack")
    world = grasp_cube_a(reset(task, stack_scene()))
    b = world.object_poses["cube_b"].translation
    # carry cube_a over cube_b, 5 cm up
    target = b + np.array([0.0, 0.0, 0.10])
    while np.linalg.norm(target - world.object_poses["cube_a"].translation) > 1e-9:
        d = target - world.object_poses["cube_a"].translation
        n = np.linalg.norm(d)
        if n > MAX_POS_STEP:
            d *= MAX_POS_STEP / n
        d_local = world.ee_pose.rotation.inverse().rotate(d)
        world = step(world, np.concatenate([d_local, np.zeros(3), [0.0]]))
    for _ in range(5):
        world = hold(world, 1.0)
    assert world.attached_object is None
    a_z = world.object_poses["cube_a"].translation[2]
    assert a_z == pytest.approx(b[2] + 0.025 + 0.02)  # bottom top + half extent


def test_release_away_settles_on_table():
    task = get_task("stack")
    world = grasp_cube_a(reset(task, stack_scene()))
    for _ in range(6):  # lift straight up (ee z axis points down)
        world = step(world, np.array([0, 0, -0.03, 0, 0, 0, 0.0]))
    for _ in range(5):
        world = hold(world, 1.0)
    assert world.attached_object is None
    assert world.object_poses["cube_a"].translation[2] == pytest.approx(0.02)


def test_no_tunneling_below_table():
    task = get_task("stack")
    world = reset(task, stack_scene())
    for oid, pose in world.object_poses.items():
        half = task.object(oid).half_height
        assert pose.translation[2] >= world.table_height + half - 1e-6


def test_observe_roundtrip_through_camera():
    task = get_task("stack")
    rig = fibonacci_cap(num_poses=10)
    scene = stack_scene(camera_index=3)
    world = reset(task, scene)
    obs = observe(world, scene, rig)
    cam = rig.poses[3]
    pos = obs[:3]
    c0, c1 = obs[3:6], obs[6:9]
    seen = Pose(Rotation.from_matrix(np.column_stack([c0, c1, np.cross(c0, c1)])), pos)
    back = compose(cam, seen)
    assert np.max(np.abs(back.translation - world.ee_pose.translation)) <= 1e-9
    assert geodesic_distance(back.rotation, world.ee_pose.rotation) <= 1e-9


def test_observe_depends_on_camera():
    task = get_task("stack")
    rig = fibonacci_cap(num_poses=10)
    world = reset(task, stack_scene())
    a = observe(world, stack_scene(camera_index=0), rig)
    b = observe(world, stack_scene(camera_index=7), rig)
    assert not np.allclose(a, b)


def test_observe_layout_and_codes():
    task = get_task("stack")
    rig = fibonacci_cap(num_poses=4)
    scene = stack_scene(camera_index=1, light_rgb=(0.1, 0.2, 0.3),
                        texture_id=5, table_height_delta=0.0)
    world = reset(task, scene)
    obs = observe(world, scene, rig)
    assert obs.shape == (observation_dim(task),)
    assert obs[9] == world.gripper_opening
    tail = obs[-21:]
    assert np.allclose(tail[:3], [0.1, 0.2, 0.3])
    one_hot = tail[3:20]
    assert one_hot[5] == 1.0 and one_hot.sum() == 1.0
    assert tail[20] == 0.0


def test_observe_relative_blocks():
    task = get_task("stack")
    rig = fibonacci_cap(num_poses=4)
    scene = stack_scene(camera_index=2)
    world = reset(task, scene)
    obs = observe(world, scene, rig)
    ee = obs[:3]
    cube_a = obs[10:13]
    cube_b = obs[19:22]
    rel = obs[28:34]
    assert np.allclose(rel[:3], cube_a - ee)
    assert np.allclose(rel[3:], cube_b - ee)


def test_success_predicates():
    task = get_task("stack")
    world = reset(task, stack_scene())
    assert not check_success(task, world)

    b = world.object_poses["cube_b"].translation
    stacked_pose = Pose(Rotation.identity(), b + np.array([0.0, 0.0, 0.045]))
    poses = dict(world.object_poses)
    poses["cube_a"] = stacked_pose
    stacked = type(world)(task=task, object_poses=poses, ee_pose=world.ee_pose,
                          gripper_opening=0.0, table_height=0.0)
    assert check_success(task, stacked)

    held = type(world)(task=task, object_poses=poses, ee_pose=world.ee_pose,
                       gripper_opening=0.0, table_height=0.0,
                       attached_object="cube_a", attach_rel=Pose.identity())
    assert not check_success(task, held)  # still attached


def test_subtask_predicates_in_order():
    task = get_task("stack")
    world = reset(task, stack_scene())
    assert not check_subtask(task, 0, world)
    grasped = grasp_cube_a(world)
    assert check_subtask(task, 0, grasped)
    assert not check_subtask(task, 1, grasped)


@pytest.mark.parametrize("task_id", ["stack", "stack_three", "square_post"])
def test_expert_completes_every_task(task_id):
    task = get_task(task_id)
    rig = fibonacci_cap(num_poses=4)
    rng = np.random.default_rng(11)
    scene = sample_scene(task, (), rng)
    demo = expert_demonstration(task, scene, rig, rng)
    assert len(demo.segments) == len(task.subtasks)
    assert len(demo.timesteps) > 10


def test_expert_episode_passes_success_check():
    from scenegen.simworld import scripted_expert_demo
    task = get_task("stack")
    rig = fibonacci_cap(num_poses=4)
    rng = np.random.default_rng(12)
    scene = sample_scene(task, (), rng)
    _, states = scripted_expert_demo(task, scene, rig, rng)
    assert check_success(task, states[-1])
