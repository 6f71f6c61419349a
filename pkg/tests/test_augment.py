import math

import numpy as np
import pytest

from scenegen.augment import (BridgePlan, Failure, KinematicEpisode,
                              ReplayJitter, bridge_route, bridge_waypoints,
                              build_bridge, build_pools, generate_episode,
                              generate_kinematic, select_source_segment,
                              transform_segment)
from scenegen.posemath import (Pose, Rotation, compose, geodesic_distance,
                               inverse, pose_allclose, random_pose)
from scenegen.randomize import SceneConfig, fibonacci_cap, sample_scene
from scenegen.simworld import check_success, expert_demonstration, get_task
from scenegen.trajectory import EmptyPoolError, SubtaskSegment

ATOL = 1e-9


def quat_matrix(q):
    w, x, y, z = q
    return np.array([
        [w * w + x * x - y * y - z * z, 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), w * w - x * x + y * y - z * z, 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), w * w - x * x - y * y + z * z],
    ])


def homogeneous(pose):
    m = np.eye(4)
    m[:3, :3] = quat_matrix(pose.rotation.quat)
    m[:3, 3] = pose.translation
    return m


class PoseHolder:
    """Stands in for a Demonstration: only ee poses matter here."""

    def __init__(self, poses):
        self._poses = poses

    def segment(self, ref_pose):
        seg = SubtaskSegment(0, len(self._poses), "s", "obj", ref_pose)
        seg.ee_poses = lambda: list(self._poses)
        return seg


def random_segment(rng, n=12):
    poses = [random_pose(rng) for _ in range(n)]
    return PoseHolder(poses).segment(random_pose(rng)), poses


def test_transform_identity_when_pose_unchanged():
    rng = np.random.default_rng(0)
    seg, poses = random_segment(rng)
    out = transform_segment(seg, seg.reference_object_pose)
    for a, b in zip(out, poses):
        assert pose_allclose(a, b)


def test_transform_pure_translation_shifts_waypoints():
    rng = np.random.default_rng(1)
    ref = Pose(Rotation.identity(), np.array([0.4, 0.0, 0.0]))
    poses = [random_pose(rng) for _ in range(8)]
    seg = PoseHolder(poses).segment(ref)
    moved = Pose(ref.rotation, ref.translation + np.array([0.1, 0.0, 0.0]))
    out = transform_segment(seg, moved)
    for a, b in zip(out, poses):
        assert np.allclose(a.translation, b.translation + [0.1, 0.0, 0.0], atol=ATOL)
        assert geodesic_distance(a.rotation, b.rotation) <= ATOL


def test_transform_preserves_relative_pose():
    rng = np.random.default_rng(2)
    seg, poses = random_segment(rng)
    new_pose = random_pose(rng)
    out = transform_segment(seg, new_pose)
    for a, b in zip(out, poses):
        rel_new = compose(inverse(new_pose), a)
        rel_src = compose(inverse(seg.reference_object_pose), b)
        assert pose_allclose(rel_new, rel_src)


def test_transform_matches_matrix_oracle():
    rng = np.random.default_rng(3)
    for _ in range(150):
        seg, poses = random_segment(rng, n=4)
        new_pose = random_pose(rng)
        out = transform_segment(seg, new_pose)
        m = (homogeneous(new_pose)
             @ np.linalg.inv(homogeneous(seg.reference_object_pose)))
        for a, b in zip(out, poses):
            assert np.max(np.abs(homogeneous(a) - m @ homogeneous(b))) <= ATOL


def make_pool(rng, n):
    return [PoseHolder([random_pose(rng)]).segment(random_pose(rng))
            for _ in range(n)]


def test_select_single_segment_pool():
    rng = np.random.default_rng(4)
    pool = make_pool(rng, 1)
    assert select_source_segment(pool, random_pose(rng), rng) is pool[0]


def test_select_exact_match_wins():
    rng = np.random.default_rng(5)
    pool = make_pool(rng, 10)
    target = pool[3].reference_object_pose
    assert select_source_segment(pool, target, rng) is pool[3]


def test_select_matches_brute_force():
    rng = np.random.default_rng(6)
    pool = make_pool(rng, 10)
    for _ in range(25):
        target = random_pose(rng)
        scores = [
            np.linalg.norm(s.reference_object_pose.translation - target.translation)
            + 0.1 * geodesic_distance(s.reference_object_pose.rotation,
                                      target.rotation)
            for s in pool]
        assert select_source_segment(pool, target, rng) is pool[int(np.argmin(scores))]


def test_select_tie_breaks_to_lowest_index():
    rng = np.random.default_rng(7)
    shared = random_pose(rng)
    pool = [PoseHolder([random_pose(rng)]).segment(shared) for _ in range(3)]
    assert select_source_segment(pool, shared, rng) is pool[0]


def test_select_empty_pool():
    rng = np.random.default_rng(8)
    with pytest.raises(EmptyPoolError):
        select_source_segment([], random_pose(rng), rng)


def test_select_uniform_strategy_reaches_everything():
    rng = np.random.default_rng(9)
    pool = make_pool(rng, 4)
    seen = {id(select_source_segment(pool, random_pose(rng), rng, "uniform"))
            for _ in range(100)}
    assert len(seen) == 4


def test_bridge_degenerate():
    p = random_pose(np.random.default_rng(10))
    waypoints = bridge_waypoints(p, p)
    assert len(waypoints) == 1
    assert pose_allclose(waypoints[0], p)


def test_bridge_translation_spacing():
    a = Pose(Rotation.identity(), np.zeros(3))
    b = Pose(Rotation.identity(), np.array([0.10, 0.0, 0.0]))
    waypoints = bridge_waypoints(a, b, BridgePlan(max_pos_step=0.01))
    assert len(waypoints) == 10
    prev = a
    for w in waypoints:
        assert np.linalg.norm(w.translation - prev.translation) == pytest.approx(0.01)
        prev = w
    assert pose_allclose(waypoints[-1], b)


def test_bridge_rotation_step_count():
    a = Pose(Rotation.identity(), np.zeros(3))
    b = Pose(Rotation.from_axis_angle([0, 0, math.pi / 2]), np.zeros(3))
    waypoints = bridge_waypoints(a, b, BridgePlan(max_rot_step=0.1))
    assert len(waypoints) == math.ceil((math.pi / 2) / 0.1)  # 16


def test_bridge_actions_land_exactly():
    rng = np.random.default_rng(11)
    a, b = random_pose(rng, 0.1), random_pose(rng, 0.1)
    actions = build_bridge(a, b, 0.7)
    cur = a
    for act in actions:
        assert act[6] == 0.7
        cur = compose(cur, Pose(Rotation.from_axis_angle(act[3:6]), act[:3]))
    assert pose_allclose(cur, b, atol=1e-8)


def test_bridge_route_keeps_height_aligned():
    # low start, low goal: route must rise, travel level, then sink
    plan = BridgePlan()
    a = Pose(Rotation.identity(), np.array([0.40, -0.10, 0.05]))
    b = Pose(Rotation.identity(), np.array([0.50, 0.10, 0.03]))
    route = bridge_route(a, b, transit_z=0.20, plan=plan)
    zs = [p.translation[2] for p in route]
    top = max(zs)
    assert top == pytest.approx(0.20)
    for prev, nxt in zip([a] + route, route):
        dz = abs(nxt.translation[2] - prev.translation[2])
        dxy = np.linalg.norm(nxt.translation[:2] - prev.translation[:2])
        assert dz < 1e-9 or dxy < 1e-9  # never both at once
    assert pose_allclose(route[-1], b)


@pytest.fixture(scope="module")
def stack_setup():
    task = get_task("stack")
    rig = fibonacci_cap(num_poses=10)
    rng = np.random.default_rng(100)
    demos = [expert_demonstration(task, sample_scene(task, (), rng), rig, rng)
             for _ in range(3)]
    pools = build_pools(task, demos)
    return task, rig, demos, pools


def test_generate_seed_scene_replay(stack_setup):
    task, rig, demos, pools = stack_setup
    # rebuild the exact scene of seed demo 0 from its recorded segments
    rng = np.random.default_rng(0)
    scene = sample_scene(task, (), np.random.default_rng(1))
    scene.object_placements = {
        "cube_a": demos[0].segments[0].reference_object_pose,
        "cube_b": demos[0].segments[1].reference_object_pose,
    }
    out = generate_episode(task, scene, rig, pools, rng, jitter=None)
    assert not isinstance(out, Failure)
    assert len(out.segments) == len(task.subtasks)
    # the re-anchored segment equals the source: identical reference pose
    src = demos[0].segments[0].ee_poses()
    gen_grasp = out.segments[0]
    tail = [t.ee_pose for t in out.timesteps[gen_grasp.end_idx - len(src):gen_grasp.end_idx]]
    for a, b in zip(tail[-5:], src[-5:]):
        assert pose_allclose(a, b, atol=1e-6)


def test_generate_failure_out_of_reach(stack_setup):
    task, rig, demos, pools = stack_setup
    from scenegen.randomize import EmbodimentSpec, register_embodiment
    register_embodiment(EmbodimentSpec(
        id="test_short_arm", gripper="panda_gripper",
        base_pose=Pose(Rotation.identity(), np.zeros(3)),
        reach_radius=0.30,  # cannot reach the task region
        workspace_min=np.array([0.05, -0.40, -0.12]),
        workspace_max=np.array([0.80, 0.40, 0.60]),
        home_offset=Pose(Rotation.from_axis_angle([math.pi, 0, 0]),
                         np.array([0.10, 0.0, 0.25]))))
    scene = sample_scene(task, (), np.random.default_rng(2))
    scene.embodiment_id = "test_short_arm"
    out = generate_kinematic(task, scene, pools, np.random.default_rng(3))
    assert isinstance(out, Failure)
    assert out.subtask_index == 0


def test_generate_deterministic(stack_setup):
    task, rig, demos, pools = stack_setup

    def run():
        scene = sample_scene(task, (), np.random.default_rng(5))
        return generate_kinematic(task, scene, pools, np.random.default_rng(6))

    a, b = run(), run()
    assert not isinstance(a, Failure)
    assert len(a.timesteps) == len(b.timesteps)
    for ta, tb in zip(a.timesteps, b.timesteps):
        assert np.array_equal(ta.action, tb.action)


def test_generate_success_gated(stack_setup):
    task, rig, demos, pools = stack_setup
    ok = 0
    for s in range(12):
        scene = sample_scene(task, (), np.random.default_rng(200 + s))
        out = generate_kinematic(task, scene, pools, np.random.default_rng(300 + s))
        if isinstance(out, Failure):
            continue
        ok += 1
        assert check_success(task, out.states[-1])
    assert ok >= 9  # default plan keeps most attempts viable


def test_generate_verbatim_continuity(stack_setup):
    # without jitter the stored actions obey the seed expert's step bounds
    task, rig, demos, pools = stack_setup
    scene = sample_scene(task, (), np.random.default_rng(7))
    out = generate_kinematic(task, scene, pools, np.random.default_rng(8),
                             jitter=None)
    assert not isinstance(out, Failure)
    for t in out.timesteps:
        assert np.linalg.norm(t.action[:3]) <= 0.01 + 1e-12
        assert np.linalg.norm(t.action[3:6]) <= 0.05 + 1e-12


def test_generate_jitter_bounded_by_sim_clamps(stack_setup):
    task, rig, demos, pools = stack_setup
    scene = sample_scene(task, (), np.random.default_rng(9))
    out = generate_kinematic(task, scene, pools, np.random.default_rng(10))
    assert not isinstance(out, Failure)
    for t in out.timesteps:
        assert np.linalg.norm(t.action[:3]) <= 0.045 + 1e-12
        assert np.linalg.norm(t.action[3:6]) <= 0.18 + 1e-12


def test_generate_action_roundtrip(stack_setup):
    # stored actions are the executed actions: accumulating them from the
    # initial pose reproduces the recorded pose trace
    task, rig, demos, pools = stack_setup
    scene = sample_scene(task, (), np.random.default_rng(11))
    out = generate_kinematic(task, scene, pools, np.random.default_rng(12))
    assert not isinstance(out, Failure)
    cur = out.timesteps[0].ee_pose
    worst = 0.0
    for t, nxt in zip(out.timesteps, out.timesteps[1:]):
        cur = compose(cur, Pose(Rotation.from_axis_angle(t.action[3:6]), t.action[:3]))
        worst = max(worst, float(np.max(np.abs(cur.translation
                                               - nxt.ee_pose.translation))))
    assert worst <= 1e-6


def test_jitter_validation():
    with pytest.raises(ValueError):
        ReplayJitter(correction_gain=0.0)
    with pytest.raises(ValueError):
        ReplayJitter(disturb_prob=1.5)
    with pytest.raises(ValueError):
        ReplayJitter(grip_blip=0.6)


def test_bridge_plan_validation():
    with pytest.raises(ValueError):
        BridgePlan(min_steps=0)
    with pytest.raises(ValueError):
        BridgePlan(max_pos_step=0.0)
