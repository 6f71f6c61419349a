"""Synthesize new demonstrations from segmented seed demonstrations.

Each subtask segment of a seed demo is anchored to one reference object.
In a freshly randomized scene the segment is re-anchored by left-composing
``new_object_pose * inverse(source_object_pose)`` onto every end-effector
pose, a short bridge drives the arm from wherever it is to the transformed
segment start, and the segment is replayed. Delta actions live in the
end-effector frame, so verbatim replay exactly reproduces the transformed
pose sequence; by default the replay instead servos along that pose tape,
occasionally kicking the arm sideways and recording the corrective steps
back, so downstream policy training sees states slightly off the nominal
path paired with actions that return to it. The episode still runs through
the sim world and keeps only subtask-verified results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .posemath import (Pose, Rotation, compose, geodesic_distance,
                       interpolate, inverse)
from .randomize import CameraRig, SceneConfig, get_embodiment
from .simworld import (ATTACH_THRESHOLD, DETACH_THRESHOLD, GRIPPER_RATE,
                       LIFT_HEIGHT,
                       MAX_POS_STEP as sim_MAX_POS_STEP,
                       MAX_ROT_STEP as sim_MAX_ROT_STEP,
                       TaskSpec, WorldState, check_subtask, observe, reset, step)
from .trajectory import (SOURCE_GENERATED, Demonstration, EmptyPoolError,
                         SubtaskSegment, Timestep, segment_pool)

# nearest-segment scoring: meters count 10x as much as radians
POSITION_WEIGHT = 1.0   # per meter
ROTATION_WEIGHT = 0.1   # per radian


@dataclass(frozen=True)
class BridgePlan:
    """Step budget for the free-space move onto a transformed segment."""

    max_pos_step: float = 0.01  # m
    max_rot_step: float = 0.05  # rad
    min_steps: int = 1

    def __post_init__(self):
        if self.max_pos_step <= 0 or self.max_rot_step <= 0 or self.min_steps < 1:
            raise ValueError("bridge plan bounds must be positive")


@dataclass(frozen=True)
class ReplayJitter:
    """Disturb-and-correct replay settings.

    Instead of replaying recorded actions verbatim, the generator tracks
    the transformed pose tape (bridge and segment alike) with proportional
    correction and injects an occasional small end-effector kick or
    gripper-command blip. Every stored action is the one actually
    executed, so pose/action consistency is untouched, but the episode now
    contains off-tape states labeled with returning actions — the data a
    closed-loop policy needs in order to fall back toward the nominal path
    instead of compounding its own drift. Disturbances live in transit:
    the whole precision window leading into an attach/detach crossing
    (final descent, close, dwell, and the matching placement approach) is
    kept clean, because a stored kick there becomes a label that pulls
    sampled actions off the grasp just when millimetres matter.
    """

    # Kicks are rare but sizeable: every kicked step stores the disturbed
    # action (storage keeps action/pose consistency), so frequent kicks
    # would teach the policy the disturbance itself along with the
    # recovery. A low rate keeps the label mixture overwhelmingly clean
    # while each kick still yields several clean corrective-step labels.
    correction_gain: float = 0.7   # fraction of pose error removed per step
    disturb_prob: float = 0.08     # per-step kick probability outside quiet zones
    pos_std: float = 0.015         # m, kick translation scale
    pos_max: float = 0.03          # m, hard cap on kick translation
    rot_std: float = 0.01          # rad, kick rotation scale
    rot_max: float = 0.02          # rad, hard cap on kick rotation
    grip_blip_prob: float = 0.03   # per-step gripper-command blip probability
    grip_blip: float = 0.2         # max command deviation per blip
    quiet_steps: int = 3           # disturbance-free tail at segment ends
    precision_steps: int = 14      # clean approach window before each crossing

    def __post_init__(self):
        if not 0.0 < self.correction_gain <= 1.0:
            raise ValueError("correction_gain must be in (0, 1]")
        if not 0.0 <= self.disturb_prob <= 1.0:
            raise ValueError("disturb_prob must be in [0, 1]")
        if not 0.0 <= self.grip_blip < 0.5:
            raise ValueError("grip_blip must leave the detach threshold alone")


@dataclass(frozen=True)
class Failure:
    """A generation attempt that did not survive verification."""

    subtask_index: int
    reason: str


def transform_segment(segment: SubtaskSegment, new_object_pose: Pose) -> List[Pose]:
    """Re-anchor a segment's end-effector poses to a new reference pose.

    Every pose T becomes ``new_object_pose * inverse(ref_pose) * T`` where
    ref_pose is the reference object's pose when the segment was recorded.
    With ``new_object_pose == ref_pose`` this is the identity.
    """
    rel = compose(new_object_pose, inverse(segment.reference_object_pose))
    return [compose(rel, pose) for pose in segment.ee_poses()]


def select_source_segment(pool: Sequence[SubtaskSegment], target_pose: Pose,
                          rng: np.random.Generator,
                          strategy: str = "nearest") -> SubtaskSegment:
    """Pick the seed segment to re-anchor onto ``target_pose``.

    ``nearest`` scores each candidate by the pose gap between its recorded
    reference pose and the target (POSITION_WEIGHT * meters +
    ROTATION_WEIGHT * radians) and takes the minimum, first wins on ties;
    ``uniform`` draws one at random.
    """
    if not pool:
        raise EmptyPoolError("empty segment pool")
    if strategy == "uniform":
        return pool[int(rng.integers(0, len(pool)))]
    if strategy != "nearest":
        raise ValueError(f"unknown selection strategy {strategy!r}")
    best, best_score = None, math.inf
    for seg in pool:
        score = (POSITION_WEIGHT * float(np.linalg.norm(
            seg.reference_object_pose.translation - target_pose.translation))
            + ROTATION_WEIGHT * geodesic_distance(
                seg.reference_object_pose.rotation, target_pose.rotation))
        if score < best_score:
            best, best_score = seg, score
    return best


def build_bridge(start: Pose, goal: Pose, gripper_command: float,
                 plan: BridgePlan = BridgePlan()) -> List[np.ndarray]:
    """Delta actions interpolating from ``start`` to ``goal``.

    Step count is max of the per-axis budgets and ``min_steps``; the last
    action lands exactly on ``goal``. The gripper command is held constant
    so the bridge never changes grasp state.
    """
    waypoints = bridge_waypoints(start, goal, plan)
    actions = []
    prev = start
    for nxt in waypoints:
        delta = compose(inverse(prev), nxt)
        actions.append(np.concatenate([
            delta.translation, delta.rotation.to_axis_angle(), [gripper_command]]))
        prev = nxt
    return actions


def bridge_waypoints(start: Pose, goal: Pose,
                     plan: BridgePlan = BridgePlan()) -> List[Pose]:
    """Interpolated poses from just after ``start`` through ``goal``."""
    dist = float(np.linalg.norm(goal.translation - start.translation))
    ang = geodesic_distance(start.rotation, goal.rotation)
    n = max(plan.min_steps,
            math.ceil(dist / plan.max_pos_step),
            math.ceil(ang / plan.max_rot_step))
    return [interpolate(start, goal, k / n) for k in range(1, n + 1)]


def bridge_route(start: Pose, goal: Pose, transit_z: float,
                 plan: BridgePlan = BridgePlan()) -> List[Pose]:
    """Bridge waypoints routed rise / level / sink through ``transit_z``.

    Same invariant as the scripted experts keep: height only changes while
    horizontally aligned with the leg's endpoint, so replayed episodes
    never teach a policy to fly low across the table. Height-aligned
    endpoints degenerate to a single straight bridge.
    """
    zt = max(start.translation[2], goal.translation[2], transit_z)
    legs: List[Pose] = []
    cur = start
    rise = Pose(cur.rotation, np.array([*cur.translation[:2], zt]))
    if abs(cur.translation[2] - zt) > 1e-9:
        legs += bridge_waypoints(cur, rise, plan)
        cur = rise
    level = Pose(goal.rotation, np.array([*goal.translation[:2], zt]))
    if (np.linalg.norm(level.translation[:2] - cur.translation[:2]) > 1e-9
            or geodesic_distance(cur.rotation, goal.rotation) > 1e-9):
        legs += bridge_waypoints(cur, level, plan)
        cur = level
    if abs(goal.translation[2] - zt) > 1e-9 or not legs:
        legs += bridge_waypoints(cur, goal, plan)
    return legs


@dataclass
class KinematicEpisode:
    """Camera-independent half of a generated episode.

    Observations need the camera pose, which is assigned only after success
    is known; everything else (poses, gripper trace, actions, segment
    boundaries) is fixed here. ``states`` has len(timesteps) + 1 entries.
    """

    timesteps: List[Timestep]
    states: List[WorldState]
    segments: List[Tuple[int, int, str, str, Pose]]  # start, end, subtask, ref id, ref pose
    source_demo_indices: List[int] = field(default_factory=list)


def _within_reach(embodiment, poses: Sequence[Pose]) -> bool:
    base = embodiment.base_pose.translation
    for p in poses:
        t = p.translation
        if np.any(t < embodiment.workspace_min) or np.any(t > embodiment.workspace_max):
            return False
        if np.linalg.norm(t - base) > embodiment.reach_radius:
            return False
    return True


def _action_delta(action: np.ndarray) -> Pose:
    """The EE-frame pose delta encoded by a 7-vector action."""
    return Pose(Rotation.from_axis_angle(action[3:6]),
                np.asarray(action[:3], dtype=float))


def _crossing_mask(start_opening: float, grip_commands: np.ndarray,
                   before: int, after: int, tail: int) -> np.ndarray:
    """True in a window around each attach/detach threshold crossing.

    Servos the opening along the command tape to find the exact steps
    where it crosses a grasp threshold, then blocks ``before`` steps up to
    and ``after`` steps past each crossing, plus the segment tail.
    Everywhere else disturbances stay on — including a gradual pre-grasp
    close, which is precisely where a trained policy needs corrective
    data.
    """
    n = len(grip_commands)
    mask = np.zeros(n, dtype=bool)
    mask[max(0, n - tail):] = True
    o = float(start_opening)
    for t, cmd in enumerate(grip_commands):
        nxt = o + min(GRIPPER_RATE, max(-GRIPPER_RATE, float(cmd) - o))
        if (o >= ATTACH_THRESHOLD > nxt) or (o <= DETACH_THRESHOLD < nxt):
            mask[max(0, t - before):t + after + 1] = True
        o = nxt
    return mask


def _kick(rng: np.random.Generator, jitter: ReplayJitter) -> Pose:
    d = rng.normal(0.0, jitter.pos_std, 3)
    n = float(np.linalg.norm(d))
    if n > jitter.pos_max:
        d *= jitter.pos_max / n
    rv = rng.normal(0.0, jitter.rot_std, 3)
    a = float(np.linalg.norm(rv))
    if a > jitter.rot_max:
        rv *= jitter.rot_max / a
    return Pose(Rotation.from_axis_angle(rv), d)


def _bound_delta(delta: Pose) -> Pose:
    """Scale a pose delta safely inside the sim's per-step clamps.

    The stored action must be the executed action, so nothing here may
    rely on step() truncating for us.
    """
    t, r = delta.translation, delta.rotation
    n = float(np.linalg.norm(t))
    if n > 0.9 * sim_MAX_POS_STEP:
        t = t * (0.9 * sim_MAX_POS_STEP / n)
    rv = r.to_axis_angle()
    a = float(np.linalg.norm(rv))
    if a > 0.9 * sim_MAX_ROT_STEP:
        r = Rotation.from_axis_angle(rv * (0.9 * sim_MAX_ROT_STEP / a))
    return Pose(r, t)


def generate_kinematic(task: TaskSpec, scene: SceneConfig,
                       pools: Dict[str, Sequence[SubtaskSegment]],
                       rng: np.random.Generator,
                       plan: BridgePlan = BridgePlan(),
                       strategy: str = "nearest",
                       jitter: Optional[ReplayJitter] = ReplayJitter(),
                       ) -> Union[KinematicEpisode, Failure]:
    """Run one generation attempt through the sim, without observations.

    Per subtask: re-anchor a selected seed segment to the live reference
    object pose, reject if any target pose leaves the embodiment's
    workspace or reach sphere, bridge to the segment start, replay its
    actions, and verify the subtask predicate on the resulting state.
    With ``jitter`` set (the default) replay follows the transformed pose
    tape closed-loop with occasional kicks; ``jitter=None`` replays the
    recorded actions verbatim.
    """
    embodiment = get_embodiment(scene.embodiment_id)
    try:
        world = reset(task, scene, rng)
    except ValueError as exc:
        return Failure(subtask_index=0, reason=f"reset: {exc}")
    # reset may have resampled overlapping placements; keep the scene honest
    scene.object_placements = dict(world.object_poses)

    timesteps: List[Timestep] = []
    states: List[WorldState] = [world]
    bounds: List[Tuple[int, int, str, str, Pose]] = []

    def apply(action: np.ndarray) -> None:
        nonlocal world
        timesteps.append(Timestep(
            ee_pose=world.ee_pose, gripper_opening=world.gripper_opening,
            observation=None, action=np.asarray(action, dtype=float)))
        world = step(world, action)
        states.append(world)

    def follow(nominal: Sequence[Pose], grips: Sequence[float],
               blip_quiet: np.ndarray, kick_quiet: np.ndarray) -> None:
        """Servo along a pose tape, kicking and correcting as configured.

        ``nominal`` has len(grips) + 1 poses; step t drives from around
        nominal[t] toward nominal[t+1], removing a ``correction_gain``
        fraction of the current off-tape error on the way.
        """
        for t, grip in enumerate(grips):
            err = compose(inverse(nominal[t]), world.ee_pose)
            keep = interpolate(Pose.identity(), err,
                               1.0 - jitter.correction_gain)
            delta = compose(inverse(world.ee_pose),
                            compose(nominal[t + 1], keep))
            g = float(grip)
            if not kick_quiet[t] and rng.random() < jitter.disturb_prob:
                delta = compose(delta, _kick(rng, jitter))
            if not blip_quiet[t] and rng.random() < jitter.grip_blip_prob:
                g = float(np.clip(
                    g + rng.uniform(-jitter.grip_blip, jitter.grip_blip),
                    0.0, 1.0))
            delta = _bound_delta(delta)
            apply(np.concatenate([delta.translation,
                                  delta.rotation.to_axis_angle(), [g]]))

    for i, signal in enumerate(task.subtasks):
        seg_start = len(timesteps)
        ref_pose = world.object_poses[signal.reference_object_id]
        pool = pools[signal.subtask_id]
        source = select_source_segment(pool, ref_pose, rng, strategy)
        targets = transform_segment(source, ref_pose)
        if not _within_reach(embodiment, targets):
            return Failure(subtask_index=i, reason="transformed segment leaves workspace")

        steps = source.timesteps()
        # hold the upcoming segment's opening intent across the bridge; the
        # live opening can sit a hair past a threshold and would smear an
        # ambiguous command over the whole free-space move
        hold = float(steps[0].action[6])
        route = bridge_route(world.ee_pose, targets[0],
                             world.table_height + LIFT_HEIGHT, plan)
        if jitter is None:
            prev = world.ee_pose
            for nxt in route:
                delta = compose(inverse(prev), nxt)
                apply(np.concatenate([delta.translation,
                                      delta.rotation.to_axis_angle(), [hold]]))
                prev = nxt
            for t in steps:
                apply(t.action)
        else:
            b_quiet = np.zeros(len(route), dtype=bool)
            b_quiet[max(0, len(route) - jitter.quiet_steps):] = True
            follow([world.ee_pose, *route], [hold] * len(route), b_quiet, b_quiet)

            grips = np.array([t.action[6] for t in steps])
            tape = [*targets, compose(targets[-1], _action_delta(steps[-1].action))]
            q = jitter.quiet_steps
            clean = _crossing_mask(world.gripper_opening, grips,
                                   jitter.precision_steps, 2 * q, q)
            follow(tape, grips, clean, clean)
        if not check_subtask(task, i, world):
            return Failure(subtask_index=i, reason="subtask predicate not satisfied")
        bounds.append((seg_start, len(timesteps), signal.subtask_id,
                       signal.reference_object_id, ref_pose))

    if not task.success(world):
        return Failure(subtask_index=len(task.subtasks) - 1,
                       reason="task success predicate not satisfied")
    return KinematicEpisode(timesteps=timesteps, states=states, segments=bounds)


def finalize_episode(kin: KinematicEpisode, scene: SceneConfig, rig: CameraRig,
                     ) -> Demonstration:
    """Attach camera-frame observations to a kinematic episode."""
    steps = [Timestep(ee_pose=t.ee_pose, gripper_opening=t.gripper_opening,
                      observation=observe(state, scene, rig), action=t.action)
             for t, state in zip(kin.timesteps, kin.states[:-1])]
    segments = [SubtaskSegment(start_idx=s, end_idx=e, subtask_id=sid,
                               reference_object_id=oid, reference_object_pose=pose)
                for s, e, sid, oid, pose in kin.segments]
    return Demonstration(steps, segments, embodiment_id=scene.embodiment_id,
                         source=SOURCE_GENERATED)


def generate_episode(task: TaskSpec, scene: SceneConfig, rig: CameraRig,
                     pools: Dict[str, Sequence[SubtaskSegment]],
                     rng: np.random.Generator,
                     plan: BridgePlan = BridgePlan(),
                     strategy: str = "nearest",
                     jitter: Optional[ReplayJitter] = ReplayJitter(),
                     ) -> Union[Demonstration, Failure]:
    """One-shot generation attempt: kinematics plus observations."""
    kin = generate_kinematic(task, scene, pools, rng, plan, strategy, jitter)
    if isinstance(kin, Failure):
        return kin
    return finalize_episode(kin, scene, rig)


def build_pools(task: TaskSpec, demos: Sequence[Demonstration],
                ) -> Dict[str, List[SubtaskSegment]]:
    """Per-subtask segment pools drawn from seed demonstrations."""
    return {sig.subtask_id: segment_pool(demos, sig.subtask_id)
            for sig in task.subtasks}
