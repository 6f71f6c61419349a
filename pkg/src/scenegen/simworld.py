"""Kinematic tabletop manipulation world.

No dynamics: the end effector tracks pose deltas exactly (clamped to step
bounds), grasping is modeled as rigid attachment with a hysteresis band on
the gripper opening, and released objects settle instantly onto whatever
support lies under their center. This keeps pick / place / insert geometry
honest while staying fast enough to mass-generate demonstrations.

World frame: the default robot base sits at the origin, the nominal table
surface is z = 0, and table height deltas move the surface relative to the
robot. Observations are feature vectors: end-effector and object poses
projected into the active camera frame (3 translation + 6 rotation numbers
each), gripper opening, light RGB, texture one-hot, and table height delta.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import yaml

from . import randomize
from .posemath import (Pose, Rotation, compose, geodesic_distance,
                       interpolate, inverse)
from .randomize import CameraRig, SceneConfig, get_embodiment
from .trajectory import (ACTION_DIM, Demonstration, SubtaskSignal, Timestep,
                         segment_demonstration)

# step bounds and grasp model
MAX_POS_STEP = 0.05     # m per step, larger deltas are clamped
MAX_ROT_STEP = 0.2      # rad per step
GRIPPER_RATE = 0.2      # max opening change per step
ATTACH_THRESHOLD = 0.1  # attach fires when opening crosses below
DETACH_THRESHOLD = 0.5  # detach fires when opening crosses above
GRASP_RADIUS = 0.01     # m, grasp point must be this close to ee
SETTLE_TOL = 1e-6       # resting-height tolerance in success predicates
TABLE_EPS = 1e-6


class PlacementError(ValueError):
    """Scene placements violate the task region or cannot be de-overlapped."""


# ---------------------------------------------------------------------------
# Task description
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ObjectSpec:
    id: str
    shape: str  # box | ring | post
    # box: (hx, hy, hz) half extents; ring: (ring_radius, tube_radius);
    # post: (radius, height)
    size: Tuple[float, ...]
    graspable: bool = True

    @property
    def half_height(self) -> float:
        if self.shape == "box":
            return self.size[2]
        if self.shape == "ring":
            return self.size[1]
        if self.shape == "post":
            return self.size[1] / 2.0
        raise ValueError(f"unknown shape {self.shape!r}")

    @property
    def footprint_radius(self) -> float:
        if self.shape == "box":
            return math.hypot(self.size[0], self.size[1])
        if self.shape == "ring":
            return self.size[0] + self.size[1]
        if self.shape == "post":
            return self.size[0]
        raise ValueError(f"unknown shape {self.shape!r}")

    def grasp_local(self) -> np.ndarray:
        """Grasp point in the object frame (rim for rings, center for boxes)."""
        if self.shape == "ring":
            return np.array([self.size[0], 0.0, 0.0])
        return np.zeros(3)


@dataclass(frozen=True)
class PlacementRegion:
    x_range: Tuple[float, float]
    y_range: Tuple[float, float]
    yaw_range: Tuple[float, float]

    def contains_xy(self, x: float, y: float) -> bool:
        return (self.x_range[0] <= x <= self.x_range[1]
                and self.y_range[0] <= y <= self.y_range[1])


@dataclass(frozen=True)
class TaskSpec:
    id: str
    objects: Tuple[ObjectSpec, ...]
    region: PlacementRegion
    subtasks: Tuple[SubtaskSignal, ...]
    success: Callable[["WorldState"], bool]

    def object(self, object_id: str) -> ObjectSpec:
        for obj in self.objects:
            if obj.id == object_id:
                return obj
        raise KeyError(f"task {self.id!r} has no object {object_id!r}")


# ---------------------------------------------------------------------------
# World state
# ---------------------------------------------------------------------------

@dataclass
class WorldState:
    task: TaskSpec = field(repr=False)
    object_poses: Dict[str, Pose]
    ee_pose: Pose
    gripper_opening: float
    table_height: float  # absolute table surface z
    attached_object: Optional[str] = None
    attach_rel: Optional[Pose] = None  # attached pose in the ee frame
    time_index: int = 0


def grasp_point(task: TaskSpec, object_id: str, pose: Pose) -> np.ndarray:
    return pose.apply(task.object(object_id).grasp_local())


def _overlapping(task: TaskSpec, placements: Dict[str, Pose]) -> bool:
    ids = [o.id for o in task.objects]
    for i in range(len(ids)):
        for j in range(i + 1, len(ids)):
            a, b = task.object(ids[i]), task.object(ids[j])
            d = np.linalg.norm(placements[ids[i]].translation[:2]
                               - placements[ids[j]].translation[:2])
            if d < a.footprint_radius + b.footprint_radius:
                return True
    return False


def reset(task: TaskSpec, scene: SceneConfig,
          rng: Optional[np.random.Generator] = None) -> WorldState:
    """Fresh world: objects at the scene placements resting on the table,
    end effector at the embodiment home pose, nothing attached.

    Overlapping placements are resampled from the task region (up to 20
    tries) when an rng is provided; the final placements are readable from
    the returned state.
    """
    surface = scene.table_height_delta
    placements = dict(scene.object_placements)
    missing = [o.id for o in task.objects if o.id not in placements]
    if missing:
        raise PlacementError(f"scene is missing placements for {missing}")
    for obj in task.objects:
        p = placements[obj.id]
        x, y = p.translation[:2]
        if not task.region.contains_xy(x, y):
            raise PlacementError(
                f"object {obj.id!r} placed at ({x:.3f}, {y:.3f}) outside the task region")
        # enforce resting contact regardless of the z the sampler wrote
        placements[obj.id] = Pose(p.rotation, np.array([x, y, surface + obj.half_height]))

    tries = 0
    while _overlapping(task, placements):
        if rng is None or tries >= 20:
            raise PlacementError("could not find non-overlapping placements")
        placements = randomize.sample_placements(task, rng, surface)
        tries += 1

    embodiment = get_embodiment(scene.embodiment_id)
    ordered = {o.id: placements[o.id] for o in task.objects}
    return WorldState(task=task, object_poses=ordered,
                      ee_pose=embodiment.home_pose(),
                      gripper_opening=1.0, table_height=surface)


def step(state: WorldState, action) -> WorldState:
    """Apply one delta-pose + gripper action. Deltas beyond the per-step
    bounds are scaled down with a warning; gripper opening servos toward the
    command at a bounded rate. Attachment fires on the closing edge when a
    grasp point is within reach, release on the opening edge settles the
    object onto its support."""
    a = np.asarray(action, dtype=float)
    if a.shape != (ACTION_DIM,):
        raise ValueError(f"action must have shape ({ACTION_DIM},), got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("action components must be finite")

    dt = a[:3].copy()
    dr = a[3:6].copy()
    n = np.linalg.norm(dt)
    if n > MAX_POS_STEP * (1.0 + 1e-9):
        warnings.warn(f"translation step {n:.4f} m clamped to {MAX_POS_STEP}")
        dt *= MAX_POS_STEP / n
    ang = np.linalg.norm(dr)
    if ang > MAX_ROT_STEP * (1.0 + 1e-9):
        warnings.warn(f"rotation step {ang:.4f} rad clamped to {MAX_ROT_STEP}")
        dr *= MAX_ROT_STEP / ang
    grip_cmd = min(1.0, max(0.0, a[6]))

    ee = compose(state.ee_pose, Pose(Rotation.from_axis_angle(dr), dt))
    poses = dict(state.object_poses)
    attached = state.attached_object
    attach_rel = state.attach_rel
    if attached is not None:
        poses[attached] = compose(ee, attach_rel)

    prev = state.gripper_opening
    opening = prev + min(GRIPPER_RATE, max(-GRIPPER_RATE, grip_cmd - prev))

    if attached is None and prev >= ATTACH_THRESHOLD > opening:
        best, best_d = None, GRASP_RADIUS
        for obj in state.task.objects:
            if not obj.graspable:
                continue
            d = float(np.linalg.norm(
                grasp_point(state.task, obj.id, poses[obj.id]) - ee.translation))
            if d <= best_d:
                best, best_d = obj.id, d
        if best is not None:
            attached = best
            attach_rel = compose(inverse(ee), poses[best])
    elif attached is not None and prev <= DETACH_THRESHOLD < opening:
        poses[attached] = _settle(state.task, attached, poses, state.table_height)
        attached = None
        attach_rel = None

    return WorldState(task=state.task, object_poses=poses, ee_pose=ee,
                      gripper_opening=opening, table_height=state.table_height,
                      attached_object=attached, attach_rel=attach_rel,
                      time_index=state.time_index + 1)


def _settle(task: TaskSpec, object_id: str, poses: Dict[str, Pose],
            surface: float) -> Pose:
    """Drop an object straight down onto the highest support under its
    center (another object's top face, a post it lands on, or the table).
    A ring whose hole clears a post slides down the post to the table."""
    falling = task.object(object_id)
    pose = poses[object_id]
    x, y = pose.translation[:2]
    support_top = surface
    for other in task.objects:
        if other.id == object_id:
            continue
        opose = poses[other.id]
        dx, dy = x - opose.translation[0], y - opose.translation[1]
        dist = math.hypot(dx, dy)
        top = opose.translation[2] + other.half_height
        if other.shape == "box":
            if dist <= min(other.size[0], other.size[1]):
                support_top = max(support_top, top)
        elif other.shape == "post":
            if falling.shape == "ring":
                inner = falling.size[0] - falling.size[1]
                if dist <= inner - other.size[0]:
                    continue  # hole clears the post: slides to the table
            if dist <= other.size[0] + (falling.footprint_radius
                                        if falling.shape == "ring" else 0.0):
                support_top = max(support_top, top)
    z = support_top + falling.half_height
    return Pose(pose.rotation, np.array([x, y, z]))


# ---------------------------------------------------------------------------
# Observations
# ---------------------------------------------------------------------------

def _pose_block(pose: Pose) -> np.ndarray:
    m = pose.rotation.to_matrix()
    return np.concatenate([pose.translation, m[:, 0], m[:, 1]])


def observation_dim(task: TaskSpec) -> int:
    return 9 + 1 + 12 * len(task.objects) + 3 + randomize.NUM_TEXTURES + 1


def observe(state: WorldState, scene: SceneConfig, rig: CameraRig) -> np.ndarray:
    """Feature-vector observation in the active camera frame.

    Layout: ee pose block (9), gripper opening (1), one pose block per
    object in task order (9 each), one ee-relative position per object
    (3 each), light RGB (3), texture one-hot (17), table height delta
    (1). Pose blocks are 3 translation + the first two rotation-matrix
    columns, all expressed in the camera frame; the relative blocks are
    camera-frame object positions minus the camera-frame ee position,
    spelled out so a small policy head doesn't have to synthesize
    object-reaching offsets from two absolute blocks.
    """
    if scene.camera_index >= rig.num_poses:
        raise ValueError(
            f"camera index {scene.camera_index} out of range for rig of {rig.num_poses}")
    cam_inv = inverse(rig.poses[scene.camera_index])
    ee_block = _pose_block(compose(cam_inv, state.ee_pose))
    parts = [ee_block, np.array([state.gripper_opening])]
    rel_parts = []
    for object_id, pose in state.object_poses.items():
        block = _pose_block(compose(cam_inv, pose))
        parts.append(block)
        rel_parts.append(block[:3] - ee_block[:3])
    parts.extend(rel_parts)
    parts.append(np.asarray(scene.light_rgb, dtype=float))
    one_hot = np.zeros(randomize.NUM_TEXTURES)
    one_hot[scene.texture_id] = 1.0
    parts.append(one_hot)
    parts.append(np.array([scene.table_height_delta]))
    return np.concatenate(parts)


# ---------------------------------------------------------------------------
# Predicates
# ---------------------------------------------------------------------------

def _stacked(state: WorldState, top_id: str, bottom_id: str) -> bool:
    top = state.task.object(top_id)
    bottom = state.task.object(bottom_id)
    tp = state.object_poses[top_id].translation
    bp = state.object_poses[bottom_id].translation
    if math.hypot(tp[0] - bp[0], tp[1] - bp[1]) > min(bottom.size[0], bottom.size[1]):
        return False
    expected_z = bp[2] + bottom.half_height + top.half_height
    if abs(tp[2] - expected_z) > SETTLE_TOL:
        return False
    return state.attached_object != top_id


def _inserted(state: WorldState, ring_id: str, post_id: str) -> bool:
    ring = state.task.object(ring_id)
    post = state.task.object(post_id)
    rp = state.object_poses[ring_id].translation
    pp = state.object_poses[post_id].translation
    inner = ring.size[0] - ring.size[1]
    if math.hypot(rp[0] - pp[0], rp[1] - pp[1]) > inner:
        return False
    post_top = pp[2] + post.half_height
    if rp[2] >= post_top:
        return False
    return state.attached_object != ring_id


def _grasped(state: WorldState, object_id: str) -> bool:
    return state.attached_object == object_id


def check_success(task: TaskSpec, state: WorldState) -> bool:
    return task.success(state)


def check_subtask(task: TaskSpec, subtask_idx: int, state: WorldState) -> bool:
    return task.subtasks[subtask_idx].predicate(state)


# ---------------------------------------------------------------------------
# Declarative task definitions
# ---------------------------------------------------------------------------

def _build_predicate(kind: str, args: Sequence[str]) -> Callable[[WorldState], bool]:
    if kind == "grasped":
        (obj,) = args
        return lambda s: _grasped(s, obj)
    if kind == "stacked":
        top, bottom = args
        return lambda s: _stacked(s, top, bottom)
    if kind == "inserted":
        ring, post = args
        return lambda s: _inserted(s, ring, post)
    raise ValueError(f"unknown predicate kind {kind!r}")


def task_from_config(raw: dict) -> TaskSpec:
    """Build a TaskSpec from a declarative description (dict or YAML).

    Expected keys: id; objects (id, shape, size, graspable); region
    (x, y, yaw ranges); subtasks (id, reference object, predicate spec);
    success (list of predicate specs, all must hold).
    """
    objects = tuple(ObjectSpec(id=o["id"], shape=o["shape"],
                               size=tuple(float(v) for v in o["size"]),
                               graspable=bool(o.get("graspable", True)))
                    for o in raw["objects"])
    region = PlacementRegion(
        x_range=tuple(float(v) for v in raw["region"]["x"]),
        y_range=tuple(float(v) for v in raw["region"]["y"]),
        yaw_range=tuple(float(v) for v in raw["region"]["yaw"]))
    subtasks = tuple(SubtaskSignal(
        subtask_id=s["id"],
        reference_object_id=s["object"],
        predicate=_build_predicate(s["predicate"][0], s["predicate"][1:]))
        for s in raw["subtasks"])
    success_terms = [_build_predicate(p[0], p[1:]) for p in raw["success"]]
    success = lambda state: all(term(state) for term in success_terms)
    return TaskSpec(id=raw["id"], objects=objects, region=region,
                    subtasks=subtasks, success=success)


def load_task_config(path) -> TaskSpec:
    with open(path, "r", encoding="utf-8") as f:
        return task_from_config(yaml.safe_load(f))


_REGION = {"x": [0.35, 0.55], "y": [-0.12, 0.12], "yaw": [-math.pi / 4, math.pi / 4]}

_TASK_CONFIGS = {
    "stack": {
        "id": "stack",
        "objects": [
            {"id": "cube_a", "shape": "box", "size": [0.02, 0.02, 0.02]},
            {"id": "cube_b", "shape": "box", "size": [0.025, 0.025, 0.025]},
        ],
        "region": _REGION,
        "subtasks": [
            {"id": "grasp_a", "object": "cube_a", "predicate": ["grasped", "cube_a"]},
            {"id": "place_a_on_b", "object": "cube_b",
             "predicate": ["stacked", "cube_a", "cube_b"]},
        ],
        "success": [["stacked", "cube_a", "cube_b"]],
    },
    "stack_three": {
        "id": "stack_three",
        "objects": [
            {"id": "cube_a", "shape": "box", "size": [0.018, 0.018, 0.018]},
            {"id": "cube_b", "shape": "box", "size": [0.022, 0.022, 0.022]},
            {"id": "cube_c", "shape": "box", "size": [0.026, 0.026, 0.026]},
        ],
        "region": _REGION,
        "subtasks": [
            {"id": "grasp_b", "object": "cube_b", "predicate": ["grasped", "cube_b"]},
            {"id": "place_b_on_c", "object": "cube_c",
             "predicate": ["stacked", "cube_b", "cube_c"]},
            {"id": "grasp_a", "object": "cube_a", "predicate": ["grasped", "cube_a"]},
            {"id": "place_a_on_b", "object": "cube_b",
             "predicate": ["stacked", "cube_a", "cube_b"]},
        ],
        "success": [["stacked", "cube_b", "cube_c"], ["stacked", "cube_a", "cube_b"]],
    },
    "square_post": {
        "id": "square_post",
        "objects": [
            {"id": "ring", "shape": "ring", "size": [0.035, 0.008]},
            {"id": "post", "shape": "post", "size": [0.012, 0.10], "graspable": False},
        ],
        "region": _REGION,
        "subtasks": [
            {"id": "grasp_ring", "object": "ring", "predicate": ["grasped", "ring"]},
            {"id": "insert_ring", "object": "post",
             "predicate": ["inserted", "ring", "post"]},
        ],
        "success": [["inserted", "ring", "post"]],
    },
}

TASK_IDS = tuple(_TASK_CONFIGS)
_TASKS = {name: task_from_config(cfg) for name, cfg in _TASK_CONFIGS.items()}


def get_task(task_id: str) -> TaskSpec:
    task = _TASKS.get(task_id)
    if task is None:
        raise KeyError(f"unknown task {task_id!r}; available: {TASK_IDS}")
    return task


# ---------------------------------------------------------------------------
# Scripted experts (synthetic seed demonstrations)
# ---------------------------------------------------------------------------

EXPERT_POS_STEP = 0.01
EXPERT_ROT_STEP = 0.05
HOVER_CLEARANCE = 0.10
LIFT_HEIGHT = 0.15
PLACE_GAP = 0.004


class ExpertTrace:
    """Accumulates (timestep, state) pairs while an expert drives the world."""

    def __init__(self, world: WorldState, scene: SceneConfig, rig: CameraRig):
        self.scene = scene
        self.rig = rig
        self.world = world
        self.timesteps: List[Timestep] = []
        self.states: List[WorldState] = [world]

    def act(self, target: Pose, grip_cmd: float) -> None:
        cur = self.world.ee_pose
        rel = compose(inverse(cur), target)
        action = np.concatenate([
            rel.translation, rel.rotation.to_axis_angle(), [grip_cmd]])
        obs = observe(self.world, self.scene, self.rig)
        self.timesteps.append(Timestep(
            ee_pose=cur, gripper_opening=self.world.gripper_opening,
            observation=obs, action=action))
        self.world = step(self.world, action)
        self.states.append(self.world)

    def move_to(self, target: Pose, grip_cmd: float,
                pos_step: float = EXPERT_POS_STEP,
                rot_step: float = EXPERT_ROT_STEP) -> None:
        cur = self.world.ee_pose
        d = float(np.linalg.norm(target.translation - cur.translation))
        ang = geodesic_distance(cur.rotation, target.rotation)
        n = max(1, math.ceil(d / pos_step), math.ceil(ang / rot_step))
        for k in range(1, n + 1):
            self.act(interpolate(cur, target, k / n), grip_cmd)

    def travel_to(self, target: Pose, grip_cmd: float,
                  transit_z: Optional[float] = None) -> None:
        """Free-space move decomposed into rise, level travel, and sink.

        Keeps a trajectory-wide invariant the learned policies rely on:
        the arm only changes height while horizontally aligned with where
        it is going, so "low and far from the target" never appears in
        the data. Rotation happens during the level leg.
        """
        cur = self.world.ee_pose
        if transit_z is None:
            transit_z = self.world.table_height + LIFT_HEIGHT
        zt = max(cur.translation[2], target.translation[2], transit_z)
        if abs(cur.translation[2] - zt) > 1e-9:
            self.move_to(Pose(cur.rotation, np.array(
                [*cur.translation[:2], zt])), grip_cmd)
        cur = self.world.ee_pose
        level = Pose(target.rotation, np.array([*target.translation[:2], zt]))
        self.move_to(level, grip_cmd)
        if abs(target.translation[2] - zt) > 1e-9:
            self.move_to(target, grip_cmd)

    def close_gripper(self) -> None:
        # Command the next rung of the servo ladder instead of 0.0 outright:
        # the grip label stays a linear function of the observed opening all
        # the way down, which a smoothing regressor can follow without
        # rounding a cliff into an early (or never-finished) close.
        while self.world.gripper_opening >= ATTACH_THRESHOLD:
            self.act(self.world.ee_pose,
                     max(0.0, self.world.gripper_opening - GRIPPER_RATE))

    def open_gripper(self) -> None:
        while self.world.gripper_opening <= DETACH_THRESHOLD:
            self.act(self.world.ee_pose, 1.0)


def _tool_pose(position, yaw: float = 0.0) -> Pose:
    rot = Rotation.from_axis_angle([0.0, 0.0, yaw]).multiply(
        Rotation.from_axis_angle([math.pi, 0.0, 0.0]))
    return Pose(rot, np.asarray(position, dtype=float))


def _yaw_of(pose: Pose) -> float:
    m = pose.rotation.to_matrix()
    return math.atan2(m[1, 0], m[0, 0])


def _expert_grasp(trace: ExpertTrace, object_id: str) -> None:
    world = trace.world
    pose = world.object_poses[object_id]
    gp = grasp_point(world.task, object_id, pose)
    yaw = _yaw_of(pose)
    trace.travel_to(_tool_pose(gp + [0.0, 0.0, HOVER_CLEARANCE], yaw), 1.0)
    # Descend with the opening ramped 1.0 -> 0.4 in lockstep with height,
    # then finish the close stationary at the grasp point. The ramp gives
    # a learned policy a height-locked countdown while keeping the opening
    # far from the attach threshold at every off-target state — a policy
    # fitting a smoothed version of this profile still cannot cross the
    # threshold until it is deep inside the grasp ball. The stationary
    # close puts the crossing at a dead stop, so close timing can slop a
    # step or two without moving where the grasp actually fires.
    target = _tool_pose(gp, yaw)
    cur = trace.world.ee_pose
    d = float(np.linalg.norm(target.translation - cur.translation))
    n = max(1, math.ceil(d / EXPERT_POS_STEP))
    for k in range(1, n + 1):
        cmd = 0.4 + 0.6 * (n - k) / n
        trace.act(interpolate(cur, target, k / n), cmd)
    trace.close_gripper()
    for _ in range(6):
        trace.act(trace.world.ee_pose, 0.0)


def _carry_target(world: WorldState, carried_id: str, center_target) -> Pose:
    """EE pose that puts the carried object's center at ``center_target``
    without changing the current tool orientation."""
    rel = compose(inverse(world.ee_pose), world.object_poses[carried_id])
    offset = world.ee_pose.rotation.rotate(rel.translation)
    return Pose(world.ee_pose.rotation, np.asarray(center_target) - offset)


def _expert_place_on(trace: ExpertTrace, carried: str, target: str) -> None:
    world = trace.world
    surface = world.table_height
    lift_z = surface + LIFT_HEIGHT
    ee = world.ee_pose
    trace.move_to(Pose(ee.rotation, np.array([*ee.translation[:2], lift_z])), 0.0)
    tpose = trace.world.object_poses[target].translation
    tspec = world.task.object(target)
    cspec = world.task.object(carried)
    stack_z = tpose[2] + tspec.half_height + cspec.half_height
    above = [tpose[0], tpose[1], lift_z]
    trace.move_to(_carry_target(trace.world, carried, above), 0.0)
    drop = [tpose[0], tpose[1], stack_z + PLACE_GAP]
    trace.move_to(_carry_target(trace.world, carried, drop), 0.0)
    trace.open_gripper()


def _expert_insert(trace: ExpertTrace, carried: str, post_id: str) -> None:
    world = trace.world
    surface = world.table_height
    lift_z = surface + LIFT_HEIGHT
    ee = world.ee_pose
    trace.move_to(Pose(ee.rotation, np.array([*ee.translation[:2], lift_z])), 0.0)
    post = trace.world.object_poses[post_id].translation
    pspec = world.task.object(post_id)
    cspec = world.task.object(carried)
    post_top = post[2] + pspec.half_height
    above = [post[0], post[1], max(lift_z, post_top + 0.06)]
    trace.move_to(_carry_target(trace.world, carried, above), 0.0)
    drop = [post[0], post[1], post_top + cspec.half_height + PLACE_GAP]
    trace.move_to(_carry_target(trace.world, carried, drop), 0.0)
    trace.open_gripper()


_EXPERT_STEPS = {
    "stack": [("grasp", "cube_a"), ("place", "cube_a", "cube_b")],
    "stack_three": [("grasp", "cube_b"), ("place", "cube_b", "cube_c"),
                    ("grasp", "cube_a"), ("place", "cube_a", "cube_b")],
    "square_post": [("grasp", "ring"), ("insert", "ring", "post")],
}


def scripted_expert_demo(task: TaskSpec, scene: SceneConfig, rig: CameraRig,
                         rng: Optional[np.random.Generator] = None
                         ) -> Tuple[List[Timestep], List[WorldState]]:
    """Drive the scripted expert through one episode and return the raw
    (timestep, state) trace; segmentation is the caller's job."""
    plan = _EXPERT_STEPS.get(task.id)
    if plan is None:
        raise KeyError(f"no scripted expert for task {task.id!r}")
    world = reset(task, scene, rng)
    trace = ExpertTrace(world, scene, rig)
    for op in plan:
        if op[0] == "grasp":
            _expert_grasp(trace, op[1])
        elif op[0] == "place":
            _expert_place_on(trace, op[1], op[2])
        elif op[0] == "insert":
            _expert_insert(trace, op[1], op[2])
    return trace.timesteps, trace.states


def expert_demonstration(task: TaskSpec, scene: SceneConfig, rig: CameraRig,
                         rng: Optional[np.random.Generator] = None) -> Demonstration:
    """Scripted expert episode, segmented into the task's subtask layout."""
    timesteps, states = scripted_expert_demo(task, scene, rig, rng)
    return segment_demonstration(timesteps, states, task.subtasks,
                                 embodiment_id=scene.embodiment_id)
