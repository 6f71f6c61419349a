"""Scene randomization: camera cap lattice, factor samplers, embodiments.

Five independent factors can be randomized per episode: third-person camera
pose (Fibonacci lattice on a spherical cap, cycled by a success-gated
scheduler so every viewpoint collects the same number of episodes), light
RGB intensity, tabletop texture id, table height, and robot embodiment.
Object placements are always randomized; they are the baseline the visual
factors stack on top of.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import yaml

from .posemath import Pose, Rotation

FACTORS = ("camera", "light", "texture", "height", "embodiment")

NUM_TEXTURES = 17
LIGHT_MAX = 0.5

GOLDEN_RATIO_CONJUGATE = (math.sqrt(5.0) - 1.0) / 2.0


class IncompatibleEmbodimentError(RuntimeError):
    """No sampled embodiment could cover the task's placement region."""


# ---------------------------------------------------------------------------
# Camera rig
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CameraRig:
    """Camera poses on a spherical cap around the robot base.

    Polar angles are measured from vertical (+z). Every pose sits at
    ``radius`` from ``center`` and looks at ``center`` (camera +z axis is the
    viewing direction, +x is screen-right with world-up reference).
    """

    center: np.ndarray
    radius: float
    polar_range: Tuple[float, float]
    azimuth_range: Tuple[float, float]
    num_poses: int
    poses: Tuple[Pose, ...]


def _look_at(position: np.ndarray, target: np.ndarray) -> Rotation:
    forward = target - position
    forward = forward / np.linalg.norm(forward)
    up = np.array([0.0, 0.0, 1.0])
    right = np.cross(forward, up)
    n = np.linalg.norm(right)
    if n < 1e-12:
        # camera on the vertical axis; fall back to a fixed reference
        right = np.cross(forward, np.array([1.0, 0.0, 0.0]))
        n = np.linalg.norm(right)
    right = right / n
    down = np.cross(forward, right)
    m = np.column_stack([right, down, forward])
    return Rotation.from_matrix(m)


def fibonacci_cap(center=(0.0, 0.0, 0.0),
                  radius: float = 1.0,
                  polar_range: Tuple[float, float] = (math.radians(20.0), math.radians(70.0)),
                  azimuth_range: Tuple[float, float] = (-math.radians(120.0), math.radians(120.0)),
                  num_poses: int = 100) -> CameraRig:
    """Spread ``num_poses`` cameras area-uniformly over the cap band.

    Index k maps to azimuth ``phi_min + frac(k * g) * span`` (g the golden
    ratio conjugate) and polar angle ``acos(lerp(cos th_min, cos th_max,
    (k + 0.5) / N))``, which is uniform in cap area within the band.
    """
    th_min, th_max = polar_range
    if not (0.0 <= th_min < th_max <= math.pi / 2.0):
        raise ValueError(f"polar range must satisfy 0 <= min < max <= pi/2, got {polar_range}")
    ph_min, ph_max = azimuth_range
    if ph_min >= ph_max:
        raise ValueError(f"azimuth range must be increasing, got {azimuth_range}")
    if radius <= 0.0:
        raise ValueError("radius must be positive")
    if num_poses < 1:
        raise ValueError("num_poses must be >= 1")

    center = np.asarray(center, dtype=float)
    poses = []
    for k in range(num_poses):
        phi = ph_min + ((k * GOLDEN_RATIO_CONJUGATE) % 1.0) * (ph_max - ph_min)
        ct = math.cos(th_min) + ((k + 0.5) / num_poses) * (math.cos(th_max) - math.cos(th_min))
        theta = math.acos(ct)
        position = center + radius * np.array([
            math.sin(theta) * math.cos(phi),
            math.sin(theta) * math.sin(phi),
            math.cos(theta),
        ])
        poses.append(Pose(_look_at(position, center), position))
    return CameraRig(center=center, radius=radius, polar_range=(th_min, th_max),
                     azimuth_range=(ph_min, ph_max), num_poses=num_poses,
                     poses=tuple(poses))


@dataclass
class CameraScheduler:
    """Round-robin camera index, advancing only on successful episodes."""

    num_poses: int
    index: int = 0

    def peek(self) -> int:
        return self.index


def next_camera(scheduler: CameraScheduler, episode_success: bool) -> int:
    """Return the current index; advance to the next pose iff the episode
    succeeded, so every viewpoint ends up with the same usage count."""
    current = scheduler.index
    if episode_success:
        scheduler.index = (current + 1) % scheduler.num_poses
    return current


# ---------------------------------------------------------------------------
# Factor samplers
# ---------------------------------------------------------------------------

def sample_light(rng: np.random.Generator) -> np.ndarray:
    """Per-channel RGB intensity, independent uniform draws in [0, 0.5]."""
    return rng.uniform(0.0, LIGHT_MAX, 3)


def sample_texture(rng: np.random.Generator) -> int:
    """Texture id uniform over the 17 available patterns."""
    return int(rng.integers(0, NUM_TEXTURES))


def sample_table_height(rng: np.random.Generator,
                        height_range: Tuple[float, float] = (-0.05, 0.05)) -> float:
    """Table height delta in meters, uniform over [lo, hi)."""
    return float(rng.uniform(height_range[0], height_range[1]))


# ---------------------------------------------------------------------------
# Embodiments and grippers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GripperSpec:
    """Joint-space limits used to collapse a gripper to one opening scalar."""

    id: str
    closed_joints: np.ndarray
    open_joints: np.ndarray


GRIPPERS: Dict[str, GripperSpec] = {
    "panda_gripper": GripperSpec(
        "panda_gripper",
        closed_joints=np.zeros(2),
        open_joints=np.array([0.04, 0.04])),
    # six mimic-style joints; inner pair counter-rotates when closing
    "robotiq85": GripperSpec(
        "robotiq85",
        closed_joints=np.array([0.8, 0.8, -0.8, 0.8, 0.8, -0.8]),
        open_joints=np.zeros(6)),
}


def map_gripper_to_scalar(joint_vector, gripper_id: str) -> float:
    """Collapse per-joint gripper positions to one opening value in [0, 1].

    0 means fully closed, 1 fully open; the value is the mean of each
    joint's normalized opening, so grippers with different kinematics share
    one action/proprioception axis.
    """
    spec = GRIPPERS.get(gripper_id)
    if spec is None:
        raise KeyError(f"unknown gripper {gripper_id!r}")
    joints = np.asarray(joint_vector, dtype=float)
    if joints.shape != spec.closed_joints.shape:
        raise ValueError(
            f"{gripper_id} expects {spec.closed_joints.shape[0]} joint values, "
            f"got {joints.shape}")
    opening = (joints - spec.closed_joints) / (spec.open_joints - spec.closed_joints)
    return float(np.clip(np.mean(opening), 0.0, 1.0))


@dataclass(frozen=True)
class EmbodimentSpec:
    id: str
    gripper: str
    base_pose: Pose
    reach_radius: float
    workspace_min: np.ndarray  # axis-aligned workspace box, world frame
    workspace_max: np.ndarray
    home_offset: Pose  # end-effector home pose in the base frame

    def __post_init__(self):
        if self.reach_radius <= 0.0:
            raise ValueError("reach_radius must be positive")
        if np.any(np.asarray(self.workspace_max) <= np.asarray(self.workspace_min)):
            raise ValueError("workspace box is empty")

    def home_pose(self) -> Pose:
        from .posemath import compose
        return compose(self.base_pose, self.home_offset)


_TOOL_DOWN = Rotation.from_axis_angle([math.pi, 0.0, 0.0])
_HOME = Pose(_TOOL_DOWN, np.array([0.35, 0.0, 0.30]))


def _arm(arm_id, gripper, base_xy, reach):
    return EmbodimentSpec(
        id=arm_id, gripper=gripper,
        base_pose=Pose(Rotation.identity(), np.array([base_xy[0], base_xy[1], 0.0])),
        reach_radius=reach,
        workspace_min=np.array([0.05, -0.40, -0.12]),
        workspace_max=np.array([0.80, 0.40, 0.60]),
        home_offset=_HOME)


EMBODIMENTS: Dict[str, EmbodimentSpec] = {
    "panda": _arm("panda", "panda_gripper", (0.0, 0.0), 0.855),
    "ur5e": _arm("ur5e", "robotiq85", (-0.02, 0.0), 0.85),
    "iiwa": _arm("iiwa", "robotiq85", (0.0, 0.02), 0.82),
    "kinova3": _arm("kinova3", "robotiq85", (-0.03, 0.0), 0.90),
    "jaco": _arm("jaco", "robotiq85", (0.02, -0.02), 0.75),
}

DEFAULT_EMBODIMENT = "panda"


def get_embodiment(embodiment_id: str) -> EmbodimentSpec:
    spec = EMBODIMENTS.get(embodiment_id)
    if spec is None:
        raise KeyError(f"unknown embodiment {embodiment_id!r}")
    return spec


def register_embodiment(spec: EmbodimentSpec) -> None:
    EMBODIMENTS[spec.id] = spec


def compatible(embodiment: EmbodimentSpec, region,
               height_range: Tuple[float, float] = (-0.05, 0.05)) -> bool:
    """True iff the placement region, at every sampled table height, lies
    strictly within the embodiment's workspace box and reach sphere."""
    base = embodiment.base_pose.translation
    for x in region.x_range:
        for y in region.y_range:
            for z in height_range:
                p = np.array([x, y, z])
                if np.any(p < embodiment.workspace_min) or np.any(p > embodiment.workspace_max):
                    return False
                if np.linalg.norm(p - base) > embodiment.reach_radius:
                    return False
    return True


# ---------------------------------------------------------------------------
# Scene configuration
# ---------------------------------------------------------------------------

@dataclass
class SceneConfig:
    """One sampled assignment of every randomization factor."""

    camera_index: int = 0
    light_rgb: Tuple[float, float, float] = (LIGHT_MAX, LIGHT_MAX, LIGHT_MAX)
    texture_id: int = 0
    table_height_delta: float = 0.0
    embodiment_id: str = DEFAULT_EMBODIMENT
    object_placements: Dict[str, Pose] = field(default_factory=dict)

    def __post_init__(self):
        rgb = tuple(float(c) for c in self.light_rgb)
        if any(not 0.0 <= c <= LIGHT_MAX for c in rgb):
            raise ValueError(f"light_rgb components must be in [0, {LIGHT_MAX}], got {rgb}")
        self.light_rgb = rgb
        if not 0 <= self.texture_id < NUM_TEXTURES:
            raise ValueError(f"texture_id must be in [0, {NUM_TEXTURES}), got {self.texture_id}")
        if self.camera_index < 0:
            raise ValueError("camera_index must be nonnegative")


@dataclass
class RandomizationConfig:
    """Ranges and resources behind the factor samplers (config-file schema)."""

    cap_center: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    cap_radius: float = 1.0
    cap_polar_deg: Tuple[float, float] = (20.0, 70.0)
    cap_azimuth_deg: Tuple[float, float] = (-120.0, 120.0)
    cap_num_poses: int = 100
    height_range: Tuple[float, float] = (-0.05, 0.05)
    embodiments: Tuple[str, ...] = tuple(EMBODIMENTS)

    def build_rig(self) -> CameraRig:
        return fibonacci_cap(
            center=self.cap_center, radius=self.cap_radius,
            polar_range=tuple(math.radians(d) for d in self.cap_polar_deg),
            azimuth_range=tuple(math.radians(d) for d in self.cap_azimuth_deg),
            num_poses=self.cap_num_poses)


def validate_factors(factors) -> Tuple[str, ...]:
    factors = tuple(factors)
    for f in factors:
        if f not in FACTORS:
            raise ValueError(f"unknown randomization factor {f!r}; choose from {FACTORS}")
    return factors


def sample_placements(task, rng: np.random.Generator, table_surface: float) -> Dict[str, Pose]:
    """Uniform object placements in the task region, resting on the table."""
    region = task.region
    placements = {}
    for obj in task.objects:
        x = rng.uniform(*region.x_range)
        y = rng.uniform(*region.y_range)
        yaw = rng.uniform(*region.yaw_range)
        placements[obj.id] = Pose(
            Rotation.from_axis_angle([0.0, 0.0, yaw]),
            np.array([x, y, table_surface + obj.half_height]))
    return placements


def sample_scene(task, factors, rng: np.random.Generator,
                 scheduler: Optional[CameraScheduler] = None,
                 config: Optional[RandomizationConfig] = None) -> SceneConfig:
    """Sample one SceneConfig with only the requested factors randomized.

    Disabled factors keep canonical defaults; object placements are always
    randomized. A scheduler supplies the camera index during data
    collection (peek only; report success via ``next_camera``), otherwise
    the camera index is drawn uniformly, which is the evaluation behavior.
    """
    factors = validate_factors(factors)
    cfg = config or RandomizationConfig()
    scene = SceneConfig()

    if "light" in factors:
        scene.light_rgb = tuple(sample_light(rng))
    if "texture" in factors:
        scene.texture_id = sample_texture(rng)
    if "height" in factors:
        scene.table_height_delta = sample_table_height(rng, cfg.height_range)
    if "embodiment" in factors:
        for _ in range(5):
            candidate = str(rng.choice(list(cfg.embodiments)))
            spec = get_embodiment(candidate)
            if compatible(spec, task.region, cfg.height_range):
                scene.embodiment_id = candidate
                break
        else:
            raise IncompatibleEmbodimentError(
                f"no compatible embodiment for task {task.id!r} after 5 draws")
    if "camera" in factors:
        if scheduler is not None:
            scene.camera_index = scheduler.peek()
        else:
            scene.camera_index = int(rng.integers(0, cfg.cap_num_poses))

    scene.object_placements = sample_placements(task, rng, scene.table_height_delta)
    return scene


# ---------------------------------------------------------------------------
# Config file round-trip
# ---------------------------------------------------------------------------

def load_randomization_config(path) -> RandomizationConfig:
    with open(path, "r", encoding="utf-8") as f:
        raw = yaml.safe_load(f) or {}
    return randomization_config_from_dict(raw)


def randomization_config_from_dict(raw: dict) -> RandomizationConfig:
    cfg = RandomizationConfig()
    known = {f for f in cfg.__dataclass_fields__}
    unknown = set(raw) - known
    if unknown:
        raise ValueError(f"unknown randomization config keys: {sorted(unknown)}")
    updates = {}
    for key, value in raw.items():
        if isinstance(value, list):
            value = tuple(value)
        updates[key] = value
    return replace(cfg, **updates)


def save_randomization_config(cfg: RandomizationConfig, path) -> None:
    raw = {k: (list(v) if isinstance(v, tuple) else v)
           for k, v in cfg.__dict__.items()}
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(raw, f, sort_keys=True)
