"""Demonstration containers and object-centric subtask segmentation.

A demonstration is a sequence of (state, observation, action) timesteps plus
a contiguous partition into subtask segments, each anchored to the pose one
reference object had when the segment began.

Actions are 7-vectors: a delta pose expressed in the end-effector frame
(3 translation meters + 3 axis-angle radians) followed by a gripper command
in [0, 1]. Applying timestep t's delta to its state pose yields timestep
t+1's state pose, so absolute targets are recoverable by forward
accumulation from the first state.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from .posemath import Pose

ACTION_DIM = 7

SOURCE_HUMAN_SEED = "human_seed"
SOURCE_GENERATED = "generated"


class SegmentationError(ValueError):
    """A subtask termination signal never fired."""


class EmptyPoolError(LookupError):
    """No segments available for the requested subtask."""


@dataclass(frozen=True)
class Timestep:
    ee_pose: Pose
    gripper_opening: float
    observation: np.ndarray
    action: np.ndarray  # (7,) delta pose + gripper command

    def __post_init__(self):
        a = np.asarray(self.action, dtype=float)
        if a.shape != (ACTION_DIM,):
            raise ValueError(f"action must have shape ({ACTION_DIM},), got {a.shape}")
        g = float(self.gripper_opening)
        if not 0.0 <= g <= 1.0:
            raise ValueError(f"gripper_opening must be in [0, 1], got {g}")
        if not 0.0 <= a[6] <= 1.0:
            raise ValueError(f"gripper command must be in [0, 1], got {a[6]}")
        object.__setattr__(self, "action", a)
        object.__setattr__(self, "gripper_opening", g)


@dataclass
class SubtaskSegment:
    """Half-open timestep range [start_idx, end_idx) anchored to one object."""

    start_idx: int
    end_idx: int
    subtask_id: str
    reference_object_id: str
    reference_object_pose: Pose  # object pose in world frame at start_idx
    demo: Optional["Demonstration"] = field(default=None, repr=False)

    def __post_init__(self):
        if self.end_idx <= self.start_idx:
            raise ValueError(
                f"segment [{self.start_idx}, {self.end_idx}) is empty")

    def __len__(self) -> int:
        return self.end_idx - self.start_idx

    def timesteps(self) -> List[Timestep]:
        if self.demo is None:
            raise ValueError("segment has no source demonstration attached")
        return self.demo.timesteps[self.start_idx:self.end_idx]

    def ee_poses(self) -> List[Pose]:
        return [t.ee_pose for t in self.timesteps()]


@dataclass
class Demonstration:
    timesteps: List[Timestep]
    segments: List[SubtaskSegment]
    embodiment_id: str
    source: str  # SOURCE_HUMAN_SEED or SOURCE_GENERATED

    def __post_init__(self):
        if self.source not in (SOURCE_HUMAN_SEED, SOURCE_GENERATED):
            raise ValueError(f"unknown demonstration source {self.source!r}")
        if not self.segments:
            raise ValueError("demonstration needs at least one segment")
        cursor = 0
        for seg in self.segments:
            if seg.start_idx != cursor:
                raise ValueError(
                    f"segments must partition [0, {len(self.timesteps)}) "
                    f"contiguously; gap/overlap at index {seg.start_idx}")
            cursor = seg.end_idx
            seg.demo = self
        if cursor != len(self.timesteps):
            raise ValueError(
                f"segments end at {cursor}, expected {len(self.timesteps)}")

    def __len__(self) -> int:
        return len(self.timesteps)


@dataclass(frozen=True)
class SubtaskSignal:
    """One subtask's identity plus its rule-based termination predicate.

    The predicate is a pure function of a sim world state; it returns True
    once the subtask is complete. Predicates are registered per task by the
    sim world; this module only evaluates them.
    """

    subtask_id: str
    reference_object_id: str
    predicate: Callable[[object], bool]


def segment_demonstration(timesteps: Sequence[Timestep],
                          states: Sequence[object],
                          signals: Sequence[SubtaskSignal],
                          embodiment_id: str = "panda",
                          source: str = SOURCE_HUMAN_SEED) -> Demonstration:
    """Split a raw trace at the first firing of each successive signal.

    ``states`` is the world-state trace with len(timesteps) + 1 entries
    (initial state plus the state after every action); predicate i is
    searched over post-action states starting after the previous boundary.
    The final segment always ends at the trajectory end, but its signal must
    still fire somewhere or the demonstration did not complete the task.
    """
    if not timesteps:
        raise SegmentationError("empty demonstration")
    if len(states) != len(timesteps) + 1:
        raise ValueError(
            f"need {len(timesteps) + 1} states for {len(timesteps)} timesteps, "
            f"got {len(states)}")
    if not signals:
        raise ValueError("need at least one subtask signal")

    boundaries = []
    prev = 0
    for sig in signals:
        fire = None
        for t in range(prev + 1, len(states)):
            if sig.predicate(states[t]):
                fire = t
                break
        if fire is None:
            raise SegmentationError(
                f"termination signal for subtask {sig.subtask_id!r} never fired")
        boundaries.append(fire)
        prev = fire

    segments = []
    start = 0
    for i, sig in enumerate(signals):
        end = boundaries[i] if i < len(signals) - 1 else len(timesteps)
        ref_pose = _object_pose(states[start], sig.reference_object_id)
        segments.append(SubtaskSegment(
            start_idx=start, end_idx=end,
            subtask_id=sig.subtask_id,
            reference_object_id=sig.reference_object_id,
            reference_object_pose=ref_pose))
        start = end
    return Demonstration(list(timesteps), segments, embodiment_id, source)


def _object_pose(state, object_id: str) -> Pose:
    pose = state.object_poses.get(object_id)
    if pose is None:
        raise KeyError(f"state has no object {object_id!r}")
    return pose


def segment_pool(demos: Sequence[Demonstration], subtask_id: str) -> List[SubtaskSegment]:
    """All segments matching ``subtask_id``, in demo order, with back-refs."""
    pool = [seg for demo in demos for seg in demo.segments
            if seg.subtask_id == subtask_id]
    if not pool:
        raise EmptyPoolError(f"no segments for subtask {subtask_id!r}")
    return pool
