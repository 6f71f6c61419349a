"""Scene-randomized demonstration generation and diffusion-policy benchmarks.

Seed demonstrations are segmented into object-anchored subtask segments,
re-anchored into freshly randomized scenes (camera, light, texture, table
height, embodiment), verified in a kinematic manipulation world, and stored
as datasets for training and evaluating a small diffusion policy.
"""

__version__ = "0.1.0"

from .posemath import (Pose, Rotation, compose, geodesic_distance, interpolate,
                       inverse, pose_allclose, slerp)
from .trajectory import (ACTION_DIM, Demonstration, EmptyPoolError,
                         SegmentationError, SubtaskSegment, SubtaskSignal,
                         Timestep, segment_demonstration, segment_pool)
from .randomize import (CameraRig, CameraScheduler, RandomizationConfig,
                        SceneConfig, fibonacci_cap, next_camera, sample_scene)
from .simworld import (TASK_IDS, PlacementError, TaskSpec, WorldState,
                       check_success, get_task, observe, reset, step)
from .augment import (BridgePlan, Failure, build_bridge, build_pools,
                      generate_episode, select_source_segment,
                      transform_segment)
from .policy import (ChunkingConfig, NoiseSchedule, Policy, PolicyNet,
                     TrainConfig, bc_loss, forward_noise, load_policy,
                     rollout, sample_chunk, save_policy, train)
from .dataset import (DatasetWriter, EpisodeRecord, dataset_stats,
                      read_dataset, write_dataset)
from .pipeline import (DataError, UsageError, run_ablation, run_eval,
                       run_generate, run_stats, run_train)

__all__ = [
    "__version__",
    # pose math
    "Pose", "Rotation", "compose", "inverse", "geodesic_distance", "slerp",
    "interpolate", "pose_allclose",
    # trajectories
    "ACTION_DIM", "Timestep", "SubtaskSegment", "SubtaskSignal",
    "Demonstration", "segment_demonstration", "segment_pool",
    "SegmentationError", "EmptyPoolError",
    # randomization
    "CameraRig", "CameraScheduler", "RandomizationConfig", "SceneConfig",
    "fibonacci_cap", "next_camera", "sample_scene",
    # sim world
    "TASK_IDS", "TaskSpec", "WorldState", "PlacementError", "get_task",
    "reset", "step", "observe", "check_success",
    # augmentation
    "BridgePlan", "Failure", "transform_segment", "select_source_segment",
    "build_bridge", "build_pools", "generate_episode",
    # policy
    "NoiseSchedule", "ChunkingConfig", "PolicyNet", "Policy", "TrainConfig",
    "forward_noise", "bc_loss", "sample_chunk", "train", "rollout",
    "save_policy", "load_policy",
    # datasets
    "EpisodeRecord", "DatasetWriter", "write_dataset", "read_dataset",
    "dataset_stats",
    # pipeline
    "UsageError", "DataError", "run_generate", "run_train", "run_eval",
    "run_ablation", "run_stats",
]
