"""On-disk container for generated demonstration datasets.

A dataset directory holds three files:

* ``episodes.bin`` — version header line, then raw little-endian float64
  blocks, one per episode (poses, gripper trace, observations, actions
  concatenated).
* ``episodes.idx`` — version header line, then one JSON record per line
  with episode metadata and the byte offset / float count of its block.
* ``manifest`` — one JSON object: task, factor set, config snapshot, master
  seed, counts, per-factor marginals, and a sha256 content hash over every
  index record and payload in order.

Metadata stays greppable, numerics stay compact and lossless, and the
deterministic JSON encoding (sorted keys, no timestamps) makes a dataset
byte-identical for a fixed (config, master seed) however it was produced.
Only successful episodes are stored; failures are tallied in the manifest.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .posemath import Pose, Rotation, compose
from .randomize import SceneConfig
from .trajectory import (ACTION_DIM, SOURCE_GENERATED, Demonstration,
                         SubtaskSegment)

BIN_HEADER = b"scenegen-episodes 1\n"
IDX_HEADER = b"scenegen-index 1\n"
MANIFEST_VERSION = "scenegen-dataset-1"
GENERATOR_VERSION = "scenegen-0.1.0"

MANIFEST_NAME = "manifest"
IDX_NAME = "episodes.idx"
BIN_NAME = "episodes.bin"


class DatasetCorruptionError(RuntimeError):
    """Payload bytes do not match the manifest hash, or a file is truncated."""


class DatasetVersionError(ValueError):
    """File carries an unknown schema version; no silent upgrade."""


def pose_to_vec(pose: Pose) -> np.ndarray:
    return np.concatenate([pose.translation, pose.rotation.quat])


def vec_to_pose(vec) -> Pose:
    v = np.asarray(vec, dtype=float)
    return Pose(Rotation(v[3:7]), v[:3])


def _scene_to_dict(scene: SceneConfig) -> dict:
    return {
        "camera_index": scene.camera_index,
        "light_rgb": list(scene.light_rgb),
        "texture_id": scene.texture_id,
        "table_height_delta": scene.table_height_delta,
        "embodiment_id": scene.embodiment_id,
        "object_placements": {k: pose_to_vec(p).tolist()
                              for k, p in scene.object_placements.items()},
    }


def _scene_from_dict(raw: dict) -> SceneConfig:
    return SceneConfig(
        camera_index=raw["camera_index"],
        light_rgb=tuple(raw["light_rgb"]),
        texture_id=raw["texture_id"],
        table_height_delta=raw["table_height_delta"],
        embodiment_id=raw["embodiment_id"],
        object_placements={k: vec_to_pose(v)
                           for k, v in raw["object_placements"].items()})


@dataclass
class EpisodeRecord:
    """One stored episode: metadata plus per-timestep arrays."""

    episode_index: int
    seed: int
    scene: SceneConfig
    embodiment_id: str
    ee_poses: np.ndarray      # (T, 7) translation + unit quaternion
    gripper: np.ndarray       # (T,)
    observations: np.ndarray  # (T, obs_dim)
    actions: np.ndarray       # (T, ACTION_DIM)
    segments: List[Tuple[int, int, str, str, np.ndarray]]
    success: bool = True
    generator_version: str = GENERATOR_VERSION

    def __post_init__(self):
        t = len(self.ee_poses)
        shapes = {"ee_poses": self.ee_poses.shape, "gripper": self.gripper.shape,
                  "observations": self.observations.shape,
                  "actions": self.actions.shape}
        if (self.ee_poses.shape != (t, 7) or self.gripper.shape != (t,)
                or self.observations.ndim != 2 or len(self.observations) != t
                or self.actions.shape != (t, ACTION_DIM)):
            raise ValueError(f"inconsistent per-timestep arrays: {shapes}")

    def __len__(self) -> int:
        return len(self.ee_poses)

    @property
    def obs_dim(self) -> int:
        return self.observations.shape[1]

    @staticmethod
    def from_demonstration(demo: Demonstration, episode_index: int, seed: int,
                           scene: SceneConfig) -> "EpisodeRecord":
        return EpisodeRecord(
            episode_index=episode_index,
            seed=seed,
            scene=scene,
            embodiment_id=demo.embodiment_id,
            ee_poses=np.stack([pose_to_vec(t.ee_pose) for t in demo.timesteps]),
            gripper=np.array([t.gripper_opening for t in demo.timesteps]),
            observations=np.stack([t.observation for t in demo.timesteps]),
            actions=np.stack([t.action for t in demo.timesteps]),
            segments=[(s.start_idx, s.end_idx, s.subtask_id,
                       s.reference_object_id,
                       pose_to_vec(s.reference_object_pose))
                      for s in demo.segments])

    def payload(self) -> np.ndarray:
        """All float data as one flat little-endian float64 block."""
        return np.concatenate([
            self.ee_poses.ravel(), self.gripper.ravel(),
            self.observations.ravel(), self.actions.ravel(),
        ]).astype("<f8")

    def training_arrays(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.observations, self.actions


def _record_meta(record: EpisodeRecord, offset: int, count: int) -> dict:
    return {
        "episode_index": record.episode_index,
        "seed": record.seed,
        "success": record.success,
        "generator_version": record.generator_version,
        "embodiment_id": record.embodiment_id,
        "scene": _scene_to_dict(record.scene),
        "segments": [[s, e, sid, oid, np.asarray(vec).tolist()]
                     for s, e, sid, oid, vec in record.segments],
        "length": len(record),
        "obs_dim": record.obs_dim,
        "offset": offset,
        "count": count,
    }


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


class DatasetWriter:
    """Appends episodes and finalizes the manifest.

    Episodes must arrive in episode_index order (parallel generation merges
    through a single writer) so the files, and therefore the content hash,
    are reproducible.
    """

    def __init__(self, path, task_id: str, factors: Sequence[str],
                 master_seed: int, config_snapshot: Optional[dict] = None):
        self.path = str(path)
        os.makedirs(self.path, exist_ok=True)
        self.task_id = task_id
        self.factors = list(factors)
        self.master_seed = master_seed
        self.config_snapshot = config_snapshot or {}
        self._bin = open(os.path.join(self.path, BIN_NAME), "wb")
        self._bin.write(BIN_HEADER)
        self._idx = open(os.path.join(self.path, IDX_NAME), "wb")
        self._idx.write(IDX_HEADER)
        self._hash = hashlib.sha256()
        self._offset = len(BIN_HEADER)
        self._next_index = 0
        self._records: List[dict] = []

    def append(self, record: EpisodeRecord) -> None:
        if not record.success:
            raise ValueError("only successful episodes are stored")
        if record.episode_index != self._next_index:
            raise ValueError(
                f"episodes must be appended in order: expected index "
                f"{self._next_index}, got {record.episode_index}")
        payload = record.payload()
        raw = payload.tobytes()
        meta = _record_meta(record, self._offset, len(payload))
        line = (_dump(meta) + "\n").encode("utf-8")
        self._idx.write(line)
        self._bin.write(raw)
        self._hash.update(line)
        self._hash.update(raw)
        self._offset += len(raw)
        self._next_index += 1
        self._records.append(meta)

    def finalize(self, attempts: Optional[int] = None,
                 failures: Optional[Dict[str, int]] = None) -> dict:
        self._bin.close()
        self._idx.close()
        n = len(self._records)
        attempts = attempts if attempts is not None else n
        manifest = {
            "version": MANIFEST_VERSION,
            "task": self.task_id,
            "factors": self.factors,
            "config": self.config_snapshot,
            "master_seed": self.master_seed,
            "episodes": n,
            "attempts": attempts,
            "generation_success_rate": (n / attempts) if attempts else 0.0,
            "failures": failures or {},
            "marginals": _marginals(self._records),
            "content_hash": self._hash.hexdigest(),
        }
        with open(os.path.join(self.path, MANIFEST_NAME), "w",
                  encoding="utf-8") as f:
            f.write(_dump(manifest) + "\n")
        return manifest


def _marginals(metas: Sequence[dict]) -> dict:
    cameras: Dict[str, int] = {}
    textures: Dict[str, int] = {}
    embodiments: Dict[str, int] = {}
    lights = []
    heights = []
    for m in metas:
        s = m["scene"]
        cameras[str(s["camera_index"])] = cameras.get(str(s["camera_index"]), 0) + 1
        textures[str(s["texture_id"])] = textures.get(str(s["texture_id"]), 0) + 1
        embodiments[s["embodiment_id"]] = embodiments.get(s["embodiment_id"], 0) + 1
        lights.append(s["light_rgb"])
        heights.append(s["table_height_delta"])
    out = {"camera_counts": cameras, "texture_counts": textures,
           "embodiment_counts": embodiments}
    if metas:
        out["light_mean_rgb"] = np.mean(np.asarray(lights), axis=0).tolist()
        out["height_min"] = float(min(heights))
        out["height_max"] = float(max(heights))
        out["height_mean"] = float(np.mean(heights))
    return out


def write_dataset(path, records: Sequence[EpisodeRecord], task_id: str,
                  factors: Sequence[str], master_seed: int,
                  config_snapshot: Optional[dict] = None,
                  attempts: Optional[int] = None,
                  failures: Optional[Dict[str, int]] = None) -> dict:
    """One-shot write of a full dataset; returns the manifest."""
    writer = DatasetWriter(path, task_id, factors, master_seed, config_snapshot)
    for record in records:
        writer.append(record)
    return writer.finalize(attempts=attempts, failures=failures)


# ---------------------------------------------------------------------------
# Reading
# ---------------------------------------------------------------------------

def read_manifest(path) -> dict:
    name = os.path.join(str(path), MANIFEST_NAME)
    with open(name, "r", encoding="utf-8") as f:
        manifest = json.load(f)
    if manifest.get("version") != MANIFEST_VERSION:
        raise DatasetVersionError(
            f"manifest version {manifest.get('version')!r} needs upgrade to "
            f"{MANIFEST_VERSION!r}")
    return manifest


def _check_header(f, expected: bytes, name: str) -> None:
    line = f.readline()
    if line != expected:
        raise DatasetVersionError(
            f"{name} header {line!r} does not match {expected!r}")


def read_dataset(path, verify: bool = True
                 ) -> Tuple[List[EpisodeRecord], dict]:
    """Load every episode plus the manifest.

    With ``verify`` (default), the sha256 over index records and payloads
    is recomputed and must match the manifest; truncated or altered files
    raise DatasetCorruptionError rather than returning partial data.
    """
    manifest = read_manifest(path)
    idx_path = os.path.join(str(path), IDX_NAME)
    bin_path = os.path.join(str(path), BIN_NAME)
    digest = hashlib.sha256()
    records: List[EpisodeRecord] = []
    bin_size = os.path.getsize(bin_path)
    with open(idx_path, "rb") as idx, open(bin_path, "rb") as binf:
        _check_header(idx, IDX_HEADER, IDX_NAME)
        _check_header(binf, BIN_HEADER, BIN_NAME)
        for line in idx:
            digest.update(line)
            meta = json.loads(line.decode("utf-8"))
            offset, count = meta["offset"], meta["count"]
            if offset + 8 * count > bin_size:
                raise DatasetCorruptionError(
                    f"episode {meta['episode_index']} extends past end of "
                    f"{BIN_NAME} ({bin_size} bytes)")
            binf.seek(offset)
            raw = binf.read(8 * count)
            if len(raw) != 8 * count:
                raise DatasetCorruptionError(
                    f"short read for episode {meta['episode_index']}")
            digest.update(raw)
            records.append(_unpack(meta, np.frombuffer(raw, dtype="<f8")))
    if verify and digest.hexdigest() != manifest["content_hash"]:
        raise DatasetCorruptionError(
            "content hash mismatch: dataset bytes differ from manifest")
    return records, manifest


def _unpack(meta: dict, payload: np.ndarray) -> EpisodeRecord:
    t, d = meta["length"], meta["obs_dim"]
    expected = t * 7 + t + t * d + t * ACTION_DIM
    if len(payload) != expected:
        raise DatasetCorruptionError(
            f"episode {meta['episode_index']} payload has {len(payload)} "
            f"floats, expected {expected}")
    cursor = 0

    def take(n, shape):
        nonlocal cursor
        out = payload[cursor:cursor + n].reshape(shape)
        cursor += n
        return out.copy()

    return EpisodeRecord(
        episode_index=meta["episode_index"],
        seed=meta["seed"],
        scene=_scene_from_dict(meta["scene"]),
        embodiment_id=meta["embodiment_id"],
        ee_poses=take(t * 7, (t, 7)),
        gripper=take(t, (t,)),
        observations=take(t * d, (t, d)),
        actions=take(t * ACTION_DIM, (t, ACTION_DIM)),
        segments=[(s, e, sid, oid, np.asarray(vec))
                  for s, e, sid, oid, vec in meta["segments"]],
        success=meta["success"],
        generator_version=meta["generator_version"])


def record_to_demonstration(record: EpisodeRecord) -> Demonstration:
    """Rebuild the in-memory demonstration (poses, segments, observations)."""
    from .trajectory import Timestep
    steps = [Timestep(ee_pose=vec_to_pose(record.ee_poses[t]),
                      gripper_opening=float(record.gripper[t]),
                      observation=record.observations[t],
                      action=record.actions[t])
             for t in range(len(record))]
    segments = [SubtaskSegment(start_idx=s, end_idx=e, subtask_id=sid,
                               reference_object_id=oid,
                               reference_object_pose=vec_to_pose(vec))
                for s, e, sid, oid, vec in record.segments]
    return Demonstration(steps, segments, embodiment_id=record.embodiment_id,
                         source=SOURCE_GENERATED)


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------

@dataclass
class DatasetStats:
    episodes: int
    length_min: int = 0
    length_max: int = 0
    length_mean: float = 0.0
    camera_counts: Dict[int, int] = field(default_factory=dict)
    camera_balanced: bool = True
    texture_counts: Dict[int, int] = field(default_factory=dict)
    embodiment_counts: Dict[str, int] = field(default_factory=dict)
    light_mean_rgb: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    height_histogram: Dict[str, int] = field(default_factory=dict)
    height_range: Tuple[float, float] = (0.0, 0.0)
    action_pos_mean: float = 0.0
    action_pos_max: float = 0.0
    action_rot_mean: float = 0.0
    action_rot_max: float = 0.0
    pose_roundtrip_max_error: float = 0.0

    def to_dict(self) -> dict:
        return {
            "episodes": self.episodes,
            "length": {"min": self.length_min, "max": self.length_max,
                       "mean": self.length_mean},
            "camera": {"counts": {str(k): v for k, v in
                                  sorted(self.camera_counts.items())},
                       "balanced": self.camera_balanced},
            "texture_counts": {str(k): v for k, v in
                               sorted(self.texture_counts.items())},
            "embodiment_counts": dict(sorted(self.embodiment_counts.items())),
            "light_mean_rgb": list(self.light_mean_rgb),
            "height": {"histogram": self.height_histogram,
                       "range": list(self.height_range)},
            "action": {"pos_mean": self.action_pos_mean,
                       "pos_max": self.action_pos_max,
                       "rot_mean": self.action_rot_mean,
                       "rot_max": self.action_rot_max},
            "pose_roundtrip_max_error": self.pose_roundtrip_max_error,
        }


def _roundtrip_error(record: EpisodeRecord) -> float:
    """Max position gap between stored poses and delta-action accumulation."""
    worst = 0.0
    pose = vec_to_pose(record.ee_poses[0])
    for t in range(len(record) - 1):
        a = record.actions[t]
        delta = Pose(Rotation.from_axis_angle(a[3:6]), a[:3])
        pose = compose(pose, delta)
        target = record.ee_poses[t + 1]
        worst = max(worst, float(np.linalg.norm(pose.translation - target[:3])))
    return worst


def dataset_stats(path) -> DatasetStats:
    """Factor marginals, length and action-magnitude summaries, the
    camera-balance check, and the delta-action round-trip error."""
    records, manifest = read_dataset(path)
    if not records:
        return DatasetStats(episodes=0)
    lengths = [len(r) for r in records]
    cameras: Dict[int, int] = {}
    textures: Dict[int, int] = {}
    bodies: Dict[str, int] = {}
    heights, lights = [], []
    pos_norms, rot_norms = [], []
    worst = 0.0
    for r in records:
        cameras[r.scene.camera_index] = cameras.get(r.scene.camera_index, 0) + 1
        textures[r.scene.texture_id] = textures.get(r.scene.texture_id, 0) + 1
        bodies[r.embodiment_id] = bodies.get(r.embodiment_id, 0) + 1
        heights.append(r.scene.table_height_delta)
        lights.append(r.scene.light_rgb)
        pos_norms.append(np.linalg.norm(r.actions[:, :3], axis=1))
        rot_norms.append(np.linalg.norm(r.actions[:, 3:6], axis=1))
        worst = max(worst, _roundtrip_error(r))

    if "camera" in manifest.get("factors", []):
        num_cameras = manifest.get("config", {}).get("cap_num_poses")
        counts = list(cameras.values())
        if num_cameras and len(cameras) < num_cameras:
            counts = counts + [0] * (num_cameras - len(cameras))
        balanced = (max(counts) - min(counts)) <= 1
    else:
        balanced = True  # scheduler balancing only applies when randomized

    hist_edges = np.linspace(min(heights), max(heights) + 1e-12, 11)
    hist, _ = np.histogram(heights, bins=hist_edges)
    pos = np.concatenate(pos_norms)
    rot = np.concatenate(rot_norms)
    return DatasetStats(
        episodes=len(records),
        length_min=int(min(lengths)), length_max=int(max(lengths)),
        length_mean=float(np.mean(lengths)),
        camera_counts=cameras, camera_balanced=balanced,
        texture_counts=textures, embodiment_counts=bodies,
        light_mean_rgb=tuple(np.mean(np.asarray(lights), axis=0)),
        height_histogram={f"{hist_edges[i]:+.4f}": int(hist[i])
                          for i in range(len(hist))},
        height_range=(float(min(heights)), float(max(heights))),
        action_pos_mean=float(pos.mean()), action_pos_max=float(pos.max()),
        action_rot_mean=float(rot.mean()), action_rot_max=float(rot.max()),
        pose_roundtrip_max_error=worst)
