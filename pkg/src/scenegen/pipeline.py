"""End-to-end orchestration: seed demos -> generation -> training -> eval.

Seed bookkeeping keeps every stage deterministic and non-overlapping:

* seed demonstrations use ``master_seed ^ 2**33 ^ demo_index``
* generation attempts use ``master_seed ^ attempt_index``
* evaluation rollouts use ``master_seed ^ 2**32 ^ rollout_index``

Generation runs in two phases so results never depend on the worker count:
attempts are dispatched in fixed chunks of 32 and their camera-independent
kinematics may run on any number of threads, then a single in-order pass
assigns cameras from the success-gated scheduler, synthesizes observations,
and appends to the dataset writer.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .augment import (BridgePlan, Failure, ReplayJitter, build_pools,
                      finalize_episode, generate_kinematic)
from .dataset import (DatasetCorruptionError, DatasetVersionError,
                      DatasetWriter, dataset_stats, read_dataset)
from .dataset import EpisodeRecord
from .policy import (CheckpointFormatError, DiffusionPlanner, Policy,
                     TrainConfig, TrainingDivergedError, load_policy, rollout,
                     save_policy, train_on_episodes)
from .randomize import (CameraScheduler, RandomizationConfig, next_camera,
                        sample_scene, validate_factors)
from .simworld import TASK_IDS, expert_demonstration, get_task
from .trajectory import Demonstration

SEED_DEMO_DOMAIN = 1 << 33
EVAL_DOMAIN = 1 << 32
NUM_SEED_DEMOS = 10
GENERATION_CHUNK = 32
WORKERS_ENV = "SCENEGEN_WORKERS"

EVAL_COLUMNS = ("task", "train_factors", "eval_factor", "rollouts",
                "successes", "rate")
ABLATION_COLUMNS = EVAL_COLUMNS + ("diagonal", "note")


class UsageError(ValueError):
    """Caller passed something malformed: unknown task/factor, bad counts."""


class DataError(RuntimeError):
    """Referenced artifacts are missing, corrupt, or unusable."""


def parse_factors(spec) -> Tuple[str, ...]:
    """Normalize a factor list ('camera,light', ['camera'], 'none', None)."""
    if spec is None:
        return ()
    if isinstance(spec, str):
        spec = [p.strip() for p in spec.split(",") if p.strip()]
    factors = []
    for f in spec:
        if f == "none":
            continue
        if f not in factors:
            factors.append(f)
    try:
        return validate_factors(factors)
    except ValueError as exc:
        raise UsageError(str(exc))


def factor_label(factors: Sequence[str]) -> str:
    return "+".join(factors) if factors else "none"


def _get_task(task_id: str):
    try:
        return get_task(task_id)
    except KeyError:
        raise UsageError(f"unknown task {task_id!r}; available: {list(TASK_IDS)}")


def _workers(workers: Optional[int]) -> int:
    if workers is None:
        try:
            workers = int(os.environ.get(WORKERS_ENV, "1"))
        except ValueError:
            raise UsageError(f"{WORKERS_ENV} must be an integer")
    if workers < 1:
        raise UsageError("worker count must be >= 1")
    return workers


def make_seed_demos(task, master_seed: int, rig,
                    count: int = NUM_SEED_DEMOS,
                    config: Optional[RandomizationConfig] = None,
                    ) -> List[Demonstration]:
    """Scripted-expert demonstrations on canonical scenes (placements are
    the only randomized element), segmented into the task's subtasks."""
    cfg = config or RandomizationConfig()
    demos = []
    for d in range(count):
        rng = np.random.default_rng(master_seed ^ SEED_DEMO_DOMAIN ^ d)
        scene = sample_scene(task, (), rng, config=cfg)
        demos.append(expert_demonstration(task, scene, rig, rng))
    return demos


# ---------------------------------------------------------------------------
# Generation
# ---------------------------------------------------------------------------

@dataclass
class GenerateReport:
    path: str
    task: str
    factors: Tuple[str, ...]
    episodes: int
    attempts: int
    success_rate: float
    failures: Dict[str, int]
    content_hash: str

    def summary(self) -> str:
        return (f"generated {self.episodes} episodes in {self.attempts} attempts "
                f"(success rate {self.success_rate:.3f}) -> {self.path}")


def run_generate(task_id: str, factors, episodes: int, seed: int, out,
                 config: Optional[RandomizationConfig] = None,
                 workers: Optional[int] = None,
                 plan: Optional[BridgePlan] = None,
                 strategy: str = "nearest",
                 jitter: Optional[ReplayJitter] = ReplayJitter(),
                 num_seed_demos: int = NUM_SEED_DEMOS) -> GenerateReport:
    """Generate a dataset of exactly ``episodes`` verified episodes."""
    if episodes < 1:
        raise UsageError("episodes must be >= 1")
    if seed < 0:
        raise UsageError("seed must be nonnegative")
    task = _get_task(task_id)
    fs = parse_factors(factors)
    cfg = config or RandomizationConfig()
    rig = cfg.build_rig()
    plan = plan or BridgePlan()
    nworkers = _workers(workers)

    pools = build_pools(task, make_seed_demos(task, seed, rig,
                                              count=num_seed_demos, config=cfg))
    writer = DatasetWriter(out, task_id, list(fs), seed,
                           config_snapshot=dataclasses.asdict(cfg))
    scheduler = CameraScheduler(cfg.cap_num_poses)
    kin_factors = tuple(f for f in fs if f != "camera")
    max_attempts = max(episodes * 5, episodes + 50)

    def attempt(index: int):
        rng = np.random.default_rng(seed ^ index)
        scene = sample_scene(task, kin_factors, rng, config=cfg)
        return scene, generate_kinematic(task, scene, pools, rng, plan, strategy,
                                         jitter)

    appended = 0
    attempts_used = 0
    failures: Dict[str, int] = {}
    next_attempt = 0
    while appended < episodes:
        if next_attempt >= max_attempts:
            raise DataError(
                f"attempt budget exhausted: {appended}/{episodes} episodes "
                f"after {max_attempts} attempts; failures: {failures}")
        chunk = range(next_attempt, min(next_attempt + GENERATION_CHUNK,
                                        max_attempts))
        if nworkers > 1:
            with ThreadPoolExecutor(max_workers=nworkers) as pool:
                results = list(pool.map(attempt, chunk))
        else:
            results = [attempt(i) for i in chunk]

        for index, (scene, result) in zip(chunk, results):
            if appended >= episodes:
                break
            attempts_used = index + 1
            if isinstance(result, Failure):
                key = f"subtask{result.subtask_index}:{result.reason}"
                failures[key] = failures.get(key, 0) + 1
                if "camera" in fs:
                    next_camera(scheduler, episode_success=False)
                continue
            if "camera" in fs:
                scene.camera_index = next_camera(scheduler, episode_success=True)
            demo = finalize_episode(result, scene, rig)
            writer.append(EpisodeRecord.from_demonstration(
                demo, episode_index=appended, seed=seed ^ index, scene=scene))
            appended += 1
        next_attempt = chunk.stop

    manifest = writer.finalize(attempts=attempts_used, failures=failures)
    return GenerateReport(path=str(out), task=task_id, factors=fs,
                          episodes=appended, attempts=attempts_used,
                          success_rate=manifest["generation_success_rate"],
                          failures=failures,
                          content_hash=manifest["content_hash"])


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass
class TrainReport:
    checkpoint: str
    task: str
    train_factors: Tuple[str, ...]
    episodes: int
    pairs: int
    epochs: int
    initial_loss: float
    final_loss: float
    holdout_loss: Optional[float]

    def summary(self) -> str:
        hold = (f", holdout {self.holdout_loss:.4f}"
                if self.holdout_loss is not None else "")
        return (f"trained on {self.pairs} pairs from {self.episodes} episodes: "
                f"loss {self.initial_loss:.4f} -> {self.final_loss:.4f}{hold} "
                f"-> {self.checkpoint}")


def run_train(dataset_path, out, seed: int = 0,
              epochs: Optional[int] = None,
              train_config: Optional[TrainConfig] = None) -> TrainReport:
    """Train a diffusion policy on a stored dataset, write a checkpoint."""
    try:
        records, manifest = read_dataset(dataset_path)
    except FileNotFoundError as exc:
        raise DataError(f"dataset not found: {exc}")
    except (DatasetCorruptionError, DatasetVersionError) as exc:
        raise DataError(str(exc))
    if not records:
        raise DataError(f"dataset at {dataset_path} holds no episodes")

    cfg = train_config or TrainConfig(seed=seed)
    if epochs is not None:
        cfg = dataclasses.replace(cfg, epochs=epochs)
    try:
        policy, log = train_on_episodes(
            [r.training_arrays() for r in records], cfg)
    except TrainingDivergedError as exc:
        raise DataError(f"training diverged: {exc}")
    policy.meta = {
        "task": manifest["task"],
        "train_factors": list(manifest["factors"]),
        "dataset": str(dataset_path),
        "dataset_hash": manifest["content_hash"],
        "train_seed": cfg.seed,
        "episodes": len(records),
    }
    save_policy(policy, out)
    return TrainReport(
        checkpoint=str(out), task=manifest["task"],
        train_factors=tuple(manifest["factors"]),
        episodes=len(records), pairs=log.num_train + log.num_holdout,
        epochs=cfg.epochs, initial_loss=log.initial_loss,
        final_loss=log.final_loss,
        holdout_loss=log.holdout_losses[-1] if log.holdout_losses else None)


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EvalCell:
    task: str
    train_factors: str
    eval_factor: str
    rollouts: int
    successes: int
    diagonal: bool = False
    note: str = ""

    @property
    def rate(self) -> Optional[float]:
        return self.successes / self.rollouts if self.rollouts else None


@dataclass
class EvalReport:
    cells: List[EvalCell]
    csv_path: Optional[str] = None
    skipped: int = 0

    def summary(self) -> str:
        lines = []
        for c in self.cells:
            rate = "skip" if c.note.startswith("skip") else f"{c.rate:.2f}"
            lines.append(f"{c.task} train={c.train_factors} "
                         f"eval={c.eval_factor}: {c.successes}/{c.rollouts} "
                         f"({rate})")
        return "\n".join(lines)


def _evaluate_cell(policy: Policy, task, eval_factors, rollouts: int,
                   seed: int, rig, cfg: RandomizationConfig,
                   max_steps: int) -> int:
    successes = 0
    for r in range(rollouts):
        rng = np.random.default_rng(seed ^ EVAL_DOMAIN ^ r)
        scene = sample_scene(task, eval_factors, rng, config=cfg)
        planner = DiffusionPlanner(policy, rng)
        result = rollout(planner, task, scene, rig, policy.chunking,
                         max_steps=max_steps, rng=rng)
        successes += int(result.success)
    return successes


def _load_checkpoint(path) -> Policy:
    try:
        return load_policy(path)
    except FileNotFoundError:
        raise DataError(f"checkpoint not found: {path}")
    except CheckpointFormatError as exc:
        raise DataError(str(exc))


def run_eval(checkpoint, factors, rollouts: int = 50, seed: int = 0,
             task_id: Optional[str] = None, out=None,
             config: Optional[RandomizationConfig] = None,
             max_steps: int = 200) -> EvalReport:
    """Evaluate one checkpoint under one eval-factor setting."""
    if rollouts < 1:
        raise UsageError("rollouts must be >= 1")
    if seed < 0:
        raise UsageError("seed must be nonnegative")
    policy = _load_checkpoint(checkpoint)
    task_id = task_id or policy.meta.get("task")
    if not task_id:
        raise UsageError("checkpoint carries no task id; pass one explicitly")
    task = _get_task(task_id)
    fs = parse_factors(factors)
    cfg = config or RandomizationConfig()
    rig = cfg.build_rig()
    successes = _evaluate_cell(policy, task, fs, rollouts, seed, rig, cfg,
                               max_steps)
    cell = EvalCell(task=task_id,
                    train_factors=factor_label(
                        policy.meta.get("train_factors", [])),
                    eval_factor=factor_label(fs),
                    rollouts=rollouts, successes=successes)
    report = EvalReport(cells=[cell])
    if out:
        write_cells_csv([cell], out)
        report.csv_path = str(out)
    return report


def run_ablation(checkpoints: Dict[str, str], eval_factors,
                 rollouts: int = 50, seed: int = 0, out=None,
                 task_id: Optional[str] = None,
                 config: Optional[RandomizationConfig] = None,
                 max_steps: int = 200) -> EvalReport:
    """Train-regime x eval-factor matrix from per-regime checkpoints.

    ``checkpoints`` maps a regime label (its train-factor set, e.g. "none"
    or "camera") to a checkpoint path; missing files become explicit skip
    cells rather than aborting the rest of the matrix. Every cell reuses
    the same rollout seed stream, so regimes face identical eval scenes.
    """
    if not checkpoints:
        raise UsageError("ablation needs at least one train regime")
    factor_sets = [(label, parse_factors(label)) for label
                   in ([eval_factors] if isinstance(eval_factors, str)
                       else list(eval_factors))]
    if not factor_sets:
        raise UsageError("ablation needs at least one eval factor")
    if rollouts < 1:
        raise UsageError("rollouts must be >= 1")
    cfg = config or RandomizationConfig()
    rig = cfg.build_rig()

    cells: List[EvalCell] = []
    skipped = 0
    for regime, path in checkpoints.items():
        policy = None
        missing = ""
        try:
            policy = _load_checkpoint(path)
        except DataError as exc:
            missing = f"skip: {exc}"
            skipped += len(factor_sets)
        for label, fs in factor_sets:
            if policy is None:
                cells.append(EvalCell(task=task_id or "?", train_factors=regime,
                                      eval_factor=label, rollouts=0,
                                      successes=0, diagonal=(regime == label),
                                      note=missing))
                continue
            cell_task = task_id or policy.meta.get("task")
            if not cell_task:
                raise UsageError(
                    f"checkpoint {path} carries no task id; pass one explicitly")
            task = _get_task(cell_task)
            successes = _evaluate_cell(policy, task, fs, rollouts, seed, rig,
                                       cfg, max_steps)
            cells.append(EvalCell(task=cell_task, train_factors=regime,
                                  eval_factor=label, rollouts=rollouts,
                                  successes=successes,
                                  diagonal=(regime == label)))
    report = EvalReport(cells=cells, skipped=skipped)
    if out:
        write_cells_csv(cells, out, ablation=True)
        report.csv_path = str(out)
    return report


# ---------------------------------------------------------------------------
# Stats
# ---------------------------------------------------------------------------

def run_stats(dataset_path) -> dict:
    try:
        stats = dataset_stats(dataset_path)
        _, manifest = read_dataset(dataset_path, verify=False)
    except FileNotFoundError as exc:
        raise DataError(f"dataset not found: {exc}")
    except (DatasetCorruptionError, DatasetVersionError) as exc:
        raise DataError(str(exc))
    return {
        "task": manifest["task"],
        "factors": manifest["factors"],
        "master_seed": manifest["master_seed"],
        "attempts": manifest["attempts"],
        "generation_success_rate": manifest["generation_success_rate"],
        "content_hash": manifest["content_hash"],
        "stats": stats.to_dict(),
    }


# ---------------------------------------------------------------------------
# Table output
# ---------------------------------------------------------------------------

def write_cells_csv(cells: Sequence[EvalCell], path, ablation: bool = False) -> None:
    columns = ABLATION_COLUMNS if ablation else EVAL_COLUMNS
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f)
        w.writerow(columns)
        for c in cells:
            row = [c.task, c.train_factors, c.eval_factor, c.rollouts,
                   c.successes, "" if c.rate is None else repr(c.rate)]
            if ablation:
                row += [str(c.diagonal).lower(), c.note]
            w.writerow(row)


def render_markdown(cells: Sequence[EvalCell]) -> str:
    """Regime-by-factor success-rate grid; diagonal cells bold, skips em-dash."""
    regimes: List[str] = []
    factors: List[str] = []
    table: Dict[Tuple[str, str], EvalCell] = {}
    for c in cells:
        if c.train_factors not in regimes:
            regimes.append(c.train_factors)
        if c.eval_factor not in factors:
            factors.append(c.eval_factor)
        table[(c.train_factors, c.eval_factor)] = c

    out = io.StringIO()
    out.write("| train \\ eval | " + " | ".join(factors) + " |\n")
    out.write("|" + " --- |" * (len(factors) + 1) + "\n")
    for regime in regimes:
        row = [regime]
        for f in factors:
            c = table.get((regime, f))
            if c is None or c.rate is None:
                row.append("—")
            else:
                text = f"{c.rate:.2f}"
                row.append(f"**{text}**" if c.diagonal else text)
        out.write("| " + " | ".join(row) + " |\n")
    return out.getvalue()
