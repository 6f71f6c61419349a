"""Desk-scale diffusion policy over feature observations.

An MLP denoiser predicts the noise injected into normalized action chunks;
training is behavior cloning with analytic gradients and plain SGD, and
control runs receding-horizon: sample a chunk of ``prediction_horizon``
actions conditioned on the current observation, execute the first
``execution_horizon`` of them, replan.

Everything is plain numpy and deterministic given seeds: the denoiser is
small enough that hand-written backprop (checked against finite
differences in the tests) beats pulling in an autodiff stack.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .randomize import CameraRig, SceneConfig
from .simworld import (MAX_POS_STEP, MAX_ROT_STEP, TaskSpec, observe, reset,
                       step)
from .trajectory import Timestep

CHECKPOINT_MAGIC = b"SCENEGEN-POLICY"
CHECKPOINT_VERSION = "policy-ckpt-1"


class TrainingDivergedError(RuntimeError):
    """Loss blew past the divergence threshold or went non-finite."""


class CheckpointFormatError(ValueError):
    """Checkpoint file is unreadable, truncated, or a different version."""


# ---------------------------------------------------------------------------
# Noise schedule
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NoiseSchedule:
    """Linear variance schedule with the index-0 convention alpha_bar[0] = 1.

    Arrays are length num_steps + 1 and indexed directly by the diffusion
    step k, so betas[0] is a placeholder zero and k = 0 means "no noise".
    """

    num_steps: int = 50
    beta_start: float = 1e-4
    beta_end: float = 0.02
    betas: np.ndarray = field(init=False, repr=False)
    alphas: np.ndarray = field(init=False, repr=False)
    alpha_bars: np.ndarray = field(init=False, repr=False)
    sigmas: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.num_steps < 1:
            raise ValueError("schedule needs at least one step")
        if not 0.0 < self.beta_start <= self.beta_end < 1.0:
            raise ValueError(
                f"betas must satisfy 0 < start <= end < 1, got "
                f"({self.beta_start}, {self.beta_end})")
        betas = np.zeros(self.num_steps + 1)
        betas[1:] = np.linspace(self.beta_start, self.beta_end, self.num_steps)
        alphas = 1.0 - betas
        alpha_bars = np.cumprod(alphas)
        # posterior variance; zero at k = 1 because alpha_bar[0] = 1
        var = np.zeros(self.num_steps + 1)
        var[1:] = betas[1:] * (1.0 - alpha_bars[:-1]) / (1.0 - alpha_bars[1:])
        for name, arr in (("betas", betas), ("alphas", alphas),
                          ("alpha_bars", alpha_bars), ("sigmas", np.sqrt(var))):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)


def forward_noise(x0, k: int, schedule: NoiseSchedule,
                  rng: Optional[np.random.Generator] = None,
                  eps=None) -> Tuple[np.ndarray, np.ndarray]:
    """Jump straight to diffusion step k: sqrt(ab_k) x0 + sqrt(1-ab_k) eps.

    k = 0 returns x0 unchanged. ``eps`` is drawn from ``rng`` when not
    supplied; the drawn (or given) noise is returned alongside x_k.
    """
    if not 0 <= k <= schedule.num_steps:
        raise ValueError(f"step k={k} outside [0, {schedule.num_steps}]")
    x0 = np.asarray(x0, dtype=float)
    if eps is None:
        if rng is None:
            raise ValueError("need either eps or rng")
        eps = rng.standard_normal(x0.shape)
    else:
        eps = np.asarray(eps, dtype=float)
        if eps.shape != x0.shape:
            raise ValueError(f"eps shape {eps.shape} != x0 shape {x0.shape}")
    ab = schedule.alpha_bars[k]
    return math.sqrt(ab) * x0 + math.sqrt(1.0 - ab) * eps, eps


# ---------------------------------------------------------------------------
# Denoiser network
# ---------------------------------------------------------------------------

def timestep_embedding(k, dim: int) -> np.ndarray:
    """Sinusoidal embedding of diffusion step(s) k, shape (len(k), dim)."""
    half = dim // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half) / max(half - 1, 1))
    ang = np.atleast_1d(np.asarray(k, dtype=float))[:, None] * freqs[None, :]
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)


@dataclass
class PolicyNet:
    """Two-hidden-layer tanh MLP: (noisy chunk, observation, k-embed) -> noise."""

    chunk_dim: int
    obs_dim: int
    hidden_dim: int = 256
    embed_dim: int = 32
    params: Dict[str, np.ndarray] = field(default_factory=dict, repr=False)

    PARAM_ORDER = ("W1", "b1", "W2", "b2", "W3", "b3")

    @property
    def input_dim(self) -> int:
        return self.chunk_dim + self.obs_dim + self.embed_dim

    @staticmethod
    def init(chunk_dim: int, obs_dim: int, rng: np.random.Generator,
             hidden_dim: int = 256, embed_dim: int = 32) -> "PolicyNet":
        net = PolicyNet(chunk_dim, obs_dim, hidden_dim, embed_dim)
        d_in, h = net.input_dim, hidden_dim
        net.params = {
            "W1": rng.standard_normal((d_in, h)) / math.sqrt(d_in),
            "b1": np.zeros(h),
            "W2": rng.standard_normal((h, h)) / math.sqrt(h),
            "b2": np.zeros(h),
            "W3": rng.standard_normal((h, chunk_dim)) / math.sqrt(h),
            "b3": np.zeros(chunk_dim),
        }
        return net

    def _assemble(self, x_k: np.ndarray, obs: np.ndarray, k) -> np.ndarray:
        x_k = np.atleast_2d(x_k)
        obs = np.atleast_2d(obs)
        emb = timestep_embedding(k, self.embed_dim)
        if emb.shape[0] == 1 and x_k.shape[0] > 1:
            emb = np.repeat(emb, x_k.shape[0], axis=0)
        return np.concatenate([x_k, obs, emb], axis=1)

    def forward(self, x_k, obs, k) -> np.ndarray:
        """Predicted noise, shape matching x_k (batched or single)."""
        single = np.ndim(x_k) == 1
        out = self._forward_cached(self._assemble(x_k, obs, k))[-1]
        return out[0] if single else out

    def _forward_cached(self, inp: np.ndarray):
        p = self.params
        h1 = np.tanh(inp @ p["W1"] + p["b1"])
        h2 = np.tanh(h1 @ p["W2"] + p["b2"])
        out = h2 @ p["W3"] + p["b3"]
        return inp, h1, h2, out

    def backward(self, cache, d_out: np.ndarray) -> Dict[str, np.ndarray]:
        inp, h1, h2, _ = cache
        p = self.params
        grads = {"W3": h2.T @ d_out, "b3": d_out.sum(axis=0)}
        d_h2 = (d_out @ p["W3"].T) * (1.0 - h2 * h2)
        grads["W2"] = h1.T @ d_h2
        grads["b2"] = d_h2.sum(axis=0)
        d_h1 = (d_h2 @ p["W2"].T) * (1.0 - h1 * h1)
        grads["W1"] = inp.T @ d_h1
        grads["b1"] = d_h1.sum(axis=0)
        return grads


def bc_loss(net: PolicyNet, observations: np.ndarray, chunks: np.ndarray,
            schedule: NoiseSchedule, rng: np.random.Generator,
            ) -> Tuple[float, Dict[str, np.ndarray]]:
    """Denoising behavior-cloning loss and analytic parameter gradients.

    Each sample gets its own uniform step k in [1, K] and Gaussian noise;
    the loss is the mean squared error between predicted and true noise
    over every element of the batch. ``chunks`` must already be normalized
    and flattened to (batch, chunk_dim).
    """
    obs = np.atleast_2d(np.asarray(observations, dtype=float))
    x0 = np.atleast_2d(np.asarray(chunks, dtype=float))
    if len(obs) != len(x0) or len(x0) == 0:
        raise ValueError(f"batch mismatch: {len(obs)} observations, {len(x0)} chunks")
    batch = len(x0)
    ks = rng.integers(1, schedule.num_steps + 1, size=batch)
    eps = rng.standard_normal(x0.shape)
    ab = schedule.alpha_bars[ks][:, None]
    x_k = np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps

    cache = net._forward_cached(net._assemble(x_k, obs, ks))
    out = cache[-1]
    err = out - eps
    per_sample = np.mean(err * err, axis=1)
    if not np.all(np.isfinite(per_sample)):
        bad = int(np.flatnonzero(~np.isfinite(per_sample))[0])
        raise TrainingDivergedError(f"non-finite loss at batch sample {bad}")
    loss = float(per_sample.mean())
    grads = net.backward(cache, 2.0 * err / err.size)
    return loss, grads


# ---------------------------------------------------------------------------
# Normalization
# ---------------------------------------------------------------------------

_DEGENERATE = 1e-12


@dataclass(frozen=True)
class Normalizer:
    """Per-dimension min/max map onto [-1, 1].

    Degenerate dimensions (max == min) map to 0 and back to their constant,
    so round-trips stay exact.
    """

    lo: np.ndarray
    hi: np.ndarray

    @staticmethod
    def fit(data: np.ndarray) -> "Normalizer":
        flat = np.asarray(data, dtype=float).reshape(-1, np.shape(data)[-1])
        return Normalizer(lo=flat.min(axis=0), hi=flat.max(axis=0))

    @staticmethod
    def identity(dim: int) -> "Normalizer":
        return Normalizer(lo=-np.ones(dim), hi=np.ones(dim))

    def _span(self) -> np.ndarray:
        return np.maximum(self.hi - self.lo, _DEGENERATE)

    def normalize(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = 2.0 * (x - self.lo) / self._span() - 1.0
        return np.where(self.hi - self.lo < _DEGENERATE, 0.0, y)

    def denormalize(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        x = (y + 1.0) * self._span() / 2.0 + self.lo
        return np.where(self.hi - self.lo < _DEGENERATE, self.lo, x)


# ---------------------------------------------------------------------------
# Chunking and the trained-policy bundle
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChunkingConfig:
    prediction_horizon: int = 16
    execution_horizon: int = 8

    def __post_init__(self):
        if not 1 <= self.execution_horizon <= self.prediction_horizon:
            raise ValueError(
                f"need 1 <= execution <= prediction, got "
                f"({self.execution_horizon}, {self.prediction_horizon})")


def build_chunks(actions: np.ndarray, horizon: int) -> np.ndarray:
    """Sliding windows actions[t : t+horizon] for every t, padded at the
    episode tail by repeating the final action. Shape (T, horizon, dim)."""
    acts = np.asarray(actions, dtype=float)
    n = len(acts)
    padded = np.concatenate([acts, np.repeat(acts[-1:], horizon, axis=0)])
    return np.stack([padded[t:t + horizon] for t in range(n)])


@dataclass
class Policy:
    """Denoiser plus everything needed to run it on raw observations."""

    net: PolicyNet
    schedule: NoiseSchedule
    chunking: ChunkingConfig
    action_norm: Normalizer
    obs_mean: np.ndarray
    obs_std: np.ndarray
    meta: dict = field(default_factory=dict)  # provenance: task, factors, seeds

    def normalize_obs(self, obs: np.ndarray) -> np.ndarray:
        return (np.asarray(obs, dtype=float) - self.obs_mean) / self.obs_std


def _sample_normalized(net: PolicyNet, cond: np.ndarray,
                       schedule: NoiseSchedule,
                       rng: np.random.Generator) -> np.ndarray:
    x = rng.standard_normal(net.chunk_dim)
    for k in range(schedule.num_steps, 0, -1):
        eps_hat = net.forward(x, cond, k)
        alpha = schedule.alphas[k]
        ab = schedule.alpha_bars[k]
        x = (x - schedule.betas[k] / math.sqrt(1.0 - ab) * eps_hat) / math.sqrt(alpha)
        if k > 1:
            x = x + schedule.sigmas[k] * rng.standard_normal(net.chunk_dim)
    return x


def sample_chunk(policy: Policy, obs: np.ndarray,
                 rng: np.random.Generator) -> np.ndarray:
    """Draw one action chunk conditioned on ``obs``.

    Runs the full reverse chain from pure noise (no noise added on the last
    step) and de-normalizes to action units; shape (prediction_horizon,
    action_dim). The finished sample saturates at the dataset envelope
    ([-1, 1] normalized), so a rare runaway chain can never command a step
    faster than anything demonstrated.
    """
    cond = policy.normalize_obs(obs)
    flat = _sample_normalized(policy.net, cond, policy.schedule, rng)
    horizon = policy.chunking.prediction_horizon
    chunk = np.clip(flat.reshape(horizon, -1), -1.0, 1.0)
    return policy.action_norm.denormalize(chunk)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    # The loss averages over every element of the noise target, which
    # shrinks raw gradients by ~1/(T_p*act_dim); unit-scale steps with a
    # cosine taper are what actually move this net. A noise schedule that
    # ends near alpha_bar ~ 0 keeps the k=K training inputs on the same
    # distribution the sampler starts from.
    epochs: int = 800
    batch_size: int = 64
    learning_rate: float = 1.0
    lr_final_fraction: float = 0.05
    transition_oversample: int = 4
    seed: int = 0
    holdout_fraction: float = 0.1
    divergence_threshold: float = 1e3
    hidden_dim: int = 256
    embed_dim: int = 32
    num_diffusion_steps: int = 50
    beta_start: float = 1e-4
    beta_end: float = 0.25
    prediction_horizon: int = 16
    execution_horizon: int = 8

    def chunking(self) -> ChunkingConfig:
        return ChunkingConfig(self.prediction_horizon, self.execution_horizon)

    def schedule(self) -> NoiseSchedule:
        return NoiseSchedule(self.num_diffusion_steps, self.beta_start, self.beta_end)


@dataclass
class TrainingLog:
    train_losses: List[float] = field(default_factory=list)
    holdout_losses: List[float] = field(default_factory=list)
    num_train: int = 0
    num_holdout: int = 0

    @property
    def initial_loss(self) -> float:
        return self.train_losses[0]

    @property
    def final_loss(self) -> float:
        return self.train_losses[-1]


def train(observations: np.ndarray, chunks: np.ndarray,
          config: TrainConfig = TrainConfig()) -> Tuple[Policy, TrainingLog]:
    """Fit the denoiser by minibatch SGD on (observation, action chunk) pairs.

    ``observations`` is (N, obs_dim); ``chunks`` is (N, T_p, action_dim) in
    raw action units. Normalization constants are computed here and carried
    on the returned policy. Deterministic for a fixed config.
    """
    obs = np.asarray(observations, dtype=float)
    chunks = np.asarray(chunks, dtype=float)
    if obs.ndim != 2 or chunks.ndim != 3 or len(obs) != len(chunks):
        raise ValueError(
            f"expected (N, obs_dim) observations and (N, T_p, act_dim) chunks, "
            f"got {obs.shape} and {chunks.shape}")
    if len(obs) == 0:
        raise ValueError("empty training set")
    if chunks.shape[1] != config.prediction_horizon:
        raise ValueError(
            f"chunk horizon {chunks.shape[1]} != configured "
            f"{config.prediction_horizon}")

    action_norm = Normalizer.fit(chunks.reshape(-1, chunks.shape[-1]))
    x0 = action_norm.normalize(chunks).reshape(len(chunks), -1)
    obs_mean = obs.mean(axis=0)
    obs_std = np.maximum(obs.std(axis=0), 1e-6)
    s = (obs - obs_mean) / obs_std

    rng = np.random.default_rng(config.seed)
    schedule = config.schedule()
    net = PolicyNet.init(x0.shape[1], s.shape[1], rng,
                         hidden_dim=config.hidden_dim,
                         embed_dim=config.embed_dim)

    n = len(x0)
    n_holdout = int(round(config.holdout_fraction * n)) if n >= 10 else 0
    perm = rng.permutation(n)
    hold_idx, train_idx = perm[:n_holdout], perm[n_holdout:]
    log = TrainingLog(num_train=len(train_idx), num_holdout=len(hold_idx))

    if config.transition_oversample > 1:
        # Episodes spend few steps around gripper flips, yet those are the
        # steps where sampled precision decides task success; revisit the
        # pairs whose execution window spans a flip.
        ex = config.execution_horizon
        high = chunks[train_idx, :ex + 1, -1] >= 0.5
        flips = (high[:, 1:] != high[:, :-1]).any(axis=1)
        extra = np.repeat(train_idx[flips], config.transition_oversample - 1)
        train_idx = np.concatenate([train_idx, extra])

    holdout_seed = np.random.SeedSequence([config.seed, 0x48])
    lr_floor = config.learning_rate * config.lr_final_fraction
    for epoch in range(config.epochs):
        u = epoch / max(1, config.epochs - 1)
        lr = lr_floor + (config.learning_rate - lr_floor) * 0.5 * (
            1.0 + math.cos(math.pi * u))
        order = train_idx[rng.permutation(len(train_idx))]
        losses = []
        for lo in range(0, len(order), config.batch_size):
            idx = order[lo:lo + config.batch_size]
            loss, grads = bc_loss(net, s[idx], x0[idx], schedule, rng)
            if not math.isfinite(loss) or loss > config.divergence_threshold:
                raise TrainingDivergedError(
                    f"loss {loss:.3g} at epoch {epoch}, batch {lo // config.batch_size} "
                    f"(threshold {config.divergence_threshold:g})")
            for name in net.PARAM_ORDER:
                net.params[name] -= lr * grads[name]
            losses.append(loss)
        log.train_losses.append(float(np.mean(losses)))
        if len(hold_idx):
            # same noise draws every epoch so the curve is comparable
            hrng = np.random.default_rng(holdout_seed)
            hloss, _ = bc_loss(net, s[hold_idx], x0[hold_idx], schedule, hrng)
            log.holdout_losses.append(hloss)

    policy = Policy(net=net, schedule=schedule, chunking=config.chunking(),
                    action_norm=action_norm, obs_mean=obs_mean, obs_std=obs_std)
    return policy, log


def train_on_episodes(episodes: Sequence[Tuple[np.ndarray, np.ndarray]],
                      config: TrainConfig = TrainConfig(),
                      ) -> Tuple[Policy, TrainingLog]:
    """Train from per-episode (observations, actions) array pairs."""
    if not episodes:
        raise ValueError("empty training set")
    all_obs, all_chunks = [], []
    for obs_seq, act_seq in episodes:
        all_obs.append(np.asarray(obs_seq, dtype=float))
        all_chunks.append(build_chunks(act_seq, config.prediction_horizon))
    return train(np.concatenate(all_obs), np.concatenate(all_chunks), config)


# ---------------------------------------------------------------------------
# Rollout
# ---------------------------------------------------------------------------

Planner = Callable[[np.ndarray, object], np.ndarray]


@dataclass
class RolloutResult:
    success: bool
    timesteps: List[Timestep]

    def __len__(self) -> int:
        return len(self.timesteps)


class DiffusionPlanner:
    """Planner adapter: sample a chunk from the policy, ignore world state."""

    def __init__(self, policy: Policy, rng: np.random.Generator):
        self.policy = policy
        self.rng = rng

    def __call__(self, obs: np.ndarray, world) -> np.ndarray:
        return sample_chunk(self.policy, obs, self.rng)


def _legal_action(action: np.ndarray) -> np.ndarray:
    a = np.array(action, dtype=float)
    n = np.linalg.norm(a[:3])
    if n > MAX_POS_STEP:
        a[:3] *= MAX_POS_STEP / n
    ang = np.linalg.norm(a[3:6])
    if ang > MAX_ROT_STEP:
        a[3:6] *= MAX_ROT_STEP / ang
    a[6] = min(1.0, max(0.0, a[6]))
    return a


def rollout(planner: Planner, task: TaskSpec, scene: SceneConfig,
            rig: CameraRig, chunking: ChunkingConfig,
            max_steps: int = 200,
            rng: Optional[np.random.Generator] = None) -> RolloutResult:
    """Receding-horizon closed loop until success or the step budget.

    Each replanning round observes, asks the planner for a chunk, and
    executes its first ``execution_horizon`` actions (clipped to the
    world's per-step bounds). Success is checked after every step.
    """
    world = reset(task, scene, rng)
    scene.object_placements = dict(world.object_poses)
    steps: List[Timestep] = []
    success = False
    while len(steps) < max_steps and not success:
        obs = observe(world, scene, rig)
        chunk = np.atleast_2d(planner(obs, world))
        for action in chunk[:chunking.execution_horizon]:
            a = _legal_action(action)
            steps.append(Timestep(ee_pose=world.ee_pose,
                                  gripper_opening=world.gripper_opening,
                                  observation=obs, action=a))
            world = step(world, a)
            obs = observe(world, scene, rig)
            if task.success(world):
                success = True
                break
            if len(steps) >= max_steps:
                break
    return RolloutResult(success=success, timesteps=steps)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def save_policy(policy: Policy, path) -> None:
    """Single-file checkpoint: magic line, JSON header, little-endian
    float64 parameter block in fixed layer order."""
    net = policy.net
    header = {
        "version": CHECKPOINT_VERSION,
        "schedule": {"num_steps": policy.schedule.num_steps,
                     "beta_start": policy.schedule.beta_start,
                     "beta_end": policy.schedule.beta_end},
        "chunking": {"prediction_horizon": policy.chunking.prediction_horizon,
                     "execution_horizon": policy.chunking.execution_horizon},
        "net": {"chunk_dim": net.chunk_dim, "obs_dim": net.obs_dim,
                "hidden_dim": net.hidden_dim, "embed_dim": net.embed_dim,
                "layers": [[name, list(net.params[name].shape)]
                           for name in net.PARAM_ORDER]},
        "action_norm": {"lo": policy.action_norm.lo.tolist(),
                        "hi": policy.action_norm.hi.tolist()},
        "obs_norm": {"mean": policy.obs_mean.tolist(),
                     "std": policy.obs_std.tolist()},
        "meta": policy.meta,
    }
    flat = np.concatenate([net.params[name].ravel() for name in net.PARAM_ORDER])
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC + b"\n")
        f.write(json.dumps(header).encode("utf-8") + b"\n")
        f.write(flat.astype("<f8").tobytes())


def load_policy(path) -> Policy:
    with open(path, "rb") as f:
        buf = io.BufferedReader(f)
        magic = buf.readline().strip()
        if magic != CHECKPOINT_MAGIC:
            raise CheckpointFormatError(f"not a policy checkpoint: {path}")
        try:
            header = json.loads(buf.readline().decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointFormatError(f"unreadable checkpoint header: {exc}")
        if header.get("version") != CHECKPOINT_VERSION:
            raise CheckpointFormatError(
                f"checkpoint version {header.get('version')!r} needs upgrade "
                f"to {CHECKPOINT_VERSION!r}")
        raw = buf.read()

    spec = header["net"]
    net = PolicyNet(chunk_dim=spec["chunk_dim"], obs_dim=spec["obs_dim"],
                    hidden_dim=spec["hidden_dim"], embed_dim=spec["embed_dim"])
    flat = np.frombuffer(raw, dtype="<f8")
    expected = sum(int(np.prod(shape)) for _, shape in spec["layers"])
    if len(flat) != expected:
        raise CheckpointFormatError(
            f"parameter block has {len(flat)} floats, expected {expected}")
    cursor = 0
    for name, shape in spec["layers"]:
        size = int(np.prod(shape))
        net.params[name] = flat[cursor:cursor + size].reshape(shape).copy()
        cursor += size
    sched = header["schedule"]
    chunk = header["chunking"]
    return Policy(
        net=net,
        schedule=NoiseSchedule(sched["num_steps"], sched["beta_start"],
                               sched["beta_end"]),
        chunking=ChunkingConfig(chunk["prediction_horizon"],
                                chunk["execution_horizon"]),
        action_norm=Normalizer(lo=np.array(header["action_norm"]["lo"]),
                               hi=np.array(header["action_norm"]["hi"])),
        obs_mean=np.array(header["obs_norm"]["mean"]),
        obs_std=np.array(header["obs_norm"]["std"]),
        meta=header.get("meta", {}))
