"""
Phase-2 orchestration: ADPredictor pre-training (step 1) and joint
PPO + description training (step 2).

Example:
    cfg = TrainConfig(n_updates=50)
    result = run_training(cfg, out_dir="runs/demo")
    print(result.log[-1]["SR"])
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple
import csv
import os

import numpy as np

from ..core.base import (
    Action, AuxTaskKind, DecodeConfig, EvalConfig, TeacherKind, TrainConfig, logger,
)
from ..core.checkpoint import save_checkpoint
from ..core.optim import Adam
from ..core.seeding import derive_seed, make_rng
from ..core.tensor import backward, no_grad
from ..env.pool import EnvPool, WorldCache
from ..env.sim import audio_dim
from ..env.world import World
from ..evaluation.metrics import METRIC_NAMES, compute_metrics
from ..evaluation.runner import DescRLPolicy, run_episodes
from ..exceptions import DescriptionError, ValidationError
from ..language.dataset import DatasetRecord, build_dataset, replay, window_inputs
from ..language.oracle import Trajectory, describe, soft_targets
from ..language.vocab import EOS
from ..models.adgen import ADGenerator, pad_tokens
from ..models.agent import DescRLAgent
from ..models.memory import MemoryBatch, ObservationWindow, history_batch
from .buffer import RolloutBuffer
from .generator import load_adgen
from .losses import AuxTargets, aux_description_loss, goal_descriptor_loss, progress_target
from .ppo import LossBreakdown, ppo_update

LOG_COLUMNS = (
    "update", "policy", "value", "entropy", "goal", "rl", "ce", "aux", "lam", "total",
    "grad_norm", "mean_reward", "mean_return", "episodes",
) + METRIC_NAMES


def build_agent(cfg: TrainConfig) -> DescRLAgent:
    """Agent sized for cfg.env, initialized from the (seed, "init") stream."""
    patch = 2 * cfg.env.patch_half_width + 1
    return DescRLAgent(cfg.agent, patch, audio_dim(cfg.env), make_rng(cfg.seed, "init"))


# ==================== Description teachers ====================

class DescriptionTeacher(ABC):
    """Produces description targets for a window of a running trajectory."""

    def __init__(self, cfg: TrainConfig):
        self.cfg = cfg
        self.mode = cfg.agent.description_mode
        self.k = cfg.window - 1

    @abstractmethod
    def describe(self, world: World, traj: Trajectory, t: int) -> Tuple[List[int], Optional[np.ndarray]]:
        """(tokens, soft targets or None) for the window anchored at t."""


class OracleTeacher(DescriptionTeacher):
    """Template descriptions; soft targets are smoothed one-hot rows."""

    def describe(self, world, traj, t):
        cfg = self.cfg
        desc = describe(
            world, traj, t, self.mode, self.k, cfg.env.success_radius,
            cfg.env.patch_half_width, cfg.agent.max_desc_len,
        )
        soft = None
        if cfg.distill:
            soft = soft_targets(desc.tokens, cfg.smoothing, cfg.soft_temperature)
        return desc.tokens, soft


class AdgenTeacher(DescriptionTeacher):
    """
    A trained ADGenerator, kept frozen.

    Targets are its greedy output; soft targets are its teacher-forced
    softmax at ``soft_temperature`` over that output.
    """

    def __init__(self, cfg: TrainConfig, generator: ADGenerator):
        super().__init__(cfg)
        self.generator = generator
        self.decode_cfg = DecodeConfig()

    def describe(self, world, traj, t):
        cfg = self.cfg
        visual, actions = window_inputs(
            world, traj, t, self.mode, self.k, cfg.env.success_radius, cfg.env.patch_half_width
        )
        with no_grad():
            features, pad = self.generator.encode_trajectory(visual, actions)
        [desc] = self.generator.generate(
            features, pad, self.decode_cfg, mode=self.mode, max_len=cfg.agent.max_desc_len
        )
        tokens = desc.tokens or [EOS]
        soft = None
        if cfg.distill:
            soft = self.generator.token_distribution(
                features, pad, np.array([tokens]), cfg.soft_temperature
            )[0]
        return tokens, soft


def make_teacher(cfg: TrainConfig) -> Optional[DescriptionTeacher]:
    """Teacher for the configured aux task; None when no descriptions are needed."""
    if not cfg.aux.is_description:
        return None
    if cfg.teacher is TeacherKind.ADGEN:
        generator = load_adgen(cfg.adgen_checkpoint, cfg.adgen, cfg.env)
        logger.info("Using ADGenerator teacher from %s", cfg.adgen_checkpoint)
        return AdgenTeacher(cfg, generator)
    return OracleTeacher(cfg)


# ==================== Rollouts ====================

class RolloutCollector:
    """
    Steps an EnvPool with the current agent and fills RolloutBuffers.

    Episodes carry over between collections; a slot is reset as soon as
    its episode ends.
    """

    def __init__(
        self,
        agent: DescRLAgent,
        pool: EnvPool,
        cfg: TrainConfig,
        teacher: Optional[DescriptionTeacher],
        rng: np.random.Generator,
    ):
        self.agent = agent
        self.pool = pool
        self.cfg = cfg
        self.teacher = teacher
        self.rng = rng
        n = len(pool)
        self.windows = [ObservationWindow(cfg.agent.memory) for _ in range(n)]
        self.trajectories: List[Optional[Trajectory]] = [None] * n
        self.d0 = [0] * n
        self._returns = np.zeros(n)
        self.finished: List[float] = []
        for i, obs in enumerate(pool.reset_all()):
            self._start(i, obs)

    def _start(self, i: int, obs) -> None:
        env = self.pool.envs[i]
        self.windows[i].clear()
        self.windows[i].push(obs)
        self.trajectories[i] = Trajectory([obs.pose], [], list(env.goal_cells), env.goal_label)
        self.d0[i] = env.initial_distance()
        self._returns[i] = 0.0

    def collect(self) -> RolloutBuffer:
        """One horizon of experience with advantages and returns filled in."""
        cfg, ppo = self.cfg, self.cfg.ppo
        n = len(self.pool)
        buffer = RolloutBuffer(ppo.horizon, n, cfg.agent.max_desc_len, self.agent.vocab_size)
        labelled = self.teacher is not None
        wants_next = cfg.aux in (AuxTaskKind.NEXT_FRAME, AuxTaskKind.NEXT_SPECTROGRAM)
        self.finished = []

        for t in range(ppo.horizon):
            memory = MemoryBatch.stack([w.batch() for w in self.windows])
            actions, log_probs, values = self.agent.act(memory, self.rng)
            buffer.add_step(t, memory, actions, log_probs, values)
            for i in range(n):
                env = self.pool.envs[i]
                obs = self.windows[i].latest
                buffer.goal_location[t, i] = env.goal_offset()
                buffer.goal_category[t, i] = env.goal_label - 1
                buffer.progress[t, i] = progress_target(self.d0[i], env.distance)
                if labelled and obs.t % cfg.desc_stride == 0:
                    tokens, soft = self.teacher.describe(env.world, self.trajectories[i], obs.t)
                    buffer.set_description(t, i, tokens, soft)
                if t > 0 and not buffer.dones[t - 1, i]:
                    buffer.next_action[t - 1, i] = actions[i]
                    buffer.next_action_mask[t - 1, i] = True

                action = Action.from_index(actions[i])
                next_obs, outcome = env.step(action)
                buffer.rewards[t, i] = outcome.reward
                buffer.dones[t, i] = outcome.done
                if wants_next:
                    buffer.set_next(t, i, next_obs.visual, next_obs.audio)
                self._returns[i] += outcome.reward
                if outcome.done:
                    self.finished.append(float(self._returns[i]))
                    self._start(i, self.pool.reset(i))
                else:
                    self.trajectories[i].append(action, next_obs.pose)
                    self.windows[i].push(next_obs)

        memory = MemoryBatch.stack([w.batch() for w in self.windows])
        with no_grad():
            last_values = self.agent(memory).value.data.copy()
        buffer.finish(last_values, ppo.gamma, ppo.gae_lambda, ppo.normalize_advantages)
        return buffer

    @property
    def mean_return(self) -> Optional[float]:
        """Mean return of the episodes finished during the last collection."""
        return float(np.mean(self.finished)) if self.finished else None


# ==================== Step 1: ADPredictor pre-training ====================

@dataclass
class PretrainSample:
    memory: MemoryBatch
    tokens: List[int]
    soft: Optional[np.ndarray]
    goal_location: np.ndarray
    goal_category: int


def pretrain_samples(
    records: Sequence[DatasetRecord],
    cfg: TrainConfig,
    teacher: Optional[DescriptionTeacher] = None,
) -> List[PretrainSample]:
    """
    Replay records into agent memories at their anchor step.

    With a teacher the record's tokens are replaced by the teacher's.

    Raises:
        DescriptionError: If a record was built for another description mode
    """
    mode = cfg.agent.description_mode
    cache = WorldCache(cfg.world)
    samples = []
    for record in records:
        if record.mode != mode.value:
            raise DescriptionError(f"dataset holds {record.mode} descriptions", mode=mode.value)
        sample = replay(record, cache, cfg.env)
        if teacher is not None:
            tokens, soft = teacher.describe(sample.world, sample.trajectory, record.t)
        else:
            tokens, soft = list(record.tokens), None
            if cfg.distill:
                soft = soft_targets(tokens, cfg.smoothing, cfg.soft_temperature)
        samples.append(PretrainSample(
            memory=history_batch(sample.observations, cfg.agent.memory),
            tokens=tokens[:cfg.agent.max_desc_len],
            soft=None if soft is None else soft[:cfg.agent.max_desc_len],
            goal_location=sample.goal_offset,
            goal_category=sample.goal_label - 1,
        ))
    return samples


def pretrain_adpredictor(
    agent: DescRLAgent,
    records: Sequence[DatasetRecord],
    cfg: TrainConfig,
    teacher: Optional[DescriptionTeacher] = None,
) -> List[float]:
    """
    Step 1: train the description path only.

    Updates the observation encoders, goal descriptor, memory encoder,
    shared decoder, token embeddings and the ADPredictor. The policy
    path and auxiliary heads are never touched.

    Returns:
        Description CE per update

    Raises:
        ValidationError: If the dataset is empty
        DescriptionError: If the dataset mode differs from the agent's
    """
    if not records:
        raise ValidationError("Pre-training needs a non-empty dataset", field="dataset")
    samples = pretrain_samples(records, cfg, teacher)
    mode = cfg.agent.description_mode
    max_len = cfg.agent.max_desc_len
    optimizer = Adam(agent.pretrain_parameters(), lr=cfg.pretrain_lr, max_grad_norm=cfg.ppo.max_grad_norm)
    rng = make_rng(cfg.seed, "pretrain")
    size = min(cfg.pretrain_batch, len(samples))

    curve: List[float] = []
    for update in range(cfg.pretrain_updates):
        batch = [samples[int(i)] for i in rng.choice(len(samples), size=size, replace=False)]
        out = agent(MemoryBatch.stack([s.memory for s in batch]))
        targets = AuxTargets(
            mode=mode,
            desc_rows=np.arange(size),
            desc_tokens=pad_tokens([s.tokens for s in batch], max_len),
        )
        if cfg.distill:
            soft = np.zeros((size, max_len, agent.vocab_size))
            for row, s in enumerate(batch):
                soft[row, :len(s.soft)] = s.soft
            targets.desc_soft = soft
        ce = aux_description_loss(agent, out, targets, mode, cfg.distill, cfg.distill_temperature)
        goal = goal_descriptor_loss(
            out.goal,
            np.stack([s.goal_location for s in batch]),
            np.array([s.goal_category for s in batch]),
        )
        loss = ce + goal * cfg.ppo.goal_coef
        optimizer.step(backward(loss, optimizer.params))
        curve.append(ce.item())
        if (update + 1) % 50 == 0:
            logger.info("Pre-training update %d: CE %.4f", update + 1, curve[-1])
    return curve


# ==================== Step 2: joint training ====================

class TrainingLog:
    """Per-update rows, mirrored to CSV when a path is given."""

    def __init__(self, path: Optional[str] = None):
        self.path = path
        self.rows: List[Dict[str, Any]] = []
        if path is not None:
            os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
            with open(path, "w", encoding="utf-8", newline="") as f:
                csv.writer(f, lineterminator="\n").writerow(LOG_COLUMNS)

    def append(self, row: Dict[str, Any]) -> None:
        self.rows.append(row)
        if self.path is None:
            return
        with open(self.path, "a", encoding="utf-8", newline="") as f:
            csv.writer(f, lineterminator="\n").writerow([_format(row.get(c)) for c in LOG_COLUMNS])


def _format(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


@dataclass
class TrainResult:
    agent: DescRLAgent
    log: List[Dict[str, Any]] = field(default_factory=list)
    pretrain_curve: List[float] = field(default_factory=list)


def evaluate_agent(agent: DescRLAgent, worlds: Sequence[World], cfg: TrainConfig) -> Dict[str, Optional[float]]:
    eval_cfg = EvalConfig(episodes=cfg.eval_episodes, seed=derive_seed(cfg.seed, "eval"))
    records = run_episodes(DescRLPolicy(agent), worlds, cfg.eval_episodes, eval_cfg, cfg.env)
    return compute_metrics(records)


def train_joint(
    agent: DescRLAgent,
    cfg: TrainConfig,
    teacher: Optional[DescriptionTeacher] = None,
    out_dir: Optional[str] = None,
    worlds: Optional[Sequence[World]] = None,
    eval_worlds: Optional[Sequence[World]] = None,
) -> List[Dict[str, Any]]:
    """
    Step 2: alternate rollout collection and PPO updates with the aux loss.

    Every ``eval_every`` updates (and after the last) the greedy agent is
    evaluated on held-out worlds. Deterministic for a given cfg.seed.

    Raises:
        ValidationError: If the training world pool is empty
        TrainingError: If a loss turns NaN/Inf
    """
    cache = WorldCache(cfg.world)
    worlds = list(worlds) if worlds is not None else cache.split("train", cfg.n_train_worlds)
    if eval_worlds is None:
        eval_worlds = cache.split("val", cfg.n_eval_worlds)
    pool = EnvPool(worlds, cfg.env, cfg.ppo.n_envs, make_rng(cfg.seed, "pool"))
    optimizer = Adam(agent.parameters(), lr=cfg.ppo.lr, max_grad_norm=cfg.ppo.max_grad_norm)
    collector = RolloutCollector(agent, pool, cfg, teacher, make_rng(cfg.seed, "rollout"))
    ppo_rng = make_rng(cfg.seed, "ppo")
    log = TrainingLog(os.path.join(out_dir, "train_log.csv") if out_dir else None)

    for update in range(1, cfg.n_updates + 1):
        buffer = collector.collect()
        losses: LossBreakdown = ppo_update(agent, optimizer, buffer, cfg, ppo_rng, out_dir, update)
        row: Dict[str, Any] = {"update": update, **losses.to_dict()}
        row["mean_reward"] = float(buffer.rewards.mean())
        row["mean_return"] = collector.mean_return
        row["episodes"] = len(collector.finished)
        last = update == cfg.n_updates
        if eval_worlds and (last or (cfg.eval_every and update % cfg.eval_every == 0)):
            row.update(evaluate_agent(agent, eval_worlds, cfg))
            logger.info("Update %d: eval SR %.3f SPL %.3f", update, row["SR"], row["SPL"])
        log.append(row)
        logger.info(
            "Update %d/%d: total %.4f, mean reward %.4f",
            update, cfg.n_updates, losses.total, row["mean_reward"],
        )
    return log.rows


def run_training(
    cfg: TrainConfig,
    out_dir: Optional[str] = None,
    dataset: Optional[Sequence[DatasetRecord]] = None,
    agent: Optional[DescRLAgent] = None,
) -> TrainResult:
    """
    Build the agent and run step 1 (when enabled) then step 2.

    Pre-training runs only for description aux tasks. Without a dataset
    one is built from the (seed, "dataset") stream. Checkpoints
    ``step1.ckpt`` and ``agent.ckpt`` land in ``out_dir``.
    """
    cfg.validate()
    if agent is None:
        agent = build_agent(cfg)
    teacher = make_teacher(cfg)
    result = TrainResult(agent)

    if cfg.pretrain and cfg.aux.is_description:
        if dataset is None:
            dataset = build_dataset(
                cfg.seed, cfg.dataset_size, cfg.agent.description_mode, cfg.window - 1,
                cfg.world, cfg.env, cfg.n_train_worlds, max_len=cfg.agent.max_desc_len,
            )
        result.pretrain_curve = pretrain_adpredictor(
            agent, dataset, cfg, teacher if cfg.teacher is TeacherKind.ADGEN else None
        )
        if out_dir is not None:
            save_checkpoint(os.path.join(out_dir, "step1.ckpt"), agent.parameters())

    result.log = train_joint(agent, cfg, teacher, out_dir)
    if out_dir is not None:
        save_checkpoint(os.path.join(out_dir, "agent.ckpt"), agent.parameters())
    return result
