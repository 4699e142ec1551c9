"""
Rollout storage and generalized advantage estimation.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..exceptions import ValidationError
from ..language.vocab import PAD
from ..models.memory import MemoryBatch


def compute_gae(
    rewards: np.ndarray,
    values: np.ndarray,
    dones: np.ndarray,
    last_values: np.ndarray,
    gamma: float = 0.99,
    lam: float = 0.95,
    normalize: bool = True,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    GAE over a (T, ...) rollout.

    dones[t] marks an episode that ended with step t; the bootstrap value
    and the running estimate reset there.

    Returns:
        (advantages, returns); returns are computed before normalization
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=bool)
    if rewards.shape != values.shape or rewards.shape != dones.shape:
        raise ValidationError("rewards, values and dones must align", field="rewards")
    horizon = rewards.shape[0]
    advantages = np.zeros_like(rewards)
    running = np.zeros(rewards.shape[1:])
    next_value = np.asarray(last_values, dtype=np.float64)
    for t in range(horizon - 1, -1, -1):
        nonterminal = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * nonterminal - values[t]
        running = delta + gamma * lam * nonterminal * running
        advantages[t] = running
        next_value = values[t]
    returns = advantages + values
    if normalize:
        advantages = (advantages - advantages.mean()) / (advantages.std() + 1e-8)
    return advantages, returns


@dataclass
class RolloutBuffer:
    """
    Fixed-horizon storage for n_envs parallel environments.

    Per-step arrays are (T, N); description targets are kept only on
    labelled steps, flagged by ``desc_mask``.
    """
    horizon: int
    n_envs: int
    max_desc_len: int
    vocab_size: int
    memories: List[MemoryBatch] = field(default_factory=list)
    actions: Optional[np.ndarray] = None
    log_probs: Optional[np.ndarray] = None
    values: Optional[np.ndarray] = None
    rewards: Optional[np.ndarray] = None
    dones: Optional[np.ndarray] = None
    desc_tokens: Optional[np.ndarray] = None
    desc_mask: Optional[np.ndarray] = None
    desc_soft: Dict[Tuple[int, int], np.ndarray] = field(default_factory=dict)
    next_action: Optional[np.ndarray] = None
    next_action_mask: Optional[np.ndarray] = None
    progress: Optional[np.ndarray] = None
    next_visual: Optional[np.ndarray] = None
    next_audio: Optional[np.ndarray] = None
    goal_location: Optional[np.ndarray] = None
    goal_category: Optional[np.ndarray] = None
    advantages: Optional[np.ndarray] = None
    returns: Optional[np.ndarray] = None

    def __post_init__(self):
        t, n = self.horizon, self.n_envs
        self.actions = np.zeros((t, n), dtype=np.int64)
        self.log_probs = np.zeros((t, n))
        self.values = np.zeros((t, n))
        self.rewards = np.zeros((t, n))
        self.dones = np.zeros((t, n), dtype=bool)
        self.desc_tokens = np.full((t, n, self.max_desc_len), PAD, dtype=np.int64)
        self.desc_mask = np.zeros((t, n), dtype=bool)
        self.next_action = np.zeros((t, n), dtype=np.int64)
        self.next_action_mask = np.zeros((t, n), dtype=bool)
        self.progress = np.zeros((t, n))
        self.goal_location = np.zeros((t, n, 2))
        self.goal_category = np.zeros((t, n), dtype=np.int64)

    def __len__(self) -> int:
        return self.horizon * self.n_envs

    def add_step(
        self,
        t: int,
        memory: MemoryBatch,
        actions: np.ndarray,
        log_probs: np.ndarray,
        values: np.ndarray,
    ) -> None:
        if len(self.memories) != t:
            raise ValidationError(f"step {t} added out of order", field="t")
        self.memories.append(memory)
        self.actions[t] = actions
        self.log_probs[t] = log_probs
        self.values[t] = values

    def set_description(self, t: int, env: int, tokens: List[int], soft: Optional[np.ndarray] = None) -> None:
        n = min(len(tokens), self.max_desc_len)
        self.desc_tokens[t, env] = PAD
        self.desc_tokens[t, env, :n] = tokens[:n]
        self.desc_mask[t, env] = True
        if soft is not None:
            self.desc_soft[(t, env)] = soft[:n]

    def set_next(self, t: int, env: int, visual: np.ndarray, audio: np.ndarray) -> None:
        if self.next_visual is None:
            self.next_visual = np.zeros((self.horizon, self.n_envs) + visual.shape, dtype=np.int8)
            self.next_audio = np.zeros((self.horizon, self.n_envs) + audio.shape)
        self.next_visual[t, env] = visual
        self.next_audio[t, env] = audio

    def finish(self, last_values: np.ndarray, gamma: float, lam: float, normalize: bool = True) -> None:
        """Populate advantages and returns; required before any PPO epoch."""
        if len(self.memories) != self.horizon:
            raise ValidationError(
                f"buffer holds {len(self.memories)} of {self.horizon} steps", field="horizon"
            )
        self.advantages, self.returns = compute_gae(
            self.rewards, self.values, self.dones, last_values, gamma, lam, normalize
        )

    # ==================== Minibatches ====================

    def flat_memory(self) -> MemoryBatch:
        """All steps as one (T * N) batch, row index t * N + env."""
        return MemoryBatch.stack(self.memories)

    def soft_targets(self, rows: np.ndarray) -> np.ndarray:
        """(len(rows), L, V) soft targets for labelled rows; PAD rows stay zero."""
        out = np.zeros((len(rows), self.max_desc_len, self.vocab_size))
        for i, row in enumerate(rows):
            key = (int(row) // self.n_envs, int(row) % self.n_envs)
            soft = self.desc_soft.get(key)
            if soft is not None:
                out[i, :len(soft)] = soft
        return out

    def flat(self, name: str) -> np.ndarray:
        value = getattr(self, name)
        return value.reshape((len(self),) + value.shape[2:])

