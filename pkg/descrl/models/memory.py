"""
Agent memory: the last M observations, newest first, padded at the end.
"""

from collections import deque
from dataclasses import dataclass
from typing import Deque, List, Sequence

import numpy as np

from ..core.base import NUM_ACTIONS
from ..env.sim import Observation
from ..exceptions import ValidationError


@dataclass
class MemoryBatch:
    """
    Batched memory windows.

    Attributes:
        visual: (B, M, P, P) int8 channel indices
        audio: (B, M, A) float32
        pose: (B, M, 4) float32
        prev_action: (B, M, 4) float32
        pad: (B, M) bool, True on padded slots
    """
    visual: np.ndarray
    audio: np.ndarray
    pose: np.ndarray
    prev_action: np.ndarray
    pad: np.ndarray

    def __len__(self) -> int:
        return int(self.visual.shape[0])

    @property
    def memory(self) -> int:
        return int(self.visual.shape[1])

    def take(self, rows) -> "MemoryBatch":
        return MemoryBatch(
            self.visual[rows], self.audio[rows], self.pose[rows],
            self.prev_action[rows], self.pad[rows],
        )

    def extend(self, extra: int) -> "MemoryBatch":
        """Same memory with ``extra`` more padded slots at the end."""
        def grow(arr: np.ndarray, fill) -> np.ndarray:
            shape = (arr.shape[0], extra) + arr.shape[2:]
            return np.concatenate([arr, np.full(shape, fill, dtype=arr.dtype)], axis=1)

        return MemoryBatch(
            grow(self.visual, 0), grow(self.audio, 0.0), grow(self.pose, 0.0),
            grow(self.prev_action, 0.0), grow(self.pad, True),
        )

    @classmethod
    def stack(cls, batches: Sequence["MemoryBatch"]) -> "MemoryBatch":
        return cls(
            np.concatenate([b.visual for b in batches]),
            np.concatenate([b.audio for b in batches]),
            np.concatenate([b.pose for b in batches]),
            np.concatenate([b.prev_action for b in batches]),
            np.concatenate([b.pad for b in batches]),
        )


class ObservationWindow:
    """Rolling window over one episode's observations."""

    def __init__(self, memory: int):
        self.memory = memory
        self._items: Deque[Observation] = deque(maxlen=memory)

    def push(self, obs: Observation) -> None:
        self._items.appendleft(obs)

    def clear(self) -> None:
        self._items.clear()

    def __len__(self) -> int:
        return len(self._items)

    @property
    def latest(self) -> Observation:
        return self._items[0]

    def batch(self) -> MemoryBatch:
        """This window as a batch of one."""
        return window_batch(list(self._items), self.memory)


def window_batch(observations: List[Observation], memory: int) -> MemoryBatch:
    """
    One memory row from observations ordered newest first.

    Raises:
        ValidationError: If no observation is given
    """
    if not observations:
        raise ValidationError("memory window is empty", field="observations")
    first = observations[0]
    size = first.visual.shape[0]
    visual = np.zeros((1, memory, size, size), dtype=np.int8)
    audio = np.zeros((1, memory, first.audio.shape[0]), dtype=np.float32)
    pose = np.zeros((1, memory, 4), dtype=np.float32)
    prev = np.zeros((1, memory, NUM_ACTIONS), dtype=np.float32)
    pad = np.ones((1, memory), dtype=bool)
    for i, obs in enumerate(observations[:memory]):
        visual[0, i] = obs.visual
        audio[0, i] = obs.audio
        pose[0, i] = obs.pose_features
        prev[0, i] = obs.prev_action_vector()
        pad[0, i] = False
    return MemoryBatch(visual, audio, pose, prev, pad)


def history_batch(observations: Sequence[Observation], memory: int) -> MemoryBatch:
    """Memory at the last of a chronological observation list."""
    recent = list(observations[-memory:])
    recent.reverse()
    return window_batch(recent, memory)
