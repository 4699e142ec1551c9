"""
Observation encoders and the goal descriptor network.

Visual patches arrive as channel indices and are expanded to one-hot
before the patch MLP; the other modalities are small MLPs. Modality
features are concatenated and projected to the model width.
"""

from dataclasses import dataclass

import numpy as np

from ..core.base import NUM_ACTIONS
from ..core.nn import MLP, Linear, Module
from ..core.tensor import Tensor, concat, get_default_dtype, softmax
from ..env.sim import NUM_CHANNELS
from ..env.world import N_SEM


def one_hot_visual(visual: np.ndarray) -> np.ndarray:
    """(..., P, P) channel indices -> (..., P * P * C) one-hot rows."""
    visual = np.asarray(visual, dtype=np.int64)
    eye = np.eye(NUM_CHANNELS, dtype=get_default_dtype())
    flat = eye[visual]
    return flat.reshape(visual.shape[:-2] + (-1,))


class ObservationEncoder(Module):
    """
    (visual, audio, pose, previous action) -> d_model step embedding.

    Silent steps encode the zero audio vector like any other input.
    """

    def __init__(self, patch: int, audio: int, d_hidden: int, d_model: int, rng: np.random.Generator):
        super().__init__()
        self.visual = MLP([patch * patch * NUM_CHANNELS, d_hidden], rng)
        self.audio = MLP([audio, d_hidden], rng)
        self.pose = MLP([4, d_hidden], rng)
        self.prev_action = MLP([NUM_ACTIONS, d_hidden], rng)
        self.project = Linear(4 * d_hidden, d_model, rng)

    def forward(self, visual: np.ndarray, audio: np.ndarray, pose: np.ndarray, prev_action: np.ndarray) -> Tensor:
        dtype = get_default_dtype()
        parts = [
            self.visual(Tensor(one_hot_visual(visual))),
            self.audio(Tensor(np.asarray(audio, dtype=dtype))),
            self.pose(Tensor(np.asarray(pose, dtype=dtype))),
            self.prev_action(Tensor(np.asarray(prev_action, dtype=dtype))),
        ]
        return self.project(concat(parts, axis=-1))


@dataclass
class GoalDescriptor:
    """
    Predicted goal: location offset (forward, right) in cells and category.

    Attributes:
        location: (B, 2)
        category_logits: (B, N_SEM)
        category: (B, N_SEM) softmax of the logits
    """
    location: Tensor
    category_logits: Tensor
    category: Tensor

    def features(self) -> Tensor:
        """v_LC = concat(location, category)."""
        return concat([self.location, self.category], axis=-1)


# Location targets are divided by this before regression.
LOCATION_SCALE = 10.0


class GoalDescriptorNet(Module):
    """
    Audio history -> GoalDescriptor.

    Frames are encoded one by one and mean-pooled over audible, unpadded
    slots. An all-silent history pools to zeros, so the heads fall back to
    their biases: the learned prior.
    """

    def __init__(self, audio: int, d_hidden: int, rng: np.random.Generator):
        super().__init__()
        self.frame = MLP([audio, d_hidden, d_hidden], rng)
        self.location_head = Linear(d_hidden, 2, rng)
        self.category_head = Linear(d_hidden, N_SEM, rng)

    def forward(self, audio: np.ndarray, pad: np.ndarray) -> GoalDescriptor:
        dtype = get_default_dtype()
        audio = np.asarray(audio, dtype=dtype)
        audible = np.any(audio != 0, axis=-1) & ~np.asarray(pad, dtype=bool)
        weights = audible.astype(dtype)
        counts = np.maximum(weights.sum(axis=1, keepdims=True), 1.0)
        h = self.frame(Tensor(audio))
        pooled = (h * (weights / counts)[..., None]).sum(axis=1)
        logits = self.category_head(pooled)
        location = self.location_head(pooled) * LOCATION_SCALE
        return GoalDescriptor(location, logits, softmax(logits, axis=-1))
