"""Trainable networks: the DescRL agent and the ADGenerator."""

from .memory import MemoryBatch, ObservationWindow, history_batch, window_batch
from .encoders import GoalDescriptor, GoalDescriptorNet, ObservationEncoder, one_hot_visual
from .adgen import ADGenerator, pad_tokens, pad_windows, shift_right
from .agent import AgentOutput, DescRLAgent

__all__ = [
    "MemoryBatch", "ObservationWindow", "history_batch", "window_batch",
    "GoalDescriptor", "GoalDescriptorNet", "ObservationEncoder", "one_hot_visual",
    "ADGenerator", "pad_tokens", "pad_windows", "shift_right",
    "AgentOutput", "DescRLAgent",
]
