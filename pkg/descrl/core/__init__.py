"""Core: configuration, seeding and the autodiff engine."""

from .base import (
    ACTIONS, NUM_ACTIONS, Action, Heading, RewardMode, RewardSign, DescriptionMode,
    AuxTaskKind, DecodeStrategy, TeacherKind, WorldConfig, EnvConfig, AgentConfig,
    AdgenConfig, PPOConfig, DecodeConfig, EvalConfig, TrainConfig, apply_overrides,
    load_config,
)
from .tensor import Tensor, Parameter, Graph, backward, no_grad, precision
from .optim import Adam, AdamState, adam_update, clip_grad_norm
from .gradcheck import gradient_check
from .checkpoint import save_checkpoint, load_checkpoint, structure_hash

__all__ = [
    "ACTIONS", "NUM_ACTIONS", "Action", "Heading", "RewardMode", "RewardSign",
    "DescriptionMode", "AuxTaskKind", "DecodeStrategy", "TeacherKind",
    "WorldConfig", "EnvConfig", "AgentConfig", "AdgenConfig", "PPOConfig",
    "DecodeConfig", "EvalConfig", "TrainConfig", "apply_overrides", "load_config",
    "Tensor", "Parameter", "Graph", "backward", "no_grad", "precision",
    "Adam", "AdamState", "adam_update", "clip_grad_norm", "gradient_check",
    "save_checkpoint", "load_checkpoint", "structure_hash",
]
