"""PPO, auxiliary objectives and the two training phases."""

from .buffer import RolloutBuffer, compute_gae
from .losses import (
    AuxTargets, aux_baseline_loss, aux_description_loss, available_aux_tasks,
    goal_descriptor_loss, progress_target, register_aux_task,
)
from .ppo import LossBreakdown, clipped_surrogate, ppo_update
from .generator import AdgenSample, EpochLog, load_adgen, prepare_samples, train_adgen
from .trainer import (
    AdgenTeacher, DescriptionTeacher, OracleTeacher, RolloutCollector, TrainResult,
    build_agent, make_teacher, pretrain_adpredictor, run_training, train_joint,
)

__all__ = [
    "RolloutBuffer", "compute_gae",
    "AuxTargets", "aux_baseline_loss", "aux_description_loss", "available_aux_tasks",
    "goal_descriptor_loss", "progress_target", "register_aux_task",
    "LossBreakdown", "clipped_surrogate", "ppo_update",
    "AdgenSample", "EpochLog", "load_adgen", "prepare_samples", "train_adgen",
    "AdgenTeacher", "DescriptionTeacher", "OracleTeacher", "RolloutCollector", "TrainResult",
    "build_agent", "make_teacher", "pretrain_adpredictor", "run_training", "train_joint",
]
