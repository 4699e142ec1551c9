__version__ = "0.1.0"
__author__ = "EndermanHack19"
__license__ = "MIT"

# Core imports
from .core.base import (
    Action, AuxTaskKind, DescriptionMode, DecodeStrategy, TeacherKind,
    WorldConfig, EnvConfig, AgentConfig, AdgenConfig, PPOConfig, DecodeConfig,
    EvalConfig, TrainConfig, apply_overrides, load_config,
)

# Exceptions
from .exceptions import (
    DescRLError,
    ShapeError,
    GradientError,
    ValidationError,
    InfeasibleWorldError,
    EpisodeError,
    UnreachableGoalError,
    DescriptionError,
    CheckpointError,
    TrainingError,
    AuxTaskNotFoundError,
)


def __getattr__(name: str):
    """Lazy import of the heavier entry points."""
    entry_points = {
        'NavEnv': '.env.sim',
        'World': '.env.world',
        'generate_world': '.env.world',
        'build_dataset': '.language.dataset',
        'describe': '.language.oracle',
        'DescRLAgent': '.models.agent',
        'ADGenerator': '.models.adgen',
        'train_adgen': '.training.generator',
        'run_training': '.training.trainer',
        'pretrain_adpredictor': '.training.trainer',
        'train_joint': '.training.trainer',
        'run_episodes': '.evaluation.runner',
        'compute_metrics': '.evaluation.metrics',
    }

    if name in entry_points:
        import importlib
        module = importlib.import_module(entry_points[name], package='descrl')
        return getattr(module, name)

    raise AttributeError(f"module 'descrl' has no attribute '{name}'")


__all__ = [
    # Version
    "__version__",
    # Core
    "Action",
    "AuxTaskKind",
    "DescriptionMode",
    "DecodeStrategy",
    "TeacherKind",
    "WorldConfig",
    "EnvConfig",
    "AgentConfig",
    "AdgenConfig",
    "PPOConfig",
    "DecodeConfig",
    "EvalConfig",
    "TrainConfig",
    "apply_overrides",
    "load_config",
    # Exceptions
    "DescRLError",
    "ShapeError",
    "GradientError",
    "ValidationError",
    "InfeasibleWorldError",
    "EpisodeError",
    "UnreachableGoalError",
    "DescriptionError",
    "CheckpointError",
    "TrainingError",
    "AuxTaskNotFoundError",
    # Lazily loaded
    "NavEnv",
    "World",
    "generate_world",
    "build_dataset",
    "describe",
    "DescRLAgent",
    "ADGenerator",
    "train_adgen",
    "run_training",
    "pretrain_adpredictor",
    "train_joint",
    "run_episodes",
    "compute_metrics",
]
