"""Description vocabulary, the rule-based describer and offline datasets."""

from .vocab import BOS, EOS, PAD, VOCAB, Vocabulary
from .oracle import Description, Trajectory, describe, soft_targets
from .dataset import DatasetRecord, build_dataset, load_dataset, replay

__all__ = [
    "BOS", "EOS", "PAD", "VOCAB", "Vocabulary",
    "Description", "Trajectory", "describe", "soft_targets",
    "DatasetRecord", "build_dataset", "load_dataset", "replay",
]
