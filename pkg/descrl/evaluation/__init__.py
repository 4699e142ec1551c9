"""Episode metrics and description decoding. The episode runner lives in ``evaluation.runner``."""

from .decoding import autoregress, nucleus, select_token, tempered_probs
from .metrics import EpisodeRecord, compute_metrics

__all__ = [
    "autoregress", "nucleus", "select_token", "tempered_probs",
    "EpisodeRecord", "compute_metrics",
]
