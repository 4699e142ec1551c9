"""
Token selection for autoregressive description decoding.

greedy   argmax of the logits (temperature never changes it)
top_k    sample from the renormalized k most likely tokens
top_p    sample from the smallest most-likely prefix whose mass reaches p
"""

from typing import Callable, List, Optional

import numpy as np

from ..core.base import DecodeConfig, DecodeStrategy
from ..language.vocab import EOS


def tempered_probs(logits: np.ndarray, tau: float) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64) / tau
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def nucleus(probs: np.ndarray, p: float) -> np.ndarray:
    """Token ids of the smallest prefix (by descending probability) with mass >= p."""
    order = np.argsort(-probs, kind="stable")
    cumulative = np.cumsum(probs[order])
    size = int(np.searchsorted(cumulative, p - 1e-12)) + 1
    return order[:min(size, len(order))]


def candidate_set(probs: np.ndarray, cfg: DecodeConfig) -> np.ndarray:
    if cfg.strategy is DecodeStrategy.TOP_K:
        order = np.argsort(-probs, kind="stable")
        return order[:min(cfg.k, len(order))]
    if cfg.strategy is DecodeStrategy.TOP_P:
        return nucleus(probs, cfg.p)
    return np.array([int(np.argmax(probs))])


def select_token(logits: np.ndarray, cfg: DecodeConfig, rng: Optional[np.random.Generator] = None) -> int:
    """
    Next token id for one row of logits.

    Raises:
        ValidationError: If the decode config is invalid
    """
    cfg.validate()
    logits = np.asarray(logits)
    if cfg.strategy is DecodeStrategy.GREEDY:
        return int(np.argmax(logits))
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    probs = tempered_probs(logits, cfg.tau)
    candidates = candidate_set(probs, cfg)
    kept = probs[candidates]
    return int(candidates[rng.choice(len(candidates), p=kept / kept.sum())])


def autoregress(
    step_logits: Callable[[np.ndarray], np.ndarray],
    batch: int,
    max_len: int,
    cfg: DecodeConfig,
    rng: Optional[np.random.Generator] = None,
) -> List[List[int]]:
    """
    Decode a batch of token sequences.

    Args:
        step_logits: Maps the tokens chosen so far, (B, t) int64, to the
            logits of the next position, (B, V)
        batch: Number of sequences
        max_len: Longest sequence including EOS
        cfg: Token selection settings

    Returns:
        One token list per row, ending with EOS unless max_len was reached
    """
    cfg.validate()
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    tokens = np.zeros((batch, 0), dtype=np.int64)
    finished = np.zeros(batch, dtype=bool)
    for _ in range(max_len):
        logits = step_logits(tokens)
        chosen = np.array([select_token(row, cfg, rng) for row in logits], dtype=np.int64)
        chosen[finished] = EOS
        tokens = np.concatenate([tokens, chosen[:, None]], axis=1)
        finished |= chosen == EOS
        if finished.all():
            break
    out = []
    for row in tokens:
        seq = []
        for tok in row:
            seq.append(int(tok))
            if tok == EOS:
                break
        out.append(seq)
    return out
