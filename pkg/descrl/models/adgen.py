"""
Sequence-to-sequence action description generator.

The encoder reads (visual patch, next action) pairs of a trajectory
window; the decoder emits description tokens with teacher forcing during
training and autoregressively at inference.
"""

from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..core.base import NUM_ACTIONS, AdgenConfig, DecodeConfig, DescriptionMode, logger
from ..core.functional import cross_entropy
from ..core.nn import (
    MLP, EncoderLayer, Embedding, LayerNorm, Linear, Module, ModuleList, causal_mask,
    decoder_stack, run_decoders, sinusoidal_encoding,
)
from ..core.tensor import Tensor, concat, get_default_dtype, no_grad, softmax
from ..env.sim import NUM_CHANNELS
from ..exceptions import ValidationError
from ..language.oracle import Description
from ..language.vocab import BOS, PAD, VOCAB
from ..evaluation.decoding import autoregress
from .encoders import one_hot_visual


def pad_windows(
    windows: Sequence[Tuple[np.ndarray, np.ndarray]],
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Stack variable-length (visual (n, P, P), actions (n, 4)) windows.

    Returns:
        visual (B, T, P, P), actions (B, T, 4), pad (B, T) True on padding
    """
    length = max(len(v) for v, _ in windows)
    size = windows[0][0].shape[-1]
    visual = np.zeros((len(windows), length, size, size), dtype=np.int8)
    actions = np.zeros((len(windows), length, NUM_ACTIONS), dtype=np.float32)
    pad = np.ones((len(windows), length), dtype=bool)
    for i, (v, a) in enumerate(windows):
        n = len(v)
        visual[i, :n] = v
        actions[i, :n] = a
        pad[i, :n] = False
    return visual, actions, pad


def pad_tokens(sequences: Sequence[Sequence[int]], length: Optional[int] = None) -> np.ndarray:
    length = length or max(len(s) for s in sequences)
    out = np.full((len(sequences), length), PAD, dtype=np.int64)
    for i, seq in enumerate(sequences):
        n = min(length, len(seq))
        out[i, :n] = seq[:n]
    return out


def shift_right(targets: np.ndarray) -> np.ndarray:
    """Decoder inputs: BOS followed by targets without their last position."""
    bos = np.full((targets.shape[0], 1), BOS, dtype=np.int64)
    return np.concatenate([bos, targets[:, :-1]], axis=1)


class ADGenerator(Module):
    """
    Encoder-decoder transformer mapping trajectory windows to descriptions.

    Example:
        gen = ADGenerator(AdgenConfig(d_model=32), patch=7, rng=rng)
        feats, pad = gen.encode_trajectory(visual, actions, pad)
        loss = gen.teacher_forced_loss(feats, pad, targets)
    """

    def __init__(
        self,
        cfg: AdgenConfig,
        patch: int,
        rng: np.random.Generator,
        vocab_size: int = len(VOCAB),
        max_window: int = 64,
    ):
        super().__init__()
        self.cfg = cfg
        self.vocab_size = vocab_size
        d = cfg.d_model
        self.visual = MLP([patch * patch * NUM_CHANNELS, cfg.d_hidden], rng)
        self.pair = Linear(cfg.d_hidden + NUM_ACTIONS, d, rng)
        self.encoder = ModuleList(
            [EncoderLayer(d, cfg.n_heads, cfg.d_ff, rng) for _ in range(cfg.n_enc_layers)]
        )
        self.encoder_norm = LayerNorm(d)
        self.tokens = Embedding(vocab_size, d, rng)
        self.decoder = decoder_stack(cfg.n_dec_layers, d, cfg.n_heads, cfg.d_ff, rng)
        self.decoder_norm = LayerNorm(d)
        self.token_head = Linear(d, vocab_size, rng, zero_init=True)
        object.__setattr__(self, "_pe", sinusoidal_encoding(max(max_window, cfg.max_desc_len) + 1, d))
        logger.debug("ADGenerator with %d parameters", self.num_parameters())

    def _positions(self, length: int) -> np.ndarray:
        if length > self._pe.shape[0]:
            object.__setattr__(self, "_pe", sinusoidal_encoding(length, self.cfg.d_model))
        return self._pe[:length].astype(get_default_dtype())

    def encode_trajectory(
        self,
        visual: np.ndarray,
        actions: np.ndarray,
        pad: Optional[np.ndarray] = None,
    ) -> Tuple[Tensor, np.ndarray]:
        """
        Features of (f(V_i), a_{i+1}) pairs with positional encoding.

        Accepts a single window (T, P, P) / (T, 4) or a batch (B, T, ...).

        Raises:
            ValidationError: If visual frames and actions are not paired one to one
        """
        visual = np.asarray(visual)
        actions = np.asarray(actions, dtype=get_default_dtype())
        if visual.ndim == 3:
            visual, actions = visual[None], actions[None]
        if visual.shape[:2] != actions.shape[:2]:
            raise ValidationError(
                f"{visual.shape[1]} visual frames do not pair with {actions.shape[1]} actions",
                field="actions",
            )
        b, t = visual.shape[:2]
        pad = np.zeros((b, t), dtype=bool) if pad is None else np.asarray(pad, dtype=bool)
        x = concat([self.visual(Tensor(one_hot_visual(visual))), Tensor(actions)], axis=-1)
        x = self.pair(x) + self._positions(t)
        key_mask = pad[:, None, None, :]
        for layer in self.encoder:
            x = layer(x, key_mask)
        return self.encoder_norm(x), pad

    def decode_logits(self, features: Tensor, pad: np.ndarray, inputs: np.ndarray) -> Tensor:
        """Logits (B, L, V) for decoder inputs (B, L) under a causal mask."""
        inputs = np.asarray(inputs, dtype=np.int64)
        length = inputs.shape[1]
        x = self.tokens(inputs) + self._positions(length)
        x = run_decoders(
            self.decoder, x, features, causal_mask(length)[None, None], pad[:, None, None, :]
        )
        return self.token_head(self.decoder_norm(x))

    def teacher_forced_loss(self, features: Tensor, pad: np.ndarray, targets: np.ndarray) -> Tensor:
        """
        Mean token cross-entropy over non-PAD target positions.

        Raises:
            ValidationError: If a target is empty or holds ids outside the vocabulary
        """
        targets = np.asarray(targets, dtype=np.int64)
        if targets.ndim == 1:
            targets = targets[None]
        if targets.size == 0 or np.any(np.all(targets == PAD, axis=1)):
            raise ValidationError("Empty target description", field="targets")
        if targets.min() < 0 or targets.max() >= self.vocab_size:
            raise ValidationError(f"token id outside [0, {self.vocab_size})", field="targets")
        logits = self.decode_logits(features, pad, shift_right(targets))
        return cross_entropy(logits, targets, ignore_index=PAD)

    def token_distribution(
        self, features: Tensor, pad: np.ndarray, targets: np.ndarray, temperature: float = 1.0
    ) -> np.ndarray:
        """Teacher-forced softmax(z / T) over the vocabulary, (B, L, V)."""
        with no_grad():
            logits = self.decode_logits(features, pad, shift_right(np.asarray(targets)))
            return softmax(logits * (1.0 / temperature), axis=-1).data

    def generate(
        self,
        features: Tensor,
        pad: np.ndarray,
        cfg: Optional[DecodeConfig] = None,
        rng: Optional[np.random.Generator] = None,
        mode: DescriptionMode = DescriptionMode.PAST,
        max_len: Optional[int] = None,
    ) -> List[Description]:
        """Decode one description per window until EOS or max_len."""
        cfg = cfg or DecodeConfig()
        max_len = max_len or self.cfg.max_desc_len
        batch = features.shape[0]

        def step_logits(tokens: np.ndarray) -> np.ndarray:
            inputs = np.concatenate([np.full((batch, 1), BOS, dtype=np.int64), tokens], axis=1)
            return self.decode_logits(features, pad, inputs).data[:, -1]

        with no_grad():
            sequences = autoregress(step_logits, batch, max_len, cfg, rng)
        return [Description(seq, mode) for seq in sequences]
