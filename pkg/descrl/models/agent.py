"""
DescRL agent: observation encoder, goal descriptor, memory encoder, and two
decoder heads (policy and ADPredictor) over a physically shared decoder stack.

Memory layout, newest first:

    slot 0        v_LC = project(concat(L_hat, C_hat))
    slot 1..M     step embeddings e_t, e_{t-1}, ... plus positional encoding
                  (padded slots at the end are masked out)
"""

from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..core.base import NUM_ACTIONS, AgentConfig, DecodeConfig, logger
from ..core.nn import (
    EncoderLayer, Embedding, LayerNorm, Linear, Module, ModuleList, causal_mask,
    decoder_stack, run_decoders, sinusoidal_encoding,
)
from ..core.tensor import (
    Parameter, Tensor, concat, get_default_dtype, log_softmax, no_grad, take_last,
)
from ..env.sim import NUM_CHANNELS
from ..env.world import N_SEM
from ..evaluation.decoding import autoregress, tempered_probs
from ..language.oracle import Description
from ..language.vocab import VOCAB
from .encoders import GoalDescriptor, GoalDescriptorNet, ObservationEncoder
from .memory import MemoryBatch

# Parameters that only the policy path owns; frozen during ADPredictor pre-training.
POLICY_PREFIXES = ("policy_layers.", "policy_norm.", "action_head.", "value_head.", "task_rl")
AUX_PREFIX = "aux_"
ADPREDICTOR_PREFIXES = ("adp_layers.", "adp_norm.", "token_head.", "bos_proj.")

TASK_RL = "rl"
TASK_AD = "ad"


@dataclass
class AgentOutput:
    """
    One forward pass over a memory batch.

    Attributes:
        logits: (B, 4) action logits
        value: (B,) state value
        goal: Goal descriptor prediction
        memory: (B, M + 1, d) encoded memory
        memory_mask: (B, 1, 1, M + 1) True on padded slots
        shared: (B, d) policy query after the shared decoder layers
        steps: (B, M, d) step embeddings before positional encoding
    """
    logits: Tensor
    value: Tensor
    goal: GoalDescriptor
    memory: Tensor
    memory_mask: np.ndarray
    shared: Tensor
    steps: Tensor

    def log_probs(self, actions: np.ndarray) -> Tensor:
        return take_last(log_softmax(self.logits), np.asarray(actions, dtype=np.int64))


class DescRLAgent(Module):
    """
    Navigation policy with an action-description auxiliary head.

    Example:
        agent = DescRLAgent(AgentConfig(d_model=32), patch=7, audio=19, rng=rng)
        out = agent(batch)
        logits = agent.adpredictor_logits(out, targets)
    """

    def __init__(
        self,
        cfg: AgentConfig,
        patch: int,
        audio: int,
        rng: np.random.Generator,
        vocab_size: int = len(VOCAB),
    ):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        self.patch = patch
        self.audio_dim = audio
        self.vocab_size = vocab_size
        d = cfg.d_model
        zero = cfg.zero_init_heads

        self.encoder = ObservationEncoder(patch, audio, cfg.d_hidden, d, rng)
        self.goal_net = GoalDescriptorNet(audio, cfg.d_hidden, rng)
        self.lc_proj = Linear(2 + N_SEM, d, rng)
        self.memory_layers = ModuleList(
            [EncoderLayer(d, cfg.n_heads, cfg.d_ff, rng) for _ in range(cfg.n_enc_layers)]
        )
        self.memory_norm = LayerNorm(d)

        self.shared = decoder_stack(cfg.n_shared_dec, d, cfg.n_heads, cfg.d_ff, rng)
        if cfg.use_task_embedding:
            self.task_rl = Parameter(rng.normal(0.0, 0.02, d).astype(get_default_dtype()))
            self.task_ad = Parameter(rng.normal(0.0, 0.02, d).astype(get_default_dtype()))

        self.policy_layers = decoder_stack(cfg.n_unshared_dec, d, cfg.n_heads, cfg.d_ff, rng)
        self.policy_norm = LayerNorm(d)
        self.action_head = Linear(d, NUM_ACTIONS, rng, zero_init=zero)
        self.value_head = Linear(d, 1, rng, zero_init=zero)

        self.tokens = Embedding(vocab_size, d, rng)
        self.bos_proj = Linear(2 + N_SEM, d, rng)
        self.adp_layers = decoder_stack(cfg.n_unshared_dec, d, cfg.n_heads, cfg.d_ff, rng)
        self.adp_norm = LayerNorm(d)
        self.token_head = Linear(d, vocab_size, rng, zero_init=zero)

        # Auxiliary baselines; only the configured one ever receives gradient.
        self.aux_next_action = Linear(d, NUM_ACTIONS, rng, zero_init=zero)
        self.aux_progress = Linear(d, 1, rng)
        self.aux_next_frame = Linear(d, patch * patch * NUM_CHANNELS, rng)
        self.aux_next_spectrogram = Linear(d, audio, rng)
        self.aux_goal_location = Linear(d, 2, rng)
        self.aux_goal_category = Linear(d, N_SEM, rng)

        object.__setattr__(self, "_pe", sinusoidal_encoding(max(cfg.memory, cfg.max_desc_len) + 1, d))
        self.label_parameters()
        logger.debug(
            "DescRLAgent: %d parameters (N_SD=%d, unshared=%d, TE=%s)",
            self.num_parameters(), cfg.n_shared_dec, cfg.n_unshared_dec, cfg.use_task_embedding,
        )

    # ==================== Building blocks ====================

    def _positions(self, length: int) -> np.ndarray:
        if length > self._pe.shape[0]:
            object.__setattr__(self, "_pe", sinusoidal_encoding(length, self.cfg.d_model))
        return self._pe[:length].astype(get_default_dtype())

    def task_embedding(self, task: str) -> Optional[Tensor]:
        if not self.cfg.use_task_embedding:
            return None
        return self.task_rl if task == TASK_RL else self.task_ad

    def encode_steps(self, batch: MemoryBatch) -> Tensor:
        """(B, M, d) step embeddings."""
        return self.encoder(batch.visual, batch.audio, batch.pose, batch.prev_action)

    def goal_descriptor(self, batch: MemoryBatch) -> GoalDescriptor:
        return self.goal_net(batch.audio, batch.pad)

    def encode_memory(self, steps: Tensor, goal: GoalDescriptor, pad: np.ndarray) -> Tuple[Tensor, np.ndarray]:
        b, m = pad.shape
        lc = self.lc_proj(goal.features()).reshape(b, 1, self.cfg.d_model)
        x = concat([lc, steps + self._positions(m)], axis=1)
        full_pad = np.concatenate([np.zeros((b, 1), dtype=bool), pad], axis=1)
        mask = full_pad[:, None, None, :]
        for layer in self.memory_layers:
            x = layer(x, mask)
        return self.memory_norm(x), mask

    def shared_decode(
        self,
        x: Tensor,
        memory: Tensor,
        memory_mask: np.ndarray,
        task: str,
        self_mask: Optional[np.ndarray] = None,
    ) -> Tensor:
        """Task embedding (when enabled) plus the shared decoder layers."""
        task_vec = self.task_embedding(task)
        if task_vec is not None:
            x = x + task_vec
        return run_decoders(self.shared, x, memory, self_mask, memory_mask)

    # ==================== Forward ====================

    def forward(self, batch: MemoryBatch) -> AgentOutput:
        steps = self.encode_steps(batch)
        goal = self.goal_descriptor(batch)
        memory, mask = self.encode_memory(steps, goal, batch.pad)
        b = len(batch)
        query = steps[:, 0:1, :]
        shared = self.shared_decode(query, memory, mask, TASK_RL)
        h = run_decoders(self.policy_layers, shared, memory, None, mask)
        h = self.policy_norm(h).reshape(b, self.cfg.d_model)
        return AgentOutput(
            logits=self.action_head(h),
            value=self.value_head(h).reshape(b),
            goal=goal,
            memory=memory,
            memory_mask=mask,
            shared=shared.reshape(b, self.cfg.d_model),
            steps=steps,
        )

    def adpredictor_logits(self, out: AgentOutput, inputs: np.ndarray, rows: Optional[np.ndarray] = None) -> Tensor:
        """
        Teacher-forced token logits (B, L, V).

        Args:
            out: Forward pass whose memory and goal descriptor condition the decoder
            inputs: (B, L - 1) previous target tokens; position 0 is the
                (L_hat, C_hat) projection standing in for BOS
            rows: Optional subset of batch rows to decode for
        """
        inputs = np.asarray(inputs, dtype=np.int64)
        memory, mask, features = out.memory, out.memory_mask, out.goal.features()
        if rows is not None:
            memory, mask, features = memory[rows], mask[rows], features[rows]
        b = inputs.shape[0]
        bos = self.bos_proj(features).reshape(b, 1, self.cfg.d_model)
        x = concat([bos, self.tokens(inputs)], axis=1) if inputs.shape[1] else bos
        length = x.shape[1]
        x = x + self._positions(length)
        self_mask = causal_mask(length)[None, None]
        x = self.shared_decode(x, memory, mask, TASK_AD, self_mask)
        x = run_decoders(self.adp_layers, x, memory, self_mask, mask)
        return self.token_head(self.adp_norm(x))

    def teacher_forced_logits(self, out: AgentOutput, targets: np.ndarray, rows: Optional[np.ndarray] = None) -> Tensor:
        targets = np.asarray(targets, dtype=np.int64)
        return self.adpredictor_logits(out, targets[:, :-1], rows)

    # ==================== Inference ====================

    def act(
        self,
        batch: MemoryBatch,
        rng: Optional[np.random.Generator] = None,
        greedy: bool = False,
    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        Sample (or argmax) actions without recording a graph.

        Returns:
            (action indices (B,), log-probs (B,), values (B,))
        """
        with no_grad():
            out = self.forward(batch)
        logits = out.logits.data
        probs = tempered_probs(logits, 1.0)
        if greedy:
            actions = np.argmax(logits, axis=-1)
        else:
            rng = rng or np.random.default_rng()
            actions = np.array([rng.choice(NUM_ACTIONS, p=row / row.sum()) for row in probs])
        logp = np.log(probs[np.arange(len(actions)), actions] + 1e-12)
        return actions.astype(np.int64), logp, out.value.data.copy()

    def decode(
        self,
        batch: MemoryBatch,
        cfg: Optional[DecodeConfig] = None,
        rng: Optional[np.random.Generator] = None,
        out: Optional[AgentOutput] = None,
    ) -> List[Description]:
        """Autoregressive descriptions from the (L_hat, C_hat) start token."""
        cfg = cfg or DecodeConfig()
        with no_grad():
            out = out or self.forward(batch)

            def step_logits(tokens: np.ndarray) -> np.ndarray:
                return self.adpredictor_logits(out, tokens).data[:, -1]

            sequences = autoregress(step_logits, len(batch), self.cfg.max_desc_len, cfg, rng)
        return [Description(seq, self.cfg.description_mode) for seq in sequences]

    # ==================== Parameter groups ====================

    def policy_parameters(self) -> Dict[str, Parameter]:
        return {n: p for n, p in self.named_parameters() if n.startswith(POLICY_PREFIXES)}

    def adpredictor_parameters(self) -> Dict[str, Parameter]:
        return {n: p for n, p in self.named_parameters() if n.startswith(ADPREDICTOR_PREFIXES)}

    def pretrain_parameters(self) -> Dict[str, Parameter]:
        """Everything except the policy path and the auxiliary baselines."""
        return {
            n: p for n, p in self.named_parameters()
            if not n.startswith(POLICY_PREFIXES) and not n.startswith(AUX_PREFIX)
        }
