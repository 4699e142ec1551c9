"""
PPO update with the auxiliary description loss.

    L_RL  = policy + value_coef * value - entropy_coef * entropy + goal_coef * goal
    total = L_RL + lam * (L_CE + L_aux)

Only one of L_CE (description tasks) and L_aux (baseline tasks) is
non-zero for a configuration. With lam = 0 the auxiliary loss is still
computed and reported, but outside the graph.
"""

from dataclasses import asdict, dataclass, fields
from typing import Dict, List, Optional
import os

import numpy as np

from ..core.base import AuxTaskKind, TrainConfig, logger
from ..core.functional import entropy, mse
from ..core.optim import Adam
from ..core.tensor import Tensor, backward, clip, exp, minimum, no_grad
from ..exceptions import TrainingError, ValidationError
from ..models.agent import AgentOutput, DescRLAgent
from .buffer import RolloutBuffer
from .losses import AuxTargets, aux_baseline_loss, aux_description_loss, goal_descriptor_loss


@dataclass
class LossBreakdown:
    """Loss parts of one update (minibatch means)."""
    policy: float = 0.0
    value: float = 0.0
    entropy: float = 0.0
    goal: float = 0.0
    rl: float = 0.0
    ce: float = 0.0
    aux: float = 0.0
    lam: float = 0.0
    total: float = 0.0
    grad_norm: float = 0.0

    def recompute(self) -> float:
        return self.rl + self.lam * (self.ce + self.aux)

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)

    @classmethod
    def mean(cls, parts: List["LossBreakdown"]) -> "LossBreakdown":
        if not parts:
            return cls()
        values = {f.name: float(np.mean([getattr(p, f.name) for p in parts])) for f in fields(cls)}
        return cls(**values)


def clipped_surrogate(new_log_probs: Tensor, old_log_probs: np.ndarray, advantages: np.ndarray, clip_eps: float) -> Tensor:
    """-mean(min(r * A, clip(r, 1 - eps, 1 + eps) * A)) with r = exp(new - old)."""
    ratio = exp(new_log_probs - np.asarray(old_log_probs))
    advantages = np.asarray(advantages)
    unclipped = ratio * advantages
    clipped = clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * advantages
    return -minimum(unclipped, clipped).mean()


def minibatch_targets(buffer: RolloutBuffer, rows: np.ndarray, cfg: TrainConfig) -> AuxTargets:
    """Slice every target the configured objectives need for these flat rows."""
    labelled = buffer.flat("desc_mask")[rows]
    desc_rows = np.nonzero(labelled)[0]
    targets = AuxTargets(
        mode=cfg.agent.description_mode if cfg.aux.is_description else None,
        desc_rows=desc_rows,
        desc_tokens=buffer.flat("desc_tokens")[rows][desc_rows],
        next_action=buffer.flat("next_action")[rows],
        next_action_mask=buffer.flat("next_action_mask")[rows],
        progress=buffer.flat("progress")[rows],
        goal_location=buffer.flat("goal_location")[rows],
        goal_category=buffer.flat("goal_category")[rows],
    )
    if cfg.distill:
        targets.desc_soft = buffer.soft_targets(rows[desc_rows])
    if buffer.next_visual is not None:
        targets.next_visual = buffer.flat("next_visual")[rows]
        targets.next_audio = buffer.flat("next_audio")[rows]
    return targets


def auxiliary_loss(agent: DescRLAgent, out: AgentOutput, targets: AuxTargets, cfg: TrainConfig):
    """(L_CE, L_aux) tensors for the configured auxiliary task; None where inactive."""
    if cfg.aux is AuxTaskKind.NONE:
        return None, None
    if cfg.aux.is_description:
        ce = aux_description_loss(
            agent, out, targets, cfg.agent.description_mode, cfg.distill,
            cfg.distill_temperature, cfg.ce_reduction,
        )
        return ce, None
    return None, aux_baseline_loss(agent, out, targets, cfg.aux)


def _dump(agent: DescRLAgent, dump_dir: Optional[str], update: int) -> Optional[str]:
    if dump_dir is None:
        return None
    os.makedirs(dump_dir, exist_ok=True)
    path = os.path.join(dump_dir, f"nan_dump_{update}.npz")
    np.savez(path, **{k.replace(".", "__"): v for k, v in agent.state_dict().items()})
    return path


def ppo_update(
    agent: DescRLAgent,
    optimizer: Adam,
    buffer: RolloutBuffer,
    cfg: TrainConfig,
    rng: np.random.Generator,
    dump_dir: Optional[str] = None,
    update: int = 0,
) -> LossBreakdown:
    """
    PPO epochs over a finished buffer, one optimizer step per minibatch.

    Raises:
        TrainingError: If the loss becomes NaN/Inf (parameters are dumped first)
        ValidationError: If advantages were not computed
    """
    if buffer.advantages is None:
        raise ValidationError("compute advantages before PPO epochs", field="advantages")
    ppo = cfg.ppo
    lam = cfg.agent.lam
    memory = buffer.flat_memory()
    actions = buffer.flat("actions")
    old_log_probs = buffer.flat("log_probs")
    advantages = buffer.flat("advantages")
    returns = buffer.flat("returns")
    n = len(buffer)
    size = min(ppo.minibatch, n)

    parts: List[LossBreakdown] = []
    for _ in range(ppo.epochs):
        order = rng.permutation(n)
        for start in range(0, n, size):
            rows = order[start:start + size]
            out = agent(memory.take(rows))
            targets = minibatch_targets(buffer, rows, cfg)

            policy_loss = clipped_surrogate(out.log_probs(actions[rows]), old_log_probs[rows], advantages[rows], ppo.clip)
            value_loss = mse(out.value, returns[rows])
            ent = entropy(out.logits)
            goal = goal_descriptor_loss(out.goal, targets.goal_location, targets.goal_category)
            rl = policy_loss + value_loss * ppo.value_coef - ent * ppo.entropy_coef + goal * ppo.goal_coef

            if lam == 0.0:
                with no_grad():
                    ce, aux = auxiliary_loss(agent, out, targets, cfg)
                total = rl
            else:
                ce, aux = auxiliary_loss(agent, out, targets, cfg)
                extra = ce if ce is not None else aux
                total = rl if extra is None else rl + extra * lam

            if not np.isfinite(total.item()):
                path = _dump(agent, dump_dir, update)
                raise TrainingError(f"Non-finite loss at update {update}", dump_path=path)

            grads = backward(total, optimizer.params)
            norm = optimizer.step(grads)
            parts.append(LossBreakdown(
                policy=policy_loss.item(),
                value=value_loss.item(),
                entropy=ent.item(),
                goal=goal.item(),
                rl=rl.item(),
                ce=ce.item() if ce is not None else 0.0,
                aux=aux.item() if aux is not None else 0.0,
                lam=lam,
                total=total.item(),
                grad_norm=norm,
            ))
    breakdown = LossBreakdown.mean(parts)
    logger.debug(
        "PPO update %d: total=%.4f rl=%.4f ce=%.4f aux=%.4f", update,
        breakdown.total, breakdown.rl, breakdown.ce, breakdown.aux,
    )
    return breakdown
