"""
Auxiliary objectives: the description loss, the goal descriptor loss, and
the registry of alternative auxiliary baselines.
"""

from dataclasses import dataclass
from typing import Callable, Dict, Optional, Union

import numpy as np

from ..core.base import AuxTaskKind, DescriptionMode
from ..core.functional import cross_entropy, mse, soft_cross_entropy
from ..core.tensor import Tensor
from ..exceptions import AuxTaskNotFoundError, DescriptionError
from ..language.vocab import PAD
from ..models.agent import AgentOutput, DescRLAgent
from ..models.encoders import LOCATION_SCALE, GoalDescriptor, one_hot_visual


@dataclass
class AuxTargets:
    """
    Targets for one minibatch of B rows.

    Attributes:
        mode: Description mode the tokens were produced for
        desc_rows: Indices of rows carrying a description
        desc_tokens: (R, L) target tokens of those rows, PAD-filled
        desc_soft: (R, L, V) soft targets, when distilling
        next_action: (B,) a_{t+1}; next_action_mask marks rows where it exists
        progress: (B,) clipped progress towards the goal
        next_visual: (B, P, P) next visual patch
        next_audio: (B, A) next audio vector
        goal_location: (B, 2) goal offset (forward, right) in cells
        goal_category: (B,) goal class index (label - 1)
    """
    mode: Optional[DescriptionMode] = None
    desc_rows: Optional[np.ndarray] = None
    desc_tokens: Optional[np.ndarray] = None
    desc_soft: Optional[np.ndarray] = None
    next_action: Optional[np.ndarray] = None
    next_action_mask: Optional[np.ndarray] = None
    progress: Optional[np.ndarray] = None
    next_visual: Optional[np.ndarray] = None
    next_audio: Optional[np.ndarray] = None
    goal_location: Optional[np.ndarray] = None
    goal_category: Optional[np.ndarray] = None


def progress_target(d0: float, dt: float) -> float:
    """(d0 - dt) / d0 clipped to [0, 1]; 1 when the start is already at the goal."""
    if d0 <= 0:
        return 1.0
    return float(np.clip((d0 - dt) / d0, 0.0, 1.0))


def goal_descriptor_loss(goal: GoalDescriptor, location: np.ndarray, category: np.ndarray) -> Tensor:
    """CE(C_hat, C_g) + squared error of L_hat against L_g (both in units of LOCATION_SCALE cells)."""
    scale = 1.0 / LOCATION_SCALE
    ce = cross_entropy(goal.category_logits, category)
    return ce + mse(goal.location * scale, np.asarray(location) * scale)


def _trim(tokens: np.ndarray) -> int:
    lengths = (tokens != PAD).sum(axis=1)
    return max(int(lengths.max()), 1)


def aux_description_loss(
    agent: DescRLAgent,
    out: AgentOutput,
    targets: AuxTargets,
    mode: DescriptionMode,
    distill: bool = False,
    temperature: float = 1.0,
    reduction: str = "mean",
) -> Tensor:
    """
    Teacher-forced ADPredictor loss on the labelled rows.

    Hard mode is token cross-entropy; distill mode is the soft-target
    cross-entropy at ``temperature``. PAD positions never count.

    Raises:
        DescriptionError: If the targets belong to another description mode
            or soft targets are missing in distill mode
    """
    if targets.mode is not mode:
        found = targets.mode.value if targets.mode is not None else "none"
        raise DescriptionError(f"targets are {found} descriptions", mode=mode.value)
    rows = targets.desc_rows
    if rows is None or len(rows) == 0:
        return (out.value * 0.0).sum()
    length = _trim(targets.desc_tokens)
    tokens = targets.desc_tokens[:, :length]
    logits = agent.teacher_forced_logits(out, tokens, rows)
    if distill:
        if targets.desc_soft is None:
            raise DescriptionError("distillation needs soft targets", mode=mode.value)
        loss = soft_cross_entropy(
            logits, targets.desc_soft[:, :length], mask=tokens != PAD, temperature=temperature
        )
    else:
        loss = cross_entropy(logits, tokens, ignore_index=PAD)
    if reduction == "sum":
        loss = loss * float(len(rows))
    return loss


# ==================== Auxiliary baselines ====================

AuxLoss = Callable[[DescRLAgent, AgentOutput, AuxTargets], Tensor]

_AUX_TASKS: Dict[AuxTaskKind, AuxLoss] = {}


def register_aux_task(kind: AuxTaskKind):
    """Decorator to register an auxiliary baseline loss."""
    def decorator(fn: AuxLoss) -> AuxLoss:
        _AUX_TASKS[kind] = fn
        return fn
    return decorator


def available_aux_tasks():
    return sorted(k.value for k in _AUX_TASKS)


@register_aux_task(AuxTaskKind.NEXT_ACTION)
def next_action_loss(agent, out, targets):
    logits = agent.aux_next_action(out.shared)
    return cross_entropy(logits, targets.next_action, mask=targets.next_action_mask)


@register_aux_task(AuxTaskKind.PROGRESS)
def progress_loss(agent, out, targets):
    pred = agent.aux_progress(out.shared).reshape(len(targets.progress))
    return mse(pred, targets.progress)


@register_aux_task(AuxTaskKind.NEXT_FRAME)
def next_frame_loss(agent, out, targets):
    return mse(agent.aux_next_frame(out.shared), one_hot_visual(targets.next_visual))


@register_aux_task(AuxTaskKind.NEXT_SPECTROGRAM)
def next_spectrogram_loss(agent, out, targets):
    return mse(agent.aux_next_spectrogram(out.shared), targets.next_audio)


@register_aux_task(AuxTaskKind.GOAL_LOCATION)
def goal_location_loss(agent, out, targets):
    scale = 1.0 / LOCATION_SCALE
    return mse(agent.aux_goal_location(out.shared) * scale, np.asarray(targets.goal_location) * scale)


@register_aux_task(AuxTaskKind.GOAL_CATEGORY)
def goal_category_loss(agent, out, targets):
    return cross_entropy(agent.aux_goal_category(out.shared), targets.goal_category)


def aux_baseline_loss(
    agent: DescRLAgent,
    out: AgentOutput,
    targets: AuxTargets,
    kind: Union[AuxTaskKind, str],
) -> Tensor:
    """
    Loss of one registered auxiliary baseline through its own head.

    Raises:
        AuxTaskNotFoundError: If kind is unknown, a description task or none
    """
    try:
        kind = AuxTaskKind(kind)
    except ValueError:
        raise AuxTaskNotFoundError(str(kind), available_aux_tasks()) from None
    fn = _AUX_TASKS.get(kind)
    if fn is None:
        raise AuxTaskNotFoundError(kind.value, available_aux_tasks())
    return fn(agent, out, targets)
