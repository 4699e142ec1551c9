"""
Base types and run configuration.
Every subsystem reads its settings from one of the dataclasses below.
"""

from dataclasses import dataclass, field, fields, is_dataclass, asdict
from enum import Enum, IntEnum
from typing import Any, Dict, Optional, Tuple, Union, get_type_hints
import hashlib
import json
import logging
import typing

import numpy as np

from ..exceptions import ValidationError

logger = logging.getLogger("descrl")


# ==================== Enumerations ====================

class Action(Enum):
    """Discrete navigation actions, in one-hot order."""
    MOVE_FORWARD = "move_forward"
    TURN_LEFT = "turn_left"
    TURN_RIGHT = "turn_right"
    STOP = "stop"

    @property
    def index(self) -> int:
        return _ACTION_INDEX[self]

    @classmethod
    def from_index(cls, index: int) -> "Action":
        return ACTIONS[int(index)]

    def one_hot(self) -> np.ndarray:
        vec = np.zeros(len(ACTIONS), dtype=np.float32)
        vec[self.index] = 1.0
        return vec

    @property
    def short(self) -> str:
        return {"move_forward": "F", "turn_left": "L",
                "turn_right": "R", "stop": "S"}[self.value]


ACTIONS: Tuple[Action, ...] = (
    Action.MOVE_FORWARD, Action.TURN_LEFT, Action.TURN_RIGHT, Action.STOP
)
_ACTION_INDEX = {a: i for i, a in enumerate(ACTIONS)}
NUM_ACTIONS = len(ACTIONS)


class Heading(IntEnum):
    """Compass heading; row index grows southwards."""
    N = 0
    E = 1
    S = 2
    W = 3

    @property
    def vector(self) -> Tuple[int, int]:
        return ((-1, 0), (0, 1), (1, 0), (0, -1))[int(self)]

    @property
    def right_vector(self) -> Tuple[int, int]:
        return Heading((int(self) + 1) % 4).vector

    def turn_left(self) -> "Heading":
        return Heading((int(self) - 1) % 4)

    def turn_right(self) -> "Heading":
        return Heading((int(self) + 1) % 4)


class RewardMode(Enum):
    SAVNAV = "savnav"
    OBJNAV = "objnav"


class RewardSign(Enum):
    """PROGRESS rewards approaching the goal; AS_WRITTEN keeps the literal sign."""
    PROGRESS = "progress"
    AS_WRITTEN = "as_written"


class DescriptionMode(Enum):
    PAST = "past"
    FUTURE = "future"
    PAST_FUTURE = "past_future"

    @classmethod
    def parse(cls, value: Union[str, "DescriptionMode"]) -> "DescriptionMode":
        if isinstance(value, cls):
            return value
        aliases = {"pf": "past_future", "p": "past", "f": "future"}
        return cls(aliases.get(value, value))


class AuxTaskKind(Enum):
    """Auxiliary objective trained next to PPO."""
    DESC_PAST = "desc_past"
    DESC_FUTURE = "desc_future"
    DESC_PAST_FUTURE = "desc_past_future"
    NEXT_ACTION = "next_action"
    PROGRESS = "progress"
    NEXT_FRAME = "next_frame"
    NEXT_SPECTROGRAM = "next_spectrogram"
    GOAL_LOCATION = "goal_location"
    GOAL_CATEGORY = "goal_category"
    NONE = "none"

    @property
    def is_description(self) -> bool:
        return self.value.startswith("desc_")

    @property
    def description_mode(self) -> Optional[DescriptionMode]:
        if not self.is_description:
            return None
        return DescriptionMode(self.value[len("desc_"):])

    @classmethod
    def for_mode(cls, mode: DescriptionMode) -> "AuxTaskKind":
        return cls("desc_" + mode.value)


class DecodeStrategy(Enum):
    GREEDY = "greedy"
    TOP_K = "top_k"
    TOP_P = "top_p"


class TeacherKind(Enum):
    """Source of description targets during phase 2."""
    ORACLE = "oracle"
    ADGEN = "adgen"


# ==================== Config plumbing ====================

class ConfigMixin:
    """
    Dict/JSON round-tripping shared by all configs.

    Enum fields serialize to their values, nested configs to dicts.
    """

    def to_dict(self) -> Dict[str, Any]:
        return _jsonable(asdict(self))  # type: ignore[call-overload]

    @classmethod
    def from_dict(cls, data: Optional[Dict[str, Any]]):
        data = dict(data or {})
        hints = get_type_hints(cls)
        known = {f.name for f in fields(cls)}  # type: ignore[arg-type]
        unknown = set(data) - known
        if unknown:
            raise ValidationError(
                f"Unknown {cls.__name__} keys: {sorted(unknown)}",
                field=sorted(unknown)[0]
            )
        kwargs = {k: _coerce(hints[k], v, k) for k, v in data.items()}
        return cls(**kwargs)

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)

    def config_hash(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(payload).hexdigest()[:16]


def _jsonable(value: Any) -> Any:
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def _coerce(tp: Any, value: Any, name: str) -> Any:
    if typing.get_origin(tp) is Union:
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if value is None:
            return None
        tp = args[0]
    try:
        if isinstance(tp, type) and issubclass(tp, Enum):
            return value if isinstance(value, tp) else tp(value)
        if isinstance(tp, type) and is_dataclass(tp):
            return value if isinstance(value, tp) else tp.from_dict(value)
    except ValueError as e:
        raise ValidationError(f"Invalid value for '{name}': {value!r}", field=name) from e
    return value


# ==================== Configs ====================

@dataclass
class WorldConfig(ConfigMixin):
    """
    Procedural world layout.

    Attributes:
        height: Grid rows including the outer wall
        width: Grid columns including the outer wall
        rooms: Target number of rooms (leaves of the partition)
        objects: Number of object instances placed on free cells
        min_room: Minimum room side in cells
    """
    height: int = 11
    width: int = 11
    rooms: int = 4
    objects: int = 6
    min_room: int = 2

    def validate(self) -> None:
        if self.height < 9 or self.width < 9:
            raise ValidationError("World must be at least 9x9", field="height")
        if self.rooms < 1:
            raise ValidationError("rooms must be >= 1", field="rooms")
        if self.min_room < 1:
            raise ValidationError("min_room must be >= 1", field="min_room")


@dataclass
class EnvConfig(ConfigMixin):
    """
    Episode and sensor settings.

    Attributes:
        max_steps: Episode step limit
        success_radius: Stop within this geodesic distance counts as success
        reward_mode: savnav or objnav reward
        reward_sign: Shaping sign convention
        sound_stops: Draw a finite sound_stop_time per episode
        sound_stop_min: Earliest silence onset
        patch_half_width: Visual patch is (2m+1)x(2m+1)
        audio_spec_dim: Spectrum length per category
        audio_noise: Gaussian noise std added to the spectrum
        unheard: Use the held-out spectrum bank
    """
    max_steps: int = 200
    success_radius: int = 1
    reward_mode: RewardMode = RewardMode.SAVNAV
    reward_sign: RewardSign = RewardSign.PROGRESS
    sound_stops: bool = True
    sound_stop_min: int = 5
    patch_half_width: int = 3
    audio_spec_dim: int = 16
    audio_noise: float = 0.05
    unheard: bool = False

    def validate(self) -> None:
        if self.success_radius < 1:
            raise ValidationError("success_radius must be >= 1", field="success_radius")
        if self.max_steps < 1:
            raise ValidationError("max_steps must be >= 1", field="max_steps")
        if self.patch_half_width < 1:
            raise ValidationError("patch_half_width must be >= 1", field="patch_half_width")

    @property
    def sound_stop_max(self) -> int:
        return max(self.sound_stop_min, self.max_steps // 2)


@dataclass
class AgentConfig(ConfigMixin):
    """
    DescRL agent architecture.

    Attributes:
        d_model: Transformer width
        n_heads: Attention heads
        d_ff: Feed-forward width
        d_hidden: Width of the per-modality observation encoders
        n_enc_layers: Memory encoder layers
        n_shared_dec: Decoder layers shared by policy and ADPredictor (N_SD)
        n_unshared_dec: Private decoder layers per head
        use_task_embedding: Add E^T_RL / E^T_AD to decoder inputs (TE)
        memory: Number of step embeddings kept (M)
        description_mode: Which descriptions the ADPredictor learns
        lam: Weight of the auxiliary loss
        zero_init_heads: Zero-initialize action, value and token heads
        max_desc_len: Longest description including EOS
    """
    d_model: int = 128
    n_heads: int = 4
    d_ff: int = 256
    d_hidden: int = 64
    n_enc_layers: int = 2
    n_shared_dec: int = 2
    n_unshared_dec: int = 1
    use_task_embedding: bool = True
    memory: int = 20
    description_mode: DescriptionMode = DescriptionMode.PAST
    lam: float = 0.1
    zero_init_heads: bool = True
    max_desc_len: int = 24

    def validate(self) -> None:
        if not 0 <= self.n_shared_dec <= 3:
            raise ValidationError("n_shared_dec must be in 0..3", field="n_shared_dec")
        if self.n_unshared_dec < 0:
            raise ValidationError("n_unshared_dec must be >= 0", field="n_unshared_dec")
        if self.n_shared_dec + self.n_unshared_dec < 1:
            raise ValidationError(
                "Each head needs at least one decoder layer",
                field="n_unshared_dec"
            )
        if self.lam < 0:
            raise ValidationError("lam must be >= 0", field="lam")
        if self.d_model % self.n_heads:
            raise ValidationError("d_model must be divisible by n_heads", field="n_heads")
        if self.memory < 1:
            raise ValidationError("memory must be >= 1", field="memory")


@dataclass
class AdgenConfig(ConfigMixin):
    """Phase-1 ADGenerator architecture and training loop."""
    d_model: int = 128
    n_heads: int = 4
    d_ff: int = 256
    d_hidden: int = 64
    n_enc_layers: int = 2
    n_dec_layers: int = 2
    epochs: int = 10
    batch_size: int = 64
    lr: float = 1e-3
    val_fraction: float = 0.1
    max_desc_len: int = 24
    seed: int = 0

    def validate(self) -> None:
        if self.d_model % self.n_heads:
            raise ValidationError("d_model must be divisible by n_heads", field="n_heads")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValidationError("val_fraction must be in [0, 1)", field="val_fraction")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1", field="batch_size")


@dataclass
class PPOConfig(ConfigMixin):
    """PPO with GAE."""
    n_envs: int = 8
    horizon: int = 128
    epochs: int = 4
    minibatch: int = 256
    clip: float = 0.2
    gamma: float = 0.99
    gae_lambda: float = 0.95
    lr: float = 2.5e-4
    value_coef: float = 0.5
    entropy_coef: float = 0.01
    goal_coef: float = 1.0
    max_grad_norm: float = 0.5
    normalize_advantages: bool = True

    def validate(self) -> None:
        if self.n_envs < 1:
            raise ValidationError("n_envs must be >= 1", field="n_envs")
        if self.horizon < 1:
            raise ValidationError("horizon must be >= 1", field="horizon")
        if not 0.0 < self.clip < 1.0:
            raise ValidationError("clip must be in (0, 1)", field="clip")
        if self.minibatch < 1:
            raise ValidationError("minibatch must be >= 1", field="minibatch")


@dataclass
class DecodeConfig(ConfigMixin):
    """
    Autoregressive description decoding.

    Attributes:
        strategy: greedy, top_k or top_p
        k: Candidates kept by top_k
        p: Nucleus mass kept by top_p
        temperature: Softmax temperature; None picks 2.0 for sampling, 1.0 for greedy
        seed: Sampling seed
    """
    strategy: DecodeStrategy = DecodeStrategy.GREEDY
    k: int = 10
    p: float = 0.95
    temperature: Optional[float] = None
    seed: int = 0

    @property
    def tau(self) -> float:
        if self.temperature is not None:
            return float(self.temperature)
        return 1.0 if self.strategy is DecodeStrategy.GREEDY else 2.0

    def validate(self) -> None:
        if self.k < 1:
            raise ValidationError("k must be >= 1", field="k")
        if not 0.0 < self.p <= 1.0:
            raise ValidationError("p must be in (0, 1]", field="p")
        if self.tau <= 0:
            raise ValidationError("temperature must be > 0", field="temperature")


@dataclass
class EvalConfig(ConfigMixin):
    """Evaluation protocol."""
    episodes: int = 200
    seed: int = 0
    unheard: bool = False
    batch: int = 16
    decode: Optional[DecodeConfig] = None

    def validate(self) -> None:
        if self.episodes < 1:
            raise ValidationError("episodes must be >= 1", field="episodes")
        if self.decode is not None:
            self.decode.validate()


@dataclass
class TrainConfig(ConfigMixin):
    """
    Full phase-2 run: world/env/agent/PPO settings plus the ablation toggles.

    Attributes:
        seed: Root seed split per subsystem
        aux: Active auxiliary objective
        distill: Use soft targets instead of hard tokens
        smoothing: Label smoothing of soft targets (epsilon_s)
        soft_temperature: Temperature applied when building soft targets (T_d)
        distill_temperature: Temperature applied to student logits
        pretrain: Run ADPredictor pre-training before joint training (PT)
        window: ADGenerator input length k+1
        desc_stride: Description targets are built every n-th step
        ce_reduction: mean or sum of the description loss over steps
        teacher: Oracle templates or a trained ADGenerator
        adgen_checkpoint: Path to the ADGenerator when teacher is adgen
    """
    seed: int = 0
    world: WorldConfig = field(default_factory=WorldConfig)
    env: EnvConfig = field(default_factory=EnvConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)
    adgen: AdgenConfig = field(default_factory=AdgenConfig)
    ppo: PPOConfig = field(default_factory=PPOConfig)
    aux: AuxTaskKind = AuxTaskKind.DESC_PAST
    distill: bool = False
    smoothing: float = 0.1
    soft_temperature: float = 1.0
    distill_temperature: float = 1.0
    pretrain: bool = True
    pretrain_updates: int = 500
    pretrain_batch: int = 32
    pretrain_lr: float = 5e-4
    dataset_size: int = 2000
    window: int = 20
    desc_stride: int = 4
    ce_reduction: str = "mean"
    teacher: TeacherKind = TeacherKind.ORACLE
    adgen_checkpoint: Optional[str] = None
    n_updates: int = 300
    eval_every: int = 50
    eval_episodes: int = 50
    n_train_worlds: int = 64
    n_eval_worlds: int = 16

    def validate(self) -> None:
        self.world.validate()
        self.env.validate()
        self.agent.validate()
        self.adgen.validate()
        self.ppo.validate()
        mode = self.aux.description_mode
        if mode is not None and mode is not self.agent.description_mode:
            raise ValidationError(
                f"aux={self.aux.value} conflicts with "
                f"agent.description_mode={self.agent.description_mode.value}",
                field="aux"
            )
        if self.distill and not self.aux.is_description:
            raise ValidationError("distill requires a description aux task", field="distill")
        if not 0.0 <= self.smoothing < 1.0:
            raise ValidationError("smoothing must be in [0, 1)", field="smoothing")
        if self.ce_reduction not in ("mean", "sum"):
            raise ValidationError("ce_reduction must be mean or sum", field="ce_reduction")
        if self.teacher is TeacherKind.ADGEN and not self.adgen_checkpoint:
            raise ValidationError(
                "teacher=adgen requires adgen_checkpoint", field="adgen_checkpoint"
            )
        if self.window < 1 or self.desc_stride < 1:
            raise ValidationError("window and desc_stride must be >= 1", field="window")
        if self.n_train_worlds < 1:
            raise ValidationError("n_train_worlds must be >= 1", field="n_train_worlds")


def apply_overrides(config: TrainConfig, overrides: Dict[str, Any]) -> TrainConfig:
    """
    Return a copy of config with dotted-key overrides applied.

    Example:
        apply_overrides(cfg, {"agent.n_shared_dec": 1, "aux": "none"})
    """
    data = config.to_dict()
    for key, value in overrides.items():
        node = data
        parts = key.split(".")
        for part in parts[:-1]:
            if not isinstance(node.get(part), dict):
                raise ValidationError(f"Unknown config section '{part}'", field=key)
            node = node[part]
        if parts[-1] not in node:
            raise ValidationError(f"Unknown config key '{key}'", field=key)
        node[parts[-1]] = _jsonable(value)
    return TrainConfig.from_dict(data)


def load_config(path: str) -> TrainConfig:
    """Load a TrainConfig from a JSON file."""
    with open(path, "r", encoding="utf-8") as f:
        return TrainConfig.from_dict(json.load(f))
