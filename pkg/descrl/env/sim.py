"""
Semantic audio-visual navigation episodes.

Usage:
    env = NavEnv(world, EnvConfig())
    obs = env.reset(spec)
    obs, outcome = env.step(Action.MOVE_FORWARD)
"""

from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from ..core.base import (
    Action, EnvConfig, Heading, RewardMode, RewardSign, NUM_ACTIONS,
)
from ..exceptions import EpisodeError, UnreachableGoalError
from .world import Cell, N_SEM, Pose, UNREACHABLE, World

# Visual channels: 0 unknown, 1 wall, 2.. semantic labels 1..N_SEM.
UNKNOWN_CHANNEL = 0
WALL_CHANNEL = 1
NUM_CHANNELS = N_SEM + 2

SPECTRUM_SEED = 20240611
UNHEARD_SEED = 1013


class SpectrumBank:
    """
    Per-category audio spectra.

    The heard bank is shared by all worlds; the unheard bank is a fixed
    perturbation of it, so both describe the same categories.
    """

    def __init__(self, dim: int = 16):
        rng = np.random.default_rng(SPECTRUM_SEED)
        base = np.abs(rng.normal(0.0, 1.0, size=(N_SEM + 1, dim)))
        self.heard = (base / base.max(axis=1, keepdims=True)).astype(np.float32)
        shift = np.random.default_rng(UNHEARD_SEED).normal(0.0, 0.3, size=base.shape)
        self.unheard = np.clip(self.heard + shift, 0.0, None).astype(np.float32)
        self.dim = dim

    def spectrum(self, label: int, unheard: bool = False) -> np.ndarray:
        return (self.unheard if unheard else self.heard)[label]


_BANKS: Dict[int, SpectrumBank] = {}


def spectrum_bank(dim: int) -> SpectrumBank:
    bank = _BANKS.get(dim)
    if bank is None:
        bank = _BANKS[dim] = SpectrumBank(dim)
    return bank


# ==================== Data types ====================

@dataclass(frozen=True)
class EpisodeSpec:
    """
    One navigation episode.

    Attributes:
        start: Start pose
        goal: Index of the sounding object in world.objects
        sound_stop_time: First silent step; None means the sound never stops
        max_steps: Step limit
        success_radius: Stop within this many cells counts as success
        reward_mode: savnav or objnav
        reward_sign: progress or as_written
        unheard: Use the held-out spectrum bank
        seed: Audio noise seed
    """
    start: Pose
    goal: int
    sound_stop_time: Optional[int] = None
    max_steps: int = 200
    success_radius: int = 1
    reward_mode: RewardMode = RewardMode.SAVNAV
    reward_sign: RewardSign = RewardSign.PROGRESS
    unheard: bool = False
    seed: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "start": self.start.to_list(),
            "goal": self.goal,
            "sound_stop_time": self.sound_stop_time,
            "max_steps": self.max_steps,
            "success_radius": self.success_radius,
            "reward_mode": self.reward_mode.value,
            "reward_sign": self.reward_sign.value,
            "unheard": self.unheard,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "EpisodeSpec":
        return cls(
            start=Pose.from_list(data["start"]),
            goal=int(data["goal"]),
            sound_stop_time=data.get("sound_stop_time"),
            max_steps=int(data.get("max_steps", 200)),
            success_radius=int(data.get("success_radius", 1)),
            reward_mode=RewardMode(data.get("reward_mode", "savnav")),
            reward_sign=RewardSign(data.get("reward_sign", "progress")),
            unheard=bool(data.get("unheard", False)),
            seed=int(data.get("seed", 0)),
        )


@dataclass
class Observation:
    """
    Per-step agent input.

    Attributes:
        visual: (2m+1, 2m+1) int8 channel index per cell, agent frame
        audio: direction (forward, right), intensity, spectrum; zero when silent
        pose: Agent pose
        pose_features: (dr/H, dc/W, cos, sin) relative to the start pose
        prev_action: Action taken to reach this step, None at t=0
        t: Step index
    """
    visual: np.ndarray
    audio: np.ndarray
    pose: Pose
    pose_features: np.ndarray
    prev_action: Optional[Action]
    t: int

    @property
    def silent(self) -> bool:
        return not np.any(self.audio)

    def prev_action_vector(self) -> np.ndarray:
        if self.prev_action is None:
            return np.zeros(NUM_ACTIONS, dtype=np.float32)
        return self.prev_action.one_hot()


@dataclass(frozen=True)
class StepOutcome:
    reward: float
    done: bool
    success: bool
    distance: int


# ==================== Pure helpers ====================

def compute_reward(
    mode: RewardMode,
    sign: RewardSign,
    success: bool,
    d_prev: int,
    d_t: int,
) -> float:
    """
    savnav:  10 * I_goal + I[d_t < d_prev] - 0.01
    objnav: 2.5 * I_goal + (d_prev - d_t) - 0.001
    ``as_written`` flips the shaping term to reward moving away.
    """
    if mode is RewardMode.SAVNAV:
        moved = (d_t > d_prev) if sign is RewardSign.AS_WRITTEN else (d_t < d_prev)
        return 10.0 * float(success) + float(moved) - 0.01
    delta = (d_t - d_prev) if sign is RewardSign.AS_WRITTEN else (d_prev - d_t)
    return 2.5 * float(success) + float(delta) - 0.001


def to_agent_frame(heading: Heading, dr: float, dc: float) -> Tuple[float, float]:
    """World offset -> (forward, right) components."""
    fr, fc = heading.vector
    rr, rc = heading.right_vector
    return dr * fr + dc * fc, dr * rr + dc * rc


def _line_of_sight(world: World, a: Cell, b: Cell) -> bool:
    """No wall strictly between a and b (Bresenham)."""
    r0, c0 = a
    r1, c1 = b
    dr, dc = abs(r1 - r0), abs(c1 - c0)
    sr = 1 if r1 > r0 else -1
    sc = 1 if c1 > c0 else -1
    err = dr - dc
    r, c = r0, c0
    while (r, c) != (r1, c1):
        e2 = 2 * err
        if e2 > -dc:
            err -= dc
            r += sr
        if e2 < dr:
            err += dr
            c += sc
        if (r, c) != (r1, c1) and (not world.in_bounds((r, c)) or world.walls[r, c]):
            return False
    return True


def render_visual(world: World, pose: Pose, half_width: int) -> np.ndarray:
    """
    Egocentric channel-index patch.

    patch[m - f, m + s] shows the cell f steps ahead and s steps to the
    right; row 0 is the farthest row ahead.
    """
    m = half_width
    size = 2 * m + 1
    patch = np.full((size, size), UNKNOWN_CHANNEL, dtype=np.int8)
    fr, fc = pose.heading.vector
    rr, rc = pose.heading.right_vector
    semantic = world.semantic_grid()
    for i in range(size):
        f = m - i
        for j in range(size):
            s = j - m
            cell = (pose.cell[0] + f * fr + s * rr, pose.cell[1] + f * fc + s * rc)
            if not world.in_bounds(cell) or not _line_of_sight(world, pose.cell, cell):
                continue
            if world.walls[cell]:
                patch[i, j] = WALL_CHANNEL
            else:
                patch[i, j] = 1 + int(semantic[cell])
    return patch


def visible_objects(world: World, pose: Pose, half_width: int) -> List[int]:
    """Indices of objects whose cell is visible in the patch at pose."""
    fr, fc = pose.heading.vector
    rr, rc = pose.heading.right_vector
    seen = []
    for idx, obj in enumerate(world.objects):
        dr = obj.cell[0] - pose.cell[0]
        dc = obj.cell[1] - pose.cell[1]
        f = dr * fr + dc * fc
        s = dr * rr + dc * rc
        if abs(f) <= half_width and abs(s) <= half_width \
                and _line_of_sight(world, pose.cell, obj.cell):
            seen.append(idx)
    return seen


def audio_dim(cfg: EnvConfig) -> int:
    return 3 + cfg.audio_spec_dim


def render_audio(
    world: World,
    pose: Pose,
    t: int,
    spec: EpisodeSpec,
    cfg: EnvConfig,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """
    Audio vector at pose and step t.

    concat(direction toward the next shortest-path cell in the agent frame,
    intensity 1 / (1 + d), category spectrum + N(0, sigma) noise); the zero
    vector once t >= sound_stop_time. The noise draw happens on every call
    so the stream stays aligned whether or not the sound is on.
    """
    source = world.objects[spec.goal]
    noise = rng.normal(0.0, cfg.audio_noise, size=cfg.audio_spec_dim) if rng is not None \
        else np.zeros(cfg.audio_spec_dim)
    if spec.sound_stop_time is not None and t >= spec.sound_stop_time:
        return np.zeros(audio_dim(cfg), dtype=np.float32)

    dist = world.distance_map([source.cell])
    d = int(dist[pose.cell])
    direction = (0.0, 0.0)
    if d > 0:
        for dr, dc in ((-1, 0), (0, 1), (1, 0), (0, -1)):
            nxt = (pose.cell[0] + dr, pose.cell[1] + dc)
            if world.is_free(nxt) and dist[nxt] == d - 1:
                direction = to_agent_frame(pose.heading, dr, dc)
                break
    intensity = 1.0 / (1.0 + d)
    spectrum = spectrum_bank(cfg.audio_spec_dim).spectrum(source.label, spec.unheard) + noise
    return np.concatenate([direction, [intensity], spectrum]).astype(np.float32)


def goal_cells(world: World, spec: EpisodeSpec) -> List[Cell]:
    """The sounding instance for savnav; every instance of its category for objnav."""
    goal = world.objects[spec.goal]
    if spec.reward_mode is RewardMode.OBJNAV:
        return world.cells_of(goal.label)
    return [goal.cell]


# ==================== Environment ====================

class NavEnv:
    """
    Single-threaded episode runner over one world.

    The world is shared read-only; all episode state lives on the instance.
    """

    def __init__(self, world: World, cfg: EnvConfig):
        self.world = world
        self.cfg = cfg
        self.spec: Optional[EpisodeSpec] = None
        self.pose: Optional[Pose] = None
        self.t = 0
        self.done = True
        self.distance = 0
        self.goal_cells: List[Cell] = []
        self.sound_stopped = False
        self._rng: Optional[np.random.Generator] = None
        self._last_obs: Optional[Observation] = None

    # ==================== Episode ====================

    @property
    def goal_label(self) -> int:
        assert self.spec is not None
        return self.world.objects[self.spec.goal].label

    def reset(self, spec: EpisodeSpec) -> Observation:
        """
        Start an episode.

        Raises:
            EpisodeError: If the start pose is not on a free cell
            UnreachableGoalError: If no goal cell is reachable from the start
        """
        if not self.world.is_free(spec.start.cell):
            raise EpisodeError(f"Start cell {spec.start.cell} is not free")
        if not 0 <= spec.goal < len(self.world.objects):
            raise EpisodeError(f"Goal index {spec.goal} out of range")
        self.spec = spec
        goal = self.world.objects[spec.goal]
        self.goal_cells = goal_cells(self.world, spec)
        d0 = int(self.world.distance_map(self.goal_cells)[spec.start.cell])
        if d0 == UNREACHABLE:
            raise UnreachableGoalError("Goal unreachable", start=spec.start.cell, goal=goal.cell)
        self.pose = spec.start
        self.t = 0
        self.distance = d0
        self.done = False
        self.sound_stopped = False
        self._rng = np.random.default_rng(spec.seed)
        self._last_obs = self._observe(None)
        return self._last_obs

    def step(self, action: Action) -> Tuple[Observation, StepOutcome]:
        """
        Advance one step.

        Raises:
            EpisodeError: If the episode is already done
        """
        if self.done or self.spec is None or self.pose is None:
            raise EpisodeError("step() called on a finished episode; call reset()")
        spec = self.spec
        d_prev = self.distance
        self.pose = self.pose.after(action, self.world)
        self.distance = int(self.world.distance_map(self.goal_cells)[self.pose.cell])
        self.t += 1

        success = action is Action.STOP and self.distance <= spec.success_radius
        reward = compute_reward(spec.reward_mode, spec.reward_sign, success, d_prev, self.distance)
        self.done = action is Action.STOP or self.t >= spec.max_steps
        if spec.sound_stop_time is not None and self.t >= spec.sound_stop_time:
            self.sound_stopped = True
        self._last_obs = self._observe(action)
        return self._last_obs, StepOutcome(reward, self.done, success, self.distance)

    @property
    def observation(self) -> Observation:
        if self._last_obs is None:
            raise EpisodeError("No episode in progress")
        return self._last_obs

    def _observe(self, prev_action: Optional[Action]) -> Observation:
        assert self.spec is not None and self.pose is not None
        visual = render_visual(self.world, self.pose, self.cfg.patch_half_width)
        audio = render_audio(self.world, self.pose, self.t, self.spec, self.cfg, self._rng)
        return Observation(
            visual=visual,
            audio=audio,
            pose=self.pose,
            pose_features=pose_features(self.spec.start, self.pose, self.world),
            prev_action=prev_action,
            t=self.t,
        )

    # ==================== Ground truth ====================

    def goal_offset(self) -> np.ndarray:
        """Offset (forward, right) in cells from the agent to the nearest goal cell."""
        assert self.pose is not None
        dist = self.world.distance_map([self.pose.cell])
        target = min(self.goal_cells, key=lambda c: (int(dist[c]), c))
        return np.array(
            to_agent_frame(self.pose.heading, target[0] - self.pose.cell[0], target[1] - self.pose.cell[1]),
            dtype=np.float32,
        )

    def initial_distance(self) -> int:
        assert self.spec is not None
        return int(self.world.distance_map(self.goal_cells)[self.spec.start.cell])


def pose_features(start: Pose, pose: Pose, world: World) -> np.ndarray:
    turns = (int(pose.heading) - int(start.heading)) % 4
    angle = turns * np.pi / 2.0
    return np.array(
        [
            (pose.cell[0] - start.cell[0]) / world.height,
            (pose.cell[1] - start.cell[1]) / world.width,
            np.cos(angle),
            np.sin(angle),
        ],
        dtype=np.float32,
    )
