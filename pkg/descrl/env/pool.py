"""
World splits, episode sampling and parallel environment slots.
"""

from typing import Dict, List, Optional, Sequence

import numpy as np

from ..core.base import EnvConfig, Heading, RewardMode, WorldConfig, logger
from ..exceptions import UnreachableGoalError, ValidationError
from .sim import EpisodeSpec, NavEnv, Observation
from .world import Pose, World, generate_world

# Disjoint seed ranges per split.
SPLIT_OFFSETS: Dict[str, int] = {"train": 0, "val": 500_000, "test": 1_000_000}

MAX_EPISODE_RETRIES = 64


def world_seeds(split: str, n: int) -> List[int]:
    if split not in SPLIT_OFFSETS:
        raise ValidationError(f"Unknown split '{split}'", field="split")
    return [SPLIT_OFFSETS[split] + i for i in range(n)]


class WorldCache:
    """Generated worlds keyed by seed."""

    def __init__(self, cfg: WorldConfig):
        self.cfg = cfg
        self._worlds: Dict[int, World] = {}

    def get(self, seed: int) -> World:
        world = self._worlds.get(seed)
        if world is None:
            world = self._worlds[seed] = generate_world(seed, self.cfg)
        return world

    def split(self, split: str, n: int) -> List[World]:
        return [self.get(s) for s in world_seeds(split, n)]


def sample_episode(
    world: World,
    cfg: EnvConfig,
    rng: np.random.Generator,
    min_distance: Optional[int] = None,
) -> EpisodeSpec:
    """
    Draw a goal object, a start pose and a sound-stop time.

    Starts closer than ``min_distance`` (default success_radius + 1) are
    re-drawn, at most MAX_EPISODE_RETRIES times.
    """
    min_distance = cfg.success_radius + 1 if min_distance is None else min_distance
    free = world.free_cells()
    for _ in range(MAX_EPISODE_RETRIES):
        goal = int(rng.integers(len(world.objects)))
        start = free[int(rng.integers(len(free)))]
        heading = Heading(int(rng.integers(4)))
        stop = None
        if cfg.sound_stops:
            stop = int(rng.integers(cfg.sound_stop_min, cfg.sound_stop_max + 1))
        seed = int(rng.integers(2 ** 31 - 1))
        label = world.objects[goal].label
        targets = world.cells_of(label) if cfg.reward_mode is RewardMode.OBJNAV else [world.objects[goal].cell]
        d = int(world.distance_map(targets)[start])
        if d >= min_distance:
            return EpisodeSpec(
                start=Pose(start, heading),
                goal=goal,
                sound_stop_time=stop,
                max_steps=cfg.max_steps,
                success_radius=cfg.success_radius,
                reward_mode=cfg.reward_mode,
                reward_sign=cfg.reward_sign,
                unheard=cfg.unheard,
                seed=seed,
            )
        if d < 0:
            logger.warning("World %d: unreachable goal draw, resampling", world.seed)
    raise UnreachableGoalError(
        f"No valid episode after {MAX_EPISODE_RETRIES} draws in world {world.seed}"
    )


class EnvPool:
    """
    Fixed set of environment slots over a list of worlds.

    Every reset draws the world and the episode from the pool stream.
    """

    def __init__(self, worlds: Sequence[World], cfg: EnvConfig, n_envs: int, rng: np.random.Generator):
        if not worlds:
            raise ValidationError("Environment pool needs at least one world", field="worlds")
        if n_envs < 1:
            raise ValidationError("n_envs must be >= 1", field="n_envs")
        self.worlds = list(worlds)
        self.cfg = cfg
        self.rng = rng
        self.envs = [NavEnv(self.worlds[i % len(self.worlds)], cfg) for i in range(n_envs)]

    def __len__(self) -> int:
        return len(self.envs)

    def reset(self, i: int) -> Observation:
        """Start a fresh episode in slot i on a freshly drawn world."""
        world = self.worlds[int(self.rng.integers(len(self.worlds)))]
        env = NavEnv(world, self.cfg)
        self.envs[i] = env
        return env.reset(sample_episode(world, self.cfg, self.rng))

    def reset_all(self) -> List[Observation]:
        return [self.reset(i) for i in range(len(self.envs))]
