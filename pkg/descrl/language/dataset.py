"""
Offline description datasets built from shortest-path episodes.

Each JSONL record stores enough to replay the episode exactly:

    {"world_ref": 12, "episode": {...spec..., "actions": ["turn_left", ...]},
     "t": 7, "window": [0, 7], "mode": "past", "tokens": [...],
     "text": "enter the kitchen", "soft": null}
"""

from dataclasses import dataclass
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple
import json
import os

import numpy as np

from ..core.base import Action, DescriptionMode, EnvConfig, WorldConfig, logger
from ..core.seeding import make_rng
from ..env.pool import WorldCache, sample_episode, world_seeds
from ..env.sim import EpisodeSpec, NavEnv, Observation, goal_cells, render_visual
from ..env.world import World, follow, shortest_path_actions
from ..exceptions import ValidationError
from .oracle import (
    DEFAULT_K, MAX_DESC_LEN, Description, Trajectory, describe, soft_targets,
    window_bounds, window_path,
)


@dataclass
class DatasetRecord:
    world_ref: int
    episode: Dict[str, Any]
    t: int
    window: List[int]
    mode: str
    tokens: List[int]
    text: str
    soft: Optional[Dict[str, float]] = None

    def to_json(self) -> str:
        return json.dumps(
            {
                "world_ref": self.world_ref,
                "episode": self.episode,
                "t": self.t,
                "window": self.window,
                "mode": self.mode,
                "tokens": self.tokens,
                "text": self.text,
                "soft": self.soft,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, line: str) -> "DatasetRecord":
        data = json.loads(line)
        return cls(**data)

    @property
    def spec(self) -> EpisodeSpec:
        return EpisodeSpec.from_dict(self.episode)

    @property
    def actions(self) -> List[Action]:
        return [Action(a) for a in self.episode["actions"]]

    def description(self) -> Description:
        soft = None
        if self.soft is not None:
            soft = soft_targets(self.tokens, self.soft["smoothing"], self.soft["temperature"])
        return Description(list(self.tokens), DescriptionMode.parse(self.mode), soft)


def episode_trajectory(world: World, spec: EpisodeSpec, actions: Sequence[Action]) -> Trajectory:
    poses = follow(world, spec.start, actions)
    return Trajectory(
        poses=poses,
        actions=list(actions),
        goal_cells=goal_cells(world, spec),
        goal_label=world.objects[spec.goal].label,
    )


def build_dataset(
    seed: int,
    n_samples: int,
    mode: DescriptionMode,
    k: int = DEFAULT_K,
    world_cfg: Optional[WorldConfig] = None,
    env_cfg: Optional[EnvConfig] = None,
    n_worlds: int = 64,
    out_path: Optional[str] = None,
    smoothing: Optional[float] = None,
    temperature: float = 1.0,
    max_len: int = MAX_DESC_LEN,
) -> List[DatasetRecord]:
    """
    Sample shortest-path episodes on training worlds and describe one window each.

    Records are shuffled by a seeded permutation; the same arguments always
    produce the same file byte for byte.

    Raises:
        UnreachableGoalError: If episode sampling keeps failing in a world
    """
    if n_samples < 0:
        raise ValidationError("n_samples must be >= 0", field="n")
    mode = DescriptionMode.parse(mode)
    world_cfg = world_cfg or WorldConfig()
    env_cfg = env_cfg or EnvConfig()
    cache = WorldCache(world_cfg)
    seeds = world_seeds("train", n_worlds)
    rng = make_rng(seed, "dataset")
    soft = None if smoothing is None else {"smoothing": smoothing, "temperature": temperature}

    records: List[DatasetRecord] = []
    for _ in range(n_samples):
        world = cache.get(seeds[int(rng.integers(len(seeds)))])
        spec = sample_episode(world, env_cfg, rng)
        actions = shortest_path_actions(world, spec.start, goal_cells(world, spec), spec.success_radius)
        traj = episode_trajectory(world, spec, actions)
        t = int(rng.integers(len(actions)))
        desc = describe(
            world, traj, t, mode, k, spec.success_radius, env_cfg.patch_half_width, max_len
        )
        _, _, _, future_actions = window_path(world, traj, t, mode, k, spec.success_radius)
        a, b = window_bounds(t, mode, k, len(future_actions))
        episode = spec.to_dict()
        episode["actions"] = [act.value for act in actions]
        records.append(DatasetRecord(
            world_ref=world.seed, episode=episode, t=t, window=[a, b], mode=mode.value,
            tokens=desc.tokens, text=desc.text(), soft=soft,
        ))

    order = rng.permutation(len(records))
    records = [records[int(i)] for i in order]
    if out_path is not None:
        write_dataset(out_path, records)
    logger.info("Built %d %s records (seed=%d, k=%d)", len(records), mode.value, seed, k)
    return records


def write_dataset(path: str, records: Sequence[DatasetRecord]) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for record in records:
            f.write(record.to_json() + "\n")


def load_dataset(path: str) -> List[DatasetRecord]:
    with open(path, "r", encoding="utf-8") as f:
        return [DatasetRecord.from_json(line) for line in f if line.strip()]


def iter_dataset(path: str) -> Iterator[DatasetRecord]:
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if line.strip():
                yield DatasetRecord.from_json(line)


# ==================== Replay ====================

@dataclass
class ReplayedSample:
    """A record replayed through the simulator up to its anchor step."""
    record: DatasetRecord
    world: World
    spec: EpisodeSpec
    trajectory: Trajectory
    observations: List[Observation]
    goal_offset: np.ndarray
    goal_label: int


def replay(record: DatasetRecord, cache: WorldCache, env_cfg: EnvConfig) -> ReplayedSample:
    """Re-run the record's actions up to step t; observations O_0..O_t."""
    world = cache.get(record.world_ref)
    spec = record.spec
    actions = record.actions
    env = NavEnv(world, env_cfg)
    observations = [env.reset(spec)]
    for action in actions[:record.t]:
        obs, _ = env.step(action)
        observations.append(obs)
    return ReplayedSample(
        record=record,
        world=world,
        spec=spec,
        trajectory=episode_trajectory(world, spec, actions),
        observations=observations,
        goal_offset=env.goal_offset(),
        goal_label=env.goal_label,
    )


def window_inputs(
    world: World,
    traj: Trajectory,
    t: int,
    mode: DescriptionMode,
    k: int = DEFAULT_K,
    radius: int = 1,
    half_width: int = 3,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Generator inputs for the window at t: visual patches V_i paired with the next action a_{i+1}.

    A window without actions yields one pair with an all-zero action.

    Returns:
        (visual (n, P, P) int8, actions (n, 4) float32)
    """
    past_poses, past_actions, future_poses, future_actions = window_path(world, traj, t, mode, k, radius)
    if past_poses and future_poses:
        poses = past_poses + future_poses[1:]
        actions = past_actions + future_actions
    elif past_poses:
        poses, actions = past_poses, past_actions
    else:
        poses, actions = future_poses, future_actions
    if not actions:
        visual = render_visual(world, poses[0], half_width)[None]
        return visual, np.zeros((1, len(Action)), dtype=np.float32)
    visual = np.stack([render_visual(world, p, half_width) for p in poses[:len(actions)]])
    onehots = np.stack([a.one_hot() for a in actions])
    return visual, onehots
