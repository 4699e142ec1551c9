"""
Evaluation episodes.

Episode i runs in ``worlds[i % len(worlds)]`` with an episode drawn from
the (seed, "episode", i) stream, so two policies evaluated with the same
seed see exactly the same episodes. Episodes run in lockstep chunks of
``EvalConfig.batch`` so learned policies can batch their forward passes.
"""

from abc import ABC, abstractmethod
from dataclasses import replace
from contextlib import ExitStack
from typing import Dict, List, Optional, Sequence

import numpy as np

from ..core.base import ACTIONS, Action, DecodeConfig, EnvConfig, EvalConfig, logger
from ..core.seeding import make_rng
from ..env.pool import sample_episode
from ..env.sim import NavEnv, Observation
from ..env.trajectory import StepLog, TrajectoryLogger
from ..env.world import World, shortest_path_actions
from ..exceptions import ValidationError
from ..models.agent import DescRLAgent
from ..models.memory import MemoryBatch, ObservationWindow
from .metrics import EpisodeRecord, write_records

MOVES = (Action.MOVE_FORWARD, Action.TURN_LEFT, Action.TURN_RIGHT)


class Policy(ABC):
    """Acts for a set of environment slots running in lockstep."""

    name = "policy"

    @property
    def decodes(self) -> bool:
        return False

    def reset(self, slot: int, env: NavEnv, obs: Observation) -> None:
        pass

    @abstractmethod
    def act(self, slots: Sequence[int], envs: Sequence[NavEnv], observations: Sequence[Observation]) -> List[Action]:
        ...

    def description(self, slot: int) -> Optional[str]:
        """Text decoded at the last ``act`` for this slot, if the policy decodes."""
        return None


class ShortestPathPolicy(Policy):
    """Follows the shortest-path plan computed at reset."""

    name = "shortest_path"

    def __init__(self):
        self._plans: Dict[int, List[Action]] = {}

    def reset(self, slot: int, env: NavEnv, obs: Observation) -> None:
        self._plans[slot] = shortest_path_actions(
            env.world, obs.pose, env.goal_cells, env.cfg.success_radius
        )

    def act(self, slots, envs, observations) -> List[Action]:
        return [self._plans[s].pop(0) for s in slots]


class RandomPolicy(Policy):
    """Uniform over the three moves; stops once inside the success radius."""

    name = "random"

    def __init__(self, rng: np.random.Generator):
        self.rng = rng

    def act(self, slots, envs, observations) -> List[Action]:
        out = []
        for env in envs:
            if env.distance <= env.cfg.success_radius:
                out.append(Action.STOP)
            else:
                out.append(MOVES[int(self.rng.integers(len(MOVES)))])
        return out


class DescRLPolicy(Policy):
    """
    Greedy actions from a DescRL agent over its observation memory.

    With a decode config, the ADPredictor also verbalizes every step.
    """

    name = "descrl"

    def __init__(
        self,
        agent: DescRLAgent,
        decode: Optional[DecodeConfig] = None,
        rng: Optional[np.random.Generator] = None,
    ):
        self.agent = agent
        self.decode = decode
        self.rng = rng or np.random.default_rng(decode.seed if decode else 0)
        self._windows: Dict[int, ObservationWindow] = {}
        self._texts: Dict[int, str] = {}

    @property
    def decodes(self) -> bool:
        return self.decode is not None

    def reset(self, slot: int, env: NavEnv, obs: Observation) -> None:
        window = ObservationWindow(self.agent.cfg.memory)
        window.push(obs)
        self._windows[slot] = window

    def act(self, slots, envs, observations) -> List[Action]:
        for slot, obs in zip(slots, observations):
            window = self._windows[slot]
            if window.latest is not obs:
                window.push(obs)
        batch = MemoryBatch.stack([self._windows[s].batch() for s in slots])
        actions, _, _ = self.agent.act(batch, greedy=True)
        if self.decode is not None:
            descriptions = self.agent.decode(batch, self.decode, self.rng)
            for slot, desc in zip(slots, descriptions):
                self._texts[slot] = desc.text()
        return [ACTIONS[int(a)] for a in actions]

    def description(self, slot: int) -> Optional[str]:
        return self._texts.get(slot)


def episode_specs(worlds: Sequence[World], n: int, seed: int, env_cfg: EnvConfig):
    """The (world, spec) pairs evaluated for a seed."""
    for i in range(n):
        world = worlds[i % len(worlds)]
        yield world, sample_episode(world, env_cfg, make_rng(seed, "episode", i))


def run_episodes(
    policy: Policy,
    worlds: Sequence[World],
    n: int,
    eval_cfg: EvalConfig,
    env_cfg: EnvConfig,
    records_path: Optional[str] = None,
    trajectory_path: Optional[str] = None,
) -> List[EpisodeRecord]:
    """
    Run n evaluation episodes.

    Per-step logs go to ``trajectory_path`` (JSONL) when given.

    Raises:
        ValidationError: If no world is given
    """
    if not worlds:
        raise ValidationError("Evaluation needs at least one world", field="worlds")
    eval_cfg.validate()
    env_cfg = replace(env_cfg, unheard=eval_cfg.unheard)
    pairs = list(episode_specs(worlds, n, eval_cfg.seed, env_cfg))
    decoding = policy.decodes

    records: List[EpisodeRecord] = []
    with ExitStack() as stack:
        log = stack.enter_context(TrajectoryLogger(trajectory_path)) if trajectory_path else None
        for start in range(0, n, eval_cfg.batch):
            chunk = list(range(start, min(start + eval_cfg.batch, n)))
            records.extend(_run_chunk(policy, chunk, pairs, env_cfg, decoding, log))

    records.sort(key=lambda r: r.episode)
    logger.info(
        "Evaluated %s on %d episodes: SR=%.3f", policy.name, n,
        float(np.mean([r.success for r in records])) if records else 0.0,
    )
    if records_path is not None:
        write_records(records_path, records)
    return records


def _record(index: int, env: NavEnv, success: bool, plan: List[Action], trace, decoding: bool) -> EpisodeRecord:
    poses = trace["poses"]
    moved = sum(1 for a, b in zip(poses, poses[1:]) if a[:2] != b[:2])
    return EpisodeRecord(
        episode=index,
        world_seed=env.world.seed,
        success=bool(success),
        path_length=moved,
        shortest_length=sum(1 for a in plan if a is Action.MOVE_FORWARD),
        num_actions=len(trace["actions"]),
        min_actions=len(plan),
        final_distance=float(max(0, env.distance - env.cfg.success_radius)),
        sound_stopped=bool(env.sound_stopped),
        spec=env.spec.to_dict(),
        poses=poses,
        actions=trace["actions"],
        descriptions=trace["texts"] if decoding else None,
    )


def _run_chunk(
    policy: Policy,
    chunk: List[int],
    pairs,
    env_cfg: EnvConfig,
    decoding: bool,
    log: Optional[TrajectoryLogger],
) -> List[EpisodeRecord]:
    envs = {i: NavEnv(pairs[i][0], env_cfg) for i in chunk}
    obs: Dict[int, Observation] = {}
    trace = {i: {"poses": [], "actions": [], "texts": []} for i in chunk}
    for i in chunk:
        obs[i] = envs[i].reset(pairs[i][1])
        trace[i]["poses"].append(obs[i].pose.to_list())
        policy.reset(i, envs[i], obs[i])
    plans = {
        i: shortest_path_actions(envs[i].world, pairs[i][1].start, envs[i].goal_cells, env_cfg.success_radius)
        for i in chunk
    }
    done: List[EpisodeRecord] = []
    active = list(chunk)
    while active:
        actions = policy.act(active, [envs[i] for i in active], [obs[i] for i in active])
        still = []
        for i, action in zip(active, actions):
            if decoding:
                trace[i]["texts"].append(policy.description(i) or "")
            obs[i], outcome = envs[i].step(action)
            trace[i]["poses"].append(obs[i].pose.to_list())
            trace[i]["actions"].append(action.value)
            if log is not None:
                log.write(StepLog.from_step(obs[i], action, outcome), episode=i)
            if outcome.done:
                done.append(_record(i, envs[i], outcome.success, plans[i], trace[i], decoding))
            else:
                still.append(i)
        active = still
    return done
