import json
from dataclasses import replace

import numpy as np
import pytest

from descrl.core.base import DecodeConfig, EvalConfig, WorldConfig
from descrl.env.pool import WorldCache
from descrl.env.trajectory import read_trajectory
from descrl.evaluation.metrics import compute_metrics, read_records
from descrl.evaluation.render import render_records
from descrl.evaluation.runner import (
    DescRLPolicy, RandomPolicy, ShortestPathPolicy, episode_specs, run_episodes,
)
from descrl.exceptions import ValidationError

from conftest import make_agent, tiny_env

WORLD = WorldConfig(height=9, width=9, rooms=2, objects=3)


@pytest.fixture
def worlds():
    return WorldCache(WORLD).split("test", 3)


@pytest.fixture
def long_env():
    return replace(tiny_env(), max_steps=100)


def test_shortest_path_policy_is_perfect(worlds, long_env):
    records = run_episodes(ShortestPathPolicy(), worlds, 12, EvalConfig(episodes=12, batch=5), long_env)
    assert [r.episode for r in records] == list(range(12))
    metrics = compute_metrics(records)
    assert metrics["SR"] == metrics["SPL"] == metrics["SNA"] == 1.0
    assert metrics["DTG"] == 0.0
    for r in records:
        assert r.num_actions == r.min_actions
        assert r.path_length == r.shortest_length
        assert r.world_seed == worlds[r.episode % 3].seed


def test_policies_see_the_same_episodes(worlds, long_env):
    cfg = EvalConfig(episodes=6, seed=4, batch=2)
    expert = run_episodes(ShortestPathPolicy(), worlds, 6, cfg, long_env)
    wanderer = run_episodes(RandomPolicy(np.random.default_rng(0)), worlds, 6, cfg, long_env)
    assert [r.spec for r in expert] == [r.spec for r in wanderer]
    assert [r.spec for r in expert] != [r.spec for r in run_episodes(ShortestPathPolicy(), worlds, 6, replace(cfg, seed=5), long_env)]


def test_batch_size_does_not_change_results(worlds, long_env):
    runs = [
        run_episodes(ShortestPathPolicy(), worlds, 5, EvalConfig(episodes=5, batch=b), long_env)
        for b in (1, 4)
    ]
    assert runs[0] == runs[1]


def test_unheard_flag_reaches_the_episodes(worlds, env_cfg):
    records = run_episodes(ShortestPathPolicy(), worlds, 2, EvalConfig(episodes=2, unheard=True), env_cfg)
    assert all(r.spec["unheard"] for r in records)


def test_records_and_trajectories_are_written(tmp_path, worlds, long_env):
    records_path = tmp_path / "eval" / "records.jsonl"
    traj_path = tmp_path / "trajectories.jsonl"
    records = run_episodes(
        ShortestPathPolicy(), worlds, 4, EvalConfig(episodes=4), long_env,
        records_path=str(records_path), trajectory_path=str(traj_path),
    )
    assert read_records(str(records_path)) == records
    steps = [json.loads(line) for line in traj_path.read_text().splitlines()]
    assert len(steps) == sum(r.num_actions for r in records)
    assert {s["episode"] for s in steps} == {0, 1, 2, 3}
    logged = list(read_trajectory(str(traj_path)))
    assert sum(s.done for s in logged) == 4
    assert all(s.success for s in logged if s.done)


def test_descrl_policy_verbalizes_each_step(worlds):
    env = replace(tiny_env(), max_steps=6)
    policy = DescRLPolicy(make_agent(), DecodeConfig())
    records = run_episodes(policy, worlds, 2, EvalConfig(episodes=2, batch=2), env)
    for r in records:
        assert len(r.descriptions) == r.num_actions
        # Zero-initialized heads always move forward and never stop.
        assert set(r.actions) == {"move_forward"} and not r.success
    assert run_episodes(DescRLPolicy(make_agent()), worlds, 1, EvalConfig(episodes=1), env)[0].descriptions is None


def test_no_worlds_rejected(env_cfg):
    with pytest.raises(ValidationError):
        run_episodes(ShortestPathPolicy(), [], 1, EvalConfig(episodes=1), env_cfg)


def test_episode_specs_are_seeded(worlds, env_cfg):
    a = [spec for _, spec in episode_specs(worlds, 5, 9, env_cfg)]
    b = [spec for _, spec in episode_specs(worlds, 5, 9, env_cfg)]
    assert a == b


def test_render_failures_only(corridor, env_cfg):
    records = run_episodes(ShortestPathPolicy(), [corridor], 2, EvalConfig(episodes=2), env_cfg)
    failed = replace(records[1], success=False)
    text = render_records(lambda seed: corridor, [records[0], failed], failures_only=True)
    assert text.startswith("episode 1 world 7: failure")
    assert "success" not in text
    assert "bed" in text.splitlines()[0]
    grid = text.splitlines()[1:1 + corridor.height]
    assert grid[0] == "#######"
    assert sum(ch in "^>v<" for row in grid for ch in row) == 1
    full = render_records(lambda seed: corridor, [records[0], failed])
    assert full.count("\n\n") == 1
