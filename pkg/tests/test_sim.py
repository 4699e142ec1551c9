from dataclasses import replace

import numpy as np
import pytest

from descrl.core.base import Action, EnvConfig, Heading, RewardMode, RewardSign, WorldConfig
from descrl.env.pool import EnvPool, WorldCache, sample_episode
from descrl.env.trajectory import StepLog, TrajectoryLogger, read_trajectory
from descrl.env.sim import (
    NUM_CHANNELS, WALL_CHANNEL, NavEnv, audio_dim, compute_reward, render_audio, render_visual,
)
from descrl.env.world import Pose, shortest_path_actions
from descrl.exceptions import EpisodeError, ValidationError

F, L, R, S = Action.MOVE_FORWARD, Action.TURN_LEFT, Action.TURN_RIGHT, Action.STOP


def run(env, actions):
    return [env.step(a)[1] for a in actions]


def test_savnav_rewards_along_the_shortest_path(corridor, corridor_spec, env_cfg):
    env = NavEnv(corridor, env_cfg)
    env.reset(corridor_spec)
    outcomes = run(env, [F, F, F, S])
    assert [o.reward for o in outcomes] == pytest.approx([0.99, 0.99, 0.99, 9.99])
    assert [o.distance for o in outcomes] == [3, 2, 1, 1]
    assert outcomes[-1].success and outcomes[-1].done
    assert not any(o.done for o in outcomes[:-1])
    with pytest.raises(EpisodeError):
        env.step(F)


def test_turning_and_bumping_cost_the_step_penalty(corridor, corridor_spec, env_cfg):
    env = NavEnv(corridor, env_cfg)
    env.reset(replace(corridor_spec, start=Pose((1, 1), Heading.N)))
    bump, turn = run(env, [F, R])
    assert bump.reward == pytest.approx(-0.01) and bump.distance == 4
    assert turn.reward == pytest.approx(-0.01)


def test_objnav_rewards(corridor, corridor_spec, env_cfg):
    env = NavEnv(corridor, env_cfg)
    env.reset(replace(corridor_spec, reward_mode=RewardMode.OBJNAV))
    outcomes = run(env, [F, L, L, F, R, R, F, F, F, S])
    rewards = [o.reward for o in outcomes]
    assert rewards[0] == pytest.approx(0.999)
    assert rewards[1] == pytest.approx(-0.001)
    # Moving back west increases the distance.
    assert rewards[3] == pytest.approx(-1.001)
    assert rewards[-1] == pytest.approx(2.5 - 0.001)


def test_stop_far_from_goal_fails(corridor, corridor_spec, env_cfg):
    env = NavEnv(corridor, env_cfg)
    env.reset(corridor_spec)
    (outcome,) = run(env, [S])
    assert outcome.done and not outcome.success
    assert outcome.reward == pytest.approx(-0.01)


def test_step_limit_ends_the_episode(corridor, corridor_spec, env_cfg):
    env = NavEnv(corridor, env_cfg)
    env.reset(replace(corridor_spec, max_steps=2))
    first, second = run(env, [L, L])
    assert not first.done
    assert second.done and not second.success


@pytest.mark.parametrize("mode, sign, success, d_prev, d_t, expected", [
    (RewardMode.SAVNAV, RewardSign.PROGRESS, False, 5, 4, 0.99),
    (RewardMode.SAVNAV, RewardSign.PROGRESS, False, 4, 5, -0.01),
    (RewardMode.SAVNAV, RewardSign.AS_WRITTEN, False, 4, 5, 0.99),
    (RewardMode.SAVNAV, RewardSign.PROGRESS, True, 1, 1, 9.99),
    (RewardMode.OBJNAV, RewardSign.PROGRESS, False, 5, 4, 0.999),
    (RewardMode.OBJNAV, RewardSign.AS_WRITTEN, False, 5, 4, -1.001),
    (RewardMode.OBJNAV, RewardSign.PROGRESS, True, 1, 1, 2.499),
])
def test_compute_reward(mode, sign, success, d_prev, d_t, expected):
    assert compute_reward(mode, sign, success, d_prev, d_t) == pytest.approx(expected)


def test_observation_contents(corridor, corridor_spec, env_cfg):
    env = NavEnv(corridor, env_cfg)
    obs = env.reset(corridor_spec)
    assert obs.t == 0 and obs.prev_action is None
    assert obs.audio.shape == (audio_dim(env_cfg),)
    # Sound comes from straight ahead at distance 4.
    np.testing.assert_allclose(obs.audio[:3], [1.0, 0.0, 0.2], rtol=1e-6)
    assert obs.visual.shape == (3, 3) and obs.visual.dtype == np.int8
    assert obs.visual[0, 0] == WALL_CHANNEL
    assert obs.visual[1, 1] == 2  # kitchen floor
    assert obs.visual.max() < NUM_CHANNELS
    np.testing.assert_allclose(obs.pose_features, [0.0, 0.0, 1.0, 0.0], atol=1e-6)
    np.testing.assert_allclose(env.goal_offset(), [4.0, 0.0])
    assert env.initial_distance() == 4

    obs, _ = env.step(R)
    assert obs.prev_action is R
    np.testing.assert_allclose(obs.pose_features, [0.0, 0.0, 0.0, 1.0], atol=1e-6)
    # The goal is now on the agent's left.
    np.testing.assert_allclose(env.goal_offset(), [0.0, -4.0])


def test_objects_show_up_in_the_patch(corridor):
    patch = render_visual(corridor, Pose((1, 4), Heading.E), 1)
    assert patch[0, 1] == 1 + corridor.label_at((1, 5))


def test_sound_stops_at_the_drawn_step(corridor, corridor_spec, env_cfg):
    env = NavEnv(corridor, env_cfg)
    obs = env.reset(replace(corridor_spec, sound_stop_time=2))
    assert not obs.silent
    obs, _ = env.step(L)
    assert not obs.silent and not env.sound_stopped
    obs, _ = env.step(R)
    assert obs.silent and env.sound_stopped


def test_unheard_bank_changes_the_spectrum(corridor, corridor_spec):
    cfg = EnvConfig(audio_noise=0.0, audio_spec_dim=8)
    heard = NavEnv(corridor, cfg).reset(corridor_spec).audio
    unheard = NavEnv(corridor, cfg).reset(replace(corridor_spec, unheard=True)).audio
    np.testing.assert_allclose(heard[:3], unheard[:3])
    assert not np.allclose(heard[3:], unheard[3:])


def test_episode_audio_is_seeded(corridor, corridor_spec, env_cfg):
    a = NavEnv(corridor, env_cfg).reset(corridor_spec).audio
    b = NavEnv(corridor, env_cfg).reset(corridor_spec).audio
    np.testing.assert_array_equal(a, b)


def test_invalid_episode_starts(corridor, corridor_spec, env_cfg):
    env = NavEnv(corridor, env_cfg)
    with pytest.raises(EpisodeError):
        env.reset(replace(corridor_spec, start=Pose((0, 0), Heading.E)))
    with pytest.raises(EpisodeError):
        env.reset(replace(corridor_spec, goal=3))
    with pytest.raises(EpisodeError):
        env.step(F)


def test_sampled_episodes_respect_minimum_distance(env_cfg):
    world = WorldCache(WorldConfig()).get(3)
    rng = np.random.default_rng(0)
    for _ in range(30):
        spec = sample_episode(world, env_cfg, rng)
        env = NavEnv(world, env_cfg)
        env.reset(spec)
        assert env.initial_distance() >= env_cfg.success_radius + 1
        assert env_cfg.sound_stop_min <= spec.sound_stop_time <= env_cfg.sound_stop_max


def test_sampling_is_deterministic(env_cfg):
    world = WorldCache(WorldConfig()).get(4)
    a = [sample_episode(world, env_cfg, np.random.default_rng(9)) for _ in range(3)]
    b = [sample_episode(world, env_cfg, np.random.default_rng(9)) for _ in range(3)]
    assert a == b


def test_pool_requires_worlds(env_cfg):
    with pytest.raises(ValidationError):
        EnvPool([], env_cfg, 2, np.random.default_rng(0))
    pool = EnvPool(WorldCache(WorldConfig()).split("train", 2), env_cfg, 3, np.random.default_rng(0))
    observations = pool.reset_all()
    assert len(observations) == len(pool) == 3
    assert all(obs.t == 0 for obs in observations)


def random_episode(env, spec, rng):
    """Random actions until done; returns the first observation and every (obs, action, outcome)."""
    obs = env.reset(spec)
    first, steps = obs, []
    done = False
    while not done:
        action = (F, L, R, S)[rng.choice(4, p=[0.6, 0.15, 0.15, 0.1])]
        obs, outcome = env.step(action)
        steps.append((obs, action, outcome))
        done = outcome.done
    return first, steps


@pytest.mark.parametrize("seed", range(5))
def test_objnav_shaping_telescopes(seed, env_cfg):
    cfg = replace(env_cfg, reward_mode=RewardMode.OBJNAV, max_steps=60)
    world = WorldCache(WorldConfig()).get(seed)
    rng = np.random.default_rng(seed)
    env = NavEnv(world, cfg)
    spec = sample_episode(world, cfg, rng)
    env.reset(spec)
    d0 = env.initial_distance()
    _, steps = random_episode(env, spec, rng)
    shaping = sum(o.reward + 0.001 - 2.5 * o.success for _, _, o in steps)
    assert shaping == pytest.approx(d0 - env.distance, abs=1e-9)


@pytest.mark.parametrize("mode", list(RewardMode))
@pytest.mark.parametrize("sign", list(RewardSign))
def test_logged_rewards_replay_exactly(mode, sign, env_cfg, tmp_path):
    cfg = replace(env_cfg, reward_mode=mode, reward_sign=sign, max_steps=40)
    world = WorldCache(WorldConfig()).get(11)
    rng = np.random.default_rng(3)
    path = str(tmp_path / "steps.jsonl")
    env = NavEnv(world, cfg)
    initial = []
    with TrajectoryLogger(path) as log:
        for episode in range(4):
            spec = sample_episode(world, cfg, rng)
            env.reset(spec)
            initial.append(env.initial_distance())
            _, steps = random_episode(env, spec, rng)
            for obs, action, outcome in steps:
                log.write(StepLog.from_step(obs, action, outcome), episode)

    logs = list(read_trajectory(path))
    assert sum(s.done for s in logs) == 4
    episode, d_prev = 0, initial[0]
    for step in logs:
        assert compute_reward(mode, sign, step.success, d_prev, step.distance) == step.reward
        d_prev = step.distance
        if step.done and episode < 3:
            episode += 1
            d_prev = initial[episode]


def test_intensity_falls_when_walking_away(corridor, corridor_spec, env_cfg):
    spec = replace(corridor_spec, sound_stop_time=None)
    env = NavEnv(corridor, env_cfg)
    start = Pose((1, 4), Heading.W)
    obs = env.reset(replace(spec, start=start))
    intensities = [obs.audio[2]]
    assert intensities[0] == render_audio(corridor, start, 0, spec, env_cfg)[2] == pytest.approx(0.5)
    for _ in range(3):
        obs, outcome = env.step(F)
        intensities.append(obs.audio[2])
    assert outcome.distance == 4
    assert all(b < a for a, b in zip(intensities, intensities[1:]))


@pytest.mark.parametrize("seed", range(3))
def test_intensity_tracks_distance_on_random_walks(seed, env_cfg):
    cfg = replace(env_cfg, sound_stops=False, max_steps=80)
    world = WorldCache(WorldConfig()).get(seed)
    rng = np.random.default_rng(seed)
    env = NavEnv(world, cfg)
    spec = sample_episode(world, cfg, rng)
    first, steps = random_episode(env, spec, rng)
    prev_d, prev_i = env.initial_distance(), first.audio[2]
    for obs, _, outcome in steps:
        if outcome.distance > prev_d:
            assert obs.audio[2] < prev_i
        elif outcome.distance == prev_d:
            assert obs.audio[2] == prev_i
        prev_d, prev_i = outcome.distance, obs.audio[2]


def test_shortest_path_episodes_always_succeed():
    cfg = EnvConfig()
    cache = WorldCache(WorldConfig())
    rng = np.random.default_rng(2024)
    successes = 0
    for episode in range(500):
        world = cache.get(episode % 25)
        env = NavEnv(world, cfg)
        spec = sample_episode(world, cfg, rng)
        env.reset(spec)
        plan = shortest_path_actions(world, spec.start, env.goal_cells, spec.success_radius)
        outcomes = run(env, plan)
        assert outcomes[-1].done and plan[-1] is S
        successes += outcomes[-1].success
    assert successes == 500
