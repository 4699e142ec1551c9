"""Shared fixtures: tiny configs and small hand-built worlds."""

import numpy as np
import pytest

from descrl.core.base import (
    AdgenConfig, AgentConfig, EnvConfig, Heading, PPOConfig, TrainConfig, WorldConfig,
)
from descrl.core.seeding import make_rng
from descrl.env.sim import EpisodeSpec, audio_dim
from descrl.env.world import FIRST_OBJECT_LABEL, Pose, world_from_ascii
from descrl.models.agent import DescRLAgent

BED = FIRST_OBJECT_LABEL + 3


def tiny_env() -> EnvConfig:
    return EnvConfig(max_steps=30, patch_half_width=1, audio_spec_dim=4, sound_stop_min=3)


def tiny_agent(**overrides) -> AgentConfig:
    values = dict(
        d_model=16, n_heads=2, d_ff=32, d_hidden=16, n_enc_layers=1,
        n_shared_dec=1, n_unshared_dec=1, memory=4, max_desc_len=12,
    )
    values.update(overrides)
    return AgentConfig(**values)


def tiny_train(**overrides) -> TrainConfig:
    cfg = TrainConfig(
        seed=0,
        world=WorldConfig(height=9, width=9, rooms=2, objects=3),
        env=tiny_env(),
        agent=tiny_agent(),
        adgen=AdgenConfig(
            d_model=16, n_heads=2, d_ff=32, d_hidden=16, n_enc_layers=1,
            n_dec_layers=1, epochs=2, batch_size=8, max_desc_len=12,
        ),
        ppo=PPOConfig(n_envs=2, horizon=8, epochs=1, minibatch=8),
        pretrain_updates=2,
        pretrain_batch=4,
        dataset_size=8,
        window=6,
        desc_stride=2,
        n_updates=2,
        eval_every=0,
        eval_episodes=2,
        n_train_worlds=2,
        n_eval_worlds=1,
    )
    for key, value in overrides.items():
        setattr(cfg, key, value)
    return cfg


@pytest.fixture
def corridor():
    """
    Two rooms side by side; a bed at the east end of the bedroom.

        #######
        #kkkbb#
        #kkkbb#
        #######
    """
    rows = ["#######", "#.....#", "#.....#", "#######"]
    rooms = ["0000000", "0111220", "0111220", "0000000"]
    return world_from_ascii(rows, rooms, objects=[(BED, (1, 5))], seed=7)


@pytest.fixture
def corridor_spec():
    return EpisodeSpec(start=Pose((1, 1), Heading.E), goal=0, max_steps=30)


@pytest.fixture
def env_cfg():
    return tiny_env()


@pytest.fixture
def train_cfg():
    return tiny_train()


def make_agent(cfg: AgentConfig = None, env: EnvConfig = None, seed: int = 0) -> DescRLAgent:
    cfg = cfg or tiny_agent()
    env = env or tiny_env()
    patch = 2 * env.patch_half_width + 1
    return DescRLAgent(cfg, patch, audio_dim(env), make_rng(seed, "init"))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
