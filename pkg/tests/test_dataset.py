import numpy as np
import pytest

from descrl.core.base import DescriptionMode, WorldConfig
from descrl.env.pool import WorldCache
from descrl.language.dataset import (
    build_dataset, episode_trajectory, iter_dataset, load_dataset, replay, window_inputs,
)
from descrl.language.vocab import EOS, VOCAB
from descrl.exceptions import ValidationError

from conftest import tiny_env

WORLD = WorldConfig(height=9, width=9, rooms=2, objects=3)


def build(mode="past", n=12, **kwargs):
    return build_dataset(7, n, DescriptionMode.parse(mode), k=5, world_cfg=WORLD, env_cfg=tiny_env(), n_worlds=3, **kwargs)


def test_same_arguments_give_identical_files(tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    build(out_path=str(a))
    build(out_path=str(b))
    assert a.read_bytes() == b.read_bytes()
    assert len(a.read_text().splitlines()) == 12


def test_different_seeds_differ():
    a = build()
    b = build_dataset(8, 12, DescriptionMode.PAST, k=5, world_cfg=WORLD, env_cfg=tiny_env(), n_worlds=3)
    assert [r.to_json() for r in a] != [r.to_json() for r in b]


@pytest.mark.parametrize("mode", ["past", "future", "past_future"])
def test_records_are_consistent(mode):
    for record in build(mode):
        assert record.mode == mode
        assert record.tokens[-1] == EOS and len(record.tokens) <= 24
        assert record.text == VOCAB.text(record.tokens)
        a, b = record.window
        assert a <= record.t <= b
        if mode == "past":
            assert b == record.t and record.t - a <= 5
        if mode == "future":
            assert a == record.t
        assert 0 <= record.t < len(record.actions)
        assert record.actions[-1].value == "stop"


def test_load_and_iterate(tmp_path):
    path = tmp_path / "d.jsonl"
    records = build(out_path=str(path))
    assert [r.to_json() for r in load_dataset(str(path))] == [r.to_json() for r in records]
    assert len(list(iter_dataset(str(path)))) == len(records)


def test_soft_records_rebuild_targets():
    record = build(n=2, smoothing=0.1, temperature=2.0)[0]
    assert record.soft == {"smoothing": 0.1, "temperature": 2.0}
    desc = record.description()
    assert desc.soft.shape == (len(record.tokens), len(VOCAB))
    np.testing.assert_allclose(desc.soft.sum(axis=1), 1.0)
    assert build(n=2)[0].description().soft is None


def test_replay_reaches_the_anchor_pose():
    cache = WorldCache(WORLD)
    env_cfg = tiny_env()
    for record in build(n=6):
        sample = replay(record, cache, env_cfg)
        assert len(sample.observations) == record.t + 1
        assert sample.observations[-1].pose == sample.trajectory.poses[record.t]
        assert sample.goal_label == sample.world.objects[record.spec.goal].label
        assert sample.goal_offset.shape == (2,)


@pytest.mark.parametrize("mode", list(DescriptionMode))
def test_window_inputs_pair_frames_with_actions(mode):
    cache = WorldCache(WORLD)
    patch = 2 * tiny_env().patch_half_width + 1
    for record in build(mode.value, n=6):
        world = cache.get(record.world_ref)
        traj = episode_trajectory(world, record.spec, record.actions)
        visual, actions = window_inputs(world, traj, record.t, mode, 5, 1, tiny_env().patch_half_width)
        assert visual.shape[1:] == (patch, patch)
        assert visual.shape[0] == actions.shape[0] >= 1
        np.testing.assert_array_equal(actions.sum(axis=1) <= 1.0, True)


def test_negative_sample_count_rejected():
    with pytest.raises(ValidationError):
        build(n=-1)
    assert build(n=0) == []
