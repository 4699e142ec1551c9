import numpy as np
import pytest

from descrl.core.checkpoint import (
    decode_params, encode_params, load_checkpoint, parameter_hash, save_checkpoint, structure_hash,
)
from descrl.exceptions import CheckpointError

from conftest import make_agent, tiny_agent


def test_agent_parameters_survive_a_save_and_load(tmp_path):
    source = make_agent(seed=1)
    path = tmp_path / "runs" / "agent.ckpt"
    save_checkpoint(str(path), source.parameters())
    target = make_agent(seed=2)
    assert parameter_hash(target.parameters()) != parameter_hash(source.parameters())
    target.load_state_dict(load_checkpoint(str(path)))
    assert parameter_hash(target.parameters()) == parameter_hash(source.parameters())
    assert not (tmp_path / "runs" / "agent.ckpt.tmp").exists()


def test_names_and_order_are_kept():
    params = {"b": np.arange(6, dtype=np.float32).reshape(2, 3), "a": np.array(2.5, dtype=np.float32)}
    decoded = decode_params(encode_params(params))
    assert list(decoded) == ["b", "a"]
    np.testing.assert_array_equal(decoded["b"], params["b"])
    assert decoded["a"].shape == ()


def test_structure_hash_ignores_values_but_not_shapes():
    a, b = make_agent(seed=1), make_agent(seed=2)
    assert structure_hash(a.parameters()) == structure_hash(b.parameters())
    assert structure_hash(a.parameters()) != structure_hash(make_agent(tiny_agent(n_shared_dec=2)).parameters())


def test_mismatched_model_rejected(tmp_path):
    path = tmp_path / "agent.ckpt"
    save_checkpoint(str(path), make_agent().parameters())
    other = make_agent(tiny_agent(use_task_embedding=False))
    with pytest.raises(CheckpointError):
        other.load_state_dict(load_checkpoint(str(path)))
    wide = make_agent(tiny_agent(d_model=32, n_heads=2))
    with pytest.raises(CheckpointError):
        wide.load_state_dict(load_checkpoint(str(path)), strict=False)


@pytest.mark.parametrize("mutate", [
    lambda blob: b"XXXX" + blob[4:],
    lambda blob: blob[:-3],
    lambda blob: blob + b"\0",
    lambda blob: blob[:4] + (9).to_bytes(4, "little") + blob[8:],
])
def test_corrupt_files_rejected(tmp_path, mutate):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(mutate(encode_params({"w": np.ones((2, 2), dtype=np.float32)})))
    with pytest.raises(CheckpointError):
        load_checkpoint(str(path))


def test_missing_file_rejected(tmp_path):
    with pytest.raises(CheckpointError):
        load_checkpoint(str(tmp_path / "nope.ckpt"))
