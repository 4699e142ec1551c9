import numpy as np
import pytest

from descrl.core.functional import cross_entropy, entropy, mse, soft_cross_entropy
from descrl.core.gradcheck import gradient_check
from descrl.core.tensor import Parameter, Tensor, precision
from descrl.exceptions import ShapeError, ValidationError
from descrl.language.vocab import PAD, VOCAB_SIZE


def test_uniform_logits_give_log_vocab():
    logits = Tensor(np.zeros((2, 5, VOCAB_SIZE)))
    targets = np.arange(10).reshape(2, 5) % VOCAB_SIZE
    assert cross_entropy(logits, targets).item() == pytest.approx(np.log(VOCAB_SIZE), rel=1e-6)


def test_pad_targets_do_not_change_the_mean(rng):
    logits = rng.normal(size=(1, 6, VOCAB_SIZE))
    targets = np.array([[5, 7, 9, 1, PAD, PAD]])
    full = cross_entropy(Tensor(logits), targets, ignore_index=PAD).item()
    trimmed = cross_entropy(Tensor(logits[:, :4]), targets[:, :4], ignore_index=PAD).item()
    assert full == pytest.approx(trimmed, rel=1e-6)


def test_padded_logits_do_not_receive_gradient(rng):
    from descrl.core.tensor import backward

    logits = Parameter(rng.normal(size=(1, 4, VOCAB_SIZE)), name="logits")
    grads = backward(cross_entropy(logits, np.array([[3, 4, PAD, PAD]]), ignore_index=PAD), {"logits": logits})
    assert np.all(grads["logits"][0, 2:] == 0.0)
    assert np.any(grads["logits"][0, :2] != 0.0)


def test_out_of_vocabulary_target_rejected():
    with pytest.raises(ValidationError):
        cross_entropy(Tensor(np.zeros((2, 4))), np.array([1, 4]))
    with pytest.raises(ShapeError):
        cross_entropy(Tensor(np.zeros((2, 4))), np.array([1, 2, 3]))


def test_soft_targets_reduce_to_hard_cross_entropy(rng):
    logits = Tensor(rng.normal(size=(3, 7)))
    targets = np.array([0, 6, 2])
    one_hot = np.eye(7)[targets]
    hard = cross_entropy(logits, targets).item()
    soft = soft_cross_entropy(logits, one_hot).item()
    assert soft == pytest.approx(hard, rel=1e-6)


def test_soft_cross_entropy_temperature_scaling(rng):
    logits = rng.normal(size=(4, 5))
    q = np.full((4, 5), 0.2)
    t = 2.0
    expected = soft_cross_entropy(Tensor(logits / t), q).item() * t * t
    assert soft_cross_entropy(Tensor(logits), q, temperature=t).item() == pytest.approx(expected, rel=1e-5)
    with pytest.raises(ValidationError):
        soft_cross_entropy(Tensor(logits), q, temperature=0.0)


def test_soft_cross_entropy_gradient_matches_finite_differences(rng):
    q = rng.dirichlet(np.ones(6), size=3)
    with precision("float64"):
        z = Parameter(rng.normal(size=(3, 6)), name="z")
        error = gradient_check(lambda: soft_cross_entropy(z, q, mask=np.array([1, 0, 1]), temperature=1.5), {"z": z})
    assert error < 1e-4


def test_fully_masked_losses_are_zero():
    logits = Tensor(np.zeros((2, 3)))
    assert cross_entropy(logits, np.array([PAD, PAD]), ignore_index=PAD).item() == 0.0
    assert mse(Tensor(np.ones(2)), np.zeros(2), mask=np.zeros(2)).item() == 0.0


def test_mse_averages_rows_then_items():
    pred = Tensor(np.array([[1.0, 3.0], [0.0, 0.0]]))
    assert mse(pred, np.zeros((2, 2))).item() == pytest.approx(2.5)
    assert mse(pred, np.zeros((2, 2)), mask=np.array([1, 0])).item() == pytest.approx(5.0)


def test_entropy_of_uniform_is_log_n():
    assert entropy(Tensor(np.zeros((3, 4)))).item() == pytest.approx(np.log(4), rel=1e-6)
