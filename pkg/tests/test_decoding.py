import numpy as np
import pytest

from descrl.core.base import DecodeConfig, DecodeStrategy
from descrl.evaluation.decoding import autoregress, nucleus, select_token, tempered_probs
from descrl.exceptions import ValidationError
from descrl.language.vocab import EOS

PROBS = np.array([0.5, 0.3, 0.15, 0.05])
LOGITS = np.log(PROBS)


def sample(cfg, n=10_000, logits=LOGITS):
    rng = np.random.default_rng(cfg.seed)
    return np.array([select_token(logits, cfg, rng) for _ in range(n)])


def test_greedy_ignores_temperature(rng):
    for _ in range(50):
        logits = rng.normal(size=37)
        picks = {select_token(logits, DecodeConfig(temperature=t)) for t in (0.1, 1.0, 5.0)}
        assert picks == {int(np.argmax(logits))}


def test_top_1_is_greedy(rng):
    cfg = DecodeConfig(strategy=DecodeStrategy.TOP_K, k=1, temperature=3.0)
    for _ in range(50):
        logits = rng.normal(size=37)
        assert select_token(logits, cfg, rng) == int(np.argmax(logits))


def test_default_temperature_depends_on_strategy():
    assert DecodeConfig().tau == 1.0
    assert DecodeConfig(strategy=DecodeStrategy.TOP_P).tau == 2.0
    assert DecodeConfig(strategy=DecodeStrategy.TOP_K, temperature=0.5).tau == 0.5


def test_tempered_probs():
    np.testing.assert_allclose(tempered_probs(LOGITS, 1.0), PROBS)
    flat = tempered_probs(LOGITS, 100.0)
    assert flat.max() - flat.min() < 0.02
    np.testing.assert_allclose(tempered_probs(np.array([[1e4, 0.0]]), 1.0), [[1.0, 0.0]])


@pytest.mark.parametrize("p, expected", [(0.5, [0]), (0.8, [0, 1]), (0.81, [0, 1, 2]), (1.0, [0, 1, 2, 3])])
def test_nucleus_is_the_smallest_prefix(p, expected):
    assert nucleus(PROBS, p).tolist() == expected


def test_top_k_only_draws_the_k_best():
    draws = sample(DecodeConfig(strategy=DecodeStrategy.TOP_K, k=2, temperature=1.0, seed=1))
    assert set(draws.tolist()) == {0, 1}
    assert np.mean(draws == 0) == pytest.approx(0.5 / 0.8, abs=0.02)


def test_nucleus_sampling_frequencies():
    draws = sample(DecodeConfig(strategy=DecodeStrategy.TOP_P, p=0.8, temperature=1.0, seed=2))
    assert set(draws.tolist()) == {0, 1}
    assert np.mean(draws == 0) == pytest.approx(0.625, abs=0.02)


def test_full_nucleus_matches_the_distribution():
    n = 10_000
    draws = sample(DecodeConfig(strategy=DecodeStrategy.TOP_P, p=1.0, temperature=1.0, seed=3), n)
    observed = np.bincount(draws, minlength=4)
    expected = PROBS * n
    chi2 = float(((observed - expected) ** 2 / expected).sum())
    # 3 degrees of freedom; 16.27 is the 0.999 quantile.
    assert chi2 < 16.27


def test_sampling_is_seeded():
    cfg = DecodeConfig(strategy=DecodeStrategy.TOP_K, k=3, seed=11)
    assert sample(cfg, 200).tolist() == sample(cfg, 200).tolist()


@pytest.mark.parametrize("cfg", [
    DecodeConfig(strategy=DecodeStrategy.TOP_K, k=0),
    DecodeConfig(strategy=DecodeStrategy.TOP_P, p=0.0),
    DecodeConfig(strategy=DecodeStrategy.TOP_P, p=1.5),
    DecodeConfig(temperature=0.0),
])
def test_invalid_configs_rejected(cfg):
    with pytest.raises(ValidationError):
        select_token(LOGITS, cfg)


def test_autoregress_stops_each_row_at_eos():
    def step_logits(tokens):
        logits = np.zeros((2, 8))
        t = tokens.shape[1]
        logits[0, EOS if t == 1 else 5] = 1.0
        logits[1, EOS if t == 3 else 6] = 1.0
        return logits

    assert autoregress(step_logits, 2, 10, DecodeConfig()) == [[5, EOS], [6, 6, 6, EOS]]


def test_autoregress_without_eos_runs_to_max_len():
    out = autoregress(lambda tokens: np.eye(8)[[4]], 1, 6, DecodeConfig())
    assert out == [[4] * 6]
