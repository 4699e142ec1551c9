import numpy as np
import pytest

from descrl.core.base import Action, AdgenConfig, DecodeConfig, DecodeStrategy, Heading
from descrl.core.functional import cross_entropy, mse
from descrl.core.gradcheck import relative_errors
from descrl.core.optim import Adam
from descrl.core.seeding import make_rng
from descrl.core.tensor import backward, precision
from descrl.env.sim import NUM_CHANNELS, NavEnv
from descrl.env.world import N_SEM
from descrl.exceptions import ValidationError
from descrl.language.vocab import BOS, EOS, PAD, VOCAB
from descrl.models.adgen import ADGenerator, pad_tokens, pad_windows, shift_right
from descrl.models.agent import ADPREDICTOR_PREFIXES, POLICY_PREFIXES
from descrl.models.encoders import LOCATION_SCALE
from descrl.models.memory import MemoryBatch, ObservationWindow, history_batch, window_batch

from conftest import make_agent, tiny_agent

PATCH, AUDIO = 3, 7
TARGETS = np.array([[5, 9, 30, EOS], [7, EOS, PAD, PAD], [12, 4, EOS, PAD]])


def random_batch(rng, b=3, m=4, padded=1):
    visual = rng.integers(0, NUM_CHANNELS, size=(b, m, PATCH, PATCH)).astype(np.int8)
    audio = rng.normal(size=(b, m, AUDIO)).astype(np.float32)
    pose = rng.normal(size=(b, m, 4)).astype(np.float32)
    prev = np.eye(4, dtype=np.float32)[rng.integers(0, 4, size=(b, m))]
    pad = np.zeros((b, m), dtype=bool)
    if padded:
        pad[:, m - padded:] = True
    return MemoryBatch(visual, audio, pose, prev, pad)


def grad_norms(agent, loss):
    grads = backward(loss, agent.parameters())
    return {name: float(np.abs(g).sum()) for name, g in grads.items()}


def test_forward_shapes(rng):
    agent = make_agent()
    out = agent(random_batch(rng))
    assert out.logits.shape == (3, 4)
    assert out.value.shape == (3,)
    assert out.memory.shape == (3, 5, 16)
    assert out.memory_mask.shape == (3, 1, 1, 5)
    assert out.goal.location.shape == (3, 2)
    assert out.goal.category.shape == (3, N_SEM)
    np.testing.assert_allclose(out.goal.category.data.sum(axis=-1), 1.0, rtol=1e-5)
    assert agent.teacher_forced_logits(out, TARGETS).shape == (3, 4, len(VOCAB))


def test_zero_initialized_heads_start_uniform(rng):
    agent = make_agent()
    batch = random_batch(rng)
    out = agent(batch)
    assert np.all(out.logits.data == 0.0) and np.all(out.value.data == 0.0)
    ce = cross_entropy(agent.teacher_forced_logits(out, TARGETS), TARGETS, ignore_index=PAD)
    assert ce.item() == pytest.approx(np.log(len(VOCAB)), rel=1e-5)
    actions, logp, values = agent.act(batch, greedy=True)
    np.testing.assert_array_equal(actions, 0)
    np.testing.assert_allclose(logp, np.log(0.25), rtol=1e-6)
    np.testing.assert_array_equal(values, 0.0)


def test_padded_slots_do_not_leak(rng):
    agent = make_agent(tiny_agent(zero_init_heads=False))
    batch = random_batch(rng, padded=2)
    noisy = random_batch(np.random.default_rng(5), padded=2)
    keep = ~batch.pad[..., None]
    altered = MemoryBatch(
        np.where(~batch.pad[..., None, None], batch.visual, noisy.visual),
        np.where(keep, batch.audio, noisy.audio),
        np.where(keep, batch.pose, noisy.pose),
        np.where(keep, batch.prev_action, noisy.prev_action),
        batch.pad,
    )
    a, b = agent(batch), agent(altered)
    np.testing.assert_allclose(a.logits.data, b.logits.data, atol=1e-5)
    np.testing.assert_allclose(a.value.data, b.value.data, atol=1e-5)
    np.testing.assert_allclose(
        agent.teacher_forced_logits(a, TARGETS).data, agent.teacher_forced_logits(b, TARGETS).data, atol=1e-5
    )


def test_adpredictor_is_causal(rng):
    agent = make_agent(tiny_agent(zero_init_heads=False))
    out = agent(random_batch(rng))
    inputs = TARGETS[:, :-1].copy()
    changed = inputs.copy()
    changed[:, 2:] = np.random.default_rng(4).integers(4, len(VOCAB), size=changed[:, 2:].shape)
    # Position 0 is the goal projection, so input j feeds logits j + 1.
    a = agent.adpredictor_logits(out, inputs).data
    b = agent.adpredictor_logits(out, changed).data
    np.testing.assert_allclose(a[:, :3], b[:, :3], atol=1e-6)
    assert not np.allclose(a[:, 3:], b[:, 3:])

def test_silent_history_falls_back_to_the_prior(rng):
    agent = make_agent()
    batch = random_batch(rng)
    batch.audio[:] = 0.0
    goal = agent(batch).goal
    np.testing.assert_allclose(goal.location.data, np.tile(agent.goal_net.location_head.bias.data * LOCATION_SCALE, (3, 1)))
    np.testing.assert_allclose(goal.category_logits.data, np.tile(agent.goal_net.category_head.bias.data, (3, 1)))


def test_losses_route_to_their_own_heads(rng):
    agent = make_agent(tiny_agent(zero_init_heads=False))
    batch = random_batch(rng)
    policy = grad_norms(agent, cross_entropy(agent(batch).logits, np.array([0, 1, 3])))
    out = agent(batch)
    aux = grad_norms(agent, cross_entropy(agent.teacher_forced_logits(out, TARGETS), TARGETS, ignore_index=PAD))

    for name in agent.parameters():
        if name.startswith(ADPREDICTOR_PREFIXES) or name.startswith("tokens.") or name == "task_ad":
            assert policy[name] == 0.0, name
        if name.startswith(POLICY_PREFIXES):
            assert aux[name] == 0.0, name
    shared = [n for n in agent.parameters() if n.startswith("shared.")]
    assert shared
    assert sum(policy[n] for n in shared) > 0 and sum(aux[n] for n in shared) > 0
    assert sum(aux[n] for n in agent.parameters() if n.startswith("encoder.")) > 0


def test_shared_depth_and_task_embedding_toggles(rng):
    plain = make_agent(tiny_agent(n_shared_dec=0, n_unshared_dec=2, use_task_embedding=False))
    names = set(plain.parameters())
    assert not any(n.startswith("shared.") for n in names)
    assert "task_rl" not in names and "task_ad" not in names
    out = plain(random_batch(rng))
    assert plain.teacher_forced_logits(out, TARGETS).shape == (3, 4, len(VOCAB))

    deep = make_agent(tiny_agent(n_shared_dec=3))
    assert len(deep.shared) == 3 and "task_rl" in deep.parameters()


def test_parameter_groups():
    agent = make_agent()
    policy, adp, pretrain = agent.policy_parameters(), agent.adpredictor_parameters(), agent.pretrain_parameters()
    assert "action_head.weight" in policy and "value_head.bias" in policy
    assert "token_head.weight" in adp
    assert not set(policy) & set(adp)
    assert not set(policy) & set(pretrain)
    assert set(adp) <= set(pretrain)
    assert not any(n.startswith("aux_") for n in pretrain)
    assert any(n.startswith("encoder.") for n in pretrain)


def test_sampled_actions_follow_the_rng(rng):
    agent = make_agent(tiny_agent(zero_init_heads=False))
    batch = random_batch(rng, b=6)
    a, _, _ = agent.act(batch, make_rng(3, "rollout"))
    b, _, _ = agent.act(batch, make_rng(3, "rollout"))
    np.testing.assert_array_equal(a, b)


def test_decoding_respects_max_length(rng):
    agent = make_agent()
    descriptions = agent.decode(random_batch(rng))
    # Zero logits pick token 0 forever, so decoding runs to the limit.
    assert all(len(d.tokens) == agent.cfg.max_desc_len for d in descriptions)
    assert all(t == BOS for d in descriptions for t in d.tokens)

    trained = make_agent(tiny_agent(zero_init_heads=False))
    cfg = DecodeConfig(strategy=DecodeStrategy.TOP_P, p=0.9, seed=4)
    first = [d.tokens for d in trained.decode(random_batch(np.random.default_rng(2)), cfg)]
    second = [d.tokens for d in trained.decode(random_batch(np.random.default_rng(2)), cfg)]
    assert first == second
    assert all(1 <= len(t) <= trained.cfg.max_desc_len for t in first)


def test_agent_gradients_match_finite_differences(rng):
    agent = make_agent(tiny_agent(zero_init_heads=False, d_model=8, d_ff=16, d_hidden=8, memory=3))
    batch = random_batch(rng, b=2, m=3)
    targets = TARGETS[:2]
    returns = np.array([0.5, -1.0])
    names = (
        "action_head.bias", "value_head.bias", "token_head.bias", "lc_proj.bias",
        "bos_proj.bias", "memory_norm.gamma", "task_rl", "goal_net.location_head.bias",
    )
    with precision("float64"):
        agent.to("float64")
        params = {n: p for n, p in agent.parameters().items() if n in names}
        assert len(params) == len(names)

        def loss():
            out = agent(batch)
            logits = agent.teacher_forced_logits(out, targets)
            return (
                cross_entropy(out.logits, np.array([1, 2]))
                + mse(out.value, returns)
                + cross_entropy(logits, targets, ignore_index=PAD)
            )

        errors = relative_errors(loss, params)
    assert max(errors.values()) < 1e-4, errors


def test_memory_window_is_newest_first(corridor, corridor_spec, env_cfg):
    env = NavEnv(corridor, env_cfg)
    observations = [env.reset(corridor_spec)]
    window = ObservationWindow(memory=3)
    window.push(observations[0])
    for action in (Action.MOVE_FORWARD, Action.TURN_RIGHT):
        obs, _ = env.step(action)
        observations.append(obs)
        window.push(obs)
    batch = window.batch()
    assert batch.pad.tolist() == [[False, False, False]]
    assert batch.prev_action[0, 0].argmax() == 2  # turn_right, newest first
    assert not batch.prev_action[0, 2].any()  # the reset observation has no previous action
    np.testing.assert_array_equal(history_batch(observations, 3).visual, batch.visual)

    short = history_batch(observations[:1], 3)
    assert short.pad.tolist() == [[False, True, True]]
    assert short.extend(2).pad.shape == (1, 5)
    assert observations[-1].pose.heading is Heading.S


def test_empty_memory_window_is_rejected():
    with pytest.raises(ValidationError):
        window_batch([], 3)


# ==================== ADGenerator ====================

def tiny_adgen(seed=0):
    cfg = AdgenConfig(d_model=16, n_heads=2, d_ff=32, d_hidden=16, n_enc_layers=1, n_dec_layers=1, max_desc_len=12)
    return ADGenerator(cfg, PATCH, make_rng(seed, "adgen", "init"))


def windows(rng, lengths=(3, 5, 1)):
    return [
        (rng.integers(0, NUM_CHANNELS, size=(n, PATCH, PATCH)).astype(np.int8),
         np.eye(4, dtype=np.float32)[rng.integers(0, 4, size=n)])
        for n in lengths
    ]


def test_token_helpers():
    padded = pad_tokens([[5, EOS], [7, 8, 9, EOS]])
    np.testing.assert_array_equal(padded, [[5, EOS, PAD, PAD], [7, 8, 9, EOS]])
    np.testing.assert_array_equal(shift_right(padded), [[BOS, 5, EOS, PAD], [BOS, 7, 8, 9]])
    assert pad_tokens([[1, 2, 3]], length=2).tolist() == [[1, 2]]


def test_adgen_starts_at_log_vocab(rng):
    gen = tiny_adgen()
    visual, actions, pad = pad_windows(windows(rng))
    assert visual.shape == (3, 5, PATCH, PATCH) and pad.sum() == 6
    features, pad = gen.encode_trajectory(visual, actions, pad)
    assert features.shape == (3, 5, 16)
    loss = gen.teacher_forced_loss(features, pad, TARGETS)
    assert loss.item() == pytest.approx(np.log(len(VOCAB)), rel=1e-5)
    probs = gen.token_distribution(features, pad, TARGETS, temperature=2.0)
    assert probs.shape == (3, 4, len(VOCAB))
    np.testing.assert_allclose(probs.sum(axis=-1), 1.0, rtol=1e-5)


def test_adgen_input_errors(rng):
    gen = tiny_adgen()
    visual, actions = windows(rng, (3,))[0]
    with pytest.raises(ValidationError):
        gen.encode_trajectory(visual, actions[:2])
    features, pad = gen.encode_trajectory(visual, actions)
    with pytest.raises(ValidationError):
        gen.teacher_forced_loss(features, pad, np.array([[PAD, PAD]]))
    with pytest.raises(ValidationError):
        gen.teacher_forced_loss(features, pad, np.array([[len(VOCAB), EOS]]))


def test_adgen_generation(rng):
    gen = tiny_adgen()
    for name, param in gen.parameters().items():
        if name.startswith("token_head"):
            param.data = np.random.default_rng(1).normal(size=param.shape).astype(np.float32)
    features, pad = gen.encode_trajectory(*pad_windows(windows(rng)))
    greedy = gen.generate(features, pad)
    again = gen.generate(features, pad)
    assert [d.tokens for d in greedy] == [d.tokens for d in again]
    for desc in greedy:
        assert 1 <= len(desc.tokens) <= 12
        assert EOS not in desc.tokens[:-1]


def test_adgen_decoder_is_causal(rng):
    gen = tiny_adgen()
    for name, param in gen.parameters().items():
        if name.startswith("token_head"):
            param.data = np.random.default_rng(2).normal(size=param.shape).astype(np.float32)
    features, pad = gen.encode_trajectory(*pad_windows(windows(rng)))
    inputs = shift_right(TARGETS)
    changed = inputs.copy()
    changed[:, 2:] = np.random.default_rng(3).integers(4, len(VOCAB), size=changed[:, 2:].shape)
    a = gen.decode_logits(features, pad, inputs).data
    b = gen.decode_logits(features, pad, changed).data
    np.testing.assert_allclose(a[:, :2], b[:, :2], atol=1e-6)
    assert not np.allclose(a[:, 2:], b[:, 2:])


def test_adgen_reproduces_an_overfit_sample(rng):
    gen = tiny_adgen()
    target = np.array([[5, 9, 30, 12, EOS]])
    visual, actions = windows(rng, (4,))[0]
    optimizer = Adam(gen.parameters(), lr=1e-2)
    for _ in range(300):
        features, pad = gen.encode_trajectory(visual, actions)
        optimizer.step(backward(gen.teacher_forced_loss(features, pad, target), optimizer.params))
    features, pad = gen.encode_trajectory(visual, actions)
    [desc] = gen.generate(features, pad)
    assert desc.tokens == target[0].tolist()
