import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qsc.policy import (
    PARAM_NAMES,
    PolicyError,
    PolicyNetwork,
    Transition,
    as_mask,
    encode_automaton_obs,
    select_action,
    target_distribution,
)

WIDTH, N_ACT = 9, 3


def onehot(i, n=WIDTH):
    x = np.zeros(n)
    x[i] = 1.0
    return x


def trained_net(seed=0):
    """A net with non-zero output weights so gradients reach every layer."""
    net = PolicyNetwork(WIDTH, N_ACT, seed=seed)
    rng = np.random.default_rng(seed + 100)
    net.params["W_hy"] = rng.normal(0, 0.5, net.params["W_hy"].shape)
    net.params["b_y"] = rng.normal(0, 0.5, N_ACT)
    net.params["b_h"] = rng.normal(0, 0.1, net.params["b_h"].shape)
    return net


# --- forward ---------------------------------------------------------------------

def test_fresh_net_is_uniform():
    net = PolicyNetwork(WIDTH, N_ACT)
    assert np.allclose(net.forward(onehot(0), [0, 1, 2]), 1 / 3, atol=0, rtol=1e-15)


def test_single_action_mask():
    net = trained_net()
    assert net.forward(onehot(4), [1]).tolist() == [0.0, 1.0, 0.0]


def test_empty_mask_rejected():
    with pytest.raises(PolicyError):
        PolicyNetwork(WIDTH, N_ACT).forward(onehot(0), [])


def test_bad_obs_width_rejected():
    with pytest.raises(PolicyError):
        PolicyNetwork(WIDTH, N_ACT).forward(np.zeros(WIDTH + 1), [0])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, WIDTH - 1), min_size=1, max_size=12),
       st.sets(st.integers(0, N_ACT - 1), min_size=1), st.integers(0, 50))
def test_forward_is_masked_distribution(obs_seq, mask, seed):
    net = trained_net(seed)
    for i in obs_seq:
        p = net.forward(onehot(i), sorted(mask))
        assert abs(p.sum() - 1.0) <= 1e-9
        assert np.all(p >= 0)
        assert all(p[j] == 0.0 for j in range(N_ACT) if j not in mask)


def test_probs_does_not_move_hidden_state():
    net = trained_net()
    net.forward(onehot(1), [0, 1, 2])
    h = net.h.copy()
    net.probs(onehot(2), [0, 1, 2])
    assert np.array_equal(net.h, h)


# --- select_action ---------------------------------------------------------------

def test_select_one_hot_both_modes():
    rng = np.random.default_rng(0)
    d = np.array([1.0, 0.0, 0.0])
    assert select_action(d, "greedy") == 0
    assert all(select_action(d, "sample", rng) == 0 for _ in range(1000))


def test_greedy_tie_breaks_low():
    assert select_action(np.array([0.4, 0.4, 0.2]), "greedy") == 0


def test_sampling_statistics():
    rng = np.random.default_rng(12345)
    d = np.array([0.5, 0.5, 0.0])
    n = 100_000
    draws = np.array([select_action(d, "sample", rng) for _ in range(n)])
    assert not np.any(draws == 2)
    zeros = int(np.sum(draws == 0))
    assert abs(zeros - n / 2) <= 3 * math.sqrt(n * 0.25)


def test_select_action_errors():
    with pytest.raises(PolicyError):
        select_action(np.array([1.0]), "sample")
    with pytest.raises(PolicyError):
        select_action(np.array([1.0]), "boltzmann")


# --- targets and updates ---------------------------------------------------------

def test_target_distribution_rules():
    m = as_mask([0, 1, 2], 3)
    assert target_distribution(m, 1, True).tolist() == [0, 1, 0]
    assert target_distribution(m, 1, False).tolist() == [0.5, 0, 0.5]
    assert target_distribution(m, 1, False, oracle_action=2).tolist() == [0, 0, 1]
    assert target_distribution(m, 1, True, oracle_action=0).tolist() == [1, 0, 0]
    assert target_distribution(as_mask([1], 3), 1, False) is None
    # masked actions never become targets
    t = target_distribution(as_mask([0, 2], 3), 0, False)
    assert t.tolist() == [0, 0, 1]


def _p_after(tr_kwargs, seed=4):
    net = trained_net(seed)
    obs = onehot(3)
    before = net.forward(obs, [0, 1, 2])
    net.update(Transition(obs, [0, 1, 2], **tr_kwargs))
    net.reset_hidden()
    after = net.forward(obs, [0, 1, 2])
    return before, after


def test_success_raises_executed_probability():
    before, after = _p_after(dict(action=0, success=True))
    assert after[0] > before[0]


def test_failure_lowers_executed_probability():
    before, after = _p_after(dict(action=0, success=False))
    assert after[0] < before[0]


def test_oracle_answer_raises_its_probability():
    before, after = _p_after(dict(action=0, success=False, oracle_action=1))
    assert after[1] > before[1]


def test_fresh_net_learns_on_first_update():
    net = PolicyNetwork(WIDTH, N_ACT, seed=2)
    obs = onehot(0)
    net.forward(obs, [0, 1, 2])
    net.update(Transition(obs, [0, 1, 2], 2, True))
    assert net.probs(obs, [0, 1, 2], h_prev=np.zeros(32))[2] > 1 / 3


def test_update_requires_matching_forward():
    net = PolicyNetwork(WIDTH, N_ACT)
    with pytest.raises(PolicyError):
        net.update(Transition(onehot(0), [0], 0, True))
    net.forward(onehot(0), [0, 1])
    with pytest.raises(PolicyError):
        net.update(Transition(onehot(1), [0, 1], 0, True))


def test_single_option_failure_changes_nothing():
    net = trained_net()
    net.forward(onehot(0), [1])
    before = {k: v.copy() for k, v in net.params.items()}
    net.update(Transition(onehot(0), [1], 1, False))
    assert all(np.array_equal(before[k], net.params[k]) for k in PARAM_NAMES)


def test_masked_logits_get_no_gradient():
    net = trained_net()
    xs = [onehot(i) for i in (0, 4, 7)]
    mask = as_mask([0, 2], 3)
    _, g = net.loss_and_grads(xs, np.zeros(32), mask, target_distribution(mask, 0, False))
    assert np.all(g["W_hy"][1] == 0) and g["b_y"][1] == 0


# --- gradient check --------------------------------------------------------------

def test_gradients_match_finite_differences():
    net = trained_net(7)
    rng = np.random.default_rng(7)
    xs = [rng.normal(size=WIDTH) for _ in range(8)]
    h0 = np.tanh(rng.normal(size=32))
    mask = as_mask([0, 1, 2], 3)
    target = np.array([0.2, 0.5, 0.3])
    _, grads = net.loss_and_grads(xs, h0, mask, target)

    coords = []
    for name in PARAM_NAMES:
        for idx in np.ndindex(*net.params[name].shape):
            coords.append((name, idx))
    picks = rng.choice(len(coords), size=100, replace=False)
    eps = 1e-6
    worst = 0.0
    for k in picks:
        name, idx = coords[k]
        p = net.params[name]
        old = p[idx]
        p[idx] = old + eps
        lp, _ = net.loss_and_grads(xs, h0, mask, target)
        p[idx] = old - eps
        lm, _ = net.loss_and_grads(xs, h0, mask, target)
        p[idx] = old
        numeric = (lp - lm) / (2 * eps)
        analytic = grads[name][idx]
        scale = max(abs(numeric), abs(analytic), 1e-6)
        worst = max(worst, abs(numeric - analytic) / scale)
    assert worst < 1e-4


def test_truncation_window_bounded():
    net = PolicyNetwork(WIDTH, N_ACT, truncation=8)
    for i in range(20):
        net.forward(onehot(i % WIDTH), [0, 1, 2])
    assert len(net._window) == 8


# --- determinism, reset, checkpoint ----------------------------------------------

def _trajectory(seed):
    net = PolicyNetwork(WIDTH, N_ACT, seed=seed)
    rng = np.random.default_rng(seed)
    snaps = []
    for t in range(60):
        if t % 10 == 0:
            net.reset_hidden()
        obs = onehot(int(rng.integers(WIDTH)))
        p = net.forward(obs, [0, 1, 2])
        a = select_action(p, "sample", rng)
        net.update(Transition(obs, [0, 1, 2], a, bool(rng.random() < 0.5)))
        snaps.append(np.concatenate([net.params[k].ravel() for k in PARAM_NAMES]))
    return snaps


def test_identical_seeds_bit_identical_parameters():
    a, b = _trajectory(5), _trajectory(5)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert not np.array_equal(a[-1], _trajectory(6)[-1])


def test_reset_hidden():
    net = trained_net()
    seq = [onehot(i) for i in (1, 5, 2)]
    first = [net.forward(x, [0, 1, 2]) for x in seq]
    net.reset_hidden()
    assert np.all(net.h == 0)
    net.reset_hidden()
    assert np.all(net.h == 0) and len(net._window) == 0
    replay = [net.forward(x, [0, 1, 2]) for x in seq]
    assert all(np.array_equal(a, b) for a, b in zip(first, replay))


def test_checkpoint_round_trip(tmp_path):
    net = trained_net(3)
    net.forward(onehot(0), [0, 1, 2])
    net.update(Transition(onehot(0), [0, 1, 2], 1, True))
    path = tmp_path / "net.json"
    net.save(path)
    back = PolicyNetwork.load(path)
    assert back.steps == 1 and back.seed == 3
    for k in PARAM_NAMES:
        assert np.array_equal(back.params[k], net.params[k])


def test_automaton_obs_encoding():
    x = encode_automaton_obs(3, 3, 2, 1)
    assert x.shape == (9,) and x.sum() == 1 and x[7] == 1
    assert encode_automaton_obs(3, 3, 0, 0)[0] == 1
