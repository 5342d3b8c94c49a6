import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from glimpse import autograd as ag
from glimpse.autograd import ConfigurationError, Tensor, check_gradients
from glimpse.env import Axis, Forced
from glimpse.policies import (
    ACTION,
    CLASSIFIER,
    GOAL,
    NetworkConfig,
    PolicyParams,
    action_forward,
    classify,
    goal_forward,
    iid_action,
    iid_goal,
    sample_action,
    sample_goal,
)
from glimpse.trainer.objective import one_hot, reward

SMALL = NetworkConfig(planner_width=3, planner_blocks=1, classifier_width=2, classifier_blocks=2)


def _params(cfg=SMALL, seed=0):
    return PolicyParams.init(cfg, np.random.default_rng(seed))


def _expected_count(cfg: NetworkConfig) -> int:
    # counted by hand from the block layout: conv weights k*k*in*out plus one bias per output
    k, c, d = cfg.kernel, cfg.in_channels, cfg.planner_width
    planner_trunk = (k * k * (c + 3) * d + d) + cfg.planner_blocks * ((k * k * d * d + d) + (2 * d * d + d))
    goal = planner_trunk + k * k * d * 1 + 1
    action = planner_trunk + k * k * d * 2 + 2
    w, clf = cfg.classifier_width, k * k * c * cfg.classifier_width + cfg.classifier_width
    for _ in range(cfg.classifier_blocks):
        clf += (k * k * w * w + w) + (k * k * 2 * w * 2 * w + 2 * w)
        w *= 2
    clf += w * cfg.classes + cfg.classes
    return goal + action + clf


@pytest.mark.parametrize("cfg", [NetworkConfig(), SMALL, NetworkConfig(planner_width=4, planner_blocks=1, kernel=5)])
def test_parameter_count_matches_layout(cfg):
    assert _params(cfg).count() == _expected_count(cfg)


def test_default_parameter_total():
    assert _params(NetworkConfig()).count() == 66509


def test_network_config_rejects_bad_values():
    with pytest.raises(ConfigurationError):
        NetworkConfig(kernel=4)
    with pytest.raises(ConfigurationError):
        NetworkConfig(planner_blocks=0)
    with pytest.raises(ConfigurationError):
        NetworkConfig(classes=1)


def test_fresh_goal_map_uniform_on_zero_input():
    pi = goal_forward(np.zeros((4, 28, 28)), _params(NetworkConfig())).data
    assert pi.shape == (28, 28)
    assert pi.max() / pi.min() < 1.01
    assert abs(pi.sum() - 1) < 1e-12


def test_fresh_action_close_to_fair():
    rng = np.random.default_rng(3)
    pi = action_forward(rng.uniform(-0.5, 1, size=(5, 4, 28, 28)), _params(NetworkConfig())).data
    assert pi.shape == (5, 2)
    assert np.abs(pi - 0.5).max() < 0.01


def test_classifier_output_shape_and_sum():
    pi = classify(np.random.default_rng(0).uniform(-0.5, 0.5, size=(3, 1, 28, 28)), _params(NetworkConfig())).data
    assert pi.shape == (3, 10)
    np.testing.assert_allclose(pi.sum(axis=1), 1, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.1, 50))
def test_heads_are_distributions(seed, scale):
    rng = np.random.default_rng(seed)
    p = _params(SMALL, seed % 7)
    u = rng.normal(size=(2, 4, 8, 8)) * scale
    for pi in (goal_forward(u, p).data.reshape(2, -1), action_forward(u, p).data,
               classify(u[:, :1], p).data):
        assert np.all(pi >= 0)
        np.testing.assert_allclose(pi.sum(axis=1), 1, atol=1e-12)


def test_goal_argmax_shift_invariant():
    p = _params(SMALL)
    u = np.random.default_rng(1).normal(size=(4, 8, 8))
    a = goal_forward(u, p).data
    p[GOAL]["head.b"].data += 7.5
    b = goal_forward(u, p).data
    np.testing.assert_allclose(a, b, atol=1e-14)
    assert a.argmax() == b.argmax()


def test_unbatched_matches_batched():
    p = _params(SMALL)
    u = np.random.default_rng(2).normal(size=(2, 4, 8, 8))
    np.testing.assert_allclose(goal_forward(u[1], p).data, goal_forward(u, p).data[1], atol=1e-15)
    np.testing.assert_allclose(action_forward(u[1], p).data, action_forward(u, p).data[1], atol=1e-15)
    np.testing.assert_allclose(classify(u[1, :1], p).data, classify(u[:, :1], p).data[1], atol=1e-15)


def _net_leaves(p, net):
    return [t for _, t in p.named((net,))]


def test_goal_log_prob_finite_differences():
    p = _params(SMALL)
    u = np.random.default_rng(4).normal(size=(4, 8, 8))
    fn = lambda: ag.log(ag.index(ag.reshape(goal_forward(u, p), (64,)), 17))
    res = check_gradients(fn, _net_leaves(p, GOAL), n_coords=100, rng=np.random.default_rng(0))
    assert res.passed, res


def test_action_log_prob_finite_differences():
    p = _params(SMALL)
    u = np.random.default_rng(5).normal(size=(4, 8, 8))
    fn = lambda: ag.log(ag.index(action_forward(u, p), 1))
    res = check_gradients(fn, _net_leaves(p, ACTION), n_coords=100, rng=np.random.default_rng(0))
    assert res.passed, res


def test_reward_finite_differences():
    p = _params(SMALL)
    u = np.random.default_rng(6).normal(size=(1, 8, 8))
    fn = lambda: ag.sum(reward(ag.reshape(classify(u, p), (1, 10)), np.array([3])))
    res = check_gradients(fn, _net_leaves(p, CLASSIFIER), n_coords=100, rng=np.random.default_rng(0))
    assert res.passed, res


def test_sample_goal_one_hot():
    pi = np.zeros((4, 4))
    pi[2, 1] = 1.0
    rng = np.random.default_rng(0)
    for _ in range(20):
        idx, logp = sample_goal(pi, rng)
        assert idx == 9 and logp == 0.0
    idx, logp = sample_goal(Tensor(pi, True), rng)
    assert idx == 9 and float(logp.data) == 0.0


def test_sample_goal_uniform_chi_square():
    rng = np.random.default_rng(11)
    pi = np.full((10**5, 16), 1 / 16)
    idx, _ = sample_goal(pi.reshape(-1, 4, 4), rng)
    counts = np.bincount(idx, minlength=16)
    assert np.all(np.abs(counts - 10**5 / 16) < 3 * np.sqrt(10**5 / 16 * 15 / 16))
    assert stats.chisquare(counts).pvalue > 1e-3


def test_sample_goal_reproducible():
    pi = np.random.default_rng(0).dirichlet(np.ones(16)).reshape(4, 4)
    assert sample_goal(pi, np.random.default_rng(7))[0] == sample_goal(pi, np.random.default_rng(7))[0]


def test_sample_goal_log_prob_node():
    pi = Tensor(np.random.default_rng(0).dirichlet(np.ones(16), size=3).reshape(3, 4, 4), True)
    idx, logp = sample_goal(pi, np.random.default_rng(1))
    np.testing.assert_allclose(logp.data, np.log(pi.data.reshape(3, 16)[np.arange(3), idx]))
    ag.backward(ag.sum(logp))
    assert pi.grad is not None


def test_sample_action_forced():
    rng = np.random.default_rng(0)
    assert sample_action(np.array([0.1, 0.9]), Forced.VERTICAL, rng) == (Axis.VERTICAL, None, 0)
    assert sample_action(np.array([0.9, 0.1]), Forced.HORIZONTAL, rng) == (Axis.HORIZONTAL, None, 0)


def test_sample_action_deterministic_policy():
    rng = np.random.default_rng(0)
    for _ in range(50):
        axis, logp, chi = sample_action(np.array([1.0, 0.0]), Forced.FREE, rng)
        assert (axis, logp, chi) == (Axis.VERTICAL, 0.0, 1)


def test_sample_action_fair_frequency():
    rng = np.random.default_rng(2)
    pi = np.full((10**4, 2), 0.5)
    axis, logp, chi = sample_action(pi, np.full(10**4, Forced.FREE), rng)
    assert abs(axis.mean() - 0.5) < 0.01
    assert chi.all()
    np.testing.assert_allclose(logp, np.log(0.5))


def test_iid_goal_uniform():
    idx = iid_goal(np.random.default_rng(4), 4, batch=10**5)
    assert stats.chisquare(np.bincount(idx, minlength=16)).pvalue > 1e-3
    assert isinstance(iid_goal(np.random.default_rng(4), 28), int)


def test_iid_action_honours_forced():
    rng = np.random.default_rng(0)
    forced = np.array([Forced.VERTICAL, Forced.HORIZONTAL, Forced.FREE] * 2000)
    axis = iid_action(forced, rng)
    assert np.all(axis[0::3] == Axis.VERTICAL) and np.all(axis[1::3] == Axis.HORIZONTAL)
    assert abs(axis[2::3].mean() - 0.5) < 0.05


def test_from_arrays_round_trip_and_shape_check():
    p = _params(SMALL)
    q = PolicyParams.from_arrays(SMALL, p.arrays())
    u = np.random.default_rng(0).normal(size=(4, 8, 8))
    np.testing.assert_array_equal(goal_forward(u, p).data, goal_forward(u, q).data)
    arrays = dict(p.arrays())
    arrays["goal.stem.w"] = np.zeros((1, 1, 3, 3))
    with pytest.raises(ConfigurationError):
        PolicyParams.from_arrays(SMALL, arrays)
    del arrays["goal.stem.w"]
    with pytest.raises(ConfigurationError):
        PolicyParams.from_arrays(SMALL, arrays)


def test_copy_is_independent():
    p = _params(SMALL)
    q = p.copy()
    q[GOAL]["stem.w"].data += 1
    assert not np.array_equal(p[GOAL]["stem.w"].data, q[GOAL]["stem.w"].data)


def test_one_hot_reward_zero_for_perfect_prediction():
    pi = Tensor(one_hot(np.array([2, 0]), 4))
    np.testing.assert_array_equal(reward(pi, np.array([2, 0])).data, [0.0, 0.0])
