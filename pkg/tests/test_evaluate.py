import mpmath
import numpy as np
import pytest

from glimpse.data import Dataset
from glimpse.env import EnvConfig
from glimpse.evaluate import (
    classifier_full_accuracy,
    confusion_matrix,
    evaluate_runs,
    t_interval,
    t_quantile,
    topk_correct,
)
from glimpse.policies import NetworkConfig, PolicyParams

ENV = EnvConfig(n=8, m=3, episodes=2, horizon=2)
NET = NetworkConfig(planner_width=2, planner_blocks=1, classifier_width=2, classifier_blocks=1)


def _mp_t_quantile(p, dof):
    # invert the regularised incomplete beta form of the Student-t CDF at 40 digits
    mpmath.mp.dps = 40
    nu = mpmath.mpf(dof)

    def cdf(t):
        x = nu / (nu + t * t)
        return 1 - mpmath.betainc(nu / 2, mpmath.mpf(1) / 2, 0, x, regularized=True) / 2

    return float(mpmath.findroot(lambda t: cdf(t) - p, 2))


@pytest.mark.parametrize("runs", [2, 5, 20, 100])
def test_t_quantile_against_mpmath(runs):
    assert t_quantile(runs) == pytest.approx(_mp_t_quantile(mpmath.mpf("0.975"), runs - 1), abs=1e-9)


def test_t_quantile_twenty_runs():
    assert abs(t_quantile(20, 0.05) - 2.093) < 1e-3


def test_t_interval_matches_formula():
    v = np.array([0.9, 0.92, 0.88, 0.91])
    mean, half = t_interval(v)
    assert mean == pytest.approx(0.9025)
    assert half == pytest.approx(t_quantile(4) * np.std(v, ddof=1) / 2)


def test_topk_examples():
    probs = np.array([[0.1, 0.6, 0.3], [0.5, 0.2, 0.3], [0.2, 0.2, 0.6]])
    labels = np.array([2, 2, 0])
    np.testing.assert_array_equal(topk_correct(probs, labels, 1), [False, False, False])
    np.testing.assert_array_equal(topk_correct(probs, labels, 2), [True, True, True])  # tie at 0.2 -> lower index


def test_confusion_rows_are_true_labels():
    cm = confusion_matrix(np.array([0, 1, 1, 2]), np.array([0, 0, 1, 2]), 3)
    np.testing.assert_array_equal(cm, [[1, 1, 0], [0, 1, 0], [0, 0, 1]])


def _dataset(count=30, seed=0):
    rng = np.random.default_rng(seed)
    return Dataset(rng.uniform(-0.5, 0.5, size=(count, 1, 8, 8)), np.arange(count) % 10, "test")


def test_evaluate_runs_invariants():
    ds = _dataset()
    p = PolicyParams.init(NET, np.random.default_rng(0))
    rep = evaluate_runs(p, ds, ENV, "iii", runs=4, seed=1)
    assert rep.runs == 4
    assert np.all(rep.top2 >= rep.top1)
    np.testing.assert_allclose(rep.confusion.sum(axis=1), np.bincount(ds.labels, minlength=10))
    s = rep.summary()
    assert s["t_value"] == pytest.approx(t_quantile(4))


def test_evaluate_runs_independent_of_workers():
    ds = _dataset(12)
    p = PolicyParams.init(NET, np.random.default_rng(0))
    a = evaluate_runs(p, ds, ENV, "ii", runs=3, seed=2, workers=1)
    b = evaluate_runs(p, ds, ENV, "ii", runs=3, seed=2, workers=2)
    np.testing.assert_array_equal(a.top1, b.top1)
    np.testing.assert_array_equal(a.confusion, b.confusion)


def test_full_image_classifier_deterministic_and_near_chance():
    rng = np.random.default_rng(3)
    ds = Dataset(rng.uniform(-0.5, 0.5, size=(500, 1, 8, 8)), rng.integers(0, 10, 500), "test")
    p = PolicyParams.init(NET, np.random.default_rng(1))
    a = classifier_full_accuracy(p, ds)
    assert a == classifier_full_accuracy(p, ds)
    assert abs(a[0] - 0.1) <= 0.05 and a[1] >= a[0]
