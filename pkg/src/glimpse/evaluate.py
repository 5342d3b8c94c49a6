"""Stochastic evaluation: top-k accuracy, t-intervals and confusion matrices."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import autograd as ag
from .data import Dataset
from .env import EnvConfig
from .policies import PolicyParams, classify
from .trainer.rollout import collect, parse_mode


def predict(params: PolicyParams, ds: Dataset, env_cfg: EnvConfig, mode, rng: np.random.Generator,
            chunk: int = 100) -> np.ndarray:
    """Class probabilities from one stochastic rollout per image, (count, D)."""
    mode = parse_mode(mode)
    out = []
    with ag.no_grad():
        for start in range(0, len(ds), chunk):
            sl = slice(start, start + chunk)
            batch = collect(ds.images[sl], ds.labels[sl], params, env_cfg, mode, rng)
            out.append(classify(batch.final_image, params).data)
    return np.concatenate(out) if out else np.zeros((0, params.cfg.classes))


def topk_correct(probs: np.ndarray, labels: np.ndarray, k: int) -> np.ndarray:
    """Boolean per row: label among the k most probable classes (ties broken by index)."""
    top = np.argsort(-probs, axis=1, kind="stable")[:, :k]
    return (top == np.asarray(labels)[:, None]).any(axis=1)


def confusion_matrix(pred: np.ndarray, labels: np.ndarray, classes: int) -> np.ndarray:
    """Counts with rows = true label, columns = predicted label."""
    cm = np.zeros((classes, classes))
    np.add.at(cm, (np.asarray(labels), np.asarray(pred)), 1)
    return cm


def t_quantile(runs: int, alpha: float = 0.05) -> float:
    """Two-sided Student-t critical value with runs - 1 degrees of freedom."""
    return float(stats.t.ppf(1 - alpha / 2, runs - 1))


def t_interval(values, alpha: float = 0.05) -> tuple[float, float]:
    """(mean, half-width) of a two-sided 1 - alpha confidence interval."""
    values = np.asarray(values, dtype=np.float64)
    if len(values) < 2:
        return float(values.mean()), float("nan")
    half = t_quantile(len(values), alpha) * values.std(ddof=1) / np.sqrt(len(values))
    return float(values.mean()), float(half)


@dataclass
class EvalReport:
    top1: np.ndarray          # per-run accuracy
    top2: np.ndarray
    confusion: np.ndarray     # averaged over runs
    alpha: float
    t_value: float

    @property
    def runs(self) -> int:
        return len(self.top1)

    def summary(self) -> dict:
        m1, h1 = t_interval(self.top1, self.alpha)
        m2, h2 = t_interval(self.top2, self.alpha)
        return {"runs": self.runs, "top1_mean": m1, "top1_halfwidth": h1, "top2_mean": m2,
                "top2_halfwidth": h2, "t_value": self.t_value, "alpha": self.alpha}


def _one_run(args):
    params, ds, env_cfg, mode, seed, run = args
    rng = np.random.default_rng([seed, run])
    probs = predict(params, ds, env_cfg, mode, rng)
    pred = probs.argmax(axis=1)
    return (topk_correct(probs, ds.labels, 1).mean(), topk_correct(probs, ds.labels, 2).mean(),
            confusion_matrix(pred, ds.labels, params.cfg.classes))


def evaluate_runs(params: PolicyParams, ds: Dataset, env_cfg: EnvConfig, mode, runs: int = 20, seed: int = 0,
                  alpha: float = 0.05, workers: int = 1) -> EvalReport:
    """Repeat the stochastic evaluation ``runs`` times; run r uses seed (seed, r) so results
    do not depend on ``workers``."""
    jobs = [(params, ds, env_cfg, parse_mode(mode), seed, r) for r in range(runs)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_one_run, jobs))
    else:
        results = [_one_run(j) for j in jobs]
    top1 = np.array([r[0] for r in results])
    top2 = np.array([r[1] for r in results])
    conf = np.mean([r[2] for r in results], axis=0)
    return EvalReport(top1, top2, conf, alpha, t_quantile(runs, alpha) if runs > 1 else float("nan"))


def classifier_full_accuracy(params: PolicyParams, ds: Dataset, chunk: int = 200) -> tuple[float, float]:
    """(top-1, top-2) of the classifier on complete, unmasked images."""
    probs = []
    with ag.no_grad():
        for start in range(0, len(ds), chunk):
            probs.append(classify(ds.images[start:start + chunk], params).data)
    probs = np.concatenate(probs)
    return float(topk_correct(probs, ds.labels, 1).mean()), float(topk_correct(probs, ds.labels, 2).mean())
