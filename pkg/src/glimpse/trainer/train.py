"""Hierarchical training loop: modes i -> ii -> iii with Adam on -J_hat."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .. import autograd as ag
from ..autograd import ConfigurationError
from ..data import Dataset
from ..env import EnvConfig
from .. import evaluate as ev
from ..policies import ACTION, CLASSIFIER, GOAL, NetworkConfig, PolicyParams
from .adam import OptimizerState, adam_step
from .objective import j_hat_terms, trajectory_terms
from .rollout import Mode, collect, parse_mode

log = logging.getLogger(__name__)

METRIC_FIELDS = ("epoch", "mode", "train_loss", "train_acc", "test_acc", "wall_seconds")
TRAINED_NETS = {Mode.IID: (CLASSIFIER,), Mode.GOALS: (CLASSIFIER, GOAL), Mode.ALL: (CLASSIFIER, GOAL, ACTION)}


@dataclass
class TrainConfig:
    schedule: list = field(default_factory=lambda: [["i", 20]])  # [[mode, epochs], ...]
    rollouts: int = 4
    batch_size: int = 60
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    grad_clip: float | None = None
    chunk: int = 15            # images per micro-batch; bounds memory, does not change the gradient

    def __post_init__(self):
        if self.rollouts < 1 or self.batch_size < 1 or self.chunk < 1:
            raise ConfigurationError("rollouts, batch_size and chunk must be >= 1")
        ranks = [parse_mode(m).rank for m, _ in self.schedule]
        if any(b < a for a, b in zip(ranks, ranks[1:])):
            raise ConfigurationError("mode schedule must not move back toward i.i.d. planning")
        if any(int(k) < 0 for _, k in self.schedule):
            raise ConfigurationError("epoch counts must be non-negative")

    def epoch_modes(self) -> list[Mode]:
        return [parse_mode(m) for m, k in self.schedule for _ in range(int(k))]


@dataclass
class EpochMetrics:
    epoch: int
    mode: str
    train_loss: float
    train_acc: float
    test_acc: float
    wall_seconds: float

    def row(self) -> dict:
        return asdict(self)


def epoch_rng(seed: int, epoch: int, stream: int = 0) -> np.random.Generator:
    return np.random.default_rng([seed, epoch, stream])


def _clip(grads: dict[str, np.ndarray], max_norm: float) -> None:
    norm = np.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if norm > max_norm:
        for g in grads.values():
            g *= max_norm / norm


def train_minibatch(params: PolicyParams, opt: OptimizerState, images: np.ndarray, labels: np.ndarray,
                    env_cfg: EnvConfig, mode: Mode, cfg: TrainConfig, rng: np.random.Generator) -> tuple[float, float]:
    """One Adam step on -mean(J_hat) over the minibatch; returns (loss, rollout accuracy)."""
    mode = parse_mode(mode)
    params.zero_grad()
    b, n = len(labels), cfg.rollouts
    loss_total, correct = 0.0, 0
    for start in range(0, b, cfg.chunk):
        sl = slice(start, start + cfg.chunk)
        batch = collect(images[sl], labels[sl], params, env_cfg, mode, rng, n_rollouts=n)
        terms = trajectory_terms(batch, params, mode)
        loss = ag.scale(ag.sum(j_hat_terms(terms.log_prob, terms.reward)), -1.0 / (b * n))
        ag.backward(loss)
        loss_total += float(loss.data)
        correct += int((terms.pi_c.data.argmax(axis=1) == batch.labels).sum())
    trained = TRAINED_NETS[mode]
    grads = {k: (t.grad if t.grad is not None else np.zeros_like(t.data)) for k, t in params.named(trained)}
    if cfg.grad_clip:
        _clip(grads, cfg.grad_clip)
    adam_step(dict(params.named(trained)), grads, opt, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    params.zero_grad()
    return loss_total, correct / (b * n)


def run_epoch(params: PolicyParams, opt: OptimizerState, train_ds: Dataset, env_cfg: EnvConfig, mode: Mode,
              cfg: TrainConfig, epoch: int) -> tuple[float, float]:
    rng = epoch_rng(cfg.seed, epoch)
    order = rng.permutation(len(train_ds))
    losses, accs, weights = [], [], []
    for start in range(0, len(order), cfg.batch_size):
        idx = order[start:start + cfg.batch_size]
        loss, acc = train_minibatch(params, opt, train_ds.images[idx], train_ds.labels[idx], env_cfg, mode, cfg, rng)
        losses.append(loss)
        accs.append(acc)
        weights.append(len(idx))
    return float(np.average(losses, weights=weights)), float(np.average(accs, weights=weights))


def test_accuracy(params: PolicyParams, ds: Dataset, env_cfg: EnvConfig, mode, seed: int, epoch: int) -> float:
    probs = ev.predict(params, ds, env_cfg, mode, epoch_rng(seed, epoch, 1))
    return float(ev.topk_correct(probs, ds.labels, 1).mean())


# checkpoints ----------------------------------------------------------------------

def save_training_checkpoint(path, params: PolicyParams, opt: OptimizerState | None, meta: dict) -> None:
    tensors = dict(params.arrays())
    if opt is not None:
        for k in opt.m:
            tensors[f"adam.m.{k}"] = opt.m[k]
            tensors[f"adam.v.{k}"] = opt.v[k]
    meta = dict(meta, network=params.architecture(), adam_step=0 if opt is None else opt.step)
    ag.save_checkpoint(path, tensors, meta)


def load_training_checkpoint(path, expect: NetworkConfig | None = None) -> tuple[PolicyParams, OptimizerState, dict]:
    tensors, meta = ag.load_checkpoint(path)
    net_cfg = NetworkConfig(**meta["network"])
    if expect is not None and expect != net_cfg:
        raise ConfigurationError(f"checkpoint network {net_cfg} does not match configured {expect}")
    params = PolicyParams.from_arrays(net_cfg, tensors)
    opt = OptimizerState(step=int(meta.get("adam_step", 0)))
    for k, v in tensors.items():
        if k.startswith("adam.m."):
            opt.m[k[len("adam.m."):]] = v.copy()
        elif k.startswith("adam.v."):
            opt.v[k[len("adam.v."):]] = v.copy()
    return params, opt, meta


# driver ----------------------------------------------------------------------------

@dataclass
class TrainResult:
    params: PolicyParams
    opt: OptimizerState
    metrics: list[EpochMetrics]


def train(train_ds: Dataset, test_ds: Dataset | None, env_cfg: EnvConfig, params: PolicyParams, cfg: TrainConfig,
          out_dir=None, opt: OptimizerState | None = None, start_epoch: int = 0, meta: dict | None = None,
          max_epochs: int | None = None) -> TrainResult:
    """Run the schedule from ``start_epoch`` (0-based, counted across all modes).

    With ``out_dir`` set, appends to ``metrics.csv`` and writes ``epoch_XXX.ckpt``
    plus ``last.ckpt`` after every epoch.
    """
    opt = opt or OptimizerState()
    modes = cfg.epoch_modes()
    out = Path(out_dir) if out_dir else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
        metrics_path = out / "metrics.csv"
        if not metrics_path.exists() or start_epoch == 0:
            with open(metrics_path, "w", newline="") as fh:
                csv.DictWriter(fh, METRIC_FIELDS).writeheader()
    metrics = []
    stop = len(modes) if max_epochs is None else min(len(modes), start_epoch + max_epochs)
    for epoch in range(start_epoch, stop):
        mode = modes[epoch]
        t0 = time.perf_counter()
        loss, acc = run_epoch(params, opt, train_ds, env_cfg, mode, cfg, epoch)
        test_acc = test_accuracy(params, test_ds, env_cfg, mode, cfg.seed, epoch) if test_ds is not None else float("nan")
        m = EpochMetrics(epoch + 1, mode.value, loss, acc, test_acc, time.perf_counter() - t0)
        metrics.append(m)
        log.info("epoch %d mode %s loss %.4f train_acc %.4f test_acc %.4f (%.1fs)", m.epoch, m.mode, loss, acc,
                 test_acc, m.wall_seconds)
        if out:
            with open(metrics_path, "a", newline="") as fh:
                csv.DictWriter(fh, METRIC_FIELDS).writerow(m.row())
            ck_meta = dict(meta or {}, epoch=epoch + 1, mode=mode.value, env=asdict(env_cfg), train=asdict(cfg))
            save_training_checkpoint(out / f"epoch_{epoch + 1:03d}.ckpt", params, opt, ck_meta)
            save_training_checkpoint(out / "last.ckpt", params, opt, ck_meta)
    return TrainResult(params, opt, metrics)
