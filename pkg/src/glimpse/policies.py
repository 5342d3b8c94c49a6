"""Goal planner, action planner and classifier networks plus their samplers.

All three are fully convolutional. The planners keep ``d`` channels at full
resolution and use concatenation skips; the classifier doubles its width in
every block (the concatenation itself does the doubling) and halves the
resolution with a stride-2 convolution.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Iterator

import numpy as np

from . import autograd as ag
from .autograd import ConfigurationError, Tensor
from .env import Axis, Forced

GOAL, ACTION, CLASSIFIER = "goal", "action", "classifier"
NETWORKS = (GOAL, ACTION, CLASSIFIER)


@dataclass(frozen=True)
class NetworkConfig:
    in_channels: int = 1      # image channels c
    kernel: int = 3
    planner_width: int = 8    # d
    planner_blocks: int = 3   # r for both planners
    classifier_width: int = 8
    classifier_blocks: int = 3
    classes: int = 10         # D

    def __post_init__(self):
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ConfigurationError("kernel size must be odd")
        if min(self.planner_width, self.classifier_width, self.planner_blocks, self.classifier_blocks) < 1:
            raise ConfigurationError("widths and block counts must be >= 1")
        if self.classes < 2:
            raise ConfigurationError("need at least two classes")

    @property
    def padding(self) -> int:
        return (self.kernel - 1) // 2


def _conv_shapes(cfg: NetworkConfig, net: str) -> list[tuple[str, tuple[int, int, int, int]]]:
    k, d = cfg.kernel, cfg.planner_width
    if net in (GOAL, ACTION):
        out = 1 if net == GOAL else 2
        shapes = [("stem", (d, cfg.in_channels + 3, k, k))]
        for b in range(cfg.planner_blocks):
            shapes += [(f"block{b}.conv", (d, d, k, k)), (f"block{b}.mix", (d, 2 * d, 1, 1))]
        return shapes + [("head", (out, d, k, k))]
    w = cfg.classifier_width
    shapes = [("stem", (w, cfg.in_channels, k, k))]
    for b in range(cfg.classifier_blocks):
        shapes += [(f"block{b}.conv", (w, w, k, k)), (f"block{b}.down", (2 * w, 2 * w, k, k))]
        w *= 2
    return shapes + [("head", (cfg.classes, w, 1, 1))]


class PolicyParams:
    """Theta = (theta_goal, theta_action, theta_classifier), each a name -> Tensor dict."""

    def __init__(self, cfg: NetworkConfig, nets: dict[str, dict[str, Tensor]]):
        self.cfg = cfg
        self.nets = nets

    @classmethod
    def init(cls, cfg: NetworkConfig, rng: np.random.Generator) -> "PolicyParams":
        nets = {}
        for net in NETWORKS:
            params = {}
            for name, shape in _conv_shapes(cfg, net):
                bound = np.sqrt(1.0 / (shape[1] * shape[2] * shape[3]))
                params[f"{name}.w"] = Tensor(rng.uniform(-bound, bound, size=shape), True)
                params[f"{name}.b"] = Tensor(np.zeros(shape[0]), True)
            nets[net] = params
        return cls(cfg, nets)

    def __getitem__(self, net: str) -> dict[str, Tensor]:
        return self.nets[net]

    def named(self, nets=NETWORKS) -> Iterator[tuple[str, Tensor]]:
        for net in nets:
            for name, t in self.nets[net].items():
                yield f"{net}.{name}", t

    def tensors(self, nets=NETWORKS) -> list[Tensor]:
        return [t for _, t in self.named(nets)]

    def count(self) -> int:
        return sum(t.data.size for t in self.tensors())

    def zero_grad(self) -> None:
        for t in self.tensors():
            t.grad = None

    def grads(self) -> dict[str, np.ndarray]:
        return {k: (np.zeros_like(t.data) if t.grad is None else t.grad) for k, t in self.named()}

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: t.data for k, t in self.named()}

    def copy(self) -> "PolicyParams":
        return PolicyParams(self.cfg, {net: {k: Tensor(t.data.copy(), True) for k, t in ps.items()}
                                       for net, ps in self.nets.items()})

    @classmethod
    def from_arrays(cls, cfg: NetworkConfig, arrays: dict[str, np.ndarray]) -> "PolicyParams":
        nets = {}
        for net in NETWORKS:
            params = {}
            for name, shape in _conv_shapes(cfg, net):
                for suffix, shp in (("w", shape), ("b", (shape[0],))):
                    key = f"{net}.{name}.{suffix}"
                    if key not in arrays:
                        raise ConfigurationError(f"checkpoint lacks parameter {key}")
                    if tuple(arrays[key].shape) != shp:
                        raise ConfigurationError(f"{key}: checkpoint shape {arrays[key].shape}, config expects {shp}")
                    params[f"{name}.{suffix}"] = Tensor(np.array(arrays[key]), True)
            nets[net] = params
        return cls(cfg, nets)

    def architecture(self) -> dict:
        return asdict(self.cfg)


# forward passes ---------------------------------------------------------------

def _batched(u) -> tuple[Tensor, bool]:
    u = ag.Tensor(u) if not isinstance(u, Tensor) else u
    if u.ndim == 3:
        return ag.reshape(u, (1,) + u.shape), True
    return u, False


def _planner_trunk(u: Tensor, p: dict[str, Tensor], cfg: NetworkConfig) -> Tensor:
    pad = cfg.padding
    x = ag.relu(ag.conv2d(u, p["stem.w"], p["stem.b"], padding=pad))
    for b in range(cfg.planner_blocks):
        h = ag.relu(ag.conv2d(x, p[f"block{b}.conv.w"], p[f"block{b}.conv.b"], padding=pad))
        x = ag.relu(ag.conv2d(ag.concat_channels([x, h]), p[f"block{b}.mix.w"], p[f"block{b}.mix.b"]))
    return ag.conv2d(x, p["head.w"], p["head.b"], padding=pad)


def goal_forward(u_g, params: PolicyParams) -> Tensor:
    """pi_g: (B, n, n) probability maps (or (n, n) for an unbatched input)."""
    u, single = _batched(u_g)
    z = _planner_trunk(u, params[GOAL], params.cfg)
    pi = ag.softmax2d(ag.reshape(z, (z.shape[0],) + z.shape[2:]))
    return ag.reshape(pi, pi.shape[1:]) if single else pi


def action_forward(u_a, params: PolicyParams) -> Tensor:
    """pi_a: (B, 2); index 0 = vertical, 1 = horizontal."""
    u, single = _batched(u_a)
    pi = ag.softmax(ag.global_avg_pool(_planner_trunk(u, params[ACTION], params.cfg)))
    return ag.reshape(pi, (2,)) if single else pi


def classify(u_c, params: PolicyParams) -> Tensor:
    """pi_c: (B, D) class probabilities."""
    u, single = _batched(u_c)
    cfg, p = params.cfg, params[CLASSIFIER]
    pad = cfg.padding
    x = ag.relu(ag.conv2d(u, p["stem.w"], p["stem.b"], padding=pad))
    for b in range(cfg.classifier_blocks):
        h = ag.relu(ag.conv2d(x, p[f"block{b}.conv.w"], p[f"block{b}.conv.b"], padding=pad))
        x = ag.relu(ag.conv2d(ag.concat_channels([x, h]), p[f"block{b}.down.w"], p[f"block{b}.down.b"],
                              padding=pad, stride=2))
    pi = ag.softmax(ag.global_avg_pool(ag.conv2d(x, p["head.w"], p["head.b"])))
    return ag.reshape(pi, (cfg.classes,)) if single else pi


# samplers ---------------------------------------------------------------------

def _categorical(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF draw per row of a (B, K) probability array."""
    cdf = np.cumsum(probs, axis=1)
    u = (1.0 - rng.random(probs.shape[0])) * cdf[:, -1]  # u in (0, total]
    return np.minimum((cdf < u[:, None]).sum(axis=1), probs.shape[1] - 1)


def _values(pi) -> np.ndarray:
    return pi.data if isinstance(pi, Tensor) else np.asarray(pi, dtype=np.float64)


def sample_goal(pi_g, rng: np.random.Generator):
    """Draw flat goal indices from (B, n, n) maps; returns (indices, log-probs).

    Log-probs are graph nodes when ``pi_g`` is a Tensor, plain floats otherwise.
    """
    vals = _values(pi_g)
    single = vals.ndim == 2
    flat = vals.reshape(1 if single else vals.shape[0], -1)
    idx = _categorical(flat, rng)
    if isinstance(pi_g, Tensor):
        pf = ag.reshape(pi_g, flat.shape)
        logp = ag.log(ag.index(pf, (np.arange(len(idx)), idx)))
    else:
        logp = np.log(np.maximum(flat[np.arange(len(idx)), idx], ag.LOG_EPS))
    if single:
        return int(idx[0]), (ag.reshape(logp, ()) if isinstance(logp, Tensor) else float(logp[0]))
    return idx, logp


def sample_action(pi_a, forced, rng: np.random.Generator):
    """Protocol-aware action choice: returns (axis, log_prob, chi).

    Forced agents keep their forced axis with chi = 0 and log-prob 0 (no
    contribution); free agents sample from pi_a with chi = 1.
    """
    vals = _values(pi_a)
    single = vals.ndim == 1
    vals = vals.reshape(-1, 2)
    forced = np.broadcast_to(np.asarray(forced, dtype=np.int64), (vals.shape[0],))
    drawn = _categorical(vals, rng)
    free = forced == Forced.FREE
    axis = np.where(free, drawn, forced)
    chi = free.astype(np.int64)
    if isinstance(pi_a, Tensor):
        pa = ag.reshape(pi_a, vals.shape)
        logp = ag.mul(ag.log(ag.index(pa, (np.arange(len(axis)), axis))), chi.astype(float))
    else:
        logp = np.where(free, np.log(np.maximum(vals[np.arange(len(axis)), axis], ag.LOG_EPS)), 0.0)
    if single:
        lp = (ag.reshape(logp, ()) if isinstance(logp, Tensor) else float(logp[0]))
        return int(axis[0]), (lp if chi[0] else None), int(chi[0])
    return axis, logp, chi


def iid_goal(rng: np.random.Generator, n: int, batch: int | None = None):
    """Uniform over all n*n pixels."""
    idx = rng.integers(0, n * n, size=1 if batch is None else batch)
    return int(idx[0]) if batch is None else idx


def iid_action(forced, rng: np.random.Generator):
    """Fair coin between the axes for free agents; forced agents keep their axis."""
    forced = np.atleast_1d(np.asarray(forced, dtype=np.int64))
    coin = rng.integers(0, 2, size=forced.shape[0])
    return np.where(forced == Forced.FREE, coin, forced)


__all__ = [
    "ACTION", "Axis", "CLASSIFIER", "GOAL", "NETWORKS", "NetworkConfig", "PolicyParams",
    "action_forward", "classify", "goal_forward", "iid_action", "iid_goal", "sample_action", "sample_goal",
]
