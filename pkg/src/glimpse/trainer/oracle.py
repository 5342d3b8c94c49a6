"""Exact enumeration check of the estimator's unbiasedness.

On an instance small enough to list every trajectory tau (all goal
sequences and all free-step axis choices, for a fixed start pose) two
quantities are formed by exact weighted sums:

* grad J, by backpropagating J = sum_tau pi^tau r^tau where pi^tau is the
  product of the sampled-branch probabilities (no logs involved);
* E[grad J_hat] = sum_tau pi^tau * grad(log pi^tau * r_d^tau + r^tau).

They are computed along different routes through the graph, so agreement
certifies the estimator rather than restating it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import autograd as ag
from ..autograd import Tensor, UsageError
from ..env import EnvConfig, Forced
from .. import env as envlib
from ..policies import PolicyParams
from .objective import Trajectory, replay, traj_log_prob
from .rollout import Mode, parse_mode

DEFAULT_CAP = 4096


@dataclass
class OracleResult:
    grad_j: dict[str, np.ndarray]
    expected_grad_j_hat: dict[str, np.ndarray]
    max_abs_diff: float
    n_trajectories: int
    total_probability: float


def enumerate_trajectories(cfg: EnvConfig, image: np.ndarray, pose, cap: int = DEFAULT_CAP):
    """All (goals, free_axes) scripts reachable from ``pose``.

    Yields ``(goals (E,), axes (E, T))`` with forced steps filled by their
    forced axis. Raises UsageError once more than ``cap`` trajectories exist.
    """
    n2 = cfg.n * cfg.n
    results = []

    def walk(state, e, t, goals, axes):
        if e == cfg.episodes:
            results.append((tuple(goals), tuple(axes)))
            if len(results) > cap:
                raise UsageError(f"trajectory space exceeds the cap of {cap}")
            return
        if t == 0 and not state.goal_set:
            for g in range(n2):
                walk(envlib.set_goal(state, g), e, 0, goals + [g], axes)
            return
        forced = int(envlib.forced_axis(state.pose, state.goal, cfg.step)[0])
        options = [0, 1] if forced == Forced.FREE else [forced]
        for a in options:
            nxt = envlib.step(state, a)
            walk(nxt, nxt.episode, nxt.t, goals, axes + [a])

    walk(envlib.reset(image, np.random.default_rng(0), cfg, pose=np.asarray(pose)), 0, 0, [], [])
    return [(np.array(g), np.array(a).reshape(cfg.episodes, cfg.horizon)) for g, a in results]


def _path_probability(traj: Trajectory, mode: Mode, n: int) -> Tensor:
    """pi^tau as a product of the picked branch probabilities."""
    prob = Tensor(1.0)
    if mode.plans_goals:
        for node in traj.goal_probs:
            prob = ag.mul(prob, node)
    else:
        prob = ag.scale(prob, float(n * n) ** -traj.n_goals)
    if mode.plans_actions:
        for node in traj.action_probs.values():
            prob = ag.mul(prob, node)
    else:
        prob = ag.scale(prob, 0.5 ** int(traj.chi.sum()))
    return prob


def _grads(params: PolicyParams) -> dict[str, np.ndarray]:
    return {k: v.copy() for k, v in params.grads().items()}


def enumerate_grad_check(image: np.ndarray, label: int, params: PolicyParams, cfg: EnvConfig, pose,
                         mode="iii", cap: int = DEFAULT_CAP, zero_reward: bool = False) -> OracleResult:
    """Exact grad J vs exact E[grad J_hat]; returns both and their max abs difference."""
    mode = parse_mode(mode)
    scripts = enumerate_trajectories(cfg, image, pose, cap)
    names = [k for k, _ in params.named()]
    grad_j = {k: np.zeros_like(t.data) for k, t in params.named()}
    expected = {k: np.zeros_like(t.data) for k, t in params.named()}
    total_p = 0.0
    for goals, axes in scripts:
        # route 1: d(pi^tau r^tau), no logs
        params.zero_grad()
        tr = replay(image, label, params, cfg, mode, pose, goals, axes)
        rew = ag.scale(tr.reward, 0.0) if zero_reward else tr.reward
        ag.backward(ag.mul(_path_probability(tr, mode, cfg.n), rew))
        for k, g in _grads(params).items():
            grad_j[k] += g

        # route 2: pi^tau * d(log pi^tau r_d + r), evaluated on a fresh graph
        params.zero_grad()
        tr = replay(image, label, params, cfg, mode, pose, goals, axes)
        rew = ag.scale(tr.reward, 0.0) if zero_reward else tr.reward
        with ag.no_grad():
            p_tau = float(_path_probability(tr, mode, cfg.n).data)
        total_p += p_tau
        ag.backward(ag.add(ag.mul(traj_log_prob(tr, mode), ag.detach(rew)), rew))
        for k, g in _grads(params).items():
            expected[k] += p_tau * g
    params.zero_grad()
    diff = max(float(np.max(np.abs(grad_j[k] - expected[k]))) for k in names)
    return OracleResult(grad_j, expected, diff, len(scripts), total_p)


def expected_reward_grad(image: np.ndarray, label: int, params: PolicyParams, cfg: EnvConfig, pose,
                         cap: int = DEFAULT_CAP) -> dict[str, np.ndarray]:
    """sum_tau p^tau grad r^tau under i.i.d. (parameter-free) goal/action probabilities."""
    scripts = enumerate_trajectories(cfg, image, pose, cap)
    out = {k: np.zeros_like(t.data) for k, t in params.named()}
    for goals, axes in scripts:
        params.zero_grad()
        tr = replay(image, label, params, cfg, Mode.IID, pose, goals, axes)
        p = (cfg.n * cfg.n) ** -cfg.episodes * 0.5 ** int(tr.chi.sum())
        ag.backward(tr.reward)
        for k, g in _grads(params).items():
            out[k] += p * g
    params.zero_grad()
    return out


def expected_objective(image: np.ndarray, label: int, params: PolicyParams, cfg: EnvConfig, pose, mode="iii",
                       cap: int = DEFAULT_CAP) -> float:
    """J(Theta) = sum_tau pi^tau r^tau, value only (for finite differences)."""
    mode = parse_mode(mode)
    total = 0.0
    with ag.no_grad():
        for goals, axes in enumerate_trajectories(cfg, image, pose, cap):
            tr = replay(image, label, params, cfg, mode, pose, goals, axes)
            total += float(_path_probability(tr, mode, cfg.n).data) * tr.reward_detached
    return total


def random_tiny_instance(rng: np.random.Generator, env_cfg: EnvConfig, net_cfg):
    """Random image, label, start pose and parameters for the oracle."""
    params = PolicyParams.init(net_cfg, rng)
    for t in params.tensors():
        t.data[...] = rng.normal(size=t.shape) * 0.5  # random biases too, away from symmetric init
    image = rng.uniform(-0.5, 0.5, size=(env_cfg.c, env_cfg.n, env_cfg.n))
    label = int(rng.integers(net_cfg.classes))
    pose = rng.integers(0, env_cfg.max_coord + 1, size=2)
    return image, label, pose, params

