"""Trajectory log-probabilities, rewards and the estimator J-hat.

For N rollouts of one sample::

    J_hat = (1/N) * sum_k ( log pi^(k) * r_d^(k) + r^(k) )

where r_d is the reward value detached from the graph. Its gradient is an
unbiased estimate of the gradient of J = E[r] even though r depends on the
classifier parameters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import autograd as ag
from ..autograd import Tensor
from ..env import EnvConfig
from ..policies import PolicyParams, action_forward, classify, goal_forward
from .rollout import Mode, RolloutBatch, collect, parse_mode


def one_hot(labels: np.ndarray, classes: int) -> np.ndarray:
    return np.eye(classes)[np.asarray(labels, dtype=np.int64)]


def reward(pi_c: Tensor, labels: np.ndarray) -> Tensor:
    """r = -CrossEntropy(pi_c, one-hot(label)), one entry per row."""
    return ag.scale(ag.cross_entropy(pi_c, one_hot(labels, pi_c.shape[-1])), -1.0)


def goal_probs(batch: RolloutBatch, params: PolicyParams) -> Tensor:
    """(E, R) pi_g(e)[g(e)] rebuilt from the stored goal-planner inputs."""
    E, R = batch.goals.shape
    cfg = batch.cfg
    u = batch.goal_inputs.reshape((E * R, cfg.c + 3, cfg.n, cfg.n))
    pi = ag.reshape(goal_forward(u, params), (E * R, cfg.n * cfg.n))
    return ag.reshape(ag.index(pi, (np.arange(E * R), batch.goals.reshape(-1))), (E, R))


def action_probs(batch: RolloutBatch, params: PolicyParams) -> Tensor:
    """(M,) pi_a[a] for every step whose axis came from the action planner."""
    pi = action_forward(batch.action_inputs, params)
    return ag.index(pi, (np.arange(len(batch.action_taken)), batch.action_taken))


def goal_log_probs(batch: RolloutBatch, params: PolicyParams) -> Tensor:
    return ag.log(goal_probs(batch, params))


def action_log_probs(batch: RolloutBatch, params: PolicyParams) -> Tensor:
    return ag.log(action_probs(batch, params))


def batch_log_prob(batch: RolloutBatch, params: PolicyParams, mode=None) -> Tensor:
    """(R,) log pi^tau per rollout under the mode's bookkeeping.

    i: 0; ii: sum_e log pi_g(e); iii: that plus sum_{e,t} chi(e,t) log pi_a(e,t).
    """
    mode = parse_mode(mode or batch.mode)
    r = batch.size
    if mode is Mode.IID:
        return Tensor(np.zeros(r))
    logp = ag.sum(goal_log_probs(batch, params), axis=0)
    if mode is Mode.ALL and len(batch.action_taken):
        logp = ag.add(logp, ag.segment_sum(action_log_probs(batch, params), batch.action_owner, r))
    return logp


@dataclass
class Terms:
    log_prob: Tensor   # (R,)
    reward: Tensor     # (R,) differentiable
    pi_c: Tensor       # (R, D)


def trajectory_terms(batch: RolloutBatch, params: PolicyParams, mode=None) -> Terms:
    pi_c = classify(batch.final_image, params)
    return Terms(batch_log_prob(batch, params, mode), reward(pi_c, batch.labels), pi_c)


def j_hat_terms(log_prob: Tensor, rew: Tensor, detach_reward: bool = True) -> Tensor:
    """Per-rollout summands log pi * r_d + r (R,)."""
    r_d = ag.detach(rew) if detach_reward else rew
    return ag.add(ag.mul(log_prob, r_d), rew)


def j_hat(log_prob: Tensor, rew: Tensor, detach_reward: bool = True) -> Tensor:
    """Scalar J-hat averaged over the given rollouts of one sample."""
    return ag.mean(j_hat_terms(log_prob, rew, detach_reward))


# single-trajectory view ---------------------------------------------------------

@dataclass
class Trajectory:
    mode: Mode
    goals: np.ndarray              # (E,) flat indices
    goal_log_probs: list           # E graph nodes (empty in mode i)
    axes: np.ndarray               # (E, T)
    chi: np.ndarray                # (E, T)
    action_log_probs: dict         # (e, t) -> graph node for chi = 1 steps (mode iii)
    goal_probs: list               # same branches as probabilities, no log
    action_probs: dict
    reward: Tensor                 # scalar node r
    reward_detached: float         # r_d
    pi_c: Tensor
    batch: RolloutBatch

    @property
    def n_goals(self) -> int:
        return len(self.goals)

    @property
    def n_steps(self) -> int:
        return self.axes.size


def _trajectory_from_batch(batch: RolloutBatch, params: PolicyParams) -> Trajectory:
    mode = batch.mode
    goal_nodes, action_nodes, goal_p, action_p = [], {}, [], {}
    if mode.plans_goals:
        gp = goal_probs(batch, params)
        goal_p = [ag.index(gp, (e, 0)) for e in range(batch.goals.shape[0])]
        goal_nodes = [ag.log(p) for p in goal_p]
    if mode.plans_actions and len(batch.action_taken):
        ap = action_probs(batch, params)
        free_steps = [(e, t) for e in range(batch.axes.shape[0]) for t in range(batch.axes.shape[1])
                      if batch.chi[e, t, 0]]
        action_p = {et: ag.index(ap, i) for i, et in enumerate(free_steps)}
        action_nodes = {et: ag.log(p) for et, p in action_p.items()}
    pi_c = classify(batch.final_image, params)
    rew = ag.reshape(reward(pi_c, batch.labels), ())
    return Trajectory(mode, batch.goals[:, 0], goal_nodes, batch.axes[:, :, 0], batch.chi[:, :, 0],
                      action_nodes, goal_p, action_p, rew, float(rew.data),
                      ag.reshape(pi_c, (pi_c.shape[-1],)), batch)


def rollout(image: np.ndarray, label: int, params: PolicyParams, cfg: EnvConfig, mode, rng: np.random.Generator,
            pose: np.ndarray | None = None) -> Trajectory:
    """One trajectory with live graph nodes for its log-probabilities and reward."""
    batch = collect(image, np.array([label]), params, cfg, mode, rng, n_rollouts=1,
                    poses=None if pose is None else np.asarray(pose).reshape(1, 2))
    return _trajectory_from_batch(batch, params)


def replay(image: np.ndarray, label: int, params: PolicyParams, cfg: EnvConfig, mode, pose: np.ndarray,
           goals, free_axes) -> Trajectory:
    """Deterministic trajectory with the given goals and free-step axes."""
    script = (np.asarray(goals).reshape(cfg.episodes, 1),
              np.asarray(free_axes).reshape(cfg.episodes, cfg.horizon, 1))
    batch = collect(image, np.array([label]), params, cfg, mode, np.random.default_rng(0), n_rollouts=1,
                    poses=np.asarray(pose).reshape(1, 2), script=script)
    return _trajectory_from_batch(batch, params)


def traj_log_prob(traj: Trajectory, mode=None) -> Tensor:
    """Scalar log pi^tau: 0 in mode i, goals only in ii, goals + chi-gated actions in iii."""
    mode = parse_mode(mode or traj.mode)
    total = Tensor(0.0)
    if mode is Mode.IID:
        return total
    for node in traj.goal_log_probs:
        total = ag.add(total, node)
    if mode is Mode.ALL:
        for (e, t), node in traj.action_log_probs.items():
            if traj.chi[e, t]:
                total = ag.add(total, node)
    return total


def j_hat_trajectories(trajs: list[Trajectory], mode=None, detach_reward: bool = True) -> Tensor:
    """J-hat over N rollouts of the same sample."""
    total = Tensor(0.0)
    for tr in trajs:
        r_d = ag.detach(tr.reward) if detach_reward else tr.reward
        total = ag.add(total, ag.add(ag.mul(traj_log_prob(tr, mode), r_d), tr.reward))
    return ag.scale(total, 1.0 / len(trajs))
