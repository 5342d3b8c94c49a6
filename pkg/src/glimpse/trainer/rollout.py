"""Rollout collection.

Rollouts run without a graph: only the sampled choices and the planner
inputs that produced them are kept. Planner inputs are pure functions of the
environment, so the differentiable log-probabilities can be rebuilt later
from the stored inputs (see ``objective.trajectory_terms``).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .. import autograd as ag
from .. import env as envlib
from ..env import EnvConfig, Forced
from ..policies import PolicyParams, action_forward, goal_forward, iid_action, iid_goal, sample_action, sample_goal


class Mode(str, enum.Enum):
    """Hierarchical training modes: which layers plan with their networks."""

    IID = "i"        # goals and actions i.i.d.; classifier trained
    GOALS = "ii"     # goal planner + classifier trained; actions i.i.d.
    ALL = "iii"      # all three trained

    @property
    def rank(self) -> int:
        return ("i", "ii", "iii").index(self.value)

    @property
    def plans_goals(self) -> bool:
        return self is not Mode.IID

    @property
    def plans_actions(self) -> bool:
        return self is Mode.ALL


def parse_mode(mode) -> Mode:
    return mode if isinstance(mode, Mode) else Mode(str(mode))


@dataclass
class RolloutBatch:
    """R rollouts; ``sample`` maps each rollout to its source image."""

    mode: Mode
    cfg: EnvConfig
    sample: np.ndarray            # (R,)
    labels: np.ndarray            # (R,)
    goals: np.ndarray             # (E, R) flat goal indices
    goal_coords: np.ndarray       # (E, R, 2)
    poses: np.ndarray             # (E*T + 1, R, 2) pose before each step, then final
    axes: np.ndarray              # (E, T, R)
    forced: np.ndarray            # (E, T, R) Forced codes
    chi: np.ndarray               # (E, T, R) 1 where pi_a decided the action
    final_image: np.ndarray       # (R, c, n, n) y_f
    goal_inputs: np.ndarray | None = None     # (E, R, c+3, n, n) when goals were planned
    action_inputs: np.ndarray | None = None   # (M, c+3, n, n) for every chi = 1 step
    action_owner: np.ndarray | None = None    # (M,) rollout index of each row above
    action_taken: np.ndarray | None = None    # (M,)
    snapshots: dict = field(default_factory=dict)  # (e, t) -> (revealed, pose, goal) after that step

    @property
    def size(self) -> int:
        return len(self.sample)


def collect(images: np.ndarray, labels: np.ndarray, params: PolicyParams | None, cfg: EnvConfig, mode,
            rng: np.random.Generator, n_rollouts: int = 1, poses: np.ndarray | None = None,
            script: tuple[np.ndarray, np.ndarray] | None = None, keep_snapshots: bool = False) -> RolloutBatch:
    """Run E episodes of T steps for every (image, rollout) pair.

    The ``n_rollouts`` copies of an image share its initial pose. ``script``
    replaces sampling with fixed choices: ``(goals (E, R), free_axes (E, T, R))``
    where free axes are consulted only where the protocol leaves a choice.
    """
    mode = parse_mode(mode)
    images = np.asarray(images, dtype=np.float64)
    if images.ndim == 3:
        images = images[None]
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    b = images.shape[0]
    if poses is None:
        poses = rng.integers(0, cfg.max_coord + 1, size=(b, 2))
    sample = np.repeat(np.arange(b), n_rollouts)
    state = envlib.reset(images[sample], rng, cfg, pose=np.asarray(poses)[sample])
    r = state.batch
    E, T = cfg.episodes, cfg.horizon

    goals = np.zeros((E, r), dtype=np.int64)
    goal_coords = np.zeros((E, r, 2), dtype=np.int64)
    pose_log = np.zeros((E * T + 1, r, 2), dtype=np.int64)
    axes = np.zeros((E, T, r), dtype=np.int64)
    forced_log = np.zeros((E, T, r), dtype=np.int64)
    chi = np.zeros((E, T, r), dtype=np.int64)
    goal_inputs = np.zeros((E, r, cfg.c + 3, cfg.n, cfg.n)) if mode.plans_goals else None
    act_in, act_owner, act_taken = [], [], []
    snapshots = {}

    with ag.no_grad():
        for e in range(E):
            if mode.plans_goals:
                goal_inputs[e] = envlib.goal_input(state)
            if script is not None:
                g = np.asarray(script[0][e])
            elif mode.plans_goals:
                g, _ = sample_goal(goal_forward(goal_inputs[e], params).data, rng)
            else:
                g = iid_goal(rng, cfg.n, r)
            state = envlib.set_goal(state, g)
            goals[e] = g
            goal_coords[e] = state.goal
            for t in range(T):
                pose_log[e * T + t] = state.pose
                forced = envlib.forced_axis(state.pose, state.goal, cfg.step)
                free = forced == Forced.FREE
                if script is not None:
                    axis = np.where(free, np.asarray(script[1][e, t]), forced)
                elif mode.plans_actions:
                    axis = forced.copy()
                    if free.any():
                        u_a = envlib.action_input(state)[free]
                        pi_a = action_forward(u_a, params).data
                        axis[free], _, _ = sample_action(pi_a, forced[free], rng)
                        act_in.append(u_a)
                        act_owner.append(np.flatnonzero(free))
                        act_taken.append(axis[free])
                else:
                    axis = iid_action(forced, rng)
                if script is not None and mode.plans_actions and free.any():
                    act_in.append(envlib.action_input(state)[free])
                    act_owner.append(np.flatnonzero(free))
                    act_taken.append(axis[free])
                axes[e, t], forced_log[e, t], chi[e, t] = axis, forced, free
                state = envlib.step(state, axis)
                if keep_snapshots:
                    snapshots[(e, t)] = (state.revealed.copy(), state.pose.copy(), goal_coords[e].copy())
        pose_log[-1] = state.pose

    batch = RolloutBatch(mode, cfg, sample, labels[sample], goals, goal_coords, pose_log, axes, forced_log, chi,
                         state.revealed, goal_inputs=goal_inputs, snapshots=snapshots)
    if mode.plans_actions:
        c3 = (cfg.c + 3, cfg.n, cfg.n)
        batch.action_inputs = np.concatenate(act_in) if act_in else np.zeros((0,) + c3)
        batch.action_owner = np.concatenate(act_owner) if act_owner else np.zeros(0, dtype=np.int64)
        batch.action_taken = np.concatenate(act_taken) if act_taken else np.zeros(0, dtype=np.int64)
    return batch
