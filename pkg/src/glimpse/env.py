"""Partially observable image-exploration environment.

A state holds a batch of ``B`` independent agents (``B = 1`` for a single
image). Coordinates are ``(col, row)`` pairs naming the top-left corner of
the ``m x m`` observation patch; both range over ``[0, n - m]``.

Time bookkeeping: ``(episode, t)`` is the step about to be taken. The image
revealed after step ``(e, t)`` is what the paper-style notation calls
``y(e, t)``, so the classifier input is the state after all ``E * T`` steps.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

from .autograd import ConfigurationError, UsageError


class Axis(enum.IntEnum):
    VERTICAL = 0
    HORIZONTAL = 1


class Forced(enum.IntEnum):
    VERTICAL = 0
    HORIZONTAL = 1
    FREE = 2


@dataclass(frozen=True)
class EnvConfig:
    n: int = 28
    c: int = 1
    m: int = 6
    step: int = 2
    episodes: int = 4
    horizon: int = 5

    def __post_init__(self):
        if not 1 <= self.m <= self.n:
            raise ConfigurationError(f"patch size m={self.m} must satisfy 1 <= m <= n={self.n}")
        if self.step < 1:
            raise ConfigurationError("step must be >= 1")
        if self.episodes < 1 or self.horizon < 1 or self.c < 1:
            raise ConfigurationError("episodes, horizon and c must be >= 1")

    @property
    def max_coord(self) -> int:
        return self.n - self.m

    @property
    def total_steps(self) -> int:
        return self.episodes * self.horizon


@dataclass(frozen=True)
class EnvState:
    cfg: EnvConfig
    image: np.ndarray          # (B, c, n, n) hidden ground truth
    pose: np.ndarray           # (B, 2) int (col, row)
    revealed: np.ndarray       # (B, c, n, n) y
    position_mask: np.ndarray  # (B, n, n) l
    history_mask: np.ndarray   # (B, n, n) h
    goal: np.ndarray           # (B, 2) int, -1 before the episode's goal is set
    goal_mask: np.ndarray      # (B, n, n) g_l(e), all ones until set
    last_goal_mask: np.ndarray  # (B, n, n) g_l(e-1)
    episode_start: tuple[np.ndarray, np.ndarray, np.ndarray]  # y, l, h at the end of episode e-1
    episode: int = 0
    t: int = 0

    @property
    def batch(self) -> int:
        return self.pose.shape[0]

    @property
    def steps_taken(self) -> int:
        return self.episode * self.cfg.horizon + self.t

    @property
    def done(self) -> bool:
        return self.steps_taken >= self.cfg.total_steps

    @property
    def goal_set(self) -> bool:
        return bool(np.all(self.goal >= 0))


def patch_mask(cfg: EnvConfig, corner: np.ndarray) -> np.ndarray:
    """Boolean (B, n, n) masks, True on the m x m patch whose top-left is ``corner``."""
    corner = np.atleast_2d(corner)
    idx = np.arange(cfg.n)
    cols = (idx >= corner[:, 0:1]) & (idx < corner[:, 0:1] + cfg.m)
    rows = (idx >= corner[:, 1:2]) & (idx < corner[:, 1:2] + cfg.m)
    return rows[:, :, None] & cols[:, None, :]


def _reveal(cfg, image, revealed, history, pose):
    patch = patch_mask(cfg, pose)
    revealed = np.where(patch[:, None], image, revealed)
    history = np.where(patch, 0.0, history)
    position = np.where(patch, 0.0, 1.0)
    return revealed, history, position


def reset(image: np.ndarray, rng: np.random.Generator, cfg: EnvConfig, pose: np.ndarray | None = None) -> EnvState:
    """Start agents at uniform random poses (or at ``pose``) with the first patch revealed."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 3:
        image = image[None]
    if image.ndim != 4 or image.shape[1:] != (cfg.c, cfg.n, cfg.n):
        raise ConfigurationError(f"image shape {image.shape[1:]} does not match (c, n, n)=({cfg.c}, {cfg.n}, {cfg.n})")
    b = image.shape[0]
    if pose is None:
        pose = rng.integers(0, cfg.max_coord + 1, size=(b, 2))
    pose = np.array(np.broadcast_to(pose, (b, 2)), dtype=np.int64)
    if pose.min() < 0 or pose.max() > cfg.max_coord:
        raise ConfigurationError(f"pose outside [0, {cfg.max_coord}]")
    ones = np.ones((b, cfg.n, cfg.n))
    revealed, history, position = _reveal(cfg, image, np.zeros_like(image), ones, pose)
    return EnvState(cfg, image, pose, revealed, position, history,
                    goal=np.full((b, 2), -1, dtype=np.int64), goal_mask=ones, last_goal_mask=ones,
                    episode_start=(revealed, position, history))


def unflatten_goal(cfg: EnvConfig, goal_index) -> np.ndarray:
    """Flat index into the n x n map (row-major) -> clamped (col, row)."""
    goal_index = np.atleast_1d(np.asarray(goal_index, dtype=np.int64))
    if goal_index.min() < 0 or goal_index.max() >= cfg.n * cfg.n:
        raise UsageError(f"goal index outside [0, {cfg.n * cfg.n})")
    col, row = goal_index % cfg.n, goal_index // cfg.n
    return np.clip(np.stack([col, row], axis=1), 0, cfg.max_coord)


def set_goal(state: EnvState, goal_index) -> EnvState:
    if state.done:
        raise UsageError("episode budget exhausted")
    if state.t != 0:
        raise UsageError("goals are assigned at the start of an episode")
    goal = unflatten_goal(state.cfg, goal_index)
    if goal.shape[0] != state.batch:
        goal = np.broadcast_to(goal, (state.batch, 2)).copy()
    mask = np.where(patch_mask(state.cfg, goal), 0.0, 1.0)
    return replace(state, goal=goal, goal_mask=mask)


def forced_axis(pose: np.ndarray, goal: np.ndarray, step: int) -> np.ndarray:
    """Per-agent protocol case: Forced.VERTICAL, Forced.HORIZONTAL or Forced.FREE."""
    pose, goal = np.atleast_2d(pose), np.atleast_2d(goal)
    col_aligned = np.abs(pose[:, 0] - goal[:, 0]) < step
    row_aligned = np.abs(pose[:, 1] - goal[:, 1]) < step
    return np.where(col_aligned, Forced.VERTICAL,
                    np.where(row_aligned, Forced.HORIZONTAL, Forced.FREE)).astype(np.int64)


def step(state: EnvState, axis) -> EnvState:
    """Move each agent ``cfg.step`` pixels toward its goal along ``axis`` and reveal."""
    cfg = state.cfg
    if state.done:
        raise UsageError(f"all {cfg.total_steps} steps already taken")
    if not state.goal_set:
        raise UsageError("step() before set_goal() in this episode")
    axis = np.broadcast_to(np.asarray(axis, dtype=np.int64), (state.batch,))
    forced = forced_axis(state.pose, state.goal, cfg.step)
    bad = (forced != Forced.FREE) & (forced != axis)
    if np.any(bad):
        raise UsageError(f"axis contradicts the forced protocol for agents {np.flatnonzero(bad).tolist()}")
    coord = np.where(axis == Axis.VERTICAL, 1, 0)  # vertical moves the row
    rows = np.arange(state.batch)
    delta = state.goal[rows, coord] - state.pose[rows, coord]
    move = np.where(np.abs(delta) >= cfg.step, np.sign(delta) * cfg.step, 0)
    pose = state.pose.copy()
    pose[rows, coord] = np.clip(pose[rows, coord] + move, 0, cfg.max_coord)
    revealed, history, position = _reveal(cfg, state.image, state.revealed, state.history_mask, pose)

    t, episode = state.t + 1, state.episode
    new = replace(state, pose=pose, revealed=revealed, history_mask=history, position_mask=position,
                  t=t, episode=episode)
    if t == cfg.horizon:
        new = replace(new, t=0, episode=episode + 1, goal=np.full_like(state.goal, -1),
                      last_goal_mask=state.goal_mask, goal_mask=np.ones_like(state.goal_mask),
                      episode_start=(revealed, position, history))
    return new


def goal_input(state: EnvState) -> np.ndarray:
    """u_g: concat(y, l, h at the end of the previous episode, g_l of the previous goal)."""
    y, l, h = state.episode_start
    return np.concatenate([y, l[:, None], h[:, None], state.last_goal_mask[:, None]], axis=1)


def action_input(state: EnvState) -> np.ndarray:
    """u_a: concat(current y, l, h, current episode's g_l)."""
    return np.concatenate([state.revealed, state.position_mask[:, None], state.history_mask[:, None],
                           state.goal_mask[:, None]], axis=1)


def planner_inputs(state: EnvState) -> tuple[np.ndarray, np.ndarray]:
    """(u_g, u_a), each (B, c + 3, n, n)."""
    return goal_input(state), action_input(state)
