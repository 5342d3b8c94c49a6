"""Plain-file outputs: binary PGM snapshots, raw value dumps and CSV tables."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .env import EnvConfig, Forced

# image values occupy 0..IMAGE_MAX; the markers sit above it so they never collide
IMAGE_MAX = 200
POSE_LEVEL = 255
GOAL_LEVEL = 228


def to_gray(y: np.ndarray) -> np.ndarray:
    """Map values in [-0.5, 0.5] (channel mean if several) to uint8 0..IMAGE_MAX."""
    y = np.asarray(y, dtype=np.float64)
    if y.ndim == 3:
        y = y.mean(axis=0)
    return np.rint((np.clip(y, -0.5, 0.5) + 0.5) * IMAGE_MAX).astype(np.uint8)


def _outline(gray: np.ndarray, corner, m: int, level: int) -> None:
    col, row = int(corner[0]), int(corner[1])
    r1, c1 = row + m - 1, col + m - 1
    gray[row, col:c1 + 1] = level
    gray[r1, col:c1 + 1] = level
    gray[row:r1 + 1, col] = level
    gray[row:r1 + 1, c1] = level


def marked(y: np.ndarray, pose, goal, cfg: EnvConfig) -> np.ndarray:
    """Gray image with the goal patch and then the current patch outlined."""
    gray = to_gray(y)
    if goal is not None and np.all(np.asarray(goal) >= 0):
        _outline(gray, goal, cfg.m, GOAL_LEVEL)
    _outline(gray, pose, cfg.m, POSE_LEVEL)
    return gray


def write_pgm(path, gray: np.ndarray, scale: int = 1) -> None:
    gray = np.asarray(gray, dtype=np.uint8)
    if scale > 1:
        gray = np.kron(gray, np.ones((scale, scale), dtype=np.uint8))
    h, w = gray.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(gray.tobytes())


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    parts = raw.split(maxsplit=4)
    if parts[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    w, h, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    if maxval != 255:
        raise ValueError(f"{path}: only 8-bit PGM is supported")
    return np.frombuffer(parts[4][: w * h], dtype=np.uint8).reshape(h, w)


def write_raw(path, y: np.ndarray) -> None:
    """Exact values of y, one image row per CSV row (channels stacked vertically)."""
    y = np.asarray(y, dtype=np.float64).reshape(-1, np.shape(y)[-1])
    with open(path, "w", newline="") as fh:
        csv.writer(fh).writerows([[repr(float(v)) for v in row] for row in y])


def read_raw(path) -> np.ndarray:
    with open(path, newline="") as fh:
        return np.array([[float(v) for v in row] for row in csv.reader(fh)])


TRAJECTORY_FIELDS = ("e", "t", "pose_col", "pose_row", "goal_col", "goal_row", "axis", "forced",
                     "prev_col", "prev_row")


def write_trajectory(path, batch, index: int = 0) -> None:
    """One row per step of rollout ``index``.

    ``pose`` is the pose after step (e, t), matching the snapshot y(e, t);
    ``prev`` is the pose the step started from. ``forced`` is 1 when the
    protocol dictated the axis.
    """
    cfg = batch.cfg
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRAJECTORY_FIELDS)
        for e in range(cfg.episodes):
            for t in range(cfg.horizon):
                k = e * cfg.horizon + t
                before, after = batch.poses[k, index], batch.poses[k + 1, index]
                goal = batch.goal_coords[e, index]
                forced = int(batch.forced[e, t, index] != Forced.FREE)
                w.writerow([e, t, after[0], after[1], goal[0], goal[1], batch.axes[e, t, index], forced,
                            before[0], before[1]])


def write_prediction(path, probs: np.ndarray, label: int | None = None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("class", "probability", "is_label"))
        for k, p in enumerate(np.asarray(probs).ravel()):
            w.writerow((k, repr(float(p)), int(label == k)))


def write_table(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
