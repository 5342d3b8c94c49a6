"""Central finite-difference checks for scalar functions of leaf tensors."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, backward, no_grad


@dataclass
class GradCheckResult:
    name: str
    coords: int
    max_rel_err: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tol


def check_gradients(fn: Callable[[], Tensor], leaves: Sequence[Tensor], *, n_coords: int = 100,
                    h: float = 1e-5, tol: float = 1e-4, rng: np.random.Generator | None = None,
                    name: str = "fn") -> GradCheckResult:
    """Compare backward() against (f(x+h) - f(x-h)) / 2h on sampled coordinates.

    The error metric is |fd - grad| / max(1, |grad|). When the leaves hold fewer
    than ``n_coords`` scalars every coordinate is checked (with repeats).
    """
    rng = rng or np.random.default_rng(0)
    for leaf in leaves:
        leaf.grad = None
    backward(fn())
    analytic = [np.zeros_like(l.data) if l.grad is None else l.grad.copy() for l in leaves]

    sizes = np.array([l.data.size for l in leaves])
    total = int(sizes.sum())
    if total >= n_coords:
        flat = rng.choice(total, size=n_coords, replace=False)
    else:
        flat = np.resize(np.arange(total), n_coords)
    bounds = np.cumsum(sizes)
    worst = 0.0
    with no_grad():
        for f in flat:
            li = int(np.searchsorted(bounds, f, side="right"))
            idx = np.unravel_index(f - (bounds[li - 1] if li else 0), leaves[li].shape)
            data = leaves[li].data
            orig = data[idx]
            data[idx] = orig + h
            up = float(fn().data)
            data[idx] = orig - h
            down = float(fn().data)
            data[idx] = orig
            fd = (up - down) / (2 * h)
            g = analytic[li][idx]
            worst = max(worst, abs(fd - g) / max(1.0, abs(g)))
    return GradCheckResult(name, len(flat), worst, tol)
