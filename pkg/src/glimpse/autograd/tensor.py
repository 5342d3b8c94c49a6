"""Dense float64 tensors with tape-free reverse-mode differentiation.

Every op returns a new :class:`Tensor` that remembers its parents and a
closure mapping the output gradient to parent gradients. :func:`backward`
orders the reachable nodes topologically (the :class:`Graph`) and walks the
records once in reverse.
"""

from __future__ import annotations

import contextlib
import itertools
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np

_ids = itertools.count()
_grad_enabled = True


class ConfigurationError(ValueError):
    """Shapes or settings that cannot be combined."""


class UsageError(RuntimeError):
    """An API was called in a state where it is not allowed."""


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph construction inside the block (rollouts, evaluation)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def is_grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "parents", "backward_fn", "op", "node_id")

    def __init__(self, data, requires_grad: bool = False, *, parents: tuple = (),
                 backward_fn: Callable | None = None, op: str = "leaf"):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.parents: tuple[Tensor, ...] = parents
        self.backward_fn = backward_fn
        self.op = op
        self.node_id = next(_ids)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def is_leaf(self) -> bool:
        return not self.parents

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self.op}{flag})"

    # Operator sugar; the ops themselves live in functional.py.
    def __add__(self, other):
        from . import functional as F
        return F.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import functional as F
        return F.sub(self, other)

    def __rsub__(self, other):
        from . import functional as F
        return F.sub(other, self)

    def __mul__(self, other):
        from . import functional as F
        return F.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from . import functional as F
        return F.scale(self, -1.0)

    def __getitem__(self, key):
        from . import functional as F
        return F.index(self, key)

    def sum(self, axis=None):
        from . import functional as F
        return F.sum(self, axis)

    def mean(self, axis=None):
        from . import functional as F
        return F.mean(self, axis)

    def reshape(self, *shape):
        from . import functional as F
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return F.reshape(self, shape)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def make_node(data: np.ndarray, parents: Sequence[Tensor], backward_fn: Callable, op: str) -> Tensor:
    """Wrap an op result; records parents only when some parent needs a gradient."""
    if _grad_enabled and any(p.requires_grad for p in parents):
        return Tensor(data, True, parents=tuple(parents), backward_fn=backward_fn, op=op)
    return Tensor(data, op=op)


@dataclass
class OpRecord:
    op: str
    inputs: tuple[int, ...]
    output: int


@dataclass
class Graph:
    """Topologically ordered op records reachable from a root."""

    records: list[OpRecord] = field(default_factory=list)
    nodes: list[Tensor] = field(default_factory=list)

    @classmethod
    def from_root(cls, root: Tensor) -> "Graph":
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if node.node_id in seen:
                continue
            seen.add(node.node_id)
            stack.append((node, True))
            for p in node.parents:
                if p.requires_grad and p.node_id not in seen:
                    stack.append((p, False))
        records = [OpRecord(n.op, tuple(p.node_id for p in n.parents), n.node_id)
                   for n in order if n.parents]
        return cls(records, order)


def backward(root: Tensor, grad: np.ndarray | float | None = None, retain_graph: bool = False) -> Graph:
    """Accumulate d(root)/d(leaf) into ``leaf.grad`` for every tracked leaf.

    ``root`` must be a scalar unless an explicit seed ``grad`` is given.
    """
    if grad is None:
        if root.data.size != 1:
            raise UsageError(f"backward() needs a scalar root, got shape {root.shape}")
        grad = np.ones_like(root.data)
    graph = Graph.from_root(root)
    if not root.requires_grad:
        return graph
    grads: dict[int, np.ndarray] = {root.node_id: np.asarray(grad, dtype=np.float64)}
    for node in reversed(graph.nodes):
        g = grads.pop(node.node_id, None)
        if g is None:
            continue
        if not node.parents:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        parent_grads = node.backward_fn(g)
        for p, pg in zip(node.parents, parent_grads):
            if pg is None or not p.requires_grad:
                continue
            if p.node_id in grads:
                grads[p.node_id] = grads[p.node_id] + pg
            else:
                grads[p.node_id] = pg
        if not retain_graph:
            node.parents = ()
            node.backward_fn = None
            node.requires_grad = False
    return graph
