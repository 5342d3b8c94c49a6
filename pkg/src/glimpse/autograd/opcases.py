"""Finite-difference cases, one per differentiable op.

Each builder takes a Generator and returns ``(fn, leaves)`` where ``fn()``
rebuilds a scalar from the leaves. Outputs are contracted against a fixed
random weight so no gradient entry is trivially constant.
"""

from __future__ import annotations

import numpy as np

from . import functional as F
from .tensor import Tensor


def _leaf(rng, *shape, scale=1.0, offset=0.0):
    return Tensor(rng.normal(size=shape) * scale + offset, True)


def _contract(out: Tensor, rng) -> callable:
    w = Tensor(rng.normal(size=out.shape))
    return lambda o: F.sum(F.mul(o, w))


def _case(op_fn, *leaves):
    def build(rng):
        ls = [l(rng) for l in leaves]
        probe = op_fn(*ls)
        contract = _contract(probe, rng)
        return (lambda: contract(op_fn(*ls))), ls
    return build


def _conv_case(rng):
    x, w, b = _leaf(rng, 2, 6, 6), _leaf(rng, 3, 2, 3, 3, scale=0.5), _leaf(rng, 3)
    contract = _contract(F.conv2d(x, w, b, padding=1), rng)
    return (lambda: contract(F.conv2d(x, w, b, padding=1))), [x, w, b]


def _conv_strided_case(rng):
    x, w, b = _leaf(rng, 2, 2, 7, 7), _leaf(rng, 3, 2, 3, 3, scale=0.5), _leaf(rng, 3)
    contract = _contract(F.conv2d(x, w, b, padding=1, stride=2), rng)
    return (lambda: contract(F.conv2d(x, w, b, padding=1, stride=2))), [x, w, b]


def _concat_case(rng):
    a, b = _leaf(rng, 2, 4, 4), _leaf(rng, 3, 4, 4)
    contract = _contract(F.concat_channels([a, b]), rng)
    return (lambda: contract(F.concat_channels([a, b]))), [a, b]


def _cross_entropy_case(rng):
    logits = _leaf(rng, 3, 10)
    label = np.eye(10)[rng.integers(0, 10, size=3)]
    return (lambda: F.sum(F.cross_entropy(F.softmax(logits), label))), [logits]


def _index_case(rng):
    a = _leaf(rng, 4, 9)
    rows, cols = np.arange(4), rng.integers(0, 9, size=4)
    contract = _contract(F.index(a, (rows, cols)), rng)
    return (lambda: contract(F.index(a, (rows, cols)))), [a]


def _segment_case(rng):
    a = _leaf(rng, 12)
    ids = rng.integers(0, 4, size=12)
    contract = _contract(F.segment_sum(a, ids, 4), rng)
    return (lambda: contract(F.segment_sum(a, ids, 4))), [a]


def _composite_case(rng):
    # a miniature planner head: conv -> relu -> concat skip -> conv -> softmax2d -> log pick
    x = Tensor(rng.normal(size=(2, 5, 5)))
    w1, b1 = _leaf(rng, 3, 2, 3, 3, scale=0.4), _leaf(rng, 3, scale=0.1)
    w2, b2 = _leaf(rng, 1, 5, 3, 3, scale=0.4), _leaf(rng, 1, scale=0.1)

    def fn():
        h = F.relu(F.conv2d(x, w1, b1, padding=1))
        z = F.conv2d(F.concat_channels([x, h]), w2, b2, padding=1)
        p = F.softmax2d(z)
        return F.add(F.log(F.index(p, (0, 2, 3))), F.mean(F.global_avg_pool(z)))

    return fn, [w1, b1, w2, b2]


OP_CASES = [
    ("conv2d", _conv_case),
    ("conv2d_stride2_batched", _conv_strided_case),
    ("concat_channels", _concat_case),
    ("global_avg_pool", _case(F.global_avg_pool, lambda r: _leaf(r, 3, 5, 5))),
    ("softmax", _case(F.softmax, lambda r: _leaf(r, 4, 6))),
    ("softmax2d", _case(F.softmax2d, lambda r: _leaf(r, 2, 5, 5))),
    ("cross_entropy", _cross_entropy_case),
    ("add", _case(F.add, lambda r: _leaf(r, 4, 5), lambda r: _leaf(r, 5))),
    ("sub", _case(F.sub, lambda r: _leaf(r, 4, 5), lambda r: _leaf(r, 4, 1))),
    ("mul", _case(F.mul, lambda r: _leaf(r, 4, 5), lambda r: _leaf(r, 4, 5))),
    ("scale", _case(lambda a: F.scale(a, -2.5), lambda r: _leaf(r, 20))),
    ("log", _case(F.log, lambda r: Tensor(r.uniform(0.2, 3.0, size=(20,)), True))),
    ("exp", _case(F.exp, lambda r: _leaf(r, 20))),
    ("relu", _case(F.relu, lambda r: Tensor(np.sign(r.normal(size=30)) * r.uniform(0.01, 2, size=30), True))),
    ("bias_add", _case(lambda a, b: F.add(a, F.reshape(b, (3, 1, 1))),
                       lambda r: _leaf(r, 3, 4, 4), lambda r: _leaf(r, 3))),
    ("batch_mean", _case(lambda a: F.mean(a, axis=0), lambda r: _leaf(r, 6, 5))),
    ("sum", _case(lambda a: F.sum(a, axis=1), lambda r: _leaf(r, 6, 5))),
    ("reshape", _case(lambda a: F.reshape(a, (5, 6)), lambda r: _leaf(r, 30))),
    ("index", _index_case),
    ("segment_sum", _segment_case),
    ("composite_planner", _composite_case),
]
