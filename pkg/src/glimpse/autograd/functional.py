"""Differentiable primitives.

Image ops accept a single ``(C, H, W)`` image or a batch ``(B, C, H, W)``;
vector ops work over the last axis so a leading batch axis is free.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .tensor import ConfigurationError, Tensor, as_tensor, make_node

LOG_EPS = 1e-12


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


# elementwise ---------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return make_node(a.data + b.data, (a, b),
                     lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return make_node(a.data - b.data, (a, b),
                     lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)), "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return make_node(a.data * b.data, (a, b),
                     lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
                     "mul")


def scale(a: Tensor, s: float) -> Tensor:
    return make_node(a.data * s, (a,), lambda g: (g * s,), "scale")


def log(a: Tensor, eps: float = LOG_EPS) -> Tensor:
    """Natural log with the argument clamped from below at ``eps``."""
    clipped = a.data < eps
    safe = np.where(clipped, eps, a.data)
    return make_node(np.log(safe), (a,), lambda g: (np.where(clipped, 0.0, g / safe),), "log")


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return make_node(out, (a,), lambda g: (g * out,), "exp")


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return make_node(a.data * mask, (a,), lambda g: (g * mask,), "relu")


def detach(a: Tensor) -> Tensor:
    """Same values, cut from the graph."""
    return Tensor(a.data.copy(), op="detach")


# shape / reduction ---------------------------------------------------------

def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    return make_node(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),), "reshape")


def sum(a: Tensor, axis=None) -> Tensor:  # noqa: A001 - mirrors numpy
    out = a.data.sum(axis=axis)

    def bwd(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return make_node(out, (a,), bwd, "sum")


def mean(a: Tensor, axis=None) -> Tensor:
    count = a.data.size if axis is None else int(np.prod([a.shape[ax] for ax in np.atleast_1d(axis)]))
    return scale(sum(a, axis), 1.0 / count)


def index(a: Tensor, key) -> Tensor:
    """``a[key]`` with a scatter-add backward (handles repeated indices)."""

    def bwd(g):
        full = np.zeros_like(a.data)
        np.add.at(full, key, g)
        return (full,)

    return make_node(np.asarray(a.data[key]), (a,), bwd, "index")


def segment_sum(a: Tensor, segment_ids: np.ndarray, num_segments: int) -> Tensor:
    """out[s] = sum of a[i] over i with segment_ids[i] == s, for 1-D ``a``."""
    segment_ids = np.asarray(segment_ids, dtype=np.intp)
    out = np.zeros(num_segments)
    np.add.at(out, segment_ids, a.data)
    return make_node(out, (a,), lambda g: (g[segment_ids],), "segment_sum")


def concat_channels(inputs: Sequence[Tensor]) -> Tensor:
    """Stack along the channel axis (third from last)."""
    inputs = [as_tensor(t) for t in inputs]
    if not inputs:
        raise ConfigurationError("concat_channels needs at least one input")
    ref = inputs[0].shape
    for t in inputs[1:]:
        if t.ndim != len(ref) or t.shape[:-3] != ref[:-3] or t.shape[-2:] != ref[-2:]:
            raise ConfigurationError(f"cannot concat shapes {ref} and {t.shape}")
    if len(inputs) == 1:
        return inputs[0]
    sizes = np.cumsum([t.shape[-3] for t in inputs])[:-1]
    out = np.concatenate([t.data for t in inputs], axis=-3)
    return make_node(out, inputs, lambda g: tuple(np.split(g, sizes, axis=-3)), "concat")


def global_avg_pool(a: Tensor) -> Tensor:
    """Mean over the two spatial axes: (..., C, H, W) -> (..., C)."""
    if a.ndim < 3 or a.shape[-1] < 1 or a.shape[-2] < 1:
        raise ConfigurationError(f"global_avg_pool expects (..., C, H, W), got {a.shape}")
    hw = a.shape[-1] * a.shape[-2]

    def bwd(g):
        return (np.broadcast_to(g[..., None, None] / hw, a.shape).copy(),)

    return make_node(a.data.mean(axis=(-2, -1)), (a,), bwd, "gap")


# probability ---------------------------------------------------------------

def softmax(a: Tensor, axis=-1) -> Tensor:
    """Softmax over ``axis`` (an int or a tuple of axes), max-shifted."""
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)

    def bwd(g):
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)

    return make_node(s, (a,), bwd, "softmax")


def softmax2d(a: Tensor) -> Tensor:
    """Softmax jointly over all n x n entries of the trailing two axes."""
    return softmax(a, axis=(-2, -1))


def cross_entropy(pred: Tensor, label) -> Tensor:
    """-sum_j label[j] * log(pred[j]) over the last axis; pred clamped at 1e-12."""
    label = as_tensor(label)
    if pred.shape != label.shape:
        raise ConfigurationError(f"pred {pred.shape} and label {label.shape} differ")
    return scale(sum(mul(label, log(pred)), axis=-1), -1.0)


# convolution ---------------------------------------------------------------

def conv2d(x: Tensor, kernel: Tensor, bias: Tensor | None = None, padding: int = 0, stride: int = 1) -> Tensor:
    """2-D cross-correlation with zero padding.

    x: (C_in, H, W) or (B, C_in, H, W); kernel: (C_out, C_in, k, k); bias: (C_out,).
    """
    single = x.ndim == 3
    xd = x.data[None] if single else x.data
    if xd.ndim != 4 or kernel.ndim != 4:
        raise ConfigurationError(f"conv2d expects (B, C, H, W) input and 4-D kernel, got {x.shape}, {kernel.shape}")
    c_out, c_in, kh, kw = kernel.shape
    if xd.shape[1] != c_in:
        raise ConfigurationError(f"kernel expects {c_in} input channels, input has {xd.shape[1]}")
    if kh != kw:
        raise ConfigurationError("only square kernels are supported")
    if bias is not None and bias.shape != (c_out,):
        raise ConfigurationError(f"bias shape {bias.shape} does not match {c_out} output channels")
    k = kh
    p = padding
    xp = np.pad(xd, ((0, 0), (0, 0), (p, p), (p, p))) if p else xd
    h_out = (xp.shape[2] - k) // stride + 1
    w_out = (xp.shape[3] - k) // stride + 1
    if h_out < 1 or w_out < 1:
        raise ConfigurationError(f"kernel {k} too large for input {xd.shape[2:]} with padding {p}")

    b = xd.shape[0]
    hs, ws = stride * (h_out - 1) + 1, stride * (w_out - 1) + 1

    def im2col():
        # (C_in, k, k, B, Ho, Wo): each offset is one strided block copy
        cols = np.empty((c_in, k, k, b, h_out, w_out))
        xt = xp.transpose(1, 0, 2, 3)
        for i in range(k):
            for j in range(k):
                cols[:, i, j] = xt[:, :, i : i + hs : stride, j : j + ws : stride]
        return cols.reshape(c_in * k * k, b * h_out * w_out)

    w2 = kernel.data.reshape(c_out, -1)
    out = (w2 @ im2col()).reshape(c_out, b, h_out, w_out).transpose(1, 0, 2, 3)
    if bias is not None:
        out = out + bias.data[None, :, None, None]
    out = np.ascontiguousarray(out)
    if single:
        out = out[0]

    def bwd(g):
        gb = g[None] if single else g
        g2 = gb.transpose(1, 0, 2, 3).reshape(c_out, -1)
        gx = gw = gbias = None
        if x.requires_grad:
            dcols = (w2.T @ g2).reshape(c_in, k, k, b, h_out, w_out)
            gxp = np.zeros((c_in, b) + xp.shape[2:])
            for i in range(k):
                for j in range(k):
                    gxp[:, :, i : i + hs : stride, j : j + ws : stride] += dcols[:, i, j]
            gxp = gxp.transpose(1, 0, 2, 3)
            gx = gxp[:, :, p : p + xd.shape[2], p : p + xd.shape[3]] if p else gxp
            gx = np.ascontiguousarray(gx)
            if single:
                gx = gx[0]
        if kernel.requires_grad:
            gw = (g2 @ im2col().T).reshape(kernel.shape)
        if bias is not None and bias.requires_grad:
            gbias = gb.sum(axis=(0, 2, 3))
        return (gx, gw, gbias) if bias is not None else (gx, gw)

    parents = (x, kernel, bias) if bias is not None else (x, kernel)
    return make_node(out, parents, bwd, "conv2d")
