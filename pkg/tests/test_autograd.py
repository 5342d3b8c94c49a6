import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from glimpse import autograd as ag
from glimpse.autograd import Tensor, backward


def naive_conv(x, w, b, pad, stride=1):
    c_in, n_h, n_w = x.shape
    c_out, _, k, _ = w.shape
    xp = np.zeros((c_in, n_h + 2 * pad, n_w + 2 * pad))
    xp[:, pad:pad + n_h, pad:pad + n_w] = x
    h_out = (n_h + 2 * pad - k) // stride + 1
    w_out = (n_w + 2 * pad - k) // stride + 1
    out = np.zeros((c_out, h_out, w_out))
    for o in range(c_out):
        for i in range(h_out):
            for j in range(w_out):
                acc = b[o]
                for c in range(c_in):
                    for di in range(k):
                        for dj in range(k):
                            acc += xp[c, i * stride + di, j * stride + dj] * w[o, c, di, dj]
                out[o, i, j] = acc
    return out


# conv2d --------------------------------------------------------------------

def test_conv_identity_kernel():
    x = np.random.default_rng(0).normal(size=(1, 5, 5))
    out = ag.conv2d(Tensor(x), Tensor(np.ones((1, 1, 1, 1))), Tensor(np.zeros(1)), padding=0)
    np.testing.assert_array_equal(out.data, x)


def test_conv_zero_input_gives_bias():
    b = np.array([0.3, -1.2])
    w = np.random.default_rng(1).normal(size=(2, 3, 3, 3))
    out = ag.conv2d(Tensor(np.zeros((3, 6, 6))), Tensor(w), Tensor(b), padding=1)
    assert np.all(out.data[0] == 0.3) and np.all(out.data[1] == -1.2)


def test_conv_matches_naive_oracle():
    rng = np.random.default_rng(2)
    x, w, b = rng.normal(size=(1, 4, 4)), rng.normal(size=(2, 1, 3, 3)), rng.normal(size=2)
    out = ag.conv2d(Tensor(x), Tensor(w), Tensor(b), padding=1)
    assert out.shape == (2, 4, 4)
    np.testing.assert_allclose(out.data, naive_conv(x, w, b, 1), rtol=0, atol=1e-12)


@pytest.mark.parametrize("pad,stride,k", [(0, 1, 3), (1, 2, 3), (2, 1, 5), (1, 2, 3)])
def test_conv_batched_and_strided_match_oracle(pad, stride, k):
    rng = np.random.default_rng(3)
    x, w, b = rng.normal(size=(3, 2, 7, 7)), rng.normal(size=(4, 2, k, k)), rng.normal(size=4)
    out = ag.conv2d(Tensor(x), Tensor(w), Tensor(b), padding=pad, stride=stride)
    for i in range(3):
        np.testing.assert_allclose(out.data[i], naive_conv(x[i], w, b, pad, stride), atol=1e-12)


def test_conv_channel_mismatch():
    with pytest.raises(ag.ConfigurationError):
        ag.conv2d(Tensor(np.zeros((2, 4, 4))), Tensor(np.zeros((1, 3, 3, 3))), padding=1)


# concat / pooling ------------------------------------------------------------

def test_concat_channels():
    a, b = Tensor(np.ones((1, 2, 2)), True), Tensor(2 * np.ones((1, 2, 2)), True)
    out = ag.concat_channels([a, b])
    np.testing.assert_array_equal(out.data[0], a.data[0])
    np.testing.assert_array_equal(out.data[1], b.data[0])
    assert ag.concat_channels([a]) is a
    backward(out.sum())
    np.testing.assert_array_equal(a.grad, np.ones((1, 2, 2)))
    np.testing.assert_array_equal(b.grad, np.ones((1, 2, 2)))


def test_concat_spatial_mismatch():
    with pytest.raises(ag.ConfigurationError):
        ag.concat_channels([Tensor(np.zeros((1, 2, 2))), Tensor(np.zeros((1, 3, 2)))])


def test_global_avg_pool():
    x = Tensor(np.array([[[1.0, 3.0], [5.0, 7.0]], [[2.5, 2.5], [2.5, 2.5]]]), True)
    out = ag.global_avg_pool(x)
    np.testing.assert_array_equal(out.data, [4.0, 2.5])
    backward(out[0])
    np.testing.assert_array_equal(x.grad[0], np.full((2, 2), 0.25))
    np.testing.assert_array_equal(x.grad[1], np.zeros((2, 2)))


# softmax / cross-entropy -------------------------------------------------------

def test_softmax_uniform_and_shift():
    out = ag.softmax(Tensor(np.full(7, 3.3)))
    np.testing.assert_allclose(out.data, np.full(7, 1 / 7), atol=1e-15)
    x = np.random.default_rng(4).normal(size=6)
    np.testing.assert_allclose(ag.softmax(Tensor(x + 11.0)).data, ag.softmax(Tensor(x)).data, atol=1e-15)


def test_softmax_matches_extended_precision_oracle():
    x = np.random.default_rng(5).normal(size=5) * 3
    mpmath.mp.dps = 50
    exps = [mpmath.e ** mpmath.mpf(float(v)) for v in x]
    total = mpmath.fsum(exps)
    oracle = np.array([float(e / total) for e in exps])
    np.testing.assert_allclose(ag.softmax(Tensor(x)).data, oracle, rtol=0, atol=1e-12)


def test_softmax2d_sums_over_whole_map():
    x = np.random.default_rng(6).normal(size=(2, 4, 4))
    out = ag.softmax2d(Tensor(x)).data
    np.testing.assert_allclose(out.sum(axis=(-2, -1)), [1.0, 1.0], atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.integers(2, 12), elements=st.floats(-50, 50)), st.floats(-100, 100))
def test_softmax_properties(x, shift):
    s = ag.softmax(Tensor(x)).data
    assert np.all(s > 0)
    assert abs(s.sum() - 1.0) < 1e-12
    shifted = ag.softmax(Tensor(x + shift)).data
    assert np.argmax(shifted) == np.argmax(s)


def test_cross_entropy_examples():
    label = np.eye(10)[3]
    assert ag.cross_entropy(Tensor(label), label).item() == 0.0
    assert ag.cross_entropy(Tensor(np.full(10, 0.1)), label).item() == pytest.approx(math.log(10), abs=1e-14)


def test_cross_entropy_matches_direct_sum():
    rng = np.random.default_rng(7)
    pred = rng.dirichlet(np.ones(6))
    label = rng.dirichlet(np.ones(6))
    direct = -sum(label[j] * math.log(pred[j]) for j in range(6))
    assert ag.cross_entropy(Tensor(pred), label).item() == pytest.approx(direct, abs=1e-12)


def test_cross_entropy_clamps_zero_probability():
    val = ag.cross_entropy(Tensor(np.array([0.0, 1.0])), np.array([1.0, 0.0])).item()
    assert val == pytest.approx(-math.log(1e-12))


# detach / backward -----------------------------------------------------------

def test_detach_blocks_gradient():
    theta = Tensor(np.array([0.7, -1.3]), True)
    f = ag.mul(theta, theta)
    d = ag.detach(f)
    np.testing.assert_array_equal(d.data, f.data)
    backward(ag.sum(ag.mul(d, d)))
    assert theta.grad is None


def test_detach_product_rule():
    theta = Tensor(np.array([0.7, -1.3, 2.0]), True)
    f = ag.exp(theta)
    g = ag.mul(theta, theta)
    backward(ag.sum(ag.mul(ag.detach(f), g)))
    np.testing.assert_allclose(theta.grad, np.exp(theta.data) * 2 * theta.data)


def test_backward_simple_roots():
    leaf = Tensor(np.arange(5.0), True)
    backward(leaf.sum())
    np.testing.assert_array_equal(leaf.grad, np.ones(5))
    leaf.zero_grad()
    backward(ag.sum(ag.mul(leaf, leaf)))
    np.testing.assert_array_equal(leaf.grad, 2 * leaf.data)


def test_backward_needs_scalar():
    leaf = Tensor(np.ones(3), True)
    with pytest.raises(ag.UsageError):
        backward(ag.mul(leaf, leaf))


def test_graph_is_topological_and_visited_once():
    a = Tensor(np.ones(3), True)
    b = ag.mul(a, a)
    c = ag.add(b, b)
    root = ag.sum(ag.mul(c, b))
    graph = ag.Graph.from_root(root)
    position = {n.node_id: i for i, n in enumerate(graph.nodes)}
    for rec in graph.records:
        assert all(position[i] < position[rec.output] for i in rec.inputs)
    outputs = [r.output for r in graph.records]
    assert len(outputs) == len(set(outputs))
    backward(root)
    np.testing.assert_allclose(a.grad, np.full(3, 8.0))  # root = sum(2 a^4)


def test_no_grad_builds_nothing():
    a = Tensor(np.ones(3), True)
    with ag.no_grad():
        out = ag.mul(a, a)
    assert not out.requires_grad and out.is_leaf


def test_index_repeated_indices_accumulate():
    a = Tensor(np.arange(4.0), True)
    backward(ag.sum(ag.index(a, np.array([1, 1, 3]))))
    np.testing.assert_array_equal(a.grad, [0, 2, 0, 1])


def test_segment_sum():
    a = Tensor(np.array([1.0, 2.0, 3.0, 4.0]), True)
    out = ag.segment_sum(a, np.array([0, 2, 0, 2]), 3)
    np.testing.assert_array_equal(out.data, [4.0, 0.0, 6.0])
    backward(ag.sum(ag.mul(out, Tensor([1.0, 5.0, 7.0]))))
    np.testing.assert_array_equal(a.grad, [1.0, 7.0, 1.0, 7.0])


# finite differences ------------------------------------------------------------

def _leaf(rng, *shape, scale=1.0):
    return Tensor(rng.normal(size=shape) * scale, True)


def fd_cases():
    """(name, builder) pairs; builder(rng) -> (fn, leaves). Shared with the acceptance suite."""
    from glimpse.autograd.opcases import OP_CASES
    return OP_CASES


@pytest.mark.parametrize("case", fd_cases(), ids=lambda c: c[0])
def test_finite_differences(case):
    name, build = case
    fn, leaves = build(np.random.default_rng(11))
    res = ag.check_gradients(fn, leaves, n_coords=100, rng=np.random.default_rng(12), name=name)
    assert res.passed, f"{name}: {res.max_rel_err:.3e}"


def test_checkpoint_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(13)
    tensors = {"a": rng.normal(size=(2, 3, 3, 3)), "b": rng.normal(size=(7,)), "s": np.array(np.pi)}
    ag.save_checkpoint(tmp_path / "c.ckpt", tensors, {"note": "x"})
    back, meta = ag.load_checkpoint(tmp_path / "c.ckpt")
    assert meta == {"note": "x"}
    for k, v in tensors.items():
        assert back[k].shape == v.shape
        assert back[k].tobytes() == v.tobytes()


def test_checkpoint_truncated(tmp_path):
    ag.save_checkpoint(tmp_path / "c.ckpt", {"a": np.ones(100)})
    raw = (tmp_path / "c.ckpt").read_bytes()
    (tmp_path / "t.ckpt").write_bytes(raw[:-8])
    with pytest.raises(ag.CheckpointError):
        ag.load_checkpoint(tmp_path / "t.ckpt")
    (tmp_path / "m.ckpt").write_bytes(b"NOTACKPT" + raw[8:])
    with pytest.raises(ag.CheckpointError):
        ag.load_checkpoint(tmp_path / "m.ckpt")
