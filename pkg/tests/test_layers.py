import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from oracles import dense_loops, gap_loops, maxpool_loops, sepconv_loops
from tinysweep.errors import LengthTooShort, ShapeMismatch
from tinysweep.nn import layers as F
from tinysweep.nn.layers import (dense1d_forward, gap1d_forward, maxpool1d_forward,
                                 sepconv1d_forward, softmax)

SEEDS = range(100)
H = 1e-4
TOL = 1e-3


# -- forward examples ----------------------------------------------------------

def test_sepconv_manual_example():
    out = sepconv1d_forward(np.array([[1.0], [2.0], [3.0], [4.0]]), np.ones((1, 3)),
                            np.ones((1, 1)), np.zeros(1))
    assert out[:, 0].tolist() == [3.0, 6.0, 9.0, 7.0]


@given(st.integers(1, 20), st.integers(1, 4), st.integers(1, 4), st.integers(0, 2 ** 31))
def test_sepconv_zero_pointwise_annihilates(L, C, Fo, seed):
    rng = np.random.default_rng(seed)
    out = sepconv1d_forward(rng.standard_normal((L, C)), rng.standard_normal((C, 3)),
                            np.zeros((C, Fo)), np.zeros(Fo))
    assert np.all(out == 0)


def test_sepconv_shape_128x9():
    rng = np.random.default_rng(0)
    out = sepconv1d_forward(rng.standard_normal((128, 9)), rng.standard_normal((9, 3)),
                            rng.standard_normal((9, 32)), np.zeros(32), relu=True)
    assert out.shape == (128, 32)
    assert out.min() >= 0


@given(st.integers(1, 12), st.integers(1, 3), st.integers(1, 3), st.booleans(),
       st.integers(0, 2 ** 31))
def test_sepconv_matches_loops(L, C, Fo, relu, seed):
    rng = np.random.default_rng(seed)
    x, dw, pw, b = (rng.standard_normal(s) for s in ((L, C), (C, 3), (C, Fo), (Fo,)))
    assert np.allclose(sepconv1d_forward(x, dw, pw, b, relu), sepconv_loops(x, dw, pw, b, relu),
                       atol=1e-12)


def test_sepconv_shape_errors():
    with pytest.raises(ShapeMismatch):
        sepconv1d_forward(np.zeros((4, 2)), np.zeros((3, 3)), np.zeros((2, 1)), np.zeros(1))


def test_maxpool_examples():
    assert maxpool1d_forward(np.array([[1.0], [3.0], [2.0], [5.0]]))[:, 0].tolist() == [3, 5]
    assert maxpool1d_forward(np.array([[9.0], [1], [1], [1], [1]]))[:, 0].tolist() == [9, 1]
    assert maxpool1d_forward(np.zeros((187, 1))).shape == (93, 1)
    with pytest.raises(LengthTooShort):
        maxpool1d_forward(np.zeros((1, 3)))


@given(st.integers(2, 40), st.integers(1, 4), st.integers(0, 2 ** 31))
def test_maxpool_matches_loops(L, C, seed):
    x = np.random.default_rng(seed).standard_normal((L, C))
    assert np.array_equal(maxpool1d_forward(x), maxpool_loops(x))


def test_gap_examples():
    assert gap1d_forward(np.array([[1.0, 2.0], [3.0, 4.0]])).tolist() == [2.0, 3.0]
    assert np.all(gap1d_forward(np.full((7, 3), 2.5)) == 2.5)
    x = np.random.default_rng(1).standard_normal((16, 72))
    assert np.max(np.abs(gap1d_forward(x) - gap_loops(x))) <= 1e-12


def test_dense_examples():
    x = np.array([1.0, -2.0, 3.0])
    assert np.array_equal(dense1d_forward(x, np.eye(3), np.zeros(3)), x)
    assert np.allclose(dense1d_forward(np.zeros(3), np.eye(3), np.zeros(3), "softmax"), 1 / 3)


@given(st.integers(1, 6), st.integers(1, 6), st.sampled_from(["none", "relu", "softmax"]),
       st.integers(0, 2 ** 31))
def test_dense_matches_loops(N, M, act, seed):
    rng = np.random.default_rng(seed)
    x, w, b = rng.standard_normal(N), rng.standard_normal((N, M)), rng.standard_normal(M)
    assert np.allclose(dense1d_forward(x, w, b, act), dense_loops(x, w, b, act), atol=1e-12)


@given(arrays(np.float64, st.integers(1, 12), elements=st.floats(-1e3, 1e3)))
def test_softmax_is_simplex_point(z):
    p = softmax(z[None])[0]
    assert np.all(p >= 0)
    assert abs(p.sum() - 1.0) <= 1e-9


# -- gradient checks -------------------------------------------------------------

def fd_check(loss, tensors, grads, pattern=None):
    """Central differences on every element; kink-crossing elements skipped.

    Returns the number of elements compared.
    """
    base = pattern() if pattern else None
    n = 0
    for name, t in tensors.items():
        g = grads[name]
        for idx in np.ndindex(t.shape):
            old = t[idx]
            t[idx] = old + H
            lp, pp = loss(), pattern() if pattern else None
            t[idx] = old - H
            lm, pm = loss(), pattern() if pattern else None
            t[idx] = old
            if pattern and not (_same(pp, base) and _same(pm, base)):
                continue
            num = (lp - lm) / (2 * H)
            err = abs(num - g[idx]) / max(abs(num), abs(g[idx]), 1e-6)
            assert err < TOL, (name, idx, num, g[idx])
            n += 1
    return n


def _same(a, b):
    return all(np.array_equal(x, y) for x, y in zip(a, b))


def _shape(rng):
    return int(rng.integers(1, 3)), int(rng.integers(3, 9)), int(rng.integers(1, 4))


@pytest.mark.parametrize("relu", [False, True])
def test_sepconv_gradients(relu):
    total = 0
    for seed in SEEDS:
        rng = np.random.default_rng(seed)
        B, L, C = _shape(rng)
        Fo = int(rng.integers(1, 4))
        t = {"x": rng.standard_normal((B, L, C)), "dw": rng.standard_normal((C, 3)),
             "pw": rng.standard_normal((C, Fo)), "b": rng.standard_normal(Fo)}
        G = rng.standard_normal((B, L, Fo))

        def loss():
            return float(np.sum(F.sepconv_forward(t["x"], t["dw"], t["pw"], t["b"], relu)[0] * G))

        def pattern():
            return [F.sepconv_forward(t["x"], t["dw"], t["pw"], t["b"], relu)[1][1][2] > 0] \
                if relu else []

        _, cache = F.sepconv_forward(t["x"], t["dw"], t["pw"], t["b"], relu)
        gx, gdw, gpw, gb = F.sepconv_backward(G, cache)
        total += fd_check(loss, t, {"x": gx, "dw": gdw, "pw": gpw, "b": gb},
                          pattern if relu else None)
    assert total > 1000


def test_maxpool_gradients():
    for seed in SEEDS:
        rng = np.random.default_rng(seed)
        B, L, C = _shape(rng)
        t = {"x": rng.standard_normal((B, L, C))}
        G = rng.standard_normal((B, L // 2, C))
        _, cache = F.maxpool_forward(t["x"])

        def loss():
            return float(np.sum(F.maxpool_forward(t["x"])[0] * G))

        def pattern():
            return [F.maxpool_forward(t["x"])[1][1]]

        fd_check(loss, t, {"x": F.maxpool_backward(G, cache)}, pattern)


def test_gap_gradients():
    for seed in SEEDS:
        rng = np.random.default_rng(seed)
        B, L, C = _shape(rng)
        t = {"x": rng.standard_normal((B, L, C))}
        G = rng.standard_normal((B, C))
        out, shape = F.gap_forward(t["x"])
        fd_check(lambda: float(np.sum(F.gap_forward(t["x"])[0] * G)), t,
                 {"x": F.gap_backward(G, shape)})


@pytest.mark.parametrize("act", ["none", "relu"])
def test_dense_gradients(act):
    for seed in SEEDS:
        rng = np.random.default_rng(seed)
        B, N, M = int(rng.integers(1, 4)), int(rng.integers(1, 6)), int(rng.integers(1, 6))
        t = {"x": rng.standard_normal((B, N)), "w": rng.standard_normal((N, M)),
             "b": rng.standard_normal(M)}
        G = rng.standard_normal((B, M))
        _, cache = F.dense_forward(t["x"], t["w"], t["b"], act)
        gx, gw, gb = F.dense_backward(G, cache)

        def pattern():
            return [F.dense_forward(t["x"], t["w"], t["b"], act)[1][2] > 0] if act == "relu" else []

        fd_check(lambda: float(np.sum(F.dense_forward(t["x"], t["w"], t["b"], act)[0] * G)),
                 t, {"x": gx, "w": gw, "b": gb}, pattern)


def test_dropout_gradients():
    for seed in SEEDS:
        rng = np.random.default_rng(seed)
        t = {"x": rng.standard_normal((3, 5))}
        G = rng.standard_normal((3, 5))

        def loss():
            return float(np.sum(F.dropout_forward(t["x"], 0.25, np.random.default_rng(seed))[0] * G))

        _, mask = F.dropout_forward(t["x"], 0.25, np.random.default_rng(seed))
        fd_check(loss, t, {"x": F.dropout_backward(G, mask)})


def test_softmax_cross_entropy_gradients():
    for seed in SEEDS:
        rng = np.random.default_rng(seed)
        B, K = int(rng.integers(1, 5)), int(rng.integers(2, 7))
        t = {"z": rng.standard_normal((B, K)) * 3}
        y = rng.integers(0, K, B)
        _, g = F.cross_entropy(softmax(t["z"]), y)
        fd_check(lambda: F.cross_entropy(softmax(t["z"]), y)[0], t, {"z": g})


def test_dropout_scales_kept_units():
    x = np.ones((200, 50))
    out, mask = F.dropout_forward(x, 0.25, np.random.default_rng(0))
    assert set(np.unique(out)) <= {0.0, 1 / 0.75}
    assert abs(np.mean(out) - 1.0) < 0.05
