"""Batched forward/backward kernels for the separable-CNN layer set.

Activations are ``(batch, length, channels)`` or ``(batch, features)``.
Each ``*_forward`` returns ``(out, cache)``; the matching ``*_backward``
takes the upstream gradient and the cache.
"""
import numpy as np

from ..errors import LengthTooShort, ShapeMismatch


def _pad_same(x, k):
    left = (k - 1) // 2
    return np.pad(x, ((0, 0), (left, k - 1 - left), (0, 0)))


def depthwise_forward(x, dw):
    """Per-channel 1D cross-correlation, stride 1, same padding. dw: (C, K)."""
    B, L, C = x.shape
    if dw.shape[0] != C:
        raise ShapeMismatch(f"depthwise kernel has {dw.shape[0]} channels, input has {C}")
    K = dw.shape[1]
    xp = _pad_same(x, K)
    out = np.zeros((B, L, C), dtype=np.result_type(x, dw))
    for k in range(K):
        out += xp[:, k:k + L, :] * dw[:, k]
    return out, (xp, dw)


def depthwise_backward(g, cache):
    xp, dw = cache
    L = g.shape[1]
    K = dw.shape[1]
    gxp = np.zeros_like(xp, dtype=g.dtype)
    gdw = np.empty(dw.shape, dtype=g.dtype)
    for k in range(K):
        gdw[:, k] = np.einsum("blc,blc->c", xp[:, k:k + L, :], g)
        gxp[:, k:k + L, :] += g * dw[:, k]
    left = (K - 1) // 2
    return gxp[:, left:left + L, :], gdw


def pointwise_forward(x, pw, b, relu):
    if pw.shape[0] != x.shape[-1] or b.shape != (pw.shape[1],):
        raise ShapeMismatch(f"pointwise kernel {pw.shape} / bias {b.shape} vs input {x.shape}")
    z = x @ pw + b
    out = np.maximum(z, 0.0) if relu else z
    return out, (x, pw, z if relu else None)


def pointwise_backward(g, cache):
    x, pw, z = cache
    if z is not None:
        g = g * (z > 0)
    gx = g @ pw.T
    axes = tuple(range(g.ndim - 1))
    gpw = np.tensordot(x, g, axes=(axes, axes))
    gb = g.sum(axis=axes)
    return gx, gpw, gb


def sepconv_forward(x, dw, pw, b, relu=True):
    d, c1 = depthwise_forward(x, dw)
    out, c2 = pointwise_forward(d, pw, b, relu)
    return out, (c1, c2)


def sepconv_backward(g, cache):
    c1, c2 = cache
    gd, gpw, gb = pointwise_backward(g, c2)
    gx, gdw = depthwise_backward(gd, c1)
    return gx, gdw, gpw, gb


def maxpool_forward(x, size=2, stride=2):
    B, L, C = x.shape
    if L < size:
        raise LengthTooShort(f"max pool of size {size} on length {L}")
    n = (L - size) // stride + 1
    if size == stride:
        win = x[:, :n * size, :].reshape(B, n, size, C)
    else:
        win = np.stack([x[:, i * stride:i * stride + size, :] for i in range(n)], axis=1)
    arg = win.argmax(axis=2)
    out = np.take_along_axis(win, arg[:, :, None, :], axis=2)[:, :, 0, :]
    return out, (x.shape, arg, size, stride)


def maxpool_backward(g, cache):
    shape, arg, size, stride = cache
    gx = np.zeros(shape, dtype=g.dtype)
    B, n, C = g.shape
    src = np.arange(n)[None, :, None] * stride + arg
    bi = np.arange(B)[:, None, None]
    ci = np.arange(C)[None, None, :]
    np.add.at(gx, (bi, src, ci), g)
    return gx


def gap_forward(x):
    if x.shape[1] < 1:
        raise LengthTooShort("global average pool on empty sequence")
    return x.mean(axis=1), x.shape


def gap_backward(g, shape):
    return np.broadcast_to(g[:, None, :] / shape[1], shape).copy()


def dense_forward(x, w, b, activation="none"):
    if w.shape[0] != x.shape[-1] or b.shape != (w.shape[1],):
        raise ShapeMismatch(f"dense kernel {w.shape} / bias {b.shape} vs input {x.shape}")
    z = x @ w + b
    if activation == "relu":
        return np.maximum(z, 0.0), (x, w, z)
    if activation == "softmax":
        return softmax(z), (x, w, None)
    return z, (x, w, None)


def dense_backward(g, cache):
    """Gradient through the affine map (+ReLU). Softmax is handled by the loss."""
    x, w, z = cache
    if z is not None:
        g = g * (z > 0)
    return g @ w.T, x.T @ g, g.sum(axis=0)


def softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def dropout_forward(x, rate, rng):
    keep = 1.0 - rate
    mask = (rng.random(x.shape) < keep) / keep
    return x * mask, mask


def dropout_backward(g, mask):
    return g * mask


def cross_entropy(probs, labels):
    """Mean categorical cross-entropy, and its gradient w.r.t. the logits."""
    B = probs.shape[0]
    p = probs[np.arange(B), labels]
    loss = float(-np.mean(np.log(np.maximum(p, 1e-300))))
    g = probs.copy()
    g[np.arange(B), labels] -= 1.0
    return loss, g / B


# -- single-instance entry points -------------------------------------------

def sepconv1d_forward(x, dw, pw, bias, relu=False):
    """(L, C) -> (L, F)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ShapeMismatch(f"expected (length, channels) input, got {x.shape}")
    out, _ = sepconv_forward(x[None], np.asarray(dw, float), np.asarray(pw, float),
                             np.asarray(bias, float), relu)
    return out[0]


def maxpool1d_forward(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
        return maxpool_forward(x[None])[0][0, :, 0]
    return maxpool_forward(x[None])[0][0]


def gap1d_forward(x):
    x = np.asarray(x, dtype=np.float64)
    return gap_forward(x[None])[0][0]


def dense1d_forward(x, w, b, activation="none"):
    x = np.asarray(x, dtype=np.float64)
    return dense_forward(x[None], np.asarray(w, float), np.asarray(b, float), activation)[0][0]
