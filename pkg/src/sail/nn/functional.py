"""Losses and normalising maps built on :class:`~sail.nn.tensor.Tensor`."""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError, ShapeError
from .tensor import Tensor, _sigmoid, as_tensor


def softmax_np(logits, axis=-1):
    z = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax_np(logits, axis=-1):
    z = logits - logits.max(axis=axis, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=axis, keepdims=True))


def softmax(x, axis=-1):
    x = as_tensor(x)
    out = softmax_np(x.data, axis)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return Tensor._op(out, (x,), backward)


def feature_attention(q, k, v):
    """``out_i = sum_j softmax_j(q_i * k_j) * v_j`` per row, for ``[n, F]`` inputs; returns ``(out, weights)``."""
    q, k, v = as_tensor(q), as_tensor(k), as_tensor(v)
    qd, kd = q.data, k.data
    # max_j q_i k_j in closed form, used as the softmax shift
    shift = np.where(qd >= 0, qd * kd.max(axis=-1, keepdims=True), qd * kd.min(axis=-1, keepdims=True))
    weights = np.exp(qd[:, :, None] * kd[:, None, :] - shift[:, :, None])
    weights /= weights.sum(axis=-1, keepdims=True)
    out = np.einsum("nij,nj->ni", weights, v.data)

    def backward(g):
        g_weights = g[:, :, None] * v.data[:, None, :]
        g_v = np.einsum("nij,ni->nj", weights, g)
        g_scores = weights * (g_weights - (g_weights * weights).sum(axis=-1, keepdims=True))
        g_q = np.einsum("nij,nj->ni", g_scores, k.data)
        g_k = np.einsum("nij,ni->nj", g_scores, q.data)
        return g_q, g_k, g_v

    return Tensor._op(out, (q, k, v), backward), weights


def lstm_cell(gates, c_prev):
    """Fused LSTM update from packed pre-activations ``(i, f, g, o)``.

    Returns one tensor ``[h, c]`` concatenated on the last axis so both
    outputs share a single backward pass.
    """
    gates, c_prev = as_tensor(gates), as_tensor(c_prev)
    hs = c_prev.shape[-1]
    z = gates.data
    i = _sigmoid(z[:, :hs])
    f = _sigmoid(z[:, hs : 2 * hs])
    g = np.tanh(z[:, 2 * hs : 3 * hs])
    o = _sigmoid(z[:, 3 * hs :])
    c = f * c_prev.data + i * g
    tc = np.tanh(c)
    h = o * tc

    def backward(grad):
        gh, gc = grad[:, :hs], grad[:, hs:]
        gc = gc + gh * o * (1.0 - tc * tc)
        d = np.empty_like(z)
        d[:, :hs] = gc * g * i * (1.0 - i)
        d[:, hs : 2 * hs] = gc * c_prev.data * f * (1.0 - f)
        d[:, 2 * hs : 3 * hs] = gc * i * (1.0 - g * g)
        d[:, 3 * hs :] = gh * tc * o * (1.0 - o)
        return d, gc * f

    return Tensor._op(np.concatenate([h, c], axis=-1), (gates, c_prev), backward)


def log_softmax(x, axis=-1):
    x = as_tensor(x)
    out = log_softmax_np(x.data, axis)

    def backward(g):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)

    return Tensor._op(out, (x,), backward)


def cross_entropy(logits, targets):
    """Mean negative log-likelihood of integer ``targets`` under ``softmax(logits)``."""
    logits = as_tensor(logits)
    targets = np.asarray(targets, dtype=np.int64)
    if logits.ndim != 2 or targets.shape != (logits.shape[0],):
        raise ShapeError(f"cross_entropy: logits {logits.shape} vs targets {targets.shape}")
    n, k = logits.shape
    if targets.size and (targets.min() < 0 or targets.max() >= k):
        raise ConfigError(f"cross_entropy: target outside [0, {k})")
    logp = log_softmax_np(logits.data)
    rows = np.arange(n)
    loss = -logp[rows, targets].mean()

    def backward(g):
        grad = np.exp(logp)
        grad[rows, targets] -= 1.0
        return (grad * (g / n),)

    return Tensor._op(np.asarray(loss), (logits,), backward)


def bce_with_logits(logits, targets):
    """Mean binary cross-entropy of ``sigmoid(logits)`` against targets in [0, 1]."""
    logits = as_tensor(logits)
    y = np.broadcast_to(np.asarray(targets, dtype=np.float64), logits.shape)
    x = logits.data
    # log(1 + exp(-|x|)) keeps both tails finite
    loss = (np.maximum(x, 0) - x * y + np.log1p(np.exp(-np.abs(x)))).mean()
    n = x.size

    def backward(g):
        return ((_sigmoid(x) - y) * (g / n),)

    return Tensor._op(np.asarray(loss), (logits,), backward)


def mse(pred, target):
    diff = as_tensor(pred) - as_tensor(target)
    return (diff * diff).mean()


def layer_norm(x, gain, shift, eps=1e-5):
    x = as_tensor(x)
    mu = x.mean(axis=-1, keepdims=True)
    centred = x - mu
    var = (centred * centred).mean(axis=-1, keepdims=True)
    return centred / (var + eps).sqrt() * gain + shift


def dropout(x, rate, rng, training):
    if not training or rate == 0.0:
        return x
    keep = 1.0 - rate
    mask = (rng.random(x.shape) < keep) / keep
    return x * mask
