"""Parameterised layers: dense, self-attention, layer norm, LSTM, dropout."""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError, ShapeError
from . import functional as F
from .tensor import Tensor, as_tensor, stack


class Parameter(Tensor):
    """A leaf tensor owned by a module.

    Non-trainable parameters (normalisation statistics) are serialised with
    the module but never touched by optimisers.
    """

    __slots__ = ("trainable",)

    def __init__(self, data, trainable=True):
        super().__init__(np.array(data, dtype=np.float64), requires_grad=trainable)
        self.trainable = trainable


class Module:
    training = True

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def named_parameters(self, prefix=""):
        for name, value in vars(self).items():
            if isinstance(value, Parameter):
                yield prefix + name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{prefix}{name}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{prefix}{name}.{i}.")
                    elif isinstance(item, Parameter):
                        yield f"{prefix}{name}.{i}", item

    def parameters(self, trainable_only=True):
        return [p for _, p in self.named_parameters() if p.trainable or not trainable_only]

    def modules(self):
        yield self
        for value in vars(self).values():
            if isinstance(value, Module):
                yield from value.modules()
            elif isinstance(value, (list, tuple)):
                for item in value:
                    if isinstance(item, Module):
                        yield from item.modules()

    def train(self, mode=True):
        for m in self.modules():
            m.training = mode
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def num_parameters(self):
        return int(sum(p.data.size for p in self.parameters()))

    def config(self):
        return {"kind": type(self).__name__}


def _uniform(rng, bound, shape):
    return rng.uniform(-bound, bound, size=shape)


class Dense(Module):
    """Affine map with weights uniform in ``init_scale * [-1, 1] / sqrt(fan_in)`` and zero bias."""

    def __init__(self, in_features, out_features, rng, init_scale=1.0):
        self.in_features = in_features
        self.out_features = out_features
        bound = init_scale / np.sqrt(in_features)
        self.weight = Parameter(_uniform(rng, bound, (in_features, out_features)))
        self.bias = Parameter(np.zeros(out_features))

    def forward(self, x):
        x = as_tensor(x)
        if x.shape[-1] != self.in_features:
            raise ShapeError(f"Dense expected {self.in_features} input features, got {x.shape[-1]}")
        return x @ self.weight + self.bias

    def config(self):
        return {"kind": "Dense", "in": self.in_features, "out": self.out_features}


class Activation(Module):
    FUNCS = {"relu": Tensor.relu, "tanh": Tensor.tanh, "sigmoid": Tensor.sigmoid}

    def __init__(self, name="relu"):
        if name not in self.FUNCS:
            raise ConfigError(f"unknown activation {name!r}")
        self.name = name

    def forward(self, x):
        return self.FUNCS[self.name](as_tensor(x))

    def config(self):
        return {"kind": "Activation", "name": self.name}


class SelfAttention1D(Module):
    """Single-head attention across the feature axis with a zero-initialised residual scale.

    Each feature ``i`` is a position with query ``q_i`` and key ``k_j``; the
    compatibility ``q_i * k_j`` is normalised by a softmax over ``j`` and used
    to mix the value vector. The output is ``x + gamma * mixed``.
    """

    def __init__(self, features, rng):
        self.features = features
        bound = 1.0 / np.sqrt(features)
        self.query_weight = Parameter(_uniform(rng, bound, (features, features)))
        self.query_bias = Parameter(np.zeros(features))
        self.key_weight = Parameter(_uniform(rng, bound, (features, features)))
        self.key_bias = Parameter(np.zeros(features))
        self.value_weight = Parameter(_uniform(rng, bound, (features, features)))
        self.value_bias = Parameter(np.zeros(features))
        self.gamma = Parameter(np.zeros(1))

    def attention(self, x):
        x = as_tensor(x)
        if x.shape[-1] != self.features:
            raise ShapeError(f"SelfAttention1D expected {self.features} features, got {x.shape[-1]}")
        q = x @ self.query_weight + self.query_bias
        k = x @ self.key_weight + self.key_bias
        n = x.shape[0]
        scores = q.reshape(n, self.features, 1) * k.reshape(n, 1, self.features)
        return F.softmax(scores, axis=-1)

    def forward(self, x):
        x = as_tensor(x)
        if x.shape[-1] != self.features:
            raise ShapeError(f"SelfAttention1D expected {self.features} features, got {x.shape[-1]}")
        q = x @ self.query_weight + self.query_bias
        k = x @ self.key_weight + self.key_bias
        v = x @ self.value_weight + self.value_bias
        mixed, _ = F.feature_attention(q, k, v)
        return x + mixed * self.gamma

    def config(self):
        return {"kind": "SelfAttention1D", "features": self.features}


class LayerNorm(Module):
    def __init__(self, features, eps=1e-5):
        self.features = features
        self.eps = eps
        self.gain = Parameter(np.ones(features))
        self.shift = Parameter(np.zeros(features))

    def forward(self, x):
        return F.layer_norm(x, self.gain, self.shift, self.eps)

    def config(self):
        return {"kind": "LayerNorm", "features": self.features, "eps": self.eps}


class Dropout(Module):
    def __init__(self, rate, rng=None):
        if not 0.0 <= rate < 1.0:
            raise ConfigError(f"dropout rate must lie in [0, 1), got {rate}")
        self.rate = rate
        self.rng = rng if rng is not None else np.random.default_rng(0)

    def forward(self, x):
        return F.dropout(as_tensor(x), self.rate, self.rng, self.training)

    def config(self):
        return {"kind": "Dropout", "rate": self.rate}


class LSTMLayer(Module):
    """One recurrent layer; gate order in the packed weights is (input, forget, cell, output)."""

    def __init__(self, input_size, hidden_size, rng, forget_bias=1.0):
        self.input_size = input_size
        self.hidden_size = hidden_size
        bound = 1.0 / np.sqrt(hidden_size)
        self.weight_ih = Parameter(_uniform(rng, bound, (input_size, 4 * hidden_size)))
        self.weight_hh = Parameter(_uniform(rng, bound, (hidden_size, 4 * hidden_size)))
        bias = np.zeros(4 * hidden_size)
        bias[hidden_size : 2 * hidden_size] = forget_bias
        self.bias = Parameter(bias)

    def forward(self, seq, state=None):
        seq = as_tensor(seq)
        steps, batch, features = seq.shape
        if features != self.input_size:
            raise ShapeError(f"LSTM expected {self.input_size} input features, got {features}")
        hs = self.hidden_size
        if state is None:
            h = Tensor(np.zeros((batch, hs)))
            c = Tensor(np.zeros((batch, hs)))
        else:
            h, c = state
        projected = seq @ self.weight_ih + self.bias
        outputs = []
        for t in range(steps):
            hc = F.lstm_cell(projected[t] + h @ self.weight_hh, c)
            h, c = hc[:, :hs], hc[:, hs:]
            outputs.append(h)
        return stack(outputs, axis=0), (h, c)

    def config(self):
        return {"kind": "LSTMLayer", "input_size": self.input_size, "hidden_size": self.hidden_size}


class LSTM(Module):
    """Stacked LSTM over ``[time, batch, features]`` with dropout between layers."""

    def __init__(self, input_size, hidden_size, num_layers, rng, dropout_rate=0.0, dropout_rng=None):
        if not 0.0 <= dropout_rate < 1.0:
            raise ConfigError(f"dropout rate must lie in [0, 1), got {dropout_rate}")
        self.input_size = input_size
        self.hidden_size = hidden_size
        self.num_layers = num_layers
        self.dropout_rate = dropout_rate
        self.layers = [
            LSTMLayer(input_size if i == 0 else hidden_size, hidden_size, rng) for i in range(num_layers)
        ]
        self.dropouts = [Dropout(dropout_rate, dropout_rng) for _ in range(num_layers - 1)]

    def forward(self, seq, state=None):
        out = as_tensor(seq)
        finals = []
        for i, layer in enumerate(self.layers):
            if i > 0:
                out = self.dropouts[i - 1](out)
            out, final = layer(out, None if state is None else state[i])
            finals.append(final)
        return out, finals

    def set_dropout_rng(self, rng):
        for d in self.dropouts:
            d.rng = rng

    def config(self):
        return {
            "kind": "LSTM",
            "input_size": self.input_size,
            "hidden_size": self.hidden_size,
            "num_layers": self.num_layers,
            "dropout_rate": self.dropout_rate,
        }


class Sequential(Module):
    def __init__(self, *layers):
        self.layers = list(layers)

    def forward(self, x):
        for layer in self.layers:
            x = layer(x)
        return x

    def config(self):
        return {"kind": "Sequential", "layers": [layer.config() for layer in self.layers]}
