"""The four SAIL networks and the shared action-selection rule.

* inverse dynamics ``M``: ``(s_t, s_{t+1}) -> action logits``
* policy ``pi``: ``s_t -> action logits``
* generator ``G``: ``(s_t, action distribution) -> s_{t+1}``
* discriminator ``D``: state window -> probability the window came from the teacher

Every network standardises its inputs with frozen statistics stored as
non-trainable parameters, so saved files are self-contained.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import nn
from .errors import ConfigError, InputError, ParseError, ShapeError, ValidationError
from .nn.functional import softmax_np

HIDDEN = 32
# classifier heads start small so untrained softmax outputs are close to uniform
HEAD_INIT_SCALE = 0.1


class ActMode(str, enum.Enum):
    SAMPLE = "sample"
    ARGMAX = "argmax"


class Standardizer(nn.Module):
    """Per-feature affine map to zero mean / unit scale, fitted once and frozen."""

    def __init__(self, features):
        self.mean = nn.Parameter(np.zeros(features), trainable=False)
        self.scale = nn.Parameter(np.ones(features), trainable=False)

    def fit(self, data, min_scale=1e-6):
        data = np.asarray(data, dtype=np.float64)
        self.mean.data = data.mean(axis=0)
        self.scale.data = np.maximum(data.std(axis=0), min_scale)
        return self

    def __call__(self, x):
        return (np.asarray(x, dtype=np.float64) - self.mean.data) / self.scale.data

    def inverse(self, z):
        return z * self.scale.data + self.mean.data


def _check_dim(x, dim, what):
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != dim:
        raise ShapeError(f"{what}: expected trailing dimension {dim}, got {x.shape}")
    return x


def select_actions(logits, mode, rng=None):
    """Pick one action per row: argmax (ties to the lowest index) or a draw from softmax."""
    logits = np.atleast_2d(logits)
    if ActMode(mode) is ActMode.ARGMAX:
        return logits.argmax(axis=1)
    probs = softmax_np(logits)
    cdf = np.cumsum(probs, axis=1)
    u = rng.random((len(logits), 1))
    return np.minimum((u >= cdf).sum(axis=1), logits.shape[1] - 1)


class InverseDynamicsModel(nn.Module):
    """MLP with self-attention and layer norm after each of two hidden layers.

    The network sees the standardised pair ``[s_t, s_{t+1} - s_t]``; the
    difference is a fixed linear re-parameterisation of ``(s_t, s_{t+1})``
    that lets the standardiser give small state changes a usable scale.
    """

    kind = "idm"

    def __init__(self, state_dim, action_count, rng, hidden=HIDDEN):
        self.state_dim = state_dim
        self.action_count = action_count
        self.hidden = hidden
        self.input_norm = Standardizer(2 * state_dim)
        self.net = nn.Sequential(
            nn.Dense(2 * state_dim, hidden, rng),
            nn.Activation("relu"),
            nn.SelfAttention1D(hidden, rng),
            nn.LayerNorm(hidden),
            nn.Dense(hidden, hidden, rng),
            nn.Activation("relu"),
            nn.SelfAttention1D(hidden, rng),
            nn.LayerNorm(hidden),
            nn.Dense(hidden, action_count, rng, HEAD_INIT_SCALE),
        )

    @staticmethod
    def features(states, next_states):
        return np.concatenate([states, next_states - states], axis=-1)

    def fit_normalizer(self, states, next_states):
        self.input_norm.fit(self.features(states, next_states))

    def forward(self, states, next_states):
        states = _check_dim(states, self.state_dim, "idm s_t")
        next_states = _check_dim(next_states, self.state_dim, "idm s_t+1")
        return self.net(self.input_norm(self.features(np.atleast_2d(states), np.atleast_2d(next_states))))

    def logits(self, states, next_states):
        return self.forward(states, next_states).data

    def config(self):
        return {"model": self.kind, "state_dim": self.state_dim, "action_count": self.action_count, "hidden": self.hidden}


class PolicyModel(nn.Module):
    """MLP with a self-attention module after each of two hidden layers."""

    kind = "policy"

    def __init__(self, state_dim, action_count, rng, hidden=HIDDEN):
        self.state_dim = state_dim
        self.action_count = action_count
        self.hidden = hidden
        self.input_norm = Standardizer(state_dim)
        self.net = nn.Sequential(
            nn.Dense(state_dim, hidden, rng),
            nn.Activation("relu"),
            nn.SelfAttention1D(hidden, rng),
            nn.Dense(hidden, hidden, rng),
            nn.Activation("relu"),
            nn.SelfAttention1D(hidden, rng),
            nn.Dense(hidden, action_count, rng, HEAD_INIT_SCALE),
        )

    def forward(self, states):
        states = _check_dim(states, self.state_dim, "policy state")
        return self.net(self.input_norm(np.atleast_2d(states)))

    def logits(self, states):
        return self.forward(states).data

    def probabilities(self, states):
        return softmax_np(self.logits(states))

    def act(self, states, mode=ActMode.ARGMAX, rng=None):
        return select_actions(self.logits(states), mode, rng)

    def actor(self, mode, rng=None):
        def act(states, _indices):
            return self.act(states, mode, rng)

        return act

    def config(self):
        return {"model": self.kind, "state_dim": self.state_dim, "action_count": self.action_count, "hidden": self.hidden}


class GeneratorLoss(str, enum.Enum):
    MSE = "mse"
    LITERAL_CE = "literal_ce"


class GeneratorModel(nn.Module):
    """Forward dynamics ``(s_t, action) -> s_{t+1}``; two hidden layers of width ``2 * (|s| + 1)``.

    The action enters as a distribution over actions (one-hot for a concrete
    action, the policy's softmax during training) so gradients can reach the
    policy. With the ``mse`` loss the head predicts the standardised change
    ``s_{t+1} - s_t`` and the prediction is ``s_t`` plus the decoded change;
    with ``literal_ce`` it predicts the min-max scaled next state through a
    sigmoid.
    """

    kind = "generator"

    def __init__(self, state_dim, action_count, rng, loss=GeneratorLoss.MSE):
        self.state_dim = state_dim
        self.action_count = action_count
        self.loss_form = GeneratorLoss(loss)
        self.width = 2 * (state_dim + 1)
        self.input_norm = Standardizer(state_dim)
        self.delta_norm = Standardizer(state_dim)
        self.output_low = nn.Parameter(np.zeros(state_dim), trainable=False)
        self.output_span = nn.Parameter(np.ones(state_dim), trainable=False)
        self.net = nn.Sequential(
            nn.Dense(state_dim + action_count, self.width, rng),
            nn.Activation("relu"),
            nn.Dense(self.width, self.width, rng),
            nn.Activation("relu"),
            nn.Dense(self.width, state_dim, rng),
        )

    def fit_normalizer(self, states, next_states):
        states = np.asarray(states, dtype=np.float64)
        next_states = np.asarray(next_states, dtype=np.float64)
        self.input_norm.fit(states)
        self.delta_norm.fit(next_states - states)
        low, high = next_states.min(axis=0), next_states.max(axis=0)
        span = np.maximum(high - low, 1e-6)
        # maps the observed range onto [0.01, 1], strictly inside (0, 1]
        self.output_low.data = low - 0.01 / 0.99 * span
        self.output_span.data = span / 0.99

    def forward(self, states, action_probs):
        """Head output in the loss space, as a tensor."""
        states = _check_dim(states, self.state_dim, "generator state")
        z = self.input_norm(np.atleast_2d(states))
        inp = nn.concat([nn.Tensor(z), nn.as_tensor(action_probs)], axis=-1)
        out = self.net(inp)
        if self.loss_form is GeneratorLoss.LITERAL_CE:
            return out.sigmoid()
        return out

    def target(self, states, next_states):
        """The transition ``(s_t, s_{t+1})`` mapped into the space the head predicts."""
        states = np.asarray(states, dtype=np.float64)
        next_states = np.asarray(next_states, dtype=np.float64)
        if self.loss_form is GeneratorLoss.LITERAL_CE:
            return (next_states - self.output_low.data) / self.output_span.data
        return self.delta_norm(next_states - states)

    def decode(self, head, states):
        """Head output back to a next state in raw units."""
        head = np.asarray(head, dtype=np.float64)
        if self.loss_form is GeneratorLoss.LITERAL_CE:
            return head * self.output_span.data + self.output_low.data
        return np.asarray(states, dtype=np.float64) + self.delta_norm.inverse(head)

    def decode_tensor(self, head, states):
        """Differentiable :meth:`decode` for a head tensor."""
        if self.loss_form is GeneratorLoss.LITERAL_CE:
            return head * self.output_span.data + self.output_low.data
        return head * self.delta_norm.scale.data + (self.delta_norm.mean.data + np.asarray(states, dtype=np.float64))

    def loss(self, head, states, next_states):
        target = self.target(states, next_states)
        if self.loss_form is GeneratorLoss.LITERAL_CE:
            # -1/N sum_i s_{i+1} . log G(s_i, pi(s_i))
            return -(head.log() * target).sum(axis=-1).mean()
        return nn.mse(head, target)

    def one_hot(self, actions):
        actions = np.asarray(actions, dtype=np.int64)
        if actions.size and (actions.min() < 0 or actions.max() >= self.action_count):
            raise ConfigError("action index out of range")
        return np.eye(self.action_count)[actions]

    def predict(self, states, actions):
        """Next-state prediction in raw state units for concrete actions."""
        states = np.atleast_2d(np.asarray(states, dtype=np.float64))
        return self.decode(self.forward(states, self.one_hot(np.atleast_1d(actions))).data, states)

    def config(self):
        return {
            "model": self.kind,
            "state_dim": self.state_dim,
            "action_count": self.action_count,
            "loss": self.loss_form.value,
        }


class DiscriminatorModel(nn.Module):
    """Two-layer LSTM over a state window, dense head on the last real step, sigmoid output."""

    kind = "discriminator"

    def __init__(self, state_dim, rng, hidden=HIDDEN, num_layers=2, dropout=0.5, dropout_rng=None):
        self.state_dim = state_dim
        self.hidden = hidden
        self.num_layers = num_layers
        self.dropout = dropout
        self.input_norm = Standardizer(state_dim)
        self.lstm = nn.LSTM(state_dim, hidden, num_layers, rng, dropout, dropout_rng)
        self.head = nn.Dense(hidden, 1, rng)

    def set_dropout_rng(self, rng):
        self.lstm.set_dropout_rng(rng)

    def forward(self, windows, lengths=None, normalized=False):
        """Logits for a batch of windows shaped ``[batch, time, state_dim]``.

        ``windows`` may be a tensor already in standardised coordinates
        (``normalized=True``), which is how generator output is fed in.
        """
        if not normalized:
            windows = _check_dim(windows, self.state_dim, "discriminator window")
            windows = nn.Tensor(self.input_norm(windows))
        windows = nn.as_tensor(windows)
        if windows.ndim != 3 or windows.shape[1] == 0:
            raise ShapeError(f"discriminator needs a non-empty [batch, time, features] window, got {windows.shape}")
        batch, steps, _ = windows.shape
        seq, _ = self.lstm(windows.swapaxes(0, 1))
        if lengths is None:
            last = seq[steps - 1]
        else:
            lengths = np.asarray(lengths, dtype=np.int64)
            pick = np.zeros((steps, batch, 1))
            pick[lengths - 1, np.arange(batch), 0] = 1.0
            last = (seq * pick).sum(axis=0)
        return self.head(last)

    def score(self, windows, lengths=None, normalized=False):
        """Probability of 'teacher' per window; dropout is disabled."""
        was_training = self.training
        self.eval()
        try:
            logits = self.forward(windows, lengths, normalized).data[:, 0]
        finally:
            self.train(was_training)
        return 1.0 / (1.0 + np.exp(-logits))

    def config(self):
        return {
            "model": self.kind,
            "state_dim": self.state_dim,
            "hidden": self.hidden,
            "num_layers": self.num_layers,
            "dropout": self.dropout,
        }


# -- closed-form parameter counts ------------------------------------------


def dense_count(i, o):
    return i * o + o


def attention_count(f):
    return 3 * (f * f + f) + 1


def layernorm_count(f):
    return 2 * f


def lstm_layer_count(i, h):
    return 4 * h * (i + h) + 4 * h


def expected_parameter_counts(state_dim, action_count, hidden=HIDDEN):
    d, k, h = state_dim, action_count, hidden
    w = 2 * (d + 1)
    return {
        "idm": dense_count(2 * d, h) + dense_count(h, h) + dense_count(h, k) + 2 * attention_count(h) + 2 * layernorm_count(h),
        "policy": dense_count(d, h) + dense_count(h, h) + dense_count(h, k) + 2 * attention_count(h),
        "generator": dense_count(d + k, w) + dense_count(w, w) + dense_count(w, d),
        "discriminator": lstm_layer_count(d, h) + lstm_layer_count(h, h) + dense_count(h, 1),
    }


# -- bundle ---------------------------------------------------------------

BUNDLE_FILES = {"idm": "idm.json", "policy": "policy.json", "generator": "generator.json", "discriminator": "discriminator.json"}
BUNDLE_FORMAT = "sail-bundle"


@dataclass
class ModelBundle:
    env_name: str
    idm: InverseDynamicsModel
    policy: PolicyModel
    generator: GeneratorModel
    discriminator: DiscriminatorModel

    @classmethod
    def create(cls, env_name, state_dim, action_count, rng, generator_loss=GeneratorLoss.MSE):
        return cls(
            env_name,
            InverseDynamicsModel(state_dim, action_count, rng),
            PolicyModel(state_dim, action_count, rng),
            GeneratorModel(state_dim, action_count, rng, generator_loss),
            DiscriminatorModel(state_dim, rng, dropout_rng=rng),
        )

    @property
    def state_dim(self):
        return self.policy.state_dim

    @property
    def action_count(self):
        return self.policy.action_count

    def models(self):
        return {"idm": self.idm, "policy": self.policy, "generator": self.generator, "discriminator": self.discriminator}

    def snapshot(self):
        return {name: [p.data.copy() for _, p in m.named_parameters()] for name, m in self.models().items()}

    def restore(self, snapshot):
        for name, m in self.models().items():
            for (_, p), value in zip(m.named_parameters(), snapshot[name]):
                p.data = value.copy()

    def save(self, directory):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for name, m in self.models().items():
            nn.save_module(m, directory / BUNDLE_FILES[name], config=m.config())
        manifest = {
            "format": BUNDLE_FORMAT,
            "version": 1,
            "env": self.env_name,
            "state_dim": self.state_dim,
            "action_count": self.action_count,
            "files": BUNDLE_FILES,
        }
        (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, directory):
        directory = Path(directory)
        mpath = directory / "manifest.json"
        if not mpath.exists():
            raise InputError(f"{directory}: not a model bundle (no manifest.json)")
        try:
            manifest = json.loads(mpath.read_text())
        except json.JSONDecodeError as exc:
            raise ParseError(exc.msg, mpath, exc.lineno) from exc
        if manifest.get("format") != BUNDLE_FORMAT:
            raise ParseError("not a sail-bundle manifest", mpath)
        states = {name: nn.read_state(directory / BUNDLE_FILES[name]) for name in BUNDLE_FILES}
        try:
            d, k = manifest["state_dim"], manifest["action_count"]
            gen_loss = states["generator"]["config"].get("loss", "mse")
        except (KeyError, AttributeError) as exc:
            raise ParseError(f"incomplete manifest ({exc})", mpath) from exc
        rng = np.random.default_rng(0)
        bundle = cls.create(manifest["env"], d, k, rng, gen_loss)
        for name, m in bundle.models().items():
            cfg = states[name].get("config", {})
            if cfg.get("model") != m.kind:
                raise ValidationError(f"{directory / BUNDLE_FILES[name]}: holds a {cfg.get('model')!r} model")
            nn.load_into(m, states[name], directory / BUNDLE_FILES[name])
        return bundle
