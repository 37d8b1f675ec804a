"""The SAIL training loop.

One epoch runs, in order:

1. supervised inverse-dynamics training on the sample set ``I^s``
2. pseudo-labelling of teacher transitions by sampling from the IDM's softmax
3. behavioural cloning of the policy on the pseudo-labels, jointly with the
   generator's next-state reconstruction loss
4. policy rollouts (sampled actions) into ``I^pos`` and the replay buffer
5. adversarial updates: the discriminator separates teacher windows from
   generator-decoded policy windows, the generator and policy are pushed to
   fool it
6. policy transitions whose decoded window the discriminator accepts are
   appended to ``I^s``

The policy is then evaluated greedily and the best epoch by AER is kept.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import nn
from .data import (
    POLICY,
    ReplayBuffer,
    SampleSet,
    StateOnlyDemos,
    collect_random,
    pad_windows,
    run_episodes,
    sample_windows,
)
from .env import env_spec
from .errors import ConfigError, UsageError
from .metrics import ReferenceBand, balanced_accuracy, evaluate_returns, write_csv
from .models import ActMode, GeneratorLoss, ModelBundle, select_actions

log = logging.getLogger(__name__)

CHUNK = 4096


@dataclass
class SailConfig:
    epochs: int = 30
    idm_steps: int = 500
    idm_batch: int = 128
    bc_steps: int = 500
    bc_batch: int = 128
    adversarial_steps: int = 50
    rollout_episodes: int = 10
    random_episodes: int = 100
    window: int = 32
    replay_k: int = 8
    replay_capacity: int = 500
    accuracy_windows: int = 512
    generator_loss: str = "mse"
    lambda_g: float = 1.0
    lambda_adv: float = 0.1
    label_mode: str = "sample"
    eval_mode: str = "argmax"
    eval_episodes: int = 100
    force_accept: bool = False
    learning_rate: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self):
        counts = (
            "idm_steps", "idm_batch", "bc_steps", "bc_batch", "adversarial_steps", "rollout_episodes",
            "random_episodes", "window", "replay_k", "replay_capacity", "accuracy_windows", "eval_episodes",
        )
        for name in counts:
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or isinstance(value, bool) or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        if not isinstance(self.epochs, (int, np.integer)) or self.epochs < 0:
            raise ConfigError(f"epochs must be a non-negative integer, got {self.epochs!r}")
        for name in ("lambda_g", "lambda_adv"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        try:
            GeneratorLoss(self.generator_loss)
            ActMode(self.label_mode)
            ActMode(self.eval_mode)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def field_names(cls):
        return [f.name for f in dataclasses.fields(cls)]

    @classmethod
    def from_dict(cls, values: dict):
        unknown = set(values) - set(cls.field_names())
        if unknown:
            raise ConfigError(f"unknown SAIL config keys: {sorted(unknown)}")
        return cls(**values)

    def ablation(self):
        """Same budgets with the generator, the adversarial term and the append gate switched off."""
        return dataclasses.replace(self, lambda_g=0.0, lambda_adv=0.0, force_accept=True)


METRIC_COLUMNS = (
    "epoch",
    "idm_loss",
    "idm_holdout_accuracy",
    "policy_loss",
    "generator_loss",
    "discriminator_loss",
    "discriminator_accuracy",
    "eval_aer_mean",
    "eval_aer_std",
    "eval_performance",
    "sample_count",
    "appended_count",
)


@dataclass
class MetricsLog:
    records: list = field(default_factory=list)
    best_epoch: Optional[int] = None

    def append(self, record: dict):
        self.records.append(record)

    def __len__(self):
        return len(self.records)

    def column(self, name):
        return [r[name] for r in self.records]

    def best(self):
        if self.best_epoch is None:
            return None
        return self.records[self.best_epoch - 1]

    def to_csv(self, path):
        return write_csv(path, METRIC_COLUMNS, self.records)


# -- phases ---------------------------------------------------------------


def _holdout_mask(n):
    idx = np.arange(n, dtype=np.uint64)
    return ((idx * np.uint64(2654435761)) % np.uint64(2**32)) % np.uint64(10) == 0


def chunked(fn, *arrays, size=CHUNK):
    n = len(arrays[0])
    return np.concatenate([fn(*(a[i : i + size] for a in arrays)) for i in range(0, n, size)], axis=0)


def train_idm(idm, samples: SampleSet, steps, batch, optimizer, rng):
    """Cross-entropy training of ``P(a | s_t, s_{t+1})``; 10% of transitions are held out by index hash."""
    states, actions, next_states, _ = samples.arrays()
    n = len(actions)
    if n == 0:
        raise UsageError("inverse dynamics training needs a non-empty sample set")
    holdout = _holdout_mask(n)
    train_idx = np.flatnonzero(~holdout)
    if len(train_idx) == 0:
        train_idx = np.arange(n)
    total = 0.0
    idm.train()
    for _ in range(steps):
        idx = train_idx[rng.integers(0, len(train_idx), size=min(batch, len(train_idx)))]
        optimizer.zero_grad()
        loss = nn.cross_entropy(idm(states[idx], next_states[idx]), actions[idx])
        loss.backward()
        optimizer.step()
        total += loss.item()
    hold_idx = np.flatnonzero(holdout)
    if len(hold_idx):
        logits = chunked(idm.logits, states[hold_idx], next_states[hold_idx])
        accuracy = float((logits.argmax(axis=1) == actions[hold_idx]).mean())
    else:
        accuracy = math.nan
    return {"idm_loss": total / steps, "idm_holdout_accuracy": accuracy}


def pseudo_label(idm, demos: StateOnlyDemos, mode=ActMode.SAMPLE, rng=None):
    """One action per teacher transition, sampled from (or the argmax of) the IDM's softmax."""
    starts, nexts = demos.transition_pairs()
    logits = chunked(idm.logits, starts, nexts)
    return select_actions(logits, mode, rng)


def behavioural_cloning(policy, generator, starts, nexts, labels, steps, batch, lambda_g, opt_policy, opt_generator, rng):
    """Minimise ``CE(pi(s_t), a_hat) + lambda_g * L_G``.

    The generator is conditioned on the policy's softmax, so ``L_G`` also
    trains the policy. With ``lambda_g == 0`` the generator is left untouched.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if not len(starts) == len(nexts) == len(labels):
        raise ConfigError("teacher transitions and pseudo-labels differ in length")
    n = len(labels)
    ce_total = 0.0
    g_total = 0.0
    policy.train()
    generator.train()
    for _ in range(steps):
        idx = rng.integers(0, n, size=min(batch, n))
        opt_policy.zero_grad()
        logits = policy(starts[idx])
        loss = nn.cross_entropy(logits, labels[idx])
        ce_total += loss.item()
        if lambda_g > 0:
            opt_generator.zero_grad()
            head = generator(starts[idx], nn.softmax(logits, axis=-1))
            g_loss = generator.loss(head, starts[idx], nexts[idx])
            g_total += g_loss.item()
            loss = loss + g_loss * lambda_g
        loss.backward()
        opt_policy.step()
        if lambda_g > 0:
            opt_generator.step()
    return {
        "policy_loss": ce_total / steps,
        "generator_loss": g_total / steps if lambda_g > 0 else math.nan,
    }


def rollout_collect(policy, env_name, n_episodes, mode, rng):
    """Roll the policy out; returns ``(transitions, trajectories)``."""
    trajs = run_episodes(env_name, n_episodes, policy.actor(mode, rng), rng)
    pos = SampleSet(env_spec(env_name).state_dim)
    pos.extend_from_trajectories(trajs, POLICY)
    return pos, trajs


def generated_windows(bundle: ModelBundle, windows):
    """Decode each policy state through ``G(s, softmax(pi(s)))`` into discriminator coordinates."""
    k, w, d = windows.shape
    flat = windows.reshape(k * w, d)
    probs = nn.softmax(bundle.policy(flat), axis=-1)
    head = bundle.generator(flat, probs)
    raw = bundle.generator.decode_tensor(head, flat)
    norm = bundle.discriminator.input_norm
    return ((raw - norm.mean.data) / norm.scale.data).reshape(k, w, d)


def adversarial_update(bundle, replay, demos, steps, k, window, lambda_adv, optimizers, rng, accuracy_windows=512,
                       current=None, measure_rng=None):
    """Alternate discriminator ascent and generator/policy descent on the minimax objective.

    The discriminator maximises ``log D(teacher) + log(1 - D(G(policy)))``;
    generator and policy minimise ``-log D(G(policy))`` scaled by
    ``lambda_adv``. Returns the mean discriminator loss and its balanced
    accuracy on freshly sampled windows; the policy side of that measurement
    comes from ``current`` (the latest rollouts) when given, else the buffer.
    Passing ``measure_rng`` keeps that measurement from consuming ``rng``.
    """
    if len(replay) == 0 or len(demos) == 0:
        raise UsageError("adversarial update needs both teacher trajectories and a non-empty replay buffer")
    disc = bundle.discriminator
    opt_d, opt_g, opt_p = optimizers["discriminator"], optimizers["generator"], optimizers["policy"]
    disc.train()
    d_total = 0.0
    for _ in range(steps):
        real, real_len = sample_windows(demos, k, window, rng)
        fake_states, fake_len = sample_windows(replay, k, window, rng)
        fake = generated_windows(bundle, fake_states)

        opt_d.zero_grad()
        d_loss = nn.bce_with_logits(disc(real, real_len), 1.0) + nn.bce_with_logits(
            disc(fake.detach(), fake_len, normalized=True), 0.0
        )
        d_loss.backward()
        opt_d.step()
        d_total += d_loss.item()

        if lambda_adv > 0:
            opt_g.zero_grad()
            opt_p.zero_grad()
            g_loss = nn.bce_with_logits(disc(fake, fake_len, normalized=True), 1.0) * lambda_adv
            g_loss.backward()
            opt_g.step()
            opt_p.step()
            opt_d.zero_grad()
    accuracy = measure_discriminator(bundle, replay if current is None else current, demos, accuracy_windows, window,
                                     rng if measure_rng is None else measure_rng)
    return {"discriminator_loss": d_total / steps, "discriminator_accuracy": accuracy}


def measure_discriminator(bundle, replay, demos, k, window, rng):
    real, real_len = sample_windows(demos, k, window, rng)
    fake_states, fake_len = sample_windows(replay, k, window, rng)
    fake = generated_windows(bundle, fake_states).data
    disc = bundle.discriminator
    return balanced_accuracy(disc.score(real, real_len), disc.score(fake, fake_len, normalized=True))


def filter_append(samples: SampleSet, trajectories, bundle: ModelBundle, window, force_accept=False):
    """Append policy transitions whose generator-decoded window the discriminator calls 'teacher'.

    Each trajectory is cut into consecutive windows of ``window`` transitions;
    a window is kept whole when ``D(G(s_t, a_t)) >= 0.5``.
    """
    chunks = []
    for t in trajectories:
        n = t.transitions
        for i in range(0, n, window):
            j = min(i + window, n)
            chunks.append((t.states[i:j], t.hidden_actions[i:j], t.states[i + 1 : j + 1]))
    if not chunks:
        return 0
    if force_accept:
        accept = np.ones(len(chunks), dtype=bool)
    else:
        decoded = [bundle.generator.predict(s, a) for s, a, _ in chunks]
        padded, lengths = pad_windows(decoded, window)
        accept = bundle.discriminator.score(padded, lengths) >= 0.5
    appended = 0
    for keep, (s, a, s_next) in zip(accept, chunks):
        if keep:
            samples.append(s, a, s_next, POLICY)
            appended += len(a)
    return appended


def evaluate_policy(policy, env_name, episodes, mode, rng, band=None):
    trajs = run_episodes(env_name, episodes, policy.actor(mode, rng), rng)
    return evaluate_returns([t.episode_return for t in trajs], band)


# -- driver ---------------------------------------------------------------


class Streams:
    """Independent generators per phase so that changing one budget does not reshuffle the others."""

    NAMES = ("init", "collect", "idm", "label", "bc", "rollout", "adversarial", "eval", "dropout", "measure")

    def __init__(self, seed):
        children = np.random.SeedSequence(seed).spawn(len(self.NAMES))
        for name, child in zip(self.NAMES, children):
            setattr(self, name, np.random.default_rng(child))


def _as_demos(teacher):
    if isinstance(teacher, StateOnlyDemos):
        return teacher
    return StateOnlyDemos(teacher)


def init_bundle(config: SailConfig, env_name, demos: StateOnlyDemos, streams: Streams):
    spec = env_spec(env_name)
    if demos.state_dim != spec.state_dim:
        raise ConfigError(f"teacher states have dimension {demos.state_dim}, {env_name} has {spec.state_dim}")
    bundle = ModelBundle.create(env_name, spec.state_dim, spec.action_count, streams.init, config.generator_loss)
    bundle.discriminator.set_dropout_rng(streams.dropout)
    teacher_states = demos.all_states()
    bundle.policy.input_norm.fit(teacher_states)
    bundle.generator.fit_normalizer(*demos.transition_pairs())
    bundle.discriminator.input_norm.fit(teacher_states)
    return bundle


def make_optimizers(bundle, lr):
    return {name: nn.Adam(m.parameters(), lr=lr) for name, m in bundle.models().items()}


def train(config: SailConfig, env_name: str, teacher, band: Optional[ReferenceBand] = None):
    """Run SAIL; returns the best-by-AER :class:`ModelBundle` and the per-epoch :class:`MetricsLog`.

    ``teacher`` is converted to a :class:`StateOnlyDemos` view before use, so
    no code path below can see teacher actions.
    """
    demos = _as_demos(teacher)
    streams = Streams(config.seed)
    bundle = init_bundle(config, env_name, demos, streams)
    metrics = MetricsLog()
    if config.epochs == 0:
        return bundle, metrics

    optimizers = make_optimizers(bundle, config.learning_rate)
    samples = collect_random(env_name, config.random_episodes, streams.collect)
    s, _, s_next, _ = samples.arrays()
    bundle.idm.fit_normalizer(s, s_next)
    replay = ReplayBuffer(config.replay_capacity)
    starts, nexts = demos.transition_pairs()
    skip_adversarial = config.force_accept and config.lambda_adv == 0
    best_aer = -math.inf
    best_snapshot = None

    for epoch in range(1, config.epochs + 1):
        record = {"epoch": epoch}
        record.update(train_idm(bundle.idm, samples, config.idm_steps, config.idm_batch, optimizers["idm"], streams.idm))
        labels = pseudo_label(bundle.idm, demos, config.label_mode, streams.label)
        record.update(
            behavioural_cloning(
                bundle.policy, bundle.generator, starts, nexts, labels, config.bc_steps, config.bc_batch,
                config.lambda_g, optimizers["policy"], optimizers["generator"], streams.bc,
            )
        )
        pos, trajs = rollout_collect(bundle.policy, env_name, config.rollout_episodes, ActMode.SAMPLE, streams.rollout)
        replay.extend(trajs)
        if skip_adversarial:
            record.update({"discriminator_loss": math.nan, "discriminator_accuracy": math.nan})
        else:
            record.update(
                adversarial_update(
                    bundle, replay, demos, config.adversarial_steps, config.replay_k, config.window,
                    config.lambda_adv, optimizers, streams.adversarial, config.accuracy_windows,
                    [t.states for t in trajs], streams.measure,
                )
            )
        record["appended_count"] = filter_append(samples, trajs, bundle, config.window, config.force_accept)
        record["sample_count"] = len(samples)

        result = evaluate_policy(bundle.policy, env_name, config.eval_episodes, config.eval_mode, streams.eval, band)
        record.update(
            {"eval_aer_mean": result.aer_mean, "eval_aer_std": result.aer_std, "eval_performance": result.performance}
        )
        metrics.append(record)
        log.info(
            "epoch %d: idm acc %.3f, pi loss %.4f, G loss %.5f, D acc %.3f, AER %.2f +- %.2f, |I^s| %d (+%d)",
            epoch, record["idm_holdout_accuracy"], record["policy_loss"], record["generator_loss"],
            record["discriminator_accuracy"], result.aer_mean, result.aer_std, len(samples), record["appended_count"],
        )
        if result.aer_mean > best_aer:
            best_aer = result.aer_mean
            best_snapshot = bundle.snapshot()
            metrics.best_epoch = epoch

    bundle.restore(best_snapshot)
    return bundle, metrics
