import copy
import dataclasses
import math

import numpy as np
import pytest

from sail import nn, trainer
from sail.data import ReplayBuffer, SampleSet, StateOnlyDemos, Trajectory, collect_random, sample_windows
from sail.env import make_env
from sail.errors import ConfigError, UsageError
from sail.experts import DEFAULT_EXPERT, generate_teacher
from sail.models import ActMode, ModelBundle
from sail.trainer import (
    METRIC_COLUMNS,
    SailConfig,
    adversarial_update,
    behavioural_cloning,
    filter_append,
    pseudo_label,
    rollout_collect,
    train,
    train_idm,
)

TINY = SailConfig(
    epochs=2, idm_steps=20, idm_batch=32, bc_steps=20, bc_batch=32, adversarial_steps=3, rollout_episodes=2,
    random_episodes=3, window=8, replay_k=2, accuracy_windows=4, eval_episodes=2,
)


def rng(seed=0):
    return np.random.default_rng(seed)


@pytest.fixture(scope="module")
def mc_teacher():
    return generate_teacher("MountainCar-v0", DEFAULT_EXPERT["MountainCar-v0"], 5, rng=rng(1))


def params(model):
    return [p.data.copy() for p in model.parameters(trainable_only=False)]


def same(a, b):
    return all(x.tobytes() == y.tobytes() for x, y in zip(a, b))


# -- configuration ----------------------------------------------------------


def test_config_defaults():
    c = SailConfig()
    assert (c.idm_steps, c.idm_batch, c.bc_steps, c.bc_batch) == (500, 128, 500, 128)
    assert (c.adversarial_steps, c.replay_k, c.rollout_episodes, c.window) == (50, 8, 10, 32)
    assert (c.lambda_g, c.lambda_adv, c.replay_capacity, c.random_episodes) == (1.0, 0.1, 500, 100)
    assert (c.label_mode, c.eval_mode, c.eval_episodes) == ("sample", "argmax", 100)


@pytest.mark.parametrize(
    "change", [{"idm_steps": 0}, {"window": -1}, {"lambda_g": -0.5}, {"generator_loss": "l1"}, {"epochs": -1},
               {"learning_rate": 0.0}, {"eval_mode": "greedy"}],
)
def test_config_validation(change):
    with pytest.raises(ConfigError):
        dataclasses.replace(SailConfig(), **change)


def test_config_rejects_unknown_keys():
    with pytest.raises(ConfigError, match="bogus"):
        SailConfig.from_dict({"bogus": 1})


def test_ablation_flags():
    a = SailConfig().ablation()
    assert (a.lambda_g, a.lambda_adv, a.force_accept) == (0.0, 0.0, True)


# -- phases ------------------------------------------------------------------


def test_idm_learns_random_cartpole():
    samples = SampleSet(4)
    while len(samples) < 10_000:
        samples.extend_from_trajectories([], "random")
        s = collect_random("CartPole-v1", 100, rng(len(samples)))
        samples.append(*s.arrays()[:3], "random")
    bundle = ModelBundle.create("CartPole-v1", 4, 2, rng(1))
    st, _, sn, _ = samples.arrays()
    bundle.idm.fit_normalizer(st, sn)
    out = train_idm(bundle.idm, samples, 500, 128, nn.Adam(bundle.idm.parameters()), rng(2))
    assert out["idm_holdout_accuracy"] > 0.6


def test_idm_step_decreases_batch_loss():
    samples = collect_random("MountainCar-v0", 1, rng(3))
    s, a, sn, _ = samples.arrays()
    idm = ModelBundle.create("MountainCar-v0", 2, 3, rng(4)).idm
    idm.fit_normalizer(s, sn)
    opt = nn.Adam(idm.parameters())
    before = nn.cross_entropy(idm(s[:64], sn[:64]), a[:64])
    opt.zero_grad()
    before.backward()
    opt.step()
    assert nn.cross_entropy(idm(s[:64], sn[:64]), a[:64]).item() < before.item()


def test_idm_loss_on_random_labels_stays_near_log_k():
    samples = collect_random("MountainCar-v0", 5, rng(5))
    s, _, sn, _ = samples.arrays()
    noise = SampleSet(2)
    noise.append(s, rng(6).integers(0, 3, size=len(s)), sn, "random")
    idm = ModelBundle.create("MountainCar-v0", 2, 3, rng(7)).idm
    idm.fit_normalizer(s, sn)
    out = train_idm(idm, noise, 100, 128, nn.Adam(idm.parameters()), rng(8))
    assert out["idm_loss"] == pytest.approx(math.log(3), abs=0.05)


def test_train_idm_needs_samples():
    idm = ModelBundle.create("MountainCar-v0", 2, 3, rng()).idm
    with pytest.raises(UsageError):
        train_idm(idm, SampleSet(2), 1, 1, nn.Adam(idm.parameters()), rng())


def test_pseudo_label_count(mc_teacher):
    demos = StateOnlyDemos(mc_teacher)
    idm = ModelBundle.create("MountainCar-v0", 2, 3, rng()).idm
    labels = pseudo_label(idm, demos, ActMode.SAMPLE, rng(1))
    assert len(labels) == sum(len(t.states) - 1 for t in mc_teacher)


def test_confident_idm_sampling_equals_argmax(mc_teacher, monkeypatch):
    demos = StateOnlyDemos(mc_teacher)
    idm = ModelBundle.create("MountainCar-v0", 2, 3, rng()).idm

    def confident(states, next_states):
        choice = (np.arange(len(states)) % 3)
        return np.eye(3)[choice] * 1e3

    monkeypatch.setattr(idm, "logits", confident)
    sampled = pseudo_label(idm, demos, ActMode.SAMPLE, rng(2))
    argmax = pseudo_label(idm, demos, ActMode.ARGMAX)
    np.testing.assert_array_equal(sampled, argmax)


def test_pseudo_labels_agree_with_hidden_actions_after_warmup(mc_teacher):
    samples = collect_random("MountainCar-v0", 50, rng(3))
    s, _, sn, _ = samples.arrays()
    idm = ModelBundle.create("MountainCar-v0", 2, 3, rng(4)).idm
    idm.fit_normalizer(s, sn)
    train_idm(idm, samples, 300, 128, nn.Adam(idm.parameters()), rng(5))
    labels = pseudo_label(idm, StateOnlyDemos(mc_teacher), ActMode.SAMPLE, rng(6))
    truth = np.concatenate([t.hidden_actions for t in mc_teacher])
    assert (labels == truth).mean() > 1 / 3


def test_bc_without_generator_is_plain_cloning(mc_teacher):
    demos = StateOnlyDemos(mc_teacher)
    starts, nexts = demos.transition_pairs()
    labels = rng(1).integers(0, 3, size=len(starts))
    a = ModelBundle.create("MountainCar-v0", 2, 3, rng(2))
    b = ModelBundle.create("MountainCar-v0", 2, 3, rng(2))
    g_before = params(a.generator)
    behavioural_cloning(a.policy, a.generator, starts, nexts, labels, 10, 16, 0.0,
                        nn.Adam(a.policy.parameters()), nn.Adam(a.generator.parameters()), rng(3))
    assert same(params(a.generator), g_before)
    # reference: cross-entropy alone, same minibatches
    opt = nn.Adam(b.policy.parameters())
    r = rng(3)
    for _ in range(10):
        idx = r.integers(0, len(labels), size=16)
        opt.zero_grad()
        nn.cross_entropy(b.policy(starts[idx]), labels[idx]).backward()
        opt.step()
    assert same(params(a.policy), params(b.policy))


def test_bc_with_generator_moves_both(mc_teacher):
    demos = StateOnlyDemos(mc_teacher)
    starts, nexts = demos.transition_pairs()
    bundle = ModelBundle.create("MountainCar-v0", 2, 3, rng(2))
    bundle.generator.fit_normalizer(starts, nexts)
    g_before, p_before = params(bundle.generator), params(bundle.policy)
    out = behavioural_cloning(bundle.policy, bundle.generator, starts, nexts, np.zeros(len(starts), dtype=int), 5,
                              16, 1.0, nn.Adam(bundle.policy.parameters()), nn.Adam(bundle.generator.parameters()),
                              rng(3))
    assert not same(params(bundle.generator), g_before)
    assert not same(params(bundle.policy), p_before)
    assert np.isfinite(out["generator_loss"])


def test_bc_memorises_a_labelled_batch():
    s = rng(1).normal(size=(16, 2))
    labels = rng(2).integers(0, 3, size=16)
    bundle = ModelBundle.create("MountainCar-v0", 2, 3, rng(3))
    bundle.policy.input_norm.fit(s)
    opt = nn.Adam(bundle.policy.parameters(), lr=1e-2)
    for _ in range(300):
        opt.zero_grad()
        loss = nn.cross_entropy(bundle.policy(s), labels)
        loss.backward()
        opt.step()
    assert loss.item() < 0.01


def test_bc_rejects_mismatched_lengths():
    bundle = ModelBundle.create("MountainCar-v0", 2, 3, rng())
    with pytest.raises(ConfigError):
        behavioural_cloning(bundle.policy, bundle.generator, np.zeros((4, 2)), np.zeros((4, 2)), [0, 1], 1, 2, 0.0,
                            None, None, rng())


def test_rollout_collect_bookkeeping():
    policy = ModelBundle.create("MountainCar-v0", 2, 3, rng()).policy
    pos, trajs = rollout_collect(policy, "MountainCar-v0", 3, ActMode.SAMPLE, rng(1))
    assert len(trajs) == 3
    assert len(pos) == sum(t.transitions for t in trajs)
    env = make_env("MountainCar-v0")
    env.reset()
    for t in trajs:
        assert t.episode_return == -t.transitions
        for s, a, s_next in zip(t.states[:-1], t.hidden_actions, t.states[1:]):
            env.set_state(s)
            assert env.step(int(a)).next_state.tobytes() == s_next.tobytes()


def _adversarial_setup(mc_teacher):
    demos = StateOnlyDemos(mc_teacher)
    bundle = ModelBundle.create("MountainCar-v0", 2, 3, rng(5))
    bundle.discriminator.set_dropout_rng(rng(6))
    bundle.policy.input_norm.fit(demos.all_states())
    bundle.generator.fit_normalizer(*demos.transition_pairs())
    bundle.discriminator.input_norm.fit(demos.all_states())
    replay = ReplayBuffer()
    replay.extend(rollout_collect(bundle.policy, "MountainCar-v0", 2, ActMode.SAMPLE, rng(7))[1])
    opts = trainer.make_optimizers(bundle, 1e-3)
    return demos, bundle, replay, opts


def test_adversarial_without_policy_weight_leaves_policy(mc_teacher):
    demos, bundle, replay, opts = _adversarial_setup(mc_teacher)
    p0, g0, d0 = params(bundle.policy), params(bundle.generator), params(bundle.discriminator)
    adversarial_update(bundle, replay, demos, 3, 2, 8, 0.0, opts, rng(8), 4)
    assert same(params(bundle.policy), p0)
    assert same(params(bundle.generator), g0)
    assert not same(params(bundle.discriminator), d0)


def test_adversarial_with_weight_moves_policy_and_generator(mc_teacher):
    demos, bundle, replay, opts = _adversarial_setup(mc_teacher)
    p0, g0 = params(bundle.policy), params(bundle.generator)
    out = adversarial_update(bundle, replay, demos, 3, 2, 8, 0.1, opts, rng(8), 4)
    assert not same(params(bundle.policy), p0)
    assert not same(params(bundle.generator), g0)
    assert 0.0 <= out["discriminator_accuracy"] <= 1.0


def test_accuracy_measurement_does_not_perturb_training(mc_teacher):
    outcomes = []
    for windows in (4, 64):
        demos, bundle, replay, opts = _adversarial_setup(mc_teacher)
        adversarial_update(bundle, replay, demos, 2, 2, 8, 0.1, opts, rng(8), windows, measure_rng=rng(9))
        outcomes.append(params(bundle.policy) + params(bundle.discriminator))
    assert same(*outcomes)


def test_indistinguishable_inputs_sit_at_chance(mc_teacher):
    demos, bundle, _, _ = _adversarial_setup(mc_teacher)
    disc = bundle.discriminator
    disc.eval()
    windows, lengths = sample_windows(demos, 64, 8, rng(9))
    logits = disc(windows, lengths)
    loss = nn.bce_with_logits(logits, 1.0) + nn.bce_with_logits(logits, 0.0)
    assert loss.item() == pytest.approx(2 * math.log(2), abs=0.05)
    scores = disc.score(windows, lengths)
    from sail.metrics import balanced_accuracy

    assert balanced_accuracy(scores, scores) == 0.5


def test_adversarial_needs_a_buffer(mc_teacher):
    demos, bundle, _, opts = _adversarial_setup(mc_teacher)
    with pytest.raises(UsageError):
        adversarial_update(bundle, ReplayBuffer(), demos, 1, 2, 8, 0.1, opts, rng(), 4)


@pytest.mark.parametrize("score,expect_all", [(1.0, True), (0.0, False)])
def test_filter_append_with_frozen_discriminator(mc_teacher, monkeypatch, score, expect_all):
    bundle = ModelBundle.create("MountainCar-v0", 2, 3, rng())
    monkeypatch.setattr(bundle.discriminator, "score", lambda w, lengths=None, normalized=False: np.full(len(w), score))
    samples = SampleSet(2)
    n = filter_append(samples, mc_teacher, bundle, 32)
    total = sum(t.transitions for t in mc_teacher)
    assert n == (total if expect_all else 0)
    assert len(samples) == n


def test_filter_append_is_a_subset(mc_teacher):
    bundle = ModelBundle.create("MountainCar-v0", 2, 3, rng(2))
    samples = SampleSet(2)
    n = filter_append(samples, mc_teacher, bundle, 32)
    assert 0 <= n <= sum(t.transitions for t in mc_teacher)


def test_force_accept_skips_the_discriminator(mc_teacher, monkeypatch):
    bundle = ModelBundle.create("MountainCar-v0", 2, 3, rng())

    def boom(*args, **kwargs):
        raise AssertionError("discriminator consulted")

    monkeypatch.setattr(bundle.discriminator, "score", boom)
    assert filter_append(SampleSet(2), mc_teacher, bundle, 32, force_accept=True) == sum(
        t.transitions for t in mc_teacher
    )


# -- full loop ------------------------------------------------------------------


def test_zero_epochs_returns_untrained_bundle(mc_teacher):
    bundle, log = train(dataclasses.replace(TINY, epochs=0), "MountainCar-v0", mc_teacher)
    assert len(log) == 0 and log.best_epoch is None
    fresh = ModelBundle.create("MountainCar-v0", 2, 3, trainer.Streams(TINY.seed).init)
    assert same(params(bundle.policy.net), params(fresh.policy.net))


def test_log_schema_and_sample_growth(mc_teacher, tmp_path):
    bundle, log = train(dataclasses.replace(TINY, epochs=3), "MountainCar-v0", mc_teacher)
    assert len(log) == 3
    for record in log.records:
        assert set(record) == set(METRIC_COLUMNS)
    counts = log.column("sample_count")
    assert counts == sorted(counts)
    assert 1 <= log.best_epoch <= 3
    log.to_csv(tmp_path / "m.csv")
    assert (tmp_path / "m.csv").read_text().splitlines()[0] == ",".join(METRIC_COLUMNS)


def test_training_is_deterministic(mc_teacher, tmp_path):
    _, a = train(TINY, "MountainCar-v0", mc_teacher)
    _, b = train(TINY, "MountainCar-v0", mc_teacher)
    _, c = train(dataclasses.replace(TINY, seed=1), "MountainCar-v0", mc_teacher)
    a.to_csv(tmp_path / "a.csv")
    b.to_csv(tmp_path / "b.csv")
    c.to_csv(tmp_path / "c.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "a.csv").read_bytes() != (tmp_path / "c.csv").read_bytes()


def test_literal_ce_loop_runs(mc_teacher):
    _, log = train(dataclasses.replace(TINY, epochs=1, generator_loss="literal_ce"), "MountainCar-v0", mc_teacher)
    assert np.isfinite(log.records[0]["generator_loss"])


def test_ablation_never_touches_generator_or_discriminator(mc_teacher):
    config = TINY.ablation()
    initial = trainer.init_bundle(config, "MountainCar-v0", StateOnlyDemos(mc_teacher), trainer.Streams(config.seed))
    bundle, log = train(config, "MountainCar-v0", mc_teacher)
    assert same(params(bundle.generator), params(initial.generator))
    assert same(params(bundle.discriminator), params(initial.discriminator))
    assert set(log.records[0]) == set(METRIC_COLUMNS)


def test_ablation_policy_is_independent_of_generator_and_discriminator(mc_teacher, monkeypatch):
    config = TINY.ablation()
    base_bundle, base_log = train(config, "MountainCar-v0", mc_teacher)
    original = trainer.init_bundle

    def scrambled(*args):
        bundle = original(*args)
        r = rng(123)
        for model in (bundle.generator, bundle.discriminator):
            for p in model.parameters():
                p.data = r.normal(size=p.shape)
        return bundle

    monkeypatch.setattr(trainer, "init_bundle", scrambled)
    other_bundle, other_log = train(config, "MountainCar-v0", mc_teacher)
    assert same(params(base_bundle.policy), params(other_bundle.policy))
    assert base_log.column("policy_loss") == other_log.column("policy_loss")


class SealedTrajectory(Trajectory):
    """A teacher trajectory whose actions exist but must never be read."""

    @property
    def hidden_actions(self):
        raise AssertionError("teacher actions were read")


def seal(trajectory):
    sealed = copy.copy(trajectory)
    sealed.__class__ = SealedTrajectory
    return sealed


def test_training_never_reads_teacher_actions(mc_teacher):
    sealed = [seal(t) for t in mc_teacher]
    with pytest.raises(AssertionError):
        sealed[0].hidden_actions
    _, log = train(TINY, "MountainCar-v0", sealed)
    assert len(log) == TINY.epochs
