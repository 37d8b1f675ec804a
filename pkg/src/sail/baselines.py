"""Comparison agents that need no adversarial machinery: Random, labelled BC and the SAIL ablation."""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass

import numpy as np

from . import nn
from .data import random_actor, run_episodes
from .env import env_spec
from .errors import ConfigError
from .models import PolicyModel
from .trainer import SailConfig, train

log = logging.getLogger(__name__)


class BaselineKind(str, enum.Enum):
    RANDOM = "Random"
    BC = "BC"
    SAIL_NO_ADVERSARIAL = "SailNoAdversarial"


@dataclass
class BCConfig:
    steps: int = 5000
    batch: int = 128
    learning_rate: float = 1e-3

    def __post_init__(self):
        if self.steps < 1 or self.batch < 1:
            raise ConfigError("BC steps and batch must be positive")
        if not self.learning_rate > 0:
            raise ConfigError("BC learning rate must be positive")


def labelled_pairs(trajectories):
    """Stack ``(s_t, a_t)`` over trajectories; every trajectory must carry its actions."""
    states, actions = [], []
    for i, t in enumerate(trajectories):
        if t.hidden_actions is None:
            raise ConfigError(f"BC needs teacher actions; trajectory {i} has none")
        states.append(t.states[:-1])
        actions.append(t.hidden_actions)
    if not states:
        raise ConfigError("teacher set is empty")
    return np.concatenate(states), np.concatenate(actions)


def train_bc(trajectories, env_name, config: BCConfig = None, rng=None):
    """Supervised cross-entropy on ground-truth ``(s, a)`` pairs; touches no environment."""
    config = config or BCConfig()
    rng = rng if rng is not None else np.random.default_rng(0)
    spec = env_spec(env_name)
    states, actions = labelled_pairs(trajectories)
    if states.shape[1] != spec.state_dim:
        raise ConfigError(f"teacher states have dimension {states.shape[1]}, {env_name} has {spec.state_dim}")
    policy = PolicyModel(spec.state_dim, spec.action_count, rng)
    policy.input_norm.fit(states)
    opt = nn.Adam(policy.parameters(), lr=config.learning_rate)
    policy.train()
    n = len(actions)
    for step in range(config.steps):
        idx = rng.integers(0, n, size=min(config.batch, n))
        opt.zero_grad()
        loss = nn.cross_entropy(policy(states[idx]), actions[idx])
        loss.backward()
        opt.step()
        if step % 1000 == 0:
            log.debug("bc step %d: loss %.4f", step, loss.item())
    return policy


def run_random(env_name, n_episodes, rng):
    """Returns of a uniform-random policy."""
    spec = env_spec(env_name)
    trajs = run_episodes(env_name, n_episodes, random_actor(spec.action_count, rng), rng)
    return [t.episode_return for t in trajs]


def train_sail_ablation(config: SailConfig, env_name, teacher, band=None):
    """SAIL with the generator loss, adversarial term and append gate disabled."""
    return train(config.ablation(), env_name, teacher, band)
