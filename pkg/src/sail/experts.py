"""Scripted teacher controllers for the three environments.

Each controller is a pure function from an observation to an action index.
They stand in for trained experts and land in the same return bands.
"""

from __future__ import annotations

import enum
import logging
import math

import numpy as np

from . import constants as C
from .data import Trajectory, run_episodes
from .env import env_spec
from .errors import ConfigError, QualityError, ShapeError

log = logging.getLogger(__name__)


class ExpertKind(str, enum.Enum):
    CARTPOLE_PD = "CartPolePD"
    MOUNTAINCAR_ENERGY = "MountainCarEnergy"
    ACROBOT_ENERGY = "AcrobotEnergy"


DEFAULT_EXPERT = {
    "CartPole-v1": ExpertKind.CARTPOLE_PD,
    "MountainCar-v0": ExpertKind.MOUNTAINCAR_ENERGY,
    "Acrobot-v1": ExpertKind.ACROBOT_ENERGY,
}

DEFAULT_MIN_RETURN = {"CartPole-v1": 475.0, "MountainCar-v0": -110.0, "Acrobot-v1": -100.0}

_STATE_DIM = {ExpertKind.CARTPOLE_PD: 4, ExpertKind.MOUNTAINCAR_ENERGY: 2, ExpertKind.ACROBOT_ENERGY: 6}

# cart-pole: push toward the side the pole is falling
CARTPOLE_ANGLE_RATE_WEIGHT = 0.5

# mountain car: on the first rightward swing from the valley the car cannot
# reach the flag, so it turns back early; on the way left it reverses before
# reaching the wall
MOUNTAINCAR_TURN_POSITION = -0.45
MOUNTAINCAR_TURN_ENERGY = -0.0004
MOUNTAINCAR_REVERSE_POSITION = -0.9

# acrobot: torque the elbow in phase with the elbow's velocity relative to the shoulder
ACROBOT_SHOULDER_WEIGHT = 0.5


def mountaincar_energy(position, velocity):
    """Kinetic plus potential energy per unit mass, in the simulator's step units."""
    return 0.5 * velocity * velocity + C.MOUNTAINCAR_GRAVITY / 3.0 * math.sin(3.0 * position)


def _cartpole(s):
    return 1 if s[2] + CARTPOLE_ANGLE_RATE_WEIGHT * s[3] > 0 else 0


def _mountaincar(s):
    position, velocity = s[0], s[1]
    if velocity > 0:
        low_energy = mountaincar_energy(position, velocity) < MOUNTAINCAR_TURN_ENERGY
        return 0 if position > MOUNTAINCAR_TURN_POSITION and low_energy else 2
    if velocity < 0:
        return 2 if position < MOUNTAINCAR_REVERSE_POSITION else 0
    return 2


def _acrobot(s):
    drive = s[5] - ACROBOT_SHOULDER_WEIGHT * s[4]
    if drive > 0:
        return 2
    if drive < 0:
        return 0
    return 1


_CONTROLLERS = {
    ExpertKind.CARTPOLE_PD: _cartpole,
    ExpertKind.MOUNTAINCAR_ENERGY: _mountaincar,
    ExpertKind.ACROBOT_ENERGY: _acrobot,
}


def expert_act(kind, state) -> int:
    kind = ExpertKind(kind)
    state = np.asarray(state, dtype=np.float64)
    if state.shape != (_STATE_DIM[kind],):
        raise ShapeError(f"{kind.value} expects a state of length {_STATE_DIM[kind]}, got {state.shape}")
    return _CONTROLLERS[kind](state)


def expert_actor(kind):
    fn = _CONTROLLERS[ExpertKind(kind)]

    def act(states, _indices):
        return np.array([fn(s) for s in states], dtype=np.int64)

    return act


def generate_teacher(env_name, kind, n_episodes, min_return=-math.inf, rng=None, max_attempts_factor=50):
    """Roll out a controller until ``n_episodes`` episodes reach ``min_return``.

    Raises :class:`QualityError` once ``max_attempts_factor * n_episodes``
    episodes have been tried without collecting enough.
    """
    if n_episodes < 1:
        raise ConfigError("n_episodes must be at least 1")
    kind = ExpertKind(kind)
    spec = env_spec(env_name)
    if spec.state_dim != _STATE_DIM[kind]:
        raise ConfigError(f"controller {kind.value} does not drive {env_name}")
    rng = rng if rng is not None else np.random.default_rng(0)
    act = expert_actor(kind)
    kept: list[Trajectory] = []
    attempts = 0
    cap = max_attempts_factor * n_episodes
    returns = []
    while len(kept) < n_episodes:
        batch = min(n_episodes - len(kept), cap - attempts)
        if batch <= 0:
            raise QualityError(
                f"controller {kind.value} kept {len(kept)}/{n_episodes} episodes with return >= {min_return} "
                f"after {attempts} attempts (mean return {np.mean(returns):.2f}, "
                f"min {np.min(returns):.2f}, max {np.max(returns):.2f})"
            )
        for traj in run_episodes(env_name, batch, act, rng):
            attempts += 1
            returns.append(traj.episode_return)
            if traj.episode_return >= min_return and len(kept) < n_episodes:
                kept.append(traj)
    log.info("%s: kept %d of %d episodes", kind.value, len(kept), attempts)
    return kept
