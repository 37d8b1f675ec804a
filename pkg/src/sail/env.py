"""Seedable classic-control environments: CartPole-v1, MountainCar-v0, Acrobot-v1.

Each environment owns a private ``numpy.random.Generator`` built from its
construction seed, so two instances created with the same seed and driven by
the same action sequence emit bit-identical observations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import constants as C
from .errors import ConfigError, UsageError


@dataclass(frozen=True)
class EnvSpec:
    name: str
    state_dim: int
    action_count: int
    max_steps: int
    solved_threshold: Optional[float] = None


@dataclass
class StepResult:
    next_state: np.ndarray
    reward: float
    done: bool
    truncated: bool = False


class Env:
    """Common episode bookkeeping; subclasses supply the dynamics."""

    spec: EnvSpec

    def __init__(self, seed: int = 0):
        self.seed = int(seed)
        self.rng = np.random.default_rng(self.seed)
        self.elapsed = 0
        self.done = True
        self._state = None

    def reset(self, seed: Optional[int] = None) -> np.ndarray:
        if seed is not None:
            self.seed = int(seed)
            self.rng = np.random.default_rng(self.seed)
        self._state = self._initial_state()
        self.elapsed = 0
        self.done = False
        return self.observation()

    def step(self, action: int) -> StepResult:
        if self._state is None or self.done:
            raise UsageError(f"{self.spec.name}: step() called on a finished episode; call reset() first")
        action = int(action)
        if not 0 <= action < self.spec.action_count:
            raise ConfigError(f"{self.spec.name}: action {action} outside [0, {self.spec.action_count})")
        terminated, reward = self._advance(action)
        self.elapsed += 1
        truncated = not terminated and self.elapsed >= self.spec.max_steps
        self.done = terminated or truncated
        return StepResult(self.observation(), reward, self.done, truncated)

    def get_state(self) -> tuple:
        """Internal simulator state (not necessarily the observation)."""
        return tuple(self._state)

    def set_state(self, state, elapsed: int = 0) -> None:
        self._state = [float(v) for v in state]
        self.elapsed = int(elapsed)
        self.done = False

    def set_observation(self, obs) -> None:
        """Place the simulator in the state that produces ``obs``."""
        self.set_state(self._state_from_observation(np.asarray(obs, dtype=np.float64)))

    def observation(self) -> np.ndarray:
        return np.array(self._state, dtype=np.float64)

    def _state_from_observation(self, obs: np.ndarray):
        return obs.tolist()

    def _initial_state(self):
        raise NotImplementedError

    def _advance(self, action: int) -> tuple[bool, float]:
        raise NotImplementedError


class CartPole(Env):
    spec = EnvSpec("CartPole-v1", 4, 2, C.CARTPOLE_MAX_STEPS, C.CARTPOLE_SOLVED)

    def _initial_state(self):
        return self.rng.uniform(-C.CARTPOLE_INIT_BOUND, C.CARTPOLE_INIT_BOUND, size=4).tolist()

    def _advance(self, action):
        x, x_dot, theta, theta_dot = self._state
        force = C.CARTPOLE_FORCE_MAG if action == 1 else -C.CARTPOLE_FORCE_MAG
        costheta = math.cos(theta)
        sintheta = math.sin(theta)
        temp = (force + C.CARTPOLE_POLEMASS_LENGTH * theta_dot**2 * sintheta) / C.CARTPOLE_TOTAL_MASS
        thetaacc = (C.CARTPOLE_GRAVITY * sintheta - costheta * temp) / (
            C.CARTPOLE_HALF_LENGTH
            * (4.0 / 3.0 - C.CARTPOLE_MASS_POLE * costheta**2 / C.CARTPOLE_TOTAL_MASS)
        )
        xacc = temp - C.CARTPOLE_POLEMASS_LENGTH * thetaacc * costheta / C.CARTPOLE_TOTAL_MASS
        # semi-implicit Euler: velocities first, positions from the new velocities
        x_dot = x_dot + C.CARTPOLE_TAU * xacc
        x = x + C.CARTPOLE_TAU * x_dot
        theta_dot = theta_dot + C.CARTPOLE_TAU * thetaacc
        theta = theta + C.CARTPOLE_TAU * theta_dot
        self._state = [x, x_dot, theta, theta_dot]
        terminated = (
            x < -C.CARTPOLE_X_LIMIT
            or x > C.CARTPOLE_X_LIMIT
            or theta < -C.CARTPOLE_THETA_LIMIT
            or theta > C.CARTPOLE_THETA_LIMIT
        )
        return terminated, 1.0


class MountainCar(Env):
    spec = EnvSpec("MountainCar-v0", 2, 3, C.MOUNTAINCAR_MAX_STEPS, C.MOUNTAINCAR_SOLVED)

    def _initial_state(self):
        return [float(self.rng.uniform(C.MOUNTAINCAR_INIT_LOW, C.MOUNTAINCAR_INIT_HIGH)), 0.0]

    def _advance(self, action):
        position, velocity = self._state
        velocity += (action - 1) * C.MOUNTAINCAR_FORCE + math.cos(3 * position) * (-C.MOUNTAINCAR_GRAVITY)
        velocity = min(max(velocity, -C.MOUNTAINCAR_MAX_SPEED), C.MOUNTAINCAR_MAX_SPEED)
        position += velocity
        position = min(max(position, C.MOUNTAINCAR_MIN_POSITION), C.MOUNTAINCAR_MAX_POSITION)
        if position == C.MOUNTAINCAR_MIN_POSITION and velocity < 0:
            velocity = 0.0
        self._state = [position, velocity]
        terminated = position >= C.MOUNTAINCAR_GOAL_POSITION and velocity >= C.MOUNTAINCAR_GOAL_VELOCITY
        return terminated, -1.0


def _wrap(x, lo, hi):
    diff = hi - lo
    while x > hi:
        x -= diff
    while x < lo:
        x += diff
    return x


def _acrobot_derivs(s, torque):
    m1, m2 = C.ACROBOT_LINK_MASS_1, C.ACROBOT_LINK_MASS_2
    l1 = C.ACROBOT_LINK_LENGTH_1
    lc1, lc2 = C.ACROBOT_LINK_COM_1, C.ACROBOT_LINK_COM_2
    i1 = i2 = C.ACROBOT_LINK_MOI
    g = C.ACROBOT_GRAVITY
    theta1, theta2, dtheta1, dtheta2 = s
    d1 = m1 * lc1**2 + m2 * (l1**2 + lc2**2 + 2 * l1 * lc2 * math.cos(theta2)) + i1 + i2
    d2 = m2 * (lc2**2 + l1 * lc2 * math.cos(theta2)) + i2
    phi2 = m2 * lc2 * g * math.cos(theta1 + theta2 - math.pi / 2.0)
    phi1 = (
        -m2 * l1 * lc2 * dtheta2**2 * math.sin(theta2)
        - 2 * m2 * l1 * lc2 * dtheta2 * dtheta1 * math.sin(theta2)
        + (m1 * lc1 + m2 * l1) * g * math.cos(theta1 - math.pi / 2)
        + phi2
    )
    ddtheta2 = (torque + d2 / d1 * phi1 - m2 * l1 * lc2 * dtheta1**2 * math.sin(theta2) - phi2) / (
        m2 * lc2**2 + i2 - d2**2 / d1
    )
    ddtheta1 = -(d2 * ddtheta2 + phi1) / d1
    return (dtheta1, dtheta2, ddtheta1, ddtheta2)


def _rk4(s, torque, dt):
    k1 = _acrobot_derivs(s, torque)
    k2 = _acrobot_derivs([v + dt / 2 * k for v, k in zip(s, k1)], torque)
    k3 = _acrobot_derivs([v + dt / 2 * k for v, k in zip(s, k2)], torque)
    k4 = _acrobot_derivs([v + dt * k for v, k in zip(s, k3)], torque)
    return [v + dt / 6.0 * (a + 2 * b + 2 * c + d) for v, a, b, c, d in zip(s, k1, k2, k3, k4)]


class Acrobot(Env):
    """Two-link underactuated pendulum; internal state is (theta1, theta2, dtheta1, dtheta2).

    The observation is (cos t1, sin t1, cos t2, sin t2, dt1, dt2).
    """

    spec = EnvSpec("Acrobot-v1", 6, 3, C.ACROBOT_MAX_STEPS, None)

    def _initial_state(self):
        return self.rng.uniform(-C.ACROBOT_INIT_BOUND, C.ACROBOT_INIT_BOUND, size=4).tolist()

    def _advance(self, action):
        torque = C.ACROBOT_TORQUES[action]
        ns = _rk4(self._state, torque, C.ACROBOT_DT)
        ns[0] = _wrap(ns[0], -math.pi, math.pi)
        ns[1] = _wrap(ns[1], -math.pi, math.pi)
        ns[2] = min(max(ns[2], -C.ACROBOT_MAX_VEL_1), C.ACROBOT_MAX_VEL_1)
        ns[3] = min(max(ns[3], -C.ACROBOT_MAX_VEL_2), C.ACROBOT_MAX_VEL_2)
        self._state = ns
        terminated = -math.cos(ns[0]) - math.cos(ns[1] + ns[0]) > C.ACROBOT_GOAL_HEIGHT
        return terminated, 0.0 if terminated else -1.0

    def observation(self):
        t1, t2, d1, d2 = self._state
        return np.array([math.cos(t1), math.sin(t1), math.cos(t2), math.sin(t2), d1, d2], dtype=np.float64)

    def _state_from_observation(self, obs):
        return [math.atan2(obs[1], obs[0]), math.atan2(obs[3], obs[2]), float(obs[4]), float(obs[5])]


ENVIRONMENTS = {cls.spec.name: cls for cls in (CartPole, MountainCar, Acrobot)}


def make_env(name: str, seed: int = 0) -> Env:
    try:
        cls = ENVIRONMENTS[name]
    except KeyError:
        raise ConfigError(f"unknown environment {name!r}; expected one of {sorted(ENVIRONMENTS)}") from None
    return cls(seed)


def env_spec(name: str) -> EnvSpec:
    return make_env(name).spec
