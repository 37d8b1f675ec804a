"""Trajectories, transition sets, the replay buffer and the JSON-Lines trajectory format."""

from __future__ import annotations

import json
import logging
import math
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .env import Env, env_spec, make_env
from .errors import ConfigError, InputError, ParseError, UsageError, ValidationError

log = logging.getLogger(__name__)

RANDOM = "random"
POLICY = "policy"


@dataclass
class Trajectory:
    states: np.ndarray
    hidden_actions: Optional[np.ndarray] = None
    episode_return: float = 0.0

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=np.float64)
        if self.states.ndim != 2:
            raise ValidationError(f"trajectory states must be 2-D, got shape {self.states.shape}")
        if self.hidden_actions is not None:
            self.hidden_actions = np.asarray(self.hidden_actions, dtype=np.int64)
            if len(self.hidden_actions) != len(self.states) - 1:
                raise ValidationError(
                    f"trajectory has {len(self.states)} states but {len(self.hidden_actions)} actions"
                )

    def __len__(self):
        return len(self.states)

    @property
    def transitions(self):
        return len(self.states) - 1


class StateOnlyDemos:
    """Read-only view of teacher demonstrations carrying states and nothing else.

    This is the only form in which demonstrations reach the SAIL trainer; the
    constructor copies state arrays and drops every other field.
    """

    __slots__ = ("_states",)

    def __init__(self, trajectories: Sequence):
        states = []
        for t in trajectories:
            arr = np.array(t.states if isinstance(t, Trajectory) else t, dtype=np.float64)
            arr.setflags(write=False)
            states.append(arr)
        if not states:
            raise ConfigError("teacher set is empty")
        object.__setattr__(self, "_states", tuple(states))

    def __setattr__(self, name, value):
        raise AttributeError("StateOnlyDemos is immutable")

    def __len__(self):
        return len(self._states)

    def __iter__(self):
        return iter(self._states)

    def __getitem__(self, i):
        return self._states[i]

    @property
    def state_dim(self):
        return self._states[0].shape[1]

    def all_states(self):
        return np.concatenate(self._states, axis=0)

    def transition_pairs(self):
        """Stack consecutive ``(s_t, s_{t+1})`` pairs over all trajectories of length >= 2."""
        starts, nexts = [], []
        for i, s in enumerate(self._states):
            if len(s) < 2:
                log.warning("teacher trajectory %d has fewer than 2 states; skipped", i)
                continue
            starts.append(s[:-1])
            nexts.append(s[1:])
        if not starts:
            raise ConfigError("no teacher trajectory has a transition")
        return np.concatenate(starts), np.concatenate(nexts)


class SampleSet:
    """Growable store of ``(s_t, a_t, s_{t+1})`` transitions with provenance tags."""

    def __init__(self, state_dim: int):
        self.state_dim = state_dim
        self._chunks: list[tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]] = []
        self._cache = None

    def __len__(self):
        return sum(len(c[1]) for c in self._chunks)

    def append(self, states, actions, next_states, tag):
        states = np.asarray(states, dtype=np.float64).reshape(-1, self.state_dim)
        next_states = np.asarray(next_states, dtype=np.float64).reshape(-1, self.state_dim)
        actions = np.asarray(actions, dtype=np.int64).reshape(-1)
        if not len(states) == len(actions) == len(next_states):
            raise ValidationError("transition arrays differ in length")
        if len(actions) == 0:
            return
        tags = np.full(len(actions), tag, dtype=object)
        self._chunks.append((states, actions, next_states, tags))
        self._cache = None

    def extend_from_trajectories(self, trajectories, tag):
        for t in trajectories:
            self.append(t.states[:-1], t.hidden_actions, t.states[1:], tag)

    def arrays(self):
        if self._cache is None:
            if not self._chunks:
                empty = np.zeros((0, self.state_dim))
                self._cache = (empty, np.zeros(0, dtype=np.int64), empty.copy(), np.zeros(0, dtype=object))
            else:
                self._cache = tuple(np.concatenate(parts) for parts in zip(*self._chunks))
        return self._cache

    @property
    def tags(self):
        return self.arrays()[3]


class ReplayBuffer:
    """Bounded FIFO of policy state trajectories; the oldest entry is evicted first."""

    def __init__(self, capacity: int = 500):
        if capacity < 1:
            raise ConfigError("replay buffer capacity must be positive")
        self.capacity = capacity
        self._items = deque(maxlen=capacity)

    def add(self, states):
        self._items.append(np.asarray(states, dtype=np.float64))

    def extend(self, trajectories):
        for t in trajectories:
            self.add(t.states if isinstance(t, Trajectory) else t)

    def __len__(self):
        return len(self._items)

    def __iter__(self):
        return iter(self._items)

    def __getitem__(self, i):
        return self._items[i]


def sample_windows(source, k: int, window: int, rng: np.random.Generator):
    """Draw ``k`` windows of ``window`` consecutive states.

    Trajectories are chosen uniformly, then a start offset uniformly among the
    valid ones. Trajectories shorter than ``window`` are padded by repeating
    their final state; the returned ``lengths`` mark how many entries are real.
    """
    if k <= 0:
        raise UsageError(f"window count must be positive, got {k}")
    trajs = list(source)
    if not trajs:
        raise UsageError("cannot sample windows from an empty source")
    d = trajs[0].shape[1]
    out = np.empty((k, window, d))
    lengths = np.empty(k, dtype=np.int64)
    picks = rng.integers(0, len(trajs), size=k)
    for i, j in enumerate(picks):
        states = trajs[j]
        n = len(states)
        if n >= window:
            start = int(rng.integers(0, n - window + 1))
            out[i] = states[start : start + window]
            lengths[i] = window
        else:
            out[i, :n] = states
            out[i, n:] = states[-1]
            lengths[i] = n
    return out, lengths


def pad_windows(chunks, window: int):
    """Stack variable-length state chunks into a padded ``[n, window, d]`` array."""
    d = chunks[0].shape[1]
    out = np.empty((len(chunks), window, d))
    lengths = np.empty(len(chunks), dtype=np.int64)
    for i, c in enumerate(chunks):
        n = len(c)
        out[i, :n] = c
        out[i, n:] = c[-1]
        lengths[i] = n
    return out, lengths


# -- environment interaction ---------------------------------------------


def run_episodes(
    env_name: str,
    n_episodes: int,
    act: Callable[[np.ndarray, np.ndarray], np.ndarray],
    rng: np.random.Generator,
) -> list[Trajectory]:
    """Run ``n_episodes`` in lockstep, querying ``act(states, indices)`` once per tick.

    ``states`` holds the current observation of every unfinished episode and
    ``indices`` their episode numbers, in increasing order. Episode seeds are
    drawn from ``rng`` up front so results do not depend on batching.
    """
    if n_episodes < 1:
        raise ConfigError("n_episodes must be at least 1")
    seeds = rng.integers(0, 2**31 - 1, size=n_episodes)
    envs = [make_env(env_name, int(s)) for s in seeds]
    states = [[e.reset()] for e in envs]
    actions: list[list[int]] = [[] for _ in envs]
    returns = [0.0] * n_episodes
    active = list(range(n_episodes))
    while active:
        obs = np.stack([states[i][-1] for i in active])
        chosen = np.asarray(act(obs, np.asarray(active)), dtype=np.int64)
        still = []
        for i, a in zip(active, chosen):
            res = envs[i].step(int(a))
            states[i].append(res.next_state)
            actions[i].append(int(a))
            returns[i] += res.reward
            if not res.done:
                still.append(i)
        active = still
    return [
        Trajectory(np.stack(s), np.asarray(a, dtype=np.int64), r) for s, a, r in zip(states, actions, returns)
    ]


def random_actor(action_count: int, rng: np.random.Generator):
    def act(states, _indices):
        return rng.integers(0, action_count, size=len(states))

    return act


def collect_random(env, n_episodes: int, rng: np.random.Generator) -> SampleSet:
    """Uniform-random interaction; every transition is tagged ``random``."""
    name = env.spec.name if isinstance(env, Env) else env
    spec = env_spec(name)
    trajs = run_episodes(name, n_episodes, random_actor(spec.action_count, rng), rng)
    samples = SampleSet(spec.state_dim)
    samples.extend_from_trajectories(trajs, RANDOM)
    return samples


# -- file format ----------------------------------------------------------


def manifest_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".manifest.json")


def _check_floats(values):
    for v in values:
        if not math.isfinite(v):
            raise ValidationError("non-finite state value")


def save_trajectories(path, trajectories, env_name: str, seed: int = 0):
    """Write one JSON object per line plus a sidecar ``<path>.manifest.json``."""
    spec = env_spec(env_name)
    path = Path(path)
    lines = []
    for t in trajectories:
        if t.states.shape[1] != spec.state_dim:
            raise ValidationError(f"state dimension {t.states.shape[1]} does not match {env_name}")
        record = {"states": t.states.tolist()}
        if t.hidden_actions is not None:
            record["actions"] = t.hidden_actions.tolist()
        record["return"] = float(t.episode_return)
        lines.append(json.dumps(record, allow_nan=False))
    path.write_text("".join(line + "\n" for line in lines))
    manifest = {"env": env_name, "state_dim": spec.state_dim, "action_count": spec.action_count, "seed": int(seed)}
    manifest_path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def read_manifest(path) -> dict:
    mpath = manifest_path(path)
    try:
        manifest = json.loads(mpath.read_text())
    except FileNotFoundError:
        raise InputError(f"{mpath}: manifest not found") from None
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, mpath, exc.lineno) from exc
    for key in ("env", "state_dim", "action_count"):
        if key not in manifest:
            raise ParseError(f"manifest lacks {key!r}", mpath)
    spec = env_spec(manifest["env"])
    if manifest["state_dim"] != spec.state_dim or manifest["action_count"] != spec.action_count:
        raise ValidationError(f"{mpath}: dimensions disagree with {spec.name}")
    return manifest


def load_trajectories(path, env_name: Optional[str] = None):
    """Read a trajectory file; returns ``(trajectories, manifest)``."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"{path}: no such trajectory file")
    manifest = read_manifest(path)
    if env_name is not None and manifest["env"] != env_name:
        raise ValidationError(f"{path}: recorded for {manifest['env']}, not {env_name}")
    dim = manifest["state_dim"]
    trajectories = []
    try:
        handle = path.open()
    except OSError as exc:
        raise InputError(f"{path}: {exc}") from exc
    with handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                states = np.asarray(record["states"], dtype=np.float64)
                actions = record.get("actions")
                ret = float(record["return"])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"malformed trajectory record ({exc})", path, lineno) from exc
            if states.ndim != 2 or states.shape[1] != dim:
                raise ValidationError(
                    f"{path}:{lineno}: states have shape {states.shape}, manifest says dimension {dim}"
                )
            _check_floats(states.ravel())
            try:
                trajectories.append(Trajectory(states, actions, ret))
            except ValidationError as exc:
                raise ValidationError(f"{path}:{lineno}: {exc}") from exc
    return trajectories, manifest
