"""Average episodic reward, normalised performance, discriminator accuracy and CSV tables."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError

EVAL_EPISODES = 100

TABLE1_COLUMNS = ("algorithm", "env", "aer_mean", "aer_std", "performance")
TABLE2_COLUMNS = ("env", "n_trajectories", "P", "aer_avg", "aer_min", "aer_max", "sd")
TABLE3_COLUMNS = ("env", "d_accuracy_mean", "d_accuracy_std", "g_loss", "policy_performance")
SWEEP_COUNTS = (1, 25, 50, 75, 100)

# AER of methods that are not re-run here, copied from the published comparison table
REPORTED_AER = {
    "GAIL": {"CartPole-v1": (302.03, 158.96, 0.41), "MountainCar-v0": (-200.0, 0.0, 0.0), "Acrobot-v1": (-274.27, 116.85, 0.54)},
    "GAIfO": {"CartPole-v1": (500.0, 0.0, 1.0), "MountainCar-v0": (-200.0, 0.0, 0.0), "Acrobot-v1": (-128.20, 15.88, 0.85)},
    "IUPE": {"CartPole-v1": (500.0, 0.0, 1.0), "MountainCar-v0": (-166.97, 18.34, 0.32), "Acrobot-v1": (-75.65, 12.85, 1.0)},
}


@dataclass
class ReferenceBand:
    random_mean: float
    expert_mean: float

    def __post_init__(self):
        if self.expert_mean == self.random_mean:
            raise ConfigError("reference band is degenerate: expert and random means are equal")


@dataclass
class EvalResult:
    returns: list
    aer_mean: float
    aer_std: float
    performance: float = math.nan


def aer(returns):
    """Arithmetic mean and population standard deviation of episode returns."""
    r = np.asarray(list(returns), dtype=np.float64)
    if r.size == 0:
        raise ConfigError("AER of an empty return list")
    return float(r.mean()), float(r.std())


def performance(returns, band: ReferenceBand):
    """Mean over episodes of ``(r - random) / (expert - random)``; unbounded on either side."""
    r = np.asarray(list(returns), dtype=np.float64)
    if r.size == 0:
        raise ConfigError("performance of an empty return list")
    span = band.expert_mean - band.random_mean
    if span == 0:
        raise ConfigError("reference band is degenerate")
    return float(((r - band.random_mean) / span).mean())


def evaluate_returns(returns, band=None) -> EvalResult:
    mean, std = aer(returns)
    perf = performance(returns, band) if band is not None else math.nan
    return EvalResult(list(map(float, returns)), mean, std, perf)


def balanced_accuracy(teacher_scores, policy_scores, threshold=0.5):
    t = np.asarray(teacher_scores, dtype=np.float64)
    p = np.asarray(policy_scores, dtype=np.float64)
    if t.size == 0 or p.size == 0:
        raise ConfigError("balanced accuracy needs both teacher and policy samples")
    return 0.5 * (float((t >= threshold).mean()) + float((p < threshold).mean()))


def discriminator_accuracy(discriminator, teacher_windows, policy_windows, teacher_lengths=None, policy_lengths=None):
    """Balanced accuracy of ``discriminator`` at threshold 0.5, evaluation mode."""
    if len(teacher_windows) == 0 or len(policy_windows) == 0:
        raise ConfigError("balanced accuracy needs both teacher and policy windows")
    t = discriminator.score(teacher_windows, teacher_lengths)
    p = discriminator.score(policy_windows, policy_lengths)
    return balanced_accuracy(t, p)


# -- CSV ------------------------------------------------------------------


def fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return "" if value is None else str(value)


def write_csv(path, columns: Sequence[str], rows: Iterable):
    """Write dict-like or sequence rows under a fixed header, floats to 17 significant digits."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            values = [row[c] for c in columns] if isinstance(row, dict) else list(row)
            writer.writerow([fmt(v) for v in values])
    return path


def read_csv(path):
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def table1_rows(results):
    """``results``: iterable of ``(algorithm, env, EvalResult)``; appends reference rows for unreproduced methods."""
    rows = []
    envs = []
    for algorithm, env, res in results:
        rows.append(
            {"algorithm": algorithm, "env": env, "aer_mean": res.aer_mean, "aer_std": res.aer_std,
             "performance": res.performance}
        )
        if env not in envs:
            envs.append(env)
    for algorithm, by_env in REPORTED_AER.items():
        for env in envs:
            if env in by_env:
                mean, std, perf = by_env[env]
                rows.append(
                    {"algorithm": f"{algorithm} (paper-reported)", "env": env, "aer_mean": mean,
                     "aer_std": std, "performance": perf}
                )
    return rows


def table2_row(env, n_trajectories, result: EvalResult):
    r = np.asarray(result.returns, dtype=np.float64)
    return {
        "env": env,
        "n_trajectories": int(n_trajectories),
        "P": result.performance,
        "aer_avg": result.aer_mean,
        "aer_min": float(r.min()),
        "aer_max": float(r.max()),
        "sd": result.aer_std,
    }


def table3_row(env, accuracies, g_loss, policy_performance):
    acc = np.asarray(accuracies, dtype=np.float64)
    return {
        "env": env,
        "d_accuracy_mean": float(acc.mean()),
        "d_accuracy_std": float(acc.std()),
        "g_loss": float(g_loss),
        "policy_performance": float(policy_performance),
    }


def emit_report(directory, table1=(), table2=(), table3=()):
    """Write ``table1.csv``, ``table2.csv`` and ``table3.csv``; empty inputs give header-only files."""
    directory = Path(directory)
    return {
        "table1": write_csv(directory / "table1.csv", TABLE1_COLUMNS, table1),
        "table2": write_csv(directory / "table2.csv", TABLE2_COLUMNS, table2),
        "table3": write_csv(directory / "table3.csv", TABLE3_COLUMNS, table3),
    }
