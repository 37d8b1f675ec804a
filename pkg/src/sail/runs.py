"""Reproducible experiment runs: configuration merging, reference bands, manifests and output layout.

The command-line front end in :mod:`sail.cli` is a thin wrapper over the
functions here, which the acceptance suite also calls directly.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import shutil
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .baselines import BCConfig, run_random, train_bc
from .data import load_trajectories, save_trajectories
from .env import ENVIRONMENTS
from .errors import ConfigError, InputError, ParseError, ValidationError
from .experts import DEFAULT_EXPERT, generate_teacher
from .metrics import (
    EVAL_EPISODES,
    SWEEP_COUNTS,
    ReferenceBand,
    TABLE2_COLUMNS,
    emit_report,
    evaluate_returns,
    table1_rows,
    table2_row,
    table3_row,
    write_csv,
)
from .models import ActMode, ModelBundle
from .trainer import SailConfig, evaluate_policy, train

log = logging.getLogger(__name__)

MANIFEST_FORMAT = "sail-run-manifest"
BAND_EPISODES = 100

# separate seed streams for band measurement and held-out evaluation
BAND_STREAM = 101
EVAL_STREAM = 202


@dataclass
class RunConfig:
    """Everything a command needs; SailConfig fields sit at the top level of the JSON file."""

    env: Optional[str] = None
    teacher: Optional[str] = None
    out: Optional[str] = None
    seed: int = 0
    seeds: Optional[list] = None
    ablation: bool = False
    counts: list = field(default_factory=lambda: list(SWEEP_COUNTS))
    bc_steps: int = 5000
    sail: SailConfig = field(default_factory=SailConfig)

    RUN_KEYS = ("env", "teacher", "out", "seed", "seeds", "ablation", "counts", "bc_steps")

    @classmethod
    def from_mapping(cls, values: dict):
        values = dict(values)
        allowed = set(cls.RUN_KEYS) | set(SailConfig.field_names())
        unknown = sorted(set(values) - allowed)
        if unknown:
            raise ConfigError(f"unknown configuration keys: {unknown}")
        run = {k: values.pop(k) for k in cls.RUN_KEYS if k in values}
        sail_values = {"seed": run.get("seed", 0), **values}
        try:
            sail = SailConfig.from_dict(sail_values)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
        rc = cls(**run, sail=sail)
        rc.validate()
        return rc

    def validate(self):
        if self.env is not None and self.env not in ENVIRONMENTS:
            raise ConfigError(f"unknown environment {self.env!r}; choose from {sorted(ENVIRONMENTS)}")
        if self.seeds is not None:
            if not isinstance(self.seeds, list) or not self.seeds or not all(isinstance(s, int) for s in self.seeds):
                raise ConfigError("seeds must be a non-empty list of integers")
        if not self.counts or any(not isinstance(c, int) or c < 1 for c in self.counts):
            raise ConfigError("counts must be positive integers")
        if not isinstance(self.bc_steps, int) or self.bc_steps < 1:
            raise ConfigError("bc_steps must be a positive integer")

    def require(self, *names):
        missing = [n for n in names if getattr(self, n) is None]
        if missing:
            raise ConfigError(f"missing required setting(s): {', '.join(missing)}")

    def seed_list(self):
        return list(self.seeds) if self.seeds is not None else [self.seed]

    def to_mapping(self):
        out = {k: getattr(self, k) for k in self.RUN_KEYS}
        out.update(dataclasses.asdict(self.sail))
        return out


def read_config_file(path) -> dict:
    """A JSON object of settings, or a run manifest whose recorded config is reused."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror or exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, path, exc.lineno) from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: configuration must be a JSON object")
    if data.get("format") == MANIFEST_FORMAT:
        return dict(data["config"])
    return data


# -- hashing and manifests -------------------------------------------------


def blob_sha1(content: bytes) -> str:
    """Git's blob object id for ``content``."""
    return hashlib.sha1(b"blob %d\0" % len(content) + content).hexdigest()


def file_hash(path) -> str:
    return blob_sha1(Path(path).read_bytes())


def write_manifest(directory, command, rc: RunConfig, inputs=(), extra=None):
    manifest = {
        "format": MANIFEST_FORMAT,
        "version": __version__,
        "command": command,
        "config": rc.to_mapping(),
        "inputs": {str(p): file_hash(p) for p in inputs},
    }
    if extra:
        manifest.update(extra)
    path = Path(directory) / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


class staged_output:
    """Build outputs in a scratch directory and move them into place only on success."""

    def __init__(self, out):
        self.out = Path(out)

    def __enter__(self):
        self.out.parent.mkdir(parents=True, exist_ok=True)
        self.tmp = Path(tempfile.mkdtemp(prefix=f".{self.out.name}.", dir=self.out.parent))
        return self.tmp

    def __exit__(self, exc_type, exc, tb):
        if exc_type is not None:
            shutil.rmtree(self.tmp, ignore_errors=True)
            return False
        if self.out.exists():
            shutil.rmtree(self.out)
        self.tmp.rename(self.out)
        return False


# -- shared pieces ---------------------------------------------------------


def load_teacher(path, env_name=None):
    trajs, manifest = load_trajectories(path, env_name)
    if not trajs:
        raise ValidationError(f"{path}: teacher file holds no trajectories")
    return trajs, manifest


def measure_band(env_name, teacher_trajs, seed, episodes=BAND_EPISODES) -> ReferenceBand:
    """Random mean from fresh uniform-random episodes, expert mean from the teacher returns."""
    rng = np.random.default_rng([seed, BAND_STREAM])
    random_mean = float(np.mean(run_random(env_name, episodes, rng)))
    expert_mean = float(np.mean([t.episode_return for t in teacher_trajs]))
    return ReferenceBand(random_mean, expert_mean)


def held_out_evaluation(policy, env_name, episodes, seed, band=None):
    """Greedy evaluation on episode seeds disjoint from the per-epoch selection runs."""
    rng = np.random.default_rng([seed, EVAL_STREAM])
    return evaluate_policy(policy, env_name, episodes, ActMode.ARGMAX, rng, band)


def eval_row(algorithm, env_name, result):
    return {"algorithm": algorithm, "env": env_name, "aer_mean": result.aer_mean, "aer_std": result.aer_std,
            "performance": result.performance}


# -- commands --------------------------------------------------------------


def gen_experts(env_name, n_episodes, out, seed=0, min_return=-np.inf, controller=None):
    controller = controller or DEFAULT_EXPERT[env_name]
    trajs = generate_teacher(env_name, controller, n_episodes, min_return, np.random.default_rng(seed))
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_trajectories(out, trajs, env_name, seed)
    return trajs


@dataclass
class SailRun:
    seed: int
    bundle: ModelBundle
    log: object
    result: object
    band: ReferenceBand


def sail_run(rc: RunConfig, teacher_trajs, seed, band=None) -> SailRun:
    """One training run plus held-out evaluation of the best bundle."""
    config = dataclasses.replace(rc.sail, seed=seed)
    if rc.ablation:
        config = config.ablation()
    band = band or measure_band(rc.env, teacher_trajs, seed)
    bundle, metrics = train(config, rc.env, teacher_trajs, band)
    result = held_out_evaluation(bundle.policy, rc.env, config.eval_episodes, seed, band)
    return SailRun(seed, bundle, metrics, result, band)


def write_sail_run(directory, run: SailRun):
    directory = Path(directory)
    run.bundle.save(directory / "bundle")
    run.log.to_csv(directory / "metrics.csv")
    write_csv(directory / "eval.csv", ("algorithm", "env", "aer_mean", "aer_std", "performance"),
              [eval_row("SAIL", run.bundle.env_name, run.result)])


def train_command(rc: RunConfig, command="train"):
    rc.require("env", "teacher", "out")
    teacher, _ = load_teacher(rc.teacher, rc.env)
    seeds = rc.seed_list()
    runs = []
    with staged_output(rc.out) as tmp:
        for seed in seeds:
            run = sail_run(rc, teacher, seed)
            runs.append(run)
            write_sail_run(tmp if len(seeds) == 1 else tmp / f"seed-{seed}", run)
        if len(seeds) > 1:
            write_csv(tmp / "summary.csv", ("seed", "aer_mean", "aer_std", "performance", "best_epoch"),
                      [(r.seed, r.result.aer_mean, r.result.aer_std, r.result.performance, r.log.best_epoch)
                       for r in runs])
        band = runs[0].band
        write_manifest(tmp, command, rc, [rc.teacher],
                       {"band": {"random_mean": band.random_mean, "expert_mean": band.expert_mean}})
    return runs


def sweep_command(rc: RunConfig):
    rc.require("env", "teacher", "out")
    teacher, _ = load_teacher(rc.teacher, rc.env)
    need = max(rc.counts)
    if len(teacher) < need:
        raise ValidationError(f"{rc.teacher}: sweep needs {need} trajectories, file has {len(teacher)}")
    band = measure_band(rc.env, teacher, rc.seed)
    rows = []
    with staged_output(rc.out) as tmp:
        for count in rc.counts:
            run = sail_run(rc, teacher[:count], rc.seed, band)
            write_sail_run(tmp / f"n-{count}", run)
            rows.append(table2_row(rc.env, count, run.result))
            log.info("sweep %s n=%d: P %.3f", rc.env, count, run.result.performance)
        write_csv(tmp / "table2.csv", TABLE2_COLUMNS, rows)
        write_manifest(tmp, "sweep", rc, [rc.teacher],
                       {"band": {"random_mean": band.random_mean, "expert_mean": band.expert_mean}})
    return rows


def compare_command(rc: RunConfig):
    """Random, BC, SAIL (and, with ``ablation``, the ablated SAIL) on one environment; writes table1.csv and table3.csv."""
    rc.require("env", "teacher", "out")
    teacher, _ = load_teacher(rc.teacher, rc.env)
    seeds = rc.seed_list()
    band = measure_band(rc.env, teacher, seeds[0])
    results = []
    rng = np.random.default_rng([seeds[0], EVAL_STREAM])
    random_returns = run_random(rc.env, rc.sail.eval_episodes, rng)
    results.append(("Random", rc.env, evaluate_returns(random_returns, band)))
    bc = train_bc(teacher, rc.env, BCConfig(steps=rc.bc_steps), np.random.default_rng(seeds[0]))
    results.append(("BC", rc.env, held_out_evaluation(bc, rc.env, rc.sail.eval_episodes, seeds[0], band)))
    variants = [("SAIL", False)] + ([("SAIL-ablation", True)] if rc.ablation else [])
    table3 = []
    with staged_output(rc.out) as tmp:
        for name, ablate in variants:
            runs = [sail_run(dataclasses.replace(rc, ablation=ablate), teacher, s, band) for s in seeds]
            best = max(runs, key=lambda r: r.result.aer_mean)
            results.append((name, rc.env, best.result))
            for r in runs:
                write_sail_run(tmp / f"{name}-seed-{r.seed}", r)
            if not ablate:
                table3.append(
                    table3_row(
                        rc.env,
                        [r.log.best()["discriminator_accuracy"] for r in runs],
                        np.mean([r.log.records[-1]["generator_loss"] for r in runs]),
                        np.mean([r.result.performance for r in runs]),
                    )
                )
        emit_report(tmp, table1_rows(results), [], table3)
        write_manifest(tmp, "compare", rc, [rc.teacher],
                       {"band": {"random_mean": band.random_mean, "expert_mean": band.expert_mean}})
    return results, table3


def evaluate_command(bundle_path, env_name, episodes=EVAL_EPISODES, seed=0, teacher=None, out=None):
    """Evaluate a saved bundle, or the uniform-random policy when ``bundle_path == 'random'``."""
    bundle = None
    if bundle_path == "random":
        if env_name is None:
            raise ConfigError("evaluating the random policy needs --env")
    else:
        bundle = ModelBundle.load(bundle_path)
        if env_name is not None and env_name != bundle.env_name:
            raise ValidationError(f"bundle was trained on {bundle.env_name}, not {env_name}")
        env_name = bundle.env_name
    band = None
    if teacher is not None:
        trajs, _ = load_teacher(teacher, env_name)
        band = measure_band(env_name, trajs, seed)
    if bundle is None:
        rng = np.random.default_rng([seed, EVAL_STREAM])
        result = evaluate_returns(run_random(env_name, episodes, rng), band)
        algorithm = "Random"
    else:
        result = held_out_evaluation(bundle.policy, env_name, episodes, seed, band)
        algorithm = "SAIL"
    if out is not None:
        write_csv(out, ("algorithm", "env", "aer_mean", "aer_std", "performance"), [eval_row(algorithm, env_name, result)])
    return algorithm, env_name, result
