"""Command-line driver: ``sail {gen-experts,train,evaluate,sweep,compare}``.

Exit codes: 0 success, 2 configuration error, 3 input error, 4 runtime or
numeric error. ``SAIL_LOG`` sets log verbosity (e.g. ``INFO``, ``DEBUG``).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from . import __version__
from .env import ENVIRONMENTS
from .errors import ConfigError, SailError
from .experts import DEFAULT_MIN_RETURN, ExpertKind
from .metrics import EVAL_EPISODES
from .runs import (
    RunConfig,
    compare_command,
    evaluate_command,
    gen_experts,
    read_config_file,
    sweep_command,
    train_command,
)

log = logging.getLogger("sail")

EXIT_OK = 0


def _int_list(text):
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _run_flags(p, counts=False):
    p.add_argument("--config", help="JSON file of settings (or a run manifest to replay)")
    p.add_argument("--env", choices=sorted(ENVIRONMENTS))
    p.add_argument("--teacher", help="teacher trajectory file (JSON Lines)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--seeds", type=_int_list, help="comma-separated seeds, one run each")
    p.add_argument("--epochs", type=int)
    p.add_argument("--eval-episodes", type=int, dest="eval_episodes")
    p.add_argument("--ablation", action="store_true", default=None,
                   help="disable the generator loss, adversarial term and append gate")
    if counts:
        p.add_argument("--counts", type=_int_list, help="teacher trajectory counts (default 1,25,50,75,100)")


def build_parser():
    parser = argparse.ArgumentParser(prog="sail", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-experts", help="roll out a scripted controller into a teacher file")
    p.add_argument("--env", choices=sorted(ENVIRONMENTS), required=True)
    p.add_argument("--episodes", type=int, default=100)
    p.add_argument("--min-return", type=float, dest="min_return",
                   help="keep only episodes at or above this return (default: per-environment bar)")
    p.add_argument("--controller", choices=[k.value for k in ExpertKind])
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)

    _run_flags(sub.add_parser("train", help="train SAIL on a teacher file"))

    p = sub.add_parser("evaluate", help="evaluate a model bundle, or 'random'")
    p.add_argument("bundle", help="bundle directory, or 'random' for the uniform-random policy")
    p.add_argument("--env", choices=sorted(ENVIRONMENTS))
    p.add_argument("--episodes", "--eval-episodes", type=int, default=EVAL_EPISODES, dest="episodes")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--teacher", help="teacher file; enables the normalised performance score")
    p.add_argument("--out", help="CSV file for the result row")

    _run_flags(sub.add_parser("sweep", help="SAIL over increasing teacher-set sizes"), counts=True)
    _run_flags(sub.add_parser("compare", help="Random, BC and SAIL side by side"))
    return parser


FLAG_KEYS = ("env", "teacher", "out", "seed", "seeds", "epochs", "eval_episodes", "ablation", "counts")


def resolve_config(args) -> RunConfig:
    """File settings overlaid by any flag that was given."""
    values = read_config_file(args.config) if args.config else {}
    for key in FLAG_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            values[key] = value
    return RunConfig.from_mapping(values)


def setup_logging():
    level_name = os.environ.get("SAIL_LOG", "WARNING").upper()
    level = logging.getLevelName(level_name)
    if not isinstance(level, int):
        raise ConfigError(f"SAIL_LOG must be a logging level name, got {level_name!r}")
    logging.basicConfig(level=level, format="%(asctime)s %(name)s %(levelname)s: %(message)s", stream=sys.stderr)


def _print_result(label, env_name, result):
    print(f"{label} {env_name}: AER {result.aer_mean:.2f} +- {result.aer_std:.2f}, performance {result.performance:.3f}")


def run(args):
    if args.command == "gen-experts":
        if args.episodes < 1:
            raise ConfigError("--episodes must be at least 1")
        min_return = args.min_return if args.min_return is not None else DEFAULT_MIN_RETURN[args.env]
        trajs = gen_experts(args.env, args.episodes, args.out, args.seed, min_return, args.controller)
        mean = sum(t.episode_return for t in trajs) / len(trajs)
        print(f"wrote {len(trajs)} episodes to {args.out} (mean return {mean:.2f})")
    elif args.command == "train":
        rc = resolve_config(args)
        for r in train_command(rc):
            _print_result(f"seed {r.seed} best epoch {r.log.best_epoch}", rc.env, r.result)
    elif args.command == "evaluate":
        if args.episodes < 1:
            raise ConfigError("--episodes must be at least 1")
        algorithm, env_name, result = evaluate_command(args.bundle, args.env, args.episodes, args.seed,
                                                       args.teacher, args.out)
        _print_result(algorithm, env_name, result)
    elif args.command == "sweep":
        rc = resolve_config(args)
        for row in sweep_command(rc):
            print(f"{row['env']} n={row['n_trajectories']}: P {row['P']:.3f}, AER {row['aer_avg']:.2f} +- {row['sd']:.2f}")
    elif args.command == "compare":
        rc = resolve_config(args)
        results, _ = compare_command(rc)
        for algorithm, env_name, result in results:
            _print_result(algorithm, env_name, result)
    return EXIT_OK


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        setup_logging()
        return run(args)
    except SailError as exc:
        print(f"sail: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (FloatingPointError, OverflowError) as exc:
        print(f"sail: numeric error: {exc}", file=sys.stderr)
        return SailError.exit_code
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())
