"""
DWS command line
Train, evaluate, sweep and ablate windowed actor-critic agents on toy control tasks.
"""

import argparse
import json
import logging
import os
import sys

from dotenv import load_dotenv

# Load environment variables
load_dotenv()

# Configure logging
logging.basicConfig(
    level=os.getenv("LOG_LEVEL", "INFO"),
    format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
)
logger = logging.getLogger(__name__)

from envs import ENV_CLASSES
from tools.ablate import cmd_ablate
from tools.evaluate import cmd_eval
from tools.oracle_suite import cmd_oracle_test
from tools.sweep import SWEEP_AXES, cmd_sweep
from tools.train import cmd_train
from utils.config import load_config, load_manifest, override_config
from utils.safety import safe_error

# Named flags and the config keys they set
FLAG_KEYS = {
    "env": "env.name",
    "algo": "algorithm",
    "window_h": "dws.h",
    "lambda_s": "dws.lambda_s",
    "profile": "dws.profile",
    "seeds": "seeds",
    "episodes": "episodes",
    "out": "output_dir",
}


def add_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key=value config file")
    parser.add_argument("--env", choices=sorted(ENV_CLASSES))
    parser.add_argument("--algo", choices=["vanilla", "dws", "action_chunk", "dws_eg"])
    parser.add_argument("--window-h", type=int)
    parser.add_argument("--lambda-s", type=float)
    parser.add_argument("--profile", choices=["zoh", "decay", "dissipative_linear"])
    parser.add_argument("--seeds", help="comma separated seeds, e.g. 0,1,2,3,4")
    parser.add_argument("--episodes", type=int)
    parser.add_argument("--out", help="output root directory")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    parser.add_argument("--workers", type=int, help="parallel worker processes")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dws", description=__doc__.strip().splitlines()[1])
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="train every seed of a config")
    add_run_flags(train)
    train.add_argument("--manifest", help="re-run from a manifest.json (or its run directory)")
    train.add_argument("--label", help="run directory name under the output root")

    ev = sub.add_parser("eval", help="noise-free evaluation of a checkpoint")
    ev.add_argument("checkpoint")
    ev.add_argument("--env")
    ev.add_argument("--episodes", type=int, default=20)
    ev.add_argument("--seed", type=int, default=0)
    ev.add_argument("--out", help="CSV path")

    sweep = sub.add_parser("sweep", help="sensitivity sweep over one axis")
    add_run_flags(sweep)
    sweep.add_argument("--axis", required=True, choices=sorted(SWEEP_AXES))
    sweep.add_argument("--grid", help="comma separated values (default grid per axis)")
    sweep.add_argument("--table", help="CSV path for the sweep table")

    ablate = sub.add_parser("ablate", help="six-variant component ablation")
    add_run_flags(ablate)
    ablate.add_argument("--table", help="CSV path for the ablation table")

    oracle = sub.add_parser("oracle-test", help="windowed-return oracle suite")
    oracle.add_argument("--mdp", help="MDP text file (default: built-in 5-state chain)")
    oracle.add_argument("--gamma", type=float, default=0.98)
    oracle.add_argument("--samples-per-key", type=int, default=20_000)
    oracle.add_argument("--seed", type=int, default=0)
    oracle.add_argument("--out", help="CSV path")
    return parser


def resolve_config(args: argparse.Namespace):
    flags = {key: getattr(args, name, None) for name, key in FLAG_KEYS.items()}
    return load_config(args.config, flags, args.set)


def run_train(args: argparse.Namespace) -> dict:
    if args.manifest:
        config, seed = load_manifest(args.manifest)
        if seed is not None:
            config = override_config(config, {"seeds": [seed]})
        if args.set:
            config = load_config(None, config.model_dump(mode="json"), args.set)
    else:
        config = resolve_config(args)
    return cmd_train(config, args.label, args.workers)


def run_eval(args: argparse.Namespace) -> dict:
    return cmd_eval(args.checkpoint, args.env, args.episodes, args.seed, args.out)


def run_sweep(args: argparse.Namespace) -> dict:
    return cmd_sweep(resolve_config(args), args.axis, args.grid, args.workers, args.table)


def run_ablate(args: argparse.Namespace) -> dict:
    return cmd_ablate(resolve_config(args), args.workers, args.table)


def run_oracle(args: argparse.Namespace) -> dict:
    return cmd_oracle_test(args.mdp, args.gamma, args.samples_per_key, args.seed, args.out)


COMMANDS = {
    "train": run_train,
    "eval": run_eval,
    "sweep": run_sweep,
    "ablate": run_ablate,
    "oracle-test": run_oracle,
}


def execute_command(command: str, args: argparse.Namespace) -> dict:
    """Execute a command by name; config errors come back as an error dict."""
    if command not in COMMANDS:
        raise ValueError(f"Command not found: {command}")
    try:
        return COMMANDS[command](args)
    except Exception as e:
        return {"error": safe_error(e, command)}


def main(argv: list[str] | None = None) -> int:
    """Parse arguments, run one command and print its JSON summary."""
    args = build_parser().parse_args(argv)
    logger.info(f"Running '{args.command}'")
    result = execute_command(args.command, args)
    print(json.dumps(result, indent=2, default=str))
    if "error" in result:
        logger.error(result["error"])
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
