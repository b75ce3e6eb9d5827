"""Command-line entry point: ``bench run`` and ``bench compare``."""
from __future__ import annotations

import argparse
import json
import sys

from ..errors import ConfigError
from .config import ESTIMATORS, OPTIMIZERS, load_config
from .synthetic import compare_estimators, run_synthetic, summary_path


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON file with default settings")
    p.add_argument("--dist", help="target distribution, e.g. poisson:20 or negbin:3,0.4")
    p.add_argument("--model-family", dest="model_family", help="model family if it differs from the target")
    p.add_argument("--K", type=int, help="number of targets / latent variables")
    p.add_argument("--trunc", type=int, help="truncation level n")
    p.add_argument("--tail-eps", dest="tail_eps", type=float, help="tail mass used to pick n automatically")
    p.add_argument("--tau0", type=float)
    p.add_argument("--tau-min", dest="tau_min", type=float)
    p.add_argument("--tau-decay", dest="tau_decay", type=float)
    p.add_argument("--optimizer", choices=OPTIMIZERS)
    p.add_argument("--lr", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--replicates", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="trajectory CSV path")
    p.add_argument("--baseline", action="store_true", default=None,
                   help="use a running-mean baseline with reinforce")
    p.add_argument("--kl-weight", dest="kl_weight", type=float)
    p.add_argument("--cadence", type=int, help="steps between gradient-moment probes")
    p.add_argument("--moment-repeats", dest="moment_repeats", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bench", description="Gradient estimator benchmarks.")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="train with one estimator")
    _add_common(run)
    run.add_argument("--estimator", choices=ESTIMATORS)
    compare = sub.add_parser("compare", help="train with several estimators on shared targets")
    _add_common(compare)
    compare.add_argument("--estimators", help="comma-separated estimator names")
    return parser


def main(argv=None) -> int:
    args = vars(build_parser().parse_args(argv))
    command = args.pop("command")
    path = args.pop("config")
    try:
        config = load_config(path, **args)
        if command == "run":
            result = run_synthetic(config)
            s = result["summary"]
            print(f"wrote {config.out} and {summary_path(config.out)}")
            print(json.dumps({k: v for k, v in s.items() if k.startswith(("final", "grid"))
                              and not k.endswith(".replicates")}, indent=2))
        else:
            result = compare_estimators(config)
            print(result["table"], end="")
    except (ConfigError, ValueError) as err:
        print(f"bench: error: {err}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
