"""Command-line entry point.

Each subcommand loads a JSON config, runs one method, and writes CSV
artifacts, figures, and a manifest into the output directory.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 I/O failure.
"""

from __future__ import annotations

import argparse
import sys

from .errors import ConfigError, NumericsError
from .harness import METHODS, load_config, override_seed, run, set_plots


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chaosmap",
        description="Deterministic chaos-map propagation of gradient-drift diffusions, "
                    "with Monte-Carlo and Fokker-Planck cross-checks.")
    from .harness import package_version
    parser.add_argument("--version", action="version", version=f"chaosmap {package_version()}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    descriptions = {
        "chaos": "propagate the transport map and write coefficient/moment tables",
        "mc": "Euler-Maruyama reference ensemble and moment estimates",
        "fp": "Fokker-Planck density evolution on a grid",
        "compare": "run several methods on one problem and cross-check moments",
        "wiener-dim": "basis growth of truncated-Wiener vs transformed formulations",
        "epsilon-study": "regularization error study over a list of epsilon values",
    }
    for name in METHODS:
        cmd = sub.add_parser(name, help=descriptions[name], description=descriptions[name])
        cmd.add_argument("--config", required=True, help="path to the JSON run configuration")
        cmd.add_argument("--out", required=True, help="output directory for artifacts")
        cmd.add_argument("--seed", type=int, default=None,
                         help="override every stochastic seed in the config")
        cmd.add_argument("--no-plots", action="store_true",
                         help="skip figure rendering, write only CSVs and the manifest")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = load_config(args.config, method=args.command)
        if args.seed is not None:
            config = override_seed(config, args.seed)
        if args.no_plots:
            config = set_plots(config, False)
        run(config, args.out)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except NumericsError as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return 3
    except OSError as err:
        print(f"i/o failure: {err}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
