#!/usr/bin/env python3
# reluflow
# See LICENSE for details.

# main.py: command-line entrypoint
# python main.py <subcommand> --config <path> --out <dir> [--seed N] [--t-max X] [--quiet] [--debug]

import argparse
import logging
import os
import sys
import traceback
from pathlib import Path

from rich.console import Console
from rich.logging import RichHandler

from core.controller import EXIT_USAGE, execute
from core.plugin_loader import describe_plugins, discover_plugins

LOG_FILE = Path(os.environ.get("RELUFLOW_LOG_FILE") or Path(__file__).resolve().parent / "reluflow.log")


def install_excepthook(debug: bool):
    """
    Global exception hook:
    - Always logs to reluflow.log
    - If debug=True, also prints the traceback to the console
    """
    def _excepthook(exc_type, exc, tb):
        try:
            logging.exception("Uncaught exception", exc_info=(exc_type, exc, tb))
            if debug:
                traceback.print_exception(exc_type, exc, tb)
            else:
                print(f"reluflow crashed: {exc} (details in {LOG_FILE})", file=sys.stderr)
        finally:
            sys.exit(1)

    sys.excepthook = _excepthook


def setup_logging(debug: bool, quiet: bool, console: Console):
    # Logging: INFO by default; DEBUG in debug mode
    LOG_FILE.parent.mkdir(parents=True, exist_ok=True)
    logging.basicConfig(
        filename=str(LOG_FILE),
        level=logging.DEBUG if debug else logging.INFO,
        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
    )
    handler = RichHandler(console=console, show_path=debug, markup=False)
    handler.setLevel(logging.WARNING if quiet or not debug else logging.DEBUG)
    logging.getLogger().addHandler(handler)


def build_parser(plugins) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="reluflow", formatter_class=argparse.RawDescriptionHelpFormatter,
                                     epilog="subcommands:\n" + describe_plugins(plugins),
                                     description="Gradient-flow experiments for shallow ReLU networks")
    parser.add_argument("subcommand", choices=sorted(plugins))
    parser.add_argument("--config", required=True, help="experiment config (JSON, or YAML by extension)")
    parser.add_argument("--out", required=True, help="artifact root directory")
    parser.add_argument("--seed", type=int, default=None, help="overrides init.seed and diagnostics.seed")
    parser.add_argument("--t-max", dest="t_max", type=float, default=None, help="overrides solver.t_max")
    parser.add_argument("--threads", type=int, default=None, help="worker threads (default: RELUFLOW_THREADS or CPU count)")
    parser.add_argument("--quiet", action="store_true", help="only warnings and the verdict on the console")
    parser.add_argument("--debug", action="store_true", help="DEBUG logging and tracebacks on the console")
    return parser


def main(argv=None) -> int:
    plugins = discover_plugins()
    args = build_parser(plugins).parse_args(argv)
    console = Console(stderr=False)
    setup_logging(args.debug, args.quiet, console)
    install_excepthook(args.debug)

    if args.seed is not None and args.seed < 0:
        logging.error("--seed must be >= 0")
        return EXIT_USAGE

    return execute(args.subcommand, args.config, args.out, seed=args.seed, t_max=args.t_max,
                   quiet=args.quiet, threads=args.threads, console=console)


if __name__ == "__main__":
    sys.exit(main())
