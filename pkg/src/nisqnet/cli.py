"""Command-line entry point: ``nisqnet <command> [--config F] [--seed N] [--out D] [--key value ...]``.

Dotted config keys can be overridden directly, e.g. ``--noise.k 1`` or
``--train.epochs=200``. On failure a single JSON line describing the error
is written to stderr and the exit code is nonzero.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import Sequence

from .config import DEFAULTS, ConfigError, load_config
from .experiments import RUNNERS

COMMANDS = {
    "train": "single-training",
    "generalize": "generalization",
    "sweep-noise": "noise-sweep",
    "identity-cost": "identity-cost",
    "transpile-report": "transpile-report",
}

EXIT_CONFIG = 2
EXIT_RUNTIME = 1


def _parse_overrides(extra: Sequence[str]) -> dict[str, str]:
    out: dict[str, str] = {}
    i = 0
    while i < len(extra):
        tok = extra[i]
        if not tok.startswith("--"):
            raise ConfigError(f"unexpected argument {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, value = key.split("=", 1)
        else:
            if i + 1 >= len(extra):
                raise ConfigError(f"missing value for --{key}")
            i += 1
            value = extra[i]
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        out[key] = value
        i += 1
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="nisqnet",
        description="Train and compare dissipative QNNs and QAOA circuits under gate noise.",
        epilog="Any config key may be overridden as --<key> <value>, e.g. --noise.k 1.",
    )
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--seed", help="unsigned 64-bit master seed")
    p.add_argument("--out", help="output directory")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    return p


def _fail(kind: str, message: str, code: int) -> int:
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)
    return code


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(message)s",
    )
    try:
        overrides = _parse_overrides(extra)
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.out is not None:
            overrides["out"] = args.out
        overrides["experiment"] = COMMANDS[args.command]
        cfg = load_config(args.config, overrides)
    except ConfigError as exc:
        return _fail("config", str(exc), EXIT_CONFIG)
    try:
        RUNNERS[cfg["experiment"]](cfg)
    except ConfigError as exc:
        return _fail("config", str(exc), EXIT_CONFIG)
    except (ValueError, ArithmeticError, OSError, RuntimeError) as exc:
        return _fail(type(exc).__name__, str(exc), EXIT_RUNTIME)
    print(json.dumps({"status": "ok", "experiment": cfg["experiment"], "out": cfg["out"]}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
