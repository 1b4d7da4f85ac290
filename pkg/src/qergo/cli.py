"""Command line entry point: ``qergo <subcommand> [--config FILE] [--seed S] [--out DIR] [--threads T]``."""
from __future__ import annotations

import argparse
import json
import sys

from .errors import QergoError
from .runner import COMMANDS, load_config


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qergo", description="Quantum-ergodicity experiments on sparse graphs.")
    sub = p.add_subparsers(dest="command", required=True)
    helps = {"gen": "sample a graph and potential", "identities": "run the identity battery",
             "ergodicity": "quantum variance over an N ladder", "anderson": "ergodicity with disorder defaults",
             "bs-check": "finite spectra against tree limits"}
    for name in COMMANDS:
        s = sub.add_parser(name, help=helps[name])
        s.add_argument("--config", help="JSON config file (or a previous manifest.json)")
        s.add_argument("--seed", type=int)
        s.add_argument("--out", help="output directory")
        s.add_argument("--threads", type=int, help="worker threads (default: $QERGO_THREADS or 1)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.command, args.config, {"seed": args.seed, "out": args.out, "threads": args.threads})
        manifest = COMMANDS[args.command](cfg)
    except (QergoError, ValueError, OSError) as exc:
        print(f"qergo {args.command}: error: {exc}", file=sys.stderr)
        return 2
    for a in manifest["assertions"]:
        print(f"{'PASS' if a['passed'] else 'FAIL'} {a['name']}: {a['detail']}")
    print(json.dumps({"passed": manifest["passed"], "out": cfg.out}))
    return 0 if manifest["passed"] else 1


if __name__ == "__main__":
    sys.exit(main())
