"""Command line: ``parity-distill {run,validate,report}``.

Exit codes: 0 success, 2 configuration error, 1 runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys

from .boolean_fourier import CapacityError
from .distill import ConfigError
from .harness import load_config, report, run, validate


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="parity-distill", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="execute an experiment config")
    r.add_argument("--config", required=True)
    r.add_argument("--out", help="output directory (overrides the config)")
    r.add_argument("--seed", type=int, help="single seed (overrides the config)")
    r.add_argument("--threads", type=int, help="enumeration worker threads")
    v = sub.add_parser("validate", help="check a config without running it")
    v.add_argument("--config", required=True)
    v.add_argument("--seed", type=int)
    rep = sub.add_parser("report", help="summarize and verify a result bundle")
    rep.add_argument("--out", required=True)
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "report":
            info = report(args.out)
            print(json.dumps(info, indent=2, sort_keys=True))
            return 1 if info["corrupted"] else 0
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed, cfg.seeds = args.seed, None
        if args.command == "validate":
            findings = validate(cfg)
            for f in findings:
                print(f)
            if not findings:
                print("ok")
            return 2 if any(f.level == "error" for f in findings) else 0
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        bundle = run(cfg, args.out, args.threads)
        print(json.dumps(bundle.summary, indent=2, sort_keys=True))
        return 0
    except (ConfigError, CapacityError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - any failure maps to exit 1
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
