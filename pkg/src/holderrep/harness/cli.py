"""Command line interface: ``holderrep <experiment> [options]``.

Exit codes: 0 all checks passed, 1 invalid configuration, 2 an acceptance
check (or the audit) failed, 3 input/output error.
"""
from __future__ import annotations

import argparse
import json
import sys

from .config import DEFAULTS, EXPERIMENTS, ConfigError, build_config, parse_config_file
from .runner import audit, run

EXIT_OK, EXIT_INVALID, EXIT_CHECK_FAILED, EXIT_IO = 0, 1, 2, 3

_FLAGS = {  # flag -> config key
    "seed": "seed", "paths": "n_paths", "grid": "grid", "H": "H", "alpha": "alpha",
    "a": "a", "horizon": "horizon", "out": "output_dir",
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="holderrep", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="experiment", required=True, metavar="experiment")
    keys = "\n".join(f"  {k:<14} {t.__name__:<6} {h}" for k, (t, _, h) in DEFAULTS.items())
    for name in EXPERIMENTS:
        s = sub.add_parser(name, help=f"run the {name} experiment",
                           formatter_class=argparse.RawDescriptionHelpFormatter,
                           epilog="configuration keys (for --config files and --set):\n" + keys)
        s.add_argument("--config", help="flat 'key = value' configuration file")
        s.add_argument("--seed", type=int)
        s.add_argument("--paths", type=int, help="number of paths")
        s.add_argument("--grid", help="grid steps, e.g. 4096 or 2^12")
        s.add_argument("--H", type=float, help="Hurst index")
        s.add_argument("--alpha", type=float)
        s.add_argument("--a", type=float)
        s.add_argument("--horizon", type=int)
        s.add_argument("--out", help="output root directory")
        s.add_argument("--audit", action="store_true",
                       help="re-aggregate the stored CSVs of this configuration and compare")
        s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override any configuration key")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        file_values = parse_config_file(args.config) if args.config else {}
    except OSError as e:
        print(f"error: cannot read config: {e}", file=sys.stderr)
        return EXIT_IO
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    cli = {key: getattr(args, flag) for flag, key in _FLAGS.items()}
    for item in args.set:
        if "=" not in item:
            print(f"error: --set expects KEY=VALUE, got {item!r}", file=sys.stderr)
            return EXIT_INVALID
        k, v = item.split("=", 1)
        cli[k.strip()] = v.strip()
    try:
        cfg = build_config(args.experiment, file_values, cli)
        report = audit(cfg) if args.audit else run(cfg)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    for name, c in report.checks.items():
        print(f"{'PASS' if c['passed'] else 'FAIL'} {name}: value={json.dumps(c['value'])} "
              f"threshold={json.dumps(c['threshold'])}")
    print(f"run directory: {report.run_dir}")
    if args.audit:
        if not report.audit_ok:
            for m in report.audit_mismatches:
                print(f"audit mismatch: {m}", file=sys.stderr)
            return EXIT_CHECK_FAILED
        print(f"audit: summary reproduced to {1e-12:g}")
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


if __name__ == "__main__":
    sys.exit(main())
