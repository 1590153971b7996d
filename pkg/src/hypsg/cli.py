"""Command line entry point: ``hypsg run|validate|list-kinds``."""
from __future__ import annotations

import argparse
import logging
import sys

from .experiments import (
    COLUMNS,
    EXIT_CONFIG,
    EXIT_OK,
    KINDS,
    OUTPUT_ENV,
    ConfigError,
    load_spec,
    run,
    validate,
)


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hypsg", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment spec (or a manifest from an earlier run)")
    r.add_argument("spec")
    r.add_argument("--output", help=f"output root (default: spec value, then ${OUTPUT_ENV}, then ./outputs)")
    r.add_argument("--check", action="store_true", help="exit 2 if an acceptance threshold fails")

    v = sub.add_parser("validate", help="report warnings and errors without running")
    v.add_argument("spec")

    sub.add_parser("list-kinds", help="list experiment kinds with their parameters")
    return ap


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")

    if args.command == "list-kinds":
        for kind, table in KINDS.items():
            print(kind)
            for key, (typ, default) in table.items():
                print(f"    {key:<14} {typ:<7} default {default}")
            print(f"    columns: {', '.join(COLUMNS[kind])}")
        return EXIT_OK

    try:
        spec = load_spec(args.spec)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    findings = validate(spec)
    if args.command == "validate":
        for f in findings:
            print(f"{f.level}: {f.message}")
        if not findings:
            print("ok: no findings")
        return EXIT_CONFIG if any(f.level == "error" for f in findings) else EXIT_OK

    errors = [f for f in findings if f.level == "error"]
    for f in findings:
        print(f"{f.level}: {f.message}", file=sys.stderr)
    if errors:
        return EXIT_CONFIG
    if args.check:
        spec.check = True
    if args.output:
        spec.output = args.output
    result = run(spec)
    if result.message:
        print(result.message, file=sys.stderr)
    for name, ok, value in result.checks if spec.check else []:
        print(f"{'PASS' if ok else 'FAIL'}  {name}  ({value})")
    if result.directory is not None:
        print(f"outputs in {result.directory}")
    return result.status


if __name__ == "__main__":
    sys.exit(main())
