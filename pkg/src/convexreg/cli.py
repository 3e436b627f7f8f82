"""``convexreg`` command line: ``run <config>``, ``presets``, ``audit <config>``."""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .config import PIPELINES, ConfigError, parse_config
from .presets import DOMAIN_PRESETS, OPERATOR_PRESETS, RHS_PRESETS


def _load(path: str):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as err:
        raise ConfigError(f"cannot read {path}: {err.strerror}") from None
    return parse_config(text)


def _report(manifest) -> int:
    for name, v in manifest.verdicts.items():
        status = "pass" if v["passed"] else "FAIL"
        extra = f"  ({v['error']})" if v.get("error") else ""
        print(f"{name:18s} {status}{extra}")
    print(f"output: {manifest.output_dir}")
    return manifest.exit_status


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="convexreg", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run the pipelines of a configuration")
    p_run.add_argument("config")
    p_run.add_argument("-o", "--output", help="output directory (overrides the config)")
    p_run.add_argument("--concurrent", action="store_true",
                       help="run independent pipelines in parallel")
    p_audit = sub.add_parser("audit", help="Lorentz membership audit only")
    p_audit.add_argument("config")
    p_audit.add_argument("-o", "--output")
    sub.add_parser("presets", help="list domain, operator and rhs presets")
    args = parser.parse_args(argv)

    if args.command == "presets":
        print(json.dumps({"domain": DOMAIN_PRESETS, "operator": OPERATOR_PRESETS,
                          "rhs": RHS_PRESETS, "pipeline": PIPELINES}, indent=2))
        return 0

    from .pipelines import run

    try:
        cfg = _load(args.config)
    except ConfigError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return 2
    if args.command == "audit":
        cfg = replace(cfg, pipelines=("lorentz-audit",))
    elif args.concurrent:
        cfg = replace(cfg, concurrent=True)
    return _report(run(cfg, args.output))


if __name__ == "__main__":
    sys.exit(main())
