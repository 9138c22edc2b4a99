"""Command-line entry point ``octbec``.

Examples
--------
``octbec optimize --preset fig1_single_well --out runs/fig1``
``octbec sweep --preset nonlinear_map --out runs/map --threads 4``
``octbec propagate --config my_run.toml``
"""

from __future__ import annotations

import argparse
import sys
import warnings

from . import config as cfgmod
from .runner import RunError, run

SUBCOMMANDS = ("groundstate", "propagate", "optimize", "optimize-spatial", "sweep", "wigner")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="octbec", description="Optimal control of condensate transport.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS + ("presets",):
        p = sub.add_parser(name)
        if name == "presets":
            continue
        p.add_argument("--config", help="TOML configuration file")
        p.add_argument("--preset", help="start from a named preset (see 'octbec presets')")
        p.add_argument("--out", help="output directory (overrides [output] directory)")
        p.add_argument("--threads", type=int, default=1, help="worker processes for sweeps")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "presets":
        from .presets import PRESETS

        for name in sorted(PRESETS):
            print(f"{name:24s} {PRESETS[name].get('experiment', '')}")
        return 0
    try:
        file_doc = cfgmod.load_file(args.config) if args.config else None
        extra = {"output": {"directory": args.out}} if args.out else None
        cfg = cfgmod.build(args.preset, file_doc, experiment=args.command, extra=extra)
    except (cfgmod.ConfigError, OSError) as exc:
        print(f"octbec: configuration error: {exc}", file=sys.stderr)
        return 2
    if args.threads < 1:
        print("octbec: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            result = run(cfg, workers=args.threads)
    except (RunError, ValueError, ArithmeticError, RuntimeError) as exc:
        print(f"octbec: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    out = result["output"]
    print(f"wrote {len(out.files)} files to {out.root}")
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
