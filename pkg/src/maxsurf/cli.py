"""Command line entry point: maxsurf solve|reconstruct|slice|analyze|all."""

from __future__ import annotations

import argparse
import os
import sys


def _cap_threads():
    cap = os.environ.get("MAXSURF_THREADS")
    if cap:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, cap)


def main(argv=None):
    _cap_threads()
    parser = argparse.ArgumentParser(prog="maxsurf", description=__doc__)
    parser.add_argument("stage", choices=["solve", "reconstruct", "slice", "analyze", "all"])
    parser.add_argument("--config", required=True, help="path to a run configuration JSON file")
    parser.add_argument("--out", default=None, help="output directory (overrides config)")
    parser.add_argument("--seed", type=int, default=None, help="seed override for randomized sampling")
    parser.add_argument("--strict", action="store_true", default=None,
                        help="fail on zeros of q near grid nodes instead of puncturing")
    args = parser.parse_args(argv)

    from .config import load_config
    from .errors import ConfigError, MaxsurfError, NoConvergence
    from .pipeline import run_stages
    from .report import emit_report

    try:
        config = load_config(args.config, out_override=args.out,
                             seed_override=args.seed, strict_override=args.strict)
    except ConfigError as e:
        print(f"maxsurf: config error: {e}", file=sys.stderr)
        return 1

    stage = args.stage if args.stage != "all" else "all"
    try:
        res = run_stages(config, upto=stage)
    except NoConvergence as e:
        print(f"maxsurf: solver did not converge: {e}", file=sys.stderr)
        return 2
    except MaxsurfError as e:
        print(f"maxsurf: {e}", file=sys.stderr)
        return 2

    try:
        report = emit_report(res, config, config.output)
    except OSError as e:
        print(f"maxsurf: i/o error writing artifacts: {e}", file=sys.stderr)
        return 4

    if not res.bounds.get("all_pass", False):
        print("maxsurf: invariant suite failed (see report.json bounds section)", file=sys.stderr)
        return 3
    print(f"maxsurf: stage '{args.stage}' complete; artifacts in {config.output}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
