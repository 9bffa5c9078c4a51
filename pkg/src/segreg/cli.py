"""Command-line entry point: segreg run | preset | verify.

Exit codes: 0 success, 2 configuration error, 3 contract violation,
4 verification failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .errors import ConfigError, ContractError
from .harness import PRESET_NAMES, preset, run
from .verify import SUITES, run_suite


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="segreg",
        description="Digit-lattice segmentation solver for black-box "
                    "regression and inverse problems.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment from a JSON config")
    p_run.add_argument("--config", required=True, help="experiment JSON file")
    p_run.add_argument("--out", help="write the report JSON here")
    p_run.add_argument("--trace", help="write the decision trace CSV here")
    p_run.add_argument("--seed", type=int, default=None,
                       help="override the config's master seed")
    p_run.add_argument("--threads", type=int, default=None,
                       help="worker threads for candidate evaluation "
                            "(default: config value or SEGREG_THREADS)")

    p_preset = sub.add_parser("preset", help="emit a built-in experiment config")
    p_preset.add_argument("name", choices=PRESET_NAMES)
    p_preset.add_argument("--out", help="write the config JSON here "
                                        "(default: stdout)")

    p_verify = sub.add_parser("verify", help="run a property suite")
    p_verify.add_argument("--suite", required=True, choices=sorted(SUITES))
    p_verify.add_argument("--seed", type=int, default=0)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            threads = args.threads
            if threads is None and "SEGREG_THREADS" in os.environ:
                threads = int(os.environ["SEGREG_THREADS"])
            artifacts = run(args.config, out=args.out, trace=args.trace,
                            seed=args.seed, threads=threads)
            summary = {
                "theta": [float(v) for v in artifacts.theta],
                "final_error": artifacts.final_error,
                "calls_raw": artifacts.report.calls_raw,
                "wall_time_s": round(artifacts.report.wall_time_s, 4),
            }
            if artifacts.per_component_error is not None:
                summary["per_component_error"] = [
                    float(v) for v in artifacts.per_component_error]
            print(json.dumps(summary, indent=2))
            return 0
        if args.command == "preset":
            cfg = preset(args.name)
            text = json.dumps(cfg.to_json(), indent=2)
            if args.out:
                with open(args.out, "w") as fh:
                    fh.write(text + "\n")
            else:
                print(text)
            return 0
        results = run_suite(args.suite, seed=args.seed)
        for row in results:
            print(row.line())
        return 0 if all(r.passed for r in results) else 4
    except (ConfigError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ContractError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
