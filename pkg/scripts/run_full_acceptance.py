#!/usr/bin/env python3
"""Produce the full-size runs read by the long acceptance criteria.

Usage::

    python3 scripts/run_full_acceptance.py --out runs/acceptance [--keys ac1-s0 burgers ...]
    SPPINN_ACCEPTANCE_RUNS=runs/acceptance pytest tests/test_acceptance.py

Entries that already have a RunRecord are left alone, so the script can be
interrupted and restarted. Each entry takes hours on a desktop CPU.
"""
import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))

import acceptance_plan as plan  # noqa: E402


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/acceptance")
    ap.add_argument("--keys", nargs="*", default=list(plan.PLAN), choices=list(plan.PLAN))
    ap.add_argument("--preset", default="full", choices=("full", "smoke"),
                    help="smoke only exercises the pipeline; it does not meet the criteria")
    args = ap.parse_args(argv)
    root = Path(args.out)
    failed = []
    for key in args.keys:
        if plan.is_complete(root, key):
            print(f"{key}: already complete")
            continue
        print(f"{key}: running", flush=True)
        code = plan.execute(root, key, preset_name=args.preset)
        print(f"{key}: exit code {code}", flush=True)
        if code:
            failed.append(key)
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
