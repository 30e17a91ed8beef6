#!/usr/bin/env python3
"""Allen-Cahn Case I: structure-preserving PINN against the baseline PINN.

Builds the self-converged reference, trains both models with the chosen
preset and prints a three-norm comparison table.

    python3 scripts/ac1_table.py --preset smoke --out runs/ac1-table
"""
import argparse
import logging
from dataclasses import replace
from pathlib import Path

from sppinn import cli
from sppinn.config import preset
from sppinn.evaluation import format_table
from sppinn.problems import get_problem


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--preset", default="smoke", choices=("full", "smoke"))
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="runs/ac1-table")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")

    out = Path(args.out)
    problem = get_problem("allen-cahn-1")
    ref = cli._reference(problem)
    ref.save(out / "allen-cahn-1.reference")
    rc = preset(args.preset)
    rc = replace(rc, model=replace(rc.model, seed=args.seed))
    _, sp = cli._train_one(problem, rc, out, False, ref)
    _, base = cli._train_one(problem, rc, out, True, ref)
    table = format_table({"SP-PINN": sp, "PINN": base}, f"Allen-Cahn Case I ({args.preset} preset)")
    (out / "table.txt").write_text(table)
    print(table)


if __name__ == "__main__":
    main()
