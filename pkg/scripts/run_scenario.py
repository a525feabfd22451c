"""Run one Monte Carlo scenario and write its CSV outputs.

    python scripts/run_scenario.py --id i --reps 500 --out-dir out/scenario_i
"""

import argparse
import sys

from multicause.cli import main


def run(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--id", default="i", choices=("i", "ii", "iii"))
    p.add_argument("--reps", type=int, default=500)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out-dir", default="out")
    a = p.parse_args(argv)
    code = main(["scenario", "--id", a.id, "--reps", str(a.reps), "--n", str(a.n), "--seed", str(a.seed),
                 "--workers", str(a.workers), "--out-dir", a.out_dir])
    if code == 0:
        with open(f"{a.out_dir}/rmse.csv", encoding="utf-8") as fh:
            sys.stdout.write(fh.read())
    return code


if __name__ == "__main__":
    sys.exit(run())
