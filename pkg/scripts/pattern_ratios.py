"""Pattern proportions (complete, cause 1, cause 2) under MCAR and MAR cause 1.

Prints the Monte Carlo ratio next to the quadrature value for each model.
"""

import argparse

import numpy as np

from multicause import TRUE_THETA, HierarchicalModel, Mcar
from multicause.simulation import TRUE_P, TRUE_TAU1, TRUE_TAU2, expected_pattern_probs, pattern_ratio, simulate


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=200_000)
    p.add_argument("--seed", type=int, default=0)
    a = p.parse_args(argv)
    rng = np.random.default_rng(a.seed)
    models = {"mcar": HierarchicalModel((Mcar(TRUE_P), TRUE_TAU2)),
              "mar": HierarchicalModel((TRUE_TAU1, TRUE_TAU2))}
    print("model,source,complete,cause1,cause2")
    for name, model in models.items():
        mc = pattern_ratio(simulate(TRUE_THETA, model, a.n, rng).dataset)
        exact = expected_pattern_probs(TRUE_THETA, model)
        for source, v in (("simulated", mc), ("quadrature", exact)):
            print(f"{name},{source}," + ",".join(f"{x:.4f}" for x in v))


if __name__ == "__main__":
    main()
