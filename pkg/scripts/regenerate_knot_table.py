#!/usr/bin/env python3
"""Regenerate the committed mirror detuning knot table.

Reruns the exact search that produced src/dbdsim/data/oct_mirror_knots.txt:
the mirror-inversion cost on the truncated-Gaussian control window,
25 packet-quantile momentum samples at sigma_p = 0.05, a 12000-evaluation
budget and seed 7.  The two warm starts are the winning profiles of
earlier exploratory runs (one from a packet-quantile search, one from a
uniform-sample search); they are part of the pinned recipe because the
optimizer ranks them inside its prescan.

Run from the repository root:

    python3 scripts/regenerate_knot_table.py [--out PATH]

Takes a few minutes on one core.  The result is checked against the
committed table and the script exits non-zero on any mismatch, so this
doubles as a reproducibility test.
"""

import argparse
import sys
import time
from pathlib import Path

import numpy as np
from scipy.stats import norm

from dbdsim.strategies import (
    integrated_mirror_efficiency,
    load_knot_table,
    oct_mirror_problem,
    optimize,
    save_knot_table,
)

SEED = 7
BUDGET = 12000

# prescan warm starts: best knot vectors from two exploratory searches
# (packet-quantile sampling and uniform sampling respectively)
WARM_STARTS = (
    (1.997025, 3.8706, 3.57108, 2.292387, 1.473613, 0.379162,
     -1.168394, -2.175334),
    (4.0, 4.0, 3.53842, 2.4054, 1.46377, 0.44681, -1.1936, -1.68074),
)


def quantile_samples(n=25, sigma_p=0.05):
    """Packet momentum quantiles: equal-probability sample points."""
    return tuple(norm.ppf((np.arange(n) + 0.5) / n, scale=sigma_p))


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    default_out = (Path(__file__).resolve().parent.parent / "src" / "dbdsim"
                   / "data" / "oct_mirror_knots.txt")
    parser.add_argument("--out", default=str(default_out),
                        help="where to write the regenerated table")
    args = parser.parse_args(argv)

    problem = oct_mirror_problem(budget=BUDGET,
                                 momentum_samples=quantile_samples(),
                                 warm_starts=WARM_STARTS)
    t0 = time.perf_counter()
    result = optimize(problem, seed=SEED)
    elapsed = time.perf_counter() - t0
    eta = integrated_mirror_efficiency(result.best, sigma_p=0.05)
    print(f"cost={result.cost:.5f} evals={result.evaluations_used} "
          f"({elapsed:.0f}s)  eta(sigma_p=0.05)={eta:.5f}")

    save_knot_table(args.out, result.protocol, strategy="oct_hybrid",
                    seed=SEED)
    print(f"wrote {args.out}")

    committed = load_knot_table()
    if (committed.times != result.protocol.times
            or committed.values != result.protocol.values):
        print("MISMATCH: regenerated knots differ from the committed table",
              file=sys.stderr)
        return 1
    print("regenerated table matches the committed one")
    return 0


if __name__ == "__main__":
    sys.exit(main())
