"""Setup-cost accounting: how many estimations amortise the database.

Times one path simulation C at the chosen preset, then for each theta in a
sweep CSV reports the break-even number of estimations, i.e. the count m for
which the setup cost N*k*C equals the crude-sampling work saved,
m * n * (VRR - 1) * C.

    python scripts/efficiency.py --preset desk --csv results/desk/P3_vrr.csv
"""
import argparse
import time

import numpy as np

from dbmc import config as cfgmod
from dbmc.harness import read_csv
from dbmc.tdgl import simulate_paths


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--preset", default="desk")
    ap.add_argument("--csv", required=True)
    ap.add_argument("--timing-paths", type=int, default=32)
    args = ap.parse_args()
    rc = cfgmod.load(args.preset)
    simulate_paths(rc.model, [1.2], 0, [0])
    t0 = time.perf_counter()
    simulate_paths(rc.model, [1.2], 1, np.arange(args.timing_paths))
    cost = (time.perf_counter() - t0) / args.timing_paths
    setup = rc.n_paths * len(rc.nominals) * cost
    print(f"C = {cost * 1e3:.2f} ms/path, setup N*k*C = {setup:.0f} s")
    rep = read_csv(args.csv)
    print(f"{'estimator':>10s} {'theta':>7s} {'VRR':>10s} {'break-even':>12s}")
    for r in rep.rows:
        if r.estimator == "crude" or not np.isfinite(r.vrr) or r.vrr <= 1:
            continue
        m = setup / (r.n_micro * (r.vrr - 1) * cost)
        print(f"{r.estimator:>10s} {r.theta:7.4g} {r.vrr:10.4g} {m:12.2f}")


if __name__ == "__main__":
    main()
