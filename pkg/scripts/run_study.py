"""Build one database per observable (P1, P2, P3) and run the VRR sweep on each.

    python scripts/run_study.py --preset desk --out results/desk
    python scripts/run_study.py --preset paper --out results/paper --workers 8   # long

Writes <out>/<obs>.db, <obs>_vrr.csv, <obs>_vrr.dat and the resolved config.
"""
import argparse
import logging
import time
from pathlib import Path

from dbmc import config as cfgmod
from dbmc.database import build_database, load_database, save_database
from dbmc.harness import vrr_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--preset", default="desk", choices=sorted(cfgmod.PRESETS))
    ap.add_argument("--config")
    ap.add_argument("--out", default="results")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--observables", default="P1,P2,P3")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for obs in args.observables.split(","):
        rc = cfgmod.load(args.preset, args.config, [("database", "observable", obs)], workers=args.workers)
        db_path = out / f"{obs}.db"
        if db_path.exists():
            db = load_database(db_path)
        else:
            t0 = time.perf_counter()
            db = build_database(rc.model, rc.nominals, rc.observable, rc.n_paths, rc.master_seed,
                                workers=args.workers)
            save_database(db, db_path)
            logging.info("%s database built in %.0fs", obs, time.perf_counter() - t0)
        rep = vrr_sweep(rc.sweep, db)
        rep.to_csv(out / f"{obs}_vrr.csv")
        rep.to_plot_table(out / f"{obs}_vrr.dat")
        rc.write(out / f"{obs}.config.ini")
        print(f"\n{obs}\n{rep.summary()}")


if __name__ == "__main__":
    main()
