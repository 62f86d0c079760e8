"""Command-line entry point: ``dbmc {build-db,estimate,sweep,validate,info}``.

Exit codes: 0 ok, 1 configuration error (or failed validation), 2 simulation
blow-up, 3 I/O or file-format error, 4 singular control covariance.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .cv import SingularCovariance
from .database import (ChecksumError, Database, FormatError, build_database, load_database, resample_indices,
                       save_database)
from .estimator import estimate_crude, estimate_cv_i1, estimate_cv_i2
from .harness import MacroReplicationError, gaussian_oracle_suite, vrr_sweep
from .tdgl import BlowUpError, ModelConfig

WORKERS_ENV = "DBMC_WORKERS"

log = logging.getLogger("dbmc")


def _default_workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def _load_config(args, extra=()) -> cfgmod.RunConfig:
    return cfgmod.load(args.preset, args.config, list(args.set or []) + list(extra), workers=args.workers)


def cmd_build_db(args) -> int:
    extra = []
    if args.db:
        extra.append(("database", "path", args.db))
    if args.seed is not None:
        extra.append(("database", "master_seed", str(args.seed)))
    rc = _load_config(args, extra)
    t0 = time.perf_counter()
    db = build_database(rc.model, rc.nominals, rc.observable, rc.n_paths, rc.master_seed, workers=args.workers)
    elapsed = time.perf_counter() - t0
    save_database(db, rc.db_path)
    rc.write(f"{rc.db_path}.config.ini")
    print(f"database   {rc.db_path}")
    print(f"N          {db.n_paths}")
    print(f"k          {db.k}")
    for t, mu in zip(db.nominals, db.means):
        print(f"J_DB({t:g}) = {float(mu)!r}")
    print(f"elapsed    {elapsed:.2f} s")
    return 0


def cmd_estimate(args) -> int:
    extra = [("database", "path", args.db)] if args.db else []
    rc = _load_config(args, extra)
    n = args.samples if args.samples is not None else rc.sweep.n_micro
    controls = None if args.controls is None else [int(c) for c in args.controls.split(",") if c.strip()]
    if args.scheme == "crude":
        est = estimate_crude(rc.model, args.theta, n, args.seed, rc.observable, workers=args.workers)
    else:
        db = load_database(rc.db_path)
        if args.scheme == "i1":
            est = estimate_cv_i1(db, args.theta, n, args.seed, controls=controls, workers=args.workers)
        else:
            sub = list(range(db.k)) if controls is None else controls
            est = estimate_cv_i2(db.model, args.theta, db.nominals[sub], db.means[sub], n, args.seed,
                                 db.observable_kind, workers=args.workers)
    out = {
        "scheme": est.scheme,
        "theta": est.theta,
        "estimate": est.estimate,
        "std_error": est.std_error,
        "sample_variance": est.sample_variance,
        "beta": [float(b) for b in est.beta],
        "r_squared": est.r_squared,
        "n": est.n,
    }
    if args.json:
        print(json.dumps(out))
    else:
        for k, v in out.items():
            print(f"{k:<16s}{v}")
    if args.out:
        Path(args.out).write_text(json.dumps(out, indent=2) + "\n")
        rc.write(f"{args.out}.config.ini")
    return 0


def cmd_sweep(args) -> int:
    extra = []
    if args.db:
        extra.append(("database", "path", args.db))
    if args.out:
        extra.append(("sweep", "output", args.out))
    if args.grid is not None:
        extra.append(("sweep", "theta_grid", args.grid))
    rc = _load_config(args, extra)
    db_path = Path(rc.db_path)
    if not db_path.exists() and args.build:
        log.info("building database %s", db_path)
        save_database(build_database(rc.model, rc.nominals, rc.observable, rc.n_paths, rc.master_seed,
                                     workers=args.workers), db_path)
        rc.write(f"{db_path}.config.ini")
    db = load_database(db_path)
    report = vrr_sweep(rc.sweep, db)
    out = Path(rc.sweep.output)
    report.to_csv(out)
    report.to_plot_table(out.with_suffix(".dat"))
    rc.write(f"{out}.config.ini")
    print(report.summary())
    failed = [r for r in report.rows if r.error]
    for r in failed:
        print(f"error: {r.estimator} at theta={r.theta:g}: {r.error}", file=sys.stderr)
    return 0


def _tiny_model() -> ModelConfig:
    return ModelConfig(lattice_size=8, n_steps=50, dt=0.01)


def _validation_checks(seed: int, db_path):
    results = []
    for c in gaussian_oracle_suite(seed):
        results.append((c.name, bool(c.passed), f"value={c.value:.6g} expected={c.expected:.6g}"))

    model = _tiny_model()
    a = build_database(model, [1.2, 1.35], "P3", 32, seed + 11)
    b = build_database(model, [1.2, 1.35], "P3", 32, seed + 11)
    results.append(("database build is deterministic", a.to_bytes() == b.to_bytes(), "tiny model, N=32"))

    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "check.db"
        save_database(a, path)
        results.append(("save/load roundtrip", load_database(path) == a, str(path.name)))
        data = path.read_bytes()
        path.write_bytes(data[:-1])
        results.append(("truncation detected", _raises(load_database, path, FormatError), "1 byte removed"))
        flipped = bytearray(data)
        flipped[12] ^= 0x01
        path.write_bytes(bytes(flipped))
        results.append(("header corruption detected", _raises(load_database, path, ChecksumError), "seed bit flipped"))

    idx = resample_indices(a, 64, seed)
    results.append(("resampling is seeded", np.array_equal(idx, resample_indices(a, 64, seed)), "n=64"))
    est = estimate_cv_i1(a, 1.2, 16, seed)
    results.append(("I1 at a nominal is exact", est.r_squared > 0.999, f"r_squared={est.r_squared:.12f}"))

    if db_path is not None:
        try:
            db = load_database(db_path)
            ok = bool(np.allclose(db.controls.mean(axis=0), db.means, rtol=1e-12, atol=0))
            results.append((f"database {db_path}", ok, "means match column averages" if ok else "means differ"))
        except (OSError, FormatError, ChecksumError) as exc:
            results.append((f"database {db_path}", False, f"{type(exc).__name__}: {exc}"))
    return results


def _raises(fn, arg, exc_type) -> bool:
    try:
        fn(arg)
    except exc_type:
        return True
    except Exception:
        return False
    return False


def cmd_validate(args) -> int:
    results = _validation_checks(args.seed, args.db)
    for name, ok, detail in results:
        print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    n_fail = sum(not ok for _, ok, _ in results)
    print(f"{len(results) - n_fail}/{len(results)} checks passed")
    return 0 if n_fail == 0 else 1


def cmd_info(args) -> int:
    db = load_database(args.db)
    for k, v in db.header().items():
        print(f"{k:<18s}{v}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI file with [model], [database] and [sweep] sections")
    common.add_argument("--preset", choices=sorted(cfgmod.PRESETS), help="built-in settings applied before --config")
    common.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override one config value")
    common.add_argument("--workers", type=int, default=_default_workers(),
                        help=f"worker processes (default ${WORKERS_ENV} or 1)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="dbmc", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    b = sub.add_parser("build-db", parents=[common], help="run the setup stage and save a database")
    b.add_argument("--db", help="output database path")
    b.add_argument("--seed", type=int, help="master seed")
    b.set_defaults(func=cmd_build_db)

    e = sub.add_parser("estimate", parents=[common], help="one estimate at a parameter value")
    e.add_argument("--theta", type=float, required=True)
    e.add_argument("--scheme", choices=("i1", "i2", "crude"), default="i1")
    e.add_argument("--samples", type=int, help="sample count n (default sweep.n_micro)")
    e.add_argument("--seed", type=int, default=0, help="resample seed (i1) or stream master seed (i2, crude)")
    e.add_argument("--controls", help="comma-separated nominal indices to use as controls")
    e.add_argument("--db", help="database path")
    e.add_argument("--json", action="store_true", help="print one JSON object")
    e.add_argument("--out", help="also write the result as JSON to this file")
    e.set_defaults(func=cmd_estimate)

    s = sub.add_parser("sweep", parents=[common], help="VRR sweep over a parameter grid")
    s.add_argument("--db", help="database path")
    s.add_argument("--out", help="CSV output path (plot table goes next to it with .dat)")
    s.add_argument("--grid", help="comma-separated theta grid")
    s.add_argument("--build", action="store_true", help="build the database first if it is missing")
    s.set_defaults(func=cmd_sweep)

    v = sub.add_parser("validate", parents=[common], help="oracle, determinism and file-integrity checks")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--db", help="also verify this database file")
    v.set_defaults(func=cmd_validate)

    i = sub.add_parser("info", parents=[common], help="print a database header")
    i.add_argument("db")
    i.set_defaults(func=cmd_info)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except cfgmod.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except MacroReplicationError as exc:
        return _report(exc.__cause__ or exc)
    except (BlowUpError, SingularCovariance, OSError, FormatError, ChecksumError) as exc:
        return _report(exc)


def _report(exc: BaseException) -> int:
    if isinstance(exc, BlowUpError):
        code, what = 2, "simulation blow-up"
    elif isinstance(exc, SingularCovariance):
        code, what = 4, "singular control covariance"
    elif isinstance(exc, (OSError, FormatError, ChecksumError)):
        code, what = 3, "I/O error"
    else:
        raise exc
    print(f"{what}: {exc}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
