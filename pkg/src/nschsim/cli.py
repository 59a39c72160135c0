"""Command-line front end.

Four subcommands share a config file: ``run`` (time integration),
``stationary`` (single elliptic solve plus the interiority certificate),
``check`` (offline re-assertion of the ledger inequalities on a written
CSV), and ``reduce2`` (two-component cross-validation against the
independent scalar solver).

Exit codes: 0 on success, 2 when a structural invariant is violated
(energy inequality, interiority, oracle deviation), 1 for configuration,
I/O or solver failures.  The default output directory is taken from
``--out-dir``, then the ``NSCH_OUT_DIR`` environment variable, then the
config file, then the working directory.
"""

import argparse
import os
import sys

import numpy as np

from .errors import ConfigError, InvariantViolation, IoError, SolverError
from .io import read_timeseries
from .sim import OUT_DIR_ENV, load_config, reduce2_deviation, run

#: offline check uses the same default tolerance as the time loop
CHECK_TOL_ENERGY = 1e-9
#: acceptance threshold for the two-component reduction
REDUCE2_TOL = 1e-8


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="nsch-sim",
        description="multi-component flow simulator with a verified energy ledger",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_overrides(p):
        p.add_argument("--seed", type=int, default=None,
                       help="override the initial-condition seed")
        p.add_argument("--out-dir", default=None,
                       help="output directory (default: $NSCH_OUT_DIR, then config)")
        p.add_argument("--snapshot-every", type=int, default=None,
                       help="snapshot cadence in accepted steps (0 = final only)")
        p.add_argument("--h", type=float, default=None, help="override the step size")
        p.add_argument("--alpha", type=float, default=None,
                       help="override the velocity regularization weight")

    p_run = sub.add_parser("run", help="integrate the configured model in time")
    p_run.add_argument("config")
    add_overrides(p_run)

    p_st = sub.add_parser("stationary", help="solve the stationary problem")
    p_st.add_argument("config")
    add_overrides(p_st)

    p_ck = sub.add_parser("check", help="re-assert ledger inequalities on a CSV")
    p_ck.add_argument("csv")

    p_r2 = sub.add_parser("reduce2", help="compare the two-component reduction")
    p_r2.add_argument("config")
    add_overrides(p_r2)
    return parser


def _load_with_overrides(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.ic_seed = args.seed
    if args.h is not None:
        if args.h <= 0:
            raise ConfigError("--h must be positive")
        cfg.h_min = None
        cfg.h = args.h
        cfg.h_min = cfg.h / 64.0
    if args.alpha is not None:
        from dataclasses import replace

        cfg.params = replace(cfg.params, alpha=args.alpha)
    if args.snapshot_every is not None:
        cfg.snapshot_every = args.snapshot_every
    out = args.out_dir or os.environ.get(OUT_DIR_ENV) or cfg.out_dir or "."
    cfg.out_dir = out
    return cfg


def _cmd_run(args) -> int:
    cfg = _load_with_overrides(args)
    result = run(cfg)
    d = result.diagnostics
    print(f"accepted {d.accepted} steps, rejected {d.rejected} "
          f"({d.halvings} halvings)")
    print(f"worst slack {result.ledger.worst_slack():.3e}, "
          f"mass drift {d.cumulative_drift:.3e}")
    if d.t_star is not None:
        print(f"t* = {d.t_star:.6f}")
    if d.t_eq is not None:
        print(f"t_eq = {d.t_eq:.6f}")
    if result.csv_path:
        print(f"timeseries: {result.csv_path}")
    return 0


def _cmd_stationary(args) -> int:
    cfg = _load_with_overrides(args)
    cfg.mode = "stationary"
    result = run(cfg)
    row = result.ledger.rows[0]
    print(f"stationary residual {row.eq_residual:.3e}, "
          f"separation margin {row.sep_margin:.6e}")
    if row.sep_margin <= 0.0:
        print("separation certificate failed: solution touches a pure phase",
              file=sys.stderr)
        return 2
    return 0


def _cmd_check(args) -> int:
    rows = read_timeseries(args.csv)
    if not rows:
        print(f"{args.csv}: header only, nothing to check")
        return 0
    bad = []
    numeric = [k for k in rows[0] if k != "flags"]
    for i, row in enumerate(rows):
        for key in numeric:
            if not np.isfinite(row[key]):
                bad.append(f"row {i}: non-finite {key}")
        if not row["flags"].split(";")[0] in ("ok", "stationary"):
            continue  # rejected attempts are recorded, not bound by the estimate
        tol = CHECK_TOL_ENERGY * (1.0 + abs(row["E_tot"]))
        if row["slack"] < -tol:
            bad.append(f"row {i}: slack {row['slack']:.3e} below -{tol:.3e}")
        if row["sep_margin"] <= 0.0:
            bad.append(f"row {i}: accepted state touches the simplex boundary")
        if row["diss_visc"] < 0.0 or row["diss_ch"] < 0.0:
            bad.append(f"row {i}: negative dissipation")
        if row["h"] <= 0.0:
            bad.append(f"row {i}: nonpositive step size")
    if bad:
        for line in bad:
            print(f"{args.csv}: {line}", file=sys.stderr)
        return 2
    print(f"{args.csv}: {len(rows)} rows, all ledger inequalities hold")
    return 0


def _cmd_reduce2(args) -> int:
    cfg = _load_with_overrides(args)
    deviation, n_steps = reduce2_deviation(cfg)
    print(f"max deviation over {n_steps} steps: {deviation:.6e}")
    if deviation > REDUCE2_TOL:
        print(f"reduction mismatch: {deviation:.3e} exceeds {REDUCE2_TOL:.1e}",
              file=sys.stderr)
        return 2
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "stationary": _cmd_stationary,
        "check": _cmd_check,
        "reduce2": _cmd_reduce2,
    }
    try:
        return handlers[args.command](args)
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, IoError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
