"""Command-line entry point.

Single-run subcommands use the first N of ``N_grid`` and replication 0,
so their outputs line up with the first row of a rate experiment.
Exit codes: 0 success, 1 failed check, 2 usage or config error,
3 numerical abort.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from . import harness as H
from .coupling import CouplingIdentityError, build_slot_records, verify_interaction_identity
from .finite_system import NumericalAbort, simulate_finite

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_ABORT = 0, 1, 2, 3

COMMANDS = ("verify-stable", "simulate-finite", "build-coupling", "simulate-meanfield", "picard",
            "rate-experiment", "measure-convergence")


def _finite(cfg):
    N = cfg.N_grid[0]
    delta = cfg.delta_for(N)
    rng = cfg.stream("rate", N, 0)
    return simulate_finite(cfg.model_spec(), cfg.params, N, cfg.T, delta, cfg.h_for(delta), rng), rng


def cmd_verify_stable(cfg, out: Path) -> int:
    entries = H.run_distribution_suite(cfg)
    report = H.suite_to_dict(entries)
    H.write_json(report, out / "distribution_report.json")
    for e in entries:
        print(f"{'PASS' if e.passed else 'FAIL'}  {e.name}: {e.statistic:.3g} (bound {e.bound:.3g})")
    return EXIT_OK if report["passed"] else EXIT_FAIL


def cmd_simulate_finite(cfg, out: Path) -> int:
    traj, _ = _finite(cfg)
    traj.write_csv(out / "trajectory.csv")
    traj.atoms.write_csv(out / "atoms.csv")
    traj.write_npz(out / "trajectory.npz")
    print(f"N={traj.N} delta={traj.delta:.6g} slots={traj.n_slots} accepted={traj.accepted_count} "
          f"clamps={traj.clamp_count}")
    return EXIT_OK


def cmd_build_coupling(cfg, out: Path) -> int:
    traj, rng = _finite(cfg)
    spec = cfg.model_spec()
    records = build_slot_records(traj, spec, rng)
    records.write_csv(out / "slots.csv")
    try:
        report = verify_interaction_identity(traj, records, spec)
    except CouplingIdentityError as e:
        print(f"identity check failed: {e}", file=sys.stderr)
        return EXIT_FAIL
    H.write_json(report.summary(), out / "identity_report.json")
    print(f"max identity residual {report.max_residual:.3e} over {report.nonempty_slots} slots")
    return EXIT_OK


def cmd_simulate_meanfield(cfg, out: Path) -> int:
    fin, records, sub, mf = H.coupled_pair(cfg, cfg.N_grid[0], 0)
    records.write_csv(out / "slots.csv")
    mf.write_csv(out / "meanfield_trajectory.csv")
    with open(out / "mean_series.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "mu_f"])
        for k, v in enumerate(mf.mu_f):
            w.writerow([k, repr(float(v))])
    err = H.coupled_a_distance(fin.final, mf.final, cfg.q)
    print(f"coupled a-distance at T={cfg.T:g}: {err:.6g}")
    return EXIT_OK


def cmd_picard(cfg, out: Path) -> int:
    report = H.run_picard(cfg)
    H.write_json(report.to_dict(), out / "picard_report.json")
    print("distances " + " ".join(f"{d:.3e}" for d in report.distances))
    print(f"contracting={report.contracting} unique={report.unique}")
    return EXIT_OK if report.contracting and report.unique else EXIT_FAIL


def cmd_rate_experiment(cfg, out: Path) -> int:
    report = H.run_rate_experiment(cfg)
    H.write_rate_outputs(report, out)
    for r in report.rows:
        print(f"N={r.N:5d} delta={r.delta:.4f} mean={r.mean_error:.4g} +/- {r.half_width:.3g}")
    if report.slope is None:
        print("insufficient grid: slope undefined")
    else:
        print(f"slope {report.slope:.4f} (theory {report.exp_theory:.4f})")
    return EXIT_OK


def cmd_measure_convergence(cfg, out: Path) -> int:
    report = H.run_measure_convergence(cfg)
    H.write_measure_outputs(report, out)
    for r in report.rows:
        print(f"N={r['N']:5d} W_q={r['mean_w_q']:.4g} +/- {r['half_width']:.3g}")
    return EXIT_OK


HANDLERS = {
    "verify-stable": cmd_verify_stable,
    "simulate-finite": cmd_simulate_finite,
    "build-coupling": cmd_build_coupling,
    "simulate-meanfield": cmd_simulate_meanfield,
    "picard": cmd_picard,
    "rate-experiment": cmd_rate_experiment,
    "measure-convergence": cmd_measure_convergence,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stable-chaos",
                                description="Particle systems with stable collateral jumps.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="JSON experiment config")
        s.add_argument("--out", help="output directory (overrides config and environment)")
        s.add_argument("--workers", type=int, help="process count for replications")
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else EXIT_USAGE
    try:
        cfg = H.ExperimentConfig.load(args.config)
        if args.workers is not None:
            cfg = H.ExperimentConfig.from_dict({**cfg.to_dict(), "workers": args.workers})
    except FileNotFoundError:
        print(f"config not found: {args.config}", file=sys.stderr)
        return EXIT_USAGE
    except (H.ConfigError, ValueError, TypeError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_USAGE
    out = Path(args.out or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        return HANDLERS[args.command](cfg, out)
    except NumericalAbort as e:
        print(f"numerical abort: {e}", file=sys.stderr)
        return EXIT_ABORT


if __name__ == "__main__":
    sys.exit(main())
