"""Command line entry point: ``mkglab <subcommand> ...``.

Exit status is 0 on success, 1 when a run or report finishes with failed
checks, and 2 on errors.  MKG_THREADS caps the FFT worker count.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np
import scipy.fft as sfft

from . import checks as checks_mod
from .config import load_config
from .diagnostics import sample
from .errors import ConfigInvalid, InsufficientSamples, MKGError
from .evolution import FieldState
from .experiment import (
    MOD_COLUMNS,
    modulation_row,
    run_experiment,
    sweep,
    unit_profile,
    write_diagnostics_csv,
    write_sweep_csv,
)
from .grid import GridSpec
from .ground_state import energy_identity_residuals, rescale_profile, solve_unit_profile
from .modulation import fit_lambda, modulation_residual
from .snapshot import list_snapshots, read_snapshot, write_snapshot
from .soliton import SolitonParams, sample_on_grid, velocity_field
from .spectra import assemble_operator, kernel_residual, lowest_eigenvalues

log = logging.getLogger("mkglab")


def _floats(text: str, count: int | None = None, name: str = "value") -> list[float]:
    try:
        vals = [float(c) for c in text.split(",") if c.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"{name}: {exc}") from exc
    if count is not None and len(vals) != count:
        raise argparse.ArgumentTypeError(f"{name} needs {count} comma-separated numbers, got {len(vals)}")
    return vals


def _lambda(text: str) -> SolitonParams:
    v = _floats(text, 8, "lambda")
    return SolitonParams.from_vector(v)


def _ints(text: str) -> list[int]:
    return [int(c) for c in text.split(",") if c.strip()]


# --- subcommands ------------------------------------------------------------------


def cmd_ground_state(args) -> int:
    kappa = math.sqrt(args.m**2 - args.omega**2) if args.omega < args.m else math.nan
    if not kappa > 0:
        raise MKGError(f"need 0 <= omega < m, got omega={args.omega}, m={args.m}")
    r_unit = (args.rmax * kappa) if args.rmax else 30.0
    unit = solve_unit_profile(args.p, r_max=r_unit, n=args.n)
    prof = rescale_profile(unit, args.m, args.omega)
    out = Path(args.out)
    with open(out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["r", "f", "df"])
        for row in zip(prof.r_samples, prof.f_samples, prof.df_samples):
            w.writerow(repr(float(x)) for x in row)
    side = {
        "m": args.m,
        "omega": args.omega,
        "p": args.p,
        "tail_rate": prof.tail_rate,
        "f0": prof.f0,
        "identity_residuals": list(energy_identity_residuals(prof)),
    }
    out.with_suffix(".json").write_text(json.dumps(side, indent=2) + "\n", encoding="utf-8")
    return 0


def cmd_soliton(args) -> int:
    L, n = args.grid
    grid = GridSpec(float(L), int(n))
    lam = args.lam
    phi, psi = sample_on_grid(grid, lam, unit_profile(args.p), args.m)
    z = np.zeros((4,) + grid.shape)
    state = FieldState(0.0, phi, psi, z, z.copy(), 0.0, 0.0, args.m, args.p, (0.0, 0.0, 0.0), grid)
    write_snapshot(args.out, state, {"lambda": list(lam.vector())})
    return 0


def cmd_spectra(args) -> int:
    prof = rescale_profile(unit_profile(args.p), args.m, args.omega)
    entries = []
    for which in ("plus", "minus"):
        for ell in args.sectors:
            op = assemble_operator(prof, which, ell, n=args.n)
            vals = lowest_eigenvalues(op, args.k)
            kr = {}
            if (which, ell) in (("minus", 0), ("plus", 1)):
                kr["zero_mode"] = kernel_residual(op, prof)
            entries.append(
                {
                    "sector": ell,
                    "operator": "L_" + which,
                    "eigenvalues": [float(v) for v in vals],
                    "negative_threshold": op.negative_threshold(),
                    "kernel_residuals": kr,
                }
            )
    doc = {"p": args.p, "m": args.m, "omega": args.omega, "entries": entries}
    text = json.dumps(doc, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_evolve(args) -> int:
    cfg = load_config(args.config)
    res = run_experiment(cfg, args.out)
    for c in res.report["checks"]:
        print(f"{'PASS' if c['passed'] else 'FAIL'} {c['name']}: {c['value']:.4g} (threshold {c['threshold']:.4g})")
    return 0 if res.report["passed"] else 1


def _load_states(directory):
    paths = list_snapshots(directory)
    if not paths:
        raise MKGError(f"no snapshots (*.mkg) in {directory}")
    states = [read_snapshot(p)[0] for p in paths]
    states.sort(key=lambda s: s.t)
    return states


def cmd_track(args) -> int:
    states = _load_states(args.snapshots)
    guess = args.guess
    prof = rescale_profile(unit_profile(states[0].p), states[0].m, guess.omega)
    records, J, prev = [], None, None
    for s in states:
        if prev is not None:
            guess = SolitonParams.from_vector(prev.lam.vector() + velocity_field(prev.lam) * (s.t - prev.t))
        prev = fit_lambda(s, prof, guess, jacobian=J)
        J = prev.jacobian
        records.append(prev)
    try:
        modulation_residual(records)
    except InsufficientSamples as exc:
        log.warning("gamma_dot not computed: %s", exc)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MOD_COLUMNS)
        for r in records:
            w.writerow(repr(float(v)) for v in modulation_row(r))
    return 0


def cmd_diagnose(args) -> int:
    states = _load_states(args.snapshots)
    samples, ref = [], None
    for s in states:
        smp = sample(s, args.R0, ref)
        ref = smp.centroid
        samples.append(smp)
    write_diagnostics_csv(args.out, samples)
    return 0


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    table = sweep(cfg, args.axis, args.values, out_dir=args.out, run=not args.static)
    if args.out is None:
        write_sweep_csv(sys.stdout, table)
    return 0


def cmd_report(args) -> int:
    names = [c.strip().upper() for c in args.checks.split(",") if c.strip()]
    unknown = [n for n in names if n not in checks_mod.CHECKS]
    if unknown:
        raise ConfigInvalid(f"unknown checks: {', '.join(unknown)}")
    results = checks_mod.run_checks(names, args.work_dir)
    for r in results:
        print(r.line())
    doc = {"checks": [r.to_dict() for r in results], "passed": all(r.passed for r in results)}
    if args.out:
        Path(args.out).write_text(json.dumps(doc, indent=2, default=_plain) + "\n", encoding="utf-8")
    return 0 if doc["passed"] else 1


def _plain(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(type(o).__name__)


# --- parser -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mkglab", description="Soliton experiments for the rescaled Maxwell-Klein-Gordon system.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ground-state", help="radial ground state as CSV plus a JSON sidecar")
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--m", type=float, default=1.0)
    p.add_argument("--omega", type=float, required=True)
    p.add_argument("--rmax", type=float, default=None, help="outer radius (default 30/kappa)")
    p.add_argument("--n", type=int, default=4000)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ground_state)

    p = sub.add_parser("soliton", help="write a soliton snapshot")
    p.add_argument("--lambda", dest="lam", type=_lambda, required=True, metavar="W,TH,XX,XY,XZ,UX,UY,UZ")
    p.add_argument("--grid", type=lambda s: _floats(s, 2, "grid"), required=True, metavar="L,N")
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--m", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_soliton)

    p = sub.add_parser("spectra", help="lowest eigenvalues of L+ and L- per angular sector")
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--m", type=float, default=1.0)
    p.add_argument("--omega", type=float, required=True)
    p.add_argument("--sectors", type=_ints, default=[0, 1, 2])
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--n", type=int, default=4000, help="radial grid points")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_spectra)

    p = sub.add_parser("evolve", help="run one experiment from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="run directory")
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("track", help="fit the modulation curve to a directory of snapshots")
    p.add_argument("--snapshots", required=True)
    p.add_argument("--guess", type=_lambda, required=True, metavar="W,TH,XX,XY,XZ,UX,UY,UZ")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("diagnose", help="diagnostics CSV for a directory of snapshots")
    p.add_argument("--snapshots", required=True)
    p.add_argument("--R0", type=float, default=4.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("sweep", help="run a config over several values of one parameter")
    p.add_argument("--config", required=True)
    p.add_argument("--axis", required=True, choices=("eps", "delta", "omega", "h"))
    p.add_argument("--values", type=_floats, required=True)
    p.add_argument("--static", action="store_true", help="skip the runs; only static columns")
    p.add_argument("--out", default=None, help="directory for the table and run directories")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="run named acceptance checks")
    p.add_argument("--checks", default=",".join(checks_mod.STATIC), help="comma list, e.g. A1,A2 (default: the fast ones)")
    p.add_argument("--work-dir", default=None, help="keep run directories here")
    p.add_argument("--out", default=None, help="JSON report path")
    p.set_defaults(func=cmd_report)
    return ap


def _workers() -> int:
    raw = os.environ.get("MKG_THREADS", "")
    try:
        return max(1, int(raw)) if raw else (os.cpu_count() or 1)
    except ValueError:
        return 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        with sfft.set_workers(_workers()):
            return args.func(args)
    except (MKGError, OSError, ValueError) as exc:
        print(f"mkglab {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
