"""Run a configured experiment or a sweep of them and write the artifacts.

A run directory holds

    config.ini          the configuration as run
    snapshots/*.mkg     field snapshots (see mkglab.snapshot)
    diagnostics.csv     one DiagnosticsSample row per diagnostics time
    modulation.csv      one fitted modulation record per diagnostics time
    report.json         measured values and pass/fail invariant checks

Snapshots are written at every diagnostics time; those at multiples of
``snapshot_every`` are kept and the rest form a ring buffer of ``keep_last``.
"""

from __future__ import annotations

import csv
import functools
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, format_config
from .diagnostics import centroid_and_straightness, decomposition_residuals, sample
from .errors import ConfigInvalid, FitDiverged, InsufficientSamples, MKGError, NumericBlowup
from .evolution import (
    Stepper,
    build_initial_data,
    constraint_residual,
    energy_scale,
    make_perturbation,
)
from .grid import GridSpec
from .ground_state import GroundStateProfile, rescale_profile, solve_unit_profile
from .modulation import det_M0_closed_form, fit_lambda, modulation_residual
from .snapshot import write_snapshot
from .soliton import PARAM_NAMES, SolitonParams, sample_on_grid, velocity_field

log = logging.getLogger(__name__)

DIAG_CSV = "diagnostics.csv"
MOD_CSV = "modulation.csv"
REPORT = "report.json"
MOD_COLUMNS = ("t",) + PARAM_NAMES + ("orth_residual", "det_M", "v_h1", "w_l2", "gamma_dot_norm")
SWEEP_AXES = ("eps", "delta", "omega", "h")


@functools.lru_cache(maxsize=8)
def unit_profile(p: float) -> GroundStateProfile:
    return solve_unit_profile(p)


def profile_for(cfg: ExperimentConfig) -> GroundStateProfile:
    return rescale_profile(unit_profile(cfg.p), cfg.m, cfg.omega)


def initial_state(cfg: ExperimentConfig, prof: GroundStateProfile | None = None):
    prof = prof or profile_for(cfg)
    grid = GridSpec(cfg.L, cfg.n, cfg.dt, cfg.scheme)
    pert = None
    if cfg.profile == "gaussian" and cfg.amplitude > 0:
        pert = make_perturbation(grid, cfg.lam0, cfg.amplitude, seed=cfg.seed)
    return build_initial_data(grid, cfg.lam0, prof, cfg.eps, cfg.delta, u0=cfg.u0, perturbation=pert)


def _with_context(exc: Exception, phase: str, t: float, step: int) -> Exception:
    """Append run context to an exception's message, keeping its type and attributes."""
    ctx = f"[{phase}, t={t:.6g}, step {step}]"
    exc.args = (f"{exc.args[0] if exc.args else ''} {ctx}".strip(),) + tuple(exc.args[1:])
    exc.phase, exc.t, exc.step = phase, t, step
    return exc


class _SnapshotWriter:
    def __init__(self, directory: Path | None, every: float, keep_last: int, meta: dict):
        self.dir = directory
        self.every = every
        self.keep_last = keep_last
        self.meta = meta
        self.ring: list[Path] = []
        if directory is not None:
            directory.mkdir(parents=True, exist_ok=True)

    def __call__(self, state, k_diag: int, diag_every: float):
        if self.dir is None:
            return
        path = self.dir / f"snap_{k_diag:05d}.mkg"
        write_snapshot(path, state, self.meta)
        ratio = state.t / self.every
        if abs(ratio - round(ratio)) < 1e-9:
            return
        self.ring.append(path)
        while len(self.ring) > self.keep_last:
            self.ring.pop(0).unlink(missing_ok=True)


@dataclass
class RunResult:
    cfg: ExperimentConfig
    samples: list
    records: list
    report: dict
    decompositions: list = field(default_factory=list)
    final_state: object = None
    out_dir: Path | None = None

    @property
    def checks(self) -> dict:
        return {c["name"]: c for c in self.report["checks"]}

    @property
    def measured(self) -> dict:
        return self.report["measured"]


def _fit(state, prof, guess, J):
    try:
        return fit_lambda(state, prof, guess, jacobian=J)
    except FitDiverged:
        if J is None:
            raise
        return fit_lambda(state, prof, guess)


def run_experiment(cfg: ExperimentConfig, out_dir=None, decompose: bool = True) -> RunResult:
    """Evolve, sample diagnostics, fit the modulation curve and check invariants."""
    cfg.validate()
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.ini").write_text(format_config(cfg), encoding="utf-8")
    started = time.perf_counter()
    phase, k = "setup", 0
    try:
        prof = profile_for(cfg)
        phase = "initial data"
        state = initial_state(cfg, prof)
    except MKGError as exc:
        raise _with_context(exc, phase, 0.0, 0) from None

    coupled = state.coupling != 0.0
    constraint0 = constraint_residual(state) if coupled else 0.0
    per_diag = int(round(cfg.diag_every / cfg.dt))
    n_diag = int(round(cfg.t_end / cfg.diag_every))
    stepper = Stepper(state, cfg.dt)
    snaps = _SnapshotWriter(
        out / "snapshots" if out is not None else None,
        cfg.snapshot_every,
        cfg.keep_last,
        {"config": cfg.to_dict() | {"extra": None}},
    )

    weight = None
    if not any(cfg.u):
        weight = np.abs(sample_on_grid(state.grid, cfg.lam0, prof.unit(), prof.m)[0])
    samples, records, decomps, scales, phases = [], [], [], [], []
    reference = None
    J = None
    guess = cfg.lam0
    s = stepper.state
    for k in range(n_diag + 1):
        try:
            if k:
                phase = "step"
                s = stepper.advance(per_diag)
            phase = "modulation fit"
            rec = None
            if cfg.track:
                if records:
                    prev = records[-1]
                    guess = SolitonParams.from_vector(prev.lam.vector() + velocity_field(prev.lam) * (s.t - prev.t))
                rec = _fit(s, prof, guess, J)
                J = rec.jacobian
                records.append(rec)
            phase = "diagnostics"
            smp = sample(s, cfg.R0, reference, rec.lam if rec else None, records[0].lam if records else None, prof)
            reference = smp.centroid
            samples.append(smp)
            scales.append(energy_scale(s))
            if weight is not None:
                phases.append((s.t, float(np.angle(np.sum(s.phi * weight)))))
            if rec is not None and decompose:
                decomps.append(decomposition_residuals(s, rec, prof))
            phase = "snapshot"
            snaps(s, k, cfg.diag_every)
        except NumericBlowup as exc:
            if out is not None and exc.last_state is not None:
                write_snapshot(out / "blowup.mkg", exc.last_state, {"phase": phase})
            raise _with_context(exc, phase, s.t, k * per_diag) from None
        except MKGError as exc:
            raise _with_context(exc, phase, s.t, k * per_diag) from None
        log.info("t=%.3f  Q=%.6g  Pi0=%.6g", s.t, smp.Q, smp.Pi[0])

    gd_max = math.nan
    if len(records) >= 3:
        try:
            _, gd_max = modulation_residual(records)
        except InsufficientSamples:
            pass
    report = build_report(cfg, prof, samples, records, decomps, scales, phases, constraint0, s, gd_max)
    report["runtime_s"] = time.perf_counter() - started
    if out is not None:
        write_diagnostics_csv(out / DIAG_CSV, samples)
        if records:
            write_modulation_csv(out / MOD_CSV, records)
        with open(out / REPORT, "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2, sort_keys=True, default=_json_default)
    return RunResult(cfg, samples, records, report, decomps, s, out)


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(type(o).__name__)


def _check(name, value, threshold, passed, detail=""):
    return {"name": name, "passed": bool(passed), "value": value, "threshold": threshold, "detail": detail}


def _rel_drift(series):
    a = np.asarray(series, dtype=float)
    return float(np.max(np.abs(a - a[0])) / abs(a[0])) if a[0] else math.nan


def flat_errors(state, lam0: SolitonParams, prof: GroundStateProfile):
    """(modulus error, complex error) of a flat run against the exact travelling soliton."""
    g = state.grid
    lam_t = SolitonParams.from_vector(lam0.vector() + velocity_field(lam0) * state.t)
    phi_s, _ = sample_on_grid(g, lam_t, prof.unit(), prof.m)
    norm = g.l2(phi_s)
    return g.l2(np.abs(state.phi) - np.abs(phi_s)) / norm, g.l2(state.phi - phi_s) / norm


def build_report(cfg, prof, samples, records, decomps, scales, phases, constraint0, final, gd_max) -> dict:
    g = final.grid
    coupled = final.coupling != 0.0
    flat = not coupled and cfg.eps == 0.0
    exact = flat and cfg.amplitude == 0.0
    U = np.asarray(cfg.u) + 0.0
    measured = {
        "t_final": final.t,
        "dt": cfg.dt,
        "h": g.h,
        "charge_drift": _rel_drift([s.Q for s in samples]),
        "energy_drift": _rel_drift([s.Pi[0] for s in samples]),
        "max_gauge_residual": max(s.gauge_res for s in samples),
        "max_a_bootstrap": max(s.a_bootstrap for s in samples),
        "initial_constraint_residual": constraint0,
    }
    if cfg.eps > 0:
        measured["a_bootstrap_over_eps2"] = measured["max_a_bootstrap"] / cfg.eps**2
    checks = []

    if len(samples) >= 10:
        direction = U if np.any(U) else np.asarray(cfg.u0, dtype=float)
        perp, speed = centroid_and_straightness(samples, direction)
        measured["max_perp_dev"] = perp
        measured["fitted_speed"] = speed
        if exact and np.any(U):
            target = float(np.linalg.norm(U))
            checks.append(_check("speed", speed, target, abs(speed - target) <= 0.02 * target, "within 2%"))
            checks.append(_check("straightness", perp, g.h, perp < g.h, "max_perp_dev < h"))

    ext = [s.ext_energy_k1 for s in samples if math.isfinite(s.ext_energy_k1)]
    if len(ext) > 1 and ext[0] > 0:
        growth = max(ext) / ext[0]
        measured["exterior_energy_growth"] = growth
        checks.append(_check("exterior_energy_bounded", growth, 10.0, growth <= 10.0))

    if flat:
        checks.append(_check("charge_conservation", measured["charge_drift"], 1e-3, measured["charge_drift"] < 1e-3))
        checks.append(_check("energy_conservation", measured["energy_drift"], 1e-3, measured["energy_drift"] < 1e-3))
    if exact:
        mod_err, full_err = flat_errors(final, cfg.lam0, prof)
        measured["profile_error"] = mod_err
        measured["solution_error"] = full_err
        checks.append(_check("profile_error", mod_err, 1e-2, mod_err < 1e-2))
        if not np.any(U):
            rate = winding_rate(phases)
            measured["winding_rate"] = rate
            checks.append(_check("winding_rate", rate, cfg.omega, abs(rate - cfg.omega) <= 0.01 * cfg.omega, "within 1%"))
            pk = max(float(np.max(np.abs(s.Pi[1:]))) / s.Pi[0] for s in samples)
            measured["max_momentum_over_Pi0"] = pk
            checks.append(_check("momentum_symmetry", pk, 1e-6, pk < 1e-6))

    if coupled:
        ok = constraint0 < 1e-8
        checks.append(_check("initial_constraint", constraint0, 1e-8, ok))
        bound = 10.0 * (samples[0].gauge_res + g.h**2 * max(scales))
        measured["gauge_bound"] = bound
        gmax = measured["max_gauge_residual"]
        checks.append(_check("gauge_bounded", gmax, bound, gmax < bound))

    if records:
        orth = max(r.orth_residual for r in records)
        rem = [r.v_h1 + r.w_l2 for r in records]
        measured["max_orth_residual"] = orth
        measured["max_gamma_dot"] = gd_max
        measured["remainder_initial"] = rem[0]
        measured["remainder_max"] = max(rem)
        measured["lambda_initial"] = records[0].lam.vector()
        measured["lambda_final"] = records[-1].lam.vector()
        measured["min_det_M"] = min(abs(r.det_M) for r in records)
        measured["min_dH"] = min(s.dH for s in samples)
        checks.append(_check("fit_residual", orth, 1e-6, orth < 1e-6))
        if rem[0] > 0:
            ratio = max(rem) / rem[0]
            measured["remainder_growth"] = ratio
            checks.append(_check("remainder_bounded", ratio, 5.0, ratio < 5.0))
    if decomps:
        rq = max(d.rQ / abs(d.measured["Q"]) for d in decomps)
        measured["max_rQ_relative"] = rq
        measured["max_abs_gap"] = max(abs(d.gap) for d in decomps)
        checks.append(_check("charge_decomposition", rq, 1e-2, rq < 1e-2))

    return {
        "config": cfg.to_dict(),
        "measured": measured,
        "checks": checks,
        "passed": all(c["passed"] for c in checks),
    }


def winding_rate(pairs) -> float:
    """Least-squares slope of the unwrapped phase."""
    if len(pairs) < 2:
        return math.nan
    t = np.array([p[0] for p in pairs])
    ph = np.unwrap(np.array([p[1] for p in pairs]))
    return float(np.polyfit(t, ph, 1)[0])


# --- CSV output -------------------------------------------------------------------


def _fmt(x) -> str:
    return repr(float(x))


def write_diagnostics_csv(path, samples) -> None:
    rows = [s.row() for s in samples]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(rows[0].keys())
        for r in rows:
            w.writerow(_fmt(v) for v in r.values())


def modulation_row(rec) -> list:
    gd = rec.gamma_dot
    gdn = float(np.linalg.norm(gd)) if gd is not None else math.nan
    return [rec.t, *rec.lam.vector(), rec.orth_residual, rec.det_M, rec.v_h1, rec.w_l2, gdn]


def write_modulation_csv(path, records) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MOD_COLUMNS)
        for r in records:
            w.writerow(_fmt(v) for v in modulation_row(r))


# --- sweeps -------------------------------------------------------------------------


SWEEP_OBSERVABLES = ("gamma_dot_norm", "max_perp_dev", "a_bootstrap", "profile_error", "det_M0")


def sweep(cfg: ExperimentConfig, axis: str, values, out_dir=None, run: bool = True) -> list[dict]:
    """One row per value plus a ratio row between each consecutive pair.

    Value rows carry the scaling observables; ratio rows hold obs[i]/obs[i+1]
    and the log-ratio order log(obs[i]/obs[i+1]) / log(value[i]/value[i+1]).
    With ``run=False`` only the static column det_M0 is filled.
    """
    if axis not in SWEEP_AXES:
        raise ConfigInvalid(f"sweep axis must be one of {', '.join(SWEEP_AXES)}, got {axis!r}")
    rows = []
    for i, val in enumerate(values):
        c = cfg.with_value(axis, val)
        c.validate()
        row = {"kind": "value", "value": float(val)}
        unit = unit_profile(c.p)
        try:
            row["det_M0"] = det_M0_closed_form(c.lam0, rescale_profile(unit, c.m, c.omega))
        except MKGError:
            row["det_M0"] = math.nan
        if run:
            sub = Path(out_dir) / f"{axis}_{i}" if out_dir is not None else None
            res = run_experiment(c, sub)
            m = res.measured
            row["gamma_dot_norm"] = m.get("max_gamma_dot", math.nan)
            row["max_perp_dev"] = m.get("max_perp_dev", math.nan)
            row["a_bootstrap"] = m["max_a_bootstrap"]
            row["profile_error"] = m.get("profile_error", math.nan)
        rows.append(row)
    table = []
    for i, row in enumerate(rows):
        table.append(row)
        if i + 1 < len(rows):
            nxt = row, rows[i + 1]
            ratio = {"kind": "ratio", "value": nxt[0]["value"] / nxt[1]["value"]}
            for key in SWEEP_OBSERVABLES:
                if key in nxt[0] and key in nxt[1]:
                    a, b = nxt[0][key], nxt[1][key]
                    r = a / b if b else math.nan
                    ratio[key] = r
                    ratio[key + "_order"] = _order(r, ratio["value"])
            table.append(ratio)
    if out_dir is not None:
        write_sweep_csv(Path(out_dir) / f"sweep_{axis}.csv", table)
    return table


def _order(ratio: float, vratio: float) -> float:
    if not (ratio > 0 and vratio > 0 and vratio != 1.0):
        return math.nan
    return math.log(ratio) / math.log(vratio)


def write_sweep_csv(target, table) -> None:
    """Write the sweep table to a path or an open text stream."""
    cols = ["kind", "value"]
    for key in SWEEP_OBSERVABLES:
        cols += [key, key + "_order"]
    if hasattr(target, "write"):
        _sweep_rows(target, cols, table)
        return
    target = Path(target)
    target.parent.mkdir(parents=True, exist_ok=True)
    with open(target, "w", newline="", encoding="utf-8") as fh:
        _sweep_rows(fh, cols, table)


def _sweep_rows(fh, cols, table):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(cols)
    for row in table:
        w.writerow("" if c not in row else (row[c] if c == "kind" else _fmt(row[c])) for c in cols)
