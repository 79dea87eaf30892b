"""Modulation curve extraction from evolved fields.

Given a snapshot (phi, d_t phi) the soliton parameters lambda are fixed by
the eight orthogonality functionals

    G_a(lambda) = <d_a phi_S, d_t phi - psi_S> - <d_a psi_S, phi - phi_S>,

which is the same as pairing the remainders v = e^{-i Theta}(phi - phi_S),
w = e^{-i Theta}(d_t phi - psi_S) against the rotated derivatives, since the
phase cancels inside the real pairing.  The Jacobian of G in lambda is
M0 + M1 with

    (M0)_ab = <d_a psi_S, d_b phi_S> - <d_a phi_S, d_b psi_S>
    (M1)_ab = <d_a d_b phi_S, e^{i Theta} w> - <d_a d_b psi_S, e^{i Theta} v>.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import FitDiverged, InsufficientSamples, OutsideStabilityWindow
from .evolution import FieldState
from .ground_state import GroundStateProfile, charge_factor, dG_domega, profile_norms
from .ground_state import G_of_omega as _G_scaled
from .soliton import SolitonParams, in_stability_window, sample_on_grid, velocity_field

FIT_TOL = 1e-8
MAX_ITER = 50
TRUST_RADIUS = 0.1
JAC_STEP = 1e-6
HESS_STEP = 1e-4
WINDOW = (0.6, 0.9)  # taper of the fit integrand, as fractions of L


@dataclass
class ModulationRecord:
    t: float
    lam: SolitonParams
    orth_residual: float
    gamma_dot: np.ndarray | None = None
    det_M: float = math.nan
    v_h1: float = math.nan
    w_l2: float = math.nan
    iterations: int = 0
    jacobian: np.ndarray | None = field(default=None, repr=False)


def G_of_omega(prof: GroundStateProfile) -> float:
    """omega^2 ||f||^2 + ||grad f||^2 / 3 by radial quadrature of the profile itself."""
    n2, g2, _ = profile_norms(prof)
    return prof.omega**2 * n2 + g2 / 3.0


def assemble_M0(lam: SolitonParams, prof: GroundStateProfile) -> np.ndarray:
    """Closed-form M0 at lambda; omega-derivatives come from the scaling law."""
    unit, m, om = prof.unit(), prof.m, lam.omega
    rho = lam.rho
    u = np.asarray(lam.u)
    G = _G_scaled(unit, m, om)
    M = np.zeros((8, 8))
    M[0, 1] = charge_factor(unit, m, om)
    M[0, 2:5] = rho * u * dG_domega(unit, m, om)
    M[2:5, 5:8] = -rho * G * (np.eye(3) + rho**2 * np.outer(u, u))
    return M - M.T


def det_M0_closed_form(lam: SolitonParams, prof: GroundStateProfile) -> float:
    unit, m, om = prof.unit(), prof.m, lam.omega
    return charge_factor(unit, m, om) ** 2 * _G_scaled(unit, m, om) ** 6 * lam.rho**10


def quadrature_M0(grid, lam: SolitonParams, prof: GroundStateProfile) -> np.ndarray:
    """M0 from grid pairings of the analytic lambda-derivatives."""
    _, _, dphi, dpsi = sample_on_grid(grid, lam, prof.unit(), prof.m, derivs=True)
    return _pair_matrix(grid, dpsi, dphi) - _pair_matrix(grid, dphi, dpsi)


def _pair_matrix(grid, a, b) -> np.ndarray:
    """P_ab = <a_a, b_b> for stacks with a leading axis of 8."""
    A = a.reshape(8, -1)
    B = b.reshape(8, -1)
    return (A @ B.conj().T).real * grid.cell


# --- orthogonality functionals -------------------------------------------------


def _smooth_step(s):
    """C-infinity step: 0 for s <= 0, 1 for s >= 1."""
    s = np.clip(s, 0.0, 1.0)
    a = np.where(s > 0, np.exp(-1.0 / np.maximum(s, 1e-300)), 0.0)
    b = np.where(s < 1, np.exp(-1.0 / np.maximum(1.0 - s, 1e-300)), 0.0)
    return a / (a + b)


def fit_window(grid, xi) -> np.ndarray:
    """Smooth cutoff in the minimal-image offset y = x - xi.

    Equal to 1 for max|y_j| < 0.6 L and 0 beyond 0.9 L, so the functionals
    never see the periodic seam at xi + L, where the sampled soliton switches
    image.  Without it G(lambda) jumps whenever a grid plane crosses the seam.
    """
    lo, hi = WINDOW
    w = 1.0
    for yj in grid.displacement(xi):
        w = w * (1.0 - _smooth_step((np.abs(yj) / grid.L - lo) / (hi - lo)))
    return w


def _remainders(state: FieldState, lam: SolitonParams, prof: GroundStateProfile, derivs: bool = True):
    phi_s, psi_s, *d = sample_on_grid(state.grid, lam, prof.unit(), prof.m, derivs=derivs)
    win = fit_window(state.grid, lam.xi)
    return phi_s, psi_s, win * (state.phi - phi_s), win * (state.pi - psi_s), d


def orthogonality_functionals(state: FieldState, lam: SolitonParams, prof: GroundStateProfile) -> np.ndarray:
    """The 8 values G_a(lambda) for the snapshot."""
    _, _, dv, dw, (dphi, dpsi) = _remainders(state, lam, prof)
    return _functionals(state.grid, dphi, dpsi, dv, dw)


def _functionals(grid, dphi, dpsi, dv, dw) -> np.ndarray:
    return (dphi.reshape(8, -1) @ dw.conj().ravel()).real * grid.cell - (
        dpsi.reshape(8, -1) @ dv.conj().ravel()
    ).real * grid.cell


def _jacobian(state, lam, prof, step=JAC_STEP) -> np.ndarray:
    base = lam.vector()
    J = np.empty((8, 8))
    for b in range(8):
        e = np.zeros(8)
        e[b] = step
        gp = orthogonality_functionals(state, SolitonParams.from_vector(base + e), prof)
        gm = orthogonality_functionals(state, SolitonParams.from_vector(base - e), prof)
        J[:, b] = (gp - gm) / (2 * step)
    return J


def _damped_step(J, G, radius):
    try:
        d = -np.linalg.solve(J, G)
    except np.linalg.LinAlgError:
        d = np.full(8, np.inf)
    if np.all(np.isfinite(d)) and np.linalg.norm(d) <= radius:
        return d
    # Levenberg: raise mu until the step fits the trust radius
    JtJ = J.T @ J
    rhs = -J.T @ G
    mu = 1e-6 * max(np.trace(JtJ) / 8, 1e-30)
    for _ in range(200):
        d = np.linalg.solve(JtJ + mu * np.eye(8), rhs)
        if np.linalg.norm(d) <= radius:
            return d
        mu *= 4.0
    return d * (radius / np.linalg.norm(d))


def remainder_norms(state: FieldState, lam: SolitonParams, dv, dw) -> tuple[float, float]:
    """(||v||_H1, ||w||_L2) for v = e^{-i Theta} dv, w = e^{-i Theta} dw.

    grad Theta = -omega rho u is constant, so grad v is evaluated as
    e^{-i Theta}(grad dv + i omega rho u dv) without differentiating the
    (periodically discontinuous) phase.
    """
    g = state.grid
    k = lam.omega * lam.rho * np.asarray(lam.u)
    grad = g.grad(dv)
    g2 = sum(np.abs(grad[j] + 1j * k[j] * dv) ** 2 for j in range(3))
    v2 = np.abs(dv) ** 2
    return math.sqrt(g.integrate(g2 + v2)), math.sqrt(g.integrate(np.abs(dw) ** 2))


def fit_lambda(
    state: FieldState,
    prof: GroundStateProfile,
    lam_guess: SolitonParams,
    tol: float = FIT_TOL,
    max_iter: int = MAX_ITER,
    jacobian: np.ndarray | None = None,
    with_M1: bool = False,
) -> ModulationRecord:
    """Solve G(lambda) = 0 by damped Gauss-Newton from ``lam_guess``.

    The Jacobian is a central finite difference of G.  It is computed once
    and reused (a chord iteration) while the residual keeps dropping fast;
    passing the previous snapshot's matrix as ``jacobian`` saves the first
    evaluation.  Convergence means max|G_a| < tol * ||phi_S||^2.
    """
    unit = prof.unit()
    m = prof.m
    lam = lam_guess
    J = jacobian
    fresh = False
    prev = math.inf
    for it in range(max_iter + 1):
        phi_s, psi_s, dv, dw, (dphi, dpsi) = _remainders(state, lam, prof)
        G = _functionals(state.grid, dphi, dpsi, dv, dw)
        scale = state.grid.integrate(np.abs(phi_s) ** 2)
        res = float(np.max(np.abs(G))) / scale
        if res < tol:
            break
        if it == max_iter:
            raise FitDiverged(f"orthogonality fit stalled at residual {res:.3g} after {max_iter} iterations")
        if J is None or (res > 0.1 * prev and not fresh):
            J = _jacobian(state, lam, prof)
            fresh = True
        else:
            fresh = False
        prev = res
        d = _damped_step(J, G, TRUST_RADIUS)
        try:
            lam = SolitonParams.from_vector(lam.vector() + d)
        except ValueError as exc:
            raise OutsideStabilityWindow(f"fit left the parameter domain: {exc}") from exc
        if not in_stability_window(lam, m, unit.p):
            raise OutsideStabilityWindow(f"fit moved to omega={lam.omega:.6g}, |u|={lam.speed:.4g}")
    v_h1, w_l2 = remainder_norms(state, lam, state.phi - phi_s, state.pi - psi_s)
    rec = ModulationRecord(state.t, lam, res, v_h1=v_h1, w_l2=w_l2, iterations=it, jacobian=J)
    M0 = assemble_M0(lam, prof)
    if with_M1:
        rec.det_M = float(np.linalg.det(M0 + assemble_M1(state, lam, prof)))
    elif J is not None:
        rec.det_M = float(np.linalg.det(J))
    else:
        rec.det_M = float(np.linalg.det(M0))
    return rec


def assemble_M1(state: FieldState, lam: SolitonParams, prof: GroundStateProfile, step: float = HESS_STEP) -> np.ndarray:
    """M1 by central differences of the analytic first derivatives, paired with the remainders.

    The remainders stay fixed at the given lambda while the second derivatives
    are formed.
    """
    grid = state.grid
    unit, m = prof.unit(), prof.m
    _, _, dv, dw, _ = _remainders(state, lam, prof, derivs=False)
    base = lam.vector()
    M1 = np.empty((8, 8))
    for b in range(8):
        e = np.zeros(8)
        e[b] = step
        _, _, pp, sp = sample_on_grid(grid, SolitonParams.from_vector(base + e), unit, m, derivs=True)
        _, _, pm, sm = sample_on_grid(grid, SolitonParams.from_vector(base - e), unit, m, derivs=True)
        d2phi = (pp - pm) / (2 * step)  # d_b d_a phi_S for all a
        d2psi = (sp - sm) / (2 * step)
        M1[:, b] = _functionals(grid, d2phi, d2psi, dv, dw)
    return M1


def track(states, prof: GroundStateProfile, lam_guess: SolitonParams, tol: float = FIT_TOL):
    """Fit every snapshot in order, warm-starting each from the transported previous fit."""
    out = []
    lam = lam_guess
    J = None
    t_prev = None
    for s in states:
        if t_prev is not None:
            lam = SolitonParams.from_vector(lam.vector() + velocity_field(lam) * (s.t - t_prev))
        rec = fit_lambda(s, prof, lam, tol=tol, jacobian=J)
        out.append(rec)
        lam, J, t_prev = rec.lam, rec.jacobian, s.t
    return out


def modulation_residual(records) -> tuple[np.ndarray, float]:
    """Central-difference lambda-dot minus V(lambda) at interior records.

    Returns (gamma_dot array of shape (len-2, 8), max norm).  The records'
    ``gamma_dot`` fields are filled in; end points get one-sided values.
    """
    if len(records) < 3:
        raise InsufficientSamples(f"need at least 3 records, got {len(records)}")
    t = np.array([r.t for r in records])
    dt = np.diff(t)
    if np.max(np.abs(dt - dt[0])) > 1e-9 * max(1.0, abs(dt[0])):
        raise InsufficientSamples("records must be uniformly spaced in time")
    lam = np.array([r.lam.vector() for r in records])
    lam_dot = np.gradient(lam, t, axis=0, edge_order=2)
    V = np.array([velocity_field(r.lam) for r in records])
    gd = lam_dot - V
    for r, g in zip(records, gd):
        r.gamma_dot = g
    interior = gd[1:-1]
    return interior, float(np.max(np.linalg.norm(interior, axis=1)))
