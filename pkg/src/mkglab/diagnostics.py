"""Conserved and almost-conserved quantities, their soliton/remainder split,
exterior weighted energies and trajectory measurements.

Pairings are real: <a, b> = Re(a conj b).  Charge and momenta use plain
derivatives; the exterior energy uses covariant ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from .conventions import minkowski_square, raise_index
from .errors import InsufficientSamples, RegionLeftBox, UnwrapAmbiguity
from .evolution import FieldState, gauge_residual, total_potential
from .ground_state import GroundStateProfile, scaled_norms
from .ground_state import G_of_omega as _G_scaled
from .soliton import SolitonParams, radial_family, sample_on_grid


@dataclass
class DiagnosticsSample:
    t: float
    Q: float
    Pi: np.ndarray
    centroid: np.ndarray
    gauge_res: float
    ext_energy_k1: float
    ext_energy_k2: float
    a_bootstrap: float
    dH: float = math.nan
    L: float = math.inf

    def row(self) -> dict:
        return {
            "t": self.t,
            "Q": self.Q,
            "Pi0": self.Pi[0],
            "Pi1": self.Pi[1],
            "Pi2": self.Pi[2],
            "Pi3": self.Pi[3],
            "centroid_x": self.centroid[0],
            "centroid_y": self.centroid[1],
            "centroid_z": self.centroid[2],
            "gauge_res": self.gauge_res,
            "ext_energy_k1": self.ext_energy_k1,
            "ext_energy_k2": self.ext_energy_k2,
            "a_bootstrap": self.a_bootstrap,
            "dH": self.dH,
        }


def total_charge(state: FieldState) -> float:
    """Q = -int <i d_t phi, phi> dx = int Im(d_t phi conj(phi)) dx."""
    return state.grid.integrate(np.imag(state.pi * np.conj(state.phi)))


def energy_density(state: FieldState, grad=None) -> np.ndarray:
    """Integrand of Pi_0."""
    phi = state.phi
    if grad is None:
        grad = state.grid.grad(phi)
    a2 = phi.real**2 + phi.imag**2
    g2 = sum(d.real**2 + d.imag**2 for d in grad)
    return 0.5 * (np.abs(state.pi) ** 2 + g2 + state.m**2 * a2 - 2.0 / (state.p + 1.0) * a2 ** (0.5 * (state.p + 1.0)))


def momenta(state: FieldState) -> np.ndarray:
    """(Pi_0, Pi_1, Pi_2, Pi_3) with Pi_k = int <d_t phi, d_k phi> dx."""
    g = state.grid
    grad = g.grad(state.phi)
    out = np.empty(4)
    out[0] = g.integrate(energy_density(state, grad))
    for k in range(3):
        out[k + 1] = g.pairing(state.pi, grad[k])
    return out


# --- decompositions -------------------------------------------------------------


@dataclass
class DecompositionResult:
    rQ: float
    rPi: np.ndarray
    rPi0: float
    gap: float
    cross_Q: float
    cross_Pi: np.ndarray
    linear_Pi0: float
    quad_Pi0: float
    measured: dict = field(default_factory=dict)


def decomposition_residuals(state: FieldState, record, prof: GroundStateProfile) -> DecompositionResult:
    """Compare Q, Pi_k, Pi_0 with their soliton-plus-remainder decompositions.

    rQ, rPi and rPi0 are |measured - formula| where the formulas keep the
    soliton part and the quadratic remainder terms only.  The cross terms that
    orthogonality removes are evaluated and returned.  ``gap`` is Pi_0 minus
    the grid soliton energy, the grid linear terms and the quadratic form,
    which leaves the cubic Taylor remainder of the potential term.
    """
    g = state.grid
    lam = record.lam
    unit, m, p = prof.unit(), prof.m, prof.p
    om, rho = lam.omega, lam.rho
    U = np.asarray(lam.u)
    phi_s, psi_s = sample_on_grid(g, lam, unit, m)
    dv = state.phi - phi_s  # e^{i Theta} v
    dw = state.pi - psi_s  # e^{i Theta} w
    n2, _ = scaled_norms(unit, m, om)
    G = _G_scaled(unit, m, om)

    Q = total_charge(state)
    Pi = momenta(state)
    # charge: Q = omega ||f||^2 - <i w, v>
    q2 = g.pairing(1j * dw, dv)
    cross_Q = -(g.pairing(1j * psi_s, dv) + g.pairing(1j * dw, phi_s))
    rQ = abs(Q - (om * n2 - q2))

    gdv = g.grad(dv)
    gphi = g.grad(phi_s)
    gpsi = g.grad(psi_s)
    rPi = np.empty(3)
    cross_Pi = np.empty(3)
    for k in range(3):
        quad = g.pairing(dw, gdv[k])
        cross_Pi[k] = -g.pairing(gpsi[k], dv) + g.pairing(dw, gphi[k])
        rPi[k] = abs(Pi[k + 1] - (-rho * G * U[k] + quad))

    # energy
    y = g.displacement(lam.xi)
    uy = np.tensordot(U, y, axes=(0, 0))
    z = y + (rho * rho / (rho + 1.0)) * uy * U.reshape(3, 1, 1, 1)
    f = radial_family(unit, m, om, np.sqrt(np.sum(z * z, axis=0)))[0]
    fp = np.abs(f) ** (p - 1.0)
    ph = phi_s / np.where(f == 0, 1.0, f)  # e^{i Theta}
    v1 = np.real(np.conj(ph) * dv)
    a2v = np.abs(dv) ** 2
    g2v = sum(np.abs(d) ** 2 for d in gdv)
    quad0 = 0.5 * g.integrate(m * m * a2v + g2v + np.abs(dw) ** 2 - fp * a2v - (p - 1.0) * fp * v1 * v1)
    lin0 = (
        sum(g.pairing(gphi[j], gdv[j]) for j in range(3))
        + g.pairing(psi_s, dw)
        + m * m * g.pairing(phi_s, dv)
        - g.integrate(np.abs(f) ** p * v1)
    )
    a2s = np.abs(phi_s) ** 2
    sol0 = 0.5 * g.integrate(
        np.abs(psi_s) ** 2 + sum(np.abs(d) ** 2 for d in gphi) + m * m * a2s - 2.0 / (p + 1.0) * a2s ** (0.5 * (p + 1.0))
    )
    rPi0 = abs(Pi[0] - (rho * G + quad0))
    gap = Pi[0] - sol0 - lin0 - quad0
    return DecompositionResult(
        rQ, rPi, rPi0, gap, cross_Q, cross_Pi, lin0, quad0,
        measured={"Q": Q, "Pi": Pi, "soliton_Pi0_grid": sol0},
    )


# --- exterior energy and trajectories -------------------------------------------


def exterior_weighted_energy(state: FieldState, R0: float, k: int = 1) -> float:
    """int over |x| >= R0 + t of (1 + |x|^k)(|D phi|^2 + m^2 |phi|^2) dx."""
    g = state.grid
    R = R0 + state.t
    if not R < g.L:
        raise RegionLeftBox(f"R0 + t = {R:.4g} is not inside the box half-width {g.L}")
    A = total_potential(state)
    phi = state.phi
    grad = g.grad(phi)
    D2 = np.abs(state.pi + 1j * A[0] * phi) ** 2
    for j in range(3):
        D2 = D2 + np.abs(grad[j] + 1j * A[j + 1] * phi) ** 2
    r = g.radius
    dens = (1.0 + r**k) * (D2 + state.m**2 * np.abs(phi) ** 2)
    return g.integrate(np.where(r >= R, dens, 0.0))


def energy_centroid(state: FieldState, reference=None) -> np.ndarray:
    """Energy-weighted centre, computed with minimal-image offsets from ``reference``.

    The reference defaults to the point of largest |phi|.
    """
    g = state.grid
    e = energy_density(state)
    if reference is None:
        idx = np.unravel_index(np.argmax(np.abs(state.phi)), g.shape)
        reference = g.coords[(slice(None),) + idx]
    ref = np.asarray(reference, dtype=float)
    d = g.displacement(ref)
    tot = float(np.sum(e))
    c = ref + np.array([float(np.sum(d[j] * e)) for j in range(3)]) / tot
    return (c + g.L) % (2 * g.L) - g.L


def unwrap_track(points, L: float) -> np.ndarray:
    """Continue a periodic track by minimal-image steps between samples."""
    pts = np.asarray(points, dtype=float)
    out = pts.copy()
    if not math.isfinite(L):
        return out
    per = 2.0 * L
    for i in range(1, len(pts)):
        step = (pts[i] - pts[i - 1] + L) % per - L
        if np.linalg.norm(step) > 0.5 * L:
            raise UnwrapAmbiguity(f"centroid moved {np.linalg.norm(step):.3g} between samples {i - 1} and {i}")
        out[i] = out[i - 1] + step
    return out


def centroid_and_straightness(samples, u0, L: float | None = None) -> tuple[float, float]:
    """(max deviation perpendicular to u0, speed along u0 by least squares).

    With u0 = 0 the deviation is the full distance from the first centroid
    and the speed is the length of the fitted velocity.
    """
    if len(samples) < 10:
        raise InsufficientSamples(f"need at least 10 samples, got {len(samples)}")
    if L is None:
        L = samples[0].L
    t = np.array([s.t for s in samples])
    x = unwrap_track([s.centroid for s in samples], L)
    d = x - x[0]
    u0 = np.asarray(u0, dtype=float)
    sp = np.linalg.norm(u0)
    tc = t - t.mean()
    if sp == 0:
        vel = (tc @ (d - d.mean(axis=0))) / (tc @ tc)
        return float(np.max(np.linalg.norm(d, axis=1))), float(np.linalg.norm(vel))
    e = u0 / sp
    along = d @ e
    perp = d - np.outer(along, e)
    speed = float(tc @ (along - along.mean()) / (tc @ tc))
    return float(np.max(np.linalg.norm(perp, axis=1))), speed


# --- connection bootstrap norm --------------------------------------------------


def scalar_acceleration(state: FieldState, grad=None) -> np.ndarray:
    """d_t^2 phi from the field equation."""
    g = state.grid
    phi = state.phi
    A = total_potential(state)
    lap, grad2 = g.lap_grad(phi)
    grad = grad2 if grad is None else grad
    acc = lap - state.m**2 * phi + np.abs(phi) ** (state.p - 1.0) * phi
    Au = raise_index(A)
    acc += 2j * (Au[0] * state.pi + sum(Au[j + 1] * grad[j] for j in range(3)))
    acc -= minkowski_square(A) * phi
    return acc


def _time_derivatives(state: FieldState):
    """Stacks (A~, d_t A~, d_t^2 A~, d_t^3 A~) using the field equations."""
    g = state.grid
    c = state.coupling
    a, ad = state.a_tilde, state.a_tilde_dot
    add = np.stack([g.lap(a[nu]) for nu in range(4)])
    addd = np.stack([g.lap(ad[nu]) for nu in range(4)])
    if c != 0.0:
        phi, pi = state.phi, state.pi
        A = total_potential(state)
        grad = g.grad(phi)
        gpi = g.grad(pi)
        acc = scalar_acceleration(state, grad)
        a2 = np.abs(phi) ** 2
        da2 = 2.0 * np.real(np.conj(phi) * pi)
        src2 = [np.imag(phi * np.conj(pi)) - A[0] * a2]
        src3 = [np.imag(phi * np.conj(acc)) - ad[0] * a2 - A[0] * da2]
        for j in range(3):
            src2.append(np.imag(phi * np.conj(grad[j])) - A[j + 1] * a2)
            src3.append(np.imag(pi * np.conj(grad[j]) + phi * np.conj(gpi[j])) - ad[j + 1] * a2 - A[j + 1] * da2)
        # same neutralized current as the stepper
        for nu in range(4):
            add[nu] += c * (src2[nu] - src2[nu].mean())
            addd[nu] += c * (src3[nu] - src3[nu].mean())
    return [a, ad, add, addd]


def a_bootstrap_norm(state: FieldState, orders=(0, 1, 2), per_order: bool = False):
    """max over s of ||d d^s A~||_L2, all (s+1)-fold space-time derivatives.

    Summing over every ordered tuple of derivative indices, the tuples with
    nt time derivatives contribute C(s+1, nt) * || |k|^(s+1-nt) hat(d_t^nt A~) ||^2
    by Parseval; time derivatives come from the field equations.
    """
    g = state.grid
    if not state.maxwell_active:
        res = {s: 0.0 for s in orders}
        return (0.0, res) if per_order else 0.0
    tder = _time_derivatives(state)
    top = max(orders) + 1
    power = {}
    for nt in range(top + 1):
        hat = sfft.fftn(tder[nt], axes=(1, 2, 3))
        power[nt] = np.sum(hat.real**2 + hat.imag**2, axis=0)
    k = g.derivative_symbol
    k2 = k[:, None, None] ** 2 + k[None, :, None] ** 2 + k[None, None, :] ** 2
    norm_fac = g.cell / g.n**3
    res = {}
    for s in orders:
        total = 0.0
        for nt in range(s + 2):
            total += math.comb(s + 1, nt) * float(np.sum(k2 ** (s + 1 - nt) * power[nt]))
        res[s] = math.sqrt(total * norm_fac)
    best = max(res.values())
    return (best, res) if per_order else best


# --- convexity functional ---------------------------------------------------------


def dH_value(lam_t: SolitonParams, lam_0: SolitonParams, prof: GroundStateProfile) -> float:
    """dH(t) = rho G (1 - U(0).U) - omega^2 N/rho(0) - G(0)/rho(0) + omega(0) omega N(0)/rho(0).

    N = ||f_omega||^2 and U is the full soliton velocity stored in lambda.
    """
    unit, m = prof.unit(), prof.m
    om, om0 = lam_t.omega, lam_0.omega
    rho, rho0 = lam_t.rho, lam_0.rho
    N = scaled_norms(unit, m, om)[0]
    N0 = scaled_norms(unit, m, om0)[0]
    G = _G_scaled(unit, m, om)
    G0 = _G_scaled(unit, m, om0)
    dot = float(np.dot(lam_0.u, lam_t.u))
    return rho * G * (1.0 - dot) - om * om * N / rho0 - G0 / rho0 + om0 * om * N0 / rho0


def sample(state: FieldState, R0: float, reference=None, lam_t=None, lam_0=None, prof=None) -> DiagnosticsSample:
    """One DiagnosticsSample for a snapshot."""
    g = state.grid
    Pi = momenta(state)
    R = R0 + state.t
    if R < g.L:
        e1 = exterior_weighted_energy(state, R0, 1)
        e2 = exterior_weighted_energy(state, R0, 2)
    else:
        e1 = e2 = math.nan
    dH = dH_value(lam_t, lam_0, prof) if lam_t is not None and lam_0 is not None and prof is not None else math.nan
    return DiagnosticsSample(
        t=state.t,
        Q=total_charge(state),
        Pi=Pi,
        centroid=energy_centroid(state, reference),
        gauge_res=gauge_residual(state),
        ext_energy_k1=e1,
        ext_energy_k2=e2,
        a_bootstrap=a_bootstrap_norm(state),
        dH=dH,
        L=g.L,
    )
