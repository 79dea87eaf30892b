"""Leapfrog evolution of the rescaled Maxwell-Klein-Gordon system on a periodic grid.

Unknowns are the scalar field phi with pi = d_t phi, and the deviation
A~ = A - A_b of the connection from the static background

    (A_b)_0 = (A_b)_3 = 0,  (A_b)_1 = -eps^2 x_2 / 2,  (A_b)_2 = eps^2 x_1 / 2,

whose magnetic field is eps^2 along +z.  In Lorenz gauge the system reads

    d_t^2 phi = Delta phi - m^2 phi + |phi|^{p-1} phi + 2i A^mu d_mu phi - A^mu A_mu phi
    d_t^2 A~_nu = Delta A~_nu + delta^2 eps^2 J_nu,   J_nu = Im(phi conj(D_nu phi))

with D_mu = d_mu + i A_mu and metric signature (-,+,+,+), so A^0 = -A_0
(see :mod:`mkglab.conventions`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .conventions import minkowski_square
from .errors import BoxTooSmall, ConstraintSolveFailure, NumericBlowup
from .ground_state import GroundStateProfile, evaluate_profile
from .grid import GridSpec
from .soliton import SolitonParams, sample_on_grid

BLOWUP_FACTOR = 1e3
DEFAULT_BOX_TOL = 1e-4


@dataclass
class FieldState:
    t: float
    phi: np.ndarray
    pi: np.ndarray
    a_tilde: np.ndarray
    a_tilde_dot: np.ndarray
    eps: float
    delta: float
    m: float
    p: float
    u0: tuple
    grid: GridSpec
    phi_max0: float = 0.0

    def __post_init__(self):
        if self.phi_max0 == 0.0:
            self.phi_max0 = float(np.max(np.abs(self.phi)))

    @property
    def coupling(self) -> float:
        """delta^2 eps^2, the strength of the charge current in the Maxwell equation."""
        return self.delta**2 * self.eps**2

    @property
    def maxwell_active(self) -> bool:
        return self.coupling != 0.0 or bool(np.any(self.a_tilde)) or bool(np.any(self.a_tilde_dot))

    def copy(self) -> "FieldState":
        return replace(
            self,
            phi=self.phi.copy(),
            pi=self.pi.copy(),
            a_tilde=self.a_tilde.copy(),
            a_tilde_dot=self.a_tilde_dot.copy(),
        )


# --- potentials and currents ---------------------------------------------------


def background_potential(grid: GridSpec, eps: float) -> list:
    """(A_b)_mu as broadcastable arrays (zeros are plain floats)."""
    a = grid.axis
    c = 0.5 * eps * eps
    return [0.0, -c * a.reshape(1, -1, 1), c * a.reshape(-1, 1, 1), 0.0]


def total_potential(state: FieldState) -> list:
    ab = background_potential(state.grid, state.eps)
    return [ab[mu] + state.a_tilde[mu] for mu in range(4)]


def covariant_derivative(state: FieldState, mu: int) -> np.ndarray:
    """D_mu phi = d_mu phi + i A_mu phi; spatial d by central differences, d_t phi = pi."""
    A = total_potential(state)
    if mu == 0:
        return state.pi + 1j * A[0] * state.phi
    return state.grid.diff(state.phi, mu - 1) + 1j * A[mu] * state.phi


def current(phi, pi, grad, A) -> list:
    """J_nu = Im(phi conj(D_nu phi)) for nu = 0..3."""
    rho2 = phi.real**2 + phi.imag**2
    out = [np.imag(phi * np.conj(pi)) - A[0] * rho2]
    for j in range(3):
        out.append(np.imag(phi * np.conj(grad[j])) - A[j + 1] * rho2)
    return out


def field_strength(state: FieldState) -> np.ndarray:
    """F_{mu nu} = d_mu A_nu - d_nu A_mu, shape (4, 4, n, n, n).

    Spatial derivatives of A~ use the grid's scheme and d_t A~ = a_tilde_dot;
    the background contributes its exact constant curl.
    """
    g = state.grid
    n = g.n
    dA = np.zeros((4, 4, n, n, n))  # dA[mu, nu] = d_mu A~_nu
    for nu in range(4):
        dA[0, nu] = state.a_tilde_dot[nu]
        dA[1:, nu] = g.grad(state.a_tilde[nu])
    F = dA - np.swapaxes(dA, 0, 1)
    b = state.eps**2
    F[1, 2] += b
    F[2, 1] -= b
    return F


def electric_magnetic(F: np.ndarray):
    """E_i = F_{i0} and B = curl A, i.e. B^k = eps_{kij} F_{ij} / 2."""
    E = np.stack([F[i, 0] for i in (1, 2, 3)])
    B = np.stack([F[2, 3], F[3, 1], F[1, 2]])
    return E, B


def gauge_residual(state: FieldState) -> float:
    """L^2 norm of the Lorenz gauge quantity d^mu A~_mu = -d_t A~_0 + div A~."""
    g = state.grid
    r = -state.a_tilde_dot[0].copy()
    for j in range(3):
        r += g.diff(state.a_tilde[j + 1], j)
    return math.sqrt(g.integrate(r * r))


def constraint_residual(state: FieldState) -> float:
    """L^2 norm of div E + delta^2 eps^2 Im(phi conj(D_t phi)).

    The modes div(grad) cannot reach (the mean, and the Nyquist corners of
    the spectral scheme) are removed, as they are in the Coulomb solve.
    """
    g = state.grid
    F = field_strength(state)
    E, _ = electric_magnetic(F)
    div = sum(g.diff(E[j], j) for j in range(3))
    A = total_potential(state)
    j0 = np.imag(state.phi * np.conj(state.pi + 1j * A[0] * state.phi))
    r = g.drop_null_modes(div + state.coupling * j0)
    return math.sqrt(g.integrate(r * r))


def energy_scale(state: FieldState) -> float:
    g = state.grid
    return math.sqrt(g.integrate(np.sum(state.a_tilde**2, axis=0)) + g.integrate(np.sum(state.a_tilde_dot**2, axis=0)))


# --- initial data --------------------------------------------------------------


def box_ratio(grid: GridSpec, lam: SolitonParams, prof: GroundStateProfile) -> float:
    """f_omega at the distance from the soliton center to the nearest box face, over f_omega(0)."""
    d = grid.L - max(abs(c) for c in lam.xi)
    if d <= 0:
        return math.inf
    return float(evaluate_profile(prof, d)[0]) / prof.f0


def build_initial_data(
    grid: GridSpec,
    lam0: SolitonParams,
    prof: GroundStateProfile,
    eps: float,
    delta: float,
    u0=(0.0, 0.0, 0.0),
    perturbation=None,
    box_tol: float = DEFAULT_BOX_TOL,
) -> FieldState:
    """Soliton initial data, optionally perturbed, with the Gauss law solved for A~_0.

    ``perturbation`` is an optional pair (dphi, dphi1) added to phi_S and
    psi_S.  The second member is read as D_t phi(0), so that
    pi = phi_1 - i A~_0 phi_0.  A~_j = 0 and d_t A~ = 0 initially, which
    makes the Lorenz gauge residual vanish; A~_0 solves

        div grad A~_0 = -delta^2 eps^2 Im(phi_0 conj(phi_1)),

    the sign for which the gauge condition is also preserved to first order
    in time.
    """
    ratio = box_ratio(grid, lam0, prof)
    if not ratio < box_tol:
        raise BoxTooSmall(f"f(L - |xi|)/f(0) = {ratio:.3g} exceeds {box_tol:g}; enlarge L")
    phi0, phi1 = sample_on_grid(grid, lam0, prof.unit(), prof.m)
    if perturbation is not None:
        dv, dw = perturbation
        phi0 = phi0 + dv
        phi1 = phi1 + dw
    n = grid.n
    a = np.zeros((4, n, n, n))
    adot = np.zeros((4, n, n, n))
    coupling = delta**2 * eps**2
    if coupling != 0.0:
        src = -coupling * np.imag(phi0 * np.conj(phi1))
        a[0] = grid.solve_poisson(src)
        if not np.all(np.isfinite(a[0])):
            raise ConstraintSolveFailure("Coulomb solve produced non-finite values")
    pi = phi1 - 1j * a[0] * phi0
    state = FieldState(0.0, phi0, pi, a, adot, float(eps), float(delta), prof.m, prof.p, tuple(float(c) for c in u0), grid)
    if coupling != 0.0:
        res = constraint_residual(state)
        if not res < 1e-8:
            raise ConstraintSolveFailure(f"initial constraint residual {res:.3g} above 1e-8")
    return state


def make_perturbation(grid: GridSpec, lam: SolitonParams, amplitude: float, seed: int = 0, bumps: int = 6):
    """Smooth random (dphi, dphi1) localized near the soliton with weighted norm ``amplitude``.

    Each member is a sum of Gaussian bumps with random complex weights,
    centres within distance 2 of xi and widths in [1, 2].  The pair is scaled
    so that weighted_norm(...) equals ``amplitude``.
    """
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(2):
        acc = np.zeros(grid.shape, dtype=complex)
        for _ in range(bumps):
            c = np.asarray(lam.xi) + rng.uniform(-2.0, 2.0, 3)
            w = rng.uniform(1.0, 2.0)
            amp = rng.normal() + 1j * rng.normal()
            d = grid.displacement(c)
            acc += amp * np.exp(-np.sum(d * d, axis=0) / (2 * w * w))
        out.append(acc)
    dv, dw = out
    norm = weighted_norm(grid, lam.xi, dv, dw)
    if amplitude == 0.0:
        return np.zeros_like(dv), np.zeros_like(dw)
    return dv * (amplitude / norm), dw * (amplitude / norm)


def weighted_norm(grid: GridSpec, center, dv, dw, k: float = 1.0) -> float:
    """sqrt of int (1+|x-c|)^(2k) (|grad dv|^2 + |dv|^2 + |dw|^2) dx."""
    y = grid.displacement(center)
    wt = (1.0 + np.sqrt(np.sum(y * y, axis=0))) ** (2 * k)
    g2 = sum(np.abs(d) ** 2 for d in grid.grad(dv))
    return math.sqrt(grid.integrate(wt * (g2 + np.abs(dv) ** 2 + np.abs(dw) ** 2)))


# --- time stepping ---------------------------------------------------------------


class Stepper:
    """Kick-drift-kick leapfrog for (phi, pi) and (A~, d_t A~).

    The only velocity-dependent term, -2i A_0 pi, is linear in pi, so the
    closing half kick is solved pointwise instead of iterated.  Forces at the
    end of a step are reused at the start of the next one.
    """

    def __init__(self, state: FieldState, dt: float):
        g = state.grid
        limit = g.max_stable_dt(state.m)
        if not 0 < dt <= limit:
            raise ValueError(f"dt={dt} exceeds the leapfrog stability limit {limit:.4g}")
        self.state = state.copy()
        self.dt = dt
        self.maxwell = state.maxwell_active
        self._ab = background_potential(g, state.eps)
        self._magnetic = state.eps != 0.0
        self._grad = None
        self._force = None  # scalar acceleration without the -2i A_0 pi term
        self._aforce = np.empty_like(state.a_tilde) if self.maxwell else None

    def _A(self):
        s = self.state
        if not self.maxwell:
            return self._ab
        return [self._ab[mu] + s.a_tilde[mu] for mu in range(4)]

    def _scalar_force(self):
        """Scalar force at the current positions; also Laplacian(A~) into _aforce."""
        s = self.state
        g = s.grid
        phi = s.phi
        need_grad = self.maxwell or self._magnetic
        F0, self._grad = g.lap_grad(phi, want_grad=need_grad)
        F0 -= s.m**2 * phi
        F0 += (phi.real**2 + phi.imag**2) ** (0.5 * (s.p - 1.0)) * phi
        if need_grad:
            A = self._A()
            F0 += 2j * sum(A[j + 1] * self._grad[j] for j in range(3))
            F0 -= minkowski_square(A) * phi
        if self.maxwell:
            self._aforce[...] = g.lap(s.a_tilde)
        self._force = F0
        return F0

    def _add_current(self):
        s = self.state
        J = current(s.phi, s.pi, self._grad, self._A())
        # The k=0 mode of the current has no periodic solution, so a uniform
        # neutralizing background absorbs it; otherwise the box means of A~
        # grow like t^2 and act as a spurious constant potential.
        for nu in range(4):
            self._aforce[nu] += s.coupling * (J[nu] - J[nu].mean())

    def advance(self, n_steps: int = 1) -> FieldState:
        s = self.state
        dt = self.dt
        half = 0.5 * dt
        for _ in range(n_steps):
            if self._force is None:
                self._scalar_force()
                if self.maxwell:
                    self._add_current()
            # opening half kick
            if self.maxwell:
                s.pi += half * (self._force - 2j * s.a_tilde[0] * s.pi)
                s.a_tilde_dot += half * self._aforce
            else:
                s.pi += half * self._force
            new_phi = s.phi + dt * s.pi
            peak = float(np.max(np.abs(new_phi)))
            if not peak <= BLOWUP_FACTOR * s.phi_max0:
                # undo the opening kick so the attached state is the last good one
                if self.maxwell:
                    s.a_tilde_dot -= half * self._aforce
                    s.pi = (s.pi - half * self._force) / (1.0 - 1j * dt * s.a_tilde[0])
                else:
                    s.pi -= half * self._force
                raise NumericBlowup(f"|phi| reached {peak:.3g} after t={s.t:.4g}", last_state=s.copy())
            s.phi = new_phi
            if self.maxwell:
                s.a_tilde += dt * s.a_tilde_dot
            s.t += dt
            # closing half kick at the drifted positions
            F_new = self._scalar_force()
            if self.maxwell:
                s.pi = (s.pi + half * F_new) / (1.0 + 1j * dt * s.a_tilde[0])
                self._add_current()
                s.a_tilde_dot += half * self._aforce
            else:
                s.pi += half * F_new
        return s


def step(state: FieldState, dt: float, n_steps: int = 1) -> FieldState:
    """Advance a copy of ``state`` by n_steps leapfrog steps of size dt."""
    return Stepper(state, dt).advance(n_steps)
