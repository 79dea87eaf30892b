"""Linearized operators around the ground state and the remainder energy.

    L_+ = -Delta + (m^2 - omega^2) - p f^{p-1}
    L_- = -Delta + (m^2 - omega^2) -   f^{p-1}

Each angular sector l is discretized for g = r h(r) on r_i = i dr with
Dirichlet ends, giving the symmetric tridiagonal matrix of
-g'' + l(l+1)/r^2 g + potential g.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .errors import ConvergenceFailure, GridMismatch
from .ground_state import GroundStateProfile, evaluate_profile
from .grid import GridSpec
from .soliton import SolitonParams, radial_family, sample_on_grid

COUPLING = {"plus": None, "minus": 1.0}  # None means "use p"
EIG_RESIDUAL = 1e-8


@dataclass(frozen=True)
class RadialOperator:
    which: str
    ell: int
    r_grid: np.ndarray
    diag: np.ndarray
    offdiag: np.ndarray
    potential: np.ndarray

    @property
    def dr(self) -> float:
        return float(self.r_grid[1] - self.r_grid[0])

    def apply(self, g: np.ndarray) -> np.ndarray:
        out = self.diag * g
        out[:-1] += self.offdiag * g[1:]
        out[1:] += self.offdiag * g[:-1]
        return out

    def negative_threshold(self) -> float:
        """Eigenvalues below this count as negative.

        Zero modes come out at O(dr^2 ||V||) from the three-point stencil, so
        the cut sits at that scale rather than at round-off.
        """
        vmax = float(np.max(np.abs(self.potential)))
        return -max(1e-6, self.dr**2) * vmax


def assemble_operator(prof: GroundStateProfile, which: str, ell: int, n: int = 4000, r_max: float | None = None) -> RadialOperator:
    if which not in COUPLING:
        raise ValueError(f"which must be 'plus' or 'minus', got {which!r}")
    if ell < 0:
        raise ValueError("ell must be non-negative")
    c = prof.p if COUPLING[which] is None else COUPLING[which]
    r_max = prof.r_max if r_max is None else r_max
    dr = r_max / (n + 1)
    r = dr * np.arange(1, n + 1)
    f = evaluate_profile(prof, r)[0]
    pot = prof.kappa**2 - c * np.abs(f) ** (prof.p - 1.0)
    diag = 2.0 / dr**2 + ell * (ell + 1) / r**2 + pot
    off = np.full(n - 1, -1.0 / dr**2)
    return RadialOperator(which, ell, r, diag, off, pot)


def lowest_eigenvalues(op: RadialOperator, k: int = 5, vectors: bool = False):
    if not 1 <= k <= 10:
        raise ValueError("k must be between 1 and 10")
    try:
        vals, vecs = eigh_tridiagonal(op.diag, op.offdiag, select="i", select_range=(0, k - 1))
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(str(exc)) from exc
    for i in range(k):
        v = vecs[:, i]
        res = np.linalg.norm(op.apply(v) - vals[i] * v)
        scale = max(1.0, float(np.max(np.abs(op.diag))))
        if res > EIG_RESIDUAL * scale * np.linalg.norm(v):
            raise ConvergenceFailure(f"eigenpair {i} residual {res:.3g}")
    return (vals, vecs) if vectors else vals


def _radial_l2(op: RadialOperator, g: np.ndarray) -> float:
    # |h|^2 r^2 dr = |g|^2 dr in any sector
    return math.sqrt(float(np.sum(g * g)) * op.dr)


def kernel_residual(op: RadialOperator, prof: GroundStateProfile) -> float:
    """Relative residual ||A g|| / ||g|| of the expected zero mode.

    L_- (l = 0) against g = r f_omega; L_+ (l = 1) against g = r f_omega'.
    """
    f, df = evaluate_profile(prof, op.r_grid)
    if op.which == "minus" and op.ell == 0:
        g = op.r_grid * f
    elif op.which == "plus" and op.ell == 1:
        g = op.r_grid * df
    else:
        raise ValueError("a zero mode is only expected for (minus, 0) and (plus, 1)")
    return _radial_l2(op, op.apply(g)) / _radial_l2(op, g)


def negative_count(prof: GroundStateProfile, which: str = "plus", sectors=(0, 1, 2), n: int = 4000, k: int = 5) -> dict:
    out = {}
    for ell in sectors:
        op = assemble_operator(prof, which, ell, n)
        vals = lowest_eigenvalues(op, k)
        out[ell] = int(np.sum(vals < op.negative_threshold()))
    return out


# --- remainder energy ---------------------------------------------------------


def _check_grid(grid: GridSpec, *fields):
    for a in fields:
        if np.shape(a) != grid.shape:
            raise GridMismatch(f"field of shape {np.shape(a)} does not live on a grid of shape {grid.shape}")


def remainder_energy(v, w, lam: SolitonParams, prof: GroundStateProfile, grid: GridSpec) -> float:
    """E(v, w, lambda) with z-quadrature (dz = rho dx).

    With z = x - xi boosted along u, grad_z = (I + (1/rho - 1) P_u) grad_x and
    rho u.grad_z = u.grad_x, so everything is evaluated on the x grid.
    """
    _check_grid(grid, v, w)
    rho = lam.rho
    om = lam.omega
    u = np.asarray(lam.u)
    spd = lam.speed
    y = grid.displacement(lam.xi)
    uy = np.tensordot(u, y, axes=(0, 0))
    z = y + (rho * rho / (rho + 1.0)) * uy * u.reshape(3, 1, 1, 1)
    s = np.sqrt(np.sum(z * z, axis=0))
    f = radial_family(prof.unit(), prof.m, om, s)[0]
    fp = np.abs(f) ** (prof.p - 1.0)

    v = np.asarray(v, dtype=complex)
    grad = grid.grad(v)
    ugrad = sum(u[j] * grad[j] for j in range(3))
    kin = np.abs(w + ugrad - 1j * rho * om * v) ** 2
    # |grad_z v|^2 = |grad_x v|^2 + ((1/rho)^2 - 1) |uhat . grad_x v|^2
    g2 = sum(np.abs(d) ** 2 for d in grid.grad(v))
    if spd > 0:
        g2 = g2 + (1.0 / rho**2 - 1.0) * np.abs(ugrad / spd) ** 2
    k2 = prof.kappa**2 if abs(prof.omega - om) < 1e-14 else prof.m**2 - om**2
    v1, v2 = v.real, v.imag
    pot = k2 * (v1 * v1 + v2 * v2) - prof.p * fp * v1 * v1 - fp * v2 * v2
    return rho * grid.integrate(kin + g2 + pot)


def h1_l2_norm2(v, w, grid: GridSpec) -> float:
    """||v||_H1^2 + ||w||_L2^2 on the grid."""
    g2 = sum(np.abs(d) ** 2 for d in grid.grad(np.asarray(v, dtype=complex)))
    return grid.integrate(g2 + np.abs(v) ** 2 + np.abs(w) ** 2)


def constraint_vectors(grid: GridSpec, lam: SolitonParams, prof: GroundStateProfile):
    """(c_phi, c_psi, Theta) with the orthogonality functional l_a(V, W) = <d_a phi_S, W> - <d_a psi_S, V>."""
    _, _, dphi, dpsi = sample_on_grid(grid, lam, prof.unit(), prof.m, derivs=True)
    y = grid.displacement(lam.xi)
    theta = lam.theta - lam.omega * lam.rho * np.tensordot(np.asarray(lam.u), y, axes=(0, 0))
    return dphi, dpsi, theta


def orthogonality_defect(v, w, lam: SolitonParams, prof: GroundStateProfile, grid: GridSpec) -> np.ndarray:
    """The 8 pairings <d_a phi_S, e^{i Theta} w> - <d_a psi_S, e^{i Theta} v>."""
    dphi, dpsi, theta = constraint_vectors(grid, lam, prof)
    ph = np.exp(1j * theta)
    V, W = ph * v, ph * w
    return ((dphi.reshape(8, -1) @ W.conj().ravel()).real - (dpsi.reshape(8, -1) @ V.conj().ravel()).real) * grid.cell


def project_orthogonal(v, w, lam: SolitonParams, prof: GroundStateProfile, grid: GridSpec):
    """Orthogonal projection of (v, w) onto the kernel of the 8 orthogonality functionals.

    In rotated variables V = e^{i Theta} v, W = e^{i Theta} w the functionals
    are real L^2 x L^2 pairings with c_a = (-d_a psi_S, d_a phi_S); the
    projection subtracts the Gram-weighted combination of the c_a.
    """
    _check_grid(grid, v, w)
    dphi, dpsi, theta = constraint_vectors(grid, lam, prof)
    ph = np.exp(1j * theta)
    V, W = ph * np.asarray(v, dtype=complex), ph * np.asarray(w, dtype=complex)
    cV = -dpsi.reshape(8, -1)
    cW = dphi.reshape(8, -1)
    gram = (cV @ cV.conj().T).real + (cW @ cW.conj().T).real
    rhs = (cV @ V.conj().ravel()).real + (cW @ W.conj().ravel()).real
    coef = np.linalg.solve(gram, rhs)
    V = V - (coef @ cV).reshape(grid.shape)
    W = W - (coef @ cW).reshape(grid.shape)
    return V / ph, W / ph
