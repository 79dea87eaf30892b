"""Boosted, phase-rotated solitons and their parameter derivatives.

A soliton is labelled by lambda = (omega, theta, xi, u).  With
rho = (1 - |u|^2)^(-1/2) and y = x - xi,

    z     = y + (rho - 1) (u.y) u / |u|^2      (boost of the rest frame)
    Theta = theta - omega u.z
    phi_S = e^{i Theta} f_omega(|z|)
    psi_S = e^{i Theta} (i rho omega f_omega - rho u.grad_z f_omega)

The factor (rho - 1)/|u|^2 equals rho^2/(rho + 1), which is smooth at u = 0
and is used in that form.  Parameter vectors are always ordered
(omega, theta, xi_x, xi_y, xi_z, u_x, u_y, u_z).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterOutOfRange, ProfileMismatch
from .ground_state import GroundStateProfile, evaluate_profile
from .grid import GridSpec, laplacian

PARAM_NAMES = ("omega", "theta", "xi_x", "xi_y", "xi_z", "u_x", "u_y", "u_z")


@dataclass(frozen=True)
class SolitonParams:
    omega: float
    theta: float = 0.0
    xi: tuple = (0.0, 0.0, 0.0)
    u: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "xi", tuple(float(c) for c in self.xi))
        object.__setattr__(self, "u", tuple(float(c) for c in self.u))
        if len(self.xi) != 3 or len(self.u) != 3:
            raise ValueError("xi and u must be 3-vectors")
        if sum(c * c for c in self.u) >= 1.0:
            raise ParameterOutOfRange(f"|u| must be < 1, got u={self.u}")

    @property
    def speed(self) -> float:
        return math.sqrt(sum(c * c for c in self.u))

    @property
    def rho(self) -> float:
        return 1.0 / math.sqrt(1.0 - sum(c * c for c in self.u))

    def vector(self) -> np.ndarray:
        return np.array([self.omega, self.theta, *self.xi, *self.u])

    @classmethod
    def from_vector(cls, v) -> "SolitonParams":
        v = [float(c) for c in v]
        return cls(v[0], v[1], tuple(v[2:5]), tuple(v[5:8]))


def velocity_field(lam: SolitonParams) -> np.ndarray:
    """V(lambda) = (0, omega/rho, u, 0)."""
    v = np.zeros(8)
    v[1] = lam.omega / lam.rho
    v[2:5] = lam.u
    return v


def in_stability_window(lam: SolitonParams, m: float, p: float) -> bool:
    if lam.speed >= 1.0:
        return False
    ratio = lam.omega**2 / m**2
    return (p - 1.0) / (6.0 - 2.0 * p) < ratio < 1.0


def _boost_factor(rho: float) -> float:
    return rho * rho / (rho + 1.0)


def _as_points(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[0] != 3:
        raise ValueError("positions need a leading axis of length 3")
    return x


def _bcast(v, ref: np.ndarray) -> np.ndarray:
    return np.asarray(v, dtype=float).reshape((3,) + (1,) * (ref.ndim - 1))


def _boost(y: np.ndarray, lam: SolitonParams):
    u = _bcast(lam.u, y)
    uy = np.sum(u * y, axis=0)
    g = _boost_factor(lam.rho)
    z = y + g * uy * u
    return z, uy


def z_coords(x, lam: SolitonParams) -> np.ndarray:
    """Rest-frame coordinates of the points x (leading axis of length 3)."""
    x = _as_points(x)
    return _boost(x - _bcast(lam.xi, x), lam)[0]


def theta_phase(x, lam: SolitonParams) -> np.ndarray:
    x = _as_points(x)
    _, uy = _boost(x - _bcast(lam.xi, x), lam)
    return lam.theta - lam.omega * lam.rho * uy


def radial_family(unit: GroundStateProfile, m: float, omega: float, s, with_omega: bool = False):
    """f_omega and its radial derivatives at radii s, through the scaling law.

    Returns (f, f', f'') and, when ``with_omega``, also (d_omega f, d_omega f').
    """
    p = unit.p
    a = 2.0 / (p - 1.0)
    k2 = m * m - omega * omega
    if k2 <= 0:
        raise ParameterOutOfRange(f"need omega < m, got omega={omega}, m={m}")
    k = math.sqrt(k2)
    rs = k * np.asarray(s, dtype=float)
    F, F1 = evaluate_profile(unit, rs)
    src = F - np.abs(F) ** (p - 1.0) * F
    with np.errstate(divide="ignore", invalid="ignore"):
        F2 = np.where(rs > 1e-10, src - 2.0 * F1 / rs, src / 3.0)
    ka = k**a
    f = ka * F
    f1 = ka * k * F1
    f2 = ka * k2 * F2
    if not with_omega:
        return f, f1, f2
    dk = -omega / k
    fw = dk * (ka / k) * (a * F + rs * F1)
    f1w = dk * ka * ((a + 1.0) * F1 + rs * F2)
    return f, f1, f2, fw, f1w


def _check_profile(lam: SolitonParams, prof: GroundStateProfile):
    if abs(prof.omega - lam.omega) > 1e-12 * max(1.0, abs(lam.omega)):
        raise ProfileMismatch(f"profile built for omega={prof.omega}, soliton has omega={lam.omega}")


def soliton_fields(y: np.ndarray, lam: SolitonParams, unit: GroundStateProfile, m: float, derivs: bool = False):
    """phi_S, psi_S at displacements y = x - xi, optionally with all 8 lambda-derivatives.

    With ``derivs`` the return value is (phi, psi, dphi, dpsi) where dphi and
    dpsi have a leading axis of length 8.  All derivatives are analytic.
    """
    om = lam.omega
    rho = lam.rho
    g = _boost_factor(rho)
    u = _bcast(lam.u, y)
    uy = np.sum(u * y, axis=0)
    z = y + g * uy * u
    s = np.sqrt(np.sum(z * z, axis=0))
    uz = rho * uy
    theta = lam.theta - om * uz
    ph = np.exp(1j * theta)
    if derivs:
        f, f1, f2, fw, f1w = radial_family(unit, m, om, s, with_omega=True)
    else:
        f, f1, f2 = radial_family(unit, m, om, s)
    tiny = s < 1e-9
    s_safe = np.where(tiny, 1.0, s)
    q = np.where(tiny, f2, f1 / s_safe)  # f'(s)/s
    a_in = 1j * om * f - uz * q  # psi_S = e^{i Theta} rho a_in
    phi = ph * f
    psi = ph * (rho * a_in)
    if not derivs:
        return phi, psi

    dq = np.where(tiny, 0.0, (f2 - q) / s_safe)  # d/ds (f'/s)
    zh = z / s_safe
    uzh = np.sum(u * zh, axis=0)
    dphi = np.empty((8,) + y.shape[1:], dtype=complex)
    dpsi = np.empty_like(dphi)

    def put(i, dth, ds, duz, drho=0.0, extra=0.0):
        # generic chain rule given d Theta, d s, d(u.z), d rho
        dphi[i] = ph * (1j * dth * f + f1 * ds)
        da = 1j * om * f1 * ds - duz * q - uz * dq * ds + extra
        dpsi[i] = 1j * dth * psi + ph * (drho * a_in + rho * da)

    # omega: f itself depends on omega
    dth = -uz
    dphi[0] = ph * (1j * dth * f + fw)
    qw = np.where(tiny, 0.0, f1w / s_safe)
    dpsi[0] = 1j * dth * psi + ph * rho * (1j * f + 1j * om * fw - uz * qw)
    # theta
    dphi[1] = 1j * phi
    dpsi[1] = 1j * psi
    # xi_j: dy = -e_j
    uv = np.asarray(lam.u, dtype=float)
    for j in range(3):
        ds = -(zh[j] + g * uv[j] * uzh)
        put(2 + j, om * rho * uv[j], ds, -rho * uv[j])
    # u_j
    drho = rho**3 * uv
    dg = rho**4 * (rho + 2.0) / (rho + 1.0) ** 2 * uv
    for j in range(3):
        ds = dg[j] * uy * uzh + g * y[j] * uzh + g * uy * zh[j]
        duz = drho[j] * uy + rho * y[j]
        put(5 + j, -om * duz, ds, duz, drho=drho[j])
    return phi, psi, dphi, dpsi


def eval_phi_S(x, lam: SolitonParams, prof: GroundStateProfile):
    _check_profile(lam, prof)
    x = _as_points(x)
    return soliton_fields(x - _bcast(lam.xi, x), lam, prof.unit(), prof.m)[0]


def eval_psi_S(x, lam: SolitonParams, prof: GroundStateProfile):
    _check_profile(lam, prof)
    x = _as_points(x)
    return soliton_fields(x - _bcast(lam.xi, x), lam, prof.unit(), prof.m)[1]


def d_lambda_soliton(x, lam: SolitonParams, prof: GroundStateProfile):
    """(d_lambda phi_S, d_lambda psi_S), each with a leading axis of length 8."""
    _check_profile(lam, prof)
    x = _as_points(x)
    _, _, dphi, dpsi = soliton_fields(x - _bcast(lam.xi, x), lam, prof.unit(), prof.m, derivs=True)
    return dphi, dpsi


def d_lambda_fd(x, lam: SolitonParams, prof: GroundStateProfile, step: float = 1e-5):
    """Central finite differences of (phi_S, psi_S) in all 8 parameters.

    Independent of the analytic chain rule in :func:`soliton_fields`; used to
    cross-check it.
    """
    x = _as_points(x)
    unit, m = prof.unit(), prof.m
    base = lam.vector()
    out_phi, out_psi = [], []
    for i in range(8):
        e = np.zeros(8)
        e[i] = step
        lp = SolitonParams.from_vector(base + e)
        lm = SolitonParams.from_vector(base - e)
        pp, sp = soliton_fields(x - _bcast(lp.xi, x), lp, unit, m)
        pm, sm = soliton_fields(x - _bcast(lm.xi, x), lm, unit, m)
        out_phi.append((pp - pm) / (2 * step))
        out_psi.append((sp - sm) / (2 * step))
    return np.array(out_phi), np.array(out_psi)


def sample_on_grid(grid: GridSpec, lam: SolitonParams, unit: GroundStateProfile, m: float, derivs: bool = False):
    """Soliton fields on a periodic grid, using the minimal-image displacement from xi."""
    return soliton_fields(grid.displacement(lam.xi), lam, unit, m, derivs=derivs)


def nlw_residual(lam: SolitonParams, prof: GroundStateProfile, grid: GridSpec) -> float:
    """Discrete L^2 norm of  Delta phi_S - m^2 phi_S + |phi_S|^{p-1} phi_S - d_lambda psi_S . V."""
    _check_profile(lam, prof)
    phi, psi, dphi, dpsi = sample_on_grid(grid, lam, prof.unit(), prof.m, derivs=True)
    V = velocity_field(lam)
    acc = np.tensordot(V, dpsi, axes=(0, 0))
    res = laplacian(phi, grid.h) - prof.m**2 * phi + np.abs(phi) ** (prof.p - 1.0) * phi - acc
    return math.sqrt(grid.integrate(np.abs(res) ** 2))
