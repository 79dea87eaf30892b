"""Radial ground states of  f'' + (2/r) f' - (m^2 - omega^2) f + f^p = 0.

The unit profile (m^2 - omega^2 = 1) is found by shooting on f(0) with
bisection and a fixed-step RK4 integrator.  Every other frequency follows
from the scaling law

    f_omega(r) = (m^2 - omega^2)^(1/(p-1)) * f_unit(sqrt(m^2 - omega^2) * r).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .errors import BracketingFailure, NonConvergence, ParameterOutOfRange

MAX_BISECTIONS = 200
# trusted part of the shooting trajectory: bracketing solutions agree to this
TRUST_GAP = 1e-7
# samples below this fraction of f(0) are in the linear (Yukawa) regime
LINEAR_REGIME = 1e-4
SUBSTEPS = 16
SUBSTEP_ZONE = 64


@dataclass(frozen=True)
class GroundStateProfile:
    """Sampled radial profile f_omega on a uniform grid starting at r = 0."""

    m: float
    omega: float
    p: float
    r_samples: np.ndarray
    f_samples: np.ndarray
    df_samples: np.ndarray
    tail_rate: float

    @property
    def kappa(self) -> float:
        return math.sqrt(self.m**2 - self.omega**2)

    @property
    def r_max(self) -> float:
        return float(self.r_samples[-1])

    @property
    def f0(self) -> float:
        return float(self.f_samples[0])

    @cached_property
    def _spline(self) -> CubicHermiteSpline:
        return CubicHermiteSpline(self.r_samples, self.f_samples, self.df_samples)

    @cached_property
    def _dspline(self):
        # Hermite fit of f' against f'' from the ODE: C^1, unlike the spline's own derivative
        d2 = second_derivative(self, self.r_samples, self.f_samples, self.df_samples)
        return CubicHermiteSpline(self.r_samples, self.df_samples, d2)

    def __call__(self, r):
        return evaluate_profile(self, r)

    def unit(self) -> "GroundStateProfile":
        """Undo the scaling law: the m^2 - omega^2 = 1 profile this one came from."""
        return self._unit

    @cached_property
    def _unit(self) -> "GroundStateProfile":
        if self.m == 1.0 and self.omega == 0.0:
            return self
        k = self.kappa
        a = 2.0 / (self.p - 1.0)
        return GroundStateProfile(
            m=1.0,
            omega=0.0,
            p=self.p,
            r_samples=self.r_samples * k,
            f_samples=self.f_samples / k**a,
            df_samples=self.df_samples / k ** (a + 1.0),
            tail_rate=self.tail_rate / k,
        )

    def at(self, m: float, omega: float) -> "GroundStateProfile":
        return rescale_profile(self.unit(), m, omega)


def _rk4_shoot(f0: float, p: float, h: float, n: int, record: bool = False):
    """Integrate the unit ODE from r = 0 with f(0) = f0.

    Returns (status, f, g) where status is +1 if f crossed zero (f0 too
    large), -1 if f' turned positive (f0 too small) and 0 if r = n*h was
    reached.  f and g are lists of samples on r = k*h when ``record``.
    """
    q = p - 1.0

    def acc(r, f, g):
        return f - abs(f) ** q * f - 2.0 * g / r

    # Taylor start  f = f0 + c2 r^2 + c4 r^4  on the first step
    src = f0 - abs(f0) ** q * f0
    c2 = src / 6.0
    c4 = (1.0 - p * abs(f0) ** q) * c2 / 20.0
    fs = [f0]
    gs = [0.0]
    for k in (1,):
        r = k * h
        fs.append(f0 + c2 * r * r + c4 * r**4)
        gs.append(2.0 * c2 * r + 4.0 * c4 * r**3)
    f, g = fs[-1], gs[-1]
    if not record:
        fs, gs = None, None
    status = 0
    for k in range(1, n):
        # the 2/r term is stiff on the first steps, so those are subdivided
        sub = SUBSTEPS if k < SUBSTEP_ZONE else 1
        hs = h / sub
        h2 = 0.5 * hs
        for j in range(sub):
            r = k * h + j * hs
            a1 = acc(r, f, g)
            f2 = f + h2 * g
            g2 = g + h2 * a1
            a2 = acc(r + h2, f2, g2)
            f3 = f + h2 * g2
            g3 = g + h2 * a2
            a3 = acc(r + h2, f3, g3)
            f4 = f + hs * g3
            g4 = g + hs * a3
            a4 = acc(r + hs, f4, g4)
            f = f + hs * (g + 2.0 * g2 + 2.0 * g3 + g4) / 6.0
            g = g + hs * (a1 + 2.0 * a2 + 2.0 * a3 + a4) / 6.0
        if record:
            fs.append(f)
            gs.append(g)
        if f <= 0.0:
            status = 1
            break
        if g > 0.0:
            status = -1
            break
    return status, fs, gs


def _bracket(p: float, h: float, n: int) -> tuple[float, float]:
    lo = 1.0 + 1e-6
    if _rk4_shoot(lo, p, h, n)[0] != -1:
        raise BracketingFailure(f"f(0)={lo} does not undershoot for p={p}")
    hi = 2.0
    for _ in range(60):
        status = _rk4_shoot(hi, p, h, n)[0]
        if status == 1:
            return lo, hi
        if status == -1:
            lo = hi
        hi *= 2.0
    raise BracketingFailure(f"no overshooting f(0) found for p={p}")


def solve_unit_profile(p: float, r_max: float = 30.0, n: int = 4000) -> GroundStateProfile:
    """Ground state with m = 1, omega = 0 on r in [0, r_max] with n steps.

    Bisection runs until the bracket is one ulp wide.  The bracketing
    trajectories agree up to some radius r_t; beyond it the shooting
    solution is dominated by the growing mode.  The samples there are
    replaced by the linear tail, first in Yukawa form e^{-rate r}/r and from
    0.75 r_max on as a pure exponential.  The rate is fitted to log(r f) in
    the linear regime just inside r_t, which removes the 1/r factor.
    """
    if not 1.0 < p < 5.0:
        raise ParameterOutOfRange(f"p={p} outside (1, 5)")
    if r_max <= 0 or n < 100:
        raise ParameterOutOfRange("need r_max > 0 and n >= 100")
    h = r_max / n
    lo, hi = _bracket(p, h, n)
    for _ in range(MAX_BISECTIONS):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        status = _rk4_shoot(mid, p, h, n)[0]
        if status == 1:
            hi = mid
        elif status == -1:
            lo = mid
        else:
            lo = hi = mid
            break
    else:
        raise NonConvergence(f"bisection on f(0) did not close after {MAX_BISECTIONS} steps")

    _, flo, glo = _rk4_shoot(lo, p, h, n, record=True)
    _, fhi, ghi = _rk4_shoot(hi, p, h, n, record=True)
    k_end = min(len(flo), len(fhi))
    flo = np.asarray(flo[:k_end])
    fhi = np.asarray(fhi[:k_end])
    fm = 0.5 * (flo + fhi)
    gm = 0.5 * (np.asarray(glo[:k_end]) + np.asarray(ghi[:k_end]))
    with np.errstate(divide="ignore", invalid="ignore"):
        gap = np.abs(fhi - flo) / np.abs(fm)
    bad = np.nonzero(~(gap <= TRUST_GAP) | (fm <= 0.0) | (gm >= 0.0))[0]
    bad = bad[bad > 0]
    k_t = int(bad[0]) - 1 if bad.size else k_end - 1
    k_t = min(k_t, int(0.7 * n))
    if k_t < 20:
        raise NonConvergence("shooting trajectory unreliable almost from the origin")

    r_all = h * np.arange(n + 1)
    rt = r_all[: k_t + 1]
    ft = fm[: k_t + 1]
    lin = np.nonzero(ft < LINEAR_REGIME * ft[0])[0]
    if lin.size >= 20:
        sel = slice(int(lin[0]), k_t + 1)
    else:
        sel = slice(k_t + 1 - max(20, (k_t + 1) // 10), k_t + 1)
    slope, _ = np.polyfit(rt[sel], np.log(rt[sel] * ft[sel]), 1)
    rate = -float(slope)
    if not rate > 0:
        raise NonConvergence(f"tail fit gave non-decaying rate {rate}")

    f = np.empty(n + 1)
    df = np.empty(n + 1)
    f[: k_t + 1] = ft
    df[: k_t + 1] = gm[: k_t + 1]
    # Yukawa continuation up to r_s keeps f' continuous at r_t; past r_s the
    # pure exponential takes over, where the remaining kink is negligible.
    k_s = max(k_t, int(0.75 * n))
    r_t = rt[-1]
    ry = r_all[k_t + 1 : k_s + 1]
    fy = ft[-1] * (r_t / ry) * np.exp(-rate * (ry - r_t))
    f[k_t + 1 : k_s + 1] = fy
    df[k_t + 1 : k_s + 1] = -(rate + 1.0 / ry) * fy
    re = r_all[k_s + 1 :]
    fe = f[k_s] * np.exp(-rate * (re - r_all[k_s]))
    f[k_s + 1 :] = fe
    df[k_s + 1 :] = -rate * fe
    return GroundStateProfile(1.0, 0.0, float(p), r_all, f, df, rate)


def rescale_profile(unit: GroundStateProfile, m: float, omega: float) -> GroundStateProfile:
    """Apply the scaling law to a unit profile."""
    if abs(unit.m**2 - unit.omega**2 - 1.0) > 1e-12:
        raise ParameterOutOfRange("rescale_profile expects a unit profile (m^2 - omega^2 = 1)")
    if not (m > 0 and 0.0 <= omega < m):
        raise ParameterOutOfRange(f"need 0 <= omega < m, got m={m}, omega={omega}")
    k = math.sqrt(m * m - omega * omega)
    a = 2.0 / (unit.p - 1.0)
    return GroundStateProfile(
        m=float(m),
        omega=float(omega),
        p=unit.p,
        r_samples=unit.r_samples / k,
        f_samples=unit.f_samples * k**a,
        df_samples=unit.df_samples * k ** (a + 1.0),
        tail_rate=unit.tail_rate * k,
    )


def evaluate_profile(prof: GroundStateProfile, r):
    """(f, f') at radii r: cubic Hermite inside the samples, exponential tail outside."""
    r = np.asarray(r, dtype=float)
    r_max = prof.r_max
    inside = r <= r_max
    rc = np.clip(r, 0.0, r_max)
    f = prof._spline(rc)
    df = prof._dspline(rc)
    if not np.all(inside):
        tail = prof.f_samples[-1] * np.exp(-prof.tail_rate * (r - r_max))
        f = np.where(inside, f, tail)
        df = np.where(inside, df, -prof.tail_rate * tail)
    return f, df


def second_derivative(prof: GroundStateProfile, r, f=None, df=None):
    """f'' from the ODE itself, with the r -> 0 limit handled."""
    r = np.asarray(r, dtype=float)
    if f is None or df is None:
        f, df = evaluate_profile(prof, r)
    k2 = prof.m**2 - prof.omega**2
    src = k2 * f - np.abs(f) ** (prof.p - 1.0) * f
    with np.errstate(divide="ignore", invalid="ignore"):
        out = src - 2.0 * df / r
    small = r < 1e-8
    if np.any(small):
        out = np.where(small, src / 3.0, out)
    return out


def profile_norms(prof: GroundStateProfile) -> tuple[float, float, float]:
    """(||f||^2, ||grad f||^2, ||f||_{p+1}^{p+1}) in three dimensions, trapezoid rule."""
    r = prof.r_samples
    w = 4.0 * np.pi * r * r
    f = prof.f_samples
    n2 = float(np.trapezoid(w * f * f, r))
    g2 = float(np.trapezoid(w * prof.df_samples**2, r))
    lp = float(np.trapezoid(w * np.abs(f) ** (prof.p + 1.0), r))
    return n2, g2, lp


def energy_identity_residuals(prof: GroundStateProfile) -> tuple[float, float]:
    """Relative residuals of the Pohozaev-type identities

        3(p-1) k^2 / (2 ||grad f||^2) = (5-p) / (2 ||f||^2) = (p+1) k^2 / ||f||_{p+1}^{p+1}
    """
    n2, g2, lp = profile_norms(prof)
    k2 = prof.m**2 - prof.omega**2
    p = prof.p
    mid = (5.0 - p) / (2.0 * n2)
    left = 3.0 * (p - 1.0) * k2 / (2.0 * g2)
    right = (p + 1.0) * k2 / lp
    return abs(left / mid - 1.0), abs(right / mid - 1.0)


def charge_factor(unit: GroundStateProfile, m: float, omega: float) -> float:
    """Closed form of d/domega (omega ||f_omega||^2)."""
    p = unit.p
    n2 = profile_norms(unit)[0]
    k2 = m * m - omega * omega
    return (m * m - (6.0 - 2.0 * p) / (p - 1.0) * omega**2) * k2 ** ((9.0 - 5.0 * p) / (2.0 * (p - 1.0))) * n2


def scaled_norms(unit: GroundStateProfile, m: float, omega: float) -> tuple[float, float]:
    """(||f_omega||^2, ||grad f_omega||^2) from the unit norms and the scaling law."""
    n2, g2, _ = profile_norms(unit)
    k = math.sqrt(m * m - omega * omega)
    a = 2.0 / (unit.p - 1.0)
    return n2 * k ** (2 * a - 3), g2 * k ** (2 * a - 1)


def G_of_omega(unit: GroundStateProfile, m: float, omega: float) -> float:
    """G = omega^2 ||f_omega||^2 + ||grad f_omega||^2 / 3."""
    n2, g2 = scaled_norms(unit, m, omega)
    return omega**2 * n2 + g2 / 3.0


def dG_domega(unit: GroundStateProfile, m: float, omega: float) -> float:
    n2u, g2u, _ = profile_norms(unit)
    a = 2.0 / (unit.p - 1.0)
    k = math.sqrt(m * m - omega * omega)
    dk = -omega / k
    n2 = n2u * k ** (2 * a - 3)
    dn2 = n2u * (2 * a - 3) * k ** (2 * a - 4) * dk
    dg2 = g2u * (2 * a - 1) * k ** (2 * a - 2) * dk
    return 2 * omega * n2 + omega**2 * dn2 + dg2 / 3.0
