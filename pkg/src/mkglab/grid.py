"""Periodic cubic grid and the derivative operators shared by the solver and diagnostics.

Two derivative schemes are available.  ``spectral`` differentiates in
Fourier space (Nyquist mode dropped), so div(grad) and the Laplacian coincide
and the Gauss law is propagated exactly by the Lorenz-gauge equations.
``fd`` uses the seven-point Laplacian and second-order central differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft as sfft

SCHEMES = ("spectral", "fd")


@dataclass(frozen=True)
class GridSpec:
    """Periodic box [-L, L)^3 with n points per side.

    ``dt`` is the time step of an evolution on this grid (0 if unused).
    """

    L: float
    n: int
    dt: float = 0.0
    scheme: str = "spectral"

    def __post_init__(self):
        if self.L <= 0 or self.n < 4:
            raise ValueError(f"invalid grid L={self.L}, n={self.n}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown derivative scheme {self.scheme!r}")

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.n

    @property
    def cell(self) -> float:
        return self.h**3

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n, self.n, self.n)

    @cached_property
    def axis(self) -> np.ndarray:
        return -self.L + self.h * np.arange(self.n)

    @cached_property
    def coords(self) -> np.ndarray:
        """Array of shape (3, n, n, n) with the point coordinates."""
        a = self.axis
        return np.stack(np.meshgrid(a, a, a, indexing="ij"))

    @cached_property
    def radius(self) -> np.ndarray:
        return np.sqrt(np.sum(self.coords**2, axis=0))

    def displacement(self, center) -> np.ndarray:
        """Minimal-image x - center, shape (3, n, n, n)."""
        c = np.asarray(center, dtype=float).reshape(3, 1, 1, 1)
        per = 2.0 * self.L
        return (self.coords - c + self.L) % per - self.L

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """Angular wavenumbers with the Nyquist entry set to zero."""
        k = 2.0 * np.pi * np.fft.fftfreq(self.n, d=self.h)
        if self.n % 2 == 0:
            k[self.n // 2] = 0.0
        return k

    @cached_property
    def derivative_symbol(self) -> np.ndarray:
        """1-D symbol s(k) of d/dx: i*s(k) for the chosen scheme."""
        if self.scheme == "spectral":
            return self.wavenumbers
        return np.sin(2.0 * np.pi * np.fft.fftfreq(self.n, d=self.h) * self.h) / self.h

    @cached_property
    def laplacian_symbol(self) -> np.ndarray:
        """Symbol of the scheme's Laplacian on the full fftn layout."""
        if self.scheme == "spectral":
            k2 = self.wavenumbers**2
        else:
            k2 = (2.0 * np.sin(np.pi * np.fft.fftfreq(self.n, d=self.h) * self.h) / self.h) ** 2
        return -(k2[:, None, None] + k2[None, :, None] + k2[None, None, :])

    @cached_property
    def div_grad_symbol(self) -> np.ndarray:
        s2 = self.derivative_symbol**2
        return -(s2[:, None, None] + s2[None, :, None] + s2[None, None, :])

    def with_dt(self, dt: float) -> "GridSpec":
        return GridSpec(self.L, self.n, dt, self.scheme)

    def max_stable_dt(self, m: float = 0.0) -> float:
        """Leapfrog limit 2/sqrt(max|symbol| + m^2) for the Klein-Gordon part."""
        return 2.0 / math.sqrt(float(np.max(-self.laplacian_symbol)) + m * m)

    def integrate(self, a) -> float:
        return float(np.sum(a)) * self.cell

    def pairing(self, a, b) -> float:
        """Real L^2 pairing <a, b> = Re int a conj(b) dx."""
        return float(np.vdot(b, a).real) * self.cell

    def l2(self, a) -> float:
        return math.sqrt(self.pairing(a, a))

    # --- derivatives -----------------------------------------------------

    def _shaped(self, s: np.ndarray, ax: int) -> np.ndarray:
        shape = [1, 1, 1]
        shape[ax] = self.n
        return s.reshape(shape)

    @cached_property
    def _half_laplacian_symbol(self) -> np.ndarray:
        return self.laplacian_symbol[..., : self.n // 2 + 1]

    def diff(self, u: np.ndarray, ax: int) -> np.ndarray:
        if self.scheme == "fd":
            return central_diff(u, ax, self.h)
        k = 1j * self._shaped(self.wavenumbers, ax)
        if np.iscomplexobj(u):
            return sfft.ifftn(k * sfft.fftn(u))
        k = k[..., : self.n // 2 + 1]
        return sfft.irfftn(k * sfft.rfftn(u), s=self.shape)

    def grad(self, u: np.ndarray) -> list[np.ndarray]:
        return self.lap_grad(u, want_lap=False)[1]

    def lap(self, u: np.ndarray) -> np.ndarray:
        """Laplacian over the last three axes, so stacks of fields are allowed."""
        if self.scheme == "fd":
            if u.ndim == 3:
                return laplacian(u, self.h)
            return np.stack([self.lap(c) for c in u])
        ax = (-3, -2, -1)
        if np.iscomplexobj(u):
            return sfft.ifftn(self.laplacian_symbol * sfft.fftn(u, axes=ax), axes=ax)
        return sfft.irfftn(self._half_laplacian_symbol * sfft.rfftn(u, axes=ax), s=self.shape, axes=ax)

    def lap_grad(self, u: np.ndarray, want_lap: bool = True, want_grad: bool = True):
        """(Laplacian, [d_x, d_y, d_z]) sharing one forward transform."""
        if self.scheme == "fd":
            lap = laplacian(u, self.h) if want_lap else None
            grad = [central_diff(u, ax, self.h) for ax in range(3)] if want_grad else None
            return lap, grad
        cplx = np.iscomplexobj(u)
        uh = sfft.fftn(u)
        lap = grad = None
        if want_lap:
            lap = sfft.ifftn(self.laplacian_symbol * uh)
            lap = lap if cplx else lap.real
        if want_grad:
            grad = []
            for ax in range(3):
                d = sfft.ifftn((1j * self._shaped(self.wavenumbers, ax)) * uh)
                grad.append(d if cplx else d.real)
        return lap, grad

    @cached_property
    def div_grad_null(self) -> np.ndarray:
        """Modes annihilated by div(grad): the mean and, for the spectral scheme, the Nyquist corners."""
        sym = self.div_grad_symbol
        return np.abs(sym) < 1e-12 * np.max(np.abs(sym))

    def drop_null_modes(self, a: np.ndarray) -> np.ndarray:
        ah = sfft.fftn(a)
        ah[self.div_grad_null] = 0.0
        out = sfft.ifftn(ah)
        return out if np.iscomplexobj(a) else out.real

    def solve_poisson(self, source: np.ndarray) -> np.ndarray:
        """Zero-mean periodic solution of div(grad a) = source.

        Modes annihilated by div(grad), the mean among them, are dropped from
        the source.
        """
        sym = self.div_grad_symbol
        sh = sfft.fftn(source)
        null = self.div_grad_null
        sh[null] = 0.0
        out = sfft.ifftn(sh / np.where(null, 1.0, sym))
        return out if np.iscomplexobj(source) else out.real


def laplacian(u: np.ndarray, h: float, out: np.ndarray | None = None) -> np.ndarray:
    """Seven-point periodic Laplacian, accumulated in place."""
    if out is None:
        out = np.empty_like(u)
    np.multiply(u, -6.0, out=out)
    for ax in range(3):
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[ax], hi[ax] = slice(1, None), slice(None, -1)
        out[tuple(lo)] += u[tuple(hi)]
        out[tuple(hi)] += u[tuple(lo)]
        first = [slice(None)] * 3
        last = [slice(None)] * 3
        first[ax], last[ax] = 0, -1
        out[tuple(first)] += u[tuple(last)]
        out[tuple(last)] += u[tuple(first)]
    out *= 1.0 / (h * h)
    return out


def central_diff(u: np.ndarray, ax: int, h: float) -> np.ndarray:
    """Second-order central difference along ``ax`` with periodic wrap."""
    return (np.roll(u, -1, axis=ax) - np.roll(u, 1, axis=ax)) / (2.0 * h)
