"""Sign conventions used throughout the package.

* Metric signature (-, +, +, +); indices run 0..3 with 0 the time.
* Box operator: box = -d_t^2 + Delta.
* Raising an index flips the sign of the 0-component only: A^0 = -A_0.
* Covariant derivative: D_mu phi = d_mu phi + i A_mu phi.
* Current: J_nu = Im(phi conj(D_nu phi)); Lorenz gauge makes the connection
  equation box A_nu = -delta^2 eps^2 J_nu, i.e. d_t^2 A_nu = Delta A_nu + delta^2 eps^2 J_nu.
* Field strength F_{mu nu} = d_mu A_nu - d_nu A_mu, electric field E_i = F_{i0},
  magnetic field B = curl A (B^k = eps_{kij} F_{ij} / 2).  With the background
  (A_b)_1 = -eps^2 x_2 / 2, (A_b)_2 = eps^2 x_1 / 2 this gives B = (0, 0, eps^2).
* Gauss law consistent with the gauge-preserving evolution:
  div grad A_0 = -delta^2 eps^2 Im(phi conj(D_t phi)) when d_t A_j = 0.
"""

from __future__ import annotations

import numpy as np

METRIC = np.diag([-1.0, 1.0, 1.0, 1.0])


def raise_index(A):
    """Contravariant components of a covector given as a sequence of 4 arrays or scalars."""
    return [-A[0], A[1], A[2], A[3]]


def minkowski_square(A):
    """A^mu A_mu = -A_0^2 + |A|^2."""
    return -A[0] ** 2 + A[1] ** 2 + A[2] ** 2 + A[3] ** 2
