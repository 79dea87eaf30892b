import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mkglab.errors import GridMismatch
from mkglab.evolution import make_perturbation
from mkglab.grid import GridSpec
from mkglab.ground_state import GroundStateProfile
from mkglab.soliton import SolitonParams
from mkglab.spectra import (
    assemble_operator,
    h1_l2_norm2,
    kernel_residual,
    lowest_eigenvalues,
    negative_count,
    orthogonality_defect,
    project_orthogonal,
    remainder_energy,
)


def test_kernel_residuals(prof08):
    assert kernel_residual(assemble_operator(prof08, "minus", 0), prof08) < 1e-3
    assert kernel_residual(assemble_operator(prof08, "plus", 1), prof08) < 1e-3


@pytest.mark.parametrize("which,ell", [("minus", 0), ("plus", 1)])
def test_kernel_residual_second_order(prof08, which, ell):
    coarse = kernel_residual(assemble_operator(prof08, which, ell, n=1000), prof08)
    fine = kernel_residual(assemble_operator(prof08, which, ell, n=2000), prof08)
    assert 3.2 < coarse / fine < 4.8


def test_negative_counts(prof08):
    assert negative_count(prof08, "plus") == {0: 1, 1: 0, 2: 0}
    assert negative_count(prof08, "minus") == {0: 0, 1: 0, 2: 0}


def test_lowest_eigenvalue_bounds(prof08):
    for ell in (0, 1, 2):
        assert lowest_eigenvalues(assemble_operator(prof08, "minus", ell), 1)[0] >= -1e-3
    assert abs(lowest_eigenvalues(assemble_operator(prof08, "plus", 1), 1)[0]) < 1e-3
    vals = lowest_eigenvalues(assemble_operator(prof08, "plus", 0), 5)
    assert np.all(np.diff(vals) > 0)


def test_free_operator_matches_analytic_spectrum(prof08):
    # with f = 0 the operator is -d^2/dr^2 + kappa^2 with Dirichlet ends,
    # whose discrete eigenvalues are known in closed form
    zero = GroundStateProfile(
        prof08.m, prof08.omega, prof08.p, prof08.r_samples, 0 * prof08.f_samples, 0 * prof08.df_samples, prof08.tail_rate
    )
    n = 500
    op = assemble_operator(zero, "plus", 0, n=n)
    j = np.arange(1, 6)
    exact = prof08.kappa**2 + 4 / op.dr**2 * np.sin(j * np.pi / (2 * (n + 1))) ** 2
    np.testing.assert_allclose(lowest_eigenvalues(op, 5), exact, rtol=1e-10)


def test_operator_argument_errors(prof08):
    with pytest.raises(ValueError):
        assemble_operator(prof08, "zero", 0)
    with pytest.raises(ValueError):
        lowest_eigenvalues(assemble_operator(prof08, "plus", 0), 11)
    with pytest.raises(ValueError):
        kernel_residual(assemble_operator(prof08, "plus", 0), prof08)


LAM = SolitonParams(0.8, 0.0, (0.0, 0.0, 0.0), (0.0, 0.0, 0.3))


def test_remainder_energy_trivial_cases(prof08, grid32):
    z = np.zeros(grid32.shape, dtype=complex)
    assert remainder_energy(z, z, LAM, prof08, grid32) == 0.0
    w = make_perturbation(grid32, LAM, 1.0, seed=3)[1]
    expected = LAM.rho * grid32.integrate(np.abs(w) ** 2)
    assert remainder_energy(z, w, LAM, prof08, grid32) == pytest.approx(expected, rel=1e-12)


def test_remainder_energy_grid_mismatch(prof08, grid32):
    z = np.zeros((16, 16, 16), dtype=complex)
    with pytest.raises(GridMismatch):
        remainder_energy(z, z, LAM, prof08, grid32)
    with pytest.raises(GridMismatch):
        project_orthogonal(z, z, LAM, prof08, grid32)


def test_projection_removes_defect_and_is_idempotent(prof08, grid32):
    v, w = make_perturbation(grid32, LAM, 1.0, seed=11)
    scale = np.max(np.abs(orthogonality_defect(v, w, LAM, prof08, grid32)))
    pv, pw = project_orthogonal(v, w, LAM, prof08, grid32)
    assert np.max(np.abs(orthogonality_defect(pv, pw, LAM, prof08, grid32))) < 1e-10 * scale
    qv, qw = project_orthogonal(pv, pw, LAM, prof08, grid32)
    assert np.max(np.abs(qv - pv)) < 1e-10 * np.max(np.abs(pv))
    assert np.max(np.abs(qw - pw)) < 1e-10 * np.max(np.abs(pw))


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 10_000), amp=st.floats(0.01, 10.0))
def test_coercivity_property(prof08, grid32, seed, amp):
    v, w = make_perturbation(grid32, LAM, amp, seed=seed)
    v, w = project_orthogonal(v, w, LAM, prof08, grid32)
    E = remainder_energy(v, w, LAM, prof08, grid32)
    assert E > 0
    # quadratic form: scaling (v, w) by 2 multiplies E by 4
    assert remainder_energy(2 * v, 2 * w, LAM, prof08, grid32) == pytest.approx(4 * E, rel=1e-12)
    assert E / h1_l2_norm2(v, w, grid32) > 0
