import math

import numpy as np
import pytest

from mkglab.errors import BoxTooSmall, NumericBlowup
from mkglab.evolution import (
    Stepper,
    background_potential,
    build_initial_data,
    constraint_residual,
    covariant_derivative,
    electric_magnetic,
    energy_scale,
    field_strength,
    gauge_residual,
    make_perturbation,
    step,
    weighted_norm,
)
from mkglab.grid import GridSpec
from mkglab.ground_state import evaluate_profile
from mkglab.soliton import SolitonParams

REST = SolitonParams(0.8)
BOOST = SolitonParams(0.8, 0.0, (0.0, 0.0, 0.0), (0.0, 0.0, 0.3))


def test_flat_data_has_no_connection(prof08, grid32):
    s = build_initial_data(grid32, REST, prof08, eps=0.3, delta=0.0)
    assert not np.any(s.a_tilde) and not np.any(s.a_tilde_dot)
    assert gauge_residual(s) == 0.0
    f = evaluate_profile(prof08, grid32.radius)[0]
    np.testing.assert_allclose(s.phi, f, rtol=1e-12)
    np.testing.assert_allclose(s.pi, 0.8j * f, rtol=1e-12)


def test_coupled_data_satisfy_constraint(prof08, grid32):
    pert = make_perturbation(grid32, REST, 0.2, seed=1)
    s = build_initial_data(grid32, BOOST, prof08, eps=0.2, delta=0.4, perturbation=pert)
    assert constraint_residual(s) < 1e-8
    assert gauge_residual(s) < 1e-8
    assert np.any(s.a_tilde[0])


def test_box_too_small(prof08):
    with pytest.raises(BoxTooSmall):
        build_initial_data(GridSpec(6.0, 16), REST, prof08, 0.0, 0.0)


def test_perturbation_norm(grid32):
    dv, dw = make_perturbation(grid32, REST, 0.3, seed=4)
    assert weighted_norm(grid32, REST.xi, dv, dw) == pytest.approx(0.3, rel=1e-12)
    a, b = make_perturbation(grid32, REST, 0.3, seed=4)
    assert np.array_equal(a, dv) and np.array_equal(b, dw)


def test_background_field(grid32):
    eps = 0.3
    Ab = background_potential(grid32, eps)
    x, y, _ = grid32.coords
    np.testing.assert_allclose(Ab[1] + 0 * x, -0.5 * eps**2 * y)
    np.testing.assert_allclose(Ab[2] + 0 * x, 0.5 * eps**2 * x)


def test_field_strength_of_background(prof08, grid32):
    s = build_initial_data(grid32, REST, prof08, eps=0.3, delta=0.0)
    E, B = electric_magnetic(field_strength(s))
    assert np.max(np.abs(E)) == 0.0
    np.testing.assert_allclose(B[2], 0.09, rtol=1e-15)
    assert np.max(np.abs(B[:2])) == 0.0


def test_field_strength_gauge_invariant_and_divergence_free(prof08, grid32):
    pert = make_perturbation(grid32, REST, 0.2, seed=2)
    s = build_initial_data(grid32, BOOST, prof08, eps=0.2, delta=0.4, perturbation=pert)
    rng = np.random.default_rng(0)
    s.a_tilde[1:] += 0.01 * np.stack([grid32.lap(rng.normal(size=grid32.shape)) for _ in range(3)])
    F = field_strength(s)
    x, y, _ = grid32.coords
    q = np.pi / grid32.L
    chi = np.sin(q * x) * np.cos(2 * q * y)
    s2 = s.copy()
    for j, d in enumerate(grid32.grad(chi)):
        s2.a_tilde[j + 1] += d
    np.testing.assert_allclose(field_strength(s2), F, atol=1e-12)
    _, B = electric_magnetic(F)
    divB = sum(grid32.diff(B[j], j) for j in range(3))
    assert np.max(np.abs(divB)) < 1e-10


def test_covariant_derivative_trivial_cases(prof08, grid32):
    s = build_initial_data(grid32, BOOST, prof08, eps=0.0, delta=0.0)
    for j in range(3):
        np.testing.assert_array_equal(covariant_derivative(s, j + 1), grid32.diff(s.phi, j))
    np.testing.assert_array_equal(covariant_derivative(s, 0), s.pi)
    s.phi = np.full(grid32.shape, np.exp(0.3j))
    s.pi = np.zeros(grid32.shape, dtype=complex)
    for mu in range(4):
        assert np.max(np.abs(covariant_derivative(s, mu))) < 1e-13


@pytest.mark.parametrize("scheme", ["spectral", "fd"])
def test_gauge_covariance(prof08, scheme):
    errs = []
    for n in (32, 64):
        g = GridSpec(16.0, n, scheme=scheme)
        s = build_initial_data(g, BOOST, prof08, eps=0.3, delta=0.0)
        x, y, _ = g.coords
        chi = 0.5 * np.sin(np.pi * x / g.L) * np.cos(np.pi * y / g.L)
        s2 = s.copy()
        s2.phi = np.exp(1j * chi) * s.phi
        s2.pi = np.exp(1j * chi) * s.pi
        for j, d in enumerate(g.grad(chi)):
            s2.a_tilde[j + 1] -= d
        errs.append(max(np.max(np.abs(np.abs(covariant_derivative(s2, mu)) - np.abs(covariant_derivative(s, mu)))) for mu in range(4)))
    if scheme == "fd":
        assert errs[0] / errs[1] > 3.0
    else:
        assert errs[1] < 1e-5


def test_free_maxwell_energy(prof08):
    g = GridSpec(16.0, 16)
    s = build_initial_data(g, REST, prof08, 0.0, 0.0, box_tol=1.0)
    s.phi[:] = 0
    s.pi[:] = 0
    s.phi_max0 = 0.0
    _, y, z = g.coords
    # depends on (y, z) only, so div A~ = 0 and the gauge condition holds
    s.a_tilde[1] = np.exp(-(y**2 + z**2) / 32.0)

    def energy(st):
        return sum(
            g.integrate(st.a_tilde_dot[nu] ** 2 + sum(d**2 for d in g.grad(st.a_tilde[nu]))) for nu in range(4)
        )

    e0 = energy(s)
    out = step(s, 0.05, 1000)
    assert abs(energy(out) / e0 - 1) < 1e-4
    assert gauge_residual(out) < 1e-10
    assert not np.any(out.phi)


def test_stationary_soliton_short_run(prof08, grid32):
    s = build_initial_data(grid32, REST, prof08, 0.0, 0.0)
    out = step(s, 0.1, 50)
    f = evaluate_profile(prof08, grid32.radius)[0]
    assert grid32.l2(np.abs(out.phi) - f) / grid32.l2(f) < 1e-2
    phase = np.angle(np.vdot(f, out.phi))
    assert abs((phase - 0.8 * out.t + np.pi) % (2 * np.pi) - np.pi) < 1e-2
    # the input state is untouched
    assert s.t == 0.0 and np.array_equal(s.phi, s.phi.real)


def test_coupled_steps_keep_health(prof08, grid32):
    pert = make_perturbation(grid32, REST, 0.2, seed=1)
    s = build_initial_data(grid32, BOOST, prof08, eps=0.2, delta=0.4, perturbation=pert)
    out = step(s, 0.1, 30)
    for nu in range(4):
        assert abs(out.a_tilde[nu].mean()) < 1e-15
    assert gauge_residual(out) < 10 * (gauge_residual(s) + grid32.h**2 * energy_scale(out))
    assert constraint_residual(out) < 1e-3


def test_blowup_reports_last_good_state(prof08, grid32):
    s = build_initial_data(grid32, REST, prof08, 0.0, 0.0)
    s.phi *= 6
    s.pi *= 6
    with pytest.raises(NumericBlowup) as info:
        Stepper(s, 0.1).advance(500)
    last = info.value.last_state
    assert 0 < last.t < 50
    assert np.max(np.abs(last.phi)) <= 1e3 * last.phi_max0


def test_dt_above_stability_limit(prof08, grid32):
    s = build_initial_data(grid32, REST, prof08, 0.0, 0.0)
    with pytest.raises(ValueError):
        Stepper(s, 2.0)
    assert grid32.max_stable_dt(1.0) == pytest.approx(2 / math.sqrt(3 * (np.pi / grid32.h) ** 2 * (1 - 2 / 32) ** 2 + 1), rel=1e-12)
