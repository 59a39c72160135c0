"""Implicit transport step: fixed points, conservation, Newton structure.

The Jacobian finite-difference check and the step-by-step comparison with
the scalar two-phase reference live here at small scale; the acceptance
suite reruns both at the full grid size.
"""

import numpy as np
import pytest

from conftest import random_simplex_field
from nschsim.ch_solver import (
    ChStepConfig,
    ch_step,
    chemical_potential,
    convective_ch_run,
    mobility_dissipation,
    newton_system,
    separation_margin,
)
from nschsim.errors import DomainError
from nschsim.grid import Grid
from nschsim.operators import diff_x_even, diff_y_even, gradient, leray_project
from nschsim.oracles import scalar_ch_trajectory
from nschsim.thermo import ModelParams, ch_energy, project_tangent


CFG = ChStepConfig(h=1e-3)


def perturbed_phi(rng, n, nx, ny, amplitude=0.05):
    mean = np.full((n, 1, 1), 1.0 / n)
    phi = mean + amplitude * (2.0 * rng.random((n, nx, ny)) - 1.0)
    phi = np.clip(phi, 1e-3, None)
    return phi / np.sum(phi, axis=0)


# --- fixed points and conservation ---------------------------------------


def test_uniform_state_is_exact_fixed_point():
    grid = Grid(16, 16)
    params = ModelParams(n=3)
    phi = np.broadcast_to(np.array([0.2, 0.3, 0.5])[:, None, None], (3, 16, 16)).copy()
    res = ch_step(grid, phi, None, params, CFG)
    assert np.array_equal(res.phi_next, phi)


def test_step_preserves_means_and_simplex():
    grid = Grid(20, 20)
    params = ModelParams(n=3, gamma_scale=0.01)
    rng = np.random.default_rng(2)
    phi = perturbed_phi(rng, 3, 20, 20)
    means0 = phi.mean(axis=(1, 2))
    for _ in range(3):
        res = ch_step(grid, phi, None, params, CFG)
        phi = res.phi_next
        assert np.max(np.abs(phi.mean(axis=(1, 2)) - means0)) <= 1e-12
        assert np.max(np.abs(np.sum(phi, axis=0) - 1.0)) <= 1e-10
        assert np.min(phi) > 0.0 and np.max(phi) < 1.0


def test_step_result_contract():
    grid = Grid(16, 16)
    params = ModelParams(n=2, gamma_scale=0.01)
    rng = np.random.default_rng(3)
    phi = perturbed_phi(rng, 2, 16, 16)
    res = ch_step(grid, phi, None, params, CFG)
    assert res.residual <= CFG.newton_tol
    assert res.newton_iters >= 1
    # potential lives in the tangent space pointwise
    assert np.max(np.abs(np.sum(res.w_next, axis=0))) <= 1e-10
    # and is consistent with the constitutive relation at the accepted state
    w_re = chemical_potential(grid, res.phi_next, phi, params)
    assert np.max(np.abs(w_re - res.w_next)) <= 1e-9


def test_step_rejects_boundary_state():
    grid = Grid(8, 8)
    params = ModelParams(n=2)
    phi = np.stack([np.zeros((8, 8)), np.ones((8, 8))])
    with pytest.raises(DomainError):
        ch_step(grid, phi, None, params, CFG)


# --- energy inequality ----------------------------------------------------


def test_diffusive_energy_inequality():
    grid = Grid(24, 24)
    params = ModelParams(n=3, gamma_scale=0.01)
    rng = np.random.default_rng(5)
    phi = perturbed_phi(rng, 3, 24, 24)
    e_old = ch_energy(grid, phi, params)
    for _ in range(5):
        res = ch_step(grid, phi, None, params, CFG)
        e_new = ch_energy(grid, res.phi_next, params)
        diss = CFG.h * mobility_dissipation(grid, res.w_next, phi, params)
        dgx, dgy = gradient(grid, res.phi_next - phi)
        jump = 0.5 * params.gamma_scale * grid.integrate(np.sum(dgx**2 + dgy**2, axis=0))
        tol = 1e-9 * (1.0 + abs(e_old))
        assert e_new + diss + jump <= e_old + tol
        assert diss >= 0.0
        phi, e_old = res.phi_next, e_new


def test_mobility_dissipation_nonnegative():
    grid = Grid(12, 12)
    params = ModelParams(n=2)
    rng = np.random.default_rng(7)
    w = project_tangent(rng.standard_normal((2, 12, 12)))
    assert mobility_dissipation(grid, w, perturbed_phi(rng, 2, 12, 12), params) >= 0.0


# --- Newton system --------------------------------------------------------


def test_residual_vanishes_at_accepted_state():
    grid = Grid(16, 16)
    params = ModelParams(n=2, gamma_scale=0.01)
    rng = np.random.default_rng(11)
    phi = perturbed_phi(rng, 2, 16, 16)
    res = ch_step(grid, phi, None, params, CFG)
    residual, _ = newton_system(grid, res.phi_next, phi, None, params, CFG)
    assert grid.norm_rms(project_tangent(residual)) <= CFG.newton_tol


def test_jacobian_action_stays_sum_free():
    grid = Grid(12, 12)
    params = ModelParams(n=3, gamma_scale=0.01)
    rng = np.random.default_rng(13)
    phi = perturbed_phi(rng, 3, 12, 12)
    _, apply_jac = newton_system(grid, phi, phi, None, params, CFG)
    d = project_tangent(rng.standard_normal((3, 12, 12)))
    out = apply_jac(d)
    assert np.max(np.abs(np.sum(out, axis=0))) <= 1e-9 / CFG.h


def test_jacobian_matches_finite_differences():
    grid = Grid(12, 12)
    params = ModelParams(n=3, gamma_scale=0.01)
    rng = np.random.default_rng(17)
    eps = 1e-6
    for _ in range(5):
        phi = perturbed_phi(rng, 3, 12, 12, amplitude=0.1)
        _, apply_jac = newton_system(grid, phi, phi, None, params, CFG)
        d = project_tangent(rng.standard_normal((3, 12, 12)))
        d /= grid.norm_rms(d)
        r_plus, _ = newton_system(grid, phi + eps * d, phi, None, params, CFG)
        r_minus, _ = newton_system(grid, phi - eps * d, phi, None, params, CFG)
        fd = project_tangent((r_plus - r_minus) / (2.0 * eps))
        jd = apply_jac(d)
        denom = grid.norm_rms(jd)
        assert grid.norm_rms(fd - jd) <= 1e-5 * denom


# --- two-phase reduction --------------------------------------------------


def test_vector_solver_matches_scalar_reference():
    grid = Grid(20, 20)
    params = ModelParams(n=2, gamma_scale=0.01)
    rng = np.random.default_rng(19)
    phi = perturbed_phi(rng, 2, 20, 20)
    oracle = scalar_ch_trajectory(grid, phi[1] - phi[0], params, CFG.h, 10)
    for k in range(10):
        res = ch_step(grid, phi, None, params, CFG)
        phi = res.phi_next
        assert np.max(np.abs((phi[1] - phi[0]) - oracle[k + 1])) <= 1e-8


# --- transport with prescribed velocity -----------------------------------


def vortex(grid, amplitude):
    x, y = grid.cell_centers()
    psi = amplitude * np.sin(np.pi * x / grid.lx) ** 2 * np.sin(np.pi * y / grid.ly) ** 2
    return leray_project(grid, diff_y_even(psi, grid.dy), -diff_x_even(psi, grid.dx))


def test_convective_run_uniform_constant():
    grid = Grid(12, 12)
    params = ModelParams(n=2)
    phi = np.broadcast_to(np.array([0.4, 0.6])[:, None, None], (2, 12, 12)).copy()
    out = convective_ch_run(grid, phi, None, params, CFG, t_end=5e-3)
    assert np.max(np.abs(out.phi - phi)) <= 1e-14
    assert np.max(np.abs(np.diff(out.energy))) <= 1e-12


def test_convective_run_monotone_energy_without_velocity():
    grid = Grid(20, 20)
    params = ModelParams(n=2, gamma_scale=0.01)
    rng = np.random.default_rng(23)
    phi = perturbed_phi(rng, 2, 20, 20)
    out = convective_ch_run(grid, phi, None, params, CFG, t_end=8e-3)
    assert np.all(np.diff(out.energy) <= 1e-9 * (1.0 + np.abs(out.energy[:-1])))
    assert np.all(out.slack[1:] >= -1e-9 * (1.0 + np.abs(out.energy[:-1])))


def test_convective_run_conserves_mass_with_velocity():
    grid = Grid(20, 20)
    params = ModelParams(n=2, gamma_scale=0.01)
    rng = np.random.default_rng(29)
    phi = perturbed_phi(rng, 2, 20, 20)
    means0 = phi.mean(axis=(1, 2))
    out = convective_ch_run(grid, phi, vortex(grid, 0.4), params, CFG, t_end=8e-3)
    assert np.max(np.abs(out.phi.mean(axis=(1, 2)) - means0)) <= 1e-12
    assert np.all(out.slack[1:] >= -1e-9 * (1.0 + np.abs(out.energy[:-1])))


# --- separation margin ----------------------------------------------------


def test_separation_margin_values():
    phi = np.broadcast_to(np.full(4, 0.25)[:, None, None], (4, 3, 3))
    assert separation_margin(phi) == pytest.approx(0.25, abs=1e-15)
    phi2 = np.stack([np.zeros((3, 3)), np.ones((3, 3))])
    assert separation_margin(phi2) == 0.0
