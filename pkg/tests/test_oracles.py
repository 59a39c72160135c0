"""Sanity checks of the reference implementations themselves.

Before the oracles are allowed to judge the main solvers, they have to
pass closed-form checks of their own: fixed points, conservation, the
analytic decay factor of a single linearized mode, and basic structure of
the saddle-point step.  Nothing here touches the matrix-free solvers.
"""

import numpy as np
import pytest

from nschsim.errors import DomainError
from nschsim.grid import Grid
from nschsim.oracles import (
    _diff_even_1d,
    _diff_odd_1d,
    _scalar_coeffs,
    constant_density_step,
    scalar_ch_step,
    scalar_ch_trajectory,
)
from nschsim.thermo import ModelParams


def test_even_difference_rows():
    d = 0.1
    m = _diff_even_1d(5, d).toarray()
    f = np.array([1.0, 4.0, 2.0, 0.0, 3.0])
    out = m @ f
    assert out[0] == pytest.approx((f[1] - f[0]) / (2 * d))
    assert out[2] == pytest.approx((f[3] - f[1]) / (2 * d))
    assert out[4] == pytest.approx((f[4] - f[3]) / (2 * d))
    # constants have zero even-reflected difference
    assert np.allclose(m @ np.ones(5), 0.0, atol=1e-15)


def test_odd_difference_rows():
    d = 0.25
    m = _diff_odd_1d(4, d).toarray()
    f = np.array([2.0, -1.0, 0.5, 1.0])
    out = m @ f
    assert out[0] == pytest.approx((f[1] + f[0]) / (2 * d))
    assert out[3] == pytest.approx((-f[3] - f[2]) / (2 * d))


def test_scalar_coeffs_default_model():
    params = ModelParams(n=2, theta_c=2.0, mobility_scale=3.0)
    c1, c2, m_eff = _scalar_coeffs(params)
    assert c1 == pytest.approx(0.0, abs=1e-15)
    assert c2 == pytest.approx(-1.0, abs=1e-15)  # -theta_c / 2
    assert m_eff == pytest.approx(3.0, abs=1e-14)


def test_scalar_coeffs_rejects_wrong_shape():
    with pytest.raises(DomainError):
        _scalar_coeffs(ModelParams(n=3))
    with pytest.raises(DomainError):
        _scalar_coeffs(ModelParams(n=2, mobility_model="product"))


def test_scalar_step_uniform_fixed_point():
    grid = Grid(12, 10)
    params = ModelParams(n=2, gamma_scale=0.01)
    u0 = np.full((12, 10), 0.2)
    u1 = scalar_ch_step(grid, u0, params, h=1e-3)
    assert np.max(np.abs(u1 - u0)) <= 1e-12


def test_scalar_step_conserves_mean():
    grid = Grid(16, 16)
    params = ModelParams(n=2, gamma_scale=0.01)
    rng = np.random.default_rng(5)
    u = 0.1 + 0.05 * rng.standard_normal((16, 16))
    traj = scalar_ch_trajectory(grid, u, params, h=1e-3, n_steps=5)
    means = traj.mean(axis=(1, 2))
    assert np.max(np.abs(means - means[0])) <= 1e-12


def test_scalar_step_linearized_mode_decay():
    # a tiny single cosine mode evolves by the analytic implicit factor
    #   1 / (1 + h m_eff lambda (zeta lambda + mu'(0)))
    # with lambda = (sin(k pi / nx) / dx)^2 the composed-stencil eigenvalue
    grid = Grid(24, 24)
    theta, theta_c, zeta, scale = 1.0, 2.0, 0.01, 1.0
    params = ModelParams(n=2, theta=theta, theta_c=theta_c, gamma_scale=zeta,
                         mobility_scale=scale)
    k = 3
    h = 1e-3
    amp = 1e-7
    x = (np.arange(grid.nx) + 0.5) / grid.nx
    mode = np.cos(k * np.pi * x)[:, None] * np.ones((1, grid.ny))
    u1 = scalar_ch_step(grid, amp * mode, params, h, newton_tol=1e-13)
    lam = (np.sin(k * np.pi / grid.nx) / grid.dx) ** 2
    # implicit update of the linearization (u - u_k)/h = -m_eff lam mu, with
    # mu = (zeta lam + 2 theta - c2) u - c2 u_k
    c2 = -theta_c / 2.0
    denom = 1.0 + h * scale * lam * (zeta * lam + 2.0 * theta - c2)
    numer = 1.0 + h * scale * lam * c2
    factor = numer / denom
    assert np.max(np.abs(u1 - factor * amp * mode)) <= 1e-5 * amp


def test_scalar_step_guards_interiority():
    grid = Grid(8, 8)
    params = ModelParams(n=2)
    with pytest.raises(DomainError):
        scalar_ch_step(grid, np.full((8, 8), 1.0), params, h=1e-3)


def test_constant_density_rest_state():
    grid = Grid(12, 12)
    z = np.zeros((12, 12))
    u, v, p = constant_density_step(grid, z, z, rho=1.0, nu=0.5, h=1e-3)
    assert np.max(np.abs(u)) <= 1e-12
    assert np.max(np.abs(v)) <= 1e-12
    assert np.max(np.abs(p)) <= 1e-10


def test_constant_density_step_structure():
    grid = Grid(16, 16)
    rng = np.random.default_rng(11)
    # start from a projected (solenoidal) field built by the oracle's own
    # discrete operators: solve one step from noise, then step again
    u0 = 0.1 * rng.standard_normal((16, 16))
    v0 = 0.1 * rng.standard_normal((16, 16))
    u1, v1, p1 = constant_density_step(grid, u0, v0, rho=2.0, nu=1.0, h=1e-3)
    from nschsim.oracles import _operators_2d

    _, _, ox, oy, _ = _operators_2d(grid)
    div = ox @ u1.ravel() + oy @ v1.ravel()
    assert np.max(np.abs(div)) <= 1e-9 * max(1.0, np.max(np.hypot(u1, v1)))
    assert abs(np.mean(p1)) <= 1e-12
    # viscosity dissipates: a second step from the solenoidal state loses energy
    u2, v2, _ = constant_density_step(grid, u1, v1, rho=2.0, nu=1.0, h=1e-3)
    e1 = np.sum(u1 * u1 + v1 * v1)
    e2 = np.sum(u2 * u2 + v2 * v2)
    assert e2 < e1
