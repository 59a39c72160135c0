"""End-to-end acceptance checklist.

One test per shipped guarantee, each ending in a single printed
PASS line with its headline number (visible with ``pytest -s``).  The
two 200-step coupled runs at 64x64 are shared module-wide; everything
here goes through the public entry points only.
"""

import math
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from nschsim import (
    Grid,
    ModelParams,
    load_config,
    run,
)
from nschsim.ch_solver import (
    ChStepConfig,
    newton_system,
    separation_margin,
    stationary_solve,
)
from nschsim.ns_solver import (
    FlowState,
    MomentumConfig,
    coupled_step,
    density_from_phase,
)
from nschsim.operators import (
    divergence,
    gradient,
    laplacian_neumann,
    leray_project,
    poisson_solve_neumann,
)
from nschsim.oracles import constant_density_step
from nschsim.sim import initial_phase, initial_velocity, reduce2_deviation
from nschsim.thermo import kinetic_energy, project_tangent, psi_prime

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def _report(num, text):
    print(f"criterion {num:02d} PASS: {text}")


@pytest.fixture(scope="module")
def run_alpha0(tmp_path_factory):
    cfg = load_config(CONFIGS / "three_phase.ini")
    cfg.out_dir = str(tmp_path_factory.mktemp("alpha0"))
    return run(cfg)


@pytest.fixture(scope="module")
def run_alpha01(tmp_path_factory):
    cfg = load_config(CONFIGS / "three_phase.ini")
    cfg.params = replace(cfg.params, alpha=0.1)
    cfg.out_dir = str(tmp_path_factory.mktemp("alpha01"))
    return run(cfg)


# --- 1: discrete energy inequality over a stirred three-phase run ----------


def test_criterion_01_energy_inequality(run_alpha0, run_alpha01):
    worst = {}
    for name, result in (("alpha=0", run_alpha0), ("alpha=0.1", run_alpha01)):
        rows = result.ledger.accepted_rows()
        assert result.diagnostics.accepted >= 200
        for r in rows:
            assert r.slack >= -1e-9 * (1.0 + abs(r.e_tot)), (name, r.t, r.slack)
            assert r.diss_visc >= 0.0 and r.diss_ch >= 0.0
        attempts = len(result.ledger.rows)
        assert result.diagnostics.rejected <= 0.02 * attempts
        assert result.ledger.telescoping_defect() <= 1e-12
        worst[name] = result.ledger.worst_slack()
    _report(1, f"worst slack {worst['alpha=0']:.2e} (alpha=0), "
               f"{worst['alpha=0.1']:.2e} (alpha=0.1), rejections within 2%")


# --- 2: mass conservation --------------------------------------------------


def test_criterion_02_mass_conservation(run_alpha0, run_alpha01):
    for result in (run_alpha0, run_alpha01):
        assert result.diagnostics.max_step_drift <= 1e-12
        assert result.diagnostics.cumulative_drift <= 1e-9
    _report(2, f"per-step drift {run_alpha0.diagnostics.max_step_drift:.2e}, "
               f"cumulative {run_alpha0.diagnostics.cumulative_drift:.2e}")


# --- 3: simplex constraint -------------------------------------------------


def test_criterion_03_simplex_constraint(run_alpha0, run_alpha01):
    for result in (run_alpha0, run_alpha01):
        sums = np.sum(result.phi, axis=0)
        assert np.max(np.abs(sums - 1.0)) <= 1e-10
        assert np.min(result.phi) > 0.0 and np.max(result.phi) < 1.0
        for r in result.ledger.accepted_rows():
            assert r.sep_margin > 0.0
    _report(3, f"final sum defect {np.max(np.abs(np.sum(run_alpha0.phi, axis=0) - 1.0)):.2e}, "
               f"margin {run_alpha0.diagnostics.sep_margin_final:.2e}")


# --- 4: two-component reduction against the scalar solver ------------------


def test_criterion_04_two_component_reduction():
    cfg = load_config(CONFIGS / "reduce2.ini")
    worst, n_steps = reduce2_deviation(cfg, 100)
    assert n_steps == 100
    assert worst <= 1e-8
    _report(4, f"max deviation {worst:.2e} over {n_steps} steps")


# --- 5: matched-density momentum step against the assembled reference ------


def test_criterion_05_matched_density_reference():
    grid = Grid(48, 48)
    rng = np.random.default_rng(23)
    u0 = rng.standard_normal((48, 48))
    v0 = rng.standard_normal((48, 48))
    u0, v0 = leray_project(grid, u0, v0)
    h = 1e-3
    devs = []
    for alpha, rho, nu in ((0.0, 1.0, 0.7), (0.1, 2.0, 0.4)):
        params = ModelParams(
            n=2, rho_tilde=np.full(2, rho), nu_values=np.full(2, nu), alpha=alpha
        )
        phi = np.broadcast_to(np.full(2, 0.5)[:, None, None], (2, 48, 48)).copy()
        state = FlowState(u0.copy(), v0.copy(), np.zeros((48, 48)))
        out = coupled_step(grid, phi, state, params, ChStepConfig(h=h),
                           MomentumConfig(krylov_rtol=1e-12))
        ref_u, ref_v, _ = constant_density_step(grid, u0, v0, rho=rho, nu=nu,
                                                h=h, alpha=alpha)
        dev = max(np.max(np.abs(out.momentum.u - ref_u)),
                  np.max(np.abs(out.momentum.v - ref_v)))
        assert dev <= 1e-10, (alpha, dev)
        devs.append(dev)
    _report(5, f"one-step deviation {devs[0]:.2e} (alpha=0), {devs[1]:.2e} (alpha=0.1)")


# --- 6: stationary profiles ------------------------------------------------


def bisect_logistic(a, theta=1.0, lo=1e-12, hi=1.0 - 1e-12, tol=1e-14):
    def g(p):
        return 0.5 * theta * math.log(p / (1.0 - p)) - a

    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if g(mid) <= 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_criterion_06_stationary_certificates():
    cfg = load_config(CONFIGS / "stationary.ini")
    result = run(cfg)
    p_ref = bisect_logistic(-0.3)
    assert np.max(np.abs(result.phi[0] - p_ref)) <= 1e-10
    assert result.diagnostics.sep_margin_final > 0.0

    solver_cfg = ChStepConfig(h=1.0, newton_tol=1e-10)
    for a in (-0.8, 0.3, 1.1):
        grid = Grid(32, 32)
        params = ModelParams(n=2)
        phi = stationary_solve(grid, np.array([a, -a]), np.array([0.5, 0.5]),
                               params, solver_cfg)
        assert np.max(np.abs(phi[0] - bisect_logistic(a))) <= 1e-10

    grid = Grid(24, 24)
    rng = np.random.default_rng(7)
    x, y = grid.cell_centers()
    worst_res = 0.0
    for trial in range(10):
        n = 2 if trial % 2 == 0 else 3
        params = ModelParams(n=n, theta=1.0, gamma_scale=0.02)
        raw = rng.uniform(0.2, 0.8, size=n)
        m = raw / raw.sum()
        if trial < 5:
            f = project_tangent(rng.uniform(-0.5, 0.5, size=n))
            f_field = np.broadcast_to(f[:, None, None], (n, 24, 24))
        else:
            modes = np.stack(
                [rng.uniform(-0.4, 0.4)
                 * np.cos((trial % 3 + 1) * np.pi * x) * np.cos((c + 1) * np.pi * y)
                 for c in range(n)]
            )
            f = project_tangent(modes)
            f_field = f
        phi = stationary_solve(grid, f, m, params, solver_cfg)
        residual = (
            -params.gamma_scale * laplacian_neumann(grid, phi)
            + project_tangent(psi_prime(phi, params.theta))
            - f_field
        )
        worst_res = max(worst_res, grid.norm_rms(residual))
        assert grid.norm_rms(residual) <= 1e-10
        assert separation_margin(phi) > 0.0
    _report(6, f"logistic match <= 1e-10, worst random residual {worst_res:.2e}")


# --- 7: viscous decay of the kinetic energy --------------------------------


def test_criterion_07_kinetic_energy_decay():
    cfg = load_config(CONFIGS / "decay.ini")
    grid = cfg.grid()
    phi0 = initial_phase(grid, cfg)
    u0, v0 = initial_velocity(grid, cfg)
    e_kin0 = kinetic_energy(grid, density_from_phase(phi0, cfg.params), u0, v0)
    result = run(cfg)
    e_kin_end = result.ledger.accepted_rows()[-1].e_kin
    assert e_kin0 > 0.0
    assert e_kin_end <= 0.1 * e_kin0
    _report(7, f"E_kin fell {e_kin0:.4f} -> {e_kin_end:.2e} "
               f"(factor {e_kin0 / e_kin_end:.0f}) by t=0.5")


# --- 8: long-run equilibrium detection -------------------------------------


def test_criterion_08_equilibrium_detection():
    cfg = load_config(CONFIGS / "two_phase_long.ini")
    result = run(cfg)
    d = result.diagnostics
    assert d.accepted <= 5000
    assert d.t_eq is not None
    assert d.eq_residual_final <= 1e-6
    assert d.t_star is not None and d.t_star < d.t_eq
    _report(8, f"t*={d.t_star:.4f} < t_eq={d.t_eq:.4f} after {d.accepted} steps, "
               f"residual {d.eq_residual_final:.2e}")


# --- 9: operator identities on random instances ----------------------------


def test_criterion_09_operator_identities():
    rng = np.random.default_rng(99)
    for trial in range(1000):
        nx = int(rng.integers(4, 21))
        ny = int(rng.integers(4, 21))
        grid = Grid(nx, ny, 0.5 + rng.random(), 0.5 + rng.random())
        a = rng.standard_normal((nx, ny))
        fu = rng.standard_normal((nx, ny))
        fv = rng.standard_normal((nx, ny))

        gx, gy = gradient(grid, a)
        lhs = grid.inner(gx, fu) + grid.inner(gy, fv)
        rhs = -grid.inner(a, divergence(grid, fu, fv))
        scale = grid.norm_l2(a) * grid.norm_l2(np.stack([fu, fv]))
        assert abs(lhs - rhs) <= 1e-12 * max(scale, 1.0)

        composed = divergence(grid, gx, gy)
        assert np.array_equal(laplacian_neumann(grid, a), composed)

        pu, pv = leray_project(grid, gx, gy)
        gnorm = grid.norm_l2(np.stack([gx, gy]))
        assert grid.norm_l2(np.stack([pu, pv])) <= 1e-12 * (1.0 + gnorm)

        qu, qv = leray_project(grid, fu, fv)
        qnorm = grid.norm_l2(np.stack([qu, qv]))
        assert grid.norm_l2(divergence(grid, qu, qv)) <= 1e-10 * (1.0 + qnorm)

        if trial % 5 == 0:
            b = rng.standard_normal((nx, ny))
            b -= b.mean()
            sol = poisson_solve_neumann(grid, b)
            res = laplacian_neumann(grid, sol) - b
            assert grid.norm_l2(res) <= 1e-10 * (1.0 + grid.norm_l2(b))
    _report(9, "adjointness, composition, projection and Poisson residuals "
               "on 1000 random grids")


# --- 10: Newton linearization against finite differences -------------------


def test_criterion_10_jacobian_finite_differences():
    cfg = ChStepConfig(h=1e-3)
    rng = np.random.default_rng(41)
    eps = 1e-6
    worst = 0.0
    for trial in range(100):
        n = 2 + trial % 3
        grid = Grid(10, 10)
        amp = 0.02 + 0.18 * rng.random()
        mean = np.full((n, 1, 1), 1.0 / n)
        phi = mean + amp * (2.0 * rng.random((n, 10, 10)) - 1.0)
        phi = np.clip(phi, 1e-3, None)
        phi /= np.sum(phi, axis=0)
        params = ModelParams(n=n, gamma_scale=0.01)

        _, apply_jac = newton_system(grid, phi, phi, None, params, cfg)
        d = project_tangent(rng.standard_normal((n, 10, 10)))
        d /= grid.norm_rms(d)
        r_plus, _ = newton_system(grid, phi + eps * d, phi, None, params, cfg)
        r_minus, _ = newton_system(grid, phi - eps * d, phi, None, params, cfg)
        fd = project_tangent((r_plus - r_minus) / (2.0 * eps))
        jd = apply_jac(d)
        rel = grid.norm_rms(fd - jd) / grid.norm_rms(jd)
        worst = max(worst, rel)
        assert rel <= 1e-5
    _report(10, f"worst relative Jacobian-vs-FD deviation {worst:.2e} on 100 states")


# --- 11: bit-for-bit determinism -------------------------------------------


def test_criterion_11_determinism(run_alpha0, tmp_path_factory):
    cfg = load_config(CONFIGS / "three_phase.ini")
    cfg.out_dir = str(tmp_path_factory.mktemp("repeat"))
    second = run(cfg)
    first_bytes = Path(run_alpha0.csv_path).read_bytes()
    second_bytes = Path(second.csv_path).read_bytes()
    assert first_bytes == second_bytes
    for a, b in zip(run_alpha0.snapshot_paths, second.snapshot_paths):
        assert Path(a).read_bytes() == Path(b).read_bytes()
    _report(11, f"identical CSV bytes ({len(first_bytes)} B) and snapshots "
                "across repeated runs")
