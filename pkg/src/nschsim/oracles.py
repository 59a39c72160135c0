"""Independent reference implementations for cross-checking the main solvers.

Two reductions of the full model have classical counterparts:

* with two components, the composition is determined by the single scalar
  u = phi_2 - phi_1 and the transport step collapses to a scalar
  Cahn-Hilliard step with potential (theta/2)[(1+u)ln(1+u)+(1-u)ln(1-u)];
* with matched specific densities and a uniform composition, the momentum
  step collapses to a constant-density incompressible step.

Both are reimplemented here from scratch on assembled sparse matrices with
direct solves, sharing nothing with the main path beyond the Grid object:
the main solvers are matrix-free with transform preconditioning, so an
agreement failure localizes a bug rather than reproducing one.  The test
suite and the ``reduce2`` command compare the two routes step by step.
"""

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .errors import DomainError, NewtonDivergence
from .grid import Grid
from .thermo import ModelParams

__all__ = [
    "scalar_ch_step",
    "scalar_ch_trajectory",
    "constant_density_step",
]


# --- independently assembled stencils -------------------------------------
#
# One-dimensional centered first differences with ghost reflection, as
# sparse matrices.  Even reflection (zero normal derivative) for scalars
# and flux potentials, odd reflection (zero wall value) for velocity
# components and fluxes.  The two-dimensional operators act on fields of
# shape (nx, ny) flattened in C order, so the x factor is the slow index.


def _diff_even_1d(n: int, d: float) -> sp.csr_matrix:
    m = sp.lil_matrix((n, n))
    for i in range(1, n - 1):
        m[i, i - 1] = -1.0
        m[i, i + 1] = 1.0
    m[0, 0] = -1.0
    m[0, 1] = 1.0
    m[n - 1, n - 2] = -1.0
    m[n - 1, n - 1] = 1.0
    return (m / (2.0 * d)).tocsr()


def _diff_odd_1d(n: int, d: float) -> sp.csr_matrix:
    m = sp.lil_matrix((n, n))
    for i in range(1, n - 1):
        m[i, i - 1] = -1.0
        m[i, i + 1] = 1.0
    m[0, 0] = 1.0
    m[0, 1] = 1.0
    m[n - 1, n - 2] = -1.0
    m[n - 1, n - 1] = -1.0
    return (m / (2.0 * d)).tocsr()


def _operators_2d(grid: Grid):
    """Return (Ex, Ey, Ox, Oy, L): even/odd differences and the Laplacian.

    L is the composition divergence(gradient(.)) -- the same wide stencil
    the main path applies factor by factor, here as one assembled matrix.
    """
    ix = sp.identity(grid.nx, format="csr")
    iy = sp.identity(grid.ny, format="csr")
    ex = _diff_even_1d(grid.nx, grid.dx)
    ey = _diff_even_1d(grid.ny, grid.dy)
    ox = _diff_odd_1d(grid.nx, grid.dx)
    oy = _diff_odd_1d(grid.ny, grid.dy)
    Ex = sp.kron(ex, iy, format="csr")
    Ey = sp.kron(ix, ey, format="csr")
    Ox = sp.kron(ox, iy, format="csr")
    Oy = sp.kron(ix, oy, format="csr")
    L = sp.kron(ox @ ex, iy, format="csr") + sp.kron(ix, oy @ ey, format="csr")
    return Ex, Ey, Ox, Oy, L


# --- scalar two-phase Cahn-Hilliard ---------------------------------------


def _scalar_coeffs(params: ModelParams):
    """Effective coefficients of the u = phi_2 - phi_1 reduction.

    Writing both chemical potentials in terms of u (their pointwise sum
    vanishes) gives a single potential

        mu = -zeta lap u + theta ln((1+u)/(1-u)) - c1 - c2 (u + u_old)

    driven through the flux m_eff lap mu, with the constants determined by
    the 2x2 interaction and mobility matrices.
    """
    if params.n != 2:
        raise DomainError("the scalar reduction needs exactly two components")
    if params.mobility_model != "constant":
        raise DomainError("the scalar reduction needs a constant mobility")
    a = params.a_matrix
    m = params.mobility
    c1 = 0.5 * (a[1, 1] - a[0, 0])
    c2 = 0.25 * (a[0, 0] + a[1, 1] - 2.0 * a[0, 1])
    m_eff = 0.5 * (m[0, 0] + m[1, 1] - 2.0 * m[0, 1])
    return c1, c2, m_eff


def scalar_ch_step(
    grid: Grid,
    u_k: np.ndarray,
    params: ModelParams,
    h: float,
    newton_tol: float = 1e-9,
    max_newton: int = 40,
    s_guard: float = 1e-9,
) -> np.ndarray:
    """One implicit scalar step of the two-phase reduction, v = 0.

    Newton with an assembled sparse Jacobian and direct solves; the
    interiority guard mirrors the vector solver: |u| stays below
    1 - 2 s_guard, i.e. both volume fractions stay above s_guard.
    """
    c1, c2, m_eff = _scalar_coeffs(params)
    zeta = params.gamma_scale
    theta = params.theta
    _, _, _, _, L = _operators_2d(grid)
    n_dof = grid.nx * grid.ny
    eye = sp.identity(n_dof, format="csr")

    uk = u_k.ravel()
    if np.max(np.abs(uk)) >= 1.0 - 2.0 * s_guard:
        raise DomainError("previous scalar state is not interior enough to step from")

    def mu_of(u):
        return (
            -zeta * (L @ u)
            + theta * np.log((1.0 + u) / (1.0 - u))
            - c1
            - c2 * (u + uk)
        )

    def residual_of(u):
        return (u - uk) / h - m_eff * (L @ mu_of(u))

    u = uk.copy()
    res = residual_of(u)
    rms = float(np.sqrt(np.mean(res * res)))
    target = 0.25 * newton_tol

    iters = 0
    while rms > target:
        if iters >= max_newton:
            raise NewtonDivergence(
                f"scalar reduction Newton not converged (rms={rms:.3e})"
            )
        curv = 2.0 * theta / (1.0 - u * u)
        dmu = -zeta * L + sp.diags(curv) - c2 * eye
        jac = eye / h - m_eff * (L @ dmu)
        delta = spsolve(jac.tocsc(), -res)

        s = 1.0
        accepted = False
        for _ in range(60):
            trial = u + s * delta
            if np.max(np.abs(trial)) < 1.0 - 2.0 * s_guard:
                trial_res = residual_of(trial)
                trial_rms = float(np.sqrt(np.mean(trial_res * trial_res)))
                if trial_rms <= rms or trial_rms <= target:
                    u, res, rms = trial, trial_res, trial_rms
                    accepted = True
                    break
            s *= 0.5
        if not accepted:
            raise NewtonDivergence(
                f"scalar reduction line search stalled (rms={rms:.3e})"
            )
        iters += 1

    u = u + (np.mean(uk) - np.mean(u))
    return u.reshape(grid.nx, grid.ny)


def scalar_ch_trajectory(
    grid: Grid,
    u0: np.ndarray,
    params: ModelParams,
    h: float,
    n_steps: int,
    newton_tol: float = 1e-9,
) -> np.ndarray:
    """Evolve u through n_steps; returns array of shape (n_steps+1, nx, ny)."""
    out = np.empty((n_steps + 1, grid.nx, grid.ny))
    out[0] = u0
    for k in range(n_steps):
        out[k + 1] = scalar_ch_step(grid, out[k], params, h, newton_tol=newton_tol)
    return out


# --- constant-density incompressible step ---------------------------------


def constant_density_step(
    grid: Grid,
    u_k: np.ndarray,
    v_k: np.ndarray,
    rho: float,
    nu: float,
    h: float,
    alpha: float = 0.0,
    picard_sweeps: int = 2,
):
    """One implicit constant-density momentum step, solved as one system.

    Assembles the full velocity-pressure saddle problem (momentum rows,
    continuity rows, a zero-mean pressure gauge) and solves it directly,
    repeating the same fixed number of sweeps on the convecting field as
    the main stepper.  Returns (u, v, p) on the grid.
    """
    Ex, Ey, Ox, Oy, _ = _operators_2d(grid)
    n_dof = grid.nx * grid.ny
    eye = sp.identity(n_dof, format="csr")

    # -div(coef D .) as four blocks; coef constant here.
    def strain_blocks(coef):
        buu = coef * (Ex @ Ox + 0.5 * Ey @ Oy)
        buv = coef * (0.5 * Ey @ Ox)
        bvu = coef * (0.5 * Ex @ Oy)
        bvv = coef * (Ey @ Oy + 0.5 * Ex @ Ox)
        return -buu, -buv, -bvu, -bvv

    vis_uu, vis_uv, vis_vu, vis_vv = strain_blocks(2.0 * nu)
    if alpha > 0.0:
        a1_uu, a1_uv, a1_vu, a1_vv = strain_blocks(1.0)

    uk = u_k.ravel()
    vk = v_k.ravel()
    rhs_u = rho * uk / h
    rhs_v = rho * vk / h
    if alpha > 0.0:
        rhs_u = rhs_u + (alpha / h) * (a1_uu @ uk + a1_uv @ vk)
        rhs_v = rhs_v + (alpha / h) * (a1_vu @ uk + a1_vv @ vk)

    def convection_matrix(qx, qy):
        # skew average of advective and divergence forms, as in the main path
        adv = sp.diags(qx) @ Ox + sp.diags(qy) @ Oy
        divf = Ex @ sp.diags(qx) + Ey @ sp.diags(qy)
        return 0.5 * (adv + divf)

    ones = np.ones(n_dof)
    zcol = sp.csr_matrix((n_dof, 1))
    u, v = uk.copy(), vk.copy()
    for _ in range(max(1, picard_sweeps)):
        conv = convection_matrix(rho * u, rho * v)
        luu = (rho / h) * eye + conv + vis_uu
        lvv = (rho / h) * eye + conv + vis_vv
        luv = vis_uv
        lvu = vis_vu
        if alpha > 0.0:
            luu = luu + (alpha / h) * a1_uu
            lvv = lvv + (alpha / h) * a1_vv
            luv = luv + (alpha / h) * a1_uv
            lvu = lvu + (alpha / h) * a1_vu

        system = sp.bmat(
            [
                [luu, luv, Ex, zcol],
                [lvu, lvv, Ey, zcol],
                [Ox, Oy, None, sp.csr_matrix(ones[:, None])],
                [zcol.T, zcol.T, sp.csr_matrix(ones[None, :]), None],
            ],
            format="csc",
        )
        rhs = np.concatenate([rhs_u, rhs_v, np.zeros(n_dof), [0.0]])
        sol = spsolve(system, rhs)
        u, v = sol[:n_dof], sol[n_dof : 2 * n_dof]
        p = sol[2 * n_dof : 3 * n_dof]

    p = p - np.mean(p)
    return (
        u.reshape(grid.nx, grid.ny),
        v.reshape(grid.nx, grid.ny),
        p.reshape(grid.nx, grid.ny),
    )
