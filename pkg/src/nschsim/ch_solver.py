"""Implicit solvers for the multicomponent Cahn-Hilliard subsystem.

One transport step solves, for the new composition phi and potential w,

    (phi - phi_k)/h + (grad phi_k) v = div( M(phi_k) grad w ),
    w = P[ -zeta lap phi + psi'(phi) - A (phi + phi_k)/2 ],

with the convecting velocity and the mobility frozen at the old state.
The potential row is eliminated: w is treated as a function of phi and
Newton's method runs on the N transport residuals alone, with updates
confined to pointwise sum-zero fields so the simplex constraint is
inherited from the previous state rather than re-imposed.  The implicit
convex entropic term and explicit-in-the-mean concave term make the step
unconditionally energy stable in the decoupled (prescribed velocity)
setting, which the run loops verify rather than assume.

A backtracking line search halves the Newton step until every fraction
stays above ``s_guard``; failure to do so raises InteriorViolation so the
caller can reduce the time step.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InteriorViolation, NewtonDivergence
from .grid import Grid
from .linsolve import solve_gmres
from .operators import (
    divergence,
    gradient,
    laplacian_eigenvalues,
    laplacian_neumann,
    leray_project,
    _dct2,
    _idct2,
)
from .thermo import (
    ModelParams,
    mobility_modulation,
    ch_energy,
    project_tangent,
    psi_double_prime,
    psi_prime,
    tangent_projector,
)

log = logging.getLogger(__name__)

__all__ = [
    "ChStepConfig",
    "ChStepResult",
    "chemical_potential",
    "ch_flux",
    "mobility_dissipation",
    "ch_step",
    "newton_system",
    "stationary_solve",
    "separation_margin",
    "convective_ch_run",
    "ConvectiveChResult",
]


@dataclass
class ChStepConfig:
    """Numerical knobs of one implicit transport step."""

    h: float
    newton_tol: float = 1e-9
    max_newton: int = 40
    krylov_rtol: float = 1e-6
    krylov_maxiter: int = 600
    s_guard: float = 1e-9
    line_search_shrink: float = 0.5
    max_backtracks: int = 60


@dataclass
class ChStepResult:
    phi_next: np.ndarray
    w_next: np.ndarray
    newton_iters: int
    residual: float


# --- pieces of the residual ----------------------------------------------


def chemical_potential(grid: Grid, phi, phi_k, params: ModelParams):
    """Potential row solved for w; pointwise sum-free by construction.

    The interaction term is averaged between old and new state (convex
    part implicit, concave part in the midpoint), which is what makes the
    interaction energy telescope in the step estimate.
    """
    lap = laplacian_neumann(grid, phi)
    a_mid = np.einsum("ij,j...->i...", params.a_matrix, 0.5 * (phi + phi_k))
    dpsi = psi_prime(phi, params.theta, params.s_floor)
    return project_tangent(-params.gamma_scale * lap + dpsi - a_mid)


def ch_flux(grid: Grid, w, phi_k, params: ModelParams):
    """Componentwise diffusive flux (Fx, Fy) = M(phi_k) grad w.

    The momentum module contracts the very same arrays with the bulk
    densities to form the diffusive mass flux, so the two stay consistent
    to round-off.
    """
    gx, gy = gradient(grid, w)
    fx = np.einsum("ij,j...->i...", params.mobility, gx)
    fy = np.einsum("ij,j...->i...", params.mobility, gy)
    g = mobility_modulation(phi_k, params)
    if g is not None:
        fx = g * fx
        fy = g * fy
    return fx, fy


def mobility_dissipation(grid: Grid, w, phi_k, params: ModelParams) -> float:
    """integral of M(phi_k) grad w : grad w  (nonnegative since M is psd)."""
    gx, gy = gradient(grid, w)
    fx, fy = ch_flux(grid, w, phi_k, params)
    return grid.integrate(np.sum(fx * gx + fy * gy, axis=0))


def _convection(grid: Grid, phi_k, v):
    """(grad phi_k) v with the old composition; zero when no velocity."""
    if v is None:
        return 0.0
    u, w = v
    gx, gy = gradient(grid, phi_k)
    return gx * u + gy * w


# --- Newton system --------------------------------------------------------


def newton_system(grid: Grid, phi_iter, phi_k, v, params: ModelParams, cfg: ChStepConfig):
    """Residual and Jacobian action of the implicit transport step.

    Returns ``(residual, apply_jac)`` where residual is the N-field
    transport defect at phi_iter and apply_jac maps a sum-zero direction
    d_phi to J d_phi.  The Jacobian is exactly the derivative of the
    residual (entropic curvature at the current iterate), restricted to
    the tangent space.
    """
    h = cfg.h
    conv = _convection(grid, phi_k, v)
    w = chemical_potential(grid, phi_iter, phi_k, params)
    fx, fy = ch_flux(grid, w, phi_k, params)
    residual = (phi_iter - phi_k) / h + conv - divergence(grid, fx, fy)

    curv = psi_double_prime(phi_iter, params.theta, params.s_floor)
    zeta = params.gamma_scale
    a_half = 0.5 * params.a_matrix
    g = mobility_modulation(phi_k, params)

    def apply_jac(d_phi):
        d_phi = project_tangent(d_phi)
        dw = project_tangent(
            -zeta * laplacian_neumann(grid, d_phi)
            + curv * d_phi
            - np.einsum("ij,j...->i...", a_half, d_phi)
        )
        gx, gy = gradient(grid, dw)
        jfx = np.einsum("ij,j...->i...", params.mobility, gx)
        jfy = np.einsum("ij,j...->i...", params.mobility, gy)
        if g is not None:
            jfx = g * jfx
            jfy = g * jfy
        return project_tangent(d_phi / h - divergence(grid, jfx, jfy))

    return residual, apply_jac


def _step_preconditioner(grid: Grid, params: ModelParams, cfg: ChStepConfig, phi_iter, phi_k):
    """Mode-space inverse of a constant-coefficient proxy of the Jacobian.

    Freezes the entropic curvature at its componentwise spatial mean and
    the mobility modulation at its mean, then inverts the resulting N x N
    block exactly for every cosine mode.  Exact for uniform states, and a
    strong preconditioner near them.
    """
    n = params.n
    lam = laplacian_eigenvalues(grid).ravel()
    proj = tangent_projector(n)
    curv = psi_double_prime(phi_iter, params.theta, params.s_floor)
    c_mean = np.mean(curv, axis=(1, 2))
    b_mat = proj @ (np.diag(c_mean) - 0.5 * params.a_matrix) @ proj
    mob = params.mobility
    g = mobility_modulation(phi_k, params)
    if g is not None:
        mob = float(np.mean(g)) * mob

    eye = np.eye(n)
    inner = -params.gamma_scale * lam[:, None, None] * eye + b_mat
    blocks = eye / cfg.h - lam[:, None, None] * np.einsum("ij,kjl->kil", mob, inner)
    blocks = (
        np.einsum("ij,kjl,lm->kim", proj, blocks, proj)
        + (eye - proj)
    )
    inv = np.linalg.inv(blocks)

    nx, ny = grid.nx, grid.ny

    def apply(r):
        rh = _dct2(r).reshape(n, nx * ny)
        xh = np.einsum("kij,jk->ik", inv, rh)
        return _idct2(xh.reshape(n, nx, ny))

    return apply


# --- the implicit step ----------------------------------------------------


def _restore_means(phi, phi_k):
    """Shift each component by a constant so its spatial mean matches phi_k.

    The transport step conserves the means up to solver tolerance only;
    this removes the leftover exactly.  The shift is of the order of the
    Newton residual and is absorbed by the reported defect.
    """
    shift = np.mean(phi_k, axis=(1, 2)) - np.mean(phi, axis=(1, 2))
    return phi + shift[:, None, None]


def ch_step(grid: Grid, phi_k, v, params: ModelParams, cfg: ChStepConfig) -> ChStepResult:
    """Advance the composition one implicit step with prescribed velocity.

    v is a pair (u, v) of cell velocity components (discretely divergence
    free), or None for pure diffusion.  Raises NewtonDivergence or
    InteriorViolation when the iteration fails; callers treat either as a
    rejected step.
    """
    if np.min(phi_k) <= cfg.s_guard:
        raise DomainError("previous composition is not interior enough to step from")

    phi = phi_k.copy()
    residual, apply_jac = newton_system(grid, phi, phi_k, v, params, cfg)
    rms = grid.norm_rms(residual)
    target = 0.25 * cfg.newton_tol
    history = [rms]

    iters = 0
    while rms > target:
        if iters >= cfg.max_newton:
            raise NewtonDivergence(
                f"transport Newton not converged after {iters} iterations (rms={rms:.3e})"
            )
        prec = _step_preconditioner(grid, params, cfg, phi, phi_k)
        # The Jacobian is restricted to the sum-zero tangent space, so the
        # right-hand side must be projected as well: the raw residual picks
        # up round-off along the constant direction (the 1/h term divides
        # simplex noise by h) that the Krylov iteration can never remove.
        delta = solve_gmres(
            apply_jac,
            project_tangent(-residual),
            apply_prec=prec,
            rtol=cfg.krylov_rtol,
            maxiter=cfg.krylov_maxiter,
        )
        delta = project_tangent(delta)

        # Backtrack first for interiority, then for residual decrease.
        s = 1.0
        accepted = False
        for _ in range(cfg.max_backtracks):
            trial = phi + s * delta
            if np.min(trial) > cfg.s_guard:
                trial_res, trial_jac = newton_system(grid, trial, phi_k, v, params, cfg)
                trial_rms = grid.norm_rms(trial_res)
                if trial_rms <= rms or trial_rms <= target:
                    phi, residual, apply_jac, rms = trial, trial_res, trial_jac, trial_rms
                    accepted = True
                    break
            s *= cfg.line_search_shrink
        if not accepted:
            if np.min(phi + s * delta) <= cfg.s_guard:
                raise InteriorViolation(
                    "line search could not keep the composition interior"
                )
            raise NewtonDivergence(
                f"line search found no residual decrease (rms={rms:.3e})"
            )
        iters += 1
        history.append(rms)

    if len(history) >= 3:
        log.debug(
            "transport Newton: %d iterations, last contraction %.2e",
            iters,
            history[-1] / history[-2] if history[-2] > 0 else 0.0,
        )

    phi = _restore_means(phi, phi_k)
    w = chemical_potential(grid, phi, phi_k, params)
    fx, fy = ch_flux(grid, w, phi_k, params)
    final = (phi - phi_k) / cfg.h + _convection(grid, phi_k, v) - divergence(grid, fx, fy)
    return ChStepResult(phi, w, iters, grid.norm_rms(final))


# --- stationary states ----------------------------------------------------


def stationary_solve(grid: Grid, f, m, params: ModelParams, cfg: ChStepConfig):
    """Solve the stationary profile equation  -zeta lap phi + P psi'(phi) = f.

    f is a pointwise sum-free forcing, constant vector or full field; m is
    an interior composition used as the Newton starting point.  Updates
    stay pointwise sum-free, so the solution keeps sum 1; its mean is not
    pinned but determined by the mean part of f, matching the elliptic
    problem's own solvability structure.  The returned field is strictly
    interior.
    """
    m = np.asarray(m, dtype=float)
    if m.shape != (params.n,) or np.min(m) <= 0.0 or np.max(m) >= 1.0:
        raise DomainError("starting mean must lie in the open simplex")
    if abs(np.sum(m) - 1.0) > 1e-10:
        raise DomainError("starting mean must sum to one")
    f = np.broadcast_to(
        np.asarray(f, dtype=float).reshape(params.n, *([1] * 2))
        if np.asarray(f).ndim == 1
        else np.asarray(f, dtype=float),
        (params.n, grid.nx, grid.ny),
    ).copy()
    sums = np.max(np.abs(np.sum(f, axis=0)))
    if sums > 1e-8 * max(1.0, np.max(np.abs(f))):
        raise DomainError("stationary forcing must be pointwise sum-free")
    f = project_tangent(f)

    zeta = params.gamma_scale
    phi = np.broadcast_to(m[:, None, None], (params.n, grid.nx, grid.ny)).copy()

    def residual_at(p):
        return (
            -zeta * laplacian_neumann(grid, p)
            + project_tangent(psi_prime(p, params.theta, params.s_floor))
            - f
        )

    residual = residual_at(phi)
    rms = grid.norm_rms(residual)
    proj = tangent_projector(params.n)
    lam = laplacian_eigenvalues(grid).ravel()
    eye = np.eye(params.n)

    iters = 0
    while rms > cfg.newton_tol * 0.25:
        if iters >= cfg.max_newton:
            raise NewtonDivergence(
                f"stationary Newton not converged after {iters} iterations (rms={rms:.3e})"
            )
        curv = psi_double_prime(phi, params.theta, params.s_floor)

        def apply_jac(d):
            d = project_tangent(d)
            return project_tangent(-zeta * laplacian_neumann(grid, d) + curv * d)

        c_mean = np.mean(curv, axis=(1, 2))
        blocks = -zeta * lam[:, None, None] * eye + np.diag(c_mean)
        blocks = np.einsum("ij,kjl,lm->kim", proj, blocks, proj) + (eye - proj)
        inv = np.linalg.inv(blocks)

        def prec(r):
            rh = _dct2(r).reshape(params.n, grid.nx * grid.ny)
            xh = np.einsum("kij,jk->ik", inv, rh)
            return _idct2(xh.reshape(params.n, grid.nx, grid.ny))

        delta = project_tangent(
            solve_gmres(apply_jac, project_tangent(-residual), apply_prec=prec,
                        rtol=cfg.krylov_rtol, maxiter=cfg.krylov_maxiter)
        )
        s = 1.0
        accepted = False
        for _ in range(cfg.max_backtracks):
            trial = phi + s * delta
            if np.min(trial) > cfg.s_guard:
                trial_res = residual_at(trial)
                trial_rms = grid.norm_rms(trial_res)
                if trial_rms <= rms or trial_rms <= cfg.newton_tol * 0.25:
                    phi, residual, rms = trial, trial_res, trial_rms
                    accepted = True
                    break
            s *= cfg.line_search_shrink
        if not accepted:
            raise (
                InteriorViolation("stationary line search left the simplex")
                if np.min(phi + s * delta) <= cfg.s_guard
                else NewtonDivergence(f"stationary line search stalled (rms={rms:.3e})")
            )
        iters += 1

    return phi


def separation_margin(phi) -> float:
    """Distance of a composition field from the simplex boundary.

    min over cells and components of min(phi_i, (1 - phi_i)/(N - 1));
    positive exactly when the field is uniformly strictly interior.
    """
    phi = np.asarray(phi)
    n = phi.shape[0]
    lower = np.min(phi)
    upper = np.min((1.0 - phi) / max(n - 1, 1))
    return float(min(lower, upper))


# --- transport-only evolution --------------------------------------------


@dataclass
class ConvectiveChResult:
    phi: np.ndarray
    w: np.ndarray
    times: np.ndarray
    energy: np.ndarray
    dissipation: np.ndarray
    grad_w_norm: np.ndarray
    slack: np.ndarray


def convective_ch_run(
    grid: Grid,
    phi_0,
    velocity,
    params: ModelParams,
    cfg: ChStepConfig,
    t_end: float,
) -> ConvectiveChResult:
    """Evolve the composition under a prescribed solenoidal velocity.

    velocity may be None (pure diffusion), a constant pair (u, v), or a
    callable t -> (u, v) evaluated at the start of each step.  Incoming
    fields are Leray-projected once so the discrete transport conserves
    componentwise means to round-off.  Per step the routine records the
    interfacial energy, the mobility dissipation h * int M grad w : grad w,
    the potential gradient norm, and the slack of the transport energy
    estimate (nonnegative up to solver tolerance).
    """

    def prepared(vel):
        if vel is None:
            return None
        u, w = leray_project(grid, *vel)
        return u, w

    const_v = None if callable(velocity) else prepared(velocity)

    nsteps = max(1, int(round(t_end / cfg.h)))
    phi = np.array(phi_0, dtype=float, copy=True)
    w = chemical_potential(grid, phi, phi, params)

    times = np.empty(nsteps + 1)
    energy = np.empty(nsteps + 1)
    dissipation = np.zeros(nsteps + 1)
    grad_w = np.empty(nsteps + 1)
    slack = np.zeros(nsteps + 1)

    times[0] = 0.0
    energy[0] = ch_energy(grid, phi, params)
    grad_w[0] = grid.norm_l2(np.stack(gradient(grid, w)))

    t = 0.0
    for k in range(nsteps):
        v = prepared(velocity(t)) if callable(velocity) else const_v
        res = ch_step(grid, phi, v, params, cfg)
        e_new = ch_energy(grid, res.phi_next, params)
        diss = cfg.h * mobility_dissipation(grid, res.w_next, phi, params)
        dgx, dgy = gradient(grid, res.phi_next - phi)
        grad_incr = 0.5 * params.gamma_scale * grid.integrate(np.sum(dgx**2 + dgy**2, axis=0))
        conv_work = (
            cfg.h * grid.inner(_convection(grid, phi, v), res.w_next) if v is not None else 0.0
        )
        t += cfg.h
        phi, w = res.phi_next, res.w_next
        times[k + 1] = t
        energy[k + 1] = e_new
        dissipation[k + 1] = diss
        grad_w[k + 1] = grid.norm_l2(np.stack(gradient(grid, w)))
        slack[k + 1] = energy[k] - e_new - diss - grad_incr - conv_work

    return ConvectiveChResult(phi, w, times, energy, dissipation, grad_w, slack)
