"""Momentum step of the coupled flow and the full coupled step.

The implicit momentum equation advanced here is, for the new velocity v
(with v_k, phi_k, w, rho_k the previous state and the fresh potential):

    (rho v - rho_k v_k)/h + conv(q, v) + (alpha/h)(A1 v - A1 v_k)
        - div(2 nu(phi_k) D v) + grad p = (grad phi_k)^T w,

where q = rho_k v_picard + J_rho combines mass convection with the
diffusive mass flux and D is the symmetric velocity gradient.  Three
structural choices make the kinetic-energy ledger exact to solver
tolerance rather than to discretization order:

* convection is the skew average  1/2 (q . grad) v + 1/2 div(q x v)
  stabilized by -1/2 ((rho - rho_k)/h) v, so testing with v yields
  exactly the density-weighted kinetic telescoping;
* the viscous and alpha terms are applied as the discrete adjoint
  composition D^T (coef D v), so testing with v gives the dissipation
  quadratic form identically;
* the solve runs inside the discretely divergence-free subspace (Leray
  projection after every operator application), so the pressure never
  works against the velocity.

The nonlinearity is handled by a fixed small number of Picard sweeps on
the convecting field; because the skew form is energy-neutral for any
convecting field, unconverged sweeps never pollute the energy ledger.
"""

from dataclasses import dataclass

import numpy as np

from .ch_solver import ChStepConfig, ChStepResult, ch_flux, ch_step, mobility_dissipation
from .errors import DensityFloorViolation
from .grid import Grid
from .linsolve import solve_gmres
from .operators import (
    diff_x_even,
    diff_x_odd,
    diff_y_even,
    diff_y_odd,
    divergence,
    gradient,
    helmholtz_solve,
    leray_project,
    poisson_solve_neumann,
)
from .thermo import (
    ModelParams,
    ch_energy,
    gradient_energy,
    kinetic_energy,
    potential_energy,
    total_energy,
    viscosity,
)

__all__ = [
    "FlowState",
    "MomentumConfig",
    "MomentumStepResult",
    "StepEnergetics",
    "CoupledStepResult",
    "density_from_phase",
    "flux_jrho",
    "sym_grad",
    "sym_grad_force",
    "sym_grad_norm2",
    "convection_skew",
    "momentum_step",
    "coupled_step",
]


@dataclass
class FlowState:
    """Velocity components and pressure on the cell-centered grid."""

    u: np.ndarray
    v: np.ndarray
    p: np.ndarray


@dataclass
class MomentumConfig:
    picard_sweeps: int = 2
    krylov_rtol: float = 1e-10
    krylov_maxiter: int = 1500
    density_floor_factor: float = 0.5


@dataclass
class MomentumStepResult:
    u: np.ndarray
    v: np.ndarray
    p: np.ndarray
    residual: float


@dataclass
class StepEnergetics:
    """Every term of the one-step energy estimate, plus its slack.

    slack is the right-hand side minus the left-hand side of the step
    estimate; the step satisfies the discrete energy inequality when
    slack >= -tol.  kin_jump, grad_jump and the alpha terms are the
    nonnegative squared increments the estimate controls beyond the plain
    dissipation integrals.
    """

    e_kin: float
    e_grad: float
    e_pot: float
    e_tot: float
    diss_visc: float
    diss_ch: float
    kin_jump: float
    grad_jump: float
    alpha_half_dv2: float
    alpha_half_dv2_prev: float
    alpha_jump: float
    slack: float


@dataclass
class CoupledStepResult:
    ch: ChStepResult
    momentum: MomentumStepResult
    energy: StepEnergetics
    eqro_residual: float


# --- algebraic helpers ----------------------------------------------------


def density_from_phase(phi, params: ModelParams):
    """Mixture density rho = sum_i rho_tilde_i phi_i."""
    return np.einsum("i,i...->...", params.rho_tilde, phi)


def flux_jrho(grid: Grid, w, phi_k, params: ModelParams):
    """Diffusive mass flux J_rho = -(M(phi_k) grad w)^T rho_tilde.

    Contracts the same flux arrays the transport step divides, so the
    discrete mass balance (density equation) holds to the transport
    residual exactly.
    """
    fx, fy = ch_flux(grid, w, phi_k, params)
    jx = -np.einsum("i,i...->...", params.rho_tilde, fx)
    jy = -np.einsum("i,i...->...", params.rho_tilde, fy)
    return jx, jy


def sym_grad(grid: Grid, u, v):
    """Symmetric velocity gradient (Dxx, Dyy, Dxy) with no-slip ghosts."""
    dxx = diff_x_odd(u, grid.dx)
    dyy = diff_y_odd(v, grid.dy)
    dxy = 0.5 * (diff_y_odd(u, grid.dy) + diff_x_odd(v, grid.dx))
    return dxx, dyy, dxy

def sym_grad_force(grid: Grid, u, v, coef):
    """Adjoint composition D^T(coef * D v); coef is a field or scalar.

    Testing the result against any velocity field reproduces the bilinear
    form  integral coef D u : D psi  exactly, which is what the energy
    ledger needs from the viscous and alpha terms.
    """
    dxx, dyy, dxy = sym_grad(grid, u, v)
    sxx, syy, sxy = coef * dxx, coef * dyy, coef * dxy
    fu = -(diff_x_even(sxx, grid.dx) + diff_y_even(sxy, grid.dy))
    fv = -(diff_x_even(sxy, grid.dx) + diff_y_even(syy, grid.dy))
    return fu, fv


def sym_grad_norm2(grid: Grid, u, v) -> float:
    """integral |D v|^2 with the Frobenius weight on the off-diagonal."""
    dxx, dyy, dxy = sym_grad(grid, u, v)
    return grid.integrate(dxx * dxx + dyy * dyy + 2.0 * dxy * dxy)


def convection_skew(grid: Grid, qx, qy, u, v):
    """Skew-symmetric convection of (u, v) by the momentum field q.

    The average of advective and divergence forms; exactly energy-neutral
    against (u, v) for any q because the two halves are discrete negative
    adjoints of each other.
    """
    def comp(f):
        adv = qx * diff_x_odd(f, grid.dx) + qy * diff_y_odd(f, grid.dy)
        div = diff_x_even(qx * f, grid.dx) + diff_y_even(qy * f, grid.dy)
        return 0.5 * (adv + div)

    return comp(u), comp(v)


# --- momentum step --------------------------------------------------------


def momentum_step(
    grid: Grid,
    state_k: FlowState,
    rho_next,
    phi_k,
    w_next,
    params: ModelParams,
    h: float,
    cfg: MomentumConfig | None = None,
) -> MomentumStepResult:
    """One implicit momentum step with fresh potential and density.

    Returns the divergence-free new velocity, the zero-mean pressure
    recovered as the projection multiplier, and the relative residual of
    the unprojected momentum equation including that pressure gradient.
    """
    cfg = cfg or MomentumConfig()
    rho_k = density_from_phase(phi_k, params)
    floor = cfg.density_floor_factor * float(np.min(params.rho_tilde))
    if np.min(rho_next) < floor:
        raise DensityFloorViolation(
            f"density fell to {np.min(rho_next):.3e}, below the floor {floor:.3e}"
        )

    two_nu = 2.0 * viscosity(phi_k, params)
    jx, jy = flux_jrho(grid, w_next, phi_k, params)
    gxk, gyk = gradient(grid, phi_k)
    cap_u = np.einsum("i...,i...->...", gxk, w_next)
    cap_v = np.einsum("i...,i...->...", gyk, w_next)

    mass = 0.5 * (rho_next + rho_k) / h
    alpha_h = params.alpha / h

    rhs_u = rho_k * state_k.u / h + cap_u
    rhs_v = rho_k * state_k.v / h + cap_v
    if params.alpha > 0.0:
        a1u, a1v = sym_grad_force(grid, state_k.u, state_k.v, 1.0)
        rhs_u = rhs_u + alpha_h * a1u
        rhs_v = rhs_v + alpha_h * a1v

    def full_operator(qx, qy):
        def apply(x):
            xu, xv = x[0], x[1]
            cu, cv = convection_skew(grid, qx, qy, xu, xv)
            vu, vv = sym_grad_force(grid, xu, xv, two_nu)
            ou = mass * xu + cu + vu
            ov = mass * xv + cv + vv
            if params.alpha > 0.0:
                au, av = sym_grad_force(grid, xu, xv, 1.0)
                ou = ou + alpha_h * au
                ov = ov + alpha_h * av
            return ou, ov

        return apply

    def project(x):
        pu, pv = leray_project(grid, x[0], x[1])
        return np.stack([pu, pv])

    b = project(np.stack([rhs_u, rhs_v]))

    # Constant-coefficient Helmholtz proxy of mass + viscous + alpha terms.
    a_prec = float(np.mean(mass))
    b_prec = float(np.mean(two_nu)) / 2.0 + 0.5 * alpha_h

    def prec(r):
        hu = helmholtz_solve(grid, a_prec, b_prec, r[0])
        hv = helmholtz_solve(grid, a_prec, b_prec, r[1])
        return project(np.stack([hu, hv]))

    u_pic, v_pic = state_k.u, state_k.v
    x = np.stack([state_k.u, state_k.v])
    for _ in range(max(1, cfg.picard_sweeps)):
        qx = rho_k * u_pic + jx
        qy = rho_k * v_pic + jy
        apply_full = full_operator(qx, qy)

        def apply_projected(y):
            return project(np.stack(apply_full(y)))

        x = solve_gmres(
            apply_projected,
            b,
            apply_prec=prec,
            x0=x,
            rtol=cfg.krylov_rtol,
            maxiter=cfg.krylov_maxiter,
        )
        u_pic, v_pic = x[0], x[1]

    u_new, v_new = leray_project(grid, x[0], x[1])

    # Pressure is the multiplier of the divergence constraint: the defect
    # of the unprojected equation is a discrete gradient up to the Krylov
    # tolerance, and its potential is the (zero-mean) pressure.
    ou, ov = full_operator(rho_k * u_pic + jx, rho_k * v_pic + jy)(np.stack([u_new, v_new]))
    ru = rhs_u - ou
    rv = rhs_v - ov
    p = poisson_solve_neumann(grid, divergence(grid, ru, rv))
    gpu, gpv = gradient(grid, p)
    scale = max(grid.norm_l2(np.stack([rhs_u, rhs_v])), 1e-300)
    residual = grid.norm_l2(np.stack([ru - gpu, rv - gpv])) / scale

    return MomentumStepResult(u_new, v_new, p, residual)


# --- coupled step ---------------------------------------------------------


def coupled_step(
    grid: Grid,
    phi_k,
    state_k: FlowState,
    params: ModelParams,
    ch_cfg: ChStepConfig,
    mom_cfg: MomentumConfig | None = None,
) -> CoupledStepResult:
    """Advance composition then momentum by one step of size ch_cfg.h.

    The transport solve uses the lagged velocity; the momentum solve uses
    the fresh potential, composition gradient force and density.  All
    terms of the discrete energy estimate are evaluated and returned so
    the caller can accept or reject the step against its tolerance.
    """
    h = ch_cfg.h
    rho_k = density_from_phase(phi_k, params)
    ch = ch_step(grid, phi_k, (state_k.u, state_k.v), params, ch_cfg)
    rho_next = density_from_phase(ch.phi_next, params)
    mom = momentum_step(grid, state_k, rho_next, phi_k, ch.w_next, params, h, mom_cfg)

    # Residual of the discrete density balance, a contraction of the
    # transport residual with the bulk densities.
    jx, jy = flux_jrho(grid, ch.w_next, phi_k, params)
    grx, gry = gradient(grid, rho_k)
    eqro = (
        (rho_next - rho_k) / h
        + grx * state_k.u
        + gry * state_k.v
        + divergence(grid, jx, jy)
    )

    e_kin_old = kinetic_energy(grid, rho_k, state_k.u, state_k.v)
    e_ch_old = ch_energy(grid, phi_k, params)
    e_kin = kinetic_energy(grid, rho_next, mom.u, mom.v)
    e_grad = gradient_energy(grid, ch.phi_next, params)
    e_pot = potential_energy(grid, ch.phi_next, params)
    e_tot = e_kin + e_grad + e_pot

    diss_visc = 2.0 * h * grid.integrate(
        viscosity(phi_k, params) * _sym_grad_density(grid, mom.u, mom.v)
    )
    diss_ch = h * mobility_dissipation(grid, ch.w_next, phi_k, params)
    kin_jump = 0.5 * grid.integrate(
        rho_k * ((mom.u - state_k.u) ** 2 + (mom.v - state_k.v) ** 2)
    )
    dgx, dgy = gradient(grid, ch.phi_next - phi_k)
    grad_jump = 0.5 * params.gamma_scale * grid.integrate(np.sum(dgx**2 + dgy**2, axis=0))

    if params.alpha > 0.0:
        alpha_new = 0.5 * params.alpha * sym_grad_norm2(grid, mom.u, mom.v)
        alpha_old = 0.5 * params.alpha * sym_grad_norm2(grid, state_k.u, state_k.v)
        alpha_jump = 0.5 * params.alpha * sym_grad_norm2(
            grid, mom.u - state_k.u, mom.v - state_k.v
        )
    else:
        alpha_new = alpha_old = alpha_jump = 0.0

    slack = (e_kin_old + e_ch_old + alpha_old) - (
        e_tot + alpha_new + diss_visc + diss_ch + kin_jump + grad_jump + alpha_jump
    )

    energy = StepEnergetics(
        e_kin=e_kin,
        e_grad=e_grad,
        e_pot=e_pot,
        e_tot=e_tot,
        diss_visc=diss_visc,
        diss_ch=diss_ch,
        kin_jump=kin_jump,
        grad_jump=grad_jump,
        alpha_half_dv2=alpha_new,
        alpha_half_dv2_prev=alpha_old,
        alpha_jump=alpha_jump,
        slack=slack,
    )
    return CoupledStepResult(ch, mom, energy, grid.norm_rms(eqro))


def _sym_grad_density(grid: Grid, u, v):
    dxx, dyy, dxy = sym_grad(grid, u, v)
    return dxx * dxx + dyy * dyy + 2.0 * dxy * dxy
