"""Free energy, simplex algebra and model parameters.

The mixture state at a point is a composition vector on the Gibbs simplex
(nonnegative entries summing to one).  Chemical potentials and all solver
updates live in the tangent space of sum-zero vectors; `project_tangent`
is the orthogonal projector onto it.

The homogeneous free energy splits into a convex entropic part
``psi(s) = theta * s * log s`` applied per component and a concave
quadratic interaction ``-1/2 phi . A phi``.  Above s = 1 the entropic part
continues as its second-order Taylor polynomial so that the function stays
C^2 on all of (0, inf); below ``s_floor`` evaluation raises DomainError
because a solver iterate that far outside the simplex is a bug, not a
state.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import null_space

from .errors import ConfigError, DomainError
from .grid import Grid
from .operators import gradient

__all__ = [
    "S_FLOOR",
    "project_tangent",
    "tangent_projector",
    "psi",
    "psi_prime",
    "psi_double_prime",
    "grand_potential",
    "potential_gradient",
    "ModelParams",
    "viscosity",
    "mobility_modulation",
    "kinetic_energy",
    "gradient_energy",
    "potential_energy",
    "ch_energy",
    "total_energy",
]

S_FLOOR = 1e-13


# --- simplex algebra ------------------------------------------------------


def project_tangent(x):
    """Orthogonal projection onto sum-zero vectors, applied along axis 0.

    Idempotent and symmetric; accepts a composition vector of shape (N,)
    or a stacked field of shape (N, nx, ny).
    """
    x = np.asarray(x)
    return x - np.mean(x, axis=0, keepdims=True)


def tangent_projector(n: int):
    """The projector of :func:`project_tangent` as an explicit matrix."""
    return np.eye(n) - np.full((n, n), 1.0 / n)


# --- entropic potential ---------------------------------------------------


def _check_domain(s, s_floor):
    smin = np.min(s)
    if not smin > s_floor:
        raise DomainError(
            f"entropic potential evaluated at {smin:.3e} <= floor {s_floor:.3e}"
        )


def psi(s, theta: float, s_floor: float = S_FLOOR):
    """Entropic free energy density theta * s * log(s).

    For s > 1 the quadratic Taylor continuation at 1 is used, which keeps
    psi C^2 while agreeing with value, slope and curvature at s = 1.  The
    limit value psi(0) = 0 exists but arguments at or below ``s_floor``
    raise DomainError.
    """
    s = np.asarray(s, dtype=float)
    _check_domain(s, s_floor)
    t = s - 1.0
    return np.where(s <= 1.0, theta * s * np.log(s), theta * (t + 0.5 * t * t))


def psi_prime(s, theta: float, s_floor: float = S_FLOOR):
    """First derivative of :func:`psi`: theta (log s + 1), then theta * s."""
    s = np.asarray(s, dtype=float)
    _check_domain(s, s_floor)
    return np.where(s <= 1.0, theta * (np.log(s) + 1.0), theta * s)


def psi_double_prime(s, theta: float, s_floor: float = S_FLOOR):
    """Second derivative of :func:`psi`: theta / s capped at theta above 1."""
    s = np.asarray(s, dtype=float)
    _check_domain(s, s_floor)
    return np.where(s <= 1.0, theta / s, theta)


def grand_potential(phi, params):
    """Pointwise free energy density Psi(phi) = sum_i psi(phi_i) - 1/2 phi.A phi.

    phi has the component axis first; the result drops that axis.
    """
    p = psi(phi, params.theta, params.s_floor)
    quad = 0.5 * np.einsum("i...,ij,j...->...", phi, params.a_matrix, phi)
    return np.sum(p, axis=0) - quad


def potential_gradient(phi, params):
    """Projected derivative of the free energy, P(psi'(phi_i) - A phi).

    Works on a single composition vector or a stacked field; the result is
    pointwise sum-free.
    """
    dpsi = psi_prime(phi, params.theta, params.s_floor)
    a_phi = np.einsum("ij,j...->i...", params.a_matrix, phi)
    return project_tangent(dpsi - a_phi)


# --- model parameters -----------------------------------------------------


def _default_interaction(n: int, theta_c: float):
    a = np.full((n, n), theta_c)
    np.fill_diagonal(a, 0.0)
    return a


def _default_mobility(n: int, scale: float):
    return scale * tangent_projector(n)


@dataclass
class ModelParams:
    """Physical parameters of the N-phase model, validated on construction.

    The mobility matrix must be symmetric positive semidefinite with zero
    row sums; its smallest eigenvalue on the tangent space, ``c0``, is
    computed here and the configuration is rejected if it is not positive,
    since the transport problem degenerates otherwise.
    """

    n: int
    theta: float = 1.0
    theta_c: float = 2.0
    a_matrix: np.ndarray | None = None
    gamma_scale: float = 1.0
    mobility: np.ndarray | None = None
    mobility_scale: float = 1.0
    mobility_model: str = "constant"
    mobility_floor: float = 0.1
    rho_tilde: np.ndarray | None = None
    nu_values: np.ndarray | None = None
    nu_min: float | None = None
    nu_max: float | None = None
    alpha: float = 0.0
    s_floor: float = S_FLOOR
    c0: float = field(init=False, default=0.0)

    def __post_init__(self):
        n = self.n
        if n < 2:
            raise ConfigError(f"need at least two components, got n={n}")
        if not self.theta > 0.0:
            raise ConfigError("theta must be positive")
        if not self.gamma_scale > 0.0:
            raise ConfigError("gamma_scale must be positive")
        if self.alpha < 0.0:
            raise ConfigError("alpha must be nonnegative")

        if self.a_matrix is None:
            self.a_matrix = _default_interaction(n, self.theta_c)
        self.a_matrix = np.asarray(self.a_matrix, dtype=float)
        if self.a_matrix.shape != (n, n):
            raise ConfigError(f"interaction matrix must be {n}x{n}")
        if not np.allclose(self.a_matrix, self.a_matrix.T, atol=1e-12):
            raise ConfigError("interaction matrix must be symmetric")
        self.a_matrix = 0.5 * (self.a_matrix + self.a_matrix.T)

        if self.mobility is None:
            self.mobility = _default_mobility(n, self.mobility_scale)
        self.mobility = np.asarray(self.mobility, dtype=float)
        if self.mobility.shape != (n, n):
            raise ConfigError(f"mobility matrix must be {n}x{n}")
        if not np.allclose(self.mobility, self.mobility.T, atol=1e-12):
            raise ConfigError("mobility matrix must be symmetric")
        self.mobility = 0.5 * (self.mobility + self.mobility.T)
        row_sums = np.abs(self.mobility.sum(axis=1))
        scale = max(np.max(np.abs(self.mobility)), 1.0)
        if np.any(row_sums > 1e-12 * scale):
            raise ConfigError("mobility matrix must have zero row sums")
        if np.min(np.linalg.eigvalsh(self.mobility)) < -1e-12 * scale:
            raise ConfigError("mobility matrix must be positive semidefinite")
        if self.mobility_model not in ("constant", "product"):
            raise ConfigError(f"unknown mobility model {self.mobility_model!r}")
        if not 0.0 < self.mobility_floor <= 1.0:
            raise ConfigError("mobility_floor must lie in (0, 1]")

        # Smallest mobility eigenvalue restricted to sum-zero vectors.
        basis = null_space(np.ones((1, n)))
        self.c0 = float(np.min(np.linalg.eigvalsh(basis.T @ self.mobility @ basis)))
        if not self.c0 > 0.0:
            raise ConfigError(
                f"mobility is degenerate on the tangent space (c0={self.c0:.3e})"
            )

        if self.rho_tilde is None:
            self.rho_tilde = np.ones(n)
        self.rho_tilde = np.asarray(self.rho_tilde, dtype=float)
        if self.rho_tilde.shape != (n,) or not np.all(self.rho_tilde > 0.0):
            raise ConfigError("rho_tilde must be n positive bulk densities")

        if self.nu_values is None:
            self.nu_values = np.ones(n)
        self.nu_values = np.asarray(self.nu_values, dtype=float)
        if self.nu_values.shape != (n,) or not np.all(self.nu_values > 0.0):
            raise ConfigError("nu_values must be n positive viscosities")
        if self.nu_min is None:
            self.nu_min = float(np.min(self.nu_values))
        if self.nu_max is None:
            self.nu_max = float(np.max(self.nu_values))
        if not 0.0 < self.nu_min <= self.nu_max:
            raise ConfigError("viscosity bounds must satisfy 0 < nu_min <= nu_max")
        if not self.s_floor > 0.0:
            raise ConfigError("s_floor must be positive")


def viscosity(phi, params: ModelParams):
    """Affine viscosity blend sum_i phi_i nu_i, clamped to [nu_min, nu_max].

    The clamp keeps nu well defined and Lipschitz even for compositions
    slightly outside the simplex during iterations.
    """
    nu = np.einsum("i,i...->...", params.nu_values, phi)
    return np.clip(nu, params.nu_min, params.nu_max)


def mobility_modulation(phi, params: ModelParams):
    """Scalar factor g(phi) multiplying the constant mobility matrix.

    Returns None on the constant fast path.  The "product" model scales by
    the normalized product of the fractions, floored away from zero so the
    nondegeneracy constant only shrinks by a known factor.
    """
    if params.mobility_model == "constant":
        return None
    n = params.n
    g = float(n) ** n * np.prod(phi, axis=0)
    return np.clip(g, params.mobility_floor, 1.0)


# --- energies -------------------------------------------------------------


def kinetic_energy(grid: Grid, rho, u, v) -> float:
    """(1/2) integral of rho |v|^2 by the midpoint rule."""
    return 0.5 * grid.integrate(rho * (u * u + v * v))


def gradient_energy(grid: Grid, phi, params: ModelParams) -> float:
    """(gamma_scale/2) integral of |grad phi|^2 summed over components."""
    gx, gy = gradient(grid, phi)
    return 0.5 * params.gamma_scale * grid.integrate(np.sum(gx * gx + gy * gy, axis=0))


def potential_energy(grid: Grid, phi, params: ModelParams) -> float:
    """Integral of the homogeneous free energy density Psi(phi)."""
    return grid.integrate(grand_potential(phi, params))


def ch_energy(grid: Grid, phi, params: ModelParams) -> float:
    """Interfacial energy: potential plus gradient part."""
    return potential_energy(grid, phi, params) + gradient_energy(grid, phi, params)


def total_energy(grid: Grid, rho, u, v, phi, params: ModelParams) -> float:
    """Kinetic plus interfacial energy of a flow state."""
    return kinetic_energy(grid, rho, u, v) + ch_energy(grid, phi, params)
