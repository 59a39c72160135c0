"""Finite-difference operators on the cell-centered grid.

All derivatives are centered two-point differences.  Boundary conditions
enter through the ghost value a stencil assumes one cell outside the wall:

* even reflection (ghost = first interior value) encodes a homogeneous
  Neumann condition and is used for scalars such as phase fractions,
  chemical potentials, pressure and density;
* odd reflection (ghost = minus the first interior value) places a zero
  at the wall itself and is used for the wall-normal component of fluxes
  and for every velocity component (no slip).

With this pairing the centered gradient and the centered divergence are
exact negative adjoints of each other in the discrete L2 inner product,
``<grad f, g> = -<f, div g>``, and the Neumann Laplacian defined as their
composition satisfies summation by parts ``<lap f, g> = -<grad f, grad g>``
to round-off.  Every energy identity checked by the step ledger rests on
these two facts, so the Laplacian here really is ``divergence(gradient(.))``
and not an independently chosen compact stencil.

The composed Laplacian is diagonalized by the type-II discrete cosine
transform; on the mode ``cos(k pi x / lx)`` sampled at cell centers its
eigenvalue is ``-(sin(k pi / nx) / dx)**2`` per direction.  The Poisson and
Helmholtz solvers below invert it through that diagonalization, which makes
the Leray projection built on them idempotent and orthogonal to round-off.

Derivative routines act on the trailing two axes, so stacked component
fields of shape (N, nx, ny) pass through unchanged.
"""

import numpy as np
from scipy.fft import dctn, idctn

from .errors import IncompatibleRhs
from .grid import Grid

__all__ = [
    "diff_x_even",
    "diff_x_odd",
    "diff_y_even",
    "diff_y_odd",
    "gradient",
    "divergence",
    "laplacian_neumann",
    "laplacian_eigenvalues",
    "poisson_solve_neumann",
    "helmholtz_solve",
    "leray_project",
]


# --- stencil primitives -------------------------------------------------


def diff_x_even(f, dx):
    """d/dx with even (Neumann) reflection at the x walls."""
    out = np.empty_like(f)
    out[..., 1:-1, :] = (f[..., 2:, :] - f[..., :-2, :]) / (2.0 * dx)
    out[..., 0, :] = (f[..., 1, :] - f[..., 0, :]) / (2.0 * dx)
    out[..., -1, :] = (f[..., -1, :] - f[..., -2, :]) / (2.0 * dx)
    return out


def diff_x_odd(f, dx):
    """d/dx with odd reflection (zero wall value) at the x walls."""
    out = np.empty_like(f)
    out[..., 1:-1, :] = (f[..., 2:, :] - f[..., :-2, :]) / (2.0 * dx)
    out[..., 0, :] = (f[..., 1, :] + f[..., 0, :]) / (2.0 * dx)
    out[..., -1, :] = (-f[..., -1, :] - f[..., -2, :]) / (2.0 * dx)
    return out


def diff_y_even(f, dy):
    """d/dy with even (Neumann) reflection at the y walls."""
    out = np.empty_like(f)
    out[..., :, 1:-1] = (f[..., :, 2:] - f[..., :, :-2]) / (2.0 * dy)
    out[..., :, 0] = (f[..., :, 1] - f[..., :, 0]) / (2.0 * dy)
    out[..., :, -1] = (f[..., :, -1] - f[..., :, -2]) / (2.0 * dy)
    return out


def diff_y_odd(f, dy):
    """d/dy with odd reflection (zero wall value) at the y walls."""
    out = np.empty_like(f)
    out[..., :, 1:-1] = (f[..., :, 2:] - f[..., :, :-2]) / (2.0 * dy)
    out[..., :, 0] = (f[..., :, 1] + f[..., :, 0]) / (2.0 * dy)
    out[..., :, -1] = (-f[..., :, -1] - f[..., :, -2]) / (2.0 * dy)
    return out


# --- first-order vector calculus ----------------------------------------


def gradient(grid: Grid, f):
    """Cell-centered gradient of a Neumann scalar field.

    Returns the pair (df/dx, df/dy).  The wall-normal component vanishes
    at the walls in the reflection sense: whenever the result is fed to
    :func:`divergence` the odd ghost rule interpolates it to zero there.
    """
    return diff_x_even(f, grid.dx), diff_y_even(f, grid.dy)


def divergence(grid: Grid, gu, gv):
    """Divergence of a vector field whose normal component vanishes at walls.

    Adjoint-consistent with :func:`gradient`; the discrete total integral
    of the result telescopes to zero exactly.
    """
    return diff_x_odd(gu, grid.dx) + diff_y_odd(gv, grid.dy)


def laplacian_neumann(grid: Grid, f):
    """Neumann Laplacian, defined as ``divergence(gradient(f))``.

    Keeping it literally the composition (rather than a fused stencil)
    guarantees the summation-by-parts identity bitwise against the other
    two operators.
    """
    gu, gv = gradient(grid, f)
    return divergence(grid, gu, gv)


# --- transform-space solvers ---------------------------------------------


def laplacian_eigenvalues(grid: Grid):
    """Eigenvalues of the composed Neumann Laplacian on DCT-II modes.

    Shape (nx, ny); entry (kx, ky) multiplies the mode
    cos(kx pi x/lx) cos(ky pi y/ly) sampled at cell centers.  All entries
    are <= 0 with equality only at (0, 0).
    """
    sx = np.sin(np.pi * np.arange(grid.nx) / grid.nx) / grid.dx
    sy = np.sin(np.pi * np.arange(grid.ny) / grid.ny) / grid.dy
    return -(sx[:, None] ** 2) - (sy[None, :] ** 2)


def _dct2(f):
    return dctn(f, type=2, norm="ortho", axes=(-2, -1))


def _idct2(fh):
    return idctn(fh, type=2, norm="ortho", axes=(-2, -1))


def _poisson_core(grid: Grid, rhs):
    """Invert the composed Laplacian on the mean-free part of rhs."""
    lam = laplacian_eigenvalues(grid)
    lam_safe = np.where(lam == 0.0, 1.0, lam)
    uh = _dct2(rhs) / lam_safe
    uh[..., 0, 0] = 0.0
    return _idct2(uh)


def poisson_solve_neumann(grid: Grid, rhs, tol_compat: float = 1e-8):
    """Solve ``lap u = rhs`` with the zero-mean normalization.

    The pure Neumann problem is solvable only for mean-free data, so a
    right-hand side whose mean exceeds ``tol_compat`` relative to its RMS
    raises IncompatibleRhs -- that always signals a bug upstream, never a
    condition to be papered over.  The returned field has zero mean.
    """
    rhs = np.asarray(rhs, dtype=float)
    scale = np.sqrt(np.mean(rhs**2))
    if scale > 0.0 and abs(np.mean(rhs)) > tol_compat * scale:
        raise IncompatibleRhs(
            f"Neumann rhs has mean {np.mean(rhs):.3e} against RMS {scale:.3e}"
        )
    return _poisson_core(grid, rhs)


def helmholtz_solve(grid: Grid, a: float, b: float, rhs):
    """Solve ``a u - b lap u = rhs`` for constants a > 0, b >= 0."""
    if not a > 0.0:
        raise ValueError(f"helmholtz_solve needs a > 0, got a={a}")
    if b < 0.0:
        raise ValueError(f"helmholtz_solve needs b >= 0, got b={b}")
    lam = laplacian_eigenvalues(grid)
    return _idct2(_dct2(np.asarray(rhs, dtype=float)) / (a - b * lam))


# --- Leray projection -----------------------------------------------------


def leray_project(grid: Grid, u, v, return_potential: bool = False):
    """Project a velocity field onto discretely divergence-free fields.

    Solves the Neumann pressure Poisson problem ``lap q = div (u, v)`` and
    subtracts ``grad q``.  Because the Poisson solver inverts exactly the
    composed operator ``div grad``, the projection is idempotent, removes
    the discrete divergence to round-off, and is L2-orthogonal: the output
    is orthogonal to every Neumann gradient field.

    The discrete divergence telescopes to zero mean identically, so the
    compatibility check of the public Poisson solver (which a round-off
    level divergence field cannot meaningfully pass) is skipped here.
    """
    d = divergence(grid, u, v)
    q = _poisson_core(grid, d)
    qx, qy = gradient(grid, q)
    if return_potential:
        return u - qx, v - qy, q
    return u - qx, v - qy
