"""Thin GMRES wrapper used by the implicit solvers.

All inner linear systems in the package are solved matrix-free with
restarted GMRES; this module centralizes the flattening boilerplate and
turns a non-converged iteration into LinearSolveFailure so drivers can
reject the step instead of silently continuing with garbage.
"""

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .errors import LinearSolveFailure

__all__ = ["solve_gmres"]


def solve_gmres(apply_op, b, apply_prec=None, x0=None, rtol=1e-8, maxiter=500, restart=60):
    """Solve ``apply_op(x) = b`` for arrays of b's shape.

    apply_op and apply_prec act on and return arrays shaped like b.  The
    returned solution satisfies ``|op(x) - b| <= rtol |b|`` in the 2-norm;
    anything less raises LinearSolveFailure.  b == 0 short-circuits to the
    zero solution regardless of x0.
    """
    shape = b.shape
    bloat = b.ravel()
    bnorm = np.linalg.norm(bloat)
    if bnorm == 0.0:
        return np.zeros(shape)

    n = bloat.size
    op = LinearOperator(
        (n, n), matvec=lambda x: np.ascontiguousarray(apply_op(x.reshape(shape))).ravel()
    )
    prec = None
    if apply_prec is not None:
        prec = LinearOperator(
            (n, n),
            matvec=lambda x: np.ascontiguousarray(apply_prec(x.reshape(shape))).ravel(),
        )

    restart = min(restart, n)
    cycles = max(1, int(np.ceil(maxiter / restart)))
    x, info = gmres(
        op,
        bloat,
        x0=None if x0 is None else np.asarray(x0).ravel(),
        rtol=rtol,
        atol=0.0,
        restart=restart,
        maxiter=cycles,
        M=prec,
    )
    if info != 0:
        res = np.linalg.norm(np.ascontiguousarray(apply_op(x.reshape(shape))).ravel() - bloat)
        raise LinearSolveFailure(
            f"GMRES stalled at relative residual {res / bnorm:.3e} "
            f"(target {rtol:.1e}, {maxiter} iterations)"
        )
    return x.reshape(shape)
