"""Exception types shared across the solver modules.

Solver failures that a driver can recover from (by shrinking the time step
or rejecting a state) derive from SolverError.  Configuration and I/O
problems are unrecoverable from inside a run and derive from Exception
directly.
"""


class ConfigError(Exception):
    """A configuration value is missing, malformed, or inconsistent."""


class IoError(Exception):
    """A snapshot or time-series file could not be read or written."""


class DomainError(ValueError):
    """An argument left the admissible domain (e.g. log of a non-positive
    phase fraction)."""


class InvariantViolation(Exception):
    """A structural invariant (energy inequality, simplex constraint, mass
    conservation) failed on an accepted state and step shrinking is
    exhausted; the run cannot honestly continue."""


class SolverError(Exception):
    """Base class for recoverable solver failures."""


class NewtonDivergence(SolverError):
    """The Newton iteration stagnated or exceeded its iteration budget."""


class InteriorViolation(SolverError):
    """A line search could not keep the phase fractions inside the open
    Gibbs simplex."""


class LinearSolveFailure(SolverError):
    """An inner Krylov solve did not reach its tolerance."""


class IncompatibleRhs(SolverError):
    """Right-hand side of a pure Neumann solve has a non-negligible mean,
    which signals a bug upstream of the call."""


class DensityFloorViolation(SolverError):
    """Interpolated density dropped below half the smallest bulk density,
    which signals a corrupted phase field."""
