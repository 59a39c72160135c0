"""N-phase incompressible flow with multicomponent Cahn-Hilliard transport.

Finite-difference solver on a rectangle with no-slip walls, built so that
the discrete analogue of the model's energy inequality can be checked --
not just trusted -- after every time step.  See the README for the layout
of grids, operators and solvers.
"""

from .grid import Grid
from .errors import (
    ConfigError,
    DensityFloorViolation,
    DomainError,
    IncompatibleRhs,
    InteriorViolation,
    InvariantViolation,
    IoError,
    LinearSolveFailure,
    NewtonDivergence,
    SolverError,
)
from .operators import (
    divergence,
    gradient,
    helmholtz_solve,
    laplacian_eigenvalues,
    laplacian_neumann,
    leray_project,
    poisson_solve_neumann,
)
from .thermo import (
    ModelParams,
    ch_energy,
    gradient_energy,
    grand_potential,
    kinetic_energy,
    mobility_modulation,
    potential_energy,
    potential_gradient,
    project_tangent,
    psi,
    psi_double_prime,
    psi_prime,
    tangent_projector,
    total_energy,
    viscosity,
)
from .ch_solver import (
    ChStepConfig,
    ChStepResult,
    ch_step,
    chemical_potential,
    convective_ch_run,
    newton_system,
    separation_margin,
    stationary_solve,
)
from .ns_solver import (
    CoupledStepResult,
    FlowState,
    MomentumConfig,
    MomentumStepResult,
    StepEnergetics,
    coupled_step,
    density_from_phase,
    flux_jrho,
    momentum_step,
)
from .io import read_snapshot, read_timeseries, write_snapshot, write_timeseries
from .sim import (
    Diagnostics,
    EnergyLedger,
    LedgerRow,
    RunResult,
    SimConfig,
    detect_equilibrium,
    initial_phase,
    initial_velocity,
    load_config,
    reduce2_deviation,
    run,
    scalar_ch_oracle,
)

__version__ = "0.1.0"
