"""Configuration, initial presets, the time loop, and long-time diagnostics.

The loop drives :func:`nschsim.ns_solver.coupled_step` (or the pure
transport step with a prescribed velocity), appends one ledger row per
*attempted* step, and verifies the step estimate, the simplex constraint
and the divergence bound on every accepted state.  A step that fails a
check or throws a solver error is rejected and retried with half the
step size; when the step size collapses to ``h_min`` the failure is
propagated (``InvariantViolation`` for a structural check, the original
``SolverError`` otherwise).

Long-time diagnostics follow two events: the first time the separation
margin exceeds its threshold without later falling below half of it
(``t_star``), and the first time the stationary residual stays below
``tol_eq`` for twenty consecutive accepted steps (``t_eq``).
"""

import configparser
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .ch_solver import (
    ChStepConfig,
    ch_flux,
    ch_step,
    chemical_potential,
    mobility_dissipation,
    separation_margin,
    stationary_solve,
)
from .errors import ConfigError, InvariantViolation, SolverError
from .grid import Grid
from .io import write_snapshot, write_timeseries
from .ns_solver import (
    FlowState,
    MomentumConfig,
    coupled_step,
    density_from_phase,
    sym_grad_norm2,
)
from .operators import (
    diff_x_even,
    diff_y_even,
    divergence,
    gradient,
    helmholtz_solve,
    laplacian_neumann,
    leray_project,
)
from .oracles import scalar_ch_trajectory
from .thermo import (
    ModelParams,
    ch_energy,
    gradient_energy,
    kinetic_energy,
    potential_energy,
    potential_gradient,
)

__all__ = [
    "SimConfig",
    "LedgerRow",
    "EnergyLedger",
    "Diagnostics",
    "RunResult",
    "load_config",
    "initial_phase",
    "initial_velocity",
    "detect_equilibrium",
    "run",
    "scalar_ch_oracle",
    "reduce2_deviation",
    "OUT_DIR_ENV",
]

OUT_DIR_ENV = "NSCH_OUT_DIR"

_PHASE_PRESETS = ("uniform", "random-perturbation", "stripes", "three-bubble")
_VELOCITY_PRESETS = ("none", "vortex")
_MODES = ("coupled", "convective-ch", "stationary")

#: consecutive below-tolerance outputs required to declare equilibrium
EQ_CONSECUTIVE = 20


# --- configuration --------------------------------------------------------


@dataclass
class SimConfig:
    nx: int = 64
    ny: int = 64
    lx: float = 1.0
    ly: float = 1.0
    params: ModelParams = None
    ic_preset: str = "random-perturbation"
    ic_mean: np.ndarray = None
    ic_seed: int = 0
    ic_amplitude: float = 0.05
    v_preset: str = "none"
    v_amplitude: float = 0.0
    h: float = 1e-3
    t_end: float = 0.1
    h_min: float | None = None  # defaults to h / 64
    newton_tol: float = 1e-9
    tol_energy: float = 1e-9
    tol_div: float = 1e-8
    tol_eq: float = 1e-6
    delta_detect: float = 1e-3
    epsilon0: float = 1e-3
    snapshot_every: int = 0
    out_dir: str | None = None
    csv_name: str = "timeseries.csv"
    mode: str = "coupled"
    stop_on_equilibrium: bool = False
    max_steps: int = 100000
    max_newton: int = 40
    krylov_rtol: float = 1e-6
    krylov_maxiter: int = 600
    picard_sweeps: int = 2
    mom_krylov_rtol: float = 1e-10
    mom_krylov_maxiter: int = 1500
    stationary_f: np.ndarray | None = None

    def __post_init__(self):
        if self.params is None:
            raise ConfigError("model parameters are required")
        n = self.params.n
        if self.ic_mean is None:
            self.ic_mean = np.full(n, 1.0 / n)
        self.ic_mean = np.asarray(self.ic_mean, dtype=float)
        if self.ic_mean.shape != (n,):
            raise ConfigError(f"initial mean must have {n} entries")
        if abs(float(np.sum(self.ic_mean)) - 1.0) > 1e-10:
            raise ConfigError("initial mean must sum to one")
        if np.min(self.ic_mean) <= 0.0 or np.max(self.ic_mean) >= 1.0:
            raise ConfigError("initial mean must lie strictly inside (0,1)")
        for name in ("h", "t_end", "newton_tol", "tol_energy", "tol_div",
                     "tol_eq", "delta_detect", "epsilon0"):
            if not getattr(self, name) > 0.0:
                raise ConfigError(f"{name} must be positive")
        if self.h_min is None:
            self.h_min = self.h / 64.0
        if self.h_min > self.h:
            raise ConfigError("h_min must not exceed h")
        if self.ic_preset not in _PHASE_PRESETS:
            raise ConfigError(f"unknown initial preset {self.ic_preset!r}")
        if self.v_preset not in _VELOCITY_PRESETS:
            raise ConfigError(f"unknown velocity preset {self.v_preset!r}")
        if self.mode not in _MODES:
            raise ConfigError(f"unknown mode {self.mode!r}")

    def grid(self) -> Grid:
        return Grid(self.nx, self.ny, self.lx, self.ly)


def _floats(text: str):
    try:
        return np.array([float(tok) for tok in text.split()])
    except ValueError as exc:
        raise ConfigError(f"expected a list of numbers, got {text!r}") from exc


def _matrix(text: str):
    try:
        rows = [[float(tok) for tok in row.split()] for row in text.split(",")]
        return np.array(rows)
    except ValueError as exc:
        raise ConfigError(f"expected comma-separated matrix rows, got {text!r}") from exc


def load_config(path) -> SimConfig:
    """Parse an INI-style config file into a SimConfig.

    Unknown keys are rejected nowhere (forward compatibility), missing
    ones fall back to the dataclass defaults; malformed values raise
    ConfigError.
    """
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc

    def get(section, key, conv, default):
        if not parser.has_option(section, key):
            return default
        raw = parser.get(section, key).strip()
        try:
            return conv(raw)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"[{section}] {key}: bad value {raw!r}") from exc

    as_bool = lambda s: s.lower() in ("1", "true", "yes", "on")

    try:
        n = get("model", "n", int, 2)
        kw = dict(
            n=n,
            theta=get("model", "theta", float, 1.0),
            theta_c=get("model", "theta_c", float, 2.0),
            gamma_scale=get("model", "zeta", float, 1.0),
            alpha=get("model", "alpha", float, 0.0),
            mobility_scale=get("model", "mobility_scale", float, 1.0),
            mobility_model=get("model", "mobility_model", str, "constant"),
            mobility_floor=get("model", "mobility_floor", float, 0.1),
        )
        if parser.has_option("model", "rho_tilde"):
            kw["rho_tilde"] = _floats(parser.get("model", "rho_tilde"))
        if parser.has_option("model", "nu"):
            kw["nu_values"] = _floats(parser.get("model", "nu"))
        if parser.has_option("model", "a_matrix"):
            kw["a_matrix"] = _matrix(parser.get("model", "a_matrix"))
        if parser.has_option("model", "mobility"):
            kw["mobility"] = _matrix(parser.get("model", "mobility"))
        params = ModelParams(**kw)

        h = get("time", "h", float, 1e-3)
        h_min_raw = get("time", "h_min", str, "auto")
        h_min = None if h_min_raw == "auto" else float(h_min_raw)

        cfg = SimConfig(
            nx=get("grid", "nx", int, 64),
            ny=get("grid", "ny", int, 64),
            lx=get("grid", "lx", float, 1.0),
            ly=get("grid", "ly", float, 1.0),
            params=params,
            ic_preset=get("initial", "preset", str, "random-perturbation"),
            ic_mean=(_floats(parser.get("initial", "mean"))
                     if parser.has_option("initial", "mean") else None),
            ic_seed=get("initial", "seed", int, 0),
            ic_amplitude=get("initial", "amplitude", float, 0.05),
            v_preset=get("initial", "velocity", str, "none"),
            v_amplitude=get("initial", "velocity_amplitude", float, 0.0),
            h=h,
            t_end=get("time", "t_end", float, 0.1),
            h_min=h_min,
            newton_tol=get("tolerances", "newton_tol", float, 1e-9),
            tol_energy=get("tolerances", "tol_energy", float, 1e-9),
            tol_div=get("tolerances", "tol_div", float, 1e-8),
            tol_eq=get("tolerances", "tol_eq", float, 1e-6),
            delta_detect=get("tolerances", "delta_detect", float, 1e-3),
            epsilon0=get("tolerances", "epsilon0", float, 1e-3),
            snapshot_every=get("output", "snapshot_every", int, 0),
            out_dir=get("output", "directory", str, None),
            csv_name=get("output", "csv_name", str, "timeseries.csv"),
            mode=get("run", "mode", str, "coupled"),
            stop_on_equilibrium=get("run", "stop_on_equilibrium", as_bool, False),
            max_steps=get("run", "max_steps", int, 100000),
            max_newton=get("solver", "max_newton", int, 40),
            krylov_rtol=get("solver", "krylov_rtol", float, 1e-6),
            krylov_maxiter=get("solver", "krylov_maxiter", int, 600),
            picard_sweeps=get("solver", "picard_sweeps", int, 2),
            mom_krylov_rtol=get("solver", "mom_krylov_rtol", float, 1e-10),
            mom_krylov_maxiter=get("solver", "mom_krylov_maxiter", int, 1500),
            stationary_f=(_floats(parser.get("stationary", "f"))
                          if parser.has_option("stationary", "f") else None),
        )
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return cfg


# --- initial conditions ---------------------------------------------------


def _to_simplex(phi, eps):
    phi = np.clip(phi, eps, None)
    return phi / np.sum(phi, axis=0)


def initial_phase(grid: Grid, cfg: SimConfig) -> np.ndarray:
    """Build the initial composition from the configured preset.

    The result is accepted as is when all components lie in
    [epsilon0, 1-epsilon0]; otherwise it is run once through a grid-scale
    Helmholtz mollifier and renormalized, which removes sub-cell spikes
    without disturbing the macroscopic layout.
    """
    n = cfg.params.n
    mean = cfg.ic_mean[:, None, None]
    x, y = grid.cell_centers()

    if cfg.ic_preset == "uniform":
        phi = np.broadcast_to(mean, (n, grid.nx, grid.ny)).copy()
    elif cfg.ic_preset == "random-perturbation":
        rng = np.random.default_rng(cfg.ic_seed)
        pert = cfg.ic_amplitude * (2.0 * rng.random((n, grid.nx, grid.ny)) - 1.0)
        phi = _to_simplex(mean + pert, cfg.epsilon0)
    elif cfg.ic_preset == "stripes":
        # raised-cosine partition of unity with one band per component
        bands = np.empty((n, grid.nx, grid.ny))
        for i in range(n):
            bands[i] = (1.0 + np.cos(2.0 * np.pi * (x / grid.lx - (i + 0.5) / n))) ** 3
        phi = _to_simplex(bands + 0.05, cfg.epsilon0)
    else:  # three-bubble
        width = 2.0 * min(grid.dx, grid.dy)
        radius = 0.16 * min(grid.lx, grid.ly)
        centers = [(0.30, 0.32), (0.70, 0.32), (0.50, 0.72)]
        raw = np.full((n, grid.nx, grid.ny), 0.05)
        raw[n - 1] = 1.0
        for k, (cx, cy) in enumerate(centers):
            dist = np.hypot(x - cx * grid.lx, y - cy * grid.ly)
            blob = 0.5 * (1.0 - np.tanh((dist - radius) / width))
            comp = k % max(n - 1, 1)
            raw[comp] += blob
            raw[n - 1] -= 0.9 * blob
        phi = _to_simplex(raw, cfg.epsilon0)

    lo, hi = float(np.min(phi)), float(np.max(phi))
    if lo < cfg.epsilon0 or hi > 1.0 - cfg.epsilon0:
        smooth = np.stack(
            [helmholtz_solve(grid, 1.0, grid.dx * grid.dy, comp) for comp in phi]
        )
        phi = _to_simplex(smooth, cfg.epsilon0)
    return phi


def initial_velocity(grid: Grid, cfg: SimConfig):
    """Initial velocity preset, projected to the discrete divergence-free space."""
    if cfg.v_preset == "none" or cfg.v_amplitude == 0.0:
        z = np.zeros((grid.nx, grid.ny))
        return z, z.copy()
    x, y = grid.cell_centers()
    stream = cfg.v_amplitude * (
        np.sin(np.pi * x / grid.lx) ** 2 * np.sin(np.pi * y / grid.ly) ** 2
    )
    u = diff_y_even(stream, grid.dy)
    v = -diff_x_even(stream, grid.dx)
    return leray_project(grid, u, v)


# --- ledger and diagnostics -----------------------------------------------


@dataclass
class LedgerRow:
    """One attempted step.  The first thirteen fields are the CSV columns;
    the jump and alpha terms are kept for the exact telescoping identity
    but not serialized."""

    t: float
    e_kin: float
    e_grad: float
    e_pot: float
    e_tot: float
    diss_visc: float
    diss_ch: float
    slack: float
    sep_margin: float
    v_norm: float
    eq_residual: float
    h: float
    flags: str
    kin_jump: float = 0.0
    grad_jump: float = 0.0
    alpha_half_dv2: float = 0.0
    alpha_jump: float = 0.0
    ext_work: float = 0.0  # work of a prescribed transport velocity

    def csv_tuple(self):
        return (
            self.t, self.e_kin, self.e_grad, self.e_pot, self.e_tot,
            self.diss_visc, self.diss_ch, self.slack, self.sep_margin,
            self.v_norm, self.eq_residual, self.h, self.flags,
        )

    @property
    def accepted(self) -> bool:
        return self.flags.split(";")[0] in ("ok", "stationary")


@dataclass
class EnergyLedger:
    """Rows for every attempted step plus the initial energy snapshot."""

    e_tot_initial: float = 0.0
    alpha_half_initial: float = 0.0
    rows: list = field(default_factory=list)

    def append(self, row: LedgerRow):
        self.rows.append(row)

    def accepted_rows(self):
        return [r for r in self.rows if r.accepted]

    def worst_slack(self) -> float:
        acc = self.accepted_rows()
        return min((r.slack for r in acc), default=0.0)

    def telescoping_defect(self) -> float:
        """Residual of summing the per-step estimates over the whole run.

        By construction of the slack this is zero up to float roundoff:
        (E + alpha)(0) - (E + alpha)(end) equals the sum of dissipation,
        jump and slack terms over the accepted steps.
        """
        acc = self.accepted_rows()
        if not acc:
            return 0.0
        spent = sum(
            r.diss_visc + r.diss_ch + r.kin_jump + r.grad_jump + r.alpha_jump
            + r.ext_work + r.slack
            for r in acc
        )
        start = self.e_tot_initial + self.alpha_half_initial
        end = acc[-1].e_tot + acc[-1].alpha_half_dv2
        return abs(start - end - spent) / (1.0 + abs(start))

    def csv_rows(self):
        return [r.csv_tuple() for r in self.rows]


@dataclass
class Diagnostics:
    t_star: float | None = None
    t_eq: float | None = None
    max_step_drift: float = 0.0
    cumulative_drift: float = 0.0
    sep_margin_final: float = 0.0
    eq_residual_final: float = 0.0
    accepted: int = 0
    rejected: int = 0
    halvings: int = 0


@dataclass
class RunResult:
    grid: Grid
    phi: np.ndarray
    state: FlowState
    ledger: EnergyLedger
    diagnostics: Diagnostics
    snapshot_paths: list
    csv_path: str | None


def detect_equilibrium(grid: Grid, phi, params: ModelParams, tol_eq: float):
    """Test whether phi satisfies the stationary equation up to tol_eq.

    The residual is the deviation of -zeta lap phi + P(psi'(phi) - A phi)
    from its componentwise spatial mean (the stationary equation fixes the
    field only up to a constant Lagrange multiplier), RMS-measured and
    normalized by 1 + RMS of the full field.
    """
    r = -params.gamma_scale * laplacian_neumann(grid, phi) + potential_gradient(
        phi, params
    )
    fluctuation = r - np.mean(r, axis=(1, 2), keepdims=True)
    residual = grid.norm_rms(fluctuation) / (1.0 + grid.norm_rms(r))
    return residual <= tol_eq, residual


# --- the time loop --------------------------------------------------------


def _convective_energetics(grid, phi_k, phi_new, w, vel, params, h):
    """Ledger pieces of a pure transport step with prescribed velocity."""
    e_old = ch_energy(grid, phi_k, params)
    e_grad = gradient_energy(grid, phi_new, params)
    e_pot = potential_energy(grid, phi_new, params)
    diss_ch = h * mobility_dissipation(grid, w, phi_k, params)
    dgx, dgy = gradient(grid, phi_new - phi_k)
    grad_jump = 0.5 * params.gamma_scale * grid.integrate(
        np.sum(dgx**2 + dgy**2, axis=0)
    )
    gx, gy = gradient(grid, phi_k)
    conv = gx * vel[0] + gy * vel[1]
    conv_work = h * grid.inner(conv, w)
    slack = e_old - (e_grad + e_pot) - diss_ch - grad_jump - conv_work
    return e_grad, e_pot, diss_ch, grad_jump, conv_work, slack


def _structural_flags(grid, cfg, phi, state):
    """Return a rejection reason for a freshly accepted state, or None."""
    sums = np.max(np.abs(np.sum(phi, axis=0) - 1.0))
    if sums > 1e-10:
        return "simplex"
    if np.min(phi) <= 0.0 or np.max(phi) >= 1.0:
        return "interior"
    vnorm = grid.norm_l2(np.stack([state.u, state.v]))
    div = grid.norm_l2(divergence(grid, state.u, state.v))
    if div > cfg.tol_div * (1.0 + vnorm):
        return "divergence"
    return None


def _classify(exc: Exception) -> str:
    from .errors import (
        DensityFloorViolation,
        InteriorViolation,
        LinearSolveFailure,
        NewtonDivergence,
    )

    if isinstance(exc, NewtonDivergence):
        return "newton"
    if isinstance(exc, InteriorViolation):
        return "interior"
    if isinstance(exc, LinearSolveFailure):
        return "linear"
    if isinstance(exc, DensityFloorViolation):
        return "density"
    return "solver"


def run(cfg: SimConfig) -> RunResult:
    """Execute the configured simulation; see the module docstring.

    Output files are written only when cfg.out_dir is set (the CLI always
    sets it).  The returned ledger holds one row per attempted step,
    rejected attempts flagged with their reason.
    """
    grid = cfg.grid()
    params = cfg.params

    if cfg.mode == "stationary":
        return _run_stationary(grid, cfg)

    phi = initial_phase(grid, cfg)
    u0, v0 = initial_velocity(grid, cfg)
    state = FlowState(u0, v0, np.zeros((grid.nx, grid.ny)))
    coupled = cfg.mode == "coupled"
    vel = (u0, v0)  # fixed transport field in convective mode

    ch_cfg = ChStepConfig(
        h=cfg.h,
        newton_tol=cfg.newton_tol,
        max_newton=cfg.max_newton,
        krylov_rtol=cfg.krylov_rtol,
        krylov_maxiter=cfg.krylov_maxiter,
    )
    mom_cfg = MomentumConfig(
        picard_sweeps=cfg.picard_sweeps,
        krylov_rtol=cfg.mom_krylov_rtol,
        krylov_maxiter=cfg.mom_krylov_maxiter,
    )

    rho = density_from_phase(phi, params)
    e_kin = kinetic_energy(grid, rho, state.u, state.v) if coupled else 0.0
    e_tot0 = e_kin + ch_energy(grid, phi, params)
    alpha0 = (
        0.5 * params.alpha * sym_grad_norm2(grid, state.u, state.v) if coupled else 0.0
    )
    ledger = EnergyLedger(e_tot_initial=e_tot0, alpha_half_initial=alpha0)
    diag = Diagnostics()
    means0 = np.mean(phi, axis=(1, 2))
    prev_means = means0.copy()

    out_dir = cfg.out_dir
    snapshot_paths = []
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)

    def snap(tag, t_now):
        if out_dir is None:
            return
        path = os.path.join(out_dir, f"snap_{tag:06d}.vtk")
        write_snapshot(
            grid, phi, density_from_phase(phi, params), state.u, state.v, state.p,
            t_now, path,
        )
        snapshot_paths.append(path)

    snap(0, 0.0)

    t = 0.0
    h = cfg.h
    eq_consecutive = 0
    t_span = max(cfg.t_end, 1.0)
    while cfg.t_end - t > 1e-12 * t_span:
        if diag.accepted >= cfg.max_steps:
            break
        h_step = min(h, cfg.t_end - t)
        flags = []
        try:
            if coupled:
                out = coupled_step(grid, phi, state, params, replace(ch_cfg, h=h_step), mom_cfg)
                new_phi = out.ch.phi_next
                new_state = FlowState(out.momentum.u, out.momentum.v, out.momentum.p)
                en = out.energy
            else:
                res = ch_step(grid, phi, vel, params, replace(ch_cfg, h=h_step))
                new_phi = res.phi_next
                new_state = state
                e_grad, e_pot, diss_ch, grad_jump, conv_work, slack = (
                    _convective_energetics(
                        grid, phi, new_phi, res.w_next, vel, params, h_step
                    )
                )
                en = None
        except SolverError as exc:
            reason = _classify(exc)
            _append_unchanged(ledger, grid, cfg, phi, state, t, h_step,
                              f"rejected:{reason}", coupled)
            diag.rejected += 1
            if h <= cfg.h_min * (1.0 + 1e-12):
                raise
            h *= 0.5
            diag.halvings += 1
            continue

        if coupled:
            e_tot_new = en.e_tot
            slack_new = en.slack
        else:
            e_tot_new = e_grad + e_pot
            slack_new = slack

        reason = None
        if slack_new < -cfg.tol_energy * (1.0 + abs(e_tot_new)):
            reason = "energy"
        else:
            reason = _structural_flags(grid, cfg, new_phi, new_state)

        if reason is not None:
            _append_unchanged(ledger, grid, cfg, phi, state, t, h_step,
                              f"rejected:{reason}", coupled, slack_value=slack_new)
            diag.rejected += 1
            if h <= cfg.h_min * (1.0 + 1e-12):
                raise InvariantViolation(
                    f"step check '{reason}' still failing at the minimal step size "
                    f"h={h_step:.3e} (t={t:.6f})"
                )
            h *= 0.5
            diag.halvings += 1
            continue

        # accepted: advance state and bookkeeping
        phi = new_phi
        state = new_state
        t += h_step
        diag.accepted += 1
        if h_step < cfg.h:
            flags.append("h-reduced")

        means = np.mean(phi, axis=(1, 2))
        diag.max_step_drift = max(diag.max_step_drift, float(np.max(np.abs(means - prev_means))))
        diag.cumulative_drift = float(np.max(np.abs(means - means0)))
        prev_means = means

        margin = separation_margin(phi)
        if margin > cfg.delta_detect and diag.t_star is None:
            diag.t_star = t
        elif margin < 0.5 * cfg.delta_detect:
            diag.t_star = None  # re-arm: the excursion did not persist

        is_eq, eq_res = detect_equilibrium(grid, phi, params, cfg.tol_eq)
        eq_consecutive = eq_consecutive + 1 if is_eq else 0
        if eq_consecutive >= EQ_CONSECUTIVE and diag.t_eq is None:
            diag.t_eq = t

        vnorm = grid.norm_l2(np.stack([state.u, state.v]))
        if coupled:
            row = LedgerRow(
                t=t, e_kin=en.e_kin, e_grad=en.e_grad, e_pot=en.e_pot,
                e_tot=en.e_tot, diss_visc=en.diss_visc, diss_ch=en.diss_ch,
                slack=en.slack, sep_margin=margin, v_norm=vnorm,
                eq_residual=eq_res, h=h_step, flags=";".join(["ok"] + flags),
                kin_jump=en.kin_jump, grad_jump=en.grad_jump,
                alpha_half_dv2=en.alpha_half_dv2, alpha_jump=en.alpha_jump,
            )
        else:
            row = LedgerRow(
                t=t, e_kin=0.0, e_grad=e_grad, e_pot=e_pot,
                e_tot=e_tot_new, diss_visc=0.0, diss_ch=diss_ch,
                slack=slack_new, sep_margin=margin, v_norm=vnorm,
                eq_residual=eq_res, h=h_step, flags=";".join(["ok"] + flags),
                grad_jump=grad_jump, ext_work=conv_work,
            )
        ledger.append(row)

        if cfg.snapshot_every > 0 and diag.accepted % cfg.snapshot_every == 0:
            snap(diag.accepted, t)
        if cfg.stop_on_equilibrium and diag.t_eq is not None:
            break

    diag.sep_margin_final = separation_margin(phi)
    _, diag.eq_residual_final = detect_equilibrium(grid, phi, params, cfg.tol_eq)

    if cfg.snapshot_every >= 0 and (not snapshot_paths or diag.accepted and
                                    not snapshot_paths[-1].endswith(f"{diag.accepted:06d}.vtk")):
        snap(diag.accepted, t)

    csv_path = None
    if out_dir is not None:
        csv_path = os.path.join(out_dir, cfg.csv_name)
        write_timeseries(ledger.csv_rows(), csv_path)

    return RunResult(grid, phi, state, ledger, diag, snapshot_paths, csv_path)


def _append_unchanged(ledger, grid, cfg, phi, state, t, h_step, flags, coupled,
                      slack_value=0.0):
    """Ledger row for a rejected attempt: the state did not change, so the
    energies are those of the pre-step state and the dissipation is zero."""
    params = cfg.params
    rho = density_from_phase(phi, params)
    e_kin = kinetic_energy(grid, rho, state.u, state.v) if coupled else 0.0
    e_grad = gradient_energy(grid, phi, params)
    e_pot = potential_energy(grid, phi, params)
    _, eq_res = detect_equilibrium(grid, phi, params, cfg.tol_eq)
    alpha_half = (
        0.5 * params.alpha * sym_grad_norm2(grid, state.u, state.v) if coupled else 0.0
    )
    ledger.append(
        LedgerRow(
            t=t, e_kin=e_kin, e_grad=e_grad, e_pot=e_pot,
            e_tot=e_kin + e_grad + e_pot, diss_visc=0.0, diss_ch=0.0,
            slack=slack_value, sep_margin=separation_margin(phi),
            v_norm=grid.norm_l2(np.stack([state.u, state.v])),
            eq_residual=eq_res, h=h_step, flags=flags,
            alpha_half_dv2=alpha_half,
        )
    )


def _run_stationary(grid: Grid, cfg: SimConfig) -> RunResult:
    """Stationary mode: one elliptic solve instead of a time loop."""
    params = cfg.params
    from .thermo import psi_prime, project_tangent

    if cfg.stationary_f is not None:
        f = np.asarray(cfg.stationary_f, dtype=float)
    else:
        f = project_tangent(psi_prime(cfg.ic_mean, params.theta))
    ch_cfg = ChStepConfig(
        h=cfg.h, newton_tol=cfg.newton_tol, max_newton=cfg.max_newton,
        krylov_rtol=cfg.krylov_rtol, krylov_maxiter=cfg.krylov_maxiter,
    )
    phi = stationary_solve(grid, f, cfg.ic_mean, params, ch_cfg)
    z = np.zeros((grid.nx, grid.ny))
    state = FlowState(z, z.copy(), z.copy())

    e_grad = gradient_energy(grid, phi, params)
    e_pot = potential_energy(grid, phi, params)
    _, eq_res = detect_equilibrium(grid, phi, params, cfg.tol_eq)
    margin = separation_margin(phi)
    ledger = EnergyLedger(e_tot_initial=e_grad + e_pot)
    ledger.append(
        LedgerRow(
            t=0.0, e_kin=0.0, e_grad=e_grad, e_pot=e_pot, e_tot=e_grad + e_pot,
            diss_visc=0.0, diss_ch=0.0, slack=0.0, sep_margin=margin,
            v_norm=0.0, eq_residual=eq_res, h=cfg.h, flags="stationary",
        )
    )
    diag = Diagnostics(
        t_eq=0.0, sep_margin_final=margin, eq_residual_final=eq_res, accepted=1
    )

    snapshot_paths = []
    csv_path = None
    if cfg.out_dir is not None:
        os.makedirs(cfg.out_dir, exist_ok=True)
        path = os.path.join(cfg.out_dir, "stationary.vtk")
        write_snapshot(grid, phi, density_from_phase(phi, params),
                       state.u, state.v, state.p, 0.0, path)
        snapshot_paths.append(path)
        csv_path = os.path.join(cfg.out_dir, cfg.csv_name)
        write_timeseries(ledger.csv_rows(), csv_path)
    return RunResult(grid, phi, state, ledger, diag, snapshot_paths, csv_path)


# --- two-component reduction ----------------------------------------------


def scalar_ch_oracle(cfg: SimConfig, n_steps: int | None = None) -> np.ndarray:
    """Reference trajectory of u = phi_2 - phi_1 for an N=2 config, v = 0.

    Returns an (n_steps+1, nx, ny) array including the initial state; the
    heavy lifting is the independently assembled solver in
    :mod:`nschsim.oracles`.
    """
    if cfg.params.n != 2:
        raise ConfigError("the scalar reduction is defined for two components")
    grid = cfg.grid()
    phi0 = initial_phase(grid, cfg)
    u0 = phi0[1] - phi0[0]
    if n_steps is None:
        n_steps = int(round(cfg.t_end / cfg.h))
    return scalar_ch_trajectory(grid, u0, cfg.params, cfg.h, n_steps,
                                newton_tol=cfg.newton_tol)


def reduce2_deviation(cfg: SimConfig, n_steps: int | None = None):
    """Run the vector solver and the scalar reference side by side.

    Returns (max deviation of phi_2 - phi_1 over all steps, n_steps).
    """
    if cfg.params.n != 2:
        raise ConfigError("reduce2 needs a two-component config")
    grid = cfg.grid()
    phi = initial_phase(grid, cfg)
    if n_steps is None:
        n_steps = int(round(cfg.t_end / cfg.h))
    oracle = scalar_ch_trajectory(grid, phi[1] - phi[0], cfg.params, cfg.h,
                                  n_steps, newton_tol=cfg.newton_tol)
    ch_cfg = ChStepConfig(
        h=cfg.h, newton_tol=cfg.newton_tol, max_newton=cfg.max_newton,
        krylov_rtol=cfg.krylov_rtol, krylov_maxiter=cfg.krylov_maxiter,
    )
    worst = 0.0
    for k in range(n_steps):
        res = ch_step(grid, phi, None, cfg.params, ch_cfg)
        phi = res.phi_next
        dev = float(np.max(np.abs((phi[1] - phi[0]) - oracle[k + 1])))
        worst = max(worst, dev)
    return worst, n_steps
