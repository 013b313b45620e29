"""Linearly implicit P1 time stepping for both phases.

One step: theta with coefficients frozen at the old level, then the
pointwise crystal and porosity updates, then c_i with fresh coefficients.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..errors import SolverError
from ..fd1d import Phase, Snapshot
from ..linalg import SolveReport, SparseMatrix, apply_dirichlet, solve_bicgstab
from ..mesh import Boundary, Mesh
from ..model import (
    PhysicalParameters,
    State,
    crystallization_rate,
    imbibition_initial_state,
    mobility_f,
    porosity_from_cs,
)
from .assembly import (
    FemSpace,
    advection_local,
    drift_boundary_diag,
    drift_local,
    element_coefficients,
    fem_space,
    robin_terms,
    weighted_mass_local,
)

log = logging.getLogger(__name__)

DRY_EPS = 1e-14


@dataclass(frozen=True)
class FemStepConfig:
    dt: float
    phase: Phase = Phase.IMBIBITION
    params: PhysicalParameters = field(default_factory=PhysicalParameters)
    tol: float = 1e-10
    maxit: int | None = None
    # level of f, F in the ion flux: "new" (theta^{k+1}, n^{k+1}) or "old",
    # which reuses exactly the water flux of the theta step
    ci_coefficients: str = "new"
    # "lumped": vertex rule for all mass-like terms; "consistent": exact
    mass_rule: str = "lumped"

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.ci_coefficients not in ("new", "old"):
            raise ValueError(f"ci_coefficients must be 'new' or 'old', got {self.ci_coefficients!r}")
        if self.mass_rule not in ("lumped", "consistent"):
            raise ValueError(f"mass_rule must be 'lumped' or 'consistent', got {self.mass_rule!r}")
        object.__setattr__(self, "phase", Phase(self.phase))


@dataclass
class FemSystem:
    matrix: SparseMatrix
    rhs: np.ndarray
    constrained: np.ndarray
    values: np.ndarray


@dataclass
class SolverStats:
    solves: int = 0
    iterations: int = 0
    max_iterations: int = 0
    max_residual: float = 0.0

    def record(self, report: SolveReport) -> None:
        self.solves += 1
        self.iterations += report.iterations
        self.max_iterations = max(self.max_iterations, report.iterations)
        self.max_residual = max(self.max_residual, report.residual)

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def imbibition_state(mesh: Mesh, p: PhysicalParameters) -> State:
    return imbibition_initial_state(mesh.node_mask(Boundary.BOTTOM), p)


def _theta_dirichlet(mesh: Mesh, phase: Phase, p: PhysicalParameters):
    if phase is Phase.IMBIBITION:
        nodes = mesh.boundary_nodes(Boundary.BOTTOM)
        return nodes, np.full(len(nodes), p.n0)
    nodes = mesh.boundary_nodes(Boundary.BOTTOM, Boundary.TOP)
    return nodes, np.zeros(len(nodes))


def theta_system(state: State, space: FemSpace, cfg: FemStepConfig) -> FemSystem:
    """Linear system for theta^{k+1}, before Dirichlet rows are applied."""
    p, dt = cfg.params, cfg.dt
    f, F = element_coefficients(space, state.theta, state.n, p)
    local = f[:, None, None] * space.K0 - drift_local(space, F)
    if cfg.mass_rule == "consistent":
        M = space.pattern.assemble(space.mass0)
        A = space.pattern.assemble(local + space.mass0 / dt)
        diag = drift_boundary_diag(space, F)
        rhs = M.spmv(state.theta) / dt
    else:
        A = space.pattern.assemble(local)
        m = space.lumped / dt
        diag = m + drift_boundary_diag(space, F)
        rhs = m * state.theta
    if cfg.phase is Phase.IMBIBITION:
        r_diag, r_rhs = robin_terms(space, mobility_f(state.theta, state.n, p), p.Kw, p.theta_bar)
        diag = diag + r_diag
        rhs = rhs + r_rhs
    A.data[space.pattern.diag] += diag
    nodes, values = _theta_dirichlet(space.mesh, cfg.phase, p)
    return FemSystem(A, rhs, nodes, values)


def ci_system(new: State, old: State, space: FemSpace, cfg: FemStepConfig) -> FemSystem:
    """Linear system for c_i^{k+1} given theta, c_s, n at both levels."""
    p, dt = cfg.params, cfg.dt
    level = new if cfg.ci_coefficients == "new" else old
    f, F = element_coefficients(space, level.theta, level.n, p)
    Dth = p.D * space.centroid(new.theta)
    local = Dth[:, None, None] * space.K0 + advection_local(space, f, F, new.theta)
    if cfg.mass_rule == "consistent":
        el = space.mesh.elements
        A = space.pattern.assemble(local + weighted_mass_local(space, new.theta[el]) / dt)
        M_old = space.pattern.assemble(weighted_mass_local(space, old.theta[el]))
        M = space.pattern.assemble(space.mass0)
        rhs = (M_old.spmv(old.ci) - M.spmv(new.cs - old.cs)) / dt
    else:
        A = space.pattern.assemble(local)
        A.data[space.pattern.diag] += space.lumped * new.theta / dt
        rhs = space.lumped * (old.theta * old.ci - (new.cs - old.cs)) / dt
    if cfg.phase is Phase.IMBIBITION:
        nodes = space.mesh.boundary_nodes(Boundary.BOTTOM)
        values = np.full(len(nodes), p.ci_bar)
    else:
        nodes = np.zeros(0, dtype=np.int64)
        values = np.zeros(0)
    # nodes whose whole patch holds no liquid carry no equation; keep c_i
    patch_max = np.zeros(space.N)
    elem_max = new.theta[space.mesh.elements].max(axis=1)
    np.maximum.at(patch_max, space.mesh.elements.ravel(), np.repeat(elem_max, space.dim + 1))
    dry = np.flatnonzero(patch_max <= DRY_EPS)
    dry_values = old.ci[dry]
    if cfg.phase is Phase.DRYING:
        # a dried node next to liquid has no capacity either, but a
        # crystallization sink; take c_i from its wet neighbours instead
        pat = space.pattern
        rows = np.repeat(np.arange(space.N), np.diff(pat.indptr))
        wet_nb = (new.theta[pat.indices] > DRY_EPS) & (pat.indices != rows)
        count = np.bincount(rows, weights=wet_nb, minlength=space.N)
        total = np.bincount(rows, weights=wet_nb * old.ci[pat.indices], minlength=space.N)
        edge = np.flatnonzero((new.theta <= DRY_EPS) & (count > 0))
        dry = np.concatenate([dry, edge])
        dry_values = np.concatenate([dry_values, total[edge] / count[edge]])
    keep = ~np.isin(dry, nodes)
    if keep.any():
        nodes = np.concatenate([nodes, dry[keep]])
        values = np.concatenate([values, dry_values[keep]])
    return FemSystem(A, rhs, nodes, values)


def solve_system(system: FemSystem, x0: np.ndarray, cfg: FemStepConfig, what: str, stats: SolverStats | None = None):
    A, b = apply_dirichlet(system.matrix, system.rhs, system.constrained, system.values)
    x0 = np.array(x0, dtype=float)
    x0[system.constrained] = system.values
    x, report = solve_bicgstab(A, b, tol=cfg.tol, maxit=cfg.maxit, x0=x0)
    if stats is not None:
        stats.record(report)
    if not report.converged:
        raise SolverError(
            f"{what} solve did not converge: residual {report.residual:.3e} after {report.iterations} iterations",
            report,
        )
    return x


def step_theta(state: State, mesh: Mesh, cfg: FemStepConfig, stats: SolverStats | None = None) -> np.ndarray:
    space = fem_space(mesh)
    return solve_system(theta_system(state, space, cfg), state.theta, cfg, "theta", stats)


def update_cs(state: State, dt: float, p: PhysicalParameters) -> np.ndarray:
    return state.cs + dt * crystallization_rate(state.ci, state.theta, state.n, p)


def update_n(cs_new: np.ndarray, p: PhysicalParameters) -> np.ndarray:
    return porosity_from_cs(cs_new, p)


def step_ci(new: State, old: State, mesh: Mesh, cfg: FemStepConfig, stats: SolverStats | None = None) -> np.ndarray:
    """``new`` carries theta, c_s, n at the new level; its ``ci`` is ignored."""
    space = fem_space(mesh)
    return solve_system(ci_system(new, old, space, cfg), old.ci, cfg, "c_i", stats)


def step(state: State, mesh: Mesh, cfg: FemStepConfig, stats: SolverStats | None = None) -> State:
    theta = step_theta(state, mesh, cfg, stats)
    cs = update_cs(state, cfg.dt, cfg.params)
    n = update_n(cs, cfg.params)
    provisional = State(theta, state.ci, cs, n)
    ci = step_ci(provisional, state, mesh, cfg, stats)
    return State(theta, ci, cs, n)


def run_phase_fem(
    initial: State,
    mesh: Mesh,
    cfg: FemStepConfig,
    Nt: int,
    snapshots=(),
    stats: SolverStats | None = None,
    compiled: bool = True,
) -> list[Snapshot]:
    """March ``Nt`` steps; the final level is always the last snapshot.

    1D meshes go through the compiled tridiagonal kernel unless
    ``compiled=False``.
    """
    wanted = sorted(set(int(k) for k in snapshots))
    if wanted and (wanted[0] < 0 or wanted[-1] > Nt):
        raise ValueError(f"snapshot indices must lie in [0, {Nt}]")
    if len(initial) != mesh.num_nodes:
        raise ValueError(f"state has {len(initial)} nodes, mesh has {mesh.num_nodes}")
    out = []
    state = initial.copy()
    if wanted and wanted[0] == 0:
        out.append(Snapshot(0, 0.0, state.copy()))
    stops = [k for k in wanted if k > 0]
    if (not stops or stops[-1] != Nt) and not (Nt == 0 and out):
        stops.append(Nt)
    done = 0
    use_kernel = compiled and mesh.dim == 1
    for stop in stops:
        if use_kernel:
            from .fast1d import march_1d

            state = march_1d(state, mesh, cfg, stop - done, done)
        else:
            for _ in range(stop - done):
                state = step(state, mesh, cfg, stats)
        done = stop
        out.append(Snapshot(stop, stop * cfg.dt, state.copy()))
    return out
