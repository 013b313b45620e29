"""Explicit 1D finite-difference scheme for imbibition and drying.

Forward Euler in time; conservative three-point operator for the moisture
equation; central convection plus an upwind-type |V| viscosity for the ions.
Boundary values are closed after every interior update.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import BlowUpError, DivisionDegeneracyError, PoreCloggingError
from .model import PhysicalParameters, State, crystallization_rate, eval_B, porosity_from_cs

log = logging.getLogger(__name__)

THETA_FLOOR = 1e-14
# "zero": V_0 = 0 as in the reference scheme. "one-sided": forward
# difference at the bottom node, which lets ions enter by advection.
BOTTOM_VELOCITY = ("zero", "one-sided")


class Phase(str, enum.Enum):
    IMBIBITION = "imbibition"
    DRYING = "drying"


@dataclass(frozen=True)
class Grid1D:
    H: float
    Nx: int

    def __post_init__(self):
        if self.Nx < 2:
            raise ValueError(f"Nx must be >= 2, got {self.Nx}")
        if not self.H > 0:
            raise ValueError(f"H must be positive, got {self.H}")

    @property
    def dx(self) -> float:
        return self.H / self.Nx

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.Nx + 1) * self.dx

    @classmethod
    def from_spacing(cls, H: float, dx: float) -> "Grid1D":
        Nx = int(round(H / dx))
        if abs(Nx * dx - H) > 1e-9 * H:
            raise ValueError(f"H = {H} is not an integer multiple of dx = {dx}")
        return cls(H, Nx)


@dataclass
class FDRun:
    grid: Grid1D
    dt: float
    Nt: int
    phase: Phase
    params: PhysicalParameters = field(default_factory=PhysicalParameters)
    state: State | None = None
    bottom_velocity: str = "zero"

    def __post_init__(self):
        if self.bottom_velocity not in BOTTOM_VELOCITY:
            raise ValueError(f"bottom_velocity must be one of {BOTTOM_VELOCITY}, got {self.bottom_velocity!r}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.Nt < 0:
            raise ValueError(f"Nt must be >= 0, got {self.Nt}")
        self.phase = Phase(self.phase)
        if self.state is None:
            if self.phase is not Phase.IMBIBITION:
                raise ValueError("a drying run needs an explicit initial state")
            self.state = initial_state(self.grid, self.params)
        if len(self.state) != self.grid.Nx + 1:
            raise ValueError(f"state has {len(self.state)} nodes, grid has {self.grid.Nx + 1}")


def initial_state(grid: Grid1D, p: PhysicalParameters) -> State:
    """Discrete imbibition initial data: wet salty node 0, ambient elsewhere."""
    bottom = np.zeros(grid.Nx + 1, dtype=bool)
    bottom[0] = True
    theta = np.where(bottom, p.n0, p.theta_bar)
    ci = np.where(bottom, p.ci_bar, 0.0)
    return State(theta, ci, np.zeros(grid.Nx + 1), np.full(grid.Nx + 1, p.n0))


def delta_j(r, w, j: int, dx: float) -> float:
    """Three-point approximation of d/dx(r dw/dx) at interior node ``j``."""
    N = len(w) - 1
    if not 1 <= j <= N - 1:
        raise IndexError(f"delta_j needs an interior index 1..{N - 1}, got {j}")
    return ((r[j] + r[j + 1]) * (w[j + 1] - w[j]) - (r[j - 1] + r[j]) * (w[j] - w[j - 1])) / (2.0 * dx * dx)


def delta_interior(r: np.ndarray, w: np.ndarray, dx: float) -> np.ndarray:
    """:func:`delta_j` for all interior nodes at once."""
    return ((r[1:-1] + r[2:]) * (w[2:] - w[1:-1]) - (r[:-2] + r[1:-1]) * (w[1:-1] - w[:-2])) / (2.0 * dx * dx)


def _check_porosity(n, step=None):
    if np.any(~(n > 0.0)):
        where = f" at step {step}" if step is not None else ""
        raise PoreCloggingError(f"non-positive porosity{where} (node {int(np.argmin(n))})")


def discrete_velocity(state: State, grid: Grid1D, p: PhysicalParameters, bottom: str = "zero") -> np.ndarray:
    """Nodal Darcy-type velocity V = (n/n0)^2 dB/dx.

    V_0 = 0 (or a forward difference with ``bottom="one-sided"``), central
    differences inside, first-order backward difference at the top node.
    """
    _check_porosity(state.n)
    B = eval_B(state.theta / state.n, p.law)
    return _velocity(B, (state.n / p.n0) ** 2, grid.dx, bottom == "one-sided")


def _velocity(B, r, dx, onesided=False):
    V = np.zeros_like(B)
    V[1:-1] = (B[2:] - B[:-2]) * r[1:-1] / (2.0 * dx)
    V[-1] = (B[-1] - B[-2]) * r[-1] / dx
    if onesided:
        V[0] = (B[1] - B[0]) * r[0] / dx
    return V


def robin_top(theta_m1: float, theta_m2: float, dx: float, p: PhysicalParameters) -> float:
    """Second-order one-sided closure of d(theta)/dx = Kw (theta_bar - theta) at x = H."""
    return (4.0 * theta_m1 - theta_m2 + 2.0 * dx * p.Kw * p.theta_bar) / (3.0 + 2.0 * dx * p.Kw)


def _step(
    state: State, grid: Grid1D, dt: float, phase: Phase, p: PhysicalParameters, step: int | None, onesided=False
) -> State:
    theta, ci, cs, n = state.theta, state.ci, state.cs, state.n
    dx = grid.dx
    _check_porosity(n, step)

    B = eval_B(theta / n, p.law)
    r = (n / p.n0) ** 2
    theta_new = theta.copy()
    theta_new[1:-1] = theta[1:-1] + dt * delta_interior(r, B, dx)

    rate = crystallization_rate(ci, theta, n, p)
    cs_new = cs + dt * rate
    n_new = porosity_from_cs(cs_new, p)

    V = _velocity(B, r, dx, onesided)
    aV = np.abs(V)

    denom = theta_new[1:-1]
    if np.any(denom <= THETA_FLOOR):
        j = 1 + int(np.argmin(denom))
        where = f" at step {step}" if step is not None else ""
        raise DivisionDegeneracyError(f"liquid fraction {denom[j - 1]:.3e} <= {THETA_FLOOR} at node {j}{where}")
    numer = (
        theta[1:-1] * ci[1:-1]
        + dt / (2.0 * dx) * (aV[2:] * ci[2:] - 2.0 * aV[1:-1] * ci[1:-1] + aV[:-2] * ci[:-2])
        + dt * delta_interior(p.D * theta, ci, dx)
        + dt / (2.0 * dx) * (V[2:] * ci[2:] - V[:-2] * ci[:-2])
        - dt * rate[1:-1]
    )
    ci_new = ci.copy()
    ci_new[1:-1] = numer / denom

    if phase is Phase.IMBIBITION:
        theta_new[0] = p.n0
        theta_new[-1] = robin_top(theta_new[-2], theta_new[-3], dx, p)
        ci_new[0] = p.ci_bar
    else:
        theta_new[0] = 0.0
        theta_new[-1] = 0.0
        ci_new[0] = (4.0 * ci_new[1] - ci_new[2]) / 3.0
    ci_new[-1] = (4.0 * ci_new[-2] - ci_new[-3]) / 3.0

    _monitor(theta, theta_new, ci_new, cs_new, grid, p, step)
    return State(theta_new, ci_new, cs_new, n_new)


def cfl_hint(grid: Grid1D, p: PhysicalParameters) -> float:
    """Heuristic explicit step bound dx^2 n0 / (2 c) from max B' = c."""
    return grid.dx**2 * p.n0 / (2.0 * p.c)


def _monitor(theta, theta_new, ci_new, cs_new, grid, p, step):
    where = f"step {step}" if step is not None else "this step"
    hint = f"try dt <= {cfl_hint(grid, p):.4g} s (dx^2 n0 / 2c)"
    if not (np.all(np.isfinite(theta_new)) and np.all(np.isfinite(ci_new)) and np.all(np.isfinite(cs_new))):
        raise BlowUpError(f"non-finite values at {where}; {hint}", step=step)
    jump = float(np.max(np.abs(theta_new[1:-1] - theta[1:-1]))) if len(theta) > 2 else 0.0
    if jump > p.n0:
        raise BlowUpError(f"moisture update {jump:.3g} exceeds n0 at {where}; {hint}", step=step)


def step_imbibition(run: FDRun, step: int | None = None) -> State:
    """Advance ``run.state`` by one step with imbibition boundary closure."""
    return _step(run.state, run.grid, run.dt, Phase.IMBIBITION, run.params, step, run.bottom_velocity == "one-sided")


def step_drying(run: FDRun, step: int | None = None) -> State:
    """Advance ``run.state`` by one step with the dry-surface closure."""
    return _step(run.state, run.grid, run.dt, Phase.DRYING, run.params, step, run.bottom_velocity == "one-sided")


@dataclass
class Snapshot:
    step: int
    time: float
    state: State


def run_phase_fd(run: FDRun, snapshots=(), observer=None, compiled: bool = True) -> list[Snapshot]:
    """March ``run`` for ``Nt`` steps and return the requested snapshots.

    The final state is always the last element; ``run.state`` is left at the
    final level. ``observer(k, state)`` is called after every accepted step
    and forces the pure-numpy path; otherwise the compiled kernel marches
    between snapshot indices.
    """
    wanted = sorted(set(int(k) for k in snapshots))
    if wanted and (wanted[0] < 0 or wanted[-1] > run.Nt):
        raise ValueError(f"snapshot indices must lie in [0, {run.Nt}]")
    out = []
    if wanted and wanted[0] == 0:
        out.append(Snapshot(0, 0.0, run.state.copy()))
    if observer is None and compiled:
        stops = [k for k in wanted if k > 0]
        if (not stops or stops[-1] != run.Nt) and not (run.Nt == 0 and out):
            stops.append(run.Nt)
        done = 0
        for stop in stops:
            _march_compiled(run, stop - done, done)
            done = stop
            out.append(Snapshot(stop, stop * run.dt, run.state.copy()))
        return out
    wanted_set = set(wanted)
    state = run.state
    for k in range(1, run.Nt + 1):
        state = _step(state, run.grid, run.dt, run.phase, run.params, k, run.bottom_velocity == "one-sided")
        run.state = state
        if observer is not None:
            observer(k, state)
        if k in wanted_set:
            out.append(Snapshot(k, k * run.dt, state.copy()))
    if not out or out[-1].step != run.Nt:
        out.append(Snapshot(run.Nt, run.Nt * run.dt, state.copy()))
    return out


def _march_compiled(run: FDRun, nsteps: int, offset: int) -> None:
    from . import _fdkernel as K

    if nsteps <= 0:
        return
    p = run.params
    prm = np.array([p.n0, p.c, p.a, p.D, p.theta_bar, p.ci_bar, p.gamma, p.Ks, p.Kw, p.c_bar, p.Kbar])
    s = run.state.copy()
    status, done = K.march(
        s.theta,
        s.ci,
        s.cs,
        s.n,
        run.grid.dx,
        run.dt,
        nsteps,
        run.phase is Phase.DRYING,
        run.bottom_velocity == "one-sided",
        prm,
        THETA_FLOOR,
    )
    step = offset + done + (1 if status in (K.DIVISION,) else 0)
    hint = f"try dt <= {cfl_hint(run.grid, p):.4g} s (dx^2 n0 / 2c)"
    if status == K.OK:
        run.state = s
    elif status == K.DIVISION:
        raise DivisionDegeneracyError(f"liquid fraction fell below {THETA_FLOOR} at step {step}")
    elif status == K.CLOG:
        raise PoreCloggingError(f"non-positive porosity at step {offset + done}")
    elif status == K.JUMP:
        raise BlowUpError(f"moisture update exceeds n0 at step {step}; {hint}", step=step)
    else:
        raise BlowUpError(f"non-finite values at step {step}; {hint}", step=step)
