"""Batch experiments: sensitivity scan, OAT slices, K_w calibration and
time/space convergence studies.

Every driver fans its independent runs out over a bounded process pool
(``workers``) and aggregates in a fixed, sorted order, so results do not
depend on scheduling.
"""
from __future__ import annotations

import csv
import itertools
import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import SimulationError
from .fd1d import FDRun, Grid1D, Phase, Snapshot, run_phase_fd
from .fem import FemStepConfig, imbibition_state, run_phase_fem
from .io import FMT, read_totals_csv, write_totals_csv  # noqa: F401  (re-exported)
from .mesh import build_interval, build_strip
from .metrics import (
    TotalsSeries,
    average_crystal,
    average_porosity,
    l2_error,
    relative_errors,
    totals_series,
)
from .model import FIELD_NAMES, PhysicalParameters, State

log = logging.getLogger(__name__)

SCAN_PARAMETERS = ("gamma", "Ks", "Kw")


def _map(fn, items, workers: int = 1):
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))


def _steps(T: float, dt: float, what: str = "T") -> int:
    n = int(round(T / dt))
    if n < 0 or abs(n * dt - T) > 1e-9 * max(abs(T), dt):
        raise ValueError(f"dt = {dt} does not divide {what} = {T}")
    return n


# ---------------------------------------------------------------- scenarios


@dataclass(frozen=True)
class TwoPhaseScenario:
    """1D imbibition followed by drying, marched with the FD scheme.

    The default durations are the full-length experiment (10 days + 5 hours);
    :meth:`desk` shrinks both by a factor 100.
    """

    H: float = 5.85
    dx: float = 0.15
    dt: float = 0.25
    T_imb: float = 864000.0
    T_dry: float = 18000.0
    params: PhysicalParameters = field(default_factory=PhysicalParameters)
    sample_every: float | None = None  # spacing of the totals time grid, seconds
    bottom_velocity: str = "zero"

    def __post_init__(self):
        if not (self.T_imb > 0 and self.T_dry >= 0):
            raise ValueError("phase durations must be positive")
        _steps(self.T_imb, self.dt, "T_imb")
        _steps(self.T_dry, self.dt, "T_dry")
        if self.sample_every is not None:
            _steps(self.sample_every, self.dt, "sample_every")

    @classmethod
    def desk(cls, **kw) -> "TwoPhaseScenario":
        kw.setdefault("T_imb", 8640.0)
        kw.setdefault("T_dry", 180.0)
        return cls(**kw)

    @property
    def T_end(self) -> float:
        return self.T_imb + self.T_dry

    @property
    def grid(self) -> Grid1D:
        return Grid1D.from_spacing(self.H, self.dx)

    def with_params(self, **changes) -> "TwoPhaseScenario":
        from dataclasses import replace

        return replace(self, params=self.params.replace(**changes))


def run_two_phase(sc: TwoPhaseScenario) -> list[Snapshot]:
    """Snapshots on the scenario's sampling grid, times measured from the
    start of imbibition; the final level is always included."""
    grid = sc.grid
    n_imb = _steps(sc.T_imb, sc.dt)
    n_dry = _steps(sc.T_dry, sc.dt)
    every = _steps(sc.sample_every, sc.dt) if sc.sample_every else None
    imb = FDRun(grid, sc.dt, n_imb, Phase.IMBIBITION, sc.params, bottom_velocity=sc.bottom_velocity)
    snaps = run_phase_fd(imb, range(0, n_imb + 1, every) if every else ())
    if not every:
        snaps = snaps[-1:]
    if n_dry == 0:
        return snaps
    dry = FDRun(grid, sc.dt, n_dry, Phase.DRYING, sc.params, state=imb.state.copy(), bottom_velocity=sc.bottom_velocity)
    # drying indices continue the global step count
    wanted = [k - n_imb for k in range(0, n_imb + n_dry + 1, every) if k > n_imb] if every else []
    for s in run_phase_fd(dry, wanted):
        snaps.append(Snapshot(s.step + n_imb, (s.step + n_imb) * sc.dt, s.state))
    return snaps


# -------------------------------------------------------------- sensitivity


@dataclass(frozen=True)
class PerturbationGrid:
    """Relative perturbations ``k * step`` for |k * step| <= amplitude."""

    step: float = 0.01
    amplitude: float = 0.10
    names: tuple[str, ...] = SCAN_PARAMETERS

    def __post_init__(self):
        if not (self.step > 0 and self.amplitude >= 0):
            raise ValueError("step must be positive and amplitude nonnegative")
        k = self.amplitude / self.step
        if abs(k - round(k)) > 1e-9:
            raise ValueError(f"amplitude {self.amplitude} is not a multiple of step {self.step}")

    @classmethod
    def desk(cls) -> "PerturbationGrid":
        return cls(step=0.02, amplitude=0.04)

    @property
    def offsets(self) -> list[float]:
        K = int(round(self.amplitude / self.step))
        return [k * self.step for k in range(-K, K + 1)]

    def values(self, base: PhysicalParameters) -> dict[str, list[float]]:
        # k = 0 gives exactly the baseline value
        return {name: [getattr(base, name) * (1.0 + r) for r in self.offsets] for name in self.names}

    def triplets(self, base: PhysicalParameters) -> list[tuple[float, ...]]:
        v = self.values(base)
        return list(itertools.product(*(v[name] for name in self.names)))


@dataclass(frozen=True)
class SensitivityRecord:
    triplet: tuple[float, ...]
    N: float
    Cs: float
    dN: float = math.nan  # relative deviation of the average porosity
    dCs: float = math.nan  # relative deviation of the average crystal content
    status: str = "ok"

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def _sensitivity_job(args):
    sc, names, triplet = args
    try:
        final = run_two_phase(sc.with_params(**dict(zip(names, triplet))))[-1].state
        return triplet, average_porosity(final, sc.grid), average_crystal(final, sc.grid), "ok"
    except (SimulationError, ValueError) as exc:
        return triplet, math.nan, math.nan, f"failed: {type(exc).__name__}: {exc}"


def sensitivity_scan(
    grid: PerturbationGrid, scenario: TwoPhaseScenario, workers: int = 1, full_scale_ok: bool = False
) -> list[SensitivityRecord]:
    """One two-phase run per triplet; deviations of N and C_s at T_end.

    Failed runs are kept with their reason; the scan never aborts.
    Records are sorted by triplet.
    """
    n = len(grid.triplets(scenario.params))
    if n > 1000 and not full_scale_ok:
        raise ValueError(f"{n} triplets requested; pass full_scale_ok=True to run a scan this large")
    if n > 1000:
        warnings.warn(f"full-scale sensitivity scan: {n} two-phase runs", RuntimeWarning, stacklevel=2)
    base = tuple(getattr(scenario.params, name) for name in grid.names)
    jobs = [(scenario, grid.names, t) for t in sorted(grid.triplets(scenario.params))]
    raw = {r[0]: r for r in _map(_sensitivity_job, jobs, workers)}
    _, N0, C0, status0 = raw[base]
    if status0 != "ok":
        raise SimulationError(f"baseline run failed: {status0}")
    out = []
    for t in sorted(raw):
        _, N, Cs, status = raw[t]
        if status != "ok":
            log.warning("triplet %s %s", t, status)
            out.append(SensitivityRecord(t, N, Cs, status=status))
            continue
        dCs = (Cs - C0) / C0 if C0 != 0 else math.nan
        out.append(SensitivityRecord(t, N, Cs, (N - N0) / N0, dCs))
    return out


def oat_slices(records, base: tuple[float, ...], names=SCAN_PARAMETERS) -> dict[str, list[SensitivityRecord]]:
    """Records where at most one parameter leaves the baseline, per axis,
    sorted by that parameter. The baseline record belongs to every slice."""
    by_triplet = {r.triplet: r for r in records}
    if tuple(base) not in by_triplet:
        raise KeyError(f"baseline triplet {tuple(base)} missing from the scan")
    out = {}
    for i, name in enumerate(names):
        axis = [r for r in records if all(r.triplet[j] == base[j] for j in range(len(names)) if j != i)]
        if len(axis) < 2:
            raise KeyError(f"no off-baseline points along {name}")
        out[name] = sorted(axis, key=lambda r: r.triplet[i])
    return out


def write_records_csv(records, path, names=SCAN_PARAMETERS) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*names, "N", "Cs", "dN", "dCs", "status"])
        for r in sorted(records, key=lambda r: r.triplet):
            w.writerow([*(FMT % v for v in r.triplet), *(FMT % v for v in (r.N, r.Cs, r.dN, r.dCs)), r.status])


# -------------------------------------------------------------- calibration


def scenario_totals(scenario: TwoPhaseScenario) -> TotalsSeries:
    return totals_series(run_two_phase(scenario), scenario.grid)


def _calibration_job(args):
    scenario, Kw = args
    try:
        return Kw, scenario_totals(scenario.with_params(Kw=Kw)), None
    except (SimulationError, ValueError) as exc:
        return Kw, None, f"{type(exc).__name__}: {exc}"


@dataclass
class CalibrationResult:
    Kw: float
    table: list[tuple[float, float]]  # (candidate, M_theta), sorted by candidate
    failures: dict[float, str] = field(default_factory=dict)


def calibrate_kw(candidates, reference: TotalsSeries, scenario: TwoPhaseScenario, workers: int = 1) -> CalibrationResult:
    """Minimize the time-averaged water-content discrepancy over ``candidates``.

    Ties go to the smallest K_w. Failed candidates get M_theta = inf.
    """
    cands = sorted(set(float(k) for k in candidates))
    if not cands:
        raise ValueError("no K_w candidates")
    table, failures = [], {}
    for Kw, series, err in _map(_calibration_job, [(scenario, k) for k in cands], workers):
        if err is not None:
            failures[Kw] = err
            table.append((Kw, math.inf))
            continue
        with warnings.catch_warnings():
            # e_s at t = 0 has a zero denominator; only M_theta is used here
            warnings.simplefilter("ignore", RuntimeWarning)
            _, _, M = relative_errors(series, reference)
        table.append((Kw, M))
    best = min(m for _, m in table)
    winners = [k for k, m in table if m == best]
    if len(winners) > 1:
        log.info("M_theta tie between %s; taking the smallest K_w", winners)
    return CalibrationResult(winners[0], table, failures)


# -------------------------------------------------------------- convergence


@dataclass(frozen=True)
class ColumnScenario:
    """1D imbibition column for the FEM convergence studies."""

    H: float
    T: float
    params: PhysicalParameters = field(default_factory=PhysicalParameters)
    ci_coefficients: str = "new"
    mass_rule: str = "lumped"

    def config(self, dt: float) -> FemStepConfig:
        return FemStepConfig(
            dt=dt, phase=Phase.IMBIBITION, params=self.params, ci_coefficients=self.ci_coefficients, mass_rule=self.mass_rule
        )


@dataclass
class ConvergenceTable:
    parameter: str  # "dt" or "h"
    values: np.ndarray
    errors: np.ndarray  # (levels, 4), columns in FIELD_NAMES order

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        e = np.asarray(self.errors, dtype=float).reshape(len(v), len(FIELD_NAMES))
        order = np.argsort(v)[::-1]
        self.values, self.errors = v[order], e[order]
        if np.any(np.diff(self.values) >= 0):
            raise ValueError("refinement values must be distinct")

    def slopes(self) -> dict[str, float]:
        """Least-squares slope of log E against log(parameter), per field."""
        x = np.log(self.values)
        out = {}
        for i, name in enumerate(FIELD_NAMES):
            e = self.errors[:, i]
            ok = e > 0
            out[name] = float(np.polyfit(x[ok], np.log(e[ok]), 1)[0]) if ok.sum() >= 2 else math.nan
        return out

    def local_orders(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.log(self.errors[:-1] / self.errors[1:]) / np.log(self.values[:-1] / self.values[1:])[:, None]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([self.parameter, *(f"E_{f}" for f in FIELD_NAMES)])
            for v, e in zip(self.values, self.errors):
                w.writerow([FMT % v, *(FMT % x for x in e)])

    def write_slopes_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["field", "slope"])
            for name, s in self.slopes().items():
                w.writerow([name, FMT % s])


@dataclass(frozen=True)
class Startup:
    """Resolve [0, duration] with step ``dt`` before the study runs branch off."""

    duration: float
    dt: float


def _fem_job(args):
    sc, N, dt, start, t0 = args
    mesh = build_interval(sc.H, N)
    init = imbibition_state(mesh, sc.params) if start is None else start
    return run_phase_fem(init, mesh, sc.config(dt), _steps(sc.T - t0, dt, "T - t0"))[-1].state


def _errors(run: State, ref: State, mesh, ref_mesh=None) -> list[float]:
    return [l2_error(getattr(run, f), getattr(ref, f), mesh, ref_mesh) for f in FIELD_NAMES]


def convergence_time_study(
    scenario: ColumnScenario, dt_list, dt_ref: float, Nx: int, startup: Startup | None = None, workers: int = 1
) -> ConvergenceTable:
    """E(v) at the final time for each dt against a dt_ref run on the same mesh.

    With ``startup`` every run (reference included) continues from one
    state computed on [0, startup.duration] with step startup.dt.
    """
    dts = [float(d) for d in dt_list]
    t0, start = 0.0, None
    if startup is not None:
        t0 = startup.duration
        mesh = build_interval(scenario.H, Nx)
        start = run_phase_fem(
            imbibition_state(mesh, scenario.params), mesh, scenario.config(startup.dt), _steps(t0, startup.dt, "startup")
        )[-1].state
    for d in [*dts, dt_ref]:
        _steps(scenario.T - t0, d, "T - startup")
    jobs = [(scenario, Nx, d, start, t0) for d in [dt_ref, *dts]]
    ref, *runs = _map(_fem_job, jobs, workers)
    mesh = build_interval(scenario.H, Nx)
    return ConvergenceTable("dt", dts, [_errors(r, ref, mesh) for r in runs])


def convergence_space_study(
    scenario: ColumnScenario,
    h_list,
    dt: float,
    h_ref: float | None = None,
    common_start: float = 0.0,
    workers: int = 1,
) -> ConvergenceTable:
    """E(v) at the final time for each h against a finer nested reference.

    The reference is restricted to the coarse nodes by sampling. With
    ``common_start > 0`` the reference mesh is marched alone up to that time
    and every level starts from its nodal samples, so that all levels share
    the same (resolved) data instead of mesh-dependent discontinuous data.
    """
    hs = [float(h) for h in h_list]
    h_ref = min(hs) / 4 if h_ref is None else float(h_ref)
    N_ref = _steps(scenario.H, h_ref, "H")
    Ns = [_steps(scenario.H, h, "H") for h in hs]
    for N in Ns:
        if N < 1 or N_ref % N:
            raise ValueError(f"mesh with {N} elements is not nested in the {N_ref}-element reference")
    ref_mesh = build_interval(scenario.H, N_ref)
    starts = {N: None for N in Ns}
    ref_start = None
    if common_start > 0:
        s0 = run_phase_fem(
            imbibition_state(ref_mesh, scenario.params), ref_mesh, scenario.config(dt), _steps(common_start, dt, "common_start")
        )[-1].state
        ref_start = s0
        for N in Ns:
            k = N_ref // N
            starts[N] = State(*(getattr(s0, f)[::k].copy() for f in FIELD_NAMES))
    jobs = [(scenario, N_ref, dt, ref_start, common_start)] + [(scenario, N, dt, starts[N], common_start) for N in Ns]
    ref, *runs = _map(_fem_job, jobs, workers)
    errors = [_errors(r, ref, build_interval(scenario.H, N), ref_mesh) for r, N in zip(runs, Ns)]
    return ConvergenceTable("h", [scenario.H / N for N in Ns], errors)


# -------------------------------------------------------- cross-validation


@dataclass(frozen=True)
class CrossLevel:
    hz: float
    dt: float
    differences: dict[str, float]  # L2 distance of the central FEM column to FD
    lateral: float  # max spread of any field across one horizontal row


def _cross_job(args):
    H, L, hx, T, hz, dt, params, bottom_velocity = args
    grid = Grid1D.from_spacing(H, hz)
    run = FDRun(grid, dt, _steps(T, dt), Phase.IMBIBITION, params, bottom_velocity=bottom_velocity)
    fd = run_phase_fd(run)[-1].state
    mesh = build_strip(L, H, hx, hz, pattern="crossed")
    cfg = FemStepConfig(dt=dt, phase=Phase.IMBIBITION, params=params)
    fem = run_phase_fem(imbibition_state(mesh, params), mesh, cfg, _steps(T, dt))[-1].state
    x, z = mesh.nodes[:, 0], mesh.nodes[:, 1]
    rows = np.round(z / hz).astype(int)
    on_grid = np.abs(rows * hz - z) <= 1e-9 * H
    axis = np.flatnonzero(on_grid & (np.abs(x) <= 1e-12))
    axis = axis[np.argsort(z[axis])]
    if len(axis) != grid.Nx + 1:
        raise ValueError("the strip has no node column on x = 0")
    diffs = {f: l2_error(getattr(fem, f)[axis], getattr(fd, f), grid) for f in FIELD_NAMES}
    spread = 0.0
    for r in np.unique(rows[on_grid]):
        sel = on_grid & (rows == r)
        for f in FIELD_NAMES:
            v = getattr(fem, f)[sel]
            spread = max(spread, float(v.max() - v.min()))
    return CrossLevel(hz, dt, diffs, spread)


def cross_validate(
    levels, H: float = 1.2, L: float = 0.15, hx: float = 0.075, T: float = 1200.0,
    params: PhysicalParameters | None = None, bottom_velocity: str = "zero", workers: int = 1,
) -> list[CrossLevel]:
    """1D FD column against a laterally uniform 2D FEM strip, imbibition only.

    ``levels`` are (hz, dt) pairs; the FD grid uses dx = hz and the same dt.
    """
    params = params or PhysicalParameters()
    jobs = [(H, L, hx, T, float(hz), float(dt), params, bottom_velocity) for hz, dt in levels]
    return _map(_cross_job, jobs, workers)
