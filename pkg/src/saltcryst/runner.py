"""Run one configured scenario end to end and record what happened."""
from __future__ import annotations

import logging
import os
import platform
import time
import traceback
from pathlib import Path

import numpy as np

from . import __version__
from .config import ScenarioConfig
from .errors import SimulationError
from .fd1d import FDRun, Grid1D, Phase, Snapshot, run_phase_fd
from .fem import FemStepConfig, SolverStats, imbibition_state, run_phase_fem
from .io import write_csv_snapshot, write_manifest, write_totals_csv, write_vtk_snapshot
from .mesh import build_interval, build_prism, build_strip
from .metrics import average_crystal, average_porosity, totals_series

log = logging.getLogger(__name__)

OUTPUT_ENV = "SALTCRYST_OUTPUT_DIR"


def resolve_output_dir(cfg: ScenarioConfig, override=None) -> Path:
    """Command-line override, then the environment variable, then the file."""
    return Path(override or os.environ.get(OUTPUT_ENV) or cfg.output_dir)


def build_geometry(cfg: ScenarioConfig):
    if cfg.engine == "fd":
        return Grid1D.from_spacing(cfg.H, cfg.dx)
    if cfg.dim == 1:
        return build_interval(cfg.H, int(round(cfg.H / cfg.dx)))
    if cfg.dim == 2:
        return build_strip(cfg.L, cfg.H, cfg.hx, cfg.hz, pattern=cfg.mesh_pattern)
    return build_prism(cfg.L, cfg.H, cfg.h)


def _phase_steps(cfg: ScenarioConfig, T0: float, T: float, extra_every: float):
    """Step indices inside a phase that starts at global time T0."""
    n = int(round(T / cfg.dt))
    want = set()
    for t in cfg.snapshots:
        if T0 - 1e-9 <= t <= T0 + T + 1e-9:
            want.add(int(round((t - T0) / cfg.dt)))
    if extra_every > 0:
        m = int(round(extra_every / cfg.dt))
        k0 = -(-int(round(T0 / cfg.dt)) // m) * m  # first global multiple of m >= T0
        want.update(k - int(round(T0 / cfg.dt)) for k in range(k0, int(round((T0 + T) / cfg.dt)) + 1, m))
    return n, sorted(k for k in want if 0 <= k <= n)


def _run_phases(cfg: ScenarioConfig, geometry, stats: SolverStats, progress):
    """Yield (phase, snapshots with global times) for every phase in order."""
    state = None
    T0 = 0.0
    for phase, T in cfg.phases:
        n, wanted = _phase_steps(cfg, T0, T, cfg.totals_every)
        t_start = time.perf_counter()
        if cfg.engine == "fd":
            run = FDRun(geometry, cfg.dt, n, phase, cfg.params, state=state, bottom_velocity=cfg.bottom_velocity)
            snaps = run_phase_fd(run, [0, *wanted])
        else:
            init = imbibition_state(geometry, cfg.params) if state is None else state
            fcfg = FemStepConfig(
                dt=cfg.dt, phase=phase, params=cfg.params, tol=cfg.tol,
                ci_coefficients=cfg.ci_coefficients, mass_rule=cfg.mass_rule,
            )
            snaps = run_phase_fem(init, geometry, fcfg, n, [0, *wanted], stats)
        progress.append({"phase": phase.value, "steps": n, "dt": cfg.dt, "T": T, "wall_time": time.perf_counter() - t_start})
        state = snaps[-1].state
        yield phase, [Snapshot(s.step, T0 + s.time, s.state) for s in snaps]
        T0 += T


def simulate(cfg: ScenarioConfig, out_dir) -> dict:
    """Run every phase, write requested outputs, and always leave a manifest.

    Returns the manifest; ``manifest["status"]`` is "ok" or "failed".
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(cfg.source)
    geometry = build_geometry(cfg)
    stats = SolverStats()
    phases, outputs = [], []
    manifest = {
        "status": "running",
        "engine": cfg.engine,
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "config": cfg.echo(),
        "phases": phases,
        "outputs": outputs,
    }
    write_manifest(manifest, out / "manifest.json")
    t_start = time.perf_counter()
    series = []
    snapshot_times = set(cfg.snapshots)
    try:
        for phase, snaps in _run_phases(cfg, geometry, stats, phases):
            for s in snaps:
                if not series or s.time > series[-1].time:
                    series.append(s)
                due = [t for t in snapshot_times if abs(s.time - t) <= 1e-9 * max(1.0, t)]
                if not due:
                    continue
                # the phase handoff is written once, as the end of the earlier phase
                snapshot_times.difference_update(due)
                stem = f"{phase.value}_t{s.time:014.3f}"
                if "csv" in cfg.formats:
                    write_csv_snapshot(s.state, geometry, out / f"{stem}.csv")
                    outputs.append({"file": f"{stem}.csv", "phase": phase.value, "time": s.time})
                if "vtk" in cfg.formats:
                    write_vtk_snapshot(s.state, geometry, out / f"{stem}.vtk")
                    outputs.append({"file": f"{stem}.vtk", "phase": phase.value, "time": s.time})
        write_totals_csv(totals_series(series, geometry), out / "totals.csv")
        outputs.append({"file": "totals.csv"})
        final = series[-1].state
        manifest["final"] = {
            "time": series[-1].time,
            "average_porosity": average_porosity(final, geometry),
            "average_crystal": average_crystal(final, geometry),
            "porosity_defect": final.porosity_defect(cfg.params),
        }
        manifest["status"] = "ok"
    except (SimulationError, ValueError, OSError) as exc:
        manifest["status"] = "failed"
        manifest["failure"] = {
            "type": type(exc).__name__,
            "message": str(exc),
            "step": getattr(exc, "step", None),
            "traceback": traceback.format_exc(),
        }
        log.error("run failed: %s", exc)
    finally:
        manifest["wall_time"] = time.perf_counter() - t_start
        if cfg.engine == "fem":
            manifest["solver"] = stats.as_dict()
        write_manifest(manifest, out / "manifest.json")
    return manifest
