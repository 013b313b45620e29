"""Command-line entry point: ``saltcryst <subcommand> <config> ...``."""
from __future__ import annotations

import argparse
import logging
import sys
import time
import traceback
from pathlib import Path

from . import __version__
from .config import ScenarioConfig, load_config
from .errors import ConfigError, SimulationError
from .fd1d import Phase
from .io import read_totals_csv, write_manifest, write_totals_csv
from .runner import resolve_output_dir, simulate
from .studies import (
    SCAN_PARAMETERS,
    ColumnScenario,
    PerturbationGrid,
    Startup,
    TwoPhaseScenario,
    calibrate_kw,
    convergence_space_study,
    convergence_time_study,
    oat_slices,
    scenario_totals,
    sensitivity_scan,
    write_records_csv,
)

log = logging.getLogger("saltcryst")

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2


def _floats(text: str) -> list[float]:
    try:
        vals = [float(t) for t in text.replace(";", ",").split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _startup(text: str) -> Startup:
    try:
        T0, dt = (float(t) for t in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected DURATION:DT, got {text!r}") from None
    return Startup(T0, dt)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="saltcryst", description=__doc__)
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, help):
        p = sub.add_parser(name, help=help)
        p.add_argument("config", help="scenario INI file")
        p.add_argument("-o", "--output", help="output directory (overrides SALTCRYST_OUTPUT_DIR and the file)")
        return p

    add("simulate", "run the configured phases and write snapshots")
    p = add("sensitivity", "perturbation scan of gamma, Ks, Kw (fd engine)")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--full-scale", action="store_true", help="allow scans larger than 1000 runs")
    p = add("calibrate", "pick Kw minimizing the time-averaged water discrepancy")
    p.add_argument("--reference", required=True, help="CSV with columns t,total_theta,total_cs")
    p.add_argument("--candidates", required=True, type=_floats)
    p.add_argument("--workers", type=int, default=1)
    p = add("make-reference", "write the totals time series of the scenario (for calibrate)")
    p.add_argument("--Kw", type=float, help="override the exchange coefficient")
    p = add("converge-time", "time-step refinement study (fem engine, dim 1)")
    p.add_argument("--dts", required=True, type=_floats)
    p.add_argument("--ref-dt", required=True, type=float)
    p.add_argument("--startup", type=_startup, help="resolve [0, DURATION] with step DT first")
    p.add_argument("--workers", type=int, default=1)
    p = add("converge-space", "mesh refinement study (fem engine, dim 1)")
    p.add_argument("--h0", required=True, type=float)
    p.add_argument("--levels", required=True, type=int)
    p.add_argument("--ref-h", type=float, help="reference spacing (default: finest h / 4)")
    p.add_argument("--common-start", type=float, default=0.0, help="share a resolved state from this time on")
    p.add_argument("--workers", type=int, default=1)
    return ap


def _require(cfg: ScenarioConfig, engine: str, what: str):
    if cfg.engine != engine or cfg.dim != 1:
        raise ConfigError(f"{what} needs engine = {engine} and dim = 1")


def _two_phase(cfg: ScenarioConfig, **over) -> TwoPhaseScenario:
    _require(cfg, "fd", "this command")
    kw = dict(
        H=cfg.H,
        dx=cfg.dx,
        dt=cfg.dt,
        T_imb=cfg.phase_duration(Phase.IMBIBITION),
        T_dry=cfg.phase_duration(Phase.DRYING) or 0.0,
        params=cfg.params,
        sample_every=cfg.totals_every or None,
        bottom_velocity=cfg.bottom_velocity,
    )
    kw.update(over)
    return TwoPhaseScenario(**kw)


def _column(cfg: ScenarioConfig) -> ColumnScenario:
    _require(cfg, "fem", "convergence studies")
    return ColumnScenario(cfg.H, cfg.phase_duration(Phase.IMBIBITION), cfg.params, cfg.ci_coefficients, cfg.mass_rule)


def cmd_sensitivity(cfg, args, out: Path, manifest: dict) -> int:
    grid = PerturbationGrid(step=cfg.sens_step, amplitude=cfg.sens_amplitude)
    sc = _two_phase(cfg, sample_every=None)
    records = sensitivity_scan(grid, sc, workers=args.workers, full_scale_ok=args.full_scale)
    write_records_csv(records, out / "sensitivity.csv")
    base = tuple(getattr(sc.params, n) for n in SCAN_PARAMETERS)
    for name, recs in oat_slices(records, base).items():
        write_records_csv(recs, out / f"oat_{name}.csv")
    ok = [r for r in records if r.ok]
    manifest["results"] = {
        "runs": len(records),
        "failed": len(records) - len(ok),
        "max_abs_dN": max(abs(r.dN) for r in ok),
        "max_abs_dCs": max(abs(r.dCs) for r in ok),
    }
    return EXIT_OK


def cmd_calibrate(cfg, args, out: Path, manifest: dict) -> int:
    ref = read_totals_csv(args.reference)
    res = calibrate_kw(args.candidates, ref, _two_phase(cfg), workers=args.workers)
    with open(out / "calibration.csv", "w") as fh:
        fh.write("Kw,M_theta\n")
        for k, m in res.table:
            fh.write(f"{k:.16e},{m:.16e}\n")
    manifest["results"] = {"Kw": res.Kw, "table": res.table, "failures": res.failures}
    return EXIT_OK


def cmd_make_reference(cfg, args, out: Path, manifest: dict) -> int:
    sc = _two_phase(cfg)
    if args.Kw is not None:
        sc = sc.with_params(Kw=args.Kw)
    write_totals_csv(scenario_totals(sc), out / "reference_totals.csv")
    manifest["results"] = {"file": "reference_totals.csv", "Kw": sc.params.Kw}
    return EXIT_OK


def _write_table(table, out: Path, manifest: dict):
    table.write_csv(out / "errors.csv")
    table.write_slopes_csv(out / "slopes.csv")
    manifest["results"] = {"slopes": table.slopes(), "values": table.values, "errors": table.errors}


def cmd_converge_time(cfg, args, out: Path, manifest: dict) -> int:
    Nx = int(round(cfg.H / cfg.dx))
    table = convergence_time_study(_column(cfg), args.dts, args.ref_dt, Nx, args.startup, args.workers)
    _write_table(table, out, manifest)
    return EXIT_OK


def cmd_converge_space(cfg, args, out: Path, manifest: dict) -> int:
    if args.levels < 1:
        raise ConfigError("--levels must be >= 1")
    hs = [args.h0 / 2**k for k in range(args.levels)]
    table = convergence_space_study(_column(cfg), hs, cfg.dt, args.ref_h, args.common_start, args.workers)
    _write_table(table, out, manifest)
    return EXIT_OK


COMMANDS = {
    "sensitivity": cmd_sensitivity,
    "calibrate": cmd_calibrate,
    "make-reference": cmd_make_reference,
    "converge-time": cmd_converge_time,
    "converge-space": cmd_converge_space,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed usage
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
    except (ConfigError, OSError) as exc:
        print(f"saltcryst: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = resolve_output_dir(cfg, args.output)
    if args.command == "simulate":
        manifest = simulate(cfg, out)
        if manifest["status"] != "ok":
            print(f"saltcryst: run failed: {manifest['failure']['message']} (see {out / 'manifest.json'})", file=sys.stderr)
            return EXIT_FAILED
        return EXIT_OK

    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(cfg.source)
    manifest = {"status": "running", "command": args.command, "version": __version__, "config": cfg.echo(), "argv": list(argv or sys.argv[1:])}
    t0 = time.perf_counter()
    code = EXIT_FAILED
    try:
        code = COMMANDS[args.command](cfg, args, out, manifest)
        manifest["status"] = "ok"
    except ConfigError as exc:
        manifest.update(status="failed", failure={"type": "ConfigError", "message": str(exc)})
        print(f"saltcryst: {exc}", file=sys.stderr)
        code = EXIT_USAGE
    except (SimulationError, ValueError, KeyError, OSError) as exc:
        manifest.update(status="failed", failure={"type": type(exc).__name__, "message": str(exc), "traceback": traceback.format_exc()})
        print(f"saltcryst: {args.command} failed: {exc}", file=sys.stderr)
        code = EXIT_FAILED
    finally:
        manifest["wall_time"] = time.perf_counter() - t0
        write_manifest(manifest, out / "manifest.json")
    return code


if __name__ == "__main__":
    sys.exit(main())
