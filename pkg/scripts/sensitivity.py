"""Perturbation scan of (gamma, Ks, Kw) on the two-phase FD column.

Desk scale by default (+-4 % by 2 %, phases shortened 100x). --full runs
the +-10 % by 1 % grid over the full durations (9261 long runs).
"""
import argparse
from pathlib import Path

from saltcryst.model import PhysicalParameters
from saltcryst.studies import PerturbationGrid, TwoPhaseScenario, oat_slices, sensitivity_scan, write_records_csv

ap = argparse.ArgumentParser()
ap.add_argument("--full", action="store_true")
ap.add_argument("--workers", type=int, default=1)
ap.add_argument("--out", default="runs/sensitivity_script")
args = ap.parse_args()

grid, sc = (PerturbationGrid(), TwoPhaseScenario()) if args.full else (PerturbationGrid.desk(), TwoPhaseScenario.desk())
recs = sensitivity_scan(grid, sc, workers=args.workers, full_scale_ok=args.full)
out = Path(args.out)
out.mkdir(parents=True, exist_ok=True)
write_records_csv(recs, out / "sensitivity.csv")
ok = [r for r in recs if r.ok]
print(f"{len(recs)} runs, {len(recs) - len(ok)} failed")
print(f"max |dN/N0|   = {max(abs(r.dN) for r in ok):.3e}")
print(f"max |dCs/Cs0| = {max(abs(r.dCs) for r in ok):.3e}")
p = PhysicalParameters()
for name, axis in oat_slices(recs, tuple(getattr(p, n) for n in grid.names)).items():
    print(name, " ".join(f"{r.dCs:+.3e}" for r in axis))
