"""Long 2D bar and 3D prism runs through the CLI, then a short summary.

    python3 scripts/long_runs.py bar2d     # tens of minutes
    python3 scripts/long_runs.py prism3d   # about an hour
"""
import argparse
import json
from pathlib import Path

from saltcryst.cli import main
from saltcryst.io import read_csv_snapshot
from saltcryst.model import PhysicalParameters

SCENARIOS = {"bar2d": "bar2d_two_phase.ini", "prism3d": "prism3d.ini", "prism3d_short": "prism3d_short.ini"}

ap = argparse.ArgumentParser()
ap.add_argument("which", choices=sorted(SCENARIOS))
ap.add_argument("-o", "--output")
args = ap.parse_args()

cfg = Path(__file__).resolve().parents[1] / "scenarios" / SCENARIOS[args.which]
out = Path(args.output or f"runs/{args.which}")
code = main(["simulate", str(cfg), "-o", str(out)])
m = json.loads((out / "manifest.json").read_text())
print(f"status {m['status']} (exit {code}), wall time {m['wall_time']:.0f} s")
if m["status"] == "ok":
    p = PhysicalParameters()
    print(json.dumps(m["final"], indent=2))
    last = [o["file"] for o in m["outputs"] if o["file"].endswith(".csv") and o["file"] != "totals.csv"][-1]
    X, s = read_csv_snapshot(out / last)
    top = X[:, -1] >= X[:, -1].max() - 1e-12
    print(f"{last}: top-face porosity min {s.n[top].min():.6f} (n0 = {p.n0}), top c_s max {s.cs[top].max():.3e}")
