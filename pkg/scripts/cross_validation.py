"""1D FD column against the laterally uniform 2D FEM strip, three levels."""
import argparse

from saltcryst.studies import cross_validate

ap = argparse.ArgumentParser()
ap.add_argument("--bottom-velocity", default="zero", choices=("zero", "one-sided"))
ap.add_argument("--workers", type=int, default=1)
args = ap.parse_args()

levels = [(0.15, 2.0), (0.075, 0.5), (0.0375, 0.125)]
print(f"bottom velocity: {args.bottom_velocity}")
for lv in cross_validate(levels, bottom_velocity=args.bottom_velocity, workers=args.workers):
    diffs = "  ".join(f"{k} {v:.3e}" for k, v in lv.differences.items())
    print(f"hz {lv.hz:<7g} dt {lv.dt:<6g} {diffs}  lateral {lv.lateral:.1e}")
