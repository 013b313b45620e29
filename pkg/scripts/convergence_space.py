"""Mesh refinement on the 0.15 cm column (T = 12 s, dt = 1e-5 s).

    python3 scripts/convergence_space.py            # common resolved start at t = 2 s
    python3 scripts/convergence_space.py --literal  # h = 0.075 halved 4 times vs 128 elements
"""
import argparse

from saltcryst.studies import ColumnScenario, convergence_space_study

ap = argparse.ArgumentParser()
ap.add_argument("--literal", action="store_true")
ap.add_argument("--workers", type=int, default=1)
args = ap.parse_args()

sc = ColumnScenario(H=0.15, T=12.0)
if args.literal:
    table = convergence_space_study(sc, [0.075 / 2**k for k in range(4)], 1e-5, h_ref=0.15 / 128, workers=args.workers)
else:
    hs = [0.15 / 2**k for k in (4, 5, 6, 7)]
    table = convergence_space_study(sc, hs, 1e-5, h_ref=0.15 / 512, common_start=2.0, workers=args.workers)

print("h          " + "  ".join(f"E_{f:<8}" for f in ("theta", "ci", "cs", "n")))
for v, e in zip(table.values, table.errors):
    print(f"{v:<10.4g} " + "  ".join(f"{x:.3e}" for x in e))
print("slopes  " + ", ".join(f"{k} {s:.3f}" for k, s in table.slopes().items()))
