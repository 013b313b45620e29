"""Time-step refinement on the 0.6 cm column (16 elements, T = 2.56e5 s).

    python3 scripts/convergence_time.py            # start-up resolved variant
    python3 scripts/convergence_time.py --literal  # from the step initial data
"""
import argparse

from saltcryst.studies import ColumnScenario, Startup, convergence_time_study

ap = argparse.ArgumentParser()
ap.add_argument("--literal", action="store_true")
ap.add_argument("--ci-coefficients", default="new", choices=("new", "old"))
ap.add_argument("--mass-rule", default="lumped", choices=("lumped", "consistent"))
ap.add_argument("--out", help="directory for errors.csv / slopes.csv")
args = ap.parse_args()

sc = ColumnScenario(H=0.6, T=2.56e5, ci_coefficients=args.ci_coefficients, mass_rule=args.mass_rule)
startup = None if args.literal else Startup(256.0, 1e-3)
table = convergence_time_study(sc, [16, 8, 4, 2], 0.5, Nx=16, startup=startup)

print("dt      " + "  ".join(f"E_{f:<8}" for f in ("theta", "ci", "cs", "n")))
for v, e in zip(table.values, table.errors):
    print(f"{v:<7g} " + "  ".join(f"{x:.3e}" for x in e))
print("slopes  " + ", ".join(f"{k} {s:.3f}" for k, s in table.slopes().items()))
if args.out:
    from pathlib import Path

    Path(args.out).mkdir(parents=True, exist_ok=True)
    table.write_csv(Path(args.out) / "errors.csv")
    table.write_slopes_csv(Path(args.out) / "slopes.csv")
