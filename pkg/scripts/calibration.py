"""Self-consistency of the K_w calibration at desk scale.

A reference totals series is generated at --true-kw and the candidates are
swept against it; the table of M_theta and the argmin are printed.
"""
import argparse

from saltcryst.studies import TwoPhaseScenario, calibrate_kw, scenario_totals

ap = argparse.ArgumentParser()
ap.add_argument("--true-kw", type=float, default=1.5e-2)
ap.add_argument("--candidates", default="0.01,0.0125,0.015,0.0175,0.02")
ap.add_argument("--workers", type=int, default=1)
args = ap.parse_args()

sc = TwoPhaseScenario.desk(sample_every=60.0)
ref = scenario_totals(sc.with_params(Kw=args.true_kw))
res = calibrate_kw([float(x) for x in args.candidates.split(",")], ref, sc, workers=args.workers)
for kw, m in res.table:
    print(f"Kw {kw:<8g} M_theta {m:.3e}")
print(f"argmin Kw = {res.Kw}")
