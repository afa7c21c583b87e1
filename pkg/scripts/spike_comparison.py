"""Elastico against the static baselines on the three-rung ladder, per SLO.

Mean compliance and served accuracy over N spike (or bursty) seeds.

    python3 scripts/spike_comparison.py [--pattern spike] [--seeds 10]
"""

import argparse
import sys

import numpy as np

from compasskit import pipeline as pl
from compasskit.planner import SLOInfeasible
from compasskit.scenario import load_scenario
from compasskit.seeding import derive_seed
from compasskit.servesim import LoadPattern, policy_dists


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scenario", default="paper_table1")
    ap.add_argument("--pattern", default="spike", choices=["constant", "spike", "bursty"])
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--single-rung", action="store_true")
    args = ap.parse_args()

    scn = load_scenario(args.scenario)
    res = pl.run_search(scn, scn.planning.tau, 0)
    front = pl.build_front(scn, ((c, r.acc_hat) for c, r in sorted(res.feasible.items())), 0)
    sim = scn.simulation
    pattern = LoadPattern(args.pattern, sim.base_qps, sim.duration_s)
    print("slo_ms  strategy         compliance  accuracy  p95_ms")
    for slo in scn.planning.slo_ms:
        try:
            pol = pl.plan_policy(scn, front, slo)
        except SLOInfeasible as exc:
            print(f"{slo:6.0f}  {exc}")
            continue
        static = pl.static_policy(front, slo)
        for strategy in pl.STRATEGIES:
            p, idx = (pol, None) if strategy == "elastico" else (static, pl.static_index(strategy, len(front)))
            ms = [
                pl.simulate(p, policy_dists(p, scn.service_model), pattern, derive_seed(0, "sim", args.pattern, s),
                            sim.switch_latency_ms, idx, args.single_rung)[1]
                for s in range(args.seeds)
            ]
            print(f"{slo:6.0f}  {strategy:15s}  {np.mean([m.slo_compliance for m in ms]):10.3f}  "
                  f"{np.mean([m.mean_accuracy for m in ms]):8.4f}  {np.mean([m.p95_ms for m in ms]):6.0f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
