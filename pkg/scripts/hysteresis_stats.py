"""Controller switches after the convergence window under constant load.

Counts switches after t_down + 10 * mean service time of the slowest rung, for
Poisson arrivals at several rates and for evenly spaced arrivals. Uses the
bundled three-rung ladder.

    python3 scripts/hysteresis_stats.py [--seeds 20] [--slo 1000 1500]
"""

import argparse
import sys

from compasskit import pipeline as pl
from compasskit.scenario import load_scenario
from compasskit.seeding import derive_seed
from compasskit.servesim import LoadPattern, generate_arrivals, policy_dists, run_simulation


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--slo", type=float, nargs="+", default=[1000.0, 1500.0])
    ap.add_argument("--rates", type=float, nargs="+", default=[0.1, 0.25, 0.5, 1.0, 1.5])
    args = ap.parse_args()

    scn = load_scenario("paper_table1")
    res = pl.run_search(scn, scn.planning.tau, 0)
    front = pl.build_front(scn, ((c, r.acc_hat) for c, r in sorted(res.feasible.items())), 0)
    print("slo_ms  arrivals  qps   seeds_with_zero_late  mean_late_switches")
    for slo in args.slo:
        pol = pl.plan_policy(scn, front, slo)
        dists = policy_dists(pol, scn.service_model)
        window_ms = 1000 * (pol.cooldown_down_s + 10 * pol.entries[-1].mean_ms / 1000)
        for regular in (False, True):
            for qps in args.rates:
                late = []
                for s in range(args.seeds):
                    seed = derive_seed(0, "hysteresis", slo, qps, s)
                    arr = generate_arrivals(LoadPattern("constant", qps, 180, regular=regular), seed)
                    tr = run_simulation(pol, dists, arr, seed, initial_index=0)
                    late.append(sum(1 for sw in tr.switches if sw[0] > window_ms))
                zero = sum(x == 0 for x in late)
                kind = "regular" if regular else "poisson"
                print(f"{slo:6.0f}  {kind:8s}  {qps:4.2f}  {zero:3d}/{args.seeds:<3d}               {sum(late) / len(late):.2f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
