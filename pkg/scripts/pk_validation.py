"""Simulated mean wait of a static M/G/1 server against Pollaczek-Khinchine.

    python3 scripts/pk_validation.py [--requests 50000] [--seeds 3]
"""

import argparse
import sys

from compasskit.planner import Deterministic, LatencyProfile, LogNormal, ParetoEntry, SwitchingPolicy
from compasskit.seeding import derive_seed
from compasskit.servesim import LoadPattern, generate_arrivals, pk_mean_wait_ms, run_simulation


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--requests", type=int, default=50_000)
    ap.add_argument("--seeds", type=int, default=3)
    ap.add_argument("--mean-ms", type=float, default=200.0)
    ap.add_argument("--p95-ms", type=float, default=350.0, help="lognormal P95")
    args = ap.parse_args()

    dists = {"M/D/1": Deterministic(args.mean_ms), "M/LN/1": LogNormal.from_mean_p95(args.mean_ms, args.p95_ms)}
    print("model    rho   seed  n       sim_wait_ms  pk_wait_ms  rel_err")
    for label, d in dists.items():
        pol = SwitchingPolicy([ParetoEntry((0,), 1.0, LatencyProfile(d.mean, d.p95 + 1e-9, 200))], 1e12, 0.0)
        for rho in (0.3, 0.6, 0.8):
            lam = rho / (d.mean / 1000.0)
            ref = pk_mean_wait_ms(lam, d.mean, d.second_moment)
            for s in range(args.seeds):
                seed = derive_seed(s, "pk", label, rho)
                arr = generate_arrivals(LoadPattern("constant", lam, args.requests / lam), seed)
                w = run_simulation(pol, [d], arr, seed, static_index=0).wait_ms.mean()
                print(f"{label:7s}  {rho:.1f}   {s:<4d}  {arr.size:<6d}  {w:11.2f}  {ref:10.2f}  {w / ref - 1:+.3f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
