"""Recall and sample savings of the search against the exhaustive grid, per tau.

    python3 scripts/recall_sweep.py [--scenario rag_like] [--seeds 0 1 2] [--csv out.csv]
"""

import argparse
import csv
import sys
import time

from compasskit.pipeline import search_sweep_row
from compasskit.scenario import load_scenario


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scenario", action="append", help="repeatable; default rag_like and cascade_like")
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    ap.add_argument("--csv", default=None)
    args = ap.parse_args()

    rows = []
    for name in args.scenario or ["rag_like", "cascade_like"]:
        scn = load_scenario(name)
        for seed in args.seeds:
            t0 = time.perf_counter()
            for tau in scn.taus:
                r = search_sweep_row(scn, tau, seed)
                rows.append({"scenario": name, "seed": seed, **r})
                print(f"{name:13s} seed={seed:<3d} tau={tau:.3f} f={r['feasible_fraction']:.3f} "
                      f"recall={r['recall']:.3f} savings={r['savings']:.3f} evals={r['evaluations']}")
            print(f"{name} seed={seed}: {time.perf_counter() - t0:.1f}s")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\r\n")
            w.writeheader()
            w.writerows(rows)
    return 0


if __name__ == "__main__":
    sys.exit(main())
