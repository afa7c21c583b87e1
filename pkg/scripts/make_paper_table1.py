"""Regenerate the bundled three-rung ladder scenario.

Each rung's latency trace is 100 lognormal quantile points at (i + 0.5) / 100,
with the lognormal matched to a target (mean, P95). Run from the repo root:

    python3 scripts/make_paper_table1.py
"""

from pathlib import Path

import numpy as np
import yaml

from compasskit.planner import LogNormal

RUNGS = [
    # name, accuracy, target mean ms, target P95 ms
    ("fast", 0.761, 120.0, 200.0),
    ("medium", 0.825, 300.0, 450.0),
    ("accurate", 0.853, 500.0, 700.0),
]
N_POINTS = 100

OUT = Path(__file__).resolve().parents[1] / "src/compasskit/scenarios/paper_table1.scenario"

HEADER = """\
# Three-rung Pareto ladder (fast / medium / accurate) with fixed accuracies
# and empirical latency traces. Regenerate with scripts/make_paper_table1.py.
"""


def main() -> None:
    traces = []
    for name, _, mean, p95 in RUNGS:
        d = LogNormal.from_mean_p95(mean, p95)
        xs = d.quantile((np.arange(N_POINTS) + 0.5) / N_POINTS)
        traces.append({"config": {"pipeline": name}, "samples_ms": [round(float(x), 2) for x in xs]})
    doc = {
        "name": "paper_table1",
        "space": {
            "expected_size": 3,
            "parameters": [{"name": "pipeline", "kind": "categorical", "values": [r[0] for r in RUNGS]}],
        },
        "oracle": {
            "family": "custom-table",
            "table": [{"config": {"pipeline": r[0]}, "p": r[1]} for r in RUNGS],
        },
        "evaluation": {"schedule": [200, 1000, 2000], "z": 3.29, "taus": [0.70]},
        "search": {"n_init": 3},
        "service_model": {"family": "empirical-trace", "traces": traces},
        "planning": {
            "tau": 0.70,
            "accuracy": "oracle",
            "slo_ms": [500, 1000, 1500],
            "slack_fraction": 0.1,
            "cooldown_up_s": 0.0,
            "cooldown_down_s": 5.0,
            "profile_runs": 200,
        },
        "simulation": {
            "patterns": ["spike", "bursty"],
            "base_qps": 1.5,
            "duration_s": 180,
            "seeds": [0, 1, 2],
            "switch_latency_ms": 10,
        },
    }
    body = yaml.safe_dump(doc, sort_keys=False, default_flow_style=None, width=100)
    OUT.write_text(HEADER + body)
    print(f"wrote {OUT}")


if __name__ == "__main__":
    main()
