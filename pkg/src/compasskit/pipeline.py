"""search -> plan -> simulate orchestration and the on-disk artifacts."""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .evalcore import FEASIBLE
from .planner import (
    ParetoEntry,
    SwitchingPolicy,
    build_policy,
    pareto_front,
    profile_latency,
)
from .scenario import Scenario
from .searchv import (
    SearchResult,
    compass_v_search,
    grid_search_oracle,
    recall_and_savings,
)
from .seeding import derive_seed
from .servesim import (
    LoadPattern,
    SimMetrics,
    SimTrace,
    compute_metrics,
    generate_arrivals,
    policy_dists,
    run_simulation,
    write_timeline_csv,
    write_trace_csv,
)
from .space import Config

SCHEMA_VERSION = "1"
STRATEGIES = ("elastico", "static-fast", "static-medium", "static-accurate")


def fx(x: float, places: int = 6) -> float:
    """Fixed-point rounding for emitted numbers."""
    return float(round(float(x), places))


def write_json(obj: Any, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def config_label(scn: Scenario, c: Config) -> str:
    return ";".join(f"{k}={v}" for k, v in scn.space.label(c).items())


# -- search ---------------------------------------------------------------------


def run_search(scn: Scenario, tau: float, seed: int) -> SearchResult:
    return compass_v_search(scn.space, scn.oracle, scn.search_params(tau), scn.schedule, seed)


def feasible_set_doc(scn: Scenario, res: SearchResult, tau: float, seed: int) -> dict:
    rows = []
    for c in sorted(res.feasible):
        r = res.feasible[c]
        rows.append(
            {
                "config": scn.space.label(c),
                "indices": list(c),
                "acc_hat": fx(r.acc_hat),
                "ci_lo": fx(r.ci_lo),
                "ci_hi": fx(r.ci_hi),
                "samples": r.samples_spent,
                "resolved": r.classification == FEASIBLE,
            }
        )
    return {
        "schema_version": SCHEMA_VERSION,
        "scenario": scn.name,
        "tau": tau,
        "seed": seed,
        "evaluations": res.stats.evaluations,
        "total_samples": res.samples,
        "configs": rows,
    }


def write_search_trace(scn: Scenario, res: SearchResult, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(
            ["order", "config", "classification", "feasible", "acc_hat", "samples",
             "cumulative_samples", "feasible_found", "queue_size", "step"]
        )
        for t in res.trace:
            w.writerow(
                [t["order"], config_label(scn, t["config"]), t["classification"], int(t["feasible"]),
                 f"{t['acc_hat']:.6f}", t["samples"], t["cumulative_samples"], t["feasible_found"],
                 t["queue_size"], t["step"]]
            )


def search_sweep_row(scn: Scenario, tau: float, seed: int) -> dict:
    res = run_search(scn, tau, seed)
    grid = grid_search_oracle(scn.space, scn.oracle, tau, scn.schedule, seed)
    m = recall_and_savings(res, grid)
    return {
        "tau": tau,
        "feasible_fraction": fx(scn.oracle.feasible_fraction(tau)),
        "recall": fx(m["recall"]),
        "savings": fx(m["savings"]),
        "false_positives": m["false_positives"],
        "missed": m["missed"],
        "compass_feasible": m["compass_feasible"],
        "grid_feasible": m["grid_feasible"],
        "compass_samples": m["compass_samples"],
        "grid_samples": m["grid_samples"],
        "evaluations": m["evaluations"],
    }


# -- planning -------------------------------------------------------------------


def build_front(
    scn: Scenario,
    feasible: Iterable[tuple[Config, float]],
    seed: int,
    accuracy: str | None = None,
) -> list[ParetoEntry]:
    """Profile each feasible configuration and keep the Pareto-optimal ones.

    ``accuracy='oracle'`` replaces search estimates with the oracle's true
    accuracy (useful when the scenario pins accuracies, as a lookup table).
    """
    mode = accuracy or scn.planning.accuracy
    pts = []
    for c, acc_hat in feasible:
        a = scn.oracle.true_accuracy(c) if mode == "oracle" else acc_hat
        prof = profile_latency(scn.service_model, c, scn.planning.profile_runs, derive_seed(seed, "profile"))
        pts.append((tuple(c), float(a), prof))
    return pareto_front(pts)


def plan_policy(
    scn: Scenario,
    front: Sequence[ParetoEntry],
    slo_ms: float,
    slack_ms: float | None = None,
    cooldown_up_s: float | None = None,
    cooldown_down_s: float | None = None,
) -> SwitchingPolicy:
    pl = scn.planning
    return build_policy(
        front,
        slo_ms,
        pl.slack_for(slo_ms) if slack_ms is None else slack_ms,
        pl.cooldown_up_s if cooldown_up_s is None else cooldown_up_s,
        pl.cooldown_down_s if cooldown_down_s is None else cooldown_down_s,
    )


def static_policy(front: Sequence[ParetoEntry], slo_ms: float) -> SwitchingPolicy:
    """A controller-less wrapper around the whole front, for static baselines."""
    return SwitchingPolicy(list(front), slo_ms, 0.0)


def static_index(strategy: str, n: int) -> int:
    return {"static-fast": 0, "static-medium": (n - 1) // 2, "static-accurate": n - 1}[strategy]


# -- simulation -----------------------------------------------------------------


@dataclass(frozen=True)
class SimJob:
    scenario_path: str
    strategy: str
    slo_ms: float
    pattern: str
    seed: int
    sim_seed: int
    front: tuple
    policy: dict | None
    out_dir: str
    rel_dir: str


def simulate(
    policy: SwitchingPolicy,
    dists: Sequence,
    pattern: LoadPattern,
    sim_seed: int,
    switch_latency_ms: float,
    static: int | None = None,
    single_rung: bool = False,
    count_in_service: bool = False,
) -> tuple[SimTrace, SimMetrics]:
    arrivals = generate_arrivals(pattern, sim_seed)
    trace = run_simulation(
        policy, dists, arrivals, sim_seed, switch_latency_ms,
        static_index=static, single_rung=single_rung, count_in_service=count_in_service,
    )
    return trace, compute_metrics(trace, policy.slo_ms, policy.accuracies, pattern.duration_s)


def write_sim_artifacts(trace: SimTrace, metrics: SimMetrics, out: Path, extra: dict) -> dict[str, str]:
    out.mkdir(parents=True, exist_ok=True)
    write_trace_csv(trace, out / "trace.csv")
    write_timeline_csv(metrics, out / "timeline.csv")
    doc = {"schema_version": SCHEMA_VERSION, **extra, **metrics.to_dict()}
    write_json(doc, out / "metrics.json")
    return {"trace": "trace.csv", "timeline": "timeline.csv", "metrics": "metrics.json"}


def _run_job(job: SimJob) -> dict:
    from .scenario import load_scenario

    scn = load_scenario(job.scenario_path)
    front = [_entry_from_tuple(t) for t in job.front]
    if job.strategy == "elastico":
        policy = SwitchingPolicy.from_dict(job.policy)
        static = None
    else:
        policy = static_policy(front, job.slo_ms)
        static = static_index(job.strategy, len(front))
    dists = policy_dists(policy, scn.service_model)
    sim = scn.simulation
    pattern = LoadPattern(job.pattern, sim.base_qps, sim.duration_s)
    trace, metrics = simulate(policy, dists, pattern, job.sim_seed, sim.switch_latency_ms, static)
    rel = Path(job.rel_dir)
    files = write_sim_artifacts(
        trace, metrics, Path(job.out_dir) / rel,
        {"strategy": job.strategy, "pattern": job.pattern, "seed": job.seed},
    )
    return {"seed": job.seed, **metrics.to_dict(), "artifacts": {k: str(rel / v) for k, v in files.items()}}


def _entry_tuple(e: ParetoEntry) -> tuple:
    return (e.config, e.accuracy, e.profile.mean_ms, e.profile.p95_ms, e.profile.n)


def _entry_from_tuple(t: tuple) -> ParetoEntry:
    from .planner import LatencyProfile

    return ParetoEntry(tuple(t[0]), t[1], LatencyProfile(t[2], t[3], t[4]))


def _map(fn, jobs: list, threads: int) -> list:
    if threads <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, jobs))


# -- compare ----------------------------------------------------------------------


def compare(scn: Scenario, master_seed: int, out_dir: Path, threads: int = 1, sweep: bool = True) -> dict:
    """Search, plan and simulate the scenario's full grid; write every artifact
    under ``out_dir`` and return the report (also written as report.json/.csv)."""
    if scn.path is None:
        raise ValueError("compare needs a scenario loaded from a file")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    pl, sim = scn.planning, scn.simulation

    sweep_rows = []
    if sweep:
        for tau in scn.taus:
            sweep_rows.append(search_sweep_row(scn, tau, master_seed))

    res = run_search(scn, pl.tau, master_seed)
    write_json(feasible_set_doc(scn, res, pl.tau, master_seed), out_dir / "search" / "feasible_set.json")
    write_search_trace(scn, res, out_dir / "search" / "search_trace.csv")
    if not res.feasible:
        raise RuntimeError(f"search at tau={pl.tau} found no feasible configuration")
    front = build_front(scn, ((c, r.acc_hat) for c, r in sorted(res.feasible.items())), master_seed)

    policies: dict[float, SwitchingPolicy] = {}
    policy_paths = {}
    for slo in pl.slo_ms:
        pol = plan_policy(scn, front, slo)
        policies[slo] = pol
        rel = Path("policies") / f"policy_slo{int(slo)}.json"
        write_json(pol.to_dict(scn.space), out_dir / rel)
        policy_paths[str(int(slo))] = str(rel)

    jobs, keys = [], []
    front_t = tuple(_entry_tuple(e) for e in front)
    for slo in pl.slo_ms:
        for pattern in sim.patterns:
            for strategy in STRATEGIES:
                for s in sim.seeds:
                    rel = Path("sims") / f"slo{int(slo)}" / pattern / strategy / f"seed{s}"
                    jobs.append(
                        SimJob(
                            str(scn.path), strategy, slo, pattern, s,
                            derive_seed(master_seed, "sim", pattern, s),
                            front_t,
                            policies[slo].to_dict(scn.space) if strategy == "elastico" else None,
                            str(out_dir), str(rel),
                        )
                    )
                    keys.append((slo, pattern, strategy))
    results = _map(_run_job, jobs, threads)

    grouped: dict[tuple, list[dict]] = {}
    for k, r in zip(keys, results):
        grouped.setdefault(k, []).append(r)
    sim_rows = []
    for (slo, pattern, strategy), runs in grouped.items():
        sim_rows.append(
            {
                "slo_ms": slo,
                "pattern": pattern,
                "strategy": strategy,
                "slo_compliance": fx(np.mean([r["slo_compliance"] for r in runs])),
                "mean_accuracy": fx(np.mean([r["mean_accuracy"] for r in runs])),
                "p95_ms": fx(np.mean([r["p95_ms"] for r in runs]), 3),
                "switches_up": fx(np.mean([r["switches_up"] for r in runs]), 3),
                "switches_down": fx(np.mean([r["switches_down"] for r in runs]), 3),
                "runs": runs,
            }
        )

    report = {
        "schema_version": SCHEMA_VERSION,
        "scenario": scn.name,
        "seed": master_seed,
        "search_sweep": sweep_rows,
        "search": {
            "tau": pl.tau,
            "feasible_set": "search/feasible_set.json",
            "trace": "search/search_trace.csv",
            "feasible": len(res.feasible),
            "samples": res.samples,
        },
        "front": [
            {
                "config": scn.space.label(e.config),
                "accuracy": fx(e.accuracy),
                "mean_ms": fx(e.mean_ms, 3),
                "p95_ms": fx(e.p95_ms, 3),
            }
            for e in front
        ],
        "policies": policy_paths,
        "simulations": sim_rows,
    }
    write_json(report, out_dir / "report.json")
    write_report_csv(report, out_dir / "report.csv")
    if sweep_rows:
        write_sweep_csv(sweep_rows, out_dir / "search_sweep.csv")
    return report


def write_report_csv(report: dict, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(["slo_ms", "pattern", "strategy", "slo_compliance", "mean_accuracy", "p95_ms",
                    "switches_up", "switches_down", "metrics"])
        for r in report["simulations"]:
            w.writerow(
                [int(r["slo_ms"]), r["pattern"], r["strategy"], f"{r['slo_compliance']:.6f}",
                 f"{r['mean_accuracy']:.6f}", int(round(r["p95_ms"])), r["switches_up"], r["switches_down"],
                 "|".join(x["artifacts"]["metrics"] for x in r["runs"])]
            )


def write_sweep_csv(rows: list[dict], path: Path) -> None:
    cols = list(rows[0])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([f"{r[c]:.6f}" if isinstance(r[c], float) else r[c] for c in cols])


def schema(name: str) -> dict:
    from importlib import resources

    return json.loads((resources.files("compasskit") / "schemas" / f"{name}.schema.json").read_text())


def validate_doc(doc: dict, name: str) -> None:
    """Raise jsonschema.ValidationError if ``doc`` does not match the bundled schema."""
    import jsonschema

    jsonschema.validate(doc, schema(name))


def out_dir_from(env_value: str | None, flag: str | None) -> Path:
    if env_value:
        return Path(env_value)
    return Path(flag or "compasskit_out")


def env_out() -> str | None:
    return os.environ.get("COMPASSKIT_OUT") or None
