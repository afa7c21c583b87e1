"""Command-line entry point: ``compasskit search|plan|simulate|compare|report``."""

from __future__ import annotations

import json
import logging
import re
import sys
import warnings
from pathlib import Path

import click
import jsonschema
import numpy as np

from . import pipeline as pl
from .planner import PlanningError, SLOInfeasible, SwitchingPolicy
from .scenario import Scenario, ScenarioError, load_scenario
from .searchv import grid_search_oracle, recall_and_savings
from .servesim import PATTERNS, LoadPattern, policy_dists
from .space import SpaceError

EXIT_VALIDATION = 2
EXIT_SLO_INFEASIBLE = 3

log = logging.getLogger("compasskit")

_SWEEP = re.compile(r"^\s*([0-9.]+)\s*\.\.\s*([0-9.]+)\s*:\s*(\d+)\s*$")


class ValidationFailure(click.ClickException):
    exit_code = EXIT_VALIDATION


class Infeasible(click.ClickException):
    exit_code = EXIT_SLO_INFEASIBLE


def parse_taus(text: str) -> list[float]:
    """``0.75``, ``0.5,0.7`` or an inclusive sweep ``lo..hi:n``."""
    m = _SWEEP.match(text)
    if m:
        lo, hi, n = float(m.group(1)), float(m.group(2)), int(m.group(3))
        if n < 1 or hi < lo:
            raise ValueError(f"bad tau sweep {text!r}")
        taus = [lo] if n == 1 else [lo + (hi - lo) * i / (n - 1) for i in range(n)]
    else:
        taus = [float(x) for x in text.split(",") if x.strip()]
    taus = [round(t, 6) for t in taus]
    if not taus or any(not 0.0 < t < 1.0 for t in taus):
        raise ValueError(f"tau values must lie in (0, 1): {text!r}")
    return taus


class Ctx:
    def __init__(self, scenario: str | None, out: str | None, seed: int, threads: int):
        self.scenario_arg = scenario
        self.out = pl.out_dir_from(pl.env_out(), out)
        self.seed = seed
        self.threads = threads
        self._scn: Scenario | None = None

    def scenario(self, required: bool = True) -> Scenario | None:
        if self._scn is None:
            if self.scenario_arg is None:
                if required:
                    raise ValidationFailure("--scenario is required for this command")
                return None
            try:
                self._scn = load_scenario(self.scenario_arg)
            except (ScenarioError, SpaceError) as exc:
                raise ValidationFailure(str(exc)) from exc
        return self._scn


def _emit(doc: dict, name: str, path: Path) -> None:
    try:
        pl.validate_doc(doc, name)
    except jsonschema.ValidationError as exc:
        raise click.ClickException(f"internal error: {path.name} fails its schema: {exc.message}") from exc
    pl.write_json(doc, path)


def _load_json(path: Path, name: str) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ValidationFailure(f"{path}: no such file") from None
    except json.JSONDecodeError as exc:
        raise ValidationFailure(f"{path}: not valid JSON ({exc})") from None
    try:
        pl.validate_doc(doc, name)
    except jsonschema.ValidationError as exc:
        raise ValidationFailure(f"{path}: {exc.message}") from None
    return doc


@click.group()
@click.option("--scenario", "scenario", default=None, help="Scenario file, or the name of a bundled one.")
@click.option("--out", "out", default=None, help="Output directory (COMPASSKIT_OUT overrides).")
@click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=0, show_default=True, help="Master seed.")
@click.option("--threads", type=click.IntRange(1), default=1, show_default=True, help="Worker processes.")
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
@click.pass_context
def main(ctx: click.Context, scenario, out, seed, threads, verbose) -> None:
    """Feasible-configuration search, switching-policy planning and serving simulation."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(message)s")
    warnings.simplefilter("default")
    logging.captureWarnings(True)
    ctx.obj = Ctx(scenario, out, seed, threads)


# -- search ----------------------------------------------------------------------


@main.command()
@click.option("--tau", "tau_text", default=None, help="Threshold, list, or sweep lo..hi:n (default: scenario planning tau).")
@click.option("--grid/--no-grid", default=False, help="Also run the exhaustive grid and report recall/savings.")
@click.pass_obj
def search(c: Ctx, tau_text, grid) -> None:
    """Find every configuration whose accuracy meets tau."""
    scn = c.scenario()
    try:
        taus = parse_taus(tau_text) if tau_text else [scn.planning.tau]
    except ValueError as exc:
        raise ValidationFailure(str(exc)) from exc
    c.out.mkdir(parents=True, exist_ok=True)
    summary = []
    for tau in taus:
        sub = c.out if len(taus) == 1 else c.out / f"tau_{tau:.3f}"
        sub.mkdir(parents=True, exist_ok=True)
        res = pl.run_search(scn, tau, c.seed)
        _emit(pl.feasible_set_doc(scn, res, tau, c.seed), "feasible_set", sub / "feasible_set.json")
        pl.write_search_trace(scn, res, sub / "search_trace.csv")
        row = {"tau": tau, "feasible": len(res.feasible), "evaluations": res.stats.evaluations, "samples": res.samples}
        if grid:
            g = grid_search_oracle(scn.space, scn.oracle, tau, scn.schedule, c.seed)
            m = recall_and_savings(res, g)
            row.update(recall=pl.fx(m["recall"]), savings=pl.fx(m["savings"]), grid_feasible=m["grid_feasible"])
        summary.append(row)
        click.echo("  ".join(f"{k}={v}" for k, v in row.items()))
    if len(taus) > 1 or grid:
        pl.write_json({"scenario": scn.name, "seed": c.seed, "runs": summary}, c.out / "search_summary.json")


# -- plan ------------------------------------------------------------------------


@main.command()
@click.option("--feasible-set", "fs_path", type=click.Path(path_type=Path), default=None,
              help="feasible_set.json (default: <out>/feasible_set.json).")
@click.option("--slo-ms", type=float, default=None, help="Latency SLO; default: every SLO in the scenario.")
@click.option("--slack-ms", type=click.FloatRange(min=0), default=None, help="Slack buffer h_s (default 0.1 x SLO).")
@click.option("--cooldown-up-s", type=click.FloatRange(min=0), default=None)
@click.option("--cooldown-down-s", type=click.FloatRange(min=0), default=None)
@click.option("--accuracy", type=click.Choice(["estimate", "oracle"]), default=None,
              help="Use search estimates or the oracle's true accuracy on the front.")
@click.pass_obj
def plan(c: Ctx, fs_path, slo_ms, slack_ms, cooldown_up_s, cooldown_down_s, accuracy) -> None:
    """Build the Pareto front and derive switching thresholds."""
    scn = c.scenario()
    fs = _load_json(fs_path or c.out / "feasible_set.json", "feasible_set")
    if not fs["configs"]:
        raise ValidationFailure("feasible set is empty; nothing to plan")
    feasible = []
    for row in fs["configs"]:
        cfg = tuple(row["indices"])
        if not scn.space.contains(cfg):
            raise ValidationFailure(f"feasible set names a configuration outside the space: {row['config']}")
        feasible.append((cfg, row["acc_hat"]))
    if slo_ms is not None and slo_ms <= 0:
        raise ValidationFailure("--slo-ms must be > 0")
    front = pl.build_front(scn, feasible, c.seed, accuracy)
    slos = [slo_ms] if slo_ms is not None else list(scn.planning.slo_ms)
    c.out.mkdir(parents=True, exist_ok=True)
    for slo in slos:
        try:
            pol = pl.plan_policy(scn, front, slo, slack_ms, cooldown_up_s, cooldown_down_s)
        except SLOInfeasible as exc:
            raise Infeasible(str(exc)) from exc
        except PlanningError as exc:
            raise ValidationFailure(str(exc)) from exc
        name = "policy.json" if len(slos) == 1 else f"policy_slo{int(slo)}.json"
        _emit(pol.to_dict(scn.space), "policy", c.out / name)
        ups = "/".join(str(e.upscale_threshold) for e in pol.entries)
        click.echo(f"slo={slo:g}ms entries={len(pol)} upscale={ups} -> {c.out / name}")


# -- simulate ----------------------------------------------------------------------


@main.command()
@click.option("--policy", "policy_path", type=click.Path(path_type=Path), required=True)
@click.option("--pattern", type=click.Choice(PATTERNS), default="spike", show_default=True)
@click.option("--base-qps", type=float, default=None, help="Default: scenario value, else 1.5.")
@click.option("--duration-s", type=float, default=None, help="Default: scenario value, else 180.")
@click.option("--slo-ms", type=float, default=None, help="Score against this SLO (default: the policy's).")
@click.option("--seed", "seeds", type=click.IntRange(0), multiple=True, help="Simulation seed; repeat to fan out.")
@click.option("--static", "static", type=click.IntRange(0), default=None, help="Pin this front entry (baseline mode).")
@click.option("--switch-latency-ms", type=click.FloatRange(min=0), default=None)
@click.option("--single-rung", is_flag=True, help="Upscale one rung at a time.")
@click.option("--count-in-service", is_flag=True, help="Queue depth includes the request in service.")
@click.pass_obj
def simulate(c: Ctx, policy_path, pattern, base_qps, duration_s, slo_ms, seeds, static,
             switch_latency_ms, single_rung, count_in_service) -> None:
    """Replay a load pattern against a policy (or one static entry)."""
    scn = c.scenario(required=False)
    pol = SwitchingPolicy.from_dict(_load_json(policy_path, "policy"))
    if slo_ms is not None:
        if slo_ms <= 0:
            raise ValidationFailure("--slo-ms must be > 0")
        pol.slo_ms = slo_ms
    if static is not None and static >= len(pol):
        raise ValidationFailure(f"--static {static}: policy has {len(pol)} entries")
    sim = scn.simulation if scn else None
    try:
        pattern_obj = LoadPattern(
            pattern,
            base_qps if base_qps is not None else (sim.base_qps if sim else 1.5),
            duration_s if duration_s is not None else (sim.duration_s if sim else 180.0),
        )
        dists = policy_dists(pol, scn.service_model if scn else None)
    except (ValueError, PlanningError) as exc:
        raise ValidationFailure(str(exc)) from exc
    latency = switch_latency_ms if switch_latency_ms is not None else (sim.switch_latency_ms if sim else 10.0)
    seeds = list(seeds) or [c.seed]
    for s in seeds:
        trace, metrics = pl.simulate(pol, dists, pattern_obj, s, latency, static, single_rung, count_in_service)
        sub = c.out if len(seeds) == 1 else c.out / f"seed{s}"
        mode = "elastico" if static is None else f"static-{static}"
        pl.write_sim_artifacts(trace, metrics, sub, {"strategy": mode, "pattern": pattern, "seed": s})
        pl.validate_doc(json.loads((sub / "metrics.json").read_text()), "metrics")
        m = metrics
        click.echo(
            f"seed={s} requests={m.n_requests} compliance={m.slo_compliance:.3f} "
            f"p95={m.p95_ms:.0f}ms accuracy={m.mean_accuracy:.4f} switches={m.switches_up}up/{m.switches_down}down"
        )


# -- compare / report -------------------------------------------------------------


@main.command()
@click.option("--sweep/--no-sweep", default=True, help="Include the recall/savings sweep over the scenario taus.")
@click.pass_obj
def compare(c: Ctx, sweep) -> None:
    """Elastico vs. the three static baselines across SLOs and load patterns."""
    scn = c.scenario()
    try:
        report = pl.compare(scn, c.seed, c.out, c.threads, sweep)
    except SLOInfeasible as exc:
        raise Infeasible(str(exc)) from exc
    except RuntimeError as exc:
        raise click.ClickException(f"compare failed: {exc}") from exc
    pl.validate_doc(report, "report")
    click.echo(f"{len(report['simulations'])} simulation rows -> {c.out / 'report.json'}")


def render_report(report: dict) -> str:
    lines = [f"# {report['scenario']} (seed {report['seed']})", ""]
    if report["search_sweep"]:
        lines += ["| tau | f | recall | savings | evaluations |", "|---|---|---|---|---|"]
        for r in report["search_sweep"]:
            lines.append(
                f"| {r['tau']:.3f} | {r['feasible_fraction']:.3f} | {r['recall']:.3f} | "
                f"{r['savings']:.3f} | {r['evaluations']} |"
            )
        lines.append("")
    lines += ["| SLO ms | pattern | strategy | compliance | accuracy | P95 ms | up | down |",
              "|---|---|---|---|---|---|---|---|"]
    for r in report["simulations"]:
        lines.append(
            f"| {r['slo_ms']:g} | {r['pattern']} | {r['strategy']} | {r['slo_compliance']:.3f} | "
            f"{r['mean_accuracy']:.4f} | {r['p95_ms']:.0f} | {r['switches_up']:g} | {r['switches_down']:g} |"
        )
    return "\n".join(lines) + "\n"


@main.command()
@click.option("--input", "in_path", type=click.Path(path_type=Path), default=None,
              help="report.json (default: <out>/report.json).")
@click.pass_obj
def report(c: Ctx, in_path) -> None:
    """Render report.json as markdown tables (also written to report.md)."""
    path = in_path or c.out / "report.json"
    doc = _load_json(path, "report")
    for r in doc["simulations"]:
        for run in r["runs"]:
            for rel in run["artifacts"].values():
                if not (path.parent / rel).is_file():
                    raise ValidationFailure(f"report references a missing artifact: {rel}")
    text = render_report(doc)
    (path.parent / "report.md").write_text(text)
    click.echo(text, nl=False)


def run() -> None:  # pragma: no cover
    np.seterr(all="ignore")
    sys.exit(main())


if __name__ == "__main__":  # pragma: no cover
    main()
