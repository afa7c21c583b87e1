"""Scenario files: YAML documents bundling a space, an accuracy oracle, a
service model and the planning/simulation grid."""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import yaml

from .evalcore import AccuracyOracle, BudgetSchedule, OracleError, oracle_from_dict
from .planner import PlanningError, ServiceModel, service_model_from_dict
from .searchv import SearchParams
from .servesim import PATTERNS
from .space import ConfigSpace, SpaceError, validate_space

SUFFIX = ".scenario"


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class PlanningSpec:
    tau: float
    slo_ms: tuple[float, ...]
    slack_fraction: float = 0.1
    slack_ms: float | None = None
    cooldown_up_s: float = 0.0
    cooldown_down_s: float = 5.0
    profile_runs: int = 200
    accuracy: str = "estimate"  # or "oracle"

    def slack_for(self, slo_ms: float) -> float:
        return self.slack_ms if self.slack_ms is not None else self.slack_fraction * slo_ms


@dataclass(frozen=True)
class SimulationSpec:
    patterns: tuple[str, ...] = ("spike", "bursty")
    base_qps: float = 1.5
    duration_s: float = 180.0
    seeds: tuple[int, ...] = (0,)
    switch_latency_ms: float = 10.0


@dataclass
class Scenario:
    name: str
    path: Path | None
    space: ConfigSpace
    oracle: AccuracyOracle
    schedule: BudgetSchedule
    taus: tuple[float, ...]
    search: dict
    service_model: ServiceModel
    planning: PlanningSpec
    simulation: SimulationSpec
    raw: dict = field(repr=False, default_factory=dict)

    def search_params(self, tau: float) -> SearchParams:
        return SearchParams(tau=tau, **self.search)


def bundled_dir() -> Path:
    return Path(str(resources.files("compasskit") / "scenarios"))


def bundled_names() -> list[str]:
    return sorted(p.stem for p in bundled_dir().glob("*" + SUFFIX))


def resolve(name_or_path: str | Path) -> Path:
    """A path on disk, or the name of a bundled scenario."""
    p = Path(name_or_path)
    if p.is_file():
        return p
    cand = bundled_dir() / (p.name if p.suffix == SUFFIX else p.name + SUFFIX)
    if cand.is_file():
        return cand
    raise ScenarioError(f"scenario not found: {name_or_path} (bundled: {', '.join(bundled_names())})")


def _tau(x: Any, what: str) -> float:
    t = float(x)
    if not 0.0 < t < 1.0:
        raise ScenarioError(f"{what} must lie in (0, 1), got {t}")
    return t


def parse_scenario(raw: dict, path: Path | None = None) -> Scenario:
    if not isinstance(raw, dict):
        raise ScenarioError("scenario must be a mapping")
    for key in ("space", "oracle", "service_model"):
        if key not in raw:
            raise ScenarioError(f"scenario is missing the {key!r} section")
    base_dir = path.parent if path is not None else None
    try:
        space = validate_space(raw["space"])
        oracle = oracle_from_dict(space, raw["oracle"], base_dir)
        service = service_model_from_dict(space, raw["service_model"])
    except (SpaceError, OracleError, PlanningError, KeyError, TypeError) as exc:
        raise ScenarioError(f"invalid scenario: {exc}") from exc

    ev = raw.get("evaluation") or {}
    try:
        schedule = BudgetSchedule(tuple(int(b) for b in ev.get("schedule", (20, 50, 100))), float(ev.get("z", 1.96)))
    except ValueError as exc:
        raise ScenarioError(str(exc)) from exc
    taus = tuple(_tau(t, "tau") for t in ev.get("taus", ()))

    search = dict(raw.get("search") or {})
    allowed = {"n_init", "k_neighbors", "idw_exponent", "low_gradient_quantile", "restart_rounds"}
    if set(search) - allowed:
        raise ScenarioError(f"unknown search options: {sorted(set(search) - allowed)}")

    pl = dict(raw.get("planning") or {})
    slos = tuple(float(x) for x in pl.get("slo_ms", (500, 1000, 1500)))
    if any(s <= 0 for s in slos):
        raise ScenarioError("SLOs must be > 0")
    accuracy = pl.get("accuracy", "estimate")
    if accuracy not in ("estimate", "oracle"):
        raise ScenarioError("planning.accuracy must be 'estimate' or 'oracle'")
    planning = PlanningSpec(
        tau=_tau(pl.get("tau", taus[0] if taus else 0.5), "planning.tau"),
        slo_ms=slos,
        slack_fraction=float(pl.get("slack_fraction", 0.1)),
        slack_ms=None if pl.get("slack_ms") is None else float(pl["slack_ms"]),
        cooldown_up_s=float(pl.get("cooldown_up_s", 0.0)),
        cooldown_down_s=float(pl.get("cooldown_down_s", 5.0)),
        profile_runs=int(pl.get("profile_runs", 200)),
        accuracy=accuracy,
    )
    if planning.cooldown_up_s < 0 or planning.cooldown_down_s < 0:
        raise ScenarioError("cooldowns must be >= 0")

    sim = dict(raw.get("simulation") or {})
    patterns = tuple(sim.get("patterns", ("spike", "bursty")))
    for p in patterns:
        if p not in PATTERNS:
            raise ScenarioError(f"unknown load pattern {p!r}")
    simulation = SimulationSpec(
        patterns=patterns,
        base_qps=float(sim.get("base_qps", 1.5)),
        duration_s=float(sim.get("duration_s", 180.0)),
        seeds=tuple(int(s) for s in sim.get("seeds", (0,))),
        switch_latency_ms=float(sim.get("switch_latency_ms", 10.0)),
    )
    if simulation.base_qps <= 0 or simulation.duration_s < 0:
        raise ScenarioError("simulation needs base_qps > 0 and duration_s >= 0")

    return Scenario(
        name=str(raw.get("name") or (path.stem if path else "scenario")),
        path=path,
        space=space,
        oracle=oracle,
        schedule=schedule,
        taus=taus,
        search=search,
        service_model=service,
        planning=planning,
        simulation=simulation,
        raw=raw,
    )


def load_scenario(name_or_path: str | Path) -> Scenario:
    path = resolve(name_or_path)
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ScenarioError(f"{path}: not valid YAML: {exc}") from exc
    return parse_scenario(raw, path)
