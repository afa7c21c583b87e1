"""Accuracy evaluation: synthetic oracles, Bernoulli trials, Wilson intervals,
and progressive budgeting with early stopping."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .seeding import rng_for
from .space import Config, ConfigSpace, SpaceError

FEASIBLE = "feasible"
INFEASIBLE = "infeasible"
UNCERTAIN = "uncertain"

FAMILIES = ("rag-like", "cascade-like", "custom-table")


class OracleError(ValueError):
    pass


@dataclass(frozen=True)
class BudgetSchedule:
    levels: tuple[int, ...] = (20, 50, 100)
    z: float = 1.96

    def __post_init__(self) -> None:
        if not self.levels:
            raise ValueError("budget schedule needs at least one level")
        if self.levels[0] < 1 or any(b <= a for a, b in zip(self.levels, self.levels[1:])):
            raise ValueError(f"budget levels must be positive and strictly increasing: {self.levels}")
        if not self.z > 0:
            raise ValueError("z must be > 0")

    @property
    def b_max(self) -> int:
        return self.levels[-1]


@dataclass(frozen=True)
class EvalRecord:
    config: Config
    trials: int
    successes: int
    acc_hat: float
    ci_lo: float
    ci_hi: float
    classification: str
    samples_spent: int
    tau: float

    @property
    def resolved(self) -> bool:
        """True when the Wilson interval cleared tau; False if decided by point estimate."""
        return self.classification != UNCERTAIN

    @property
    def feasible(self) -> bool:
        if self.classification == UNCERTAIN:
            return self.acc_hat >= self.tau
        return self.classification == FEASIBLE


def _saturating(x: float, rate: float) -> float:
    if rate == 0:
        return x
    return (1.0 - math.exp(-rate * x)) / (1.0 - math.exp(-rate))


@dataclass
class AccuracyOracle:
    """Deterministic map from configuration to true success probability.

    ``rag-like``: p = clamp(base + sum of per-axis terms + interactions).
    A numeric axis term is ``gain * g(x)`` with ``g`` a saturating curve on the
    normalized coordinate; a categorical axis term is a per-category offset.
    Interactions add ``coef * g_a(x_a) * g_b(x_b)``.
    ``cascade-like`` adds single-peaked bumps on chosen axes, Gaussian or
    ``tent`` (piecewise linear), which makes those axes non-monotone.
    ``custom-table`` reads p per configuration.
    """

    space: ConfigSpace
    family: str
    base: float = 0.0
    terms: Mapping[str, Mapping[str, Any]] = field(default_factory=dict)
    interactions: Sequence[Mapping[str, Any]] = ()
    bumps: Sequence[Mapping[str, Any]] = ()
    table: Mapping[Config, float] | None = None

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise OracleError(f"unknown oracle family {self.family!r}")
        names = set(self.space.names)
        for name in list(self.terms) + [b["axis"] for b in self.bumps]:
            if name not in names:
                raise OracleError(f"oracle references unknown parameter {name!r}")
        for it in self.interactions:
            for name in it["axes"]:
                if name not in names:
                    raise OracleError(f"oracle references unknown parameter {name!r}")
        if self.family == "cascade-like" and not self.bumps:
            raise OracleError("cascade-like oracle needs at least one bump")
        if self.family == "custom-table":
            if self.table is None:
                raise OracleError("custom-table oracle needs a table")
            for c, p in self.table.items():
                if not 0.0 <= p <= 1.0:
                    raise OracleError(f"table p={p} for {c} is outside [0, 1]")
        self._cache: dict[Config, float] = {}

    def _axis_g(self, name: str, c: Config) -> float:
        k = self.space.names.index(name)
        p = self.space.params[k]
        spec = self.terms.get(name, {})
        if p.categorical:
            raise OracleError(f"interaction on categorical axis {name!r} is not supported")
        return _saturating(p.position(c[k]), float(spec.get("rate", 0.0)))

    def _formula(self, c: Config) -> float:
        total = float(self.base)
        for k, p in enumerate(self.space.params):
            spec = self.terms.get(p.name)
            if not spec:
                continue
            if "levels" in spec:
                levels = spec["levels"]
                if len(levels) != p.size:
                    raise OracleError(f"term {p.name!r}: {len(levels)} levels for {p.size} values")
                total += float(levels[c[k]])
            else:
                x = p.position(c[k])
                total += float(spec.get("gain", 0.0)) * _saturating(x, float(spec.get("rate", 0.0)))
        for it in self.interactions:
            a, b = it["axes"]
            total += float(it["coef"]) * self._axis_g(a, c) * self._axis_g(b, c)
        for bump in self.bumps:
            k = self.space.names.index(bump["axis"])
            x = self.space.params[k].position(c[k])
            z = (x - float(bump["center"])) / float(bump["width"])
            if bump.get("shape", "gaussian") == "tent":
                total += float(bump["height"]) * max(0.0, 1.0 - abs(z))
            else:
                total += float(bump["height"]) * math.exp(-z * z)
        return min(1.0, max(0.0, total))

    def true_accuracy(self, c: Config) -> float:
        c = tuple(c)
        hit = self._cache.get(c)
        if hit is not None:
            return hit
        if self.family == "custom-table":
            try:
                p = float(self.table[c])  # type: ignore[index]
            except KeyError:
                raise OracleError(f"custom table has no entry for {self.space.label(c)}") from None
        else:
            p = self._formula(c)
        self._cache[c] = p
        return p

    def feasible_fraction(self, tau: float) -> float:
        ps = [self.true_accuracy(c) for c in self.space.configs]
        return sum(p >= tau for p in ps) / len(ps)


def true_accuracy(oracle: AccuracyOracle, config: Config) -> float:
    return oracle.true_accuracy(config)


def load_table_csv(space: ConfigSpace, path: str | Path) -> dict[Config, float]:
    """CSV with one column per parameter plus ``p``."""
    table: dict[Config, float] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            assignment = {}
            for prm in space.params:
                raw = row[prm.name]
                if prm.categorical:
                    # categories may be numbers in the scenario file
                    match = [v for v in prm.values if str(v) == raw]
                    assignment[prm.name] = match[0] if match else raw
                else:
                    assignment[prm.name] = float(raw)
            table[space.from_values(assignment)] = float(row["p"])
    return table


def oracle_from_dict(space: ConfigSpace, raw: Mapping[str, Any], base_dir: Path | None = None) -> AccuracyOracle:
    family = raw.get("family")
    table = None
    if family == "custom-table":
        table = {}
        if "table_path" in raw:
            path = Path(raw["table_path"])
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            table.update(load_table_csv(space, path))
        for row in raw.get("table") or []:
            try:
                table[space.from_values(row["config"])] = float(row["p"])
            except SpaceError as exc:
                raise OracleError(str(exc)) from None
    return AccuracyOracle(
        space=space,
        family=family,
        base=float(raw.get("base", 0.0)),
        terms=dict(raw.get("terms") or {}),
        interactions=list(raw.get("interactions") or []),
        bumps=list(raw.get("bumps") or []),
        table=table,
    )


def config_rng(seed: int, config: Config) -> np.random.Generator:
    """Per-configuration trial stream. Draws are a fixed sequence, so any two
    evaluators sharing ``seed`` see the same outcomes for the same config."""
    return rng_for(seed, "trials", *config)


def sample_trials(oracle: AccuracyOracle, config: Config, n: int, rng: np.random.Generator) -> int:
    if n < 1:
        raise ValueError("n must be >= 1")
    p = oracle.true_accuracy(config)
    return int(np.count_nonzero(rng.random(n) < p))


def wilson_interval(successes: int, trials: int, z: float = 1.96) -> tuple[float, float]:
    if trials <= 0:
        raise ValueError("Wilson interval needs trials >= 1")
    if not 0 <= successes <= trials:
        raise ValueError(f"successes={successes} outside [0, {trials}]")
    if z <= 0:
        raise ValueError("z must be > 0")
    n = trials
    phat = successes / n
    z2 = z * z
    denom = 1.0 + z2 / n
    center = (phat + z2 / (2 * n)) / denom
    half = z * math.sqrt(phat * (1 - phat) / n + z2 / (4 * n * n)) / denom
    lo = max(0.0, min(phat, center - half))
    hi = min(1.0, max(phat, center + half))
    if successes == 0:
        lo = 0.0
    if successes == n:
        hi = 1.0
    return lo, hi


def progressive_evaluate(
    oracle: AccuracyOracle,
    config: Config,
    schedule: BudgetSchedule,
    tau: float,
    rng: np.random.Generator,
) -> EvalRecord:
    """Accumulate trials level by level and stop once the interval clears tau."""
    if not 0.0 < tau < 1.0:
        raise ValueError("tau must lie in (0, 1)")
    trials = successes = 0
    lo = hi = 0.0
    label = UNCERTAIN
    for level in schedule.levels:
        successes += sample_trials(oracle, config, level - trials, rng)
        trials = level
        lo, hi = wilson_interval(successes, trials, schedule.z)
        if lo > tau:
            label = FEASIBLE
            break
        if hi < tau:
            label = INFEASIBLE
            break
    return EvalRecord(
        config=tuple(config),
        trials=trials,
        successes=successes,
        acc_hat=successes / trials,
        ci_lo=lo,
        ci_hi=hi,
        classification=label,
        samples_spent=trials,
        tau=tau,
    )
