"""Feasible-set search over a configuration lattice.

LHS seeding, progressive evaluation, inverse-distance-weighted gradient
estimates, hill-climbing toward higher accuracy from infeasible points and
lateral expansion from feasible ones. Also the exhaustive grid baseline and
the recall/savings comparison between the two.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .evalcore import (
    AccuracyOracle,
    BudgetSchedule,
    EvalRecord,
    config_rng,
    progressive_evaluate,
)
from .seeding import derive_seed
from .space import Config, ConfigSpace, lhs_sample


@dataclass(frozen=True)
class GradientEstimate:
    components: np.ndarray
    support: int

    def __iter__(self):
        return iter(self.components)


@dataclass(frozen=True)
class SearchParams:
    tau: float
    n_init: int = 10
    k_neighbors: int = 5
    idw_exponent: float = 2.0
    low_gradient_quantile: float = 1.0
    restart_rounds: int = 0

    def __post_init__(self) -> None:
        if self.n_init < 1:
            raise ValueError("n_init must be >= 1")
        if self.k_neighbors < 1:
            raise ValueError("k_neighbors must be >= 1")
        if not self.idw_exponent > 0:
            raise ValueError("idw_exponent must be > 0")
        if not 0.0 < self.low_gradient_quantile <= 1.0:
            raise ValueError("low_gradient_quantile must lie in (0, 1]")
        if not 0.0 < self.tau < 1.0:
            raise ValueError("tau must lie in (0, 1)")


@dataclass
class SearchStats:
    evaluations: int = 0
    samples: int = 0
    hill_climb_steps: int = 0
    lateral_expansions: int = 0
    restarts: int = 0


@dataclass
class SearchResult:
    feasible: dict[Config, EvalRecord]
    evaluated: dict[Config, EvalRecord]
    stats: SearchStats
    trace: list[dict] = field(default_factory=list)

    @property
    def samples(self) -> int:
        return self.stats.samples


@dataclass
class GridResult:
    feasible: dict[Config, float]
    accuracy: dict[Config, float]
    samples: int
    progressive: dict[Config, EvalRecord]
    b_max: int

    @property
    def progressive_samples(self) -> int:
        return sum(r.samples_spent for r in self.progressive.values())


def idw_gradient(
    space: ConfigSpace,
    config: Config,
    evaluated: Mapping[Config, float],
    k_neighbors: int = 5,
    p: float = 2.0,
) -> GradientEstimate:
    """Finite-difference accuracy gradient from the k nearest evaluated points.

    Per axis, each neighbor that moved along that axis contributes
    ``w * dAcc / dx`` with ``w = d**-p``; the sum is divided by the weights of
    the contributing neighbors. Categorical axes use dx = 1.
    """
    if not evaluated:
        raise ValueError("need at least one evaluated configuration")
    config = tuple(config)
    keys = list(evaluated)
    rows = np.array([space.row_of[c] for c in keys])
    acc = np.array([evaluated[c] for c in keys], dtype=float)
    deltas = space.deltas_to_rows(config, rows)
    dist = np.sqrt(np.sum(deltas * deltas, axis=1))

    order = np.lexsort((rows, dist))
    if config in evaluated:
        ref = float(evaluated[config])
    else:
        ref = float(acc[order[0]])

    chosen = [i for i in order if dist[i] > 0][:k_neighbors]
    num = np.zeros(len(space.params))
    den = np.zeros(len(space.params))
    for i in chosen:
        w = dist[i] ** (-p)
        moved = deltas[i] != 0
        num[moved] += w * (acc[i] - ref) / deltas[i][moved]
        den[moved] += w
    comps = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
    return GradientEstimate(comps, len(chosen))


def _category_scores(space: ConfigSpace, axis: int, evaluated: Mapping[Config, float]) -> dict[int, float]:
    sums: dict[int, list[float]] = {}
    for c, a in evaluated.items():
        sums.setdefault(c[axis], []).append(a)
    return {v: float(np.mean(xs)) for v, xs in sums.items()}


def hill_climb(
    space: ConfigSpace,
    config: Config,
    gradient: GradientEstimate | np.ndarray,
    evaluated: Mapping[Config, float],
    queued: Iterable[Config] = (),
) -> list[Config]:
    """One step along every axis whose gradient points uphill, steepest first.

    Numeric axes step by one index in the gradient's sign. A categorical axis
    with positive component moves to the best-scoring category (mean estimate
    over evaluated points) that is still open, or the lowest-index open
    category when nothing is known. With an all-zero gradient every open
    neighbor is returned.
    """
    config = tuple(config)
    v = np.asarray(getattr(gradient, "components", gradient), dtype=float)
    blocked = set(evaluated) | set(queued)

    if not np.any(v):
        return [n for n in space.neighbors(config) if n not in blocked]

    out: list[Config] = []
    axes = sorted(range(len(v)), key=lambda i: (-abs(v[i]), i))
    for k in axes:
        if v[k] == 0:
            continue
        prm = space.params[k]
        if prm.categorical:
            if v[k] < 0:
                continue
            opts = [
                config[:k] + (j,) + config[k + 1 :]
                for j in range(prm.size)
                if j != config[k]
            ]
            opts = [n for n in opts if space.contains(n) and n not in blocked and n not in out]
            if not opts:
                continue
            scores = _category_scores(space, k, evaluated)
            known = [n for n in opts if n[k] in scores]
            if known:
                best = max(known, key=lambda n: (scores[n[k]], -n[k]))
                if scores[best[k]] >= scores.get(config[k], -np.inf):
                    out.append(best)
                    continue
            unknown = [n for n in opts if n[k] not in scores]
            if unknown:
                out.append(unknown[0])
        else:
            j = config[k] + (1 if v[k] > 0 else -1)
            if not 0 <= j < prm.size:
                continue
            n = config[:k] + (j,) + config[k + 1 :]
            if space.contains(n) and n not in blocked and n not in out:
                out.append(n)
    return out


def lateral_expand(
    space: ConfigSpace,
    config: Config,
    evaluated: Mapping[Config, float],
    queued: Iterable[Config] = (),
    low_gradient_quantile: float = 1.0,
    k_neighbors: int = 5,
    p: float = 2.0,
) -> list[Config]:
    """Open neighbors along the low-gradient axes of a feasible configuration."""
    config = tuple(config)
    blocked = set(evaluated) | set(queued)
    mags = np.abs(idw_gradient(space, config, evaluated, k_neighbors, p).components)
    cut = np.quantile(mags, low_gradient_quantile)
    low = set(np.flatnonzero(mags <= cut).tolist())
    out = []
    for n in space.neighbors(config):
        axis = next(i for i, (a, b) in enumerate(zip(config, n)) if a != b)
        if axis in low and n not in blocked:
            out.append(n)
    return out


def compass_v_search(
    space: ConfigSpace,
    oracle: AccuracyOracle,
    params: SearchParams,
    schedule: BudgetSchedule,
    seed: int,
) -> SearchResult:
    tau = params.tau
    stats = SearchStats()
    evaluated: dict[Config, EvalRecord] = {}
    acc: dict[Config, float] = {}
    feasible: dict[Config, EvalRecord] = {}
    trace: list[dict] = []

    queue: deque[Config] = deque()
    queued: set[Config] = set()

    def push(cands: Iterable[Config]) -> None:
        for c in cands:
            if c not in queued and c not in evaluated:
                queue.append(c)
                queued.add(c)

    push(lhs_sample(space, min(params.n_init, space.size), derive_seed(seed, "lhs", 0)))
    rounds = 0
    while queue:
        c = queue.popleft()
        queued.discard(c)
        rec = progressive_evaluate(oracle, c, schedule, tau, config_rng(seed, c))
        evaluated[c] = rec
        acc[c] = rec.acc_hat
        stats.evaluations += 1
        stats.samples += rec.samples_spent

        if rec.feasible:
            feasible[c] = rec
            push(
                lateral_expand(
                    space, c, acc, queued, params.low_gradient_quantile,
                    params.k_neighbors, params.idw_exponent,
                )
            )
            stats.lateral_expansions += 1
            step = "lateral"
        else:
            grad = idw_gradient(space, c, acc, params.k_neighbors, params.idw_exponent)
            push(hill_climb(space, c, grad, acc, queued))
            stats.hill_climb_steps += 1
            step = "hill_climb"

        trace.append(
            {
                "order": stats.evaluations,
                "config": c,
                "classification": rec.classification,
                "feasible": rec.feasible,
                "acc_hat": rec.acc_hat,
                "samples": rec.samples_spent,
                "cumulative_samples": stats.samples,
                "feasible_found": len(feasible),
                "queue_size": len(queue),
                "step": step,
            }
        )

        # a round whose draws were all evaluated already still counts
        while not queue and not feasible and rounds < params.restart_rounds:
            rounds += 1
            stats.restarts += 1
            fresh = lhs_sample(space, min(params.n_init, space.size), derive_seed(seed, "lhs", rounds))
            push(c for c in fresh if c not in evaluated)

    return SearchResult(feasible=feasible, evaluated=evaluated, stats=stats, trace=trace)


def grid_search_oracle(
    space: ConfigSpace,
    oracle: AccuracyOracle,
    tau: float,
    schedule: BudgetSchedule,
    seed: int,
    b_max: int | None = None,
) -> GridResult:
    """Evaluate every configuration with exactly B_max trials.

    Draws come from the same per-configuration streams as the search, so the
    ground truth and the search see identical outcomes. The progressive
    classification of each configuration is returned alongside.
    """
    b_max = schedule.b_max if b_max is None else int(b_max)
    feasible: dict[Config, float] = {}
    accuracy: dict[Config, float] = {}
    progressive: dict[Config, EvalRecord] = {}
    for c in space.configs:
        p = oracle.true_accuracy(c)
        draws = config_rng(seed, c).random(b_max) < p
        a = float(np.count_nonzero(draws)) / b_max
        accuracy[c] = a
        if a >= tau:
            feasible[c] = a
        progressive[c] = progressive_evaluate(oracle, c, schedule, tau, config_rng(seed, c))
    return GridResult(
        feasible=feasible,
        accuracy=accuracy,
        samples=space.size * b_max,
        progressive=progressive,
        b_max=b_max,
    )


def recall_and_savings(compass: SearchResult, grid: GridResult) -> dict:
    fc, fg = set(compass.feasible), set(grid.feasible)
    recall = 1.0 if not fg else len(fc & fg) / len(fg)
    return {
        "recall": recall,
        "savings": 1.0 - compass.samples / grid.samples,
        "false_positives": len(fc - fg),
        "missed": len(fg - fc),
        "compass_feasible": len(fc),
        "grid_feasible": len(fg),
        "compass_samples": compass.samples,
        "grid_samples": grid.samples,
        "evaluations": compass.stats.evaluations,
    }

