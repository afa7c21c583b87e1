"""Deployment planning: latency profiles, the accuracy/latency Pareto front,
and queue-depth switching thresholds."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .seeding import rng_for
from .space import Config, ConfigSpace

SCHEMA_VERSION = "1"
Z95 = 1.6448536269514722  # standard normal 0.95 quantile


class PlanningError(ValueError):
    pass


class SLOInfeasible(PlanningError):
    pass


# -- service-time distributions -----------------------------------------------


class Deterministic:
    family = "deterministic"

    def __init__(self, value_ms: float):
        if not value_ms > 0:
            raise PlanningError(f"service time must be positive, got {value_ms}")
        self.value = float(value_ms)

    @property
    def mean(self) -> float:
        return self.value

    @property
    def second_moment(self) -> float:
        return self.value**2

    @property
    def p95(self) -> float:
        return self.value

    def quantile(self, u: np.ndarray) -> np.ndarray:
        return np.full(np.shape(u), self.value)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.quantile(rng.random(n))


class LogNormal:
    family = "lognormal"

    def __init__(self, mu: float, sigma: float):
        if sigma < 0:
            raise PlanningError("lognormal sigma must be >= 0")
        self.mu = float(mu)
        self.sigma = float(sigma)

    @classmethod
    def from_median(cls, median_ms: float, sigma: float) -> "LogNormal":
        return cls(math.log(median_ms), sigma)

    @classmethod
    def from_mean_p95(cls, mean_ms: float, p95_ms: float) -> "LogNormal":
        """Match the mean and the 95th percentile exactly.

        With r = ln(p95 / mean) the log-sd solves sigma^2/2 - z*sigma + r = 0;
        the smaller root is taken.
        """
        if not (mean_ms > 0 and p95_ms >= mean_ms):
            raise PlanningError(f"need 0 < mean <= p95, got mean={mean_ms}, p95={p95_ms}")
        r = math.log(p95_ms / mean_ms)
        disc = Z95 * Z95 - 2.0 * r
        if disc < 0:
            raise PlanningError(f"p95/mean ratio {p95_ms / mean_ms:.3f} is too heavy for a lognormal")
        sigma = Z95 - math.sqrt(disc)
        return cls(math.log(mean_ms) - sigma * sigma / 2.0, sigma)

    @property
    def mean(self) -> float:
        return math.exp(self.mu + self.sigma**2 / 2.0)

    @property
    def second_moment(self) -> float:
        return math.exp(2.0 * self.mu + 2.0 * self.sigma**2)

    @property
    def p95(self) -> float:
        return math.exp(self.mu + Z95 * self.sigma)

    def quantile(self, u: np.ndarray) -> np.ndarray:
        from scipy.special import ndtri

        return np.exp(self.mu + self.sigma * ndtri(np.asarray(u, dtype=float)))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return np.exp(self.mu + self.sigma * rng.standard_normal(n))


class Empirical:
    family = "empirical-trace"

    def __init__(self, samples_ms: Sequence[float]):
        xs = np.sort(np.asarray(samples_ms, dtype=float))
        if xs.size == 0:
            raise PlanningError("empirical trace is empty")
        if xs[0] <= 0:
            raise PlanningError("empirical trace has non-positive samples")
        self.samples = xs

    @property
    def mean(self) -> float:
        return float(self.samples.mean())

    @property
    def second_moment(self) -> float:
        return float(np.mean(self.samples**2))

    @property
    def p95(self) -> float:
        return nearest_rank(self.samples, 0.95)

    def quantile(self, u: np.ndarray) -> np.ndarray:
        n = self.samples.size
        idx = np.minimum((np.asarray(u) * n).astype(int), n - 1)
        return self.samples[idx]

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.quantile(rng.random(n))


def _linear_ms(space: ConfigSpace, spec: Mapping[str, Any], c: Config) -> float:
    total = float(spec.get("base", 0.0))
    for name, term in (spec.get("terms") or {}).items():
        k = space.names.index(name)
        prm = space.params[k]
        if "levels" in term:
            total += float(term["levels"][c[k]])
        else:
            total += float(term["slope"]) * prm.position(c[k])
    return total


@dataclass
class ServiceModel:
    """Service-time distribution for every configuration of a space.

    ``lognormal`` takes its mean from ``mean_ms`` (base plus per-parameter
    terms) and either a ``p95_ratio`` (moment matched) or a fixed ``sigma``.
    ``deterministic`` uses ``value_ms``. ``empirical-trace`` lists raw samples
    per configuration.
    """

    space: ConfigSpace
    family: str
    spec: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.family not in ("lognormal", "deterministic", "empirical-trace"):
            raise PlanningError(f"unknown service model family {self.family!r}")
        self._traces: dict[Config, Empirical] = {}
        if self.family == "empirical-trace":
            for t in self.spec.get("traces") or []:
                self._traces[self.space.from_values(t["config"])] = Empirical(t["samples_ms"])

    def dist(self, c: Config):
        c = tuple(c)
        if self.family == "empirical-trace":
            try:
                return self._traces[c]
            except KeyError:
                raise PlanningError(f"no latency trace for {self.space.label(c)}") from None
        if self.family == "deterministic":
            return Deterministic(_linear_ms(self.space, self.spec.get("value_ms") or self.spec["mean_ms"], c))
        mean = _linear_ms(self.space, self.spec["mean_ms"], c)
        if mean <= 0:
            raise PlanningError(f"non-positive mean service time for {self.space.label(c)}")
        if "sigma" in self.spec:
            s = float(self.spec["sigma"])
            return LogNormal(math.log(mean) - s * s / 2.0, s)
        return LogNormal.from_mean_p95(mean, mean * float(self.spec.get("p95_ratio", 1.5)))


def service_model_from_dict(space: ConfigSpace, raw: Mapping[str, Any]) -> ServiceModel:
    return ServiceModel(space, str(raw.get("family")), dict(raw))


# -- profiling ------------------------------------------------------------------


def nearest_rank(values: Sequence[float] | np.ndarray, q: float) -> float:
    xs = np.sort(np.asarray(values, dtype=float))
    if xs.size == 0:
        raise ValueError("no values")
    rank = max(1, math.ceil(q * xs.size))
    return float(xs[rank - 1])


@dataclass(frozen=True)
class LatencyProfile:
    mean_ms: float
    p95_ms: float
    n: int
    samples: tuple[float, ...] | None = None


def profile_latency(
    model: ServiceModel,
    config: Config,
    n_runs: int = 200,
    seed: int = 0,
    keep_samples: bool = False,
) -> LatencyProfile:
    if n_runs < 100:
        raise PlanningError("profiling needs n_runs >= 100 for a P95")
    dist = model.dist(config)
    n = n_runs
    for attempt in range(6):
        xs = dist.sample(rng_for(seed, "profile", attempt, *config), n)
        if np.any(xs <= 0):
            raise PlanningError(f"non-positive service sample for {config}")
        mean, p95 = float(xs.mean()), nearest_rank(xs, 0.95)
        if mean <= p95:
            return LatencyProfile(mean, p95, n, tuple(xs.tolist()) if keep_samples else None)
        n *= 2
    raise PlanningError(f"profile of {config} keeps showing mean > p95")


# -- Pareto front -------------------------------------------------------------


@dataclass(frozen=True)
class ParetoEntry:
    config: Config
    accuracy: float
    profile: LatencyProfile
    upscale_threshold: int | None = None
    downscale_threshold: int | None = None
    slack_ms: float | None = None

    @property
    def mean_ms(self) -> float:
        return self.profile.mean_ms

    @property
    def p95_ms(self) -> float:
        return self.profile.p95_ms


def pareto_front(points: Iterable[tuple[Config, float, LatencyProfile]]) -> list[ParetoEntry]:
    """Non-dominated (accuracy up, mean latency down) points, fastest first."""
    pts = sorted(points, key=lambda t: (t[2].mean_ms, -t[1], t[0]))
    front: list[ParetoEntry] = []
    best_acc = -math.inf
    for c, a, prof in pts:
        # sorted by mean then accuracy desc: a point survives iff it beats
        # every faster-or-equal point on accuracy
        if a > best_acc:
            if front and front[-1].mean_ms == prof.mean_ms:
                continue
            front.append(ParetoEntry(c, a, prof))
            best_acc = a
    return front


def is_dominated(a: tuple[float, float], b: tuple[float, float]) -> bool:
    """True if (accuracy, mean) point ``a`` is dominated by ``b``."""
    return b[0] >= a[0] and b[1] <= a[1] and (b[0] > a[0] or b[1] < a[1])


# -- thresholds -----------------------------------------------------------------


def _q(x: float | int | Fraction) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x)


def queuing_slack(slo_ms: float, p95_ms: float) -> float:
    return slo_ms - p95_ms


def upscale_threshold(slo_ms: float, p95_ms: float, mean_ms: float) -> int:
    """floor((L - s95) / mean), evaluated exactly on the given floats."""
    if not mean_ms > 0:
        raise PlanningError("mean service time must be > 0")
    slack = _q(slo_ms) - _q(p95_ms)
    if slack <= 0:
        raise PlanningError("non-positive queuing slack")
    return math.floor(slack / _q(mean_ms))


def downscale_threshold(slack_next_ms: float, slack_buffer_ms: float, mean_next_ms: float) -> int:
    """floor((slack_next - h_s) / mean_next), clamped at 0."""
    if not mean_next_ms > 0:
        raise PlanningError("mean service time must be > 0")
    if slack_buffer_ms < 0:
        raise PlanningError("slack buffer must be >= 0")
    return max(0, math.floor((_q(slack_next_ms) - _q(slack_buffer_ms)) / _q(mean_next_ms)))


@dataclass
class SwitchingPolicy:
    entries: list[ParetoEntry]
    slo_ms: float
    slack_buffer_ms: float
    cooldown_up_s: float = 0.0
    cooldown_down_s: float = 5.0
    labels: list[dict] | None = None

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def accuracies(self) -> list[float]:
        return [e.accuracy for e in self.entries]

    def to_dict(self, space: ConfigSpace | None = None) -> dict:
        out = []
        for i, e in enumerate(self.entries):
            if space is not None:
                label = space.label(e.config)
            elif self.labels is not None:
                label = self.labels[i]
            else:
                label = {f"p{k}": v for k, v in enumerate(e.config)}
            out.append(
                {
                    "config": label,
                    "indices": list(e.config),
                    "accuracy": e.accuracy,
                    "mean_ms": e.mean_ms,
                    "p95_ms": e.p95_ms,
                    "slack_ms": e.slack_ms,
                    "upscale_threshold": e.upscale_threshold,
                    "downscale_threshold": e.downscale_threshold,
                }
            )
        return {
            "schema_version": SCHEMA_VERSION,
            "slo_ms": self.slo_ms,
            "slack_buffer_ms": self.slack_buffer_ms,
            "cooldown_up_s": self.cooldown_up_s,
            "cooldown_down_s": self.cooldown_down_s,
            "entries": out,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "SwitchingPolicy":
        entries = [
            ParetoEntry(
                config=tuple(e["indices"]),
                accuracy=float(e["accuracy"]),
                profile=LatencyProfile(float(e["mean_ms"]), float(e["p95_ms"]), 0),
                upscale_threshold=e["upscale_threshold"],
                downscale_threshold=e["downscale_threshold"],
                slack_ms=e["slack_ms"],
            )
            for e in d["entries"]
        ]
        return cls(
            entries=entries,
            slo_ms=float(d["slo_ms"]),
            slack_buffer_ms=float(d["slack_buffer_ms"]),
            cooldown_up_s=float(d["cooldown_up_s"]),
            cooldown_down_s=float(d["cooldown_down_s"]),
            labels=[dict(e["config"]) for e in d["entries"]],
        )


def build_policy(
    front: Sequence[ParetoEntry],
    slo_ms: float,
    slack_buffer_ms: float | None = None,
    cooldown_up_s: float = 0.0,
    cooldown_down_s: float = 5.0,
) -> SwitchingPolicy:
    """Thresholds for every front entry that can meet the SLO at all.

    Entries with s95 >= L are dropped. When a faster rung does not tolerate a
    strictly longer queue than the next slower one, it buys nothing under the
    queueing model and is merged away (the more accurate rung is kept), so the
    upscale ladder is strictly decreasing.
    """
    if slack_buffer_ms is None:
        slack_buffer_ms = 0.1 * slo_ms
    if cooldown_up_s < 0 or cooldown_down_s < 0:
        raise PlanningError("cooldowns must be >= 0")
    kept = [e for e in front if queuing_slack(slo_ms, e.p95_ms) > 0]
    if not kept:
        raise SLOInfeasible(f"SLO infeasible on this hardware: every P95 >= {slo_ms} ms")

    ups = [upscale_threshold(slo_ms, e.p95_ms, e.mean_ms) for e in kept]
    ladder: list[tuple[ParetoEntry, int]] = []
    for e, n_up in reversed(list(zip(kept, ups))):
        if ladder and n_up <= ladder[-1][1]:
            warnings.warn(
                f"rung {e.config} tolerates no more queue than a slower rung "
                f"({n_up} <= {ladder[-1][1]}); merged",
                stacklevel=2,
            )
            continue
        ladder.append((e, n_up))
    ladder.reverse()

    entries: list[ParetoEntry] = []
    for k, (e, n_up) in enumerate(ladder):
        n_down = None
        if k + 1 < len(ladder):
            nxt = ladder[k + 1][0]
            n_down = downscale_threshold(
                queuing_slack(slo_ms, nxt.p95_ms), slack_buffer_ms, nxt.mean_ms
            )
            assert n_down <= ladder[k + 1][1]
        entries.append(
            replace(
                e,
                upscale_threshold=n_up,
                downscale_threshold=n_down,
                slack_ms=queuing_slack(slo_ms, e.p95_ms),
            )
        )
    for a, b in zip(entries, entries[1:]):
        assert a.upscale_threshold > b.upscale_threshold
    return SwitchingPolicy(entries, slo_ms, slack_buffer_ms, cooldown_up_s, cooldown_down_s)
