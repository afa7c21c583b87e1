"""Discrete-event simulation of a single FIFO server whose configuration is
switched at runtime by a queue-depth controller."""

from __future__ import annotations

import csv
import heapq
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .planner import LogNormal, SwitchingPolicy, nearest_rank
from .seeding import rng_for

PATTERNS = ("constant", "spike", "bursty")

UP = "up"
DOWN = "down"


@dataclass(frozen=True)
class LoadPattern:
    kind: str
    base_qps: float
    duration_s: float
    spike_multiplier: float = 4.0
    spike_window_s: tuple[float, float] | None = None  # default: middle third
    burst_rate_per_s: float = 1.0 / 30.0
    burst_multiplier: tuple[float, float] = (2.0, 5.0)
    burst_length_s: tuple[float, float] = (5.0, 15.0)
    regular: bool = False  # evenly spaced arrivals instead of Poisson (constant only)

    def __post_init__(self) -> None:
        if self.kind not in PATTERNS:
            raise ValueError(f"unknown load pattern {self.kind!r}; expected one of {PATTERNS}")
        if not self.base_qps > 0:
            raise ValueError("base_qps must be > 0")
        if self.duration_s < 0:
            raise ValueError("duration must be >= 0")
        if self.spike_multiplier <= 0 or self.burst_rate_per_s < 0:
            raise ValueError("rates must be positive")
        lo, hi = self.burst_multiplier
        if not 0 < lo <= hi:
            raise ValueError("burst multiplier range must satisfy 0 < lo <= hi")
        lo, hi = self.burst_length_s
        if not 0 <= lo <= hi:
            raise ValueError("burst length range must satisfy 0 <= lo <= hi")
        if self.regular and self.kind != "constant":
            raise ValueError("regular arrivals are only defined for the constant pattern")
        if self.spike_window_s is not None:
            a, b = self.spike_window_s
            if not 0 <= a <= b <= self.duration_s:
                raise ValueError("spike window must lie within [0, duration]")

    @property
    def spike_window(self) -> tuple[float, float]:
        if self.spike_window_s is not None:
            return self.spike_window_s
        return (self.duration_s / 3.0, 2.0 * self.duration_s / 3.0)

    def bursts(self, seed: int) -> list[tuple[float, float, float]]:
        """(start_s, end_s, multiplier) for every burst of a bursty pattern."""
        if self.kind != "bursty" or self.burst_rate_per_s == 0:
            return []
        rng = rng_for(seed, "bursts")
        out = []
        t = 0.0
        while True:
            t += rng.exponential(1.0 / self.burst_rate_per_s)
            if t >= self.duration_s:
                return out
            mult = rng.uniform(*self.burst_multiplier)
            length = rng.uniform(*self.burst_length_s)
            out.append((t, min(t + length, self.duration_s), mult))

    def rate(self, t: np.ndarray, bursts: Sequence[tuple[float, float, float]] = ()) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        mult = np.ones_like(t)
        if self.kind == "spike":
            a, b = self.spike_window
            mult = np.where((t >= a) & (t < b), self.spike_multiplier, 1.0)
        elif self.kind == "bursty":
            for start, end, m in bursts:
                # overlapping bursts: the larger multiplier wins
                mult = np.where((t >= start) & (t < end), np.maximum(mult, m), mult)
        return self.base_qps * mult

    def peak_multiplier(self) -> float:
        if self.kind == "spike":
            return max(1.0, self.spike_multiplier)
        if self.kind == "bursty":
            return max(1.0, self.burst_multiplier[1])
        return 1.0


def generate_arrivals(pattern: LoadPattern, seed: int) -> np.ndarray:
    """Arrival times in seconds, by thinning a homogeneous process at peak rate."""
    if pattern.duration_s == 0:
        return np.zeros(0)
    if pattern.regular:
        gap = 1.0 / pattern.base_qps
        return np.arange(0.5 * gap, pattern.duration_s, gap)
    lam_max = pattern.base_qps * pattern.peak_multiplier()
    rng = rng_for(seed, "arrivals")
    n = rng.poisson(lam_max * pattern.duration_s)
    t = np.sort(rng.uniform(0.0, pattern.duration_s, n))
    keep = rng.random(n) * lam_max < pattern.rate(t, pattern.bursts(seed))
    return t[keep]


# -- controller -------------------------------------------------------------------


@dataclass
class ControllerState:
    k: int
    last_up_s: float = -math.inf
    last_down_s: float = -math.inf


def elastico_decide(
    state: ControllerState,
    policy: SwitchingPolicy,
    n_queued: int,
    now_s: float,
    single_rung: bool = False,
) -> int | None:
    """Target entry index, or None to stay. Does not mutate ``state``."""
    entries = policy.entries
    k = state.k
    if n_queued > entries[k].upscale_threshold and now_s - state.last_up_s >= policy.cooldown_up_s:
        if k == 0:
            return None
        if single_rung:
            return k - 1
        for j in range(k - 1, -1, -1):
            if n_queued <= entries[j].upscale_threshold:
                return j
        return 0
    n_down = entries[k].downscale_threshold
    if (
        k < len(entries) - 1
        and n_down is not None
        and n_queued < n_down
        and now_s - state.last_down_s >= policy.cooldown_down_s
        and now_s - state.last_up_s >= policy.cooldown_down_s
    ):
        return k + 1
    return None


# -- simulation -------------------------------------------------------------------


@dataclass
class SimTrace:
    arrival_ms: np.ndarray
    start_ms: np.ndarray
    completion_ms: np.ndarray
    config_index: np.ndarray
    switches: list[tuple[float, int, int, str]] = field(default_factory=list)
    initial_index: int = 0

    def __len__(self) -> int:
        return len(self.arrival_ms)

    @property
    def latency_ms(self) -> np.ndarray:
        return self.completion_ms - self.arrival_ms

    @property
    def wait_ms(self) -> np.ndarray:
        return self.start_ms - self.arrival_ms


@dataclass(frozen=True)
class SimMetrics:
    n_requests: int
    slo_ms: float
    slo_compliance: float
    p50_ms: float
    p95_ms: float
    p99_ms: float
    mean_latency_ms: float
    mean_wait_ms: float
    mean_accuracy: float
    switches_up: int
    switches_down: int
    timeline: list[dict] = field(default_factory=list, compare=False)

    def to_dict(self) -> dict:
        return {
            "n_requests": self.n_requests,
            "slo_ms": self.slo_ms,
            "slo_compliance": round(self.slo_compliance, 6),
            "p50_ms": round(self.p50_ms, 3),
            "p95_ms": round(self.p95_ms, 3),
            "p99_ms": round(self.p99_ms, 3),
            "mean_latency_ms": round(self.mean_latency_ms, 3),
            "mean_wait_ms": round(self.mean_wait_ms, 3),
            "mean_accuracy": round(self.mean_accuracy, 6),
            "switches_up": self.switches_up,
            "switches_down": self.switches_down,
        }


def policy_dists(policy: SwitchingPolicy, model=None) -> list:
    """Service distributions for each policy entry.

    With no service model the entry's profiled mean and P95 are matched by a
    lognormal (degenerating to a point mass when they coincide).
    """
    if model is not None:
        return [model.dist(e.config) for e in policy.entries]
    out = []
    for e in policy.entries:
        if e.p95_ms <= e.mean_ms:
            out.append(LogNormal(math.log(e.mean_ms), 0.0))
        else:
            out.append(LogNormal.from_mean_p95(e.mean_ms, e.p95_ms))
    return out


_ARRIVAL, _COMPLETION, _SWITCH_READY = 0, 1, 2


def run_simulation(
    policy: SwitchingPolicy,
    dists: Sequence,
    arrivals_s: np.ndarray,
    seed: int,
    switch_latency_ms: float = 10.0,
    static_index: int | None = None,
    count_in_service: bool = False,
    single_rung: bool = False,
    initial_index: int | None = None,
) -> SimTrace:
    """Serve ``arrivals_s`` FIFO on one server.

    Request i's service time is ``dists[k].quantile(u_i)`` with ``u_i`` from a
    stream keyed by ``seed`` alone, so strategies compared on the same seed
    see the same per-request difficulty. With ``static_index`` the controller
    is off. Otherwise it runs after every arrival and completion, once any
    idle server has picked up the head of the queue.
    """
    n_entries = len(policy.entries)
    if n_entries == 0:
        raise ValueError("policy has no entries")
    if len(dists) != n_entries:
        raise ValueError("need one service distribution per policy entry")
    if static_index is not None and not 0 <= static_index < n_entries:
        raise ValueError(f"static index {static_index} out of range [0, {n_entries})")
    if switch_latency_ms < 0:
        raise ValueError("switch latency must be >= 0")

    arr = np.asarray(arrivals_s, dtype=float) * 1000.0
    n = arr.size
    u = rng_for(seed, "service").random(n)
    service = np.vstack([np.asarray(d.quantile(u), dtype=float) for d in dists]) if n else np.zeros((n_entries, 0))

    start = np.zeros(n)
    done = np.zeros(n)
    served_by = np.zeros(n, dtype=np.int64)

    if static_index is not None:
        k0 = static_index
    elif initial_index is not None:
        k0 = initial_index
    else:
        k0 = n_entries - 1
    state = ControllerState(k=k0)
    switches: list[tuple[float, int, int, str]] = []

    events: list[tuple[float, int, int, int]] = []  # (time, kind, seq, payload)
    seq = 0
    for i in range(n):
        events.append((arr[i], _ARRIVAL, seq, i))
        seq += 1
    heapq.heapify(events)

    waiting: deque[int] = deque()
    busy = False
    ready_at = -math.inf  # dispatches are held until a pending switch lands
    ready_scheduled = False

    while events:
        now, kind, _, payload = heapq.heappop(events)
        if kind == _ARRIVAL:
            waiting.append(payload)
        elif kind == _COMPLETION:
            busy = False
        else:
            ready_scheduled = False

        if not busy and waiting:
            if now >= ready_at:
                i = waiting.popleft()
                start[i] = now
                served_by[i] = state.k
                done[i] = now + service[state.k, i]
                busy = True
                heapq.heappush(events, (done[i], _COMPLETION, seq, i))
                seq += 1
            elif not ready_scheduled:
                heapq.heappush(events, (ready_at, _SWITCH_READY, seq, -1))
                seq += 1
                ready_scheduled = True

        if static_index is not None or kind == _SWITCH_READY:
            continue
        n_q = len(waiting) + (1 if (count_in_service and busy) else 0)
        now_s = now / 1000.0
        target = elastico_decide(state, policy, n_q, now_s, single_rung)
        if target is None:
            continue
        direction = UP if target < state.k else DOWN
        switches.append((now, state.k, target, direction))
        if direction == UP:
            state.last_up_s = now_s
        else:
            state.last_down_s = now_s
        state.k = target
        ready_at = now + switch_latency_ms
        if not busy and waiting and not ready_scheduled:
            heapq.heappush(events, (ready_at, _SWITCH_READY, seq, -1))
            seq += 1
            ready_scheduled = True

    return SimTrace(arr, start, done, served_by, switches, k0)


# -- metrics and files ------------------------------------------------------------


def _timeline(trace: SimTrace, duration_s: float | None) -> list[dict]:
    n = len(trace)
    end_ms = float(trace.completion_ms.max()) if n else 0.0
    if duration_s is not None:
        end_ms = max(end_ms, duration_s * 1000.0)
    n_bins = int(math.ceil(end_ms / 1000.0)) if end_ms > 0 else 0
    arr_sorted = np.sort(trace.arrival_ms)
    start_sorted = np.sort(trace.start_ms)
    sw_t = np.array([s[0] for s in trace.switches])
    sw_to = [s[2] for s in trace.switches]
    rows = []
    for t in range(n_bins):
        edge = (t + 1) * 1000.0
        arrived = int(np.searchsorted(arr_sorted, edge, side="left"))
        started = int(np.searchsorted(start_sorted, edge, side="left"))
        m = int(np.searchsorted(sw_t, edge, side="left")) if sw_t.size else 0
        active = sw_to[m - 1] if m else trace.initial_index
        rows.append(
            {
                "t_s": t,
                "queue_depth": arrived - started,
                "active_config": active,
                "arrivals": arrived - int(np.searchsorted(arr_sorted, t * 1000.0, side="left")),
            }
        )
    return rows


def compute_metrics(
    trace: SimTrace,
    slo_ms: float,
    accuracies: Sequence[float],
    duration_s: float | None = None,
) -> SimMetrics:
    """Queue depth in the timeline is the number waiting at the end of each second."""
    lat = trace.latency_ms
    n = lat.size
    acc = np.asarray(accuracies, dtype=float)
    if n == 0:
        return SimMetrics(0, slo_ms, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0, 0, _timeline(trace, duration_s))
    return SimMetrics(
        n_requests=int(n),
        slo_ms=slo_ms,
        slo_compliance=float(np.mean(lat <= slo_ms)),
        p50_ms=nearest_rank(lat, 0.50),
        p95_ms=nearest_rank(lat, 0.95),
        p99_ms=nearest_rank(lat, 0.99),
        mean_latency_ms=float(lat.mean()),
        mean_wait_ms=float(trace.wait_ms.mean()),
        mean_accuracy=float(acc[trace.config_index].mean()),
        switches_up=sum(1 for s in trace.switches if s[3] == UP),
        switches_down=sum(1 for s in trace.switches if s[3] == DOWN),
        timeline=_timeline(trace, duration_s),
    )


def write_trace_csv(trace: SimTrace, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(["id", "arrival_ms", "start_ms", "completion_ms", "config_index"])
        for i in range(len(trace)):
            w.writerow(
                [
                    i,
                    int(round(trace.arrival_ms[i])),
                    int(round(trace.start_ms[i])),
                    int(round(trace.completion_ms[i])),
                    int(trace.config_index[i]),
                ]
            )


def write_timeline_csv(metrics: SimMetrics, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(["t_s", "queue_depth", "active_config", "arrivals"])
        for r in metrics.timeline:
            w.writerow([r["t_s"], r["queue_depth"], r["active_config"], r["arrivals"]])


def pk_mean_wait_ms(rate_per_s: float, mean_ms: float, second_moment_ms2: float) -> float:
    """Mean M/G/1 waiting time, lambda E[S^2] / (2 (1 - rho))."""
    lam = rate_per_s / 1000.0
    rho = lam * mean_ms
    if rho >= 1:
        raise ValueError(f"unstable queue: rho={rho:.3f}")
    return lam * second_moment_ms2 / (2.0 * (1.0 - rho))
