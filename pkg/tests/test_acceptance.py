"""Acceptance criteria, one test each.

Every test records a PASS/FAIL line; the lines are printed at the end of a
pytest run (see conftest.py) and when this file is executed directly.
"""

import time
import warnings
from pathlib import Path

import numpy as np

from compasskit import pipeline as pl
from compasskit.planner import (
    Deterministic,
    LatencyProfile,
    LogNormal,
    ParetoEntry,
    SwitchingPolicy,
    build_policy,
    downscale_threshold,
    upscale_threshold,
)
from compasskit.scenario import load_scenario
from compasskit.seeding import derive_seed
from compasskit.servesim import (
    LoadPattern,
    generate_arrivals,
    pk_mean_wait_ms,
    policy_dists,
    run_simulation,
)

RESULTS: dict[int, str] = {}


def record(n: int, ok: bool, detail: str) -> None:
    RESULTS[n] = f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {detail}"


_SWEEPS: dict[str, tuple[list[dict], float]] = {}


def sweep(name: str) -> tuple[list[dict], float]:
    if name not in _SWEEPS:
        scn = load_scenario(name)
        t0 = time.perf_counter()
        rows = [pl.search_sweep_row(scn, tau, 0) for tau in scn.taus]
        _SWEEPS[name] = (rows, time.perf_counter() - t0)
    return _SWEEPS[name]


# -- 1. recall ----------------------------------------------------------------------


def test_recall_is_exact():
    parts, ok = [], True
    for name in ("rag_like", "cascade_like"):
        rows, secs = sweep(name)
        recalls = [r["recall"] for r in rows]
        fs = [r["feasible_fraction"] for r in rows]
        good = len(rows) == 8 and all(r == 1.0 for r in recalls) and secs < 120
        ok &= good
        parts.append(f"{name} recall min {min(recalls):.3f} over {len(rows)} taus, f {min(fs):.3f}..{max(fs):.3f}, {secs:.1f}s")
    record(1, ok, "; ".join(parts))
    assert ok


# -- 2. savings -----------------------------------------------------------------------


def test_savings_positive_and_convex():
    parts, ok = [], True
    for name in ("rag_like", "cascade_like"):
        rows, _ = sweep(name)
        by_f = sorted(rows, key=lambda r: r["feasible_fraction"])
        lo, hi = by_f[0], by_f[-1]
        mid = min(rows, key=lambda r: abs(r["feasible_fraction"] - 0.65))
        positive = all(r["savings"] > 0 for r in rows)
        convex = lo["savings"] - mid["savings"] >= 0.10 and hi["savings"] - mid["savings"] >= 0.10
        ok &= positive and convex
        parts.append(
            f"{name} savings {min(r['savings'] for r in rows):.3f}..{max(r['savings'] for r in rows):.3f}, "
            f"f={lo['feasible_fraction']:.3f}:{lo['savings']:.3f} f={mid['feasible_fraction']:.3f}:{mid['savings']:.3f} "
            f"f={hi['feasible_fraction']:.3f}:{hi['savings']:.3f}"
        )
    record(2, ok, "; ".join(parts))
    assert ok


# -- 3. threshold arithmetic ----------------------------------------------------------


def ratio_floor(a: float, b: float, c: float) -> int:
    """floor((a - b) / c) on the exact binary values, in integer arithmetic."""
    an, ad = a.as_integer_ratio()
    bn, bd = b.as_integer_ratio()
    cn, cd = c.as_integer_ratio()
    return ((an * bd - bn * ad) * cd) // (ad * bd * cn)


def test_threshold_arithmetic_exact():
    rng = np.random.default_rng(20240601)
    n = 10_000
    slo = rng.uniform(50, 5000, n)
    p95 = slo * rng.uniform(0.01, 0.999, n)
    mean = p95 * rng.uniform(0.2, 1.0, n)
    hs = slo * rng.uniform(0, 0.3, n)
    # a second, strictly slower and more accurate rung for the ordering check
    p95_b = p95 + (slo - p95) * rng.uniform(0.01, 0.99, n)
    mean_b = mean * rng.uniform(1.001, 3.0, n)
    up_bad = down_bad = order_bad = 0
    for L, s, m, h, s2, m2 in zip(*(x.tolist() for x in (slo, p95, mean, hs, p95_b, mean_b))):
        if upscale_threshold(L, s, m) != ratio_floor(L, s, m):
            up_bad += 1
        if downscale_threshold(L - s2, h, m2) != max(0, ratio_floor(L - s2, h, m2)):
            down_bad += 1
        if upscale_threshold(L, s2, m2) > upscale_threshold(L, s, m):
            order_bad += 1
        front = [
            ParetoEntry((0,), 0.7, LatencyProfile(m, s, 200)),
            ParetoEntry((1,), 0.8, LatencyProfile(m2, s2, 200)),
        ]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")  # equal N_up rungs merge with a warning
            pol = build_policy(front, L, h)
        ups = [e.upscale_threshold for e in pol.entries]
        if any(a <= b for a, b in zip(ups, ups[1:])):
            order_bad += 1
    ok = up_bad == down_bad == order_bad == 0
    record(3, ok, f"{n} tuples: N_up mismatches {up_bad}, N_down mismatches {down_bad}, ladder violations {order_bad}")
    assert ok


# -- 4. Pollaczek-Khinchine ---------------------------------------------------------


def test_pk_agreement():
    t0 = time.perf_counter()
    worst, ok, parts = 0.0, True, []
    for label, dist in (("M/D/1", Deterministic(200.0)), ("M/LN/1", LogNormal.from_mean_p95(200.0, 350.0))):
        for rho in (0.3, 0.6, 0.8):
            lam = rho / (dist.mean / 1000.0)
            arr = generate_arrivals(LoadPattern("constant", lam, 52_000 / lam), derive_seed(0, "pk", label, rho))
            pol = SwitchingPolicy([ParetoEntry((0,), 0.8, LatencyProfile(dist.mean, dist.p95 + 1e-9, 200))], 1e9, 0.0)
            tr = run_simulation(pol, [dist], arr, derive_seed(0, "pk-service", label, rho), static_index=0)
            ref = pk_mean_wait_ms(lam, dist.mean, dist.second_moment)
            err = abs(tr.wait_ms.mean() / ref - 1)
            worst = max(worst, err)
            ok &= len(tr) >= 50_000 and err <= 0.10
            parts.append(f"{label} rho={rho} n={len(tr)} err={100 * err:.1f}%")
    secs = time.perf_counter() - t0
    ok &= secs < 30
    record(4, ok, f"worst deviation {100 * worst:.1f}% in {secs:.1f}s ({', '.join(parts)})")
    assert ok


# -- 5. deterministic drain -----------------------------------------------------------


def test_deterministic_drain_exactness():
    cases = [(1000.0, 200.0), (1000.0, 120.0), (1500.0, 500.0), (500.0, 120.0), (800.0, 0.1 * 800), (1234.5, 67.8)]
    ok, parts = True, []
    for slo, s in cases:
        pol = build_policy([ParetoEntry((0,), 0.8, LatencyProfile(s, s, 200))], slo)
        n_up = pol.entries[0].upscale_threshold
        met = {}
        for waiting in (n_up, n_up + 1):
            # one request in service, `waiting` behind it, no further arrivals
            tr = run_simulation(pol, [Deterministic(s)], np.zeros(waiting + 1), 0, static_index=0)
            met[waiting] = float(np.mean(tr.latency_ms <= slo))
        good = met[n_up] == 1.0 and met[n_up + 1] < 1.0
        ok &= good
        parts.append(f"L={slo:g} S={s:g} N_up={n_up}: {met[n_up]:.2f}/{met[n_up + 1]:.2f}")
    record(5, ok, "compliance at N_up / N_up+1: " + ", ".join(parts))
    assert ok


# -- 6. adaptation dominance ----------------------------------------------------------


def table1_front():
    scn = load_scenario("paper_table1")
    res = pl.run_search(scn, scn.planning.tau, 0)
    return scn, pl.build_front(scn, ((c, r.acc_hat) for c, r in sorted(res.feasible.items())), 0)


def spike_gaps(scn, front, slo: float) -> tuple[dict, dict]:
    """Mean compliance and accuracy over 10 spike seeds for elastico and the
    two extreme static baselines."""
    pol = pl.plan_policy(scn, front, slo)
    static = pl.static_policy(front, slo)
    sim = scn.simulation
    pattern = LoadPattern("spike", sim.base_qps, sim.duration_s)
    modes = {"elastico": (pol, None), "fast": (static, 0), "accurate": (static, len(front) - 1)}
    comp = {k: [] for k in modes}
    acc = {k: [] for k in modes}
    for s in range(10):
        seed = derive_seed(0, "sim", "spike", s)
        for k, (p, idx) in modes.items():
            _, m = pl.simulate(p, policy_dists(p, scn.service_model), pattern, seed, sim.switch_latency_ms, idx)
            comp[k].append(m.slo_compliance)
            acc[k].append(m.mean_accuracy)
    return ({k: float(np.mean(v)) for k, v in comp.items()}, {k: float(np.mean(v)) for k, v in acc.items()})


def test_adaptation_dominance():
    scn, front = table1_front()
    lines, ok = [], None
    # 1500 ms is the tested SLO; 1000 ms is reported for reference only
    for slo in (1500.0, 1000.0):
        c, a = spike_gaps(scn, front, slo)
        dc = c["elastico"] - c["accurate"]
        da = a["elastico"] - a["fast"]
        if ok is None:
            ok = dc >= 0.30 and da >= 0.02
        lines.append(
            f"L={slo:g}: compliance elastico {c['elastico']:.3f} vs static-accurate {c['accurate']:.3f} "
            f"(+{100 * dc:.1f} pts), accuracy elastico {a['elastico']:.4f} vs static-fast {a['fast']:.4f} "
            f"(+{100 * da:.2f} pts)"
        )
    lines[1] += " [reference, not graded]"
    record(6, ok, "spike, 10 seeds; " + "; ".join(lines))
    assert ok


# -- 7. oscillation bound -------------------------------------------------------------


def test_no_switches_after_convergence():
    scn, front = table1_front()
    slo = 1500.0
    pol = pl.plan_policy(scn, front, slo)
    assert pol.cooldown_down_s == 5.0
    dists = policy_dists(pol, scn.service_model)
    window_s = pol.cooldown_down_s + 10 * pol.entries[-1].mean_ms / 1000
    arr = generate_arrivals(LoadPattern("constant", 1.0, 180, regular=True), 0)
    late, final, total = 0, [], 0
    for s in range(10):
        tr = run_simulation(pol, dists, arr, derive_seed(0, "hysteresis", s), initial_index=0)
        late += sum(1 for sw in tr.switches if sw[0] / 1000 > window_s)
        total += len(tr.switches)
        final.append(int(tr.config_index[-1]))
    ok = late == 0 and set(final) == {len(pol) - 1}
    record(
        7, ok,
        f"constant 1 qps, L={slo:g}, t_down=5 s, 10 service seeds from the fastest rung: "
        f"{total} switches inside the {window_s:.2f}s window, {late} after; final rung {sorted(set(final))}",
    )
    assert ok


# -- 8. reproducibility ---------------------------------------------------------------


def test_compare_is_byte_identical(tmp_path):
    scn = load_scenario("paper_table1")
    for d in ("a", "b"):
        pl.compare(scn, 0, tmp_path / d)
    files_a = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(tmp_path / "b") for p in (tmp_path / "b").rglob("*") if p.is_file())
    diff = [str(f) for f in files_a if (tmp_path / "a" / f).read_bytes() != (tmp_path / "b" / f).read_bytes()]
    ok = files_a == files_b and not diff
    record(8, ok, f"paper_table1 compare twice with seed 0: {len(files_a)} files, {len(diff)} differ")
    assert ok


if __name__ == "__main__":
    import sys
    import tempfile

    tests = [
        test_recall_is_exact, test_savings_positive_and_convex, test_threshold_arithmetic_exact,
        test_pk_agreement, test_deterministic_drain_exactness, test_adaptation_dominance,
        test_no_switches_after_convergence,
    ]
    for t in tests:
        try:
            t()
        except AssertionError:
            pass
    with tempfile.TemporaryDirectory() as d:
        try:
            test_compare_is_byte_identical(Path(d))
        except AssertionError:
            pass
    for n in sorted(RESULTS):
        print(RESULTS[n])
    sys.exit(0 if all(line.startswith("[PASS]") for line in RESULTS.values()) else 1)
