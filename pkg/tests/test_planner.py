import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from compasskit.planner import (
    Deterministic,
    Empirical,
    LatencyProfile,
    LogNormal,
    ParetoEntry,
    PlanningError,
    ServiceModel,
    SLOInfeasible,
    SwitchingPolicy,
    build_policy,
    downscale_threshold,
    is_dominated,
    nearest_rank,
    pareto_front,
    profile_latency,
    queuing_slack,
    upscale_threshold,
)
from compasskit.space import ConfigSpace, ParameterSpec

SPACE = ConfigSpace((ParameterSpec("g", "categorical", ("s", "m", "l")), ParameterSpec("k", "ordinal-discrete", (1, 2, 3))))


def entry(mean, p95, acc=0.8, c=(0,)):
    return ParetoEntry(c, acc, LatencyProfile(mean, p95, 200))


TABLE = [entry(120, 200, 0.761, (0,)), entry(300, 450, 0.825, (1,)), entry(500, 700, 0.853, (2,))]


# -- distributions ---------------------------------------------------------------


def test_deterministic_profile():
    model = ServiceModel(SPACE, "deterministic", {"value_ms": {"base": 200}})
    prof = profile_latency(model, (0, 0), 100, 0)
    assert prof.mean_ms == prof.p95_ms == 200


def test_lognormal_mean_matches_closed_form():
    d = LogNormal.from_median(180, 0.35)
    analytic = 180 * math.exp(0.35**2 / 2)
    assert d.mean == pytest.approx(analytic)
    model = ServiceModel(SPACE, "lognormal", {"mean_ms": {"base": analytic}, "sigma": 0.35})
    prof = profile_latency(model, (0, 0), 10_000, 3)
    assert abs(prof.mean_ms / analytic - 1) < 0.02


def test_mean_p95_fit_matches_scipy_root():
    # independent fit: solve exp(z*s - s^2/2) = p95/mean numerically
    z = stats.norm.ppf(0.95)
    s_ref = __import__("scipy.optimize", fromlist=["brentq"]).brentq(
        lambda s: math.exp(z * s - s * s / 2) - 200 / 120, 1e-9, z
    )
    d = LogNormal.from_mean_p95(120, 200)
    assert d.sigma == pytest.approx(s_ref, rel=1e-9)
    assert d.mean == pytest.approx(120)
    assert d.p95 == pytest.approx(200)
    assert stats.lognorm(s=d.sigma, scale=math.exp(d.mu)).ppf(0.95) == pytest.approx(200)


def test_fit_rejects_impossible_ratios():
    with pytest.raises(PlanningError):
        LogNormal.from_mean_p95(100, 90)
    with pytest.raises(PlanningError):
        LogNormal.from_mean_p95(100, 500)


def test_empirical_quantile_and_moments():
    d = Empirical([3.0, 1.0, 2.0, 4.0])
    assert d.quantile(np.array([0.0, 0.26, 0.5, 0.999])).tolist() == [1.0, 2.0, 3.0, 4.0]
    assert d.mean == 2.5 and d.second_moment == pytest.approx(7.5)
    with pytest.raises(PlanningError):
        Empirical([1.0, -1.0])


def test_nearest_rank():
    xs = np.arange(1, 101)[::-1]
    assert nearest_rank(xs, 0.95) == 95
    assert nearest_rank([5.0], 0.95) == 5.0


def test_profile_needs_enough_runs():
    model = ServiceModel(SPACE, "deterministic", {"value_ms": {"base": 10}})
    with pytest.raises(PlanningError):
        profile_latency(model, (0, 0), 50, 0)


def test_profile_deterministic_given_seed():
    model = ServiceModel(SPACE, "lognormal", {"mean_ms": {"base": 50, "terms": {"k": {"slope": 20}}}, "p95_ratio": 1.5})
    assert profile_latency(model, (1, 2), 300, 5) == profile_latency(model, (1, 2), 300, 5)


def test_service_model_terms():
    model = ServiceModel(
        SPACE, "lognormal",
        {"mean_ms": {"base": 10, "terms": {"g": {"levels": [0, 50, 100]}, "k": {"slope": 40}}}, "p95_ratio": 1.5},
    )
    assert model.dist((2, 1)).mean == pytest.approx(10 + 100 + 20)
    with pytest.raises(PlanningError):
        ServiceModel(SPACE, "weird")


# -- Pareto ---------------------------------------------------------------------


def prof(m):
    return LatencyProfile(m, m * 1.5, 200)


def test_pareto_drops_dominated():
    front = pareto_front([((0,), 0.76, prof(120)), ((1,), 0.82, prof(300)), ((2,), 0.80, prof(400))])
    assert [e.config for e in front] == [(0,), (1,)]


def test_pareto_single_and_empty():
    assert len(pareto_front([((0,), 0.5, prof(10))])) == 1
    assert pareto_front([]) == []


def test_pareto_tie_keeps_lexicographically_smallest():
    front = pareto_front([((2,), 0.8, prof(100)), ((1,), 0.8, prof(100))])
    assert [e.config for e in front] == [(1,)]


def test_pareto_equal_mean_keeps_more_accurate():
    front = pareto_front([((0,), 0.7, prof(100)), ((1,), 0.9, prof(100))])
    assert [e.config for e in front] == [(1,)]


@given(st.lists(st.tuples(st.integers(0, 20), st.integers(1, 30)), min_size=1, max_size=40))
def test_pareto_sound_and_complete(raw):
    pts = [((i,), a / 20, prof(float(m))) for i, (a, m) in enumerate(raw)]
    front = pareto_front(pts)
    kept = {e.config for e in front}
    obj = {c: (a, p.mean_ms) for c, a, p in pts}
    for c in kept:
        assert not any(is_dominated(obj[c], obj[o]) for o in obj if o != c)
    for c in obj:
        if c not in kept:
            assert any(is_dominated(obj[c], obj[k]) or obj[c] == obj[k] for k in kept)
    means = [e.mean_ms for e in front]
    accs = [e.accuracy for e in front]
    assert means == sorted(set(means)) and accs == sorted(set(accs))


# -- thresholds -------------------------------------------------------------------


def test_slack_examples():
    assert queuing_slack(1000, 700) == 300
    assert queuing_slack(500, 700) == -200
    assert queuing_slack(700, 700) == 0


def test_upscale_examples():
    assert upscale_threshold(1000, 200, 120) == 6
    assert upscale_threshold(1000, 700, 500) == 0
    assert upscale_threshold(1500, 700, 500) == 1
    with pytest.raises(PlanningError):
        upscale_threshold(700, 700, 100)


def test_downscale_examples():
    assert downscale_threshold(300, 100, 500) == 0
    assert downscale_threshold(550, 0, 300) == upscale_threshold(1000, 450, 300)
    assert downscale_threshold(80, 100, 10) == 0


def test_exact_floor_where_float_division_rounds_up():
    # (0.5 - 0.1) / 0.1 evaluates to 4.0 in floats, but the binary values
    # of those literals give a quotient just below 4
    assert math.floor((0.5 - 0.1) / 0.1) == 4
    assert upscale_threshold(0.5, 0.1, 0.1) == 3
    assert downscale_threshold(0.5, 0.1, 0.2) == 1


def ratio_floor(a: float, b: float, c: float) -> int:
    """floor((a - b) / c) over the exact binary values, integers only."""
    an, ad = a.as_integer_ratio()
    bn, bd = b.as_integer_ratio()
    cn, cd = c.as_integer_ratio()
    return ((an * bd - bn * ad) * cd) // (ad * bd * cn)


def test_thresholds_match_integer_oracle_on_random_tuples():
    rng = np.random.default_rng(11)
    slo = rng.uniform(1, 5000, 10_000)
    p95 = slo * rng.uniform(0, 1, 10_000)
    mean = rng.uniform(0.5, 2000, 10_000)
    h = rng.uniform(0, 1, 10_000) * slo
    for L, s, m, hs in zip(slo.tolist(), p95.tolist(), mean.tolist(), h.tolist()):
        if s >= L:
            continue
        assert upscale_threshold(L, s, m) == ratio_floor(L, s, m)
        assert downscale_threshold(L - s, hs, m) == max(0, ratio_floor(L - s, hs, m))


def test_build_policy_table_ladder():
    pol = build_policy(TABLE, 1000, slack_buffer_ms=50)
    assert [e.upscale_threshold for e in pol.entries] == [6, 1, 0]
    assert [e.downscale_threshold for e in pol.entries] == [1, 0, None]
    assert [e.slack_ms for e in pol.entries] == [800, 550, 300]


def test_build_policy_default_slack_is_tenth_of_slo():
    assert build_policy(TABLE, 1000).slack_buffer_ms == 100


def test_build_policy_excludes_entries_over_slo():
    pol = build_policy(TABLE, 500)
    assert [e.config for e in pol.entries] == [(0,), (1,)]
    assert all(e.p95_ms < 500 for e in pol.entries)


def test_build_policy_infeasible():
    with pytest.raises(SLOInfeasible, match="SLO infeasible"):
        build_policy(TABLE, 150)


def test_equal_upscale_rungs_merge_with_warning():
    front = [entry(100, 600, 0.7, (0,)), entry(150, 400, 0.8, (1,))]
    # both tolerate floor(400/100) = 4 and floor(600/150) = 4
    with pytest.warns(UserWarning, match="merged"):
        pol = build_policy(front, 1000)
    assert [e.config for e in pol.entries] == [(1,)]


def test_policy_roundtrip():
    pol = build_policy(TABLE, 1000, 50, 0.0, 5.0)
    d = pol.to_dict()
    back = SwitchingPolicy.from_dict(d)
    assert back.to_dict() == d
    for key in ("slo_ms", "slack_buffer_ms", "cooldown_up_s", "cooldown_down_s", "schema_version"):
        assert key in d
    for key in ("config", "accuracy", "mean_ms", "p95_ms", "slack_ms", "upscale_threshold", "downscale_threshold"):
        assert key in d["entries"][0]


finite = st.floats(1.0, 5000.0, allow_nan=False)


@settings(max_examples=300)
@given(st.lists(st.tuples(finite, finite), min_size=1, max_size=8), finite, st.floats(0, 500))
def test_policy_invariants(pairs, slo, h):
    front = pareto_front(
        ((i,), 0.5 + i / 100, LatencyProfile(min(a, b), max(a, b), 200)) for i, (a, b) in enumerate(pairs)
    )
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            pol = build_policy(front, slo, h)
    except SLOInfeasible:
        assert all(e.p95_ms >= slo for e in front)
        return
    ups = [e.upscale_threshold for e in pol.entries]
    assert all(a > b for a, b in zip(ups, ups[1:]))
    for k, e in enumerate(pol.entries[:-1]):
        assert e.downscale_threshold <= pol.entries[k + 1].upscale_threshold
    assert pol.entries[-1].downscale_threshold is None
    kept = {e.config for e in pol.entries}
    for e in front:
        if e.p95_ms >= slo:
            assert e.config not in kept
