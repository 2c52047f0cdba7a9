import math

import numpy as np
import pytest

from app.api.schemas import ScalingRow
from app.config import apply_overrides
from app.data.reference_data import COMPLETE3_HITTING, LEMMA2_CALIBRATION, SCALING_SLOPES
from app.errors import ChainError, InfeasibleSizeError
from app.services.markov_service import chain_from_spec, generate, hitting_time, make_lazy
from app.services.search_service import (
    InterpolationSchedule,
    SpatialSearch,
    classical_baseline,
    default_max_rounds,
    expected_bound_over_schedule,
    fit_loglog_slope,
    repeat_until_found,
    resolve_marked,
    run_trials,
    sample_schedule,
    scaling_experiment,
    time_per_find,
    unmarked_state,
)


@pytest.fixture
def lazy_k4():
    return make_lazy(generate("complete", 4))


@pytest.mark.parametrize("T, size", [(0.5, 1), (1.0, 1), (5.0, 8), (8.0, 8), (9.0, 16)])
def test_schedule_size(T, size):
    schedule = InterpolationSchedule(T)
    assert schedule.size == size
    assert schedule.grid[0] == 0.0
    assert np.allclose(schedule.grid, 1.0 - 1.0 / np.arange(1, size + 1))


def test_schedule_doubles_with_horizon(rng):
    assert InterpolationSchedule(32.0).size == 2 * InterpolationSchedule(16.0).size
    schedule = InterpolationSchedule(20.0)
    assert all(schedule.sample(rng) in schedule.grid for _ in range(50))


def test_randomized_horizon_stays_in_range(rng):
    for _ in range(20):
        s, T = sample_schedule(4.0, 3.0, rng, randomize_T=True)
        assert 0.0 <= T <= 12.0
        assert 0.0 <= s < 1.0
    with pytest.raises(ValueError):
        sample_schedule(0.0, 3.0, rng)


def test_unmarked_state(lazy_k4):
    psi = unmarked_state(lazy_k4, [1])
    assert psi[1] == 0.0
    assert np.linalg.norm(psi) == pytest.approx(1.0)
    assert np.linalg.norm(unmarked_state(lazy_k4, [1], normalized=False)) == pytest.approx(math.sqrt(0.75))


def test_search_needs_lazy_chain():
    with pytest.raises(ChainError, match="lazy"):
        SpatialSearch(generate("complete", 4), [0])


def test_search_needs_proper_marked_set(lazy_k4):
    with pytest.raises(ChainError):
        SpatialSearch(lazy_k4, [0, 1, 2, 3])


def test_full_space_cap(lazy_k4):
    apply_overrides({"FULL_SPACE_CAP": 3})
    with pytest.raises(InfeasibleSizeError):
        SpatialSearch(lazy_k4, [0])
    SpatialSearch(lazy_k4, [0], check_size=False)


@pytest.mark.parametrize("n", [4, 5])
@pytest.mark.parametrize("s", [0.0, 0.5, 0.75])
def test_exact_probability_dominates_fast_forward_bound(n, s):
    search = SpatialSearch(make_lazy(generate("complete", n)), [0])
    assert search.exact_success_probability(0.0, s) == pytest.approx(0.0, abs=1e-12)
    for T in (0.5, 2.0, 10.0, 40.0):
        exact = search.exact_success_probability(T, s)
        assert 0.0 <= exact <= 1.0
        assert exact >= search.fast_forward_bound(T, s) - 1e-9


def test_component_cache_is_reused(lazy_k4):
    search = SpatialSearch(lazy_k4, [0])
    assert search.components(0.5) is search.components(0.5)


def test_round_success_probability(lazy_k4):
    search = SpatialSearch(lazy_k4, [0])
    p = search.round_success_probability(10.0)
    assert search.marked_mass <= p <= 1.0


def test_single_round(rng, lazy_k4):
    search = SpatialSearch(lazy_k4, [0])
    for _ in range(30):
        outcome = search.run(10.0, rng)
        assert outcome.found == (outcome.node == 0)
        if outcome.marked_at_preparation:
            assert outcome.elapsed_time == 0.0 and outcome.s is None
        else:
            assert 0.0 <= outcome.s < 1.0
            assert outcome.elapsed_time >= 0.0


def test_repeat_until_found(rng, lazy_k4):
    outcome = repeat_until_found(lazy_k4, [0], 3.0, 5, rng)
    assert 1 <= outcome.rounds <= 5
    assert outcome.elapsed_time >= 0.0
    assert outcome.T == pytest.approx(3.0 * hitting_time(lazy_k4, [0]))
    with pytest.raises(ValueError):
        SpatialSearch(lazy_k4, [0]).repeat_until_found(10.0, 0, rng)


def test_default_max_rounds():
    assert default_max_rounds(1.0) == 1
    assert default_max_rounds(16.0) == 16


def test_trials_are_reproducible_across_worker_counts(lazy_k4):
    serial = run_trials(lazy_k4, [0], c_T=3.0, trials=8, seed=11, graph="complete:4")
    threaded = run_trials(lazy_k4, [0], c_T=3.0, trials=8, seed=11, graph="complete:4", workers=3)
    assert serial == threaded
    assert serial.successes <= serial.trials
    assert serial.success_frequency == serial.successes / 8


def test_classical_baseline_matches_hitting_time(rng):
    chain = generate("complete", 3)
    mean, stderr = classical_baseline(chain, COMPLETE3_HITTING["marked"], 20_000, rng)
    assert abs(mean - COMPLETE3_HITTING["HT"]) < 3 * stderr
    with pytest.raises(ChainError):
        classical_baseline(chain, [], 10, rng)


def test_resolve_marked(rng):
    assert resolve_marked(8, "single").members == (0,)
    assert len(resolve_marked(8, 0.25, rng)) == 2
    assert len(resolve_marked(4, 0.99, rng)) == 3
    assert resolve_marked(8, [5, 2]).members == (2, 5)
    with pytest.raises(ValueError):
        resolve_marked(8, "many")
    with pytest.raises(ValueError):
        resolve_marked(8, 0.5)


def test_fit_loglog_slope():
    xs = [1.0, 2.0, 4.0, 8.0]
    assert fit_loglog_slope(xs, [3.0 * math.sqrt(x) for x in xs]) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        fit_loglog_slope([1.0], [1.0])


def test_bound_over_schedule_meets_calibration():
    chain = make_lazy(chain_from_spec(LEMMA2_CALIBRATION["graph"]))
    marked = LEMMA2_CALIBRATION["marked"]
    T = LEMMA2_CALIBRATION["c_T"] * hitting_time(chain, marked)
    bound = expected_bound_over_schedule(chain, marked, T)
    assert bound >= LEMMA2_CALIBRATION["constant"] / math.log2(T) ** 2
    assert bound <= expected_bound_over_schedule(chain, marked, T, normalized=True)


def test_scaling_sizes_must_ascend():
    with pytest.raises(ValueError):
        scaling_experiment("complete", [8, 4], 3.0, "single")


@pytest.mark.parametrize("s", [0.0, 0.75])
def test_sampled_rounds_match_exact_probability(lazy_k4, s):
    search = SpatialSearch(lazy_k4, [0])
    T, trials = 10.0, 10_000
    rng = np.random.default_rng(7)
    found = sum(search.run(T, rng, s=s).found for _ in range(trials))
    p = search.marked_mass + (1.0 - search.marked_mass) * search.exact_success_probability(T, s)
    sigma = math.sqrt(p * (1.0 - p) / trials)
    assert abs(found / trials - p) < 3 * sigma


def test_time_per_find():
    row = ScalingRow(family="complete", n=8, HT=12.0, T=36.0, s_grid_size=64, bound_mean=0.25, quantum_time=6.0, classical_time=12.0, seed=0)
    assert time_per_find(row) == pytest.approx(24.0)
    assert time_per_find(row.model_copy(update={"bound_mean": 0.0})) == math.inf


@pytest.mark.slow
def test_search_on_complete32_finds_within_round_budget():
    chain = make_lazy(generate("complete", 32))
    HT = hitting_time(chain, [0])
    rounds = math.ceil(math.log2(HT) ** 2)
    summary = run_trials(chain, [0], c_T=3.0, trials=100, seed=2024, graph="complete:32", max_rounds=rounds)
    assert summary.trials == 100
    assert summary.success_frequency >= 0.5


@pytest.mark.slow
@pytest.mark.parametrize("family", ["complete", "cycle"])
def test_time_per_find_scales_as_root_hitting_time(family):
    sizes = [8, 16, 32, 64, 128]
    single = scaling_experiment(family, sizes, 3.0, "single")
    rows = single + scaling_experiment(family, sizes, 3.0, 0.25, seed=5)
    expected, tolerance = SCALING_SLOPES["time_per_find_vs_HT"]
    slope = fit_loglog_slope([r.HT for r in rows], [time_per_find(r) for r in rows])
    assert abs(slope - expected) < tolerance
    assert all(0.0 < r.bound_mean <= 1.0 for r in rows)

    if family == "cycle":
        expected, tolerance = SCALING_SLOPES["cycle_HT_vs_n"]
        assert abs(fit_loglog_slope([r.n for r in single], [r.HT for r in single]) - expected) < tolerance


@pytest.mark.slow
def test_bound_over_schedule_decays_slowly_across_doublings():
    rows = scaling_experiment("complete", [8, 16, 32, 64, 128], 3.0, "single")
    horizons = [r.T for r in rows]
    assert all(later > 1.8 * earlier for earlier, later in zip(horizons, horizons[1:]))
    exponent = fit_loglog_slope([math.log(T) for T in horizons], [r.bound_mean for r in rows])
    assert exponent >= SCALING_SLOPES["bound_vs_logT_floor"]
    for row in rows:
        assert row.bound_mean >= LEMMA2_CALIBRATION["constant"] / math.log2(row.T) ** 2
