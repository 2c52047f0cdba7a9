import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
import hypothesis.strategies as st

from app.data.reference_data import COMPLETE3_HITTING
from app.errors import ChainError
from app.models.markov_models import MarkedSet, MarkovChain
from app.services.markov_service import (
    absorbing,
    chain_from_matrix,
    discriminant,
    from_weighted_graph,
    generate,
    hitting_time,
    hitting_times_from,
    interpolate,
    interpolated_stationary,
    lazy_hitting_time,
    load_chain,
    make_lazy,
    sample_ct_trajectory,
    save_chain,
    spectral_gap,
    square_chain,
    state_at,
    stationary,
    symmetrized_transition,
)


def test_complete3_hitting_times():
    chain = generate("complete", 3)
    h = hitting_times_from(chain, COMPLETE3_HITTING["marked"])
    assert np.allclose(h, COMPLETE3_HITTING["hitting_times"], atol=1e-12)
    assert hitting_time(chain, [2]) == pytest.approx(COMPLETE3_HITTING["HT"], abs=1e-12)


def test_lazy_chain_doubles_hitting_time():
    chain = generate("complete", 3)
    assert lazy_hitting_time(chain, [2]) == pytest.approx(COMPLETE3_HITTING["lazy_HT"], abs=1e-12)
    assert hitting_time(make_lazy(chain), [2]) == pytest.approx(2 * hitting_time(chain, [2]), abs=1e-12)


def test_conditioned_hitting_time_divides_by_unmarked_mass():
    chain = generate("complete", 3)
    assert hitting_time(chain, [2], conditioned=True) == pytest.approx(2.0, abs=1e-12)


def test_all_marked_hitting_time_is_zero():
    chain = generate("complete", 3)
    assert hitting_time(chain, [0, 1, 2]) == 0.0


def test_stationary_of_regular_graph_is_uniform():
    chain = generate("cycle", 6)
    assert np.allclose(chain.pi, np.full(6, 1 / 6), atol=1e-12)


def test_stationary_on_random_weights_matches_degrees(rng, random_chain):
    chain = random_chain(6, rng)
    recomputed = chain_from_matrix(chain.P)
    assert np.allclose(recomputed.pi, chain.pi, atol=1e-10)
    assert chain.detailed_balance_residual() < 1e-10


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=2, max_value=7), st.integers(min_value=0, max_value=2**32 - 1))
def test_detailed_balance_holds(n, seed):
    rng = np.random.default_rng(seed)
    W = rng.uniform(0.1, 1.0, size=(n, n))
    chain = from_weighted_graph(W + W.T)
    pi = stationary(chain)
    flow = pi[:, None] * chain.P
    assert np.abs(flow - flow.T).max() < 1e-10
    assert np.isclose(pi.sum(), 1.0)


def test_reducible_chain_is_rejected():
    chain = chain_from_matrix(np.eye(2))
    assert chain.pi is None
    with pytest.raises(ChainError, match="reducible"):
        stationary(chain)


def test_periodic_chain_still_has_stationary_distribution():
    chain = generate("cycle", 4)
    assert np.allclose(stationary(chain), np.full(4, 0.25))


def test_isolated_node_is_named():
    W = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
    with pytest.raises(ChainError, match=r"\[2\]"):
        from_weighted_graph(W)


def test_negative_and_asymmetric_weights_are_rejected():
    with pytest.raises(ChainError):
        from_weighted_graph(np.array([[0.0, -1.0], [-1.0, 0.0]]))
    with pytest.raises(ChainError):
        from_weighted_graph(np.array([[0.0, 1.0], [2.0, 0.0]]))


def test_non_stochastic_matrix_is_rejected():
    with pytest.raises(ChainError):
        MarkovChain(P=np.array([[0.5, 0.4], [0.5, 0.5]]))


def test_make_lazy_is_not_idempotent():
    once = make_lazy(generate("complete", 3))
    twice = make_lazy(once)
    assert once.lazy and twice.lazy
    assert np.allclose(np.diag(once.P), 0.5)
    assert np.allclose(np.diag(twice.P), 0.75)


def test_lazy_complete3_discriminant_spectrum():
    D = discriminant(make_lazy(generate("complete", 3)))
    assert np.allclose(np.sort(D.eigenvalues), [0.25, 0.25, 1.0], atol=1e-12)


def test_discriminant_equals_symmetrized_transition(rng, random_chain):
    chain = random_chain(5, rng)
    D = discriminant(chain)
    assert np.allclose(D.D, symmetrized_transition(chain), atol=1e-12)
    assert np.all(np.abs(D.eigenvalues) <= 1.0)


def test_absorbing_rows_are_self_loops():
    chain = generate("complete", 4)
    absorbed = absorbing(chain, [1, 3])
    assert np.allclose(absorbed.P[1], [0, 1, 0, 0])
    assert np.allclose(absorbed.P[3], [0, 0, 0, 1])
    assert np.allclose(absorbed.P[0], chain.P[0])
    assert absorbed.pi is None
    assert absorbing(chain, []) is chain


@pytest.mark.parametrize("s", [0.0, 0.3, 0.9])
def test_interpolated_stationary_is_fixed_point(rng, random_chain, s):
    chain = random_chain(5, rng)
    pi_s = interpolated_stationary(chain, [0, 2], s)
    P_s = interpolate(chain, [0, 2], s).P
    assert np.isclose(pi_s.sum(), 1.0)
    assert np.allclose(P_s.T @ pi_s, pi_s, atol=1e-12)


def test_interpolated_stationary_rejects_s_one():
    with pytest.raises(ChainError):
        interpolated_stationary(generate("complete", 3), [0], 1.0)


def test_interpolation_endpoints():
    chain = generate("complete", 3)
    assert np.allclose(interpolate(chain, [0], 0.0).P, chain.P)
    assert np.allclose(interpolate(chain, [0], 1.0).P, absorbing(chain, [0]).P)
    assert interpolate(chain, [0], 1.0).chain.pi is None


def test_square_chain_keeps_stationary_distribution(rng, random_chain):
    chain = random_chain(4, rng, lazy=True)
    squared = square_chain(chain)
    assert np.allclose(squared.P, chain.P @ chain.P)
    assert np.allclose(squared.pi, chain.pi)


def test_spectral_gap_of_lazy_complete3():
    assert spectral_gap(make_lazy(generate("complete", 3))) == pytest.approx(0.75)


def test_chain_document_round_trip(tmp_path):
    chain = make_lazy(generate("cycle", 5))
    path = tmp_path / "cycle.json"
    save_chain(chain, str(path))
    loaded = load_chain(str(path))
    assert np.allclose(loaded.P, chain.P)
    assert loaded.lazy
    assert loaded.labels == chain.labels


def test_missing_chain_file():
    with pytest.raises(ChainError):
        load_chain("does-not-exist.json")


def test_marked_set_validation():
    assert MarkedSet.of(4, [3, 1, 1]).members == (1, 3)
    with pytest.raises(ChainError):
        MarkedSet.of(3, [3])
    with pytest.raises(ChainError):
        MarkedSet.of(2, [0, 1]).require_proper()


def test_trajectory_sampler(rng):
    chain = make_lazy(generate("complete", 3))
    with pytest.raises(ValueError):
        sample_ct_trajectory(chain, 0, -1.0, rng)
    path = sample_ct_trajectory(chain, 0, 20.0, rng)
    assert path[0] == (0, 0.0)
    entries = [entered for _, entered in path]
    assert entries == sorted(entries)
    assert all(a != b for (a, _), (b, _) in zip(path, path[1:]))
    assert state_at(path, 0.0) == 0


@pytest.mark.slow
@pytest.mark.parametrize("mode", ["self_loops", "skeleton"])
def test_trajectory_law_matches_generator(mode):
    rng = np.random.default_rng(3)
    chain = make_lazy(generate("complete", 3))
    t, samples = 1.5, 20000
    exact = scipy.linalg.expm(t * (chain.P - np.eye(3)))[0, 1]
    hits = np.array([state_at(sample_ct_trajectory(chain, 0, t, rng, mode=mode), t) == 1 for _ in range(samples)])
    stderr = hits.std() / np.sqrt(samples)
    assert abs(hits.mean() - exact) < 3 * stderr + 1e-3
