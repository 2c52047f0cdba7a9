import numpy as np
import pytest

from app.errors import SpectralError, WalkConstructionError
from app.services.markov_service import discriminant, generate, interpolate, make_lazy
from app.services.walker_service import (
    build_hamiltonian,
    build_walk_unitary,
    evolve_edge_state,
    first_register_distribution,
    marked_probability,
    spectral_range,
    swap_permutation,
    verify_square_relation,
)


@pytest.fixture
def lazy_k3():
    return make_lazy(generate("complete", 3))


def test_unitary_prepares_transition_amplitudes(lazy_k3):
    U = build_walk_unitary(lazy_k3)
    d = 4
    assert np.allclose(U.T @ U, np.eye(d * d), atol=1e-12)
    for x in range(3):
        column = U[:, (x + 1) * d]
        expected = np.zeros(d * d)
        expected[(x + 1) * d + 1 : (x + 2) * d] = np.sqrt(lazy_k3.P[x])
        assert np.allclose(column, expected, atol=1e-12)
    assert np.allclose(U[:d, :d], np.eye(d))


def test_swap_is_an_involution():
    perm = swap_permutation(4)
    assert np.array_equal(perm[perm], np.arange(16))
    assert perm[1 * 4 + 2] == 2 * 4 + 1


def test_reflection_is_symmetric_involution(lazy_k3):
    walk = build_hamiltonian(lazy_k3)
    assert np.allclose(walk.V, walk.V.T)
    assert np.allclose(walk.V @ walk.V, np.eye(walk.dim), atol=1e-10)
    assert np.allclose(walk.generator, -walk.generator.T)
    assert walk.extension["method"] == "householder"


def test_node_sector_of_reflection_is_discriminant(lazy_k3):
    walk = build_hamiltonian(lazy_k3)
    sector = walk.node_reference_indices
    assert np.allclose(walk.V[np.ix_(sector, sector)], discriminant(lazy_k3).D, atol=1e-12)


@pytest.mark.parametrize("seed", range(20))
@pytest.mark.parametrize("s", [0.0, 0.5, 0.9])
def test_square_relation_on_random_chains(seed, s, random_chain):
    rng = np.random.default_rng(seed)
    chain = random_chain(int(rng.integers(4, 11)), rng, lazy=True)
    interpolated = interpolate(chain, [0, 3], s)
    walk = build_hamiltonian(interpolated)
    residual = verify_square_relation(walk, discriminant(interpolated), 10, rng)
    assert residual < 1e-9


def test_square_relation_rejects_mismatched_sizes(rng, lazy_k3):
    walk = build_hamiltonian(lazy_k3)
    other = discriminant(make_lazy(generate("complete", 4)))
    with pytest.raises(SpectralError):
        verify_square_relation(walk, other, 1, rng)


def test_square_relation_residual_against_wrong_discriminant(rng):
    walk = build_hamiltonian(make_lazy(generate("cycle", 4)))
    other = discriminant(make_lazy(generate("complete", 4)))
    residual = verify_square_relation(walk, other, 5, rng, strict=False)
    assert residual > 1e-3
    with pytest.raises(WalkConstructionError):
        verify_square_relation(walk, other, 5, rng)


def test_spectrum_lies_in_unit_interval():
    walk = build_hamiltonian(make_lazy(generate("cycle", 5)))
    bounds = spectral_range(walk)
    assert bounds["contained"]
    assert -1.0 - 1e-9 <= bounds["min"] <= bounds["max"] <= 1.0 + 1e-9


def test_real_and_spectral_evolution_agree(lazy_k3):
    walk = build_hamiltonian(lazy_k3)
    psi = np.sqrt(lazy_k3.pi)
    real = evolve_edge_state(walk, psi, 2.3, method="real")
    spectral = evolve_edge_state(walk, psi.astype(complex), 2.3, method="spectral")
    assert np.allclose(real.amplitudes, spectral.amplitudes, atol=1e-10)
    assert real.is_unit
    with pytest.raises(ValueError):
        evolve_edge_state(walk, psi, 1.0, method="leapfrog")
    with pytest.raises(SpectralError):
        evolve_edge_state(walk, psi * 1j, 1.0, method="real")


def test_evolution_at_zero_time_stays_in_node_sector(lazy_k3):
    walk = build_hamiltonian(lazy_k3)
    psi = np.sqrt(lazy_k3.pi)
    state = evolve_edge_state(walk, psi, 0.0)
    distribution = first_register_distribution(state, 3)
    assert distribution[0] == pytest.approx(0.0, abs=1e-14)
    assert np.allclose(distribution[1:], lazy_k3.pi)


def test_marked_probability(lazy_k3):
    walk = build_hamiltonian(lazy_k3)
    state = walk.embed(np.array([0.6, 0.8, 0.0]))
    assert marked_probability(state, [0]) == pytest.approx(0.36)
    assert marked_probability(state, [0, 1], n=3) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        marked_probability(state, [])


def test_distribution_needs_product_space_state():
    with pytest.raises(SpectralError):
        first_register_distribution(np.ones(5) / np.sqrt(5), 3)
