"""Gaussian-random-time evolution.

Evolving psi_0 under H for a time tau = sqrt(2t) z with z ~ N(0, 1) and
averaging over z gives the mixed state rho_t whose eigenbasis entries are
c_i conj(c_j) exp(-t (lambda_i - lambda_j)^2). Its projections dominate the
imaginary-time quantity <psi_0| e^{-tH^2} Pi e^{-tH^2} |psi_0>, and the same
e^{-tH^2} is reachable by coupling to a Gaussian ancilla and post-selecting.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from app.config import get_settings
from app.errors import GridResolutionError, SpectralError
from app.models.markov_models import Discriminant
from app.models.quantum_models import AncillaGrid, HermitianOperator, Projector, QuantumState, SpectralDensity
from app.services.spectral_service import (
    apply_matrix_function,
    as_amplitudes,
    as_operator,
    fidelity,
    spectral_components,
    StateLike,
)

logger = logging.getLogger(__name__)

ProjectorLike = Union[Projector, np.ndarray]

MONTE_CARLO_CHUNK = 4096


def as_projector(Pi: ProjectorLike, dim: int) -> Projector:
    projector = Pi if isinstance(Pi, Projector) else Projector.from_matrix(Pi)
    if projector.dim != dim:
        raise SpectralError(f"Projector dimension {projector.dim} does not match state dimension {dim}")
    return projector


def _unit_amplitudes(psi0: StateLike) -> np.ndarray:
    amplitudes = as_amplitudes(psi0)
    if abs(np.vdot(amplitudes, amplitudes).real - 1.0) > 1e-10:
        raise SpectralError("Initial state must have unit norm")
    return amplitudes


def sample_evolution_time(t: float, rng: np.random.Generator, size: Optional[int] = None):
    """tau = sqrt(2t) z; E|tau| = 2 sqrt(t / pi). Negative samples are kept."""
    if t < 0:
        raise ValueError(f"Damping time must be nonnegative, got {t}")
    return np.sqrt(2.0 * t) * rng.standard_normal(size)


def exact_density(H, psi0: StateLike, t: float) -> SpectralDensity:
    if t < 0:
        raise ValueError(f"Damping time must be nonnegative, got {t}")
    operator = as_operator(H)
    amplitudes = _unit_amplitudes(psi0)
    if amplitudes.shape != (operator.dim,):
        raise SpectralError(f"State of dimension {amplitudes.shape[0]} does not match operator dimension {operator.dim}")
    coefficients = operator.eigenvectors.conj().T @ amplitudes
    return SpectralDensity(operator=operator, coefficients=coefficients, t=float(t))


def damped_projection(values: np.ndarray, vectors: np.ndarray, t: float, projector: Projector) -> float:
    """Tr[Pi rho_t] from the eigenspace components of psi_0"""
    gaps = values[:, None] - values[None, :]
    overlaps = projector.sandwich(vectors, vectors)
    value = float(np.real(np.sum(np.exp(-t * gaps**2) * overlaps.T)))
    if value < -get_settings().SPECTRAL_TOL:
        raise SpectralError(f"Projected probability is negative: {value:.3e}")
    return min(max(value, 0.0), 1.0)


def projected_probability(rho: SpectralDensity, Pi: ProjectorLike) -> float:
    """Tr[Pi rho_t]"""
    projector = as_projector(Pi, rho.operator.dim)
    values, vectors = rho.components
    return damped_projection(values, vectors, rho.t, projector)


def imaginary_time_bound(H, psi0: StateLike, Pi: ProjectorLike, t: float) -> float:
    """<psi_0| e^{-tH^2} Pi e^{-tH^2} |psi_0>"""
    operator = as_operator(H)
    amplitudes = _unit_amplitudes(psi0)
    projector = as_projector(Pi, operator.dim)
    damped = apply_matrix_function(operator, lambda w: np.exp(-t * w**2), amplitudes).amplitudes
    value = float(np.real(projector.sandwich(damped[:, None], damped[:, None])[0, 0]))
    return max(value, 0.0)


def _projected_batch(projector: Projector, states: np.ndarray) -> np.ndarray:
    if projector.matrix is None:
        return np.sum(np.abs(states[list(projector.indices)]) ** 2, axis=0)
    return np.real(np.sum(states.conj() * (projector.matrix @ states), axis=0))


def monte_carlo_probability(
    H,
    psi0: StateLike,
    Pi: ProjectorLike,
    t: float,
    samples: int,
    rng: np.random.Generator,
) -> Tuple[float, float]:
    """Mean of <psi_tau| Pi |psi_tau> over sampled tau, with its standard error"""
    if samples < 1:
        raise ValueError(f"Need at least one sample, got {samples}")
    operator = as_operator(H)
    amplitudes = _unit_amplitudes(psi0)
    projector = as_projector(Pi, operator.dim)
    if t == 0:
        exact = float(np.real(projector.sandwich(amplitudes[:, None], amplitudes[:, None])[0, 0]))
        return exact, 0.0

    values, vectors = spectral_components(operator, amplitudes)
    draws = []
    remaining = samples
    while remaining > 0:
        size = min(remaining, MONTE_CARLO_CHUNK)
        taus = sample_evolution_time(t, rng, size)
        states = vectors @ np.exp(-1j * np.outer(values, taus))
        draws.append(_projected_batch(projector, states))
        remaining -= size

    draws = np.concatenate(draws)
    stderr = float(draws.std(ddof=1) / np.sqrt(samples)) if samples > 1 else float("nan")
    return float(draws.mean()), stderr


@dataclass(frozen=True, eq=False)
class AncillaResult:
    state: QuantumState
    success_probability: float
    fidelity: float
    degenerate: bool


def phase_resolution_limit(H, t: float) -> float:
    """Largest grid spacing that resolves e^{-i sqrt(2t) H z}: pi / (4 sqrt(2t) ||H||)"""
    norm = as_operator(H).norm
    if t == 0 or norm == 0:
        return float("inf")
    return float(np.pi / (4.0 * np.sqrt(2.0 * t) * norm))


def ancilla_evolve(H, psi0: StateLike, t: float, grid: Optional[AncillaGrid] = None) -> AncillaResult:
    """Couple psi_0 to a Gaussian ancilla, evolve, and post-select on the ancilla state.

    The product state psi_0 (x) psi_g lives on the grid with quadrature
    weights; at grid point z the system evolves under e^{-i sqrt(2t) H z}.
    Projecting the ancilla back onto psi_g leaves e^{-tH^2} psi_0 up to
    discretization error.
    """
    operator = as_operator(H)
    amplitudes = _unit_amplitudes(psi0)
    grid = grid or AncillaGrid.from_settings()

    limit = phase_resolution_limit(operator, t)
    if grid.spacing > limit:
        required = grid.required_points(limit)
        raise GridResolutionError(
            f"Ancilla grid spacing {grid.spacing:.3e} exceeds the phase-resolution limit {limit:.3e}; "
            f"use at least {required} points",
            required_points=required,
        )

    eigenvalues, eigenvectors = operator.decomposition
    coefficients = eigenvectors.conj().T @ amplitudes
    root_weights = np.sqrt(grid.weights) * grid.wavefunction

    # amplitude of |z> (x) system, already carrying sqrt(quadrature weight)
    phases = np.exp(-1j * np.sqrt(2.0 * t) * np.outer(grid.nodes, eigenvalues))
    evolved = root_weights[:, None] * phases * coefficients[None, :]
    projected = root_weights @ evolved
    output = eigenvectors @ projected

    probability = float(np.vdot(output, output).real)
    target = apply_matrix_function(operator, lambda w: np.exp(-t * w**2), amplitudes).amplitudes
    if probability < get_settings().POSTSELECTION_FLOOR:
        logger.warning(f"Post-selection probability {probability:.3e} is below the floor")
        return AncillaResult(QuantumState(output), probability, float("nan"), True)

    state = QuantumState.normalized(output)
    return AncillaResult(state, probability, fidelity(state, target), False)


def fast_forward_bound(D: Discriminant, psi0: StateLike, Pi: ProjectorLike, t: float) -> float:
    """||Pi e^{(D^2 - I) t} psi_0||^2 on the node space"""
    amplitudes = as_amplitudes(psi0)
    if amplitudes.shape != (D.n,):
        raise SpectralError(f"State of dimension {amplitudes.shape[0]} does not match discriminant dimension {D.n}")
    if t < 0:
        raise ValueError(f"Time must be nonnegative, got {t}")
    projector = as_projector(Pi, D.n)
    evolved = D.squared_generator_apply(t, amplitudes)
    value = float(np.real(projector.sandwich(evolved[:, None], evolved[:, None])[0, 0]))
    return min(max(value, 0.0), 1.0)
