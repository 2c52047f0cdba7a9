"""Ground-state preparation by imaginary-time damping e^{-tH^2}.

After shifting the spectrum so the ground energy sits in [0, 2 eps_g],
every excited component of psi_0 decays at least as fast as
e^{-t (lambda_1 - lambda_0)^2} relative to the ground component, so
t = ln((1 - eta^2) / (eta^2 eps^2)) / (2 Delta^2) reaches accuracy eps.
The damping is realized by Gaussian-time evolution with total time
T = sqrt(2t) and post-selection on the ancilla.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from app.api.schemas import GroundStateReport
from app.config import get_settings
from app.errors import DegenerateInputError, warn_hypothesis
from app.models.markov_models import ChainLike
from app.models.quantum_models import AncillaGrid, HermitianOperator, QuantumState
from app.services.gaussian_service import ancilla_evolve
from app.services.markov_service import discriminant, spectral_gap
from app.services.spectral_service import (
    apply_matrix_function,
    as_amplitudes,
    eigenvalue_clusters,
    random_hermitian,
    random_state,
)

logger = logging.getLogger(__name__)

MAX_ETA = 1.0 / math.sqrt(2.0)


def _log_argument(eta: float, epsilon: float) -> float:
    return math.log(1.0 / (eta * epsilon))


def precision_limit(delta: float, eta: float, epsilon: float) -> float:
    """Largest admissible energy precision c * Delta / sqrt(ln(1 / (eta eps)))"""
    return get_settings().ENERGY_PRECISION_CONSTANT * delta / math.sqrt(_log_argument(eta, epsilon))


@dataclass(frozen=True, eq=False)
class GroundStateProblem:
    H: HermitianOperator
    psi0: QuantumState
    delta: float
    eta: float
    epsilon: float
    E0: float
    epsilon_g: float

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError(f"Gap bound must be positive, got {self.delta}")
        if not 0.0 < self.eta <= MAX_ETA + 1e-15:
            raise ValueError(f"Overlap bound must lie in (0, 1/sqrt(2)], got {self.eta}")
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError(f"Target accuracy must lie in (0, 1), got {self.epsilon}")
        if self.epsilon_g <= 0:
            raise ValueError(f"Energy precision must be positive, got {self.epsilon_g}")
        limit = precision_limit(self.delta, self.eta, self.epsilon)
        if self.epsilon_g > limit:
            raise ValueError(f"Energy precision {self.epsilon_g:.4g} exceeds the admissible {limit:.4g}")
        if self.psi0.dim != self.H.dim:
            raise ValueError(f"State of dimension {self.psi0.dim} does not match operator dimension {self.H.dim}")
        if not self.psi0.is_unit:
            raise ValueError("Initial state must have unit norm")


@dataclass(frozen=True, eq=False)
class GroundStateResult:
    state: QuantumState
    target: QuantumState
    t: float
    T: float
    success_probability: float
    achieved_error: float
    degenerate: bool
    ground_dimension: int
    ground_energy: float
    gap: float
    overlap: float
    error_certificate: float
    ground_energy_factor: float
    ancilla_fidelity: Optional[float] = None


def shift_spectrum(H: HermitianOperator, E0: float, epsilon_g: float) -> HermitianOperator:
    """H - (E0 - eps_g) I"""
    return HermitianOperator(H.matrix - (E0 - epsilon_g) * np.eye(H.dim))


def evolution_time(delta: float, eta: float, epsilon: float) -> Tuple[float, float]:
    """t = ln((1 - eta^2) / (eta^2 eps^2)) / (2 Delta^2) with a small margin, and T = sqrt(2t)"""
    if delta <= 0:
        raise ValueError(f"Gap bound must be positive, got {delta}")
    if not 0.0 < eta <= MAX_ETA + 1e-15:
        raise ValueError(f"Overlap bound must lie in (0, 1/sqrt(2)], got {eta}")
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"Target accuracy must lie in (0, 1), got {epsilon}")
    t = math.log((1.0 - eta**2) / (eta**2 * epsilon**2)) / (2.0 * delta**2)
    t *= 1.0 + get_settings().GROUND_TIME_MARGIN
    return t, math.sqrt(2.0 * t)


@dataclass(frozen=True, eq=False)
class _GroundSpace:
    target: np.ndarray
    dimension: int
    energy: float
    gap: float
    overlap: float


def _ground_space(H: HermitianOperator, psi0: np.ndarray) -> _GroundSpace:
    eigenvalues, eigenvectors = H.decomposition
    labels = eigenvalue_clusters(eigenvalues)
    ground = labels == 0
    basis = eigenvectors[:, ground]
    projection = basis @ (basis.conj().T @ psi0)
    weight = float(np.linalg.norm(projection))
    if weight < 1e-12:
        raise DegenerateInputError("Initial state has no overlap with the ground space")
    excited = eigenvalues[~ground]
    gap = float(excited[0] - eigenvalues[0]) if excited.size else float("inf")
    return _GroundSpace(projection / weight, int(ground.sum()), float(eigenvalues[0]), gap, weight)


def _aligned_error(state: np.ndarray, target: np.ndarray) -> Tuple[np.ndarray, float]:
    """Rotate the global phase so <state|target> >= 0, then ||state - target||"""
    inner = np.vdot(state, target)
    if abs(inner) > 0:
        state = state * (inner / abs(inner))
    return state, float(np.linalg.norm(state - target))


def _assemble(problem: GroundStateProblem, state: np.ndarray, probability: float, ancilla: Optional[float]) -> GroundStateResult:
    shifted = shift_spectrum(problem.H, problem.E0, problem.epsilon_g)
    space = _ground_space(shifted, problem.psi0.amplitudes)
    if space.overlap < problem.eta - 1e-12:
        warn_hypothesis(f"Ground-space overlap {space.overlap:.4g} is below the stated bound {problem.eta:.4g}")
    t, T = evolution_time(problem.delta, problem.eta, problem.epsilon)
    aligned, error = _aligned_error(state, space.target)
    certificate = (1.0 - problem.eta**2) / problem.eta**2 * math.exp(-2.0 * t * space.gap**2)
    return GroundStateResult(
        state=QuantumState(aligned),
        target=QuantumState(space.target),
        t=t,
        T=T,
        success_probability=probability,
        achieved_error=error,
        degenerate=space.dimension > 1,
        ground_dimension=space.dimension,
        ground_energy=space.energy,
        gap=space.gap,
        overlap=space.overlap,
        error_certificate=certificate,
        ground_energy_factor=math.exp(-2.0 * t * space.energy**2),
        ancilla_fidelity=ancilla,
    )


def prepare(problem: GroundStateProblem) -> GroundStateResult:
    """Normalized e^{-tH^2} psi_0 of the shifted Hamiltonian, spectrally"""
    shifted = shift_spectrum(problem.H, problem.E0, problem.epsilon_g)
    t, _ = evolution_time(problem.delta, problem.eta, problem.epsilon)
    damped = apply_matrix_function(shifted, lambda w: np.exp(-t * w**2), problem.psi0).amplitudes
    probability = float(np.vdot(damped, damped).real)
    if probability == 0.0:
        raise DegenerateInputError("Damped state vanished numerically")
    logger.debug(f"Prepared ground state with t={t:.4g}, success probability {probability:.4g}")
    return _assemble(problem, damped / math.sqrt(probability), probability, None)


def prepare_via_ancilla(problem: GroundStateProblem, grid: Optional[AncillaGrid] = None) -> GroundStateResult:
    """Same contract as prepare, through the Gaussian ancilla and post-selection"""
    shifted = shift_spectrum(problem.H, problem.E0, problem.epsilon_g)
    t, _ = evolution_time(problem.delta, problem.eta, problem.epsilon)
    outcome = ancilla_evolve(shifted, problem.psi0, t, grid)
    if outcome.degenerate:
        raise DegenerateInputError(
            f"Post-selection probability {outcome.success_probability:.3e} is below the floor"
        )
    return _assemble(problem, outcome.state.amplitudes, outcome.success_probability, outcome.fidelity)


def to_report(problem: GroundStateProblem, result: GroundStateResult) -> GroundStateReport:
    return GroundStateReport(
        delta=problem.delta,
        eta=problem.eta,
        epsilon=problem.epsilon,
        epsilon_g=problem.epsilon_g,
        t=result.t,
        T=result.T,
        success_prob=result.success_probability,
        achieved_error=result.achieved_error,
        degenerate=result.degenerate,
        error_certificate=result.error_certificate,
        ground_energy_factor=result.ground_energy_factor,
        ancilla_fidelity=result.ancilla_fidelity,
    )


def problem_from_operator(
    H: HermitianOperator,
    psi0: QuantumState,
    epsilon: float = 1e-3,
    eta: Optional[float] = None,
    epsilon_g: Optional[float] = None,
) -> GroundStateProblem:
    """Problem with the measured gap, ground energy and overlap (capped at 1/sqrt(2))"""
    eigenvalues = H.eigenvalues
    labels = eigenvalue_clusters(eigenvalues)
    if labels[-1] == 0:
        raise DegenerateInputError("Operator has a single eigenvalue; no gap to exploit")
    delta = float(eigenvalues[labels == 1][0] - eigenvalues[0])
    overlap = _ground_space(H, as_amplitudes(psi0)).overlap
    eta = min(overlap, MAX_ETA) if eta is None else eta
    if epsilon_g is None:
        epsilon_g = 0.1 * precision_limit(delta, eta, epsilon)
    return GroundStateProblem(
        H=H,
        psi0=psi0,
        delta=delta,
        eta=eta,
        epsilon=epsilon,
        E0=float(eigenvalues[0]),
        epsilon_g=epsilon_g,
    )


def random_problem(
    dim: int,
    rng: np.random.Generator,
    epsilon: float = 1e-3,
    eta: Optional[float] = None,
    epsilon_g: Optional[float] = None,
) -> GroundStateProblem:
    if dim < 2:
        raise ValueError(f"Need dimension >= 2, got {dim}")
    return problem_from_operator(random_hermitian(dim, rng), random_state(dim, rng), epsilon, eta, epsilon_g)


def chain_problem(
    chain: ChainLike,
    epsilon: float = 1e-3,
    eta: Optional[float] = None,
    epsilon_g: Optional[float] = None,
) -> GroundStateProblem:
    """H = I - D with ground state sqrt(pi), started from the uniform superposition"""
    D = discriminant(chain)
    H = HermitianOperator(np.eye(D.n) - D.D)
    logger.info(f"Chain Hamiltonian over {D.n} nodes, spectral gap {spectral_gap(chain):.4g}")
    psi0 = QuantumState.normalized(np.ones(D.n))
    return problem_from_operator(H, psi0, epsilon, eta, epsilon_g)
