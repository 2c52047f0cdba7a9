"""Dense Hermitian eigendecomposition, matrix functions and state utilities.

Everything on the quantum side goes through one contract: ascending real
eigenvalues with orthonormal eigenvectors whose residual ||AV - V Lambda||
stays below ``EIGEN_RESIDUAL_TOL``. Degenerate eigenvalues are handled
through eigenspace projections (``spectral_components``), never through an
individual eigenvector inside a degenerate cluster.
"""

import logging
from typing import Callable, Tuple, Union

import numpy as np
import scipy.linalg

from app.config import get_settings
from app.errors import SpectralError
from app.models.quantum_models import HermitianOperator, QuantumState

logger = logging.getLogger(__name__)

StateLike = Union[QuantumState, np.ndarray]


def as_operator(A) -> HermitianOperator:
    if isinstance(A, HermitianOperator):
        return A
    return HermitianOperator(np.asarray(A))


def as_amplitudes(psi: StateLike) -> np.ndarray:
    if isinstance(psi, QuantumState):
        return psi.amplitudes
    return np.asarray(psi, dtype=complex)


def to_state(amplitudes: np.ndarray) -> QuantumState:
    return QuantumState(np.asarray(amplitudes, dtype=complex))


def eigh(A) -> Tuple[np.ndarray, np.ndarray]:
    """Ascending eigenvalues and orthonormal eigenvectors of a Hermitian operator"""
    operator = A if isinstance(A, HermitianOperator) else as_operator(A)
    matrix = operator.matrix
    try:
        eigenvalues, eigenvectors = scipy.linalg.eigh(matrix)
    except np.linalg.LinAlgError as e:
        raise SpectralError(f"Eigensolver failed to converge: {e}")

    residual = float(np.abs(matrix @ eigenvectors - eigenvectors * eigenvalues).max()) if matrix.size else 0.0
    scale = max(1.0, float(np.abs(eigenvalues).max())) if eigenvalues.size else 1.0
    if residual > get_settings().EIGEN_RESIDUAL_TOL * scale:
        raise SpectralError(f"Eigendecomposition residual {residual:.3e} exceeds tolerance")
    eigenvalues.setflags(write=False)
    eigenvectors.setflags(write=False)
    return eigenvalues, eigenvectors


def apply_matrix_function(A, f: Callable[[np.ndarray], np.ndarray], psi: StateLike) -> QuantumState:
    """V f(Lambda) V^dagger psi"""
    operator = as_operator(A)
    amplitudes = as_amplitudes(psi)
    if amplitudes.shape != (operator.dim,):
        raise SpectralError(f"State of dimension {amplitudes.shape[0]} does not match operator dimension {operator.dim}")
    eigenvalues, eigenvectors = operator.decomposition
    coefficients = eigenvectors.conj().T @ amplitudes
    return to_state(eigenvectors @ (f(eigenvalues) * coefficients))


def unitary_evolve(A, tau: float, psi: StateLike) -> QuantumState:
    """e^{-i A tau} psi; tau may be negative"""
    return apply_matrix_function(A, lambda w: np.exp(-1j * w * tau), psi)


def real_evolve(generator: np.ndarray, tau: float, psi: np.ndarray) -> np.ndarray:
    """e^{tau K} psi for a real antisymmetric K; real input stays real"""
    return scipy.linalg.expm(tau * generator) @ psi


def eigenvalue_clusters(eigenvalues: np.ndarray) -> np.ndarray:
    """Cluster label per eigenvalue; ascending eigenvalues closer than the tolerance share a label"""
    if eigenvalues.size == 0:
        return np.zeros(0, dtype=int)
    scale = max(1.0, float(np.abs(eigenvalues).max()))
    breaks = np.diff(eigenvalues) > get_settings().DEGENERACY_TOL * scale
    return np.concatenate([[0], np.cumsum(breaks)])


def components_from_coefficients(operator: HermitianOperator, coefficients: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    eigenvalues, eigenvectors = operator.decomposition
    labels = eigenvalue_clusters(eigenvalues)
    weights = np.abs(coefficients) ** 2
    cluster_weight = np.bincount(labels, weights=weights)
    keep = np.nonzero(cluster_weight > 1e-28)[0]

    values = np.empty(keep.size)
    vectors = np.empty((operator.dim, keep.size), dtype=complex)
    for k, label in enumerate(keep):
        members = labels == label
        values[k] = eigenvalues[members].mean()
        vectors[:, k] = eigenvectors[:, members] @ coefficients[members]
    return values, vectors


def spectral_components(A, psi: StateLike) -> Tuple[np.ndarray, np.ndarray]:
    """Split psi into its projections onto the distinct eigenspaces of A.

    Returns (eigenvalues, vectors) with psi = sum_k vectors[:, k] and
    A vectors[:, k] = eigenvalues[k] vectors[:, k]. Eigenspaces where psi
    has no weight are dropped.
    """
    operator = as_operator(A)
    amplitudes = as_amplitudes(psi)
    coefficients = operator.eigenvectors.conj().T @ amplitudes
    return components_from_coefficients(operator, coefficients)


def overlap(a: StateLike, b: StateLike) -> complex:
    return complex(np.vdot(as_amplitudes(a), as_amplitudes(b)))


def fidelity(a: StateLike, b: StateLike) -> float:
    """|<a|b>|^2 / (||a||^2 ||b||^2)"""
    x, y = as_amplitudes(a), as_amplitudes(b)
    denominator = np.vdot(x, x).real * np.vdot(y, y).real
    if denominator == 0.0:
        raise SpectralError("Fidelity undefined for a zero vector")
    return float(abs(np.vdot(x, y)) ** 2 / denominator)


def random_hermitian(dim: int, rng: np.random.Generator, scale: float = 1.0) -> HermitianOperator:
    A = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return HermitianOperator(scale * (A + A.conj().T) / 2.0)


def random_state(dim: int, rng: np.random.Generator) -> QuantumState:
    return QuantumState.normalized(rng.standard_normal(dim) + 1j * rng.standard_normal(dim))
