import threading
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from app.config import get_settings
from app.errors import SpectralError


def _readonly(array: np.ndarray, dtype) -> np.ndarray:
    out = np.array(array, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class HermitianOperator:
    """Hermitian matrix with a lazily computed, cached eigendecomposition"""

    matrix: np.ndarray
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def __post_init__(self):
        A = np.asarray(self.matrix)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise SpectralError(f"Operator must be square, got shape {A.shape}")
        asymmetry = float(np.abs(A - A.conj().T).max()) if A.size else 0.0
        if asymmetry > get_settings().HERMITIAN_TOL * max(1.0, float(np.abs(A).max())):
            raise SpectralError(f"Operator is not Hermitian: max asymmetry {asymmetry:.3e}")
        dtype = float if np.isrealobj(A) else complex
        object.__setattr__(self, "matrix", _readonly(A, dtype))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def norm(self) -> float:
        """Spectral norm"""
        eigenvalues, _ = self.decomposition
        return float(np.abs(eigenvalues).max())

    @property
    def decomposition(self) -> Tuple[np.ndarray, np.ndarray]:
        cached = self.__dict__.get("_decomposition")
        if cached is None:
            with self._lock:
                cached = self.__dict__.get("_decomposition")
                if cached is None:
                    from app.services.spectral_service import eigh

                    cached = eigh(self)
                    object.__setattr__(self, "_decomposition", cached)
        return cached

    @property
    def eigenvalues(self) -> np.ndarray:
        return self.decomposition[0]

    @property
    def eigenvectors(self) -> np.ndarray:
        return self.decomposition[1]


@dataclass(frozen=True, eq=False)
class QuantumState:
    """Complex amplitude vector, unit norm or explicitly sub-normalized"""

    amplitudes: np.ndarray
    labels: Tuple[str, ...] = ()

    def __post_init__(self):
        psi = np.asarray(self.amplitudes)
        if psi.ndim != 1:
            raise SpectralError(f"State must be a vector, got shape {psi.shape}")
        object.__setattr__(self, "amplitudes", _readonly(psi, complex))

    @classmethod
    def normalized(cls, amplitudes: np.ndarray, labels: Sequence[str] = ()) -> "QuantumState":
        psi = np.asarray(amplitudes, dtype=complex)
        norm = np.linalg.norm(psi)
        if norm == 0.0:
            raise SpectralError("Cannot normalize the zero vector")
        return cls(psi / norm, tuple(labels))

    @property
    def dim(self) -> int:
        return self.amplitudes.shape[0]

    @property
    def squared_norm(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    @property
    def is_unit(self) -> bool:
        return abs(self.squared_norm - 1.0) <= 1e-12

    @property
    def is_real(self) -> bool:
        return bool(np.all(self.amplitudes.imag == 0.0))

    def unit(self) -> "QuantumState":
        return QuantumState.normalized(self.amplitudes, self.labels)


@dataclass(frozen=True, eq=False)
class Projector:
    """Orthogonal projector in the computational basis.

    Diagonal projectors are stored by their index set so that projected
    quantities never build a dense matrix on the product space.
    """

    dim: int
    indices: Optional[Tuple[int, ...]] = None
    matrix: Optional[np.ndarray] = None

    @classmethod
    def from_indices(cls, dim: int, indices: Sequence[int]) -> "Projector":
        idx = tuple(sorted(set(int(i) for i in indices)))
        if any(i < 0 or i >= dim for i in idx):
            raise SpectralError(f"Projector indices {idx} outside 0..{dim - 1}")
        return cls(dim=dim, indices=idx)

    @classmethod
    def from_matrix(cls, matrix: np.ndarray) -> "Projector":
        Pi = np.asarray(matrix, dtype=complex)
        if Pi.ndim != 2 or Pi.shape[0] != Pi.shape[1]:
            raise SpectralError(f"Projector must be square, got shape {Pi.shape}")
        tol = get_settings().PROJECTOR_TOL
        idempotence = float(np.abs(Pi @ Pi - Pi).max()) if Pi.size else 0.0
        if idempotence > tol:
            raise SpectralError(f"Operator is not a projector: ||Pi^2 - Pi|| = {idempotence:.3e}")
        asymmetry = float(np.abs(Pi - Pi.conj().T).max()) if Pi.size else 0.0
        if asymmetry > tol:
            raise SpectralError(f"Projector is not orthogonal: max asymmetry {asymmetry:.3e}")
        return cls(dim=Pi.shape[0], matrix=_readonly(Pi, complex))

    @classmethod
    def identity(cls, dim: int) -> "Projector":
        return cls.from_indices(dim, range(dim))

    @property
    def dense(self) -> np.ndarray:
        if self.matrix is not None:
            return self.matrix
        Pi = np.zeros((self.dim, self.dim), dtype=complex)
        idx = list(self.indices)
        Pi[idx, idx] = 1.0
        return Pi

    def sandwich(self, left: np.ndarray, right: np.ndarray) -> np.ndarray:
        """Matrix of <left_k | Pi | right_l> for column blocks left, right"""
        if self.matrix is None:
            idx = list(self.indices)
            return left[idx].conj().T @ right[idx]
        return left.conj().T @ (self.matrix @ right)


@dataclass(frozen=True, eq=False)
class SpectralDensity:
    """Gaussian-averaged state rho_t kept in the eigenbasis of H.

    rho_t[i, j] = c_i conj(c_j) exp(-t (lambda_i - lambda_j)^2)
    """

    operator: HermitianOperator
    coefficients: np.ndarray
    t: float

    @property
    def eigenvalues(self) -> np.ndarray:
        return self.operator.eigenvalues

    @property
    def trace(self) -> float:
        return float(np.sum(np.abs(self.coefficients) ** 2))

    @property
    def components(self) -> Tuple[np.ndarray, np.ndarray]:
        """Eigenspace projections of psi_0: (cluster eigenvalues, dim x K vectors)"""
        cached = self.__dict__.get("_components")
        if cached is None:
            from app.services.spectral_service import components_from_coefficients

            cached = components_from_coefficients(self.operator, self.coefficients)
            object.__setattr__(self, "_components", cached)
        return cached

    def damping(self, eigenvalues: np.ndarray) -> np.ndarray:
        gaps = eigenvalues[:, None] - eigenvalues[None, :]
        return np.exp(-self.t * gaps**2)

    def matrix(self) -> np.ndarray:
        """Dense rho_t in the computational basis (small validation instances)"""
        values, vectors = self.components
        return vectors @ self.damping(values) @ vectors.conj().T


@dataclass(frozen=True)
class AncillaGrid:
    """Uniform ancilla position grid carrying the Gaussian state e^{-z^2/4}/(2 pi)^{1/4}"""

    half_width: float = 10.0
    points: int = 2049

    def __post_init__(self):
        if self.half_width < 8.0:
            raise SpectralError(f"Ancilla grid half-width must be >= 8, got {self.half_width}")
        if self.points < 3 or self.points % 2 == 0:
            raise SpectralError(f"Ancilla grid needs an odd point count >= 3, got {self.points}")

    @classmethod
    def from_settings(cls) -> "AncillaGrid":
        settings = get_settings()
        return cls(half_width=settings.ANCILLA_HALF_WIDTH, points=settings.ANCILLA_POINTS)

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / (self.points - 1)

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(-self.half_width, self.half_width, self.points)

    @property
    def weights(self) -> np.ndarray:
        """Trapezoidal quadrature weights"""
        w = np.full(self.points, self.spacing)
        w[0] = w[-1] = self.spacing / 2.0
        return w

    @property
    def raw_wavefunction(self) -> np.ndarray:
        z = self.nodes
        return np.exp(-(z**2) / 4.0) / (2.0 * np.pi) ** 0.25

    @property
    def raw_squared_norm(self) -> float:
        return float(np.sum(self.weights * self.raw_wavefunction**2))

    @property
    def wavefunction(self) -> np.ndarray:
        """psi_g on the grid, normalized under the quadrature rule"""
        return self.raw_wavefunction / np.sqrt(self.raw_squared_norm)

    def required_points(self, max_spacing: float) -> int:
        needed = int(np.ceil(2.0 * self.half_width / max_spacing)) + 1
        return needed if needed % 2 == 1 else needed + 1


@dataclass(frozen=True, eq=False)
class WalkHamiltonian:
    """H_P = i(V Pi_0 - Pi_0 V) on the (n+1)^2 product space.

    Register index 0 is the reference state |0>, node x sits at index x + 1,
    and the product index of |a, b> is a * (n + 1) + b.
    """

    n: int
    U: np.ndarray
    V: np.ndarray
    generator: np.ndarray
    extension: Dict[str, str]
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @property
    def register_dim(self) -> int:
        return self.n + 1

    @property
    def dim(self) -> int:
        return self.register_dim**2

    @property
    def reference_indices(self) -> np.ndarray:
        """Product indices of |a, 0> for every first-register value a"""
        return np.arange(self.register_dim) * self.register_dim

    @property
    def node_reference_indices(self) -> np.ndarray:
        """Product indices of |x, 0> for nodes x"""
        return (np.arange(self.n) + 1) * self.register_dim

    @property
    def H(self) -> np.ndarray:
        return 1j * self.generator

    @property
    def operator(self) -> HermitianOperator:
        cached = self.__dict__.get("_operator")
        if cached is None:
            with self._lock:
                cached = self.__dict__.get("_operator")
                if cached is None:
                    cached = HermitianOperator(self.H)
                    object.__setattr__(self, "_operator", cached)
        return cached

    def embed(self, psi_node: np.ndarray) -> np.ndarray:
        """psi (x) |0> on the product space"""
        psi_node = np.asarray(psi_node)
        if psi_node.shape != (self.n,):
            raise SpectralError(f"Node state has shape {psi_node.shape}, expected ({self.n},)")
        out = np.zeros(self.dim, dtype=psi_node.dtype)
        out[self.node_reference_indices] = psi_node
        return out
