"""Quantum-walk Hamiltonian H_P = i[V, Pi_0] with V = U_P^T S U_P.

Both registers have n + 1 levels: index 0 is the reference state |0> and
node x is index x + 1. U_P maps |x, 0> to sum_y sqrt(p_xy) |x, y>; it is
completed on the rest of each |x, .> block by the Householder reflection
exchanging |0> and sum_y sqrt(p_xy) |y>, and acts as the identity on the
|0, .> block. On the node (x) |0> sector H_P^2 acts as I - D^2.
"""

import logging
from typing import Optional

import numpy as np

from app.config import get_settings
from app.errors import SpectralError, WalkConstructionError
from app.models.markov_models import ChainLike, Discriminant, MarkedLike, as_chain, as_marked
from app.models.quantum_models import QuantumState, WalkHamiltonian
from app.services.markov_service import discriminant
from app.services.spectral_service import StateLike, as_amplitudes, real_evolve, to_state, unitary_evolve

logger = logging.getLogger(__name__)

EXTENSION_RECORD = {
    "method": "householder",
    "description": "per node x, reflection I - 2uu^T/u^Tu with u = e_0 - sum_y sqrt(p_xy) e_y on the second register; identity on the reference block",
}


def build_walk_unitary(chain: ChainLike) -> np.ndarray:
    """Real orthogonal U_P on the (n+1)^2 product space"""
    P = as_chain(chain).P
    n = P.shape[0]
    d = n + 1
    U = np.zeros((d * d, d * d))
    U[:d, :d] = np.eye(d)
    for x in range(n):
        target = np.zeros(d)
        target[1:] = np.sqrt(P[x])
        u = -target
        u[0] += 1.0
        reflection = np.eye(d) - 2.0 * np.outer(u, u) / (u @ u)
        block = slice((x + 1) * d, (x + 2) * d)
        U[block, block] = reflection
    return U


def swap_permutation(register_dim: int) -> np.ndarray:
    """Index map of S|a, b> = |b, a>"""
    a, b = np.divmod(np.arange(register_dim * register_dim), register_dim)
    return b * register_dim + a


def build_hamiltonian(chain: ChainLike, D: Optional[Discriminant] = None) -> WalkHamiltonian:
    """Assemble H_P and verify its defining identities"""
    P = as_chain(chain).P
    n = P.shape[0]
    d = n + 1
    settings = get_settings()
    D = D or discriminant(chain)
    logger.debug(f"Building walk Hamiltonian on {d * d} dimensions")

    U = build_walk_unitary(chain)
    orthogonality = float(np.abs(U.T @ U - np.eye(d * d)).max())
    if orthogonality > settings.SPECTRAL_TOL:
        raise WalkConstructionError(f"U_P is not orthogonal: residual {orthogonality:.3e}", orthogonality)

    perm = swap_permutation(d)
    V = U.T @ U[perm, :]
    asymmetry = float(np.abs(V - V.T).max())
    if asymmetry > settings.STOCHASTIC_TOL:
        raise WalkConstructionError(f"V is not symmetric: residual {asymmetry:.3e}", asymmetry)
    V = (V + V.T) / 2.0
    involution = float(np.abs(V @ V - np.eye(d * d)).max())
    if involution > settings.SPECTRAL_TOL:
        raise WalkConstructionError(f"V^2 != I: residual {involution:.3e}", involution)

    reference = np.arange(d) * d
    VPi = np.zeros_like(V)
    VPi[:, reference] = V[:, reference]
    K = VPi - VPi.T
    walk = WalkHamiltonian(n=n, U=U, V=V, generator=K, extension=dict(EXTENSION_RECORD))

    sector = walk.node_reference_indices
    block = float(np.abs(V[np.ix_(sector, sector)] - D.D).max())
    if block > settings.SPECTRAL_TOL:
        raise WalkConstructionError(f"<y,0|V|x,0> != D_xy: residual {block:.3e}", block)

    # H^2 = -K^2; by linearity the basis columns |x,0> cover every psi (x) |0>
    squared = -(K @ K[:, sector])
    expected = np.zeros_like(squared)
    expected[sector, :] = np.eye(n) - D.D @ D.D
    residual = float(np.abs(squared - expected).max())
    if residual > settings.SQUARE_RELATION_TOL:
        raise WalkConstructionError(f"H_P^2 (psi (x) 0) != ((I - D^2) psi) (x) 0: residual {residual:.3e}", residual)
    return walk


def spectral_range(walk: WalkHamiltonian) -> dict:
    """Soft check that the spectrum of H_P lies in [-1, 1]"""
    eigenvalues = walk.operator.eigenvalues
    excess = float(max(np.abs(eigenvalues).max() - 1.0, 0.0))
    contained = excess <= 1e-8
    if not contained:
        logger.warning(f"Walk Hamiltonian spectrum leaves [-1, 1] by {excess:.3e}")
    return {"min": float(eigenvalues.min()), "max": float(eigenvalues.max()), "contained": contained}


def verify_square_relation(
    walk: WalkHamiltonian, D: Discriminant, trials: int, rng: np.random.Generator, strict: bool = True
) -> float:
    """Max residual of H_P^2 (psi (x) 0) - ((I - D^2) psi) (x) 0 over random unit psi.

    With ``strict`` a residual above ``SQUARE_RELATION_TOL`` raises; otherwise it is returned.
    """
    if D.n != walk.n:
        raise SpectralError(f"Discriminant over {D.n} nodes, walk over {walk.n}")
    K = walk.generator
    I_minus_D2 = np.eye(walk.n) - D.D @ D.D
    worst = 0.0
    for _ in range(trials):
        psi = rng.standard_normal(walk.n) + 1j * rng.standard_normal(walk.n)
        psi /= np.linalg.norm(psi)
        lhs = -(K @ (K @ walk.embed(psi)))
        rhs = walk.embed(I_minus_D2 @ psi)
        worst = max(worst, float(np.linalg.norm(lhs - rhs)))
    if strict and worst > get_settings().SQUARE_RELATION_TOL:
        raise WalkConstructionError(f"Square relation residual {worst:.3e}", worst)
    return worst


def evolve_edge_state(walk: WalkHamiltonian, psi_node: StateLike, tau: float, method: str = "auto") -> QuantumState:
    """e^{-i H_P tau} (psi (x) |0>).

    For real psi the real orthogonal propagator e^{tau K} is used, since
    e^{-i H_P tau} = e^{tau K} with K = V Pi_0 - Pi_0 V.
    """
    amplitudes = as_amplitudes(psi_node)
    if method not in ("auto", "real", "spectral"):
        raise ValueError(f"Unknown evolution method '{method}'")
    is_real = bool(np.all(amplitudes.imag == 0.0))
    if method == "real" or (method == "auto" and is_real):
        if not is_real:
            raise SpectralError("Real propagator needs a real node state")
        return to_state(real_evolve(walk.generator, tau, walk.embed(amplitudes.real)))
    return unitary_evolve(walk.operator, tau, walk.embed(amplitudes))


def first_register_distribution(state: StateLike, n: int) -> np.ndarray:
    """Probability of each first-register level; entry 0 is the reference level"""
    amplitudes = as_amplitudes(state)
    d = n + 1
    if amplitudes.shape != (d * d,):
        raise SpectralError(f"State of dimension {amplitudes.shape[0]} is not on the ({d})^2 product space")
    return np.sum(np.abs(amplitudes.reshape(d, d)) ** 2, axis=1)


def marked_probability(state: StateLike, marked: MarkedLike, n: Optional[int] = None) -> float:
    """<state| (Pi_M (x) I) |state> with Pi_M on the first register"""
    amplitudes = as_amplitudes(state)
    if n is None:
        n = int(round(np.sqrt(amplitudes.shape[0]))) - 1
    marked = as_marked(n, marked)
    if not marked.members:
        raise ValueError("Marked set is empty")
    distribution = first_register_distribution(amplitudes, n)
    return float(distribution[np.array(marked.members) + 1].sum())
