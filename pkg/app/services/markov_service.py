"""Reversible Markov chains: construction, transforms and classical quantities.

Vector convention: distributions are column vectors and evolve with the
transpose, so the row-vector update ``v_{t+1} = v_t P`` reads
``v_{t+1} = P.T @ v_t`` here.
"""

import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from app.config import get_settings
from app.errors import ChainError
from app.models.markov_models import (
    ChainLike,
    Discriminant,
    InterpolatedChain,
    MarkedLike,
    MarkovChain,
    as_chain,
    as_marked,
)
from app.utils.graph_utils import (
    build_family_graph,
    calculate_graph_metrics,
    graph_weights,
    is_aperiodic,
    node_label,
    transition_digraph,
    unreachable_nodes,
)
from app.utils.validators import check_square, parse_graph_spec

logger = logging.getLogger(__name__)


def _is_lazy(P: np.ndarray) -> bool:
    return bool(np.all(np.diag(P) >= 0.5 - get_settings().STOCHASTIC_TOL))


def chain_from_matrix(P: np.ndarray, lazy: Optional[bool] = None, labels: Sequence[str] = ()) -> MarkovChain:
    """Wrap a transition matrix, attaching pi when the chain is irreducible"""
    P = np.asarray(check_square(P, "transition matrix"), dtype=float)
    lazy = _is_lazy(P) if lazy is None else lazy
    chain = MarkovChain(P=P, lazy=lazy, labels=tuple(labels))
    if unreachable_nodes(transition_digraph(P)):
        return chain
    return MarkovChain(P=P, pi=stationary(chain), lazy=lazy, labels=chain.labels)


def from_weighted_graph(weights: np.ndarray, labels: Sequence[str] = ()) -> MarkovChain:
    """Random walk p_xy = w_xy / sum_z w_xz, with pi proportional to the weighted degree"""
    W = np.asarray(check_square(weights, "weight matrix"), dtype=float)
    if np.any(W < 0):
        raise ChainError("Edge weights must be nonnegative")
    asymmetry = float(np.abs(W - W.T).max())
    if asymmetry > get_settings().STOCHASTIC_TOL * max(1.0, float(W.max())):
        raise ChainError(f"Weight matrix is not symmetric: max asymmetry {asymmetry:.3e}")
    W = (W + W.T) / 2.0

    degrees = W.sum(axis=1)
    isolated = np.nonzero(degrees <= 0)[0]
    if isolated.size:
        raise ChainError(f"Isolated nodes with zero total weight: {isolated.tolist()}")

    P = W / degrees[:, None]
    pi = degrees / degrees.sum()
    return MarkovChain(P=P, pi=pi, lazy=_is_lazy(P), labels=tuple(labels))


def generate(family: str, size: int) -> MarkovChain:
    """Simple random walk on a benchmark graph family"""
    minimum = 1 if family == "hypercube" else 2
    if size < minimum:
        raise ChainError(f"Size for family '{family}' must be >= {minimum}, got {size}")
    graph, order = build_family_graph(family, size)
    labels = [node_label(family, node) for node in order]
    logger.debug(f"Generated {family}:{size} with {len(order)} nodes")
    return from_weighted_graph(graph_weights(graph, order), labels=labels)


def chain_from_spec(spec: str) -> MarkovChain:
    family, size = parse_graph_spec(spec)
    return generate(family, size)


def make_lazy(chain: ChainLike) -> MarkovChain:
    """(I + P) / 2; applying it to a lazy chain gives self-loops 3/4, not the same chain"""
    chain = as_chain(chain)
    P = (np.eye(chain.n) + chain.P) / 2.0
    return MarkovChain(P=P, pi=chain.pi, lazy=True, labels=chain.labels)


def square_chain(chain: ChainLike) -> MarkovChain:
    """Two-step chain P^2, reversible with the same pi"""
    chain = as_chain(chain)
    P = chain.P @ chain.P
    P = P / P.sum(axis=1, keepdims=True)
    return MarkovChain(P=P, pi=chain.pi, lazy=_is_lazy(P), labels=chain.labels)


def stationary(chain: ChainLike) -> np.ndarray:
    """Stationary distribution from the eigenvector of P^T at eigenvalue 1"""
    chain = as_chain(chain)
    settings = get_settings()
    graph = transition_digraph(chain.P)
    unreachable = unreachable_nodes(graph)
    if unreachable:
        raise ChainError(f"Chain is reducible: nodes {sorted(unreachable)} are not mutually reachable with node 0")
    if not chain.lazy and not is_aperiodic(graph):
        logger.warning("Chain is periodic; the stationary distribution is unique but not a limit")

    eigenvalues, eigenvectors = scipy.linalg.eig(chain.P.T)
    near_one = np.abs(eigenvalues - 1.0) < 1e-8
    if near_one.sum() != 1:
        raise ChainError(f"Stationary distribution is not unique: {int(near_one.sum())} eigenvalues at 1")

    pi = np.real(eigenvectors[:, np.argmax(near_one)])
    pi = pi / pi.sum()
    if np.any(pi <= 0):
        raise ChainError(f"Stationary distribution has nonpositive entries (min {pi.min():.3e})")
    residual = float(np.abs(chain.P.T @ pi - pi).max())
    if residual > settings.SPECTRAL_TOL:
        raise ChainError(f"Stationary distribution residual {residual:.3e} exceeds tolerance")
    return pi


def absorbing(chain: ChainLike, marked: MarkedLike) -> MarkovChain:
    """P' with every marked row replaced by a self-loop"""
    chain = as_chain(chain)
    marked = as_marked(chain.n, marked)
    if not marked.members:
        return chain
    P = np.array(chain.P, copy=True)
    rows = list(marked.members)
    P[rows, :] = 0.0
    P[rows, rows] = 1.0
    return MarkovChain(P=P, lazy=chain.lazy, labels=chain.labels)


def interpolate(chain: ChainLike, marked: MarkedLike, s: float) -> InterpolatedChain:
    chain = as_chain(chain)
    return InterpolatedChain(base=chain, marked=as_marked(chain.n, marked), s=float(s))


def interpolated_stationary(chain: ChainLike, marked: MarkedLike, s: float) -> np.ndarray:
    """pi(s) = ((1 - s) pi_U, pi_M) / (1 - s (1 - p_M))"""
    chain = as_chain(chain)
    marked = as_marked(chain.n, marked)
    if not 0.0 <= s < 1.0:
        raise ChainError(f"Interpolated chain is only ergodic for s in [0, 1), got {s}")
    if chain.pi is None:
        raise ChainError("Base chain has no stationary distribution")
    p_marked = float(chain.pi[marked.mask].sum())
    pi = np.array(chain.pi, copy=True)
    pi[~marked.mask] *= 1.0 - s
    return pi / (1.0 - s * (1.0 - p_marked))


def discriminant(chain: ChainLike) -> Discriminant:
    """D_xy = sqrt(p_xy p_yx) with eigenvalues in [-1, 1]"""
    P = as_chain(chain).P
    settings = get_settings()
    D = np.sqrt(P * P.T)
    try:
        eigenvalues, eigenvectors = scipy.linalg.eigh(D)
    except np.linalg.LinAlgError as e:
        raise ChainError(f"Eigensolver failed on the discriminant: {e}")
    residual = float(np.abs(D @ eigenvectors - eigenvectors * eigenvalues).max())
    if residual > settings.EIGEN_RESIDUAL_TOL:
        raise ChainError(f"Discriminant eigendecomposition residual {residual:.3e}")
    if np.abs(eigenvalues).max() > 1.0 + settings.SPECTRAL_TOL:
        raise ChainError(f"Discriminant eigenvalue {eigenvalues.max():.12f} outside [-1, 1]")
    return Discriminant(D=D, eigenvalues=np.clip(eigenvalues, -1.0, 1.0), eigenvectors=eigenvectors)


def symmetrized_transition(chain: ChainLike) -> np.ndarray:
    """diag(sqrt(pi)) P diag(sqrt(pi))^{-1}; equals D for reversible chains"""
    chain = as_chain(chain)
    root = np.sqrt(chain.pi)
    return root[:, None] * chain.P / root[None, :]


def hitting_times_from(chain: ChainLike, marked: MarkedLike) -> np.ndarray:
    """Expected steps to reach M from each node: (I - P_UU) h_U = 1, h_M = 0"""
    chain = as_chain(chain)
    marked = as_marked(chain.n, marked)
    if not marked.members:
        raise ChainError("Hitting time needs a nonempty marked set")
    h = np.zeros(chain.n)
    unmarked = list(marked.complement)
    if not unmarked:
        return h
    system = np.eye(len(unmarked)) - chain.P[np.ix_(unmarked, unmarked)]
    try:
        h[unmarked] = scipy.linalg.solve(system, np.ones(len(unmarked)))
    except np.linalg.LinAlgError as e:
        raise ChainError(f"Hitting-time system is singular: {e}")
    if not np.all(np.isfinite(h)):
        raise ChainError("Hitting-time system is singular")
    return h


def hitting_time(chain: ChainLike, marked: MarkedLike, conditioned: bool = False) -> float:
    """HT(P, M) = sum_{x in U} pi_x h_x.

    With ``conditioned=True`` the start is pi restricted to U and
    renormalized, i.e. the sum is divided by pi(U).
    """
    chain = as_chain(chain)
    marked = as_marked(chain.n, marked)
    if chain.pi is None:
        raise ChainError("Hitting time needs an ergodic chain with a stationary distribution")
    h = hitting_times_from(chain, marked)
    value = float(chain.pi @ h)
    if conditioned:
        mass = float(chain.pi[~marked.mask].sum())
        return value / mass if mass > 0 else 0.0
    return value


def lazy_hitting_time(chain: ChainLike, marked: MarkedLike, conditioned: bool = False) -> float:
    """Hitting time of (I + P) / 2; twice the non-lazy value"""
    return hitting_time(make_lazy(chain), marked, conditioned=conditioned)


def sample_ct_trajectory(
    chain: ChainLike,
    start: int,
    horizon: float,
    rng: np.random.Generator,
    mode: str = "self_loops",
) -> List[Tuple[int, float]]:
    """Continuous-time path with kernel Q = P - I as (node, entry time) pairs.

    mode "self_loops": rate-1 exponential clocks, jumps drawn from P; a
    self-loop jump keeps the node and is not recorded.
    mode "skeleton": holding rate 1 - p_xx and jumps drawn from the
    self-loop-free row, which is rate 1/2 on a lazy chain. Both modes have
    the same law.
    """
    chain = as_chain(chain)
    if horizon < 0:
        raise ValueError(f"Horizon must be nonnegative, got {horizon}")
    if mode not in ("self_loops", "skeleton"):
        raise ValueError(f"Unknown trajectory mode '{mode}'")

    cumulative = np.cumsum(chain.P, axis=1)
    stay = np.diag(chain.P)
    node, clock = int(start), 0.0
    path = [(node, 0.0)]
    while True:
        if mode == "self_loops":
            clock += rng.exponential(1.0)
            if clock > horizon:
                break
            nxt = int(np.searchsorted(cumulative[node], rng.random() * cumulative[node, -1], side="right"))
            nxt = min(nxt, chain.n - 1)
        else:
            rate = 1.0 - stay[node]
            if rate <= 0:
                break
            clock += rng.exponential(1.0 / rate)
            if clock > horizon:
                break
            row = np.array(chain.P[node], copy=True)
            row[node] = 0.0
            nxt = int(rng.choice(chain.n, p=row / row.sum()))
        if nxt != node:
            node = nxt
            path.append((node, clock))
    return path


def state_at(trajectory: List[Tuple[int, float]], t: float) -> int:
    """Node occupied at time t"""
    node = trajectory[0][0]
    for candidate, entered in trajectory:
        if entered > t:
            break
        node = candidate
    return node


def spectral_gap(chain: ChainLike) -> float:
    eigenvalues = discriminant(chain).eigenvalues
    if eigenvalues.size < 2:
        return 1.0
    return float(1.0 - eigenvalues[-2])


def chain_metrics(chain: ChainLike) -> dict:
    chain = as_chain(chain)
    metrics = calculate_graph_metrics(chain.P)
    metrics.update(
        {
            "lazy": chain.lazy,
            "reversible": chain.reversible,
            "spectral_gap": spectral_gap(chain),
        }
    )
    return metrics


def save_chain(chain: ChainLike, path: str):
    as_chain(chain).save(path)


def load_chain(path: str) -> MarkovChain:
    return MarkovChain.load(path)
