import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, Optional, Sequence, Tuple, Union

import numpy as np

from app.config import get_settings
from app.errors import ChainError


def _frozen(array: np.ndarray, dtype=float) -> np.ndarray:
    out = np.array(array, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class MarkovChain:
    """Row-stochastic transition matrix with its stationary distribution.

    States are column vectors internally: a distribution v evolves as
    ``P.T @ v`` (the row-vector form ``v @ P`` of the same update).
    ``pi`` is ``None`` for chains without a unique stationary distribution,
    such as absorbing chains. ``lazy`` means every self-loop is at least 1/2.
    """

    P: np.ndarray
    pi: Optional[np.ndarray] = None
    lazy: bool = False
    labels: Tuple[str, ...] = ()

    def __post_init__(self):
        P = _frozen(self.P)
        if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] == 0:
            raise ChainError(f"Transition matrix must be square and nonempty, got shape {P.shape}")
        tol = get_settings().STOCHASTIC_TOL
        if np.any(P < -tol):
            raise ChainError(f"Negative transition probability {P.min():.3e}")
        row_error = np.abs(P.sum(axis=1) - 1.0).max()
        if row_error > tol:
            raise ChainError(f"Rows must sum to 1, max deviation {row_error:.3e}")
        if self.lazy and np.any(np.diag(P) < 0.5 - tol):
            raise ChainError("Lazy chain needs self-loop probability >= 1/2 on every node")

        object.__setattr__(self, "P", P)
        labels = tuple(str(label) for label in self.labels) or tuple(str(i) for i in range(P.shape[0]))
        if len(labels) != P.shape[0]:
            raise ChainError(f"Expected {P.shape[0]} labels, got {len(labels)}")
        object.__setattr__(self, "labels", labels)

        if self.pi is not None:
            pi = _frozen(self.pi)
            if pi.shape != (P.shape[0],):
                raise ChainError(f"Stationary distribution has shape {pi.shape}, expected ({P.shape[0]},)")
            object.__setattr__(self, "pi", pi)
            self._check_detailed_balance()

    @property
    def n(self) -> int:
        return self.P.shape[0]

    @property
    def reversible(self) -> bool:
        return self.pi is not None

    def detailed_balance_residual(self) -> float:
        flow = self.pi[:, None] * self.P
        return float(np.abs(flow - flow.T).max())

    def _check_detailed_balance(self):
        residual = self.detailed_balance_residual()
        if residual > get_settings().REVERSIBILITY_TOL:
            raise ChainError(f"Chain is not reversible: detailed-balance residual {residual:.3e}")

    def to_dict(self) -> Dict:
        return {
            "n": self.n,
            "P": self.P.tolist(),
            "lazy": self.lazy,
            "labels": list(self.labels),
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "MarkovChain":
        from app.services.markov_service import chain_from_matrix

        P = np.asarray(data["P"], dtype=float)
        if P.shape != (data["n"], data["n"]):
            raise ChainError(f"Document declares n={data['n']} but P has shape {P.shape}")
        return chain_from_matrix(P, lazy=data.get("lazy", False), labels=data.get("labels") or ())

    def save(self, path: Union[str, Path]):
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path: Union[str, Path]) -> "MarkovChain":
        if not Path(path).exists():
            raise ChainError(f"Chain file not found: {path}")
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class MarkedSet:
    """Subset M of the node indices {0, ..., n-1}"""

    n: int
    members: Tuple[int, ...] = field(default_factory=tuple)

    def __post_init__(self):
        members = tuple(sorted(set(int(m) for m in self.members)))
        if any(m < 0 or m >= self.n for m in members):
            raise ChainError(f"Marked nodes {members} outside 0..{self.n - 1}")
        object.__setattr__(self, "members", members)

    @classmethod
    def of(cls, n: int, members: Iterable[int]) -> "MarkedSet":
        return cls(n=n, members=tuple(members))

    @property
    def complement(self) -> Tuple[int, ...]:
        marked = set(self.members)
        return tuple(x for x in range(self.n) if x not in marked)

    @property
    def mask(self) -> np.ndarray:
        mask = np.zeros(self.n, dtype=bool)
        mask[list(self.members)] = True
        return mask

    def __len__(self) -> int:
        return len(self.members)

    def __contains__(self, node) -> bool:
        return node in self.members

    def require_proper(self):
        """Search needs M nonempty and M != V"""
        if not self.members:
            raise ChainError("Marked set is empty")
        if len(self.members) == self.n:
            raise ChainError("Every node is marked")


MarkedLike = Union[MarkedSet, Sequence[int]]


def as_marked(n: int, marked: MarkedLike) -> MarkedSet:
    if isinstance(marked, MarkedSet):
        if marked.n != n:
            raise ChainError(f"Marked set is over {marked.n} nodes, chain has {n}")
        return marked
    return MarkedSet.of(n, marked)


@dataclass(frozen=True, eq=False)
class Discriminant:
    """Symmetric matrix D_xy = sqrt(p_xy p_yx) with its eigendecomposition"""

    D: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "D", _frozen(self.D))
        object.__setattr__(self, "eigenvalues", _frozen(self.eigenvalues))
        object.__setattr__(self, "eigenvectors", _frozen(self.eigenvectors))

    @property
    def n(self) -> int:
        return self.D.shape[0]

    def squared_generator_apply(self, t: float, psi: np.ndarray) -> np.ndarray:
        """e^{t(D^2 - I)} psi"""
        V = self.eigenvectors
        damping = np.exp(t * (self.eigenvalues**2 - 1.0))
        return V @ (damping * (V.T @ psi))


@dataclass(frozen=True, eq=False)
class InterpolatedChain:
    """P(s) = (1 - s) P + s P' for the absorbing chain P' of a marked set"""

    base: MarkovChain
    marked: MarkedSet
    s: float

    def __post_init__(self):
        if not 0.0 <= self.s <= 1.0:
            raise ChainError(f"Interpolation parameter must lie in [0, 1], got {self.s}")
        if self.marked.n != self.base.n:
            raise ChainError(f"Marked set is over {self.marked.n} nodes, chain has {self.base.n}")

    @property
    def n(self) -> int:
        return self.base.n

    @property
    def P(self) -> np.ndarray:
        return self.chain.P

    @property
    def chain(self) -> MarkovChain:
        cached = self.__dict__.get("_chain")
        if cached is None:
            from app.services.markov_service import absorbing, interpolated_stationary

            absorbed = absorbing(self.base, self.marked)
            P = (1.0 - self.s) * self.base.P + self.s * absorbed.P
            pi = None
            if self.s < 1.0 and self.base.pi is not None:
                pi = interpolated_stationary(self.base, self.marked, self.s)
            cached = MarkovChain(P=P, pi=pi, lazy=self.base.lazy, labels=self.base.labels)
            object.__setattr__(self, "_chain", cached)
        return cached


ChainLike = Union[MarkovChain, InterpolatedChain]


def as_chain(chain: ChainLike) -> MarkovChain:
    if isinstance(chain, InterpolatedChain):
        return chain.chain
    return chain
