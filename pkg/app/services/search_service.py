"""Spatial search by continuous-time quantum walk.

One round: prepare sqrt(pi) (x) |0>, measure {Pi_M, I - Pi_M}; if no
marked node shows up, evolve sqrt(pi_U) (x) |0> under H_{P(s)} for a time
sqrt(2T) z with s drawn from the interpolation schedule, then measure the
first register in the node basis.

Step 3 and 4 statistics use the normalized post-measurement state
sqrt(pi_U) / sqrt(pi(U)). ``expected_bound_over_schedule`` averages the
sub-normalized quantity ||Pi_M e^{(D(s)^2 - I)T} sqrt(pi_U)||^2 unless asked
for the normalized one.
"""

import logging
import math
import threading
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from app.api.schemas import ScalingRow, SearchOutcome, SearchSummary
from app.config import get_settings
from app.errors import ChainError, InfeasibleSizeError
from app.models.markov_models import ChainLike, MarkedLike, MarkedSet, MarkovChain, as_chain, as_marked
from app.models.quantum_models import Projector
from app.services.gaussian_service import damped_projection, fast_forward_bound, sample_evolution_time
from app.services.markov_service import discriminant, generate, hitting_time, interpolate, make_lazy
from app.services.spectral_service import spectral_components
from app.services.walker_service import build_hamiltonian, first_register_distribution

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class InterpolationSchedule:
    """s in {1 - 1/r : r = 1, ..., base^ceil(log_base T)}"""

    T: float
    base: int = 2

    @property
    def size(self) -> int:
        if self.T <= 1.0:
            return 1
        return int(self.base ** math.ceil(math.log(self.T, self.base) - 1e-12))

    @property
    def grid(self) -> np.ndarray:
        r = np.arange(1, self.size + 1, dtype=float)
        return 1.0 - 1.0 / r

    def sample(self, rng: np.random.Generator) -> float:
        r = int(rng.integers(1, self.size + 1))
        return 1.0 - 1.0 / r


def schedule_for(T: float) -> InterpolationSchedule:
    return InterpolationSchedule(T=T, base=get_settings().SCHEDULE_LOG_BASE)


def sample_schedule(
    ht_estimate: float,
    c_T: float,
    rng: np.random.Generator,
    randomize_T: bool = False,
) -> Tuple[float, float]:
    """(s, T) with T = c_T * HT, or T uniform in [0, c_T * HT] when randomized"""
    if ht_estimate <= 0 or c_T <= 0:
        raise ValueError(f"Need positive HT estimate and c_T, got {ht_estimate}, {c_T}")
    T = c_T * ht_estimate
    if randomize_T:
        T = float(rng.uniform(0.0, T))
    return schedule_for(T).sample(rng), T


def unmarked_state(chain: ChainLike, marked: MarkedLike, normalized: bool = True) -> np.ndarray:
    """sqrt(pi_U): sum_{x in U} sqrt(pi_x) |x>, optionally divided by sqrt(pi(U))"""
    chain = as_chain(chain)
    marked = as_marked(chain.n, marked)
    psi = np.sqrt(chain.pi) * (~marked.mask)
    if normalized:
        psi = psi / np.linalg.norm(psi)
    return psi


class SpatialSearch:
    """Search runner for one lazy reversible chain and marked set.

    Per interpolation parameter s it keeps the eigenspace components of
    sqrt(pi_U) (x) |0> under H_{P(s)}, bounded by ``HAMILTONIAN_CACHE_MB``.
    """

    def __init__(self, chain: ChainLike, marked: MarkedLike, check_size: bool = True):
        chain = as_chain(chain)
        marked = as_marked(chain.n, marked)
        if chain.pi is None:
            raise ChainError("Search needs an ergodic reversible chain")
        if not chain.lazy:
            raise ChainError("Search needs a lazy chain; apply make_lazy first")
        marked.require_proper()
        if check_size and chain.n > get_settings().FULL_SPACE_CAP:
            raise InfeasibleSizeError(
                f"{chain.n} nodes exceed the full-space cap of {get_settings().FULL_SPACE_CAP}; "
                "use expected_bound_over_schedule or fast_forward_bound instead"
            )

        self.chain = chain
        self.marked = marked
        self.marked_mass = float(chain.pi[marked.mask].sum())
        self.psi_unmarked = unmarked_state(chain, marked)
        d = chain.n + 1
        self.marked_projector = Projector.from_indices(
            d * d, [(m + 1) * d + b for m in marked.members for b in range(d)]
        )
        self._cache: "OrderedDict[float, Tuple[np.ndarray, np.ndarray]]" = OrderedDict()
        self._cache_bytes = 0
        self._lock = threading.Lock()

    def components(self, s: float) -> Tuple[np.ndarray, np.ndarray]:
        with self._lock:
            if s in self._cache:
                self._cache.move_to_end(s)
                return self._cache[s]

        walk = build_hamiltonian(interpolate(self.chain, self.marked, s))
        values, vectors = spectral_components(walk.operator, walk.embed(self.psi_unmarked))
        entry = (values, vectors)

        limit = get_settings().HAMILTONIAN_CACHE_MB * 2**20
        with self._lock:
            if s not in self._cache:
                self._cache[s] = entry
                self._cache_bytes += vectors.nbytes + values.nbytes
                while self._cache_bytes > limit and len(self._cache) > 1:
                    _, (old_values, old_vectors) = self._cache.popitem(last=False)
                    self._cache_bytes -= old_vectors.nbytes + old_values.nbytes
            return self._cache[s]

    def exact_success_probability(self, T: float, s: float) -> float:
        """Tr[(Pi_M (x) I) rho_T] for the normalized post-measurement state"""
        values, vectors = self.components(s)
        return damped_projection(values, vectors, T, self.marked_projector)

    def fast_forward_bound(self, T: float, s: float) -> float:
        D = discriminant(interpolate(self.chain, self.marked, s))
        return fast_forward_bound(D, self.psi_unmarked, Projector.from_indices(self.chain.n, self.marked.members), T)

    def round_success_probability(self, T: float) -> float:
        """pi(M) + pi(U) * E_s[exact success probability]"""
        grid = schedule_for(T).grid
        mean = float(np.mean([self.exact_success_probability(T, s) for s in grid]))
        return self.marked_mass + (1.0 - self.marked_mass) * mean

    def run(self, T: float, rng: np.random.Generator, s: Optional[float] = None) -> SearchOutcome:
        """One round of the algorithm"""
        pi = self.chain.pi
        if rng.random() < self.marked_mass:
            members = np.array(self.marked.members)
            weights = pi[members] / self.marked_mass
            node = int(rng.choice(members, p=weights / weights.sum()))
            return SearchOutcome(found=True, node=node, elapsed_time=0.0, rounds=1, s=None, T=T, marked_at_preparation=True)

        s = schedule_for(T).sample(rng) if s is None else s
        tau = float(sample_evolution_time(T, rng))
        values, vectors = self.components(s)
        state = vectors @ np.exp(-1j * values * tau)
        distribution = first_register_distribution(state, self.chain.n)[1:]
        node = int(rng.choice(self.chain.n, p=distribution / distribution.sum()))
        return SearchOutcome(found=node in self.marked, node=node, elapsed_time=abs(tau), rounds=1, s=s, T=T)

    def repeat_until_found(
        self,
        T: float,
        max_rounds: int,
        rng: np.random.Generator,
        randomize_T: bool = False,
    ) -> SearchOutcome:
        if max_rounds < 1:
            raise ValueError(f"max_rounds must be >= 1, got {max_rounds}")
        elapsed = 0.0
        outcome = None
        for round_index in range(1, max_rounds + 1):
            T_round = float(rng.uniform(0.0, T)) if randomize_T else T
            outcome = self.run(T_round, rng)
            elapsed += outcome.elapsed_time
            if outcome.found:
                break
        return outcome.model_copy(update={"elapsed_time": elapsed, "rounds": round_index, "T": T})


def default_max_rounds(T: float) -> int:
    scale = get_settings().ROUNDS_SCALE
    return max(1, int(math.ceil(scale * math.log2(max(T, 2.0)) ** 2)))


def run_search(chain: ChainLike, marked: MarkedLike, T: float, rng: np.random.Generator) -> SearchOutcome:
    return SpatialSearch(chain, marked).run(T, rng)


def exact_success_probability(chain: ChainLike, marked: MarkedLike, T: float, s: float) -> float:
    return SpatialSearch(chain, marked).exact_success_probability(T, s)


def expected_bound_over_schedule(chain: ChainLike, marked: MarkedLike, T: float, normalized: bool = False) -> float:
    """Mean over the schedule grid of ||Pi_M e^{(D(s)^2 - I)T} sqrt(pi_U)||^2 (n x n algebra only)"""
    chain = as_chain(chain)
    marked = as_marked(chain.n, marked)
    marked.require_proper()
    psi = unmarked_state(chain, marked, normalized=normalized)
    projector = Projector.from_indices(chain.n, marked.members)
    grid = schedule_for(T).grid
    values = [fast_forward_bound(discriminant(interpolate(chain, marked, s)), psi, projector, T) for s in grid]
    return float(np.mean(values))


def repeat_until_found(
    chain: ChainLike,
    marked: MarkedLike,
    c_T: float,
    max_rounds: Optional[int],
    rng: np.random.Generator,
    ht_estimate: Optional[float] = None,
    randomize_T: bool = False,
    search: Optional[SpatialSearch] = None,
) -> SearchOutcome:
    """Repeat independent rounds until a marked node is found or rounds run out"""
    search = search or SpatialSearch(chain, marked)
    HT = ht_estimate if ht_estimate is not None else hitting_time(search.chain, search.marked)
    T = c_T * HT
    rounds = max_rounds if max_rounds is not None else default_max_rounds(T)
    return search.repeat_until_found(T, rounds, rng, randomize_T=randomize_T)


def spawn_generators(seed: int, count: int) -> List[np.random.Generator]:
    return [np.random.default_rng(child) for child in np.random.SeedSequence(seed).spawn(count)]


def ordered_map(task: Callable, items: Sequence, workers: int = 1) -> List:
    """Map preserving input order, optionally on a thread pool"""
    if workers <= 1:
        return [task(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(task, items))


def run_trials(
    chain: ChainLike,
    marked: MarkedLike,
    c_T: float,
    trials: int,
    seed: int,
    graph: str = "",
    max_rounds: Optional[int] = None,
    ht_estimate: Optional[float] = None,
    randomize_T: bool = False,
    workers: int = 1,
) -> SearchSummary:
    """Seeded batch of repeat_until_found runs, one sub-stream per trial"""
    search = SpatialSearch(chain, marked)
    HT = ht_estimate if ht_estimate is not None else hitting_time(search.chain, search.marked)
    logger.info(f"Running {trials} search trials on {graph or 'chain'} (n={search.chain.n}, HT={HT:.4g})")

    def trial(rng):
        return repeat_until_found(
            search.chain, search.marked, c_T, max_rounds, rng,
            ht_estimate=HT, randomize_T=randomize_T, search=search,
        )

    outcomes = ordered_map(trial, spawn_generators(seed, trials), workers)
    successes = sum(o.found for o in outcomes)
    return SearchSummary(
        graph=graph,
        n=search.chain.n,
        marked=list(search.marked.members),
        HT=HT,
        T=c_T * HT,
        trials=trials,
        successes=successes,
        success_frequency=successes / trials,
        mean_rounds=float(np.mean([o.rounds for o in outcomes])),
        mean_elapsed_time=float(np.mean([o.elapsed_time for o in outcomes])),
        seed=seed,
    )


def classical_baseline(chain: ChainLike, marked: MarkedLike, trials: int, rng: np.random.Generator) -> Tuple[float, float]:
    """Mean absorption time of the discrete walk started from pi, with standard error"""
    chain = as_chain(chain)
    marked = as_marked(chain.n, marked)
    if trials < 1:
        raise ValueError(f"Need at least one trial, got {trials}")
    if not marked.members:
        raise ChainError("Marked set is empty")
    cumulative = np.cumsum(chain.P, axis=1)
    cumulative[:, -1] = 1.0
    mask = marked.mask

    positions = rng.choice(chain.n, size=trials, p=chain.pi)
    steps = np.zeros(trials, dtype=np.int64)
    active = ~mask[positions]
    while np.any(active):
        idx = np.nonzero(active)[0]
        draws = rng.random(idx.size)
        rows = cumulative[positions[idx]]
        positions[idx] = (rows <= draws[:, None]).sum(axis=1)
        steps[idx] += 1
        active[idx] = ~mask[positions[idx]]

    stderr = float(steps.std(ddof=1) / np.sqrt(trials)) if trials > 1 else float("nan")
    return float(steps.mean()), stderr


def resolve_marked(n: int, rule: Union[str, float, Sequence[int]], rng: Optional[np.random.Generator] = None) -> MarkedSet:
    """'single' -> {0}; a fraction rho -> a random subset of max(1, round(rho n)) nodes"""
    if isinstance(rule, str):
        if rule != "single":
            raise ValueError(f"Unknown marked rule '{rule}'")
        return MarkedSet.of(n, [0])
    if isinstance(rule, float):
        if rng is None:
            raise ValueError("A random marked fraction needs a generator")
        count = min(n - 1, max(1, int(round(rule * n))))
        return MarkedSet.of(n, rng.choice(n, size=count, replace=False).tolist())
    return MarkedSet.of(n, rule)


def scaling_experiment(
    family: str,
    sizes: Sequence[int],
    c_T: float,
    marked_rule: Union[str, float],
    seed: int = 0,
    workers: int = 1,
) -> List[ScalingRow]:
    """Per size: HT, T, mean fast-forward bound, quantum time 2 sqrt(T / pi), classical time HT"""
    if list(sizes) != sorted(sizes):
        raise ValueError(f"Sizes must be ascending, got {list(sizes)}")
    generators = spawn_generators(seed, len(sizes))

    def row(item):
        size, rng = item
        chain = make_lazy(generate(family, size))
        marked = resolve_marked(chain.n, marked_rule, rng)
        HT = hitting_time(chain, marked)
        T = c_T * HT
        logger.info(f"Scaling {family}:{size} (n={chain.n}, HT={HT:.4g})")
        return ScalingRow(
            family=family,
            n=chain.n,
            HT=HT,
            T=T,
            s_grid_size=schedule_for(T).size,
            bound_mean=expected_bound_over_schedule(chain, marked, T),
            quantum_time=2.0 * math.sqrt(T / math.pi),
            classical_time=HT,
            seed=seed,
        )

    rows = ordered_map(row, list(zip(sizes, generators)), workers)
    logger.info("Scaling run complete")
    return rows


def fit_loglog_slope(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Least-squares slope of log y against log x"""
    if len(xs) < 2:
        raise ValueError("Need at least two points for a slope")
    slope, _ = np.polyfit(np.log(np.asarray(xs, dtype=float)), np.log(np.asarray(ys, dtype=float)), 1)
    return float(slope)


def time_per_find(row: ScalingRow) -> float:
    """Expected quantum time per successful find on the bound path.

    Each round costs 2 sqrt(T / pi) on average and succeeds with probability
    at least ``bound_mean``, so at most 1 / bound_mean rounds are expected.
    """
    if row.bound_mean <= 0.0:
        return math.inf
    return row.quantum_time / row.bound_mean
