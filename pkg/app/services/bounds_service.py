"""Classical joint-event probabilities and the inequality chain behind the search bound.

The joint event is Pr_{pi_U}(X_t in M, X_{t+t'} not in M). For a reversible
chain with discriminant D = V diag(lambda) V^T and c = V^T phi, where phi is
the normalized sqrt(pi_U), every such probability factorizes over the
marked nodes:

    CT, kernel P^2 - I:  sum_{x in M} a_x(t) a_x(t'),  a(t) = V_M (c * e^{t(lambda^2 - 1)})
    DT, matrix P:        sum_{x in M} b_x(t) b_x(t'),  b(t) = V_M (c * lambda^t)

so double integrals and double sums reduce to one-dimensional ones.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np
import scipy.integrate

from app.api.schemas import VerificationReport
from app.config import get_settings
from app.errors import ChainError, warn_hypothesis
from app.models.markov_models import ChainLike, MarkedLike, MarkedSet, MarkovChain, as_chain, as_marked
from app.services.markov_service import (
    discriminant,
    hitting_time,
    interpolate,
    sample_ct_trajectory,
    square_chain,
    state_at,
)
from app.services.search_service import InterpolationSchedule, unmarked_state

logger = logging.getLogger(__name__)

LEMMA_SLACK = 1e-10


@dataclass(frozen=True, eq=False)
class JointEventQuery:
    chain: MarkovChain
    marked: MarkedSet
    t: float
    t_prime: float

    def __post_init__(self):
        if self.t < 0 or self.t_prime < 0:
            raise ValueError(f"Times must be nonnegative, got t={self.t}, t'={self.t_prime}")
        if self.chain.pi is None:
            raise ChainError("Joint events need an ergodic chain with a stationary distribution")


@dataclass(frozen=True, eq=False)
class JointEventFactors:
    """Spectral factors of one (chain, M) pair"""

    eigenvalues: np.ndarray
    coefficients: np.ndarray
    marked_rows: np.ndarray

    @property
    def rates(self) -> np.ndarray:
        return self.eigenvalues**2 - 1.0

    def ct_profile(self, times) -> np.ndarray:
        """a_x(t) for each time (rows) and marked node (columns)"""
        times = np.atleast_1d(np.asarray(times, dtype=float))
        return (np.exp(np.outer(times, self.rates)) * self.coefficients) @ self.marked_rows.T

    def dt_profile(self, steps) -> np.ndarray:
        steps = np.atleast_1d(np.asarray(steps, dtype=int))
        return (np.power(self.eigenvalues[None, :], steps[:, None]) * self.coefficients) @ self.marked_rows.T


def joint_factors(chain: ChainLike, marked: MarkedLike) -> JointEventFactors:
    chain = as_chain(chain)
    marked = as_marked(chain.n, marked)
    marked.require_proper()
    if chain.pi is None:
        raise ChainError("Joint events need an ergodic chain with a stationary distribution")
    D = discriminant(chain)
    phi = unmarked_state(chain, marked, normalized=True)
    return JointEventFactors(
        eigenvalues=D.eigenvalues,
        coefficients=D.eigenvectors.T @ phi,
        marked_rows=D.eigenvectors[list(marked.members), :],
    )


def _probability(value: float) -> float:
    return min(max(float(value), 0.0), 1.0)


def joint_event_ct(chain: ChainLike, marked: MarkedLike, t: float, t_prime: float) -> float:
    """<pi_U| e^{t(P^2 - I)} Pi_M e^{t'(P^2 - I)} |1_U>"""
    chain = as_chain(chain)
    query = JointEventQuery(chain, as_marked(chain.n, marked), float(t), float(t_prime))
    factors = joint_factors(query.chain, query.marked)
    a = factors.ct_profile([query.t, query.t_prime])
    return _probability(a[0] @ a[1])


def joint_event_dt(chain: ChainLike, marked: MarkedLike, t: int, t_prime: int) -> float:
    """<pi_U| P^t Pi_M P^{t'} |1_U>"""
    if int(t) != t or int(t_prime) != t_prime:
        raise ValueError(f"Discrete times must be integers, got t={t}, t'={t_prime}")
    chain = as_chain(chain)
    query = JointEventQuery(chain, as_marked(chain.n, marked), int(t), int(t_prime))
    factors = joint_factors(query.chain, query.marked)
    b = factors.dt_profile([int(t), int(t_prime)])
    return _probability(b[0] @ b[1])


def joint_event_dt_by_paths(chain: ChainLike, marked: MarkedLike, t: int, t_prime: int) -> float:
    """Same quantity by enumerating every path of length t + t'; exponential in t + t'"""
    chain = as_chain(chain)
    marked = as_marked(chain.n, marked)
    JointEventQuery(chain, marked, t, t_prime)
    marked.require_proper()
    P = chain.P
    unmarked = list(marked.complement)
    start = chain.pi[unmarked] / chain.pi[unmarked].sum()
    successors = [np.nonzero(P[x] > 0)[0].tolist() for x in range(chain.n)]

    total = 0.0

    def walk(node: int, step: int, weight: float):
        nonlocal total
        if step == t and node not in marked:
            return
        if step == t + t_prime:
            if node not in marked:
                total += weight
            return
        for nxt in successors[node]:
            walk(nxt, step + 1, weight * P[node, nxt])

    for x, mass in zip(unmarked, start):
        walk(x, 0, mass)
    return _probability(total)


def joint_event_ct_sampled(
    chain: ChainLike,
    marked: MarkedLike,
    t: float,
    t_prime: float,
    samples: int,
    rng: np.random.Generator,
    mode: str = "self_loops",
) -> Tuple[float, float]:
    """Trajectory estimate of joint_event_ct on the P^2 chain, with standard error"""
    chain = as_chain(chain)
    marked = as_marked(chain.n, marked)
    JointEventQuery(chain, marked, float(t), float(t_prime))
    if samples < 1:
        raise ValueError(f"Need at least one sample, got {samples}")
    squared = square_chain(chain)
    unmarked = np.array(marked.complement)
    start = chain.pi[unmarked] / chain.pi[unmarked].sum()

    hits = np.zeros(samples)
    for i, x in enumerate(rng.choice(unmarked, size=samples, p=start)):
        path = sample_ct_trajectory(squared, int(x), t + t_prime, rng, mode=mode)
        hits[i] = state_at(path, t) in marked and state_at(path, t + t_prime) not in marked
    stderr = float(hits.std(ddof=1) / np.sqrt(samples)) if samples > 1 else float("nan")
    return float(hits.mean()), stderr


def _integrated_exponential(rates: np.ndarray, length: float) -> np.ndarray:
    """int_0^L e^{r t} dt, equal to L at r = 0"""
    small = np.abs(rates) * length < 1e-12
    safe = np.where(small, 1.0, rates)
    return np.where(small, length, np.expm1(safe * length) / safe)


def default_points(length: float) -> int:
    points = max(2049, int(math.ceil(get_settings().QUADRATURE_POINTS_PER_UNIT * length)))
    return points + 1 - points % 2


def ct_window_integral(
    factors: JointEventFactors,
    length: float,
    quadrature: str = "trapezoid",
    points: Optional[int] = None,
) -> Tuple[float, float]:
    """int_0^L int_0^L joint_event_ct dt dt' and an error estimate"""
    if quadrature == "exact":
        integrated = factors.marked_rows @ (factors.coefficients * _integrated_exponential(factors.rates, length))
        return float(integrated @ integrated), 0.0
    if quadrature != "trapezoid":
        raise ValueError(f"Unknown quadrature '{quadrature}'")

    points = default_points(length) if points is None else points
    if points < 3 or points % 2 == 0:
        raise ValueError(f"Trapezoid grid needs an odd number of points >= 3, got {points}")
    times = np.linspace(0.0, length, points)
    profile = factors.ct_profile(times)
    fine = scipy.integrate.trapezoid(profile, times, axis=0)
    coarse = scipy.integrate.trapezoid(profile[::2], times[::2], axis=0)
    value = float(fine @ fine)
    # trapezoid error is O(h^2); halving h shrinks it by four
    return value, abs(value - float(coarse @ coarse)) / 3.0


def dt_window_sum(factors: JointEventFactors, T: int, start: int = 1) -> float:
    """sum_{t,t'=start}^{T} joint_event_dt"""
    summed = factors.dt_profile(np.arange(start, T + 1)).sum(axis=0)
    return float(summed @ summed)


def _verdict(lhs: float, rhs: float, error_budget: float = 0.0) -> str:
    if error_budget > get_settings().QUADRATURE_BUDGET * abs(rhs):
        return "inconclusive"
    return "pass" if lhs >= rhs - error_budget - LEMMA_SLACK else "fail"


def _instance(chain: MarkovChain, marked: MarkedSet, **extra) -> Dict:
    return {"n": chain.n, "marked": list(marked.members), "lazy": chain.lazy, **extra}


def _discrete_horizon(T) -> int:
    if T < 1 or int(T) != T:
        raise ValueError(f"Discrete horizon must be a positive integer, got {T}")
    return int(T)


def check_success_prob_lemma(chain: ChainLike, marked: MarkedLike, s: float, t: float, t_prime: float) -> VerificationReport:
    """||Pi_M e^{t(D(s)^2 - I)} phi(s)|| against Pr_{pi_U(s)}(X_t in M, X_{t+t'} not in M)"""
    chain = as_chain(chain)
    marked = as_marked(chain.n, marked)
    if not 0.0 <= s < 1.0:
        raise ChainError(f"Interpolation parameter must lie in [0, 1), got {s}")
    interpolated = interpolate(chain, marked, s).chain
    factors = joint_factors(interpolated, marked)
    a = factors.ct_profile([t, t_prime])
    lhs = float(np.linalg.norm(a[0]))
    rhs = joint_event_ct(interpolated, marked, t, t_prime)
    return VerificationReport(
        lemma="success-prob",
        instance=_instance(chain, marked, s=s, t=t, t_prime=t_prime),
        lhs=lhs,
        rhs=rhs,
        margin=lhs - rhs,
        verdict=_verdict(lhs, rhs),
    )


def check_ct_dt_lemma(chain: ChainLike, marked: MarkedLike, T: int, quadrature: str = "trapezoid") -> VerificationReport:
    """int_0^{40T} int_0^{40T} of the CT joint event against (1/160) sum_{t,t'=1}^T of the P^2 chain's"""
    chain = as_chain(chain)
    marked = as_marked(chain.n, marked)
    T = _discrete_horizon(T)
    settings = get_settings()
    window = settings.CT_DT_WINDOW * T

    rhs = settings.CT_DT_CONSTANT * dt_window_sum(joint_factors(square_chain(chain), marked), T)
    factors = joint_factors(chain, marked)
    points = default_points(window)
    lhs, error = ct_window_integral(factors, window, quadrature, points)
    while quadrature == "trapezoid" and error > settings.QUADRATURE_BUDGET * abs(rhs):
        if 2 * points - 1 > settings.QUADRATURE_MAX_POINTS:
            break
        points = 2 * points - 1
        lhs, error = ct_window_integral(factors, window, quadrature, points)
        logger.debug(f"Refined trapezoid grid to {points} points, error estimate {error:.3e}")
    verdict = _verdict(lhs, rhs, error)
    if verdict == "inconclusive":
        logger.warning(f"Quadrature error {error:.3e} exceeds the budget for rhs {rhs:.3e} at {points} points")
    return VerificationReport(
        lemma="ct-dt",
        instance=_instance(chain, marked, T=T, window=window, quadrature=quadrature, points=points),
        lhs=lhs,
        rhs=rhs,
        margin=lhs - rhs,
        error_budget=error,
        verdict=verdict,
    )


def check_lazy_square_lemma(chain: ChainLike, marked: MarkedLike, T: int) -> VerificationReport:
    """sum over the P^2 chain against (1/16) times the sum over the P chain"""
    chain = as_chain(chain)
    marked = as_marked(chain.n, marked)
    if not chain.lazy:
        raise ChainError("Lazy-square comparison needs a lazy chain")
    T = _discrete_horizon(T)
    lhs = dt_window_sum(joint_factors(square_chain(chain), marked), T)
    rhs = get_settings().LAZY_SQUARE_CONSTANT * dt_window_sum(joint_factors(chain, marked), T)
    return VerificationReport(
        lemma="lazy-square",
        instance=_instance(chain, marked, T=T),
        lhs=lhs,
        rhs=rhs,
        margin=lhs - rhs,
        verdict=_verdict(lhs, rhs),
    )


@dataclass(frozen=True)
class RandomizationEstimate:
    value: float
    error: float
    window: float
    grid_size: int
    discrete: bool


def corollary_schedule(T: float) -> InterpolationSchedule:
    """s in {1 - 1/r : r <= 2^ceil(log2(12 T))}"""
    return InterpolationSchedule(T=12.0 * T, base=2)


def check_hypotheses(chain: MarkovChain, marked: MarkedSet, T: float):
    settings = get_settings()
    mass = float(chain.pi[marked.mask].sum())
    if mass > settings.MARKED_MASS_LIMIT:
        warn_hypothesis(f"pi(M) = {mass:.4g} exceeds {settings.MARKED_MASS_LIMIT:.4g}")
    HT = hitting_time(chain, marked)
    if T < settings.HITTING_TIME_FACTOR * HT:
        warn_hypothesis(f"T = {T:.4g} is below {settings.HITTING_TIME_FACTOR:g} HT = {settings.HITTING_TIME_FACTOR * HT:.4g}")


def expectation_over_randomization(
    chain: ChainLike,
    marked: MarkedLike,
    T: float,
    discrete: bool = False,
    samples: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
    quadrature: str = "exact",
) -> RandomizationEstimate:
    """E over s and t, t' of the joint event of the interpolated chain.

    Continuous: kernel P(s)^2 - I with t, t' uniform in [0, 960T].
    Discrete: matrix P(s) with t, t' uniform in {1, ..., 24T}.
    With ``samples`` the expectation is a Monte Carlo mean over (s, t, t').
    """
    chain = as_chain(chain)
    marked = as_marked(chain.n, marked)
    marked.require_proper()
    if T <= 0:
        raise ValueError(f"T must be positive, got {T}")
    check_hypotheses(chain, marked, T)
    settings = get_settings()
    grid = corollary_schedule(T).grid
    window = (
        float(math.ceil(settings.DISCRETE_RANDOMIZATION_WINDOW * T)) if discrete else settings.RANDOMIZATION_WINDOW * T
    )
    factors = [joint_factors(interpolate(chain, marked, s).chain, marked) for s in grid]

    if samples is not None:
        if rng is None:
            raise ValueError("Sampled randomization needs a generator")
        picks = rng.integers(0, len(grid), size=samples)
        if discrete:
            times = rng.integers(1, int(window) + 1, size=(samples, 2))
        else:
            times = rng.uniform(0.0, window, size=(samples, 2))
        values = np.empty(samples)
        for i, (k, (t, t_prime)) in enumerate(zip(picks, times)):
            profile = factors[k].dt_profile([t, t_prime]) if discrete else factors[k].ct_profile([t, t_prime])
            values[i] = profile[0] @ profile[1]
        stderr = float(values.std(ddof=1) / np.sqrt(samples)) if samples > 1 else float("nan")
        return RandomizationEstimate(float(values.mean()), stderr, window, len(grid), discrete)

    values, errors = [], []
    for f in factors:
        if discrete:
            values.append(dt_window_sum(f, int(window)) / window**2)
            errors.append(0.0)
        else:
            value, error = ct_window_integral(f, window, quadrature)
            values.append(value / window**2)
            errors.append(error / window**2)
    return RandomizationEstimate(float(np.mean(values)), float(np.mean(errors)), window, len(grid), discrete)


def mean_squared_norm(factors: JointEventFactors, length: float) -> float:
    """(1/L) int_0^L ||Pi_M e^{t(D^2 - I)} phi||^2 dt"""
    rows = factors.marked_rows
    gram = (rows.T @ rows) * np.outer(factors.coefficients, factors.coefficients)
    rates = factors.rates[:, None] + factors.rates[None, :]
    return float(np.sum(gram * _integrated_exponential(rates, length)) / length)


def check_cauchy_schwarz_chain(
    chain: ChainLike,
    marked: MarkedLike,
    T: float,
    samples: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> VerificationReport:
    """E_{s,t}||Pi_M e^{t(D(s)^2 - I)} phi(s)||^2 against (E_{s,t,t'} joint event)^2 over the 960T window"""
    chain = as_chain(chain)
    marked = as_marked(chain.n, marked)
    estimate = expectation_over_randomization(chain, marked, T, samples=samples, rng=rng)
    grid = corollary_schedule(T).grid
    norms = [mean_squared_norm(joint_factors(interpolate(chain, marked, s).chain, marked), estimate.window) for s in grid]

    lhs = float(np.mean(norms))
    rhs = estimate.value**2
    error = 2.0 * estimate.value * estimate.error if samples is not None else 0.0
    return VerificationReport(
        lemma="corollary",
        instance=_instance(
            chain,
            marked,
            T=T,
            window=estimate.window,
            grid_size=estimate.grid_size,
            expectation=estimate.value,
            expectation_log_scaled=estimate.value * math.log2(max(T, 2.0)),
        ),
        lhs=lhs,
        rhs=rhs,
        margin=lhs - rhs,
        error_budget=error,
        verdict=_verdict(lhs, rhs, error) if samples is not None else _verdict(lhs, rhs),
    )


def interval_weight_statistics(
    chain: ChainLike,
    marked: MarkedLike,
    T: int,
    trajectories: int,
    draws: int,
    rng: np.random.Generator,
) -> Dict[str, float]:
    """Exponential-interval weights A = sum_{t,t'} tau_t tau_{t+t'} I(Y_t in M, Y_{t+t'} not in M).

    For each sampled discrete trajectory from pi_U, ``draws`` interval
    sequences are drawn; reported are the mean indicator sum, the mean of A,
    and the frequencies of "sum_{t<=2T} tau_t <= 40T", "A >= E[A]/2" and both.
    """
    chain = as_chain(chain)
    marked = as_marked(chain.n, marked)
    marked.require_proper()
    T = _discrete_horizon(T)
    if trajectories < 1 or draws < 1:
        raise ValueError("Need at least one trajectory and one draw")
    window = get_settings().CT_DT_WINDOW * T
    cumulative = np.cumsum(chain.P, axis=1)
    unmarked = np.array(marked.complement)
    start = chain.pi[unmarked] / chain.pi[unmarked].sum()
    offsets = np.arange(1, T + 1)

    indicator_sums, weight_means, fits, exceeds, joint = [], [], [], [], []
    for _ in range(trajectories):
        path = np.empty(2 * T + 1, dtype=int)
        path[0] = rng.choice(unmarked, p=start)
        for step in range(1, 2 * T + 1):
            row = cumulative[path[step - 1]]
            path[step] = min(int(np.searchsorted(row, rng.random() * row[-1], side="right")), chain.n - 1)
        inside = marked.mask[path]
        indicator = inside[offsets][:, None] & ~inside[offsets[:, None] + offsets[None, :]]
        expected = float(indicator.sum())

        tau = rng.exponential(1.0, size=(draws, 2 * T + 1))
        weights = np.einsum("kt,ktu,tu->k", tau[:, offsets], tau[:, offsets[:, None] + offsets[None, :]], indicator)
        fit = tau[:, 1 : 2 * T + 1].sum(axis=1) <= window
        exceed = weights >= expected / 2.0

        indicator_sums.append(expected)
        weight_means.append(float(weights.mean()))
        fits.append(float(fit.mean()))
        exceeds.append(float(exceed.mean()))
        joint.append(float((fit & exceed).mean()))

    return {
        "indicator_sum": float(np.mean(indicator_sums)),
        "weight_mean": float(np.mean(weight_means)),
        "window_fit_frequency": float(np.mean(fits)),
        "half_mean_frequency": float(np.mean(exceeds)),
        "joint_frequency": float(np.mean(joint)),
    }
