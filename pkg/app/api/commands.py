import json
import logging
import math
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple, Type

import numpy as np
from pydantic import BaseModel

from app.api.schemas import (
    ExperimentConfig,
    FastForwardRow,
    GroundStateReport,
    ScalingRow,
    SearchSummary,
    VerificationReport,
)
from app.config import get_settings
from app.errors import ConfigError
from app.models.markov_models import MarkedSet, MarkovChain
from app.models.quantum_models import HermitianOperator, QuantumState
from app.services import bounds_service, groundstate_service, search_service
from app.services.markov_service import (
    chain_from_spec,
    chain_metrics,
    discriminant,
    hitting_time,
    interpolate,
    load_chain,
    make_lazy,
)
from app.services.walker_service import build_hamiltonian, verify_square_relation
from app.utils.validators import parse_hamiltonian_spec, parse_marked_spec

logger = logging.getLogger(__name__)

CommandResult = Tuple[List[BaseModel], Type[BaseModel]]

LEMMAS = ("success-prob", "ct-dt", "lazy-square", "corollary", "square-relation", "lemma1")


# ============================================
# SHARED INPUTS
# ============================================


def build_chain(graph: Optional[str], lazy: bool = True) -> MarkovChain:
    """Chain from a 'family:size' spec or a saved chain document"""
    if not graph:
        raise ConfigError("This subcommand needs --graph")
    chain = load_chain(graph) if graph.endswith(".json") else chain_from_spec(graph)
    return chain if chain.lazy or not lazy else make_lazy(chain)


def marked_generator(seed: Optional[int]) -> np.random.Generator:
    return np.random.default_rng([0 if seed is None else seed, 1])


def build_marked(config: ExperimentConfig, n: int) -> MarkedSet:
    rule = parse_marked_spec(config.marked)
    return search_service.resolve_marked(n, rule, marked_generator(config.seed))


def resolve_T(config: ExperimentConfig, chain: MarkovChain, marked: MarkedSet) -> int:
    if config.T == "auto":
        return int(math.ceil(get_settings().HITTING_TIME_FACTOR * hitting_time(chain, marked)))
    try:
        T = float(config.T)
    except (TypeError, ValueError):
        raise ConfigError(f"T must be 'auto' or a number, got '{config.T}'")
    if T < 1 or T != int(T):
        raise ConfigError(f"T must be a positive integer, got {config.T}")
    return int(T)


# ============================================
# SEARCH
# ============================================


def run_search(config: ExperimentConfig) -> CommandResult:
    chain = build_chain(config.graph)
    marked = build_marked(config, chain.n)
    summary = search_service.run_trials(
        chain,
        marked,
        c_T=config.c_T,
        trials=config.trials,
        seed=config.seed,
        graph=config.graph,
        max_rounds=config.max_rounds,
        ht_estimate=config.ht_estimate,
        randomize_T=config.randomize_T,
        workers=config.workers,
    )
    return [summary], SearchSummary


# ============================================
# SCALING
# ============================================


def run_scaling(config: ExperimentConfig) -> CommandResult:
    if not config.family or not config.sizes:
        raise ConfigError("scaling needs --family and --sizes")
    rule = parse_marked_spec(config.marked)
    if isinstance(rule, list):
        raise ConfigError("scaling takes --marked single or fraction:rho")
    rows = search_service.scaling_experiment(
        config.family, config.sizes, config.c_T, rule, seed=config.seed, workers=config.workers
    )
    return rows, ScalingRow


# ============================================
# VERIFY
# ============================================


def _verify_success_prob(config, chain, marked, rng) -> List[VerificationReport]:
    T = resolve_T(config, chain, marked)
    window = get_settings().CT_DT_WINDOW * T
    grid = search_service.schedule_for(T).grid
    reports = []
    for _ in range(config.trials):
        s = config.s if config.s is not None else float(rng.choice(grid))
        t, t_prime = rng.uniform(0.0, window, size=2)
        reports.append(bounds_service.check_success_prob_lemma(chain, marked, s, float(t), float(t_prime)))
    return reports


def _verify_square_relation(config, chain, marked, rng) -> List[VerificationReport]:
    s = config.s if config.s is not None else 0.0
    interpolated = interpolate(chain, marked, s)
    walk = build_hamiltonian(interpolated)
    residual = verify_square_relation(walk, discriminant(interpolated), config.trials, rng, strict=False)
    tolerance = get_settings().SQUARE_RELATION_TOL
    return [
        VerificationReport(
            lemma="square-relation",
            instance={"n": chain.n, "marked": list(marked.members), "s": s, "trials": config.trials},
            lhs=residual,
            rhs=tolerance,
            margin=tolerance - residual,
            verdict="pass" if residual <= tolerance else "fail",
        )
    ]


def _verify_lemma1(config, chain, marked, rng) -> List[VerificationReport]:
    search = search_service.SpatialSearch(chain, marked)
    T_max = resolve_T(config, chain, marked)
    reports = []
    for _ in range(config.trials):
        s = config.s if config.s is not None else float(rng.uniform(0.0, 1.0))
        T = float(rng.uniform(0.0, T_max))
        exact = search.exact_success_probability(T, s)
        bound = search.fast_forward_bound(T, s)
        reports.append(
            VerificationReport(
                lemma="lemma1",
                instance={"n": chain.n, "marked": list(marked.members), "s": s, "T": T},
                lhs=exact,
                rhs=bound,
                margin=exact - bound,
                verdict="pass" if exact >= bound - 1e-9 else "fail",
            )
        )
    return reports


def run_verify(config: ExperimentConfig) -> CommandResult:
    if config.lemma not in LEMMAS:
        raise ConfigError(f"verify needs --lemma one of {', '.join(LEMMAS)}, got '{config.lemma}'")
    chain = build_chain(config.graph)
    marked = build_marked(config, chain.n)
    rng = np.random.default_rng(config.seed)

    if config.lemma == "success-prob":
        reports = _verify_success_prob(config, chain, marked, rng)
    elif config.lemma == "ct-dt":
        reports = [bounds_service.check_ct_dt_lemma(chain, marked, resolve_T(config, chain, marked), config.quadrature)]
    elif config.lemma == "lazy-square":
        reports = [bounds_service.check_lazy_square_lemma(chain, marked, resolve_T(config, chain, marked))]
    elif config.lemma == "corollary":
        reports = [bounds_service.check_cauchy_schwarz_chain(chain, marked, resolve_T(config, chain, marked))]
    elif config.lemma == "square-relation":
        reports = _verify_square_relation(config, chain, marked, rng)
    else:
        reports = _verify_lemma1(config, chain, marked, rng)

    metrics = chain_metrics(chain)
    reports = [r.model_copy(update={"instance": {**r.instance, **metrics}}) for r in reports]
    failed = sum(r.verdict == "fail" for r in reports)
    logger.info(f"Verified {config.lemma}: {len(reports) - failed}/{len(reports)} without failure")
    return reports, VerificationReport


# ============================================
# FAST-FORWARDING
# ============================================


def run_fastforward(config: ExperimentConfig) -> CommandResult:
    if not config.times:
        raise ConfigError("fastforward needs --times")
    chain = build_chain(config.graph)
    marked = build_marked(config, chain.n)
    search = search_service.SpatialSearch(chain, marked, check_size=False)
    exact_available = chain.n <= get_settings().FULL_SPACE_CAP
    if not exact_available:
        logger.info(f"{chain.n} nodes exceed the full-space cap; reporting the bound only")

    rows = []
    for t in config.times:
        values = [config.s] if config.s is not None else search_service.schedule_for(t).grid
        for s in values:
            rows.append(
                FastForwardRow(
                    graph=config.graph,
                    n=chain.n,
                    s=float(s),
                    t=t,
                    fast_forward_bound=search.fast_forward_bound(t, float(s)),
                    exact_probability=search.exact_success_probability(t, float(s)) if exact_available else None,
                    mean_evolution_time=2.0 * math.sqrt(t / math.pi),
                )
            )
    return rows, FastForwardRow


# ============================================
# GROUND STATE
# ============================================


def load_hamiltonian_file(path: str) -> Tuple[HermitianOperator, Optional[QuantumState]]:
    """{"matrix": [[...]], "imag": [[...]] (optional), "psi0": [...] (optional)}"""
    try:
        document = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"Hamiltonian file '{path}' not found")
    matrix = np.asarray(document["matrix"], dtype=float)
    if "imag" in document:
        matrix = matrix + 1j * np.asarray(document["imag"], dtype=float)
    psi0 = QuantumState.normalized(np.asarray(document["psi0"], dtype=float)) if "psi0" in document else None
    return HermitianOperator(matrix), psi0


def build_problems(config: ExperimentConfig) -> List[groundstate_service.GroundStateProblem]:
    if not config.hamiltonian:
        raise ConfigError("groundstate needs --hamiltonian")
    kind, argument = parse_hamiltonian_spec(config.hamiltonian)
    options = {"epsilon": config.epsilon, "eta": config.eta, "epsilon_g": config.energy_precision}

    if kind == "random":
        try:
            dim = int(argument)
        except ValueError:
            raise ConfigError(f"random Hamiltonian needs an integer dimension, got '{argument}'")
        rngs = search_service.spawn_generators(config.seed, config.trials)
        return [groundstate_service.random_problem(dim, rng, **options) for rng in rngs]
    if kind == "chain":
        return [groundstate_service.chain_problem(build_chain(argument, lazy=False), **options)]

    H, psi0 = load_hamiltonian_file(argument)
    if psi0 is None:
        psi0 = QuantumState.normalized(np.ones(H.dim))
    return [groundstate_service.problem_from_operator(H, psi0, **options)]


def run_groundstate(config: ExperimentConfig) -> CommandResult:
    prepare = groundstate_service.prepare_via_ancilla if config.ancilla else groundstate_service.prepare

    def solve(problem):
        return groundstate_service.to_report(problem, prepare(problem))

    reports = search_service.ordered_map(solve, build_problems(config), config.workers)
    return reports, GroundStateReport


COMMANDS: Dict[str, Callable[[ExperimentConfig], CommandResult]] = {
    "search": run_search,
    "scaling": run_scaling,
    "verify": run_verify,
    "fastforward": run_fastforward,
    "groundstate": run_groundstate,
}
