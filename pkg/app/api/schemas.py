from pydantic import BaseModel, Field, model_validator
from typing import Dict, List, Optional, Union


class ChainDocument(BaseModel):
    n: int
    P: List[List[float]]
    lazy: bool = False
    labels: List[str] = []

    @model_validator(mode="after")
    def check_shape(self):
        if len(self.P) != self.n or any(len(row) != self.n for row in self.P):
            raise ValueError(f"P must be {self.n}x{self.n}")
        if self.labels and len(self.labels) != self.n:
            raise ValueError(f"Expected {self.n} labels, got {len(self.labels)}")
        return self


class SearchOutcome(BaseModel):
    found: bool
    node: Optional[int] = None
    elapsed_time: float = 0.0
    rounds: int = 1
    s: Optional[float] = None
    T: float
    marked_at_preparation: bool = False


class SearchSummary(BaseModel):
    graph: str
    n: int
    marked: List[int]
    HT: float
    T: float
    trials: int
    successes: int
    success_frequency: float
    mean_rounds: float
    mean_elapsed_time: float
    seed: int


class ScalingRow(BaseModel):
    family: str
    n: int
    HT: float
    T: float
    s_grid_size: int
    bound_mean: float
    quantum_time: float
    classical_time: float
    seed: int


class FastForwardRow(BaseModel):
    graph: str
    n: int
    s: float
    t: float
    fast_forward_bound: float
    exact_probability: Optional[float] = None
    mean_evolution_time: float


class VerificationReport(BaseModel):
    lemma: str
    instance: Dict[str, Union[str, int, float, bool, List[int]]]
    lhs: float
    rhs: float
    margin: float
    error_budget: float = 0.0
    verdict: str = Field(pattern="^(pass|fail|inconclusive)$")


class GroundStateReport(BaseModel):
    delta: float
    eta: float
    epsilon: float
    epsilon_g: float
    t: float
    T: float
    success_prob: float
    achieved_error: float
    degenerate: bool
    error_certificate: Optional[float] = None
    ground_energy_factor: Optional[float] = None
    ancilla_fidelity: Optional[float] = None


class Provenance(BaseModel):
    config_hash: str
    seed: Optional[int] = None
    version: str
    subcommand: str


STOCHASTIC_SUBCOMMANDS = ("search", "scaling", "verify", "groundstate")


class ExperimentConfig(BaseModel):
    subcommand: str = Field(pattern="^(search|scaling|verify|fastforward|groundstate)$")
    graph: Optional[str] = None
    marked: Union[str, List[int]] = "single"
    c_T: float = 3.0
    trials: int = Field(default=100, ge=1)
    seed: Optional[int] = None
    tolerances: Dict[str, float] = {}
    output: Optional[str] = None
    format: str = Field(default="csv", pattern="^(csv|json)$")
    workers: int = Field(default=1, ge=1)

    # search
    max_rounds: Optional[int] = None
    ht_estimate: Optional[float] = None
    randomize_T: bool = False

    # scaling
    family: Optional[str] = None
    sizes: List[int] = []

    # verify / fastforward
    lemma: Optional[str] = None
    T: Union[str, float] = "auto"
    s: Optional[float] = None
    times: List[float] = []
    quadrature: str = Field(default="trapezoid", pattern="^(trapezoid|exact)$")

    # groundstate
    hamiltonian: Optional[str] = None
    eta: Optional[float] = None
    epsilon: float = 1e-3
    energy_precision: Optional[float] = None
    ancilla: bool = False

    @model_validator(mode="after")
    def check_seed(self):
        if self.subcommand in STOCHASTIC_SUBCOMMANDS and self.seed is None:
            raise ValueError(f"Subcommand '{self.subcommand}' is stochastic and needs a seed")
        return self
