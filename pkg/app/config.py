from pydantic_settings import BaseSettings
from functools import lru_cache
from typing import Dict


class Settings(BaseSettings):
    # Application
    LOG_LEVEL: str = "INFO"
    OUTPUT_DIR: str = "results"

    # Tolerances
    STOCHASTIC_TOL: float = 1e-12
    REVERSIBILITY_TOL: float = 1e-10
    SPECTRAL_TOL: float = 1e-10
    EIGEN_RESIDUAL_TOL: float = 1e-9
    HERMITIAN_TOL: float = 1e-12
    PROJECTOR_TOL: float = 1e-10
    SQUARE_RELATION_TOL: float = 1e-9
    DEGENERACY_TOL: float = 1e-9

    # Ancilla grid
    ANCILLA_HALF_WIDTH: float = 10.0
    ANCILLA_POINTS: int = 2049
    POSTSELECTION_FLOOR: float = 1e-12

    # Search
    SEARCH_TIME_MULTIPLIER: float = 3.0
    SCHEDULE_LOG_BASE: int = 2
    FULL_SPACE_CAP: int = 60
    ROUNDS_SCALE: float = 1.0
    HAMILTONIAN_CACHE_MB: float = 512.0

    # Bounds
    CT_DT_WINDOW: float = 40.0
    CT_DT_CONSTANT: float = 1.0 / 160.0
    LAZY_SQUARE_CONSTANT: float = 1.0 / 16.0
    RANDOMIZATION_WINDOW: float = 960.0
    DISCRETE_RANDOMIZATION_WINDOW: int = 24
    QUADRATURE_BUDGET: float = 0.01
    QUADRATURE_POINTS_PER_UNIT: int = 8
    QUADRATURE_MAX_POINTS: int = 2**18 + 1
    MARKED_MASS_LIMIT: float = 1.0 / 9.0
    HITTING_TIME_FACTOR: float = 3.0

    # Ground state
    GROUND_TIME_MARGIN: float = 1e-6
    ENERGY_PRECISION_CONSTANT: float = 1.0

    class Config:
        env_file = ".env"


_overrides: Dict[str, object] = {}


@lru_cache()
def get_settings():
    return Settings(**_overrides)


def apply_overrides(values: Dict[str, object]):
    """Override settings for the rest of the process (CLI tolerance block)"""
    unknown = set(values) - set(Settings.model_fields)
    if unknown:
        raise ValueError(f"Unknown settings: {sorted(unknown)}")
    _overrides.update(values)
    get_settings.cache_clear()


def reset_overrides():
    _overrides.clear()
    get_settings.cache_clear()
