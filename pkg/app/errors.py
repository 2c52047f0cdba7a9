"""Exception types raised by the simulation services.

All of them are ``ValueError`` subclasses so callers that only care about
rejected input can keep catching ``ValueError``.
"""

import warnings


class ChainError(ValueError):
    """Invalid or unsupported Markov chain"""


class SpectralError(ValueError):
    """Invalid operator, projector or state for a spectral computation"""


class GridResolutionError(ValueError):
    """Ancilla grid cannot resolve the phase oscillation"""

    def __init__(self, message: str, required_points: int):
        super().__init__(message)
        self.required_points = required_points


class WalkConstructionError(ValueError):
    """Walk Hamiltonian failed a build-time identity"""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


class InfeasibleSizeError(ValueError):
    """Full product-space simulation requested above the configured cap"""


class DegenerateInputError(ValueError):
    """Initial state has no weight on the target subspace"""


class ConfigError(ValueError):
    """Malformed experiment configuration"""


class HypothesisWarning(UserWarning):
    """A lemma hypothesis is violated; the computation still runs"""


def warn_hypothesis(message: str):
    warnings.warn(message, HypothesisWarning, stacklevel=3)
