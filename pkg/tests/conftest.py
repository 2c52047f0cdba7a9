import hypothesis
import numpy as np
import pytest

from app.config import reset_overrides
from app.services.markov_service import from_weighted_graph, make_lazy

np.seterr(all="warn")

hypothesis.settings.register_profile("fast", max_examples=5)
hypothesis.settings.register_profile("debugger", report_multiple_bugs=False)


@pytest.fixture(autouse=True)
def clean_settings():
    yield
    reset_overrides()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def random_chain():
    """Random reversible chain on a complete weighted graph"""

    def build(n, rng, lazy=False):
        W = rng.uniform(0.1, 1.0, size=(n, n))
        W = (W + W.T) / 2.0
        np.fill_diagonal(W, 0.0)
        chain = from_weighted_graph(W)
        return make_lazy(chain) if lazy else chain

    return build
