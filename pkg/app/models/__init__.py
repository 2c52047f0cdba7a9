from app.models.markov_models import Discriminant, InterpolatedChain, MarkedSet, MarkovChain
from app.models.quantum_models import AncillaGrid, HermitianOperator, Projector, QuantumState, SpectralDensity, WalkHamiltonian
