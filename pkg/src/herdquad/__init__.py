"""Kernel herding and sequential Bayesian quadrature on Gaussian-mixture targets."""

from .errors import (
    CapacityError,
    ConfigError,
    HerdquadError,
    InputError,
    NotPositiveDefinite,
    NumericalError,
)
from .gmm import GaussianComponent, GaussianMixture, default_gmm, density, sample
from .kernel import RbfKernel, default_lengthscale
from .linalg import CholFactor
from .objectives import (
    QuadratureState,
    WeightedSampleSet,
    bq_variance,
    bq_weights,
    herding_objective,
    incoherency,
    mmd_squared,
    variance_reduction,
)
from .selectors import CandidatePool, KernelHerding, SelectionRun, SequentialBQ, run_selection

__version__ = "0.1.0"
