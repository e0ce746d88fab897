"""Light solver for continuous unbalanced entropic optimal transport."""

from .divergence import DivergenceSpec, conjugate, conjugate_deriv
from .errors import (
    ConvergenceError,
    CoverageError,
    DimensionError,
    NonFiniteError,
    ObjectiveError,
    UlightError,
)
from .gmm import GaussianMixture, log_density, pack_params, sample, total_mass, unpack_params
from .plan import ConditionalMixture, PlanModel, conditional, log_c_theta, log_joint, potentials
from .solver import SolverConfig, TrainState, adam_step, objective, objective_and_grad, train

__version__ = "0.1.0"
