"""Stochastic spatial epidemics with infection-age dependent infectivity and their deterministic limits."""
from .errors import *  # noqa: F401,F403
from .infectivity import (
    ConstantUntilDeath,
    Deterministic,
    DeterministicShape,
    Exponential,
    GammaDuration,
    PiecewiseRandom,
    WeibullDuration,
    mean_infectivity,
)
from .initial import AgeAtoms, ConstantProfile, InitialCondition, TriangularAges, UniformAges
from .kernel import (
    ConstantDensity,
    ConstantKernel,
    GaussianKernel,
    SeparableKernel,
    SingularKernel,
    TwoBlockDensity,
    discretize,
    interaction_integral,
)
from .limit_solver import sis_equilibrium, solve, solve_sf, solve_sis
from .simulator import simulate

__version__ = "0.1.0"
