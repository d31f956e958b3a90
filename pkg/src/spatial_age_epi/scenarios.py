"""Ready-made scenarios used by the tests, the example scripts and the CLI."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .infectivity import (
    ConstantUntilDeath,
    Deterministic,
    Exponential,
    FixedPiece,
    IndependentStages,
    Constant,
    PiecewiseRandom,
    UniformLevelPiece,
    mean_infectivity,
)
from .initial import AgeAtoms, BumpProfile, ConstantProfile, InitialCondition, UniformAges
from .kernel import ConstantDensity, ConstantKernel, GaussianKernel, TwoBlockDensity, discretize

__all__ = [
    "Scenario",
    "markov_sir",
    "markov_sir_age_density",
    "deterministic_period",
    "sis_homogeneous",
    "spatial_bump",
    "exposed_infectious",
    "SCENARIOS",
]


@dataclass
class Scenario:
    """Everything needed to simulate a model and solve its limit."""

    name: str
    kernel: object
    density: object
    law: object
    initial: InitialCondition
    T: float
    h: float = 0.01
    model: str = "SIR"
    obs_dt: float = 0.1
    age_dt: float = 0.5
    mc_grid: np.ndarray | None = field(default=None, repr=False)
    mc_samples: int = 20_000
    mc_seed: int = 0

    def discretize(self, K):
        return discretize(self.kernel, self.density, K)

    def mean_infectivity(self):
        return mean_infectivity(self.law, self.mc_grid, rng=self.mc_seed, n_samples=self.mc_samples)

    @property
    def observation_times(self):
        return np.round(np.arange(0.0, self.T + 1e-9, self.obs_dt), 12)

    @property
    def observation_ages(self):
        return np.round(np.arange(0.0, self.T + self.initial.a_bar + 1e-9, self.age_dt), 12)


def markov_sir(T=10.0, h=0.01):
    """Constant infectivity 1 until an Exp(1) recovery, beta = 2, 5% infected at age 0."""
    return Scenario(
        name="markov_sir",
        kernel=ConstantKernel(2.0),
        density=ConstantDensity(),
        law=ConstantUntilDeath(1.0, Exponential(1.0)),
        initial=InitialCondition(ConstantProfile(0.05), ages=AgeAtoms((0.0,), (1.0,))),
        T=T,
        h=h,
    )


def markov_sir_age_density(T=1.0, h=1e-3):
    """Heterogeneous Markovian model whose initial ages are uniform on [0, 1/2]."""
    return Scenario(
        name="markov_sir_age_density",
        kernel=GaussianKernel(2.0, 0.3),
        density=TwoBlockDensity(0.5, 0.5),
        law=ConstantUntilDeath(1.0, Exponential(1.0)),
        initial=InitialCondition(BumpProfile(0.3, 0.2, 0.1, 0.01), ages=UniformAges(0.5)),
        T=T,
        h=h,
        obs_dt=0.1,
        age_dt=0.1,
    )


def deterministic_period(t_i=0.7, T=1.5, h=1e-3):
    """Infectious for exactly ``t_i`` time units."""
    return Scenario(
        name="deterministic_period",
        kernel=GaussianKernel(2.0, 0.3),
        density=ConstantDensity(),
        law=ConstantUntilDeath(1.0, Deterministic(t_i)),
        initial=InitialCondition(ConstantProfile(0.05), ages=UniformAges(0.5)),
        T=T,
        h=h,
        obs_dt=0.1,
        age_dt=0.1,
    )


def sis_homogeneous(b=2.0, T=30.0, h=0.01):
    return Scenario(
        name="sis_homogeneous",
        kernel=ConstantKernel(b),
        density=ConstantDensity(),
        law=ConstantUntilDeath(1.0, Exponential(1.0)),
        initial=InitialCondition(ConstantProfile(0.05)),
        T=T,
        h=h,
        model="SIS",
    )


def spatial_bump(T=10.0, h=0.01):
    """Outbreak seeded near x = 0.2 spreading through a Gaussian kernel."""
    return Scenario(
        name="spatial_bump",
        kernel=GaussianKernel(4.0, 0.15),
        density=TwoBlockDensity(0.5, 0.5),
        law=ConstantUntilDeath(1.0, Exponential(1.0)),
        initial=InitialCondition(BumpProfile(0.2, 0.05, 0.1)),
        T=T,
        h=h,
    )


def exposed_infectious(T=20.0, h=0.02):
    """Latent stage with zero infectivity followed by a random infectious level."""
    law = PiecewiseRandom(
        (FixedPiece(Constant(0.0)), UniformLevelPiece(0.5, 1.5)),
        IndependentStages((Exponential(1.0), Exponential(0.5))),
        lambda_star=1.5,
    )
    return Scenario(
        name="exposed_infectious",
        kernel=GaussianKernel(3.0, 0.2),
        density=ConstantDensity(),
        law=law,
        initial=InitialCondition(BumpProfile(0.5, 0.1, 0.05)),
        T=T,
        h=h,
        mc_grid=np.arange(0.0, 80.0 + 1e-9, h),
    )


SCENARIOS = {
    "markov_sir": markov_sir,
    "markov_sir_age_density": markov_sir_age_density,
    "deterministic_period": deterministic_period,
    "sis_homogeneous": sis_homogeneous,
    "spatial_bump": spatial_bump,
    "exposed_infectious": exposed_infectious,
}
