import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spatial_age_epi.errors import EstimationBudgetExceeded, InfeasibleInitialCondition, NotApplicable
from spatial_age_epi.infectivity import (
    Constant,
    ConstantUntilDeath,
    Deterministic,
    DeterministicShape,
    Exponential,
    FixedPiece,
    GammaDuration,
    IndependentStages,
    Linear,
    PiecewiseRandom,
    UniformLevelPiece,
    WeibullDuration,
    mean_infectivity,
    remaining_duration_survival,
    sample_path,
    sample_path_given_age,
)


class FixedBreaks:
    def __init__(self, *times):
        self.times = times

    def __call__(self, rng):
        return np.array(self.times)


def latent_then_level():
    return PiecewiseRandom(
        (FixedPiece(Constant(0.0)), UniformLevelPiece(0.5, 1.5)),
        IndependentStages((Exponential(1.0), Exponential(0.5))),
        lambda_star=1.5,
    )


LAWS = [
    ConstantUntilDeath(1.0, Exponential(1.0)),
    ConstantUntilDeath(2.5, GammaDuration(2.0, 0.5)),
    ConstantUntilDeath(0.7, Deterministic(1.3)),
    DeterministicShape(Linear(1.0, -0.3), WeibullDuration(1.5, 2.0), 1.0),
    latent_then_level(),
]


def test_constant_until_death_path():
    path = sample_path(ConstantUntilDeath(1.0, Exponential(1.0)), np.random.default_rng(4))
    assert path(0.0) == 1.0
    assert path(0.999 * path.eta) == 1.0
    assert path(path.eta) == 0.0
    assert path(-0.1) == 0.0


def test_zero_shape_gives_zero_path():
    path = sample_path(DeterministicShape(Constant(0.0), Exponential(1.0), 1.0), np.random.default_rng(0))
    t = np.linspace(-1, 10, 500)
    assert np.all(path(t) == 0.0)


def test_piecewise_fixed_breakpoints():
    law = PiecewiseRandom((FixedPiece(Constant(0.4)), FixedPiece(Constant(0.9))), FixedBreaks(1.0, 2.0), 1.0)
    path = sample_path(law, np.random.default_rng(0))
    assert path.eta == 2.0
    t = np.array([0.0, 0.5, 0.999, 1.0, 1.5, 1.999, 2.0, 3.0])
    np.testing.assert_array_equal(path(t), [0.4, 0.4, 0.4, 0.9, 0.9, 0.9, 0.0, 0.0])
    assert [path(float(x)) for x in t] == list(path(t))


def test_trailing_zero_piece_shortens_eta():
    law = PiecewiseRandom((FixedPiece(Constant(0.4)), FixedPiece(Constant(0.0))), FixedBreaks(1.0, 2.0), 1.0)
    assert sample_path(law, np.random.default_rng(0)).eta == 1.0


@pytest.mark.parametrize("law", LAWS, ids=lambda l: type(l).__name__)
def test_paths_bounded_and_vanish_after_eta(law):
    rng = np.random.default_rng(11)
    t = np.linspace(0, 30, 3001)
    for _ in range(200):
        p = law.sample_path(rng)
        v = p(t)
        assert np.all(v >= 0) and np.all(v <= law.lambda_star + 1e-12)
        assert np.all(v[t >= p.eta] == 0)
        assert p(-1e-9) == 0.0


@settings(max_examples=40, deadline=None)
@given(c=st.floats(0.1, 5), mu=st.floats(0.1, 5), t=st.floats(0, 10))
def test_markov_mean_closed_form(c, mu, t):
    m = mean_infectivity(ConstantUntilDeath(c, Exponential(mu)))
    assert m.lambda_bar(t) == pytest.approx(c * np.exp(-mu * t), rel=1e-12, abs=1e-300)
    assert m.F(t) == pytest.approx(1 - np.exp(-mu * t), abs=1e-14)
    assert m.absolutely_continuous


def test_deterministic_period_distribution_functions():
    ti = 1.5
    m = mean_infectivity(DeterministicShape(Linear(1.0, -0.2), Deterministic(ti), 1.0))
    t = np.array([0.0, 0.7, 1.4999, 1.5, 1.5001, 3.0])
    np.testing.assert_allclose(m.lambda_bar(t), np.where(t < ti, 1.0 - 0.2 * t, 0.0))
    np.testing.assert_array_equal(m.F(t), (t >= ti).astype(float))
    G = 1.0 - m.Gc(t)
    np.testing.assert_array_equal(G, (t > ti).astype(float))
    assert m.nu_atoms == ((ti, 1.0),)
    assert m.hazard is None
    assert m.Gc(ti) - m.Fc(ti) == pytest.approx(1.0)
    with pytest.raises(NotApplicable):
        Deterministic(ti).hazard(0.5)


def test_monte_carlo_mean_matches_brute_force():
    law = latent_then_level()
    grid = np.linspace(0.0, 12.0, 241)
    m = mean_infectivity(law, grid, rng=5, n_samples=20_000)
    # independent vectorized oracle with 10^6 paths
    rng = np.random.default_rng(99)
    n = 10**6
    z1 = rng.exponential(1.0, n)
    z2 = z1 + rng.exponential(2.0, n)
    level = rng.uniform(0.5, 1.5, n)
    for t in [0.5, 1.0, 2.0, 4.0, 8.0]:
        brute = np.mean(level * ((z1 <= t) & (t < z2)))
        i = int(np.argmin(np.abs(grid - t)))
        se = m.lambda_bar_se[i]
        assert abs(m.lambda_bar(t) - brute) < 3 * se + 4e-3, t
        # closed form P(z1 <= t < z2) = a (e^{-at} - e^{-bt}) / (b - a), a = 1, b = 1/2
        exact = (np.exp(-t) - np.exp(-0.5 * t)) / (0.5 - 1.0)
        assert brute == pytest.approx(exact, abs=5e-3)


def test_lambda_bar_consistency_with_samples():
    for law in LAWS[:4]:
        m = mean_infectivity(law)
        rng = np.random.default_rng(2)
        t = np.linspace(0.05, 3.0, 10)
        emp = np.mean([law.sample_path(rng)(t) for _ in range(10_000)], axis=0)
        assert np.max(np.abs(emp - m.lambda_bar(t))) <= 4 / np.sqrt(10_000) * law.lambda_star


@pytest.mark.parametrize("law", LAWS[:4], ids=lambda l: type(l.duration).__name__)
def test_duration_cdf_within_dkw_band(law):
    m = mean_infectivity(law)
    rng = np.random.default_rng(3)
    n = 10_000
    eta = np.sort([law.sample_path(rng).eta for _ in range(n)])
    eps = np.sqrt(np.log(2 / 0.01) / (2 * n))
    emp = np.searchsorted(eta, eta, side="right") / n
    assert np.max(np.abs(emp - m.F(eta))) <= eps


def test_estimation_budget():
    law = latent_then_level()
    grid = np.linspace(0, 5, 11)
    with pytest.raises(EstimationBudgetExceeded):
        mean_infectivity(law, grid, rng=0, se_target=1e-4, sample_cap=5_000)
    m = mean_infectivity(law, grid, rng=0, se_target=0.02, sample_cap=50_000)
    assert m.lambda_bar_se.max() <= 0.02 * 1.05


@settings(max_examples=30, deadline=None)
@given(mu=st.floats(0.1, 4), age=st.floats(0, 5), t=st.floats(0, 5))
def test_remaining_survival_memoryless(mu, age, t):
    m = mean_infectivity(ConstantUntilDeath(1.0, Exponential(mu)))
    assert remaining_duration_survival(m, age, t) == pytest.approx(np.exp(-mu * t), rel=1e-9)


def test_remaining_survival_deterministic_and_exhausted():
    ti = 2.0
    m = mean_infectivity(ConstantUntilDeath(1.0, Deterministic(ti)))
    for a in [0.0, 0.5, 1.9]:
        for t in [0.0, 0.05, 0.5, 1.0, 1.5, 2.5]:
            assert remaining_duration_survival(m, a, t) == float(t < ti - a)
    assert remaining_duration_survival(m, 2.0, 0.0) == 0.0
    assert remaining_duration_survival(m, 3.0, 1.0) == 0.0


def test_conditional_sampling():
    law = ConstantUntilDeath(1.0, Exponential(1.0))
    rng = np.random.default_rng(8)
    age = 1.7
    rem = np.array([sample_path_given_age(law, age, rng).eta - age for _ in range(10_000)])
    assert np.all(rem > 0)
    # memoryless: remaining duration is again Exp(1)
    for t in [0.5, 1.0, 2.0]:
        assert abs(np.mean(rem > t) - np.exp(-t)) < 4 * np.sqrt(np.exp(-t) * (1 - np.exp(-t)) / 10_000)
    with pytest.raises(InfeasibleInitialCondition):
        sample_path_given_age(ConstantUntilDeath(1.0, Deterministic(1.0)), 2.0, rng, max_attempts=100)


def test_mean_infectivity_csv(tmp_path):
    m = mean_infectivity(ConstantUntilDeath(1.0, Exponential(2.0)))
    m.to_csv(tmp_path / "m.csv", np.linspace(0, 1, 5))
    rows = (tmp_path / "m.csv").read_text().splitlines()
    assert rows[0] == "t,lambda_bar,variance,F"
    assert len(rows) == 6


def test_reproduction_number():
    from spatial_age_epi.limit_solver import reproduction_number

    assert reproduction_number(mean_infectivity(ConstantUntilDeath(2.0, Exponential(0.5)))) == pytest.approx(4.0, rel=1e-10)
    assert reproduction_number(mean_infectivity(ConstantUntilDeath(1.5, Deterministic(2.0)))) == pytest.approx(3.0, rel=1e-10)
