import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from scipy import integrate

from spatial_age_epi.errors import DimensionMismatch, KernelBoundViolation
from spatial_age_epi.kernel import (
    ConstantDensity,
    ConstantKernel,
    DiscreteKernel,
    FunctionKernel,
    GaussianKernel,
    SeparableKernel,
    SingularKernel,
    TwoBlockDensity,
    discretization_defect,
    discretize,
    interaction_integral,
)


def test_constant_kernel():
    dk = discretize(ConstantKernel(2.5), ConstantDensity(), 4)
    np.testing.assert_array_equal(dk.beta_matrix, np.full((4, 4), 2.5))
    np.testing.assert_array_equal(dk.B_vec, np.ones(4))
    assert dk.cell_width == 0.25


def test_singular_kernel_two_cells():
    c = 0.8
    dk = discretize(SingularKernel(c), ConstantDensity(), 2)
    L = 0.5
    # diagonal cell: 2 * int_0^L (L - u) u^{-1/2} du / L^2 = (8/3) L^{-1/2}
    diag = c * 8.0 / 3.0 / np.sqrt(L)
    off, _ = integrate.dblquad(lambda y, x: c / np.sqrt(y - x), 0, L, lambda x: L, lambda x: 1.0)
    expected = np.array([[diag, off / L**2], [off / L**2, diag]])
    np.testing.assert_allclose(dk.beta_matrix, expected, rtol=1e-8)
    assert dk.row_bound <= dk.C_beta
    assert dk.C_beta == pytest.approx(2 * np.sqrt(2) * c)


def test_separable_kernel_cell_means():
    dk = discretize(SeparableKernel(1.0), ConstantDensity(), 3)
    xm = (np.arange(1, 4) - 0.5) / 3
    np.testing.assert_allclose(dk.beta_matrix, np.outer(xm, xm), rtol=1e-14)


def test_gaussian_cell_averages_against_quadrature():
    kern = GaussianKernel(1.7, 0.25)
    K = 5
    dk = discretize(kern, ConstantDensity(), K)
    for k, l in [(0, 0), (1, 3), (4, 2)]:
        val, _ = integrate.dblquad(lambda y, x: kern(x, y), k / K, (k + 1) / K, l / K, (l + 1) / K, epsabs=1e-13)
        assert dk.beta_matrix[k, l] == pytest.approx(val * K * K, rel=1e-9)


def test_function_kernel_quadrature_matches_exact():
    exact = discretize(GaussianKernel(1.0, 0.3), ConstantDensity(), 6)
    f = FunctionKernel(lambda x, y: np.exp(-((x - y) ** 2) / 0.09), exact.C_beta)
    approx = discretize(f, ConstantDensity(), 6, quad_points=5)
    np.testing.assert_allclose(approx.beta_matrix, exact.beta_matrix, rtol=1e-8)
    mid = discretize(f, ConstantDensity(), 6, quad_points=1)
    assert np.abs(mid.beta_matrix - exact.beta_matrix).max() < 0.05


def test_bound_violation():
    with pytest.raises(KernelBoundViolation):
        discretize(FunctionKernel(lambda x, y: 3.0 + 0 * x * y, 2.0), ConstantDensity(), 4)


def test_two_block_density():
    dens = TwoBlockDensity(0.5, 0.5)
    dk = discretize(ConstantKernel(1.0), dens, 5)
    assert dk.B_vec.mean() == pytest.approx(1.0, abs=1e-15)
    # cell 2 straddles the split
    np.testing.assert_allclose(dk.B_vec, [0.5, 0.5, 1.0, 1.5, 1.5])
    assert dk.c_B == pytest.approx(0.5) and dk.C_B == pytest.approx(1.5)


def test_interaction_integral_examples():
    dk = discretize(ConstantKernel(3.0), ConstantDensity(), 4)
    np.testing.assert_allclose(interaction_integral(dk, np.full(4, 0.2)), np.full(4, 0.6))
    ident = DiscreteKernel(3 * np.eye(3), np.ones(3), 1.0)
    v = np.array([0.3, 0.1, 0.7])
    np.testing.assert_allclose(interaction_integral(ident, v), v)
    with pytest.raises(DimensionMismatch):
        interaction_integral(dk, np.ones(3))


def test_interaction_integral_triple_loop():
    rng = np.random.default_rng(0)
    beta = rng.uniform(0, 2, (3, 3))
    dk = DiscreteKernel(beta, np.ones(3), 2.0)
    f = np.array([1.0, 2.0, 3.0])
    oracle = [sum(beta[k, j] * f[j] for j in range(3)) / 3 for k in range(3)]
    np.testing.assert_allclose(interaction_integral(dk, f), oracle, rtol=1e-15)


@settings(max_examples=50, deadline=None)
@given(
    f=arrays(float, 7, elements=st.floats(0, 10)),
    g=arrays(float, 7, elements=st.floats(0, 10)),
    a=st.floats(-3, 3),
)
def test_interaction_linear_positive_bounded(f, g, a):
    dk = discretize(SingularKernel(0.5), TwoBlockDensity(), 7)
    lhs = interaction_integral(dk, a * f + g)
    rhs = a * interaction_integral(dk, f) + interaction_integral(dk, g)
    np.testing.assert_allclose(lhs, rhs, atol=1e-9)
    out = interaction_integral(dk, f)
    assert np.all(out >= 0)
    assert out.max() <= dk.C_beta * f.max() + 1e-12


@pytest.mark.parametrize(
    "kern", [SeparableKernel(1.0, 0.5), GaussianKernel(1.0, 0.2), SingularKernel(1.0)], ids=lambda k: type(k).__name__
)
def test_discretization_defect_decreases(kern):
    phi = lambda x: 1.0 + 0 * x
    d = [discretization_defect(kern, K, phi) for K in (4, 8, 16)]
    assert d[0] > d[1] > d[2]


@pytest.mark.parametrize("K", [1, 3, 10, 33])
def test_catalog_bounds_hold(K):
    for kern in [SeparableKernel(2.0, 0.1), GaussianKernel(2.0, 0.05), SingularKernel(0.3)]:
        dk = discretize(kern, TwoBlockDensity(0.3, 0.7), K)
        assert dk.row_bound <= dk.C_beta * (1 + 1e-12)
        assert dk.col_bound <= dk.C_beta * (1 + 1e-12)


def test_kernel_csv(tmp_path):
    dk = discretize(GaussianKernel(1.0, 0.3), ConstantDensity(), 3)
    dk.to_csv(tmp_path / "k.csv")
    lines = (tmp_path / "k.csv").read_text().splitlines()
    assert lines[0] == "k,B,beta_0,beta_1,beta_2"
    assert len(lines) == 4
