import numpy as np
import pytest

from spatial_age_epi.errors import DimensionMismatch
from spatial_age_epi.harness import Rung, convergence_study, default_K, l1_space_distance, ladder
from spatial_age_epi.scenarios import markov_sir, sis_homogeneous, spatial_bump


def test_l1_distance():
    assert l1_space_distance([0.0, 1.0], [1.0, 1.0]) == 0.5
    assert l1_space_distance(np.ones(7), np.ones(7)) == 0.0
    np.testing.assert_allclose(l1_space_distance(np.zeros((2, 4)), np.array([[1, 1, 1, 1], [0, 0, 0, 2.0]])), [1.0, 0.5])
    with pytest.raises(DimensionMismatch):
        l1_space_distance(np.ones(3), np.ones(4))


def test_ladder_default_K():
    assert default_K(1000) == 32 and default_K(10**5) == 317
    assert ladder([100, 10_000], replications=3) == [Rung(100, 10, 3), Rung(10_000, 100, 3)]


def small():
    sc = markov_sir(T=2.0, h=0.01)
    sc.obs_dt = 0.5
    return sc


def test_reproducible_and_thread_independent():
    rungs = [Rung(400, 4, 3), Rung(200, 4, 3)]
    a = convergence_study(small(), rungs, 7, threads=1)
    b = convergence_study(small(), rungs, 7, threads=1)
    c = convergence_study(small(), rungs, 7, threads=2)
    assert [r.N for r in a.rungs] == [200, 400]
    for x, y, z in zip(a.rungs, b.rungs, c.rungs):
        assert x.errors == y.errors == z.errors
        assert x.seed_entropy == [7, a.rungs.index(x)]
    d = convergence_study(small(), rungs, 8)
    assert d.rungs[0].errors != a.rungs[0].errors


def test_errors_shrink_with_N(tmp_path):
    rep = convergence_study(small(), [Rung(100, 2, 8), Rung(10_000, 2, 8)], 3)
    for f in ("S", "I", "F", "cum"):
        assert rep.monotone(f)
    assert 0 < rep.rungs[0].acceptance_rate <= 1
    rep.to_csv(tmp_path / "r.csv")
    rep.to_json(tmp_path / "r.json", extra={"x": 1})
    assert (tmp_path / "r.csv").read_text().splitlines()[0].startswith("N,K,replications,acceptance_rate,S_mean")


def test_restricted_reference_on_coarse_rungs():
    sc = spatial_bump(T=1.0)
    sc.obs_dt = 0.5
    rep = convergence_study(sc, [Rung(2000, 3, 2), Rung(2000, 12, 2)], 1)
    assert all(np.isfinite(v) for r in rep.rungs for v in r.mean.values())


def test_sis_study():
    sc = sis_homogeneous(T=2.0)
    sc.obs_dt = 0.5
    rep = convergence_study(sc, [Rung(500, 2, 2)], 0)
    assert rep.rungs[0].mean["R"] == 0.0


def test_rejects_thin_cells():
    with pytest.raises(ValueError, match="fewer than 10"):
        convergence_study(small(), [Rung(50, 10, 1)], 0)
