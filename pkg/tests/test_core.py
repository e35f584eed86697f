import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from pstrata.core import (
    Dataset,
    InputError,
    ObservedUnit,
    PceEstimate,
    PrincipalStratum,
    RankDeficient,
    RngStream,
    Schema,
    clip_prob,
    numerical_rank,
    solve_least_squares,
    std_normal_cdf,
    weighted_ols,
)


def small_dataset(**kw):
    base = dict(
        z=[1, 1, 0, 0],
        s=[1.0, 0.0, 0.0, 1.0],
        y=[1.0, 0.0, 1.0, 1.0],
        w=[1.0, 2.0, 1.0, 2.0],
        schema=Schema(s_kind="discrete", w_kind="discrete", y_kind="binary", s_levels=(0.0, 1.0), w_levels=(1.0, 2.0)),
    )
    base.update(kw)
    return Dataset(**base)


class TestNormalCdf:
    def test_zero(self):
        assert std_normal_cdf(0.0) == 0.5

    def test_saturation(self):
        assert abs(std_normal_cdf(40.0) - 1.0) <= 1e-15
        assert std_normal_cdf(41.0) == 1.0
        assert std_normal_cdf(-41.0) == 0.0

    def test_quadrature_oracle(self):
        # independent oracle: integrate the density numerically
        dens = lambda t: np.exp(-0.5 * t * t) / np.sqrt(2 * np.pi)  # noqa: E731
        val = 0.5 + integrate.quad(dens, 0, 1.959964)[0]
        assert abs(val - 0.975) <= 1e-6
        assert abs(std_normal_cdf(1.959964) - val) <= 1e-12

    @given(st.floats(-60, 60, allow_nan=False))
    def test_symmetry(self, x):
        assert abs(std_normal_cdf(x) + std_normal_cdf(-x) - 1.0) <= 1e-14

    def test_vectorised(self):
        out = std_normal_cdf(np.array([-1.0, 0.0, 1.0]))
        assert out.shape == (3,)


class TestLeastSquares:
    def test_identity(self):
        np.testing.assert_allclose(solve_least_squares(np.eye(2), [3, 4]), [3, 4])

    def test_duplicated_columns(self):
        with pytest.raises(RankDeficient):
            solve_least_squares([[1, 0], [1, 0]], [1, 2])

    def test_hand_normal_equations(self):
        # X'X = [[3,6],[6,14]], X'b = [6,14] -> (0, 1)
        np.testing.assert_allclose(solve_least_squares([[1, 1], [1, 2], [1, 3]], [1, 2, 3]), [0, 1], atol=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10_000))
    def test_residual_orthogonal(self, seed):
        rng = np.random.default_rng(seed)
        A = rng.normal(size=(20, 4))
        b = rng.normal(size=20)
        x = solve_least_squares(A, b)
        r = b - A @ x
        assert np.max(np.abs(A.T @ r)) <= 1e-10 * np.linalg.norm(A) * np.linalg.norm(b)

    def test_weighted_ols_matches_replication(self):
        X = np.column_stack([np.ones(4), [0.0, 1.0, 2.0, 3.0]])
        y = np.array([1.0, 2.5, 2.9, 4.2])
        wt = np.array([1.0, 2.0, 1.0, 3.0])
        rep = np.repeat(np.arange(4), wt.astype(int))
        np.testing.assert_allclose(weighted_ols(X, y, wt), weighted_ols(X[rep], y[rep]), atol=1e-12)


class TestRank:
    def test_tolerance(self):
        A = np.diag([1.0, 1e-9])
        assert numerical_rank(A)[0] == 1
        assert numerical_rank(np.diag([1.0, 1e-7]))[0] == 2

    def test_zero_matrix(self):
        rank, cond, _ = numerical_rank(np.zeros((3, 2)))
        assert rank == 0 and np.isinf(cond)


class TestDataset:
    def test_validation_errors(self):
        with pytest.raises(InputError):
            small_dataset(z=[1, 2, 0, 0])
        with pytest.raises(InputError):
            small_dataset(y=[1.0, 0.5, 1.0, 1.0])
        with pytest.raises(InputError):
            small_dataset(y=[1.0, np.nan, 1.0, 1.0])
        with pytest.raises(InputError):
            small_dataset(w=[1.0, 3.0, 1.0, 2.0])
        with pytest.raises(InputError):
            small_dataset(s=[1.0, 2.0, 0.0, 1.0])
        with pytest.raises(InputError):
            small_dataset(weights=[1.0, -1.0, 1.0, 1.0])

    def test_bad_schema_kind(self):
        with pytest.raises(InputError):
            Schema(s_kind="ordinal")

    def test_empty_covariates(self):
        d = small_dataset()
        assert d.p == 0 and d.x.shape == (4, 0)

    def test_units_round_trip(self):
        d = small_dataset(x=[[0.1], [0.2], [0.3], [0.4]])
        units = list(d.units())
        assert isinstance(units[0], ObservedUnit)
        back = Dataset.from_units(units, d.schema)
        np.testing.assert_array_equal(back.x, d.x)
        np.testing.assert_array_equal(back.y, d.y)

    def test_csv_round_trip(self, tmp_path):
        d = small_dataset(x=[[0.1], [1 / 3], [-2.5], [1e-17]], weights=[0.1, 0.2, 0.3, 0.4])
        paths = d.to_csv(tmp_path / "data.csv")
        assert paths[1].name == "data.schema.json"
        back = Dataset.from_csv(tmp_path / "data.csv")
        for name in ("z", "s", "y", "w", "x", "weights"):
            np.testing.assert_array_equal(getattr(back, name), getattr(d, name))
        assert back.schema == d.schema

    def test_missing_sidecar(self, tmp_path):
        small_dataset().to_csv(tmp_path / "a.csv")
        (tmp_path / "a.schema.json").unlink()
        with pytest.raises(InputError):
            Dataset.from_csv(tmp_path / "a.csv")

    def test_w_index(self):
        np.testing.assert_array_equal(small_dataset().w_index(), [0, 1, 0, 1])


class TestRng:
    def test_same_pair_same_draws(self):
        a = RngStream(5, 3).generator().random(10)
        b = RngStream(5, 3).generator().random(10)
        np.testing.assert_array_equal(a, b)

    def test_streams_differ_and_uncorrelated(self):
        a = RngStream(5, 0).generator().standard_normal(20000)
        b = RngStream(5, 1).generator().standard_normal(20000)
        assert not np.array_equal(a, b)
        assert abs(np.corrcoef(a, b)[0, 1]) < 4 / np.sqrt(20000)

    def test_child_is_distinct(self):
        parent = RngStream(1, 0)
        assert parent.child(0) != RngStream(1, 1)
        assert parent.child(0).generator().random() != RngStream(1, 1).generator().random()


def test_clip_prob_counts():
    p, k = clip_prob([0.0, 0.5, 1.0])
    assert k == 2 and p[0] == 1e-12 and p[2] == 1 - 1e-12


def test_pce_estimate_interval_checks():
    with pytest.raises(ValueError):
        PceEstimate(PrincipalStratum(1, 0), 0.1, interval=(0.2, 0.1))
    est = PceEstimate(PrincipalStratum(1, 0), 0.5, interval=(0.0, 0.1))
    assert est.diagnostics["point_outside_interval"]
    assert est.to_dict()["stratum"] == {"s1": 1.0, "s0": 0.0}
    assert PrincipalStratum(1.0, 0.0).label() == "1,0"
