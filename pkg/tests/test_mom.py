import numpy as np
import pytest

from pstrata.core import BadParams, Dataset, EstimatorFailure, InputError, PrincipalStratum, Schema, rng_stream
from pstrata.dgp import generate_jobs_like, jobs_like_pce
from pstrata.mom import (
    SweepSpec,
    bootstrap_ci,
    default_strata,
    mom_estimate,
    mom_fit,
    sensitivity_sweep,
)

NULL = dict(beta1=[1.0, 0.2, -0.1], beta0=[1.0, 0.2, -0.1])


@pytest.fixture(scope="module")
def jobs():
    return generate_jobs_like(20000, 0.4, 31)


@pytest.fixture(scope="module")
def small_jobs():
    return generate_jobs_like(1500, 0.4, 32)


def swap_arms(d: Dataset) -> Dataset:
    return Dataset(z=1 - d.z, s=d.s, y=d.y, w=d.w, x=d.x, schema=d.schema)


class TestMomFit:
    def test_rho_zero_imputes_marginal_mean(self, small_jobs):
        d = small_jobs.dataset
        fit = mom_fit(d, 0.0)
        t = d.arm(1)
        np.testing.assert_array_equal(fit.joint.cond_mean_s0(t.s, t.w), fit.joint.mu0(t.w))

    @pytest.mark.parametrize("rho", [-0.5, 0.0, 0.3, 0.9])
    def test_imputation_identity_at_mean(self, small_jobs, rho):
        fit = mom_fit(small_jobs.dataset, rho)
        levels = small_jobs.dataset.w_levels
        got = fit.joint.cond_mean_s0(fit.joint.mu1(levels), levels)
        np.testing.assert_allclose(got, fit.joint.mu0(levels), atol=1e-12)

    def test_recovers_coefficients(self, jobs):
        fit = mom_fit(jobs.dataset, 0.4)
        truth = np.r_[jobs.truth["beta1"], jobs.truth["beta0"]]
        assert np.max(np.abs(np.r_[fit.beta1, fit.beta0] - truth)) <= 0.05

    def test_covariates(self):
        sim = generate_jobs_like(20000, 0.4, 33, covariates=1)
        fit = mom_fit(sim.dataset, 0.4)
        assert fit.names == ["intercept", "s1", "s0", "x1"]
        np.testing.assert_allclose(fit.beta1[3], 0.25, atol=0.05)
        np.testing.assert_allclose(fit.beta0[3], 0.1, atol=0.05)

    def test_arm_swap_antisymmetry(self, small_jobs):
        d = small_jobs.dataset
        a, b = mom_fit(d, 0.3), mom_fit(swap_arms(d), 0.3)
        for s1, s0 in ((3.0, 4.0), (4.5, 2.5), (2.0, 2.0)):
            assert b.tau(s1, s0) == pytest.approx(-a.tau(s0, s1), abs=1e-10)

    def test_estimate_list(self, small_jobs):
        out = mom_estimate(small_jobs.dataset, 0.2, [(3.0, 3.0), PrincipalStratum(4.0, 2.0)])
        assert [e.method for e in out] == ["mom", "mom"]
        assert out[1].stratum == PrincipalStratum(4.0, 2.0)

    def test_input_checks(self, small_jobs):
        with pytest.raises(BadParams):
            mom_fit(small_jobs.dataset, 1.0)
        d = small_jobs.dataset.with_schema(s_kind="discrete")
        with pytest.raises(InputError):
            mom_fit(d, 0.2)


class TestBootstrap:
    def normal_sample(self):
        y = rng_stream(34, 0).standard_normal(400)
        return Dataset(z=np.r_[np.ones(200), np.zeros(200)], s=np.zeros(400), y=y, w=np.ones(400), schema=Schema())

    def test_constant_estimator(self):
        res = bootstrap_ci(self.normal_sample(), lambda d: {"c": 1.5}, replicates=50)
        assert res.intervals["c"] == (1.5, 1.5)

    def test_mean_width(self):
        res = bootstrap_ci(self.normal_sample(), lambda d: {"m": d.y.mean()}, replicates=500, seed=1)
        lo, hi = res.intervals["m"]
        assert abs((hi - lo) / (2 * 1.96 / np.sqrt(400)) - 1) <= 0.25

    def test_deterministic_and_thread_invariant(self, small_jobs):
        est = lambda d: mom_estimate(d, 0.4, [(3.5, 3.5)])  # noqa: E731
        a = bootstrap_ci(small_jobs.dataset, est, replicates=40, seed=7)
        b = bootstrap_ci(small_jobs.dataset, est, replicates=40, seed=7, threads=4)
        np.testing.assert_array_equal(a.replicates, b.replicates)
        assert a.intervals == b.intervals

    def test_failure_rate_abort(self):
        d = self.normal_sample()

        def flaky(data):
            if data.y.mean() > -0.02:
                raise EstimatorFailure("boom")
            return {"m": data.y.mean()}

        with pytest.raises(EstimatorFailure) as info:
            bootstrap_ci(d, lambda x: {"m": 0.0} if x is d else flaky(x), replicates=50)
        assert info.value.margin["failures"] > 10

    def test_bad_arguments(self):
        with pytest.raises(BadParams):
            bootstrap_ci(self.normal_sample(), lambda d: {"m": 0.0}, replicates=1)
        with pytest.raises(BadParams):
            bootstrap_ci(self.normal_sample(), lambda d: {"m": 0.0}, level=1.0)


class TestSweep:
    def test_spec_validation(self):
        with pytest.raises(BadParams):
            SweepSpec(rho_values=(0.0, 1.0))
        with pytest.raises(BadParams):
            SweepSpec(bootstrap=1)
        with pytest.raises(BadParams):
            SweepSpec(rho_values=())

    def test_default_strata_order(self, small_jobs):
        strata = default_strata(small_jobs.dataset)
        gaps = [u.s1 - u.s0 for u in strata]
        assert len(strata) == 5 and np.all(np.diff(gaps) > 0)

    def test_ordering_and_shape(self, small_jobs, tmp_path):
        table = sensitivity_sweep(small_jobs.dataset, SweepSpec(bootstrap=60, seed=3))
        pts = table.points()
        assert pts.shape == (5, 5)
        # truth is 0.1 - 0.5 (s1 - s0): decreasing down the rows
        truth = [jobs_like_pce(small_jobs.truth, u) for u in table.strata]
        assert np.all(np.diff(truth) < 0)
        assert np.all(np.diff(pts, axis=0) < 0)
        table.to_csv(tmp_path / "sweep.csv")
        header = (tmp_path / "sweep.csv").read_text().splitlines()[0].split(",")
        assert header[:2] == ["s1", "s0"] and len(header) == 2 + 4 * 5

    def test_smooth_in_rho(self, small_jobs):
        table = sensitivity_sweep(small_jobs.dataset, SweepSpec(bootstrap=100, seed=4))
        for i in range(len(table.strata)):
            cells = [table.cell(i, r) for r in table.rho_values]
            se = max((c.upper - c.lower) / (2 * 1.96) for c in cells)
            steps = np.abs(np.diff([c.point for c in cells]))
            assert np.all(steps <= 2 * se)

    def test_null_sweep(self):
        sim = generate_jobs_like(1500, 0.4, 35, **NULL)
        table = sensitivity_sweep(sim.dataset, SweepSpec(bootstrap=100, seed=5))
        excluded = sum(c.excludes_zero for c in table.cells.values())
        assert excluded <= 0.2 * len(table.cells)
        pts = table.points()
        for i in range(pts.shape[0]):
            se = (table.cell(i, 0.0).upper - table.cell(i, 0.0).lower) / (2 * 1.96)
            assert abs(pts[i, 0]) <= 3 * se

    def test_rows(self, small_jobs):
        table = sensitivity_sweep(small_jobs.dataset, SweepSpec(rho_values=(0.0, 0.5), bootstrap=20))
        rows = table.to_rows()
        assert len(rows) == 10 and set(rows[0]) >= {"s1", "s0", "rho", "point", "lower", "upper", "excludes_zero"}
