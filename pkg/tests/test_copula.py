import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pstrata.copula import (
    ArmMarginal,
    GaussianJoint,
    fit_arm_marginal,
    joint_equipercentile,
    joint_from_gaussian_copula,
    joint_from_monotonicity,
)
from pstrata.core import Dataset, InputError, MonotonicityViolated, PrincipalStratum, Schema
from pstrata.dgp import generate_jobs_like, population

BINARY = Schema(s_kind="discrete", w_kind="discrete", y_kind="binary", s_levels=(0.0, 1.0), w_levels=(1.0, 2.0))


def binary_population(p1, p0):
    """P(S=1 | Z=z, W=w) given per cell; outcome irrelevant."""
    rows = []
    for l, w in enumerate((1.0, 2.0)):
        for z, p in ((1, p1[l]), (0, p0[l])):
            rows += [(z, 1.0, 0.0, w, p), (z, 0.0, 0.0, w, 1 - p)]
    z, s, y, w, wt = map(list, zip(*rows))
    return Dataset(z=z, s=s, y=y, w=w, weights=wt, schema=BINARY)


def normal_joint(mu1, mu0, sd1, sd0, rho):
    levels = np.array([1.0])
    a1 = ArmMarginal(np.array([mu1]), np.zeros((1, 0)), np.array([sd1]), w_levels=levels)
    a0 = ArmMarginal(np.array([mu0]), np.zeros((1, 0)), np.array([sd0]), w_levels=levels)
    return GaussianJoint(a1, a0, rho)


class TestMonotonicity:
    def test_equal_marginals(self):
        joint = joint_from_monotonicity(binary_population([0.4, 0.7], [0.4, 0.7]))
        np.testing.assert_allclose(joint.cell_mass(PrincipalStratum(1, 0)), 0.0, atol=1e-15)

    def test_dgp3_population(self):
        joint = joint_from_monotonicity(population("DGP3"))
        got = [joint.cell_mass(PrincipalStratum(*u)) for u in ((1, 1), (1, 0), (0, 0))]
        np.testing.assert_allclose(np.array(got)[:, 0], [0.5, 0.3, 0.2], atol=1e-12)
        np.testing.assert_allclose(np.array(got)[:, 1], [0.2, 0.3, 0.5], atol=1e-12)
        np.testing.assert_allclose(joint.cell_mass(PrincipalStratum(0, 1)), 0.0)

    @given(st.lists(st.floats(0.02, 0.98), min_size=2, max_size=2), st.lists(st.floats(0.0, 1.0), min_size=2, max_size=2))
    def test_simplex_and_marginals(self, p1, frac):
        p0 = [a * f for a, f in zip(p1, frac)]
        joint = joint_from_monotonicity(binary_population(p1, p0))
        assert np.all(joint.mass >= 0)
        np.testing.assert_allclose(joint.mass.sum(axis=(1, 2)), 1.0, atol=1e-12)
        np.testing.assert_allclose(joint.marginal_s1()[1], p1, atol=1e-10)
        np.testing.assert_allclose(joint.marginal_s0()[1], p0, atol=1e-10)

    def test_eps_policy(self):
        joint = joint_from_monotonicity(binary_population([0.5, 0.6], [0.51, 0.3]))
        assert joint.diagnostics["clipped_cells"] == 1
        assert joint.cell_mass(PrincipalStratum(1, 0))[0] == 0.0
        np.testing.assert_allclose(joint.mass.sum(axis=(1, 2)), 1.0)
        with pytest.raises(MonotonicityViolated):
            joint_from_monotonicity(binary_population([0.5, 0.6], [0.6, 0.3]))

    def test_needs_binary_s(self):
        d = Dataset(z=[1, 0], s=[0.3, 0.1], y=[0, 0], w=[1, 1], schema=Schema(w_kind="discrete"))
        with pytest.raises(InputError):
            joint_from_monotonicity(d)


class TestGaussian:
    def test_rho_zero_ignores_s0(self):
        j = normal_joint(1.0, 2.0, 1.5, 0.5, 0.0)
        s0 = np.array([-3.0, 0.0, 5.0])
        np.testing.assert_array_equal(j.cond_mean_s1(s0, np.ones(3)), 1.0)

    def test_comonotone_limit(self):
        j = normal_joint(1.0, 2.0, 0.7, 0.7, 0.999)
        for s0 in (-1.0, 0.5, 4.0):
            got = j.cond_mean_s1(s0, 1.0)[0]
            assert abs(got - (1.0 + (s0 - 2.0))) <= 0.01 * abs(s0 - 2.0)

    @settings(max_examples=25, deadline=None)
    @given(st.floats(-0.95, 0.95), st.floats(0.3, 2.0), st.floats(0.3, 2.0), st.floats(-2.0, 2.0))
    def test_brute_force_conditioning(self, rho, sd1, sd0, t):
        j = normal_joint(0.5, -0.3, sd1, sd0, rho)
        s0 = -0.3 + t * sd0
        # condition the bivariate density on a 400-point grid in s1
        m, v = j.cond_mean_s1(s0, 1.0)[0], j.cond_var_s1(1.0)[0]
        grid = np.linspace(m - 12 * np.sqrt(v), m + 12 * np.sqrt(v), 400)
        dens = j.density(grid, np.full(400, s0), np.ones(400))
        h = grid[1] - grid[0]
        mass = dens.sum() * h
        mean = (grid * dens).sum() * h / mass
        var = ((grid - mean) ** 2 * dens).sum() * h / mass
        assert abs(mean - m) <= 1e-6 * max(1.0, abs(m))
        assert abs(var - v) <= 1e-6 * max(1.0, v)

    def test_fitted_conditional_variance_matches_latent(self):
        rho = 0.4
        sim = generate_jobs_like(20000, rho, 3)
        j = joint_from_gaussian_copula(sim.dataset, rho)
        s1, s0, w = sim.latent["s1"], sim.latent["s0"], sim.dataset.w
        for lv in sim.dataset.w_levels:
            sel = w == lv
            coef = np.polyfit(s0[sel], s1[sel], 1)
            mc = np.var(s1[sel] - np.polyval(coef, s0[sel]), ddof=2)
            assert abs(j.cond_var_s1(lv)[0] / mc - 1) <= 0.05

    def test_marginal_preservation(self):
        j = normal_joint(0.4, 1.1, 0.8, 1.3, 0.6)
        grid = np.linspace(-12, 14, 4001)
        h = grid[1] - grid[0]
        for s1 in (-0.5, 0.4, 2.0):
            marg = j.density(np.full(grid.size, s1), grid, np.ones(grid.size)).sum() * h
            direct = np.exp(-0.5 * ((s1 - 0.4) / 0.8) ** 2) / (0.8 * np.sqrt(2 * np.pi))
            assert marg == pytest.approx(direct, abs=1e-10)

    def test_rho_out_of_range(self):
        with pytest.raises(InputError):
            normal_joint(0, 0, 1, 1, 1.0)

    def test_rho_per_level(self):
        d = generate_jobs_like(3000, 0.3, 1).dataset
        rho = np.linspace(0.0, 0.6, 7)
        j = joint_from_gaussian_copula(d, rho)
        np.testing.assert_allclose(j.rho_at(d.w_levels), rho)

    def test_covariate_marginals(self):
        sim = generate_jobs_like(20000, 0.4, 2, covariates=1)
        m = fit_arm_marginal(sim.dataset, 1)
        assert np.all(np.abs(m.slope_x[:, 0] - 0.3) < 0.05)


class TestEquipercentile:
    def test_identity_when_marginals_equal(self):
        j = normal_joint(1.0, 1.0, 2.0, 2.0, 0.3)
        s = np.array([-1.0, 1.0, 4.0])
        np.testing.assert_allclose(j.equate(s, np.ones(3)), s)

    def test_median_and_one_sd(self):
        j = normal_joint(1.0, 0.0, 1.0, 2.0, 0.3)
        assert j.equate(1.0, 1.0)[0] == pytest.approx(0.0)
        assert j.equate(2.0, 1.0)[0] == pytest.approx(2.0)
        assert j.equate_inverse(2.0, 1.0)[0] == pytest.approx(2.0)

    def test_fitted_provenance(self):
        d = generate_jobs_like(2000, 0.9, 1).dataset
        j = joint_equipercentile(d)
        assert j.provenance == "equipercentile" and not j.provisional
        s0 = j.equate(j.mu1(1.0), 1.0)
        assert s0[0] == pytest.approx(j.mu0(1.0)[0])
