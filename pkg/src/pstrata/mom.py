"""Method-of-moments imputation estimator, percentile bootstrap and rho sweeps.

For a sensitivity value rho, each unit's missing potential intermediate is
imputed by its conditional mean under the bivariate-Normal model of
(S1, S0) | W (, X); per-arm least squares of Y on (1, S1, S0, X) then give the
outcome coefficients, and tau(s1, s0) = (b10 - b00) + (b11 - b01) s1 +
(b12 - b02) s0 (+ covariate contrast at the sample mean of X).
"""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .copula import GaussianJoint, joint_from_gaussian_copula
from .core import (
    BadParams,
    Dataset,
    EstimatorFailure,
    InputError,
    PceEstimate,
    PStrataError,
    PrincipalStratum,
    RngStream,
    fmt_float,
    weighted_ols,
)

log = logging.getLogger(__name__)

MAX_FAILURE_RATE = 0.20
DEFAULT_RHOS = (0.0, 0.2, 0.4, 0.6, 0.8)


@dataclass
class MomFit:
    rho: float
    beta1: np.ndarray  # (intercept, s1, s0, x...)
    beta0: np.ndarray
    x_mean: np.ndarray
    joint: GaussianJoint = field(repr=False)

    @property
    def names(self) -> list[str]:
        return ["intercept", "s1", "s0"] + [f"x{j + 1}" for j in range(self.x_mean.size)]

    def tau(self, s1, s0) -> float:
        diff = self.beta1 - self.beta0
        return float(diff[0] + diff[1] * s1 + diff[2] * s0 + diff[3:] @ self.x_mean)

    def coefficients(self) -> dict:
        out = {f"beta1:{n}": float(v) for n, v in zip(self.names, self.beta1)}
        out.update({f"beta0:{n}": float(v) for n, v in zip(self.names, self.beta0)})
        return out


def mom_fit(d: Dataset, rho: float, degree: int = 3) -> MomFit:
    """Steps 1-3 of the imputation estimator at a fixed rho."""
    if d.schema.s_kind != "continuous":
        raise InputError("the moment estimator needs a continuous S")
    if not -1 < rho < 1:
        raise BadParams("rho must lie in (-1, 1)")
    d.require_both_arms()
    # Step 1: Normal marginals of S1 and S0 given (W, X)
    joint = joint_from_gaussian_copula(d, rho, degree=degree, provenance=f"sensitivity({rho:g})")
    treated, control = d.arm(1), d.arm(0)
    xt = treated.x if d.p else None
    xc = control.x if d.p else None
    # Step 2: impute the missing potential intermediate
    s0_hat = joint.cond_mean_s0(treated.s, treated.w, xt)
    s1_hat = joint.cond_mean_s1(control.s, control.w, xc)
    # Step 3: per-arm regressions
    X1 = np.column_stack([np.ones(treated.n), treated.s, s0_hat, treated.x])
    X0 = np.column_stack([np.ones(control.n), s1_hat, control.s, control.x])
    beta1 = weighted_ols(X1, treated.y, treated.weights)
    beta0 = weighted_ols(X0, control.y, control.weights)
    x_mean = np.average(d.x, axis=0, weights=d.unit_weights) if d.p else np.zeros(0)
    return MomFit(float(rho), beta1, beta0, x_mean, joint)


def mom_estimate(d: Dataset, rho: float, strata: Sequence[PrincipalStratum], degree: int = 3) -> list[PceEstimate]:
    """Point estimates of tau at each requested stratum."""
    fit = mom_fit(d, rho, degree)
    out = []
    for u in strata:
        u = PrincipalStratum(float(u[0]), float(u[1]))
        est = PceEstimate(u, fit.tau(u.s1, u.s0), method="mom", diagnostics={"rho": float(rho)})
        out.append(est)
    return out


# ---------------------------------------------------------------------------
# Bootstrap


@dataclass
class BootstrapResult:
    keys: list
    point: dict
    intervals: dict  # key -> (lo, hi)
    replicates: np.ndarray  # (successful replicates, len(keys))
    level: float
    seed: int
    failures: int
    requested: int

    @property
    def failure_rate(self) -> float:
        return self.failures / self.requested

    def se(self, key) -> float:
        j = self.keys.index(key)
        return float(np.std(self.replicates[:, j], ddof=1))


def _as_mapping(value) -> dict:
    if isinstance(value, dict):
        return {k: float(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)) and value and isinstance(value[0], PceEstimate):
        return {e.stratum.label(): float(e.point) for e in value}
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    return {i: float(v) for i, v in enumerate(arr)}


def resample(d: Dataset, rng: np.random.Generator) -> Dataset:
    """Unit-level resample with replacement (probability proportional to weight)."""
    if d.weights is None:
        idx = rng.integers(0, d.n, d.n)
    else:
        idx = rng.choice(d.n, size=d.n, p=d.weights / d.weights.sum())
    out = d.subset(np.sort(idx))
    out.weights = None
    return out


def bootstrap_ci(
    d: Dataset,
    estimator: Callable[[Dataset], object],
    replicates: int = 500,
    level: float = 0.95,
    seed: int = 0,
    threads: int = 1,
) -> BootstrapResult:
    """Percentile intervals from ``replicates`` unit-level resamples.

    Replicate ``r`` draws from stream ``(seed, r)``, so results do not depend
    on ``threads``. The estimator must return a dict, a list of
    ``PceEstimate`` or an array; it is refitted from scratch on each resample.
    Replicates raising a package error count as failures; more than 20%
    failures aborts with :class:`EstimatorFailure`.
    """
    if replicates < 2:
        raise BadParams("need at least 2 bootstrap replicates")
    if not 0 < level < 1:
        raise BadParams("level must lie in (0, 1)")
    point = _as_mapping(estimator(d))
    keys = list(point)

    def one(r: int):
        rng = RngStream(seed, r).generator()
        try:
            res = _as_mapping(estimator(resample(d, rng)))
            return np.array([res[k] for k in keys])
        except (PStrataError, np.linalg.LinAlgError, KeyError) as exc:
            return exc

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, range(replicates)))
    else:
        results = [one(r) for r in range(replicates)]
    good = [r for r in results if isinstance(r, np.ndarray)]
    failures = replicates - len(good)
    if failures / replicates > MAX_FAILURE_RATE:
        reasons = sorted({type(r).__name__ for r in results if not isinstance(r, np.ndarray)})
        raise EstimatorFailure(
            f"{failures} of {replicates} bootstrap replicates failed",
            failures=failures,
            replicates=replicates,
            reasons=reasons,
        )
    if len(good) < 2:
        raise EstimatorFailure("fewer than two successful bootstrap replicates", failures=failures)
    reps = np.vstack(good)
    alpha = 1 - level
    srt = np.sort(reps, axis=0)
    lo = np.quantile(srt, alpha / 2, axis=0)
    hi = np.quantile(srt, 1 - alpha / 2, axis=0)
    intervals = {k: (float(lo[j]), float(hi[j])) for j, k in enumerate(keys)}
    if failures:
        log.warning("%d of %d bootstrap replicates failed", failures, replicates)
    return BootstrapResult(keys, point, intervals, reps, level, seed, failures, replicates)


# ---------------------------------------------------------------------------
# Sensitivity sweep


@dataclass
class SweepSpec:
    rho_values: tuple = DEFAULT_RHOS
    strata: Optional[list] = None
    bootstrap: int = 500
    level: float = 0.95
    seed: int = 0
    degree: int = 3

    def __post_init__(self):
        self.rho_values = tuple(float(r) for r in self.rho_values)
        if not self.rho_values:
            raise BadParams("need at least one rho value")
        if any(not -1 < r < 1 for r in self.rho_values):
            raise BadParams("every rho must lie in (-1, 1)")
        if self.bootstrap < 2:
            raise BadParams("need at least 2 bootstrap replicates")


def default_strata(d: Dataset) -> list[PrincipalStratum]:
    """Min, quartiles and max of S1 (treated S) paired with max, quartiles, min of S0.

    S1 quantiles ascend while S0 quantiles descend, so the rows run along
    increasing s1 - s0.
    """
    probs = [0.0, 0.25, 0.5, 0.75, 1.0]
    s1 = np.quantile(d.s[d.z == 1], probs)
    s0 = np.quantile(d.s[d.z == 0], probs[::-1])
    return [PrincipalStratum(float(a), float(b)) for a, b in zip(s1, s0)]


@dataclass
class SweepCell:
    stratum: PrincipalStratum
    rho: float
    point: float
    lower: float
    upper: float

    @property
    def excludes_zero(self) -> bool:
        return self.lower > 0 or self.upper < 0


@dataclass
class SweepTable:
    strata: list
    rho_values: tuple
    cells: dict  # (stratum index, rho) -> SweepCell
    level: float
    replicates: int
    failures: int
    seed: int

    def cell(self, i: int, rho: float) -> SweepCell:
        return self.cells[(i, float(rho))]

    def points(self) -> np.ndarray:
        return np.array([[self.cell(i, r).point for r in self.rho_values] for i in range(len(self.strata))])

    def to_rows(self) -> list[dict]:
        rows = []
        for i, u in enumerate(self.strata):
            for r in self.rho_values:
                c = self.cell(i, r)
                rows.append(
                    {
                        "s1": u.s1,
                        "s0": u.s0,
                        "rho": r,
                        "point": c.point,
                        "lower": c.lower,
                        "upper": c.upper,
                        "excludes_zero": c.excludes_zero,
                    }
                )
        return rows

    def to_csv(self, path) -> Path:
        """Wide layout: one row per stratum, a (point, lower, upper, excludes_zero) group per rho."""
        path = Path(path)
        header = ["s1", "s0"]
        for r in self.rho_values:
            header += [f"rho={r:g}:{k}" for k in ("point", "lower", "upper", "excludes_zero")]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for i, u in enumerate(self.strata):
                row = [fmt_float(u.s1), fmt_float(u.s0)]
                for r in self.rho_values:
                    c = self.cell(i, r)
                    row += [fmt_float(c.point), fmt_float(c.lower), fmt_float(c.upper), str(c.excludes_zero).lower()]
                w.writerow(row)
        return path


def sensitivity_sweep(d: Dataset, spec: SweepSpec, threads: int = 1) -> SweepTable:
    """Point estimates and percentile intervals for every stratum and rho.

    All rho values share the same bootstrap resamples (replicate r uses
    stream (seed, r)), so differences across rho are not bootstrap noise.
    """
    strata = [PrincipalStratum(float(u[0]), float(u[1])) for u in spec.strata] if spec.strata else default_strata(d)

    def estimator(data: Dataset) -> dict:
        out = {}
        for r in spec.rho_values:
            fit = mom_fit(data, r, spec.degree)
            for i, u in enumerate(strata):
                out[(i, r)] = fit.tau(u.s1, u.s0)
        return out

    boot = bootstrap_ci(d, estimator, spec.bootstrap, spec.level, spec.seed, threads)
    cells = {}
    for key in boot.keys:
        i, r = key
        lo, hi = boot.intervals[key]
        cells[key] = SweepCell(strata[i], r, boot.point[key], lo, hi)
    return SweepTable(strata, spec.rho_values, cells, spec.level, spec.bootstrap, boot.failures, spec.seed)
