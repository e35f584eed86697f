"""Joint law of the potential intermediates (S1, S0) given W.

Marginals of S_z given W are identified from arm z; the coupling comes from
monotonicity (binary S), equipercentile equating, or a Gaussian copula with a
user-supplied association rho(w).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .core import (
    Dataset,
    DegenerateCell,
    InputError,
    MonotonicityViolated,
    PrincipalStratum,
    cell_prob_s,
    poly_basis,
    solve_least_squares,
)

EQUIPERCENTILE_RHO = 1.0 - 1e-9

RhoSpec = Union[float, dict, list, tuple, np.ndarray, Callable]


class JointStratumModel:
    """Common surface of tabular and Gaussian joints."""

    kind: str = ""
    provenance: str = ""

    @property
    def provisional(self) -> bool:
        return self.provenance.startswith("sensitivity")

    def score(self, stratum: PrincipalStratum, w, x=None) -> np.ndarray:
        raise NotImplementedError


# ---------------------------------------------------------------------------
# Tabular joint (discrete S, discrete W)


@dataclass
class TabularJoint(JointStratumModel):
    """``mass[l, a, b] = P(S1 = s_levels[a], S0 = s_levels[b] | W = w_levels[l])``."""

    s_levels: np.ndarray
    w_levels: np.ndarray
    mass: np.ndarray
    provenance: str = "oracle"
    diagnostics: dict = field(default_factory=dict)
    kind: str = "tabular"

    def __post_init__(self):
        self.s_levels = np.asarray(self.s_levels, dtype=float)
        self.w_levels = np.asarray(self.w_levels, dtype=float)
        self.mass = np.asarray(self.mass, dtype=float)
        K, L = len(self.s_levels), len(self.w_levels)
        if self.mass.shape != (L, K, K):
            raise InputError(f"mass must have shape {(L, K, K)}")
        if np.any(self.mass < 0):
            raise InputError("stratum masses must be non-negative")
        if np.any(np.abs(self.mass.sum(axis=(1, 2)) - 1) > 1e-10):
            raise InputError("stratum masses must sum to 1 within each W cell")

    def _idx(self, value, levels) -> int:
        hits = np.flatnonzero(levels == float(value))
        if hits.size == 0:
            raise InputError(f"value {value} is not a declared level")
        return int(hits[0])

    def marginal_s1(self) -> np.ndarray:
        """(K, L) matrix P(S1 = s_k | w_l)."""
        return self.mass.sum(axis=2).T

    def marginal_s0(self) -> np.ndarray:
        return self.mass.sum(axis=1).T

    def cell_mass(self, stratum: PrincipalStratum) -> np.ndarray:
        """e_{s1,s0}(w_l) for every level l."""
        a = self._idx(stratum.s1, self.s_levels)
        b = self._idx(stratum.s0, self.s_levels)
        return self.mass[:, a, b]

    def score(self, stratum: PrincipalStratum, w, x=None) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        idx = np.searchsorted(self.w_levels, w).clip(0, len(self.w_levels) - 1)
        if not np.all(self.w_levels[idx] == w):
            raise InputError("w value not among the joint's levels")
        return self.cell_mass(stratum)[idx]

    def cond_s1_given_s0(self, s0) -> np.ndarray:
        """(K, L) matrix P(S1 = s_k | S0 = s0, w_l); zero columns where P(S0 = s0 | w_l) = 0."""
        b = self._idx(s0, self.s_levels)
        col = self.mass[:, :, b]  # (L, K)
        tot = col.sum(axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            out = np.where(tot > 0, col / np.where(tot > 0, tot, 1), 0.0)
        return out.T

    def cond_s0_given_s1(self, s1) -> np.ndarray:
        a = self._idx(s1, self.s_levels)
        row = self.mass[:, a, :]
        tot = row.sum(axis=1, keepdims=True)
        out = np.where(tot > 0, row / np.where(tot > 0, tot, 1), 0.0)
        return out.T

    def support(self, tol: float = 0.0) -> list[PrincipalStratum]:
        present = self.mass.max(axis=0) > tol
        K = len(self.s_levels)
        return [
            PrincipalStratum(float(self.s_levels[a]), float(self.s_levels[b]))
            for a in range(K)
            for b in range(K)
            if present[a, b]
        ]


def joint_from_monotonicity(d: Dataset, eps: float = 0.02) -> TabularJoint:
    """Joint of binary (S1, S0) given W under S1 >= S0.

    P(1,1|w) = P(S=1|Z=0,w), P(0,0|w) = P(S=0|Z=1,w) and P(1,0|w) is the
    difference of the arm-specific P(S=1|.,w). Differences in [-eps, 0) are
    treated as sampling noise: set to zero and the cell renormalized (logged
    in ``diagnostics``); below -eps the assumption is rejected.
    """
    if d.schema.s_kind != "discrete" or not np.array_equal(d.s_levels, [0.0, 1.0]):
        raise InputError("monotonicity joint needs a binary S coded 0/1")
    if d.schema.w_kind != "discrete":
        raise InputError("monotonicity joint needs a discrete W")
    p1 = cell_prob_s(d, 1)[1]  # P(S=1 | Z=1, w)
    p0 = cell_prob_s(d, 0)[1]  # P(S=1 | Z=0, w)
    diff = p1 - p0
    L = len(d.w_levels)
    worst = int(np.argmin(diff))
    if diff[worst] < -eps:
        raise MonotonicityViolated(
            f"P(S=1|Z=1,w) - P(S=1|Z=0,w) = {diff[worst]:.4g} < -{eps} at w={d.w_levels[worst]}",
            w=float(d.w_levels[worst]),
            magnitude=float(-diff[worst]),
        )
    mass = np.zeros((L, 2, 2))
    mass[:, 1, 1] = p0
    mass[:, 0, 0] = 1 - p1
    mass[:, 1, 0] = np.maximum(diff, 0.0)
    diagnostics = {"pre_clip_p10": diff.tolist(), "clipped_cells": int(np.sum(diff < 0)), "eps": eps}
    totals = mass.sum(axis=(1, 2))
    mass /= totals[:, None, None]
    return TabularJoint(d.s_levels, d.w_levels, mass, provenance="monotonicity", diagnostics=diagnostics)


# ---------------------------------------------------------------------------
# Gaussian joint (continuous S)


@dataclass
class ArmMarginal:
    """Normal model of S_z given (W, X).

    Discrete W: per-cell intercept, covariate slope and SD (``w_levels`` set).
    Continuous W: polynomial mean in w, shared covariate slope, constant SD.
    """

    intercept: np.ndarray
    slope_x: np.ndarray
    sd: np.ndarray
    w_levels: Optional[np.ndarray] = None

    def __post_init__(self):
        self.intercept = np.asarray(self.intercept, dtype=float)
        self.sd = np.atleast_1d(np.asarray(self.sd, dtype=float))
        self.slope_x = np.asarray(self.slope_x, dtype=float)
        if self.w_levels is not None:
            self.w_levels = np.asarray(self.w_levels, dtype=float)
            L = len(self.w_levels)
            if self.slope_x.size == 0:
                self.slope_x = np.zeros((L, 0))
            self.slope_x = self.slope_x.reshape(L, -1)
        if np.any(self.sd <= 0):
            raise InputError("marginal SDs must be positive")

    def _cell(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        idx = np.searchsorted(self.w_levels, w).clip(0, len(self.w_levels) - 1)
        if not np.all(self.w_levels[idx] == w):
            raise InputError("w value not among the marginal's levels")
        return idx

    def mean(self, w, x=None) -> np.ndarray:
        w = np.atleast_1d(np.asarray(w, dtype=float))
        if self.w_levels is not None:
            idx = self._cell(w)
            out = self.intercept[idx]
            if x is not None and self.slope_x.shape[1]:
                out = out + np.einsum("ij,ij->i", np.asarray(x, float).reshape(w.size, -1), self.slope_x[idx])
            return out
        out = np.polynomial.polynomial.polyval(w, self.intercept)
        if x is not None and self.slope_x.size:
            out = out + np.asarray(x, float).reshape(w.size, -1) @ self.slope_x
        return out

    def sigma(self, w) -> np.ndarray:
        w = np.atleast_1d(np.asarray(w, dtype=float))
        if self.w_levels is not None:
            return self.sd[self._cell(w)]
        return np.full(w.shape, self.sd[0])


def fit_arm_marginal(d: Dataset, z: int, degree: int = 3, use_x: bool = True) -> ArmMarginal:
    """Fit the Normal marginal of S in arm ``z`` by (weighted) least squares."""
    arm = d.arm(z)
    wt = arm.unit_weights
    X = arm.x if use_x else np.empty((arm.n, 0))
    p = X.shape[1]
    population = d.schema.population
    if d.schema.w_kind == "discrete":
        levels = d.w_levels
        widx = arm.w_index()
        L = len(levels)
        intercept, slopes, sds = np.zeros(L), np.zeros((L, p)), np.zeros(L)
        for l in range(L):
            sel = widx == l
            k = int(np.count_nonzero(sel))
            if k < p + 2:
                raise DegenerateCell(
                    f"arm Z={z}, W={levels[l]} has {k} units; need at least {p + 2}",
                    )
            D = np.column_stack([np.ones(k), X[sel]])
            r = np.sqrt(wt[sel])
            coef = solve_least_squares(D * r[:, None], arm.s[sel] * r)
            resid = arm.s[sel] - D @ coef
            rss = float(np.dot(wt[sel], resid**2))
            dof = wt[sel].sum() if population else wt[sel].sum() - (1 + p)
            sd = np.sqrt(rss / dof) if dof > 0 else 0.0
            if sd <= 0:
                raise DegenerateCell(f"arm Z={z}, W={levels[l]}: S has zero residual variance")
            intercept[l], slopes[l], sds[l] = coef[0], coef[1:], sd
        return ArmMarginal(intercept, slopes, sds, w_levels=levels)
    D = np.column_stack([np.ones(arm.n), poly_basis(arm.w, degree), X])
    if arm.n < D.shape[1] + 1:
        raise DegenerateCell(f"arm Z={z} has too few units for a degree-{degree} mean")
    r = np.sqrt(wt)
    coef = solve_least_squares(D * r[:, None], arm.s * r)
    resid = arm.s - D @ coef
    rss = float(np.dot(wt, resid**2))
    dof = wt.sum() if population else wt.sum() - D.shape[1]
    sd = np.sqrt(rss / dof)
    if sd <= 0:
        raise DegenerateCell(f"arm Z={z}: S has zero residual variance")
    return ArmMarginal(coef[: degree + 1], coef[degree + 1 :], np.array([sd]))


def _rho_function(rho: RhoSpec, w_levels: Optional[np.ndarray]) -> Callable[[np.ndarray], np.ndarray]:
    if callable(rho):
        fn = rho
    elif isinstance(rho, dict):
        table = {float(k): float(v) for k, v in rho.items()}

        def fn(w):
            return np.array([table[float(v)] for v in np.atleast_1d(w)])

    elif np.ndim(rho) == 1:
        if w_levels is None or len(rho) != len(w_levels):
            raise InputError("a rho vector needs one entry per W level")
        values = np.asarray(rho, dtype=float)

        def fn(w):
            idx = np.searchsorted(w_levels, np.atleast_1d(w)).clip(0, len(w_levels) - 1)
            return values[idx]

    else:
        value = float(rho)

        def fn(w):
            return np.full(np.shape(np.atleast_1d(w)), value)

    return fn


@dataclass
class GaussianJoint(JointStratumModel):
    """(S1, S0) | W=w, X=x ~ N2(mu1, mu0, sigma1, sigma0, rho(w))."""

    arm1: ArmMarginal
    arm0: ArmMarginal
    rho: RhoSpec
    provenance: str = "copula"
    diagnostics: dict = field(default_factory=dict)
    kind: str = "gaussian"

    def __post_init__(self):
        levels = self.arm1.w_levels
        self._rho = _rho_function(self.rho, levels)
        probe = levels if levels is not None else np.linspace(-3, 3, 7)
        r = self._rho(probe)
        if np.any(np.abs(r) >= 1):
            raise InputError("|rho(w)| must be below 1")

    def rho_at(self, w) -> np.ndarray:
        return self._rho(np.atleast_1d(np.asarray(w, dtype=float)))

    def mu1(self, w, x=None):
        return self.arm1.mean(w, x)

    def mu0(self, w, x=None):
        return self.arm0.mean(w, x)

    def sigma1(self, w):
        return self.arm1.sigma(w)

    def sigma0(self, w):
        return self.arm0.sigma(w)

    # conditional laws
    def cond_mean_s0(self, s1, w, x=None) -> np.ndarray:
        """E(S0 | S1 = s1, W = w, X = x)."""
        return self.mu0(w, x) + self.rho_at(w) * self.sigma0(w) / self.sigma1(w) * (
            np.asarray(s1, dtype=float) - self.mu1(w, x)
        )

    def cond_var_s0(self, w) -> np.ndarray:
        return (1 - self.rho_at(w) ** 2) * self.sigma0(w) ** 2

    def cond_mean_s1(self, s0, w, x=None) -> np.ndarray:
        return self.mu1(w, x) + self.rho_at(w) * self.sigma1(w) / self.sigma0(w) * (
            np.asarray(s0, dtype=float) - self.mu0(w, x)
        )

    def cond_var_s1(self, w) -> np.ndarray:
        return (1 - self.rho_at(w) ** 2) * self.sigma1(w) ** 2

    def density(self, s1, s0, w, x=None) -> np.ndarray:
        """Bivariate Normal density of (s1, s0) given W = w (and X = x)."""
        sd1, sd0, r = self.sigma1(w), self.sigma0(w), self.rho_at(w)
        u1 = (np.asarray(s1, float) - self.mu1(w, x)) / sd1
        u0 = (np.asarray(s0, float) - self.mu0(w, x)) / sd0
        q = (u1**2 - 2 * r * u1 * u0 + u0**2) / (1 - r**2)
        return np.exp(-0.5 * q) / (2 * np.pi * sd1 * sd0 * np.sqrt(1 - r**2))

    def score(self, stratum: PrincipalStratum, w, x=None) -> np.ndarray:
        return self.density(stratum.s1, stratum.s0, w, x)

    def equate(self, s1, w, x=None) -> np.ndarray:
        """Equipercentile map s0 = F0^{-1}(F1(s1 | w) | w) under the Normal marginals."""
        return self.mu0(w, x) + self.sigma0(w) / self.sigma1(w) * (np.asarray(s1, float) - self.mu1(w, x))

    def equate_inverse(self, s0, w, x=None) -> np.ndarray:
        return self.mu1(w, x) + self.sigma1(w) / self.sigma0(w) * (np.asarray(s0, float) - self.mu0(w, x))


def joint_from_gaussian_copula(
    d: Dataset, rho: RhoSpec, degree: int = 3, provenance: Optional[str] = None, use_x: bool = True
) -> GaussianJoint:
    """Fit both Normal marginals from the arms and couple them with ``rho``."""
    if d.schema.s_kind != "continuous":
        raise InputError("Gaussian copula joint needs a continuous S")
    arm1 = fit_arm_marginal(d, 1, degree, use_x)
    arm0 = fit_arm_marginal(d, 0, degree, use_x)
    tag = provenance or (f"copula({rho})" if np.ndim(rho) == 0 and not callable(rho) else "copula")
    return GaussianJoint(arm1, arm0, rho, provenance=tag)


def joint_equipercentile(d: Dataset, degree: int = 3, use_x: bool = True) -> GaussianJoint:
    """Comonotone coupling, encoded as a Gaussian joint with rho = 1 - 1e-9."""
    joint = joint_from_gaussian_copula(d, EQUIPERCENTILE_RHO, degree, provenance="equipercentile", use_x=use_x)
    return joint
