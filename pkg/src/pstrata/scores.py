"""Propensity and principal scores, and the principal-ignorability weighting estimators."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import special

from .copula import JointStratumModel
from .core import (
    Dataset,
    EmptyCell,
    InputError,
    JointNotIdentified,
    NonConvergence,
    PceEstimate,
    PrincipalStratum,
    ZeroStratumMass,
    clip_prob,
    poly_basis,
)


@dataclass
class PropensityModel:
    kind: str  # "empirical" or "logistic"
    params: np.ndarray
    w_levels: Optional[np.ndarray] = None
    degree: int = 1
    diagnostics: dict = field(default_factory=dict)

    def _design(self, d: Dataset) -> np.ndarray:
        return np.column_stack([np.ones(d.n), poly_basis(d.w, self.degree), d.x])

    def predict(self, d: Dataset) -> np.ndarray:
        """pi(W) per unit, clipped to [1e-12, 1 - 1e-12]."""
        if self.kind == "empirical":
            raw = self.params[d.w_index()]
        else:
            raw = special.expit(self._design(d) @ self.params)
        pi, n_clipped = clip_prob(raw)
        self.diagnostics["clipped"] = n_clipped
        return pi


def _newton_logistic(X, y, wt, tol=1e-10, max_iter=100):
    beta = np.zeros(X.shape[1])
    for it in range(max_iter):
        p = special.expit(X @ beta)
        grad = X.T @ (wt * (y - p))
        if np.max(np.abs(grad)) <= tol:
            return beta, it
        H = (X * (wt * p * (1 - p))[:, None]).T @ X
        beta = beta + np.linalg.solve(H, grad)
    raise NonConvergence(f"logistic propensity fit did not converge in {max_iter} iterations", iterations=max_iter)


def fit_propensity(d: Dataset, kind: Optional[str] = None, degree: int = 1) -> PropensityModel:
    """Estimate pi(w) = P(Z=1 | W=w).

    ``kind`` defaults to ``"empirical"`` (treated fraction per W cell) for a
    discrete W without covariates, else ``"logistic"`` in (w, ..., w**degree, x).
    """
    if kind is None:
        kind = "empirical" if d.schema.w_kind == "discrete" and d.p == 0 else "logistic"
    wt = d.unit_weights
    if kind == "empirical":
        widx = d.w_index()
        L = len(d.w_levels)
        tot = np.bincount(widx, weights=wt, minlength=L)
        treated = np.bincount(widx, weights=wt * d.z, minlength=L)
        bad = np.flatnonzero((treated <= 0) | (treated >= tot))
        if bad.size:
            raise EmptyCell(f"W cell {d.w_levels[bad[0]]} lacks units in one arm", w=float(d.w_levels[bad[0]]))
        return PropensityModel("empirical", treated / tot, w_levels=d.w_levels)
    if kind != "logistic":
        raise InputError(f"unknown propensity kind {kind!r}")
    model = PropensityModel("logistic", np.zeros(0), degree=degree)
    X = model._design(d)
    beta, iters = _newton_logistic(X, d.z.astype(float), wt)
    model.params = beta
    model.diagnostics["iterations"] = iters
    return model


@dataclass
class PrincipalScoreModel:
    """e_{s}(w) = P(S1 = s | W = w) over a discrete support."""

    kind: str  # "empirical" or "multinomial-logistic"
    support: np.ndarray
    params: np.ndarray
    w_levels: Optional[np.ndarray] = None
    degree: int = 1

    def predict(self, d: Dataset) -> np.ndarray:
        """(n, K) matrix of scores for every unit's W; rows sum to one."""
        if self.kind == "empirical":
            return self.params[:, d.w_index()].T
        X = np.column_stack([np.ones(d.n), poly_basis(d.w, self.degree), d.x])
        eta = np.column_stack([np.zeros(d.n), X @ self.params])
        return special.softmax(eta, axis=1)

    def score(self, d: Dataset, s1) -> np.ndarray:
        k = np.flatnonzero(self.support == float(s1))
        if k.size == 0:
            raise ZeroStratumMass(f"stratum S1={s1} is not in the score support")
        return self.predict(d)[:, k[0]]


def _multinomial_logistic(X, labels, K, wt, tol=1e-8, max_iter=200):
    n, q = X.shape
    B = np.zeros((q, K - 1))
    Y = np.zeros((n, K))
    Y[np.arange(n), labels] = 1.0
    for it in range(max_iter):
        P = special.softmax(np.column_stack([np.zeros(n), X @ B]), axis=1)[:, 1:]
        grad = (X * wt[:, None]).T @ (Y[:, 1:] - P)
        if np.max(np.abs(grad)) <= tol:
            return B, it
        H = np.zeros((q * (K - 1), q * (K - 1)))
        for a in range(K - 1):
            for b in range(K - 1):
                c = P[:, a] * ((a == b) - P[:, b]) * wt
                H[a * q : (a + 1) * q, b * q : (b + 1) * q] = (X * c[:, None]).T @ X
        step = np.linalg.solve(H, grad.T.reshape(-1))
        B = B + step.reshape(K - 1, q).T
    raise NonConvergence(f"multinomial-logistic score fit did not converge in {max_iter} iterations")


def fit_principal_score_constant_s0(
    d: Dataset, kind: Optional[str] = None, degree: int = 1
) -> PrincipalScoreModel:
    """Principal score when S0 is constant: e_s(w) = P(S = s | Z = 1, W = w).

    Only treated units are used; the stratum proportions e_s are averages of
    e_s(W) over all units.
    """
    if d.schema.s_kind != "discrete":
        raise InputError("principal scores need a discrete S")
    support = d.s_levels
    treated = d.arm(1)
    if kind is None:
        kind = "empirical" if d.schema.w_kind == "discrete" and d.p == 0 else "multinomial-logistic"
    if kind == "empirical":
        L = len(d.w_levels)
        widx = treated.w_index()
        sidx = np.searchsorted(support, treated.s)
        tab = np.zeros((len(support), L))
        np.add.at(tab, (sidx, widx), treated.unit_weights)
        tot = tab.sum(axis=0)
        if np.any(tot <= 0):
            raise EmptyCell(f"no treated units in W cell {d.w_levels[np.argmin(tot)]}")
        return PrincipalScoreModel("empirical", support, tab / tot, w_levels=d.w_levels)
    if kind != "multinomial-logistic":
        raise InputError(f"unknown principal score kind {kind!r}")
    X = np.column_stack([np.ones(treated.n), poly_basis(treated.w, degree), treated.x])
    labels = np.searchsorted(support, treated.s)
    B, _ = _multinomial_logistic(X, labels, len(support), treated.unit_weights)
    return PrincipalScoreModel("multinomial-logistic", support, B, degree=degree)


def _weighted_contrast(d: Dataset, ratio: np.ndarray, pi: np.ndarray) -> tuple[float, float]:
    wt = d.unit_weights
    total = wt.sum()
    m1 = float(np.sum(wt * ratio * d.z * d.y / pi) / total)
    m0 = float(np.sum(wt * ratio * (1 - d.z) * d.y / (1 - pi)) / total)
    return m1, m0


def pce_weighting_constant_s0(
    d: Dataset, ps: PrincipalScoreModel, pr: PropensityModel, s1
) -> PceEstimate:
    """Plug-in weighting estimate of tau_{s1} = E(Y1 - Y0 | S1 = s1) with S0 constant."""
    d.require_both_arms()
    e_w = ps.score(d, s1)
    e_bar = float(np.average(e_w, weights=d.unit_weights))
    if e_bar <= 0:
        raise ZeroStratumMass(f"stratum S1={s1} has zero estimated mass")
    pi = pr.predict(d)
    m1, m0 = _weighted_contrast(d, e_w / e_bar, pi)
    s0 = d.schema.s0_constant if d.schema.s0_constant is not None else float("nan")
    return PceEstimate(
        PrincipalStratum(float(s1), s0),
        m1 - m0,
        method="weighting-constant-s0",
        diagnostics={
            "e_s1": e_bar,
            "E[Y1|S1]": m1,
            "E[Y0|S1]": m0,
            "propensity_clipped": pr.diagnostics.get("clipped", 0),
        },
    )


def pce_weighting_general(
    d: Dataset,
    joint: JointStratumModel,
    pr: PropensityModel,
    stratum: PrincipalStratum,
    allow_provisional: bool = False,
) -> PceEstimate:
    """Weighting estimate of tau_{s1 s0} given an identified joint of (S1, S0) | W.

    A joint built for sensitivity analysis (``provenance`` starting with
    ``"sensitivity"``) is refused unless ``allow_provisional`` is set, in
    which case the estimate is tagged with the joint's provenance.
    """
    d.require_both_arms()
    if joint.provisional and not allow_provisional:
        raise JointNotIdentified(f"joint is provisional ({joint.provenance}); pass allow_provisional=True")
    e_w = np.asarray(joint.score(stratum, d.w, d.x if d.p else None), dtype=float)
    e_bar = float(np.average(e_w, weights=d.unit_weights))
    if e_bar <= 0:
        raise ZeroStratumMass(f"stratum {stratum.label()} has zero mass")
    pi = pr.predict(d)
    m1, m0 = _weighted_contrast(d, e_w / e_bar, pi)
    diag = {
        "e_stratum": e_bar,
        "E[Y1|U]": m1,
        "E[Y0|U]": m0,
        "joint": joint.provenance,
        "propensity_clipped": pr.diagnostics.get("clipped", 0),
    }
    if joint.provisional:
        diag["provisional"] = True
    return PceEstimate(stratum, m1 - m0, method="weighting-general", diagnostics=diag)
