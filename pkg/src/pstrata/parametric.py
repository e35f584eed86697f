"""Parametric identification without conditional independence.

Constant control intermediate: additive-linear and Probit outcome models in
which the auxiliary W enters through known basis functions while S1 depends
on W through an identified mean g(w). General intermediate: binary S under
monotonicity with a linear W term, and bivariate-Normal (S1, S0) with linear
or Probit outcomes. All fits return a :class:`ParametricFit` whose ``pce``
method evaluates the principal causal effect at any stratum.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import special, stats

from .copula import ArmMarginal, GaussianJoint, JointStratumModel, fit_arm_marginal, joint_from_monotonicity
from .core import (
    RANK_RTOL,
    ConstantConditionalMean,
    ConstantRatio,
    Dataset,
    EstimatorFailure,
    InputError,
    LinearDependence,
    NonConvergence,
    PceEstimate,
    PrincipalStratum,
    cell_prob_s,
    numerical_rank,
    poly_basis,
    std_normal_cdf,
    weighted_ols,
)

# p-value above which g(w) is declared to lie in span{1, f_j(w)}
SPAN_TEST_ALPHA = 0.01
_LOG_SQRT_2PI = 0.5 * np.log(2 * np.pi)


def probit_normal_mix(beta0, alpha, mu, sigma2):
    """Closed form of the integral of Phi(beta0 + alpha s) against N(s; mu, sigma2).

    >>> round(probit_normal_mix(0.0, 2.0, 0.0, 3.0), 12)
    0.5
    """
    sigma2 = np.asarray(sigma2, dtype=float)
    if np.any(sigma2 < 0):
        raise InputError("sigma2 must be non-negative")
    alpha = np.asarray(alpha, dtype=float)
    return std_normal_cdf((np.asarray(beta0, float) + alpha * np.asarray(mu, float)) / np.sqrt(1.0 + alpha**2 * sigma2))


# ---------------------------------------------------------------------------
# Basis functions


@dataclass(frozen=True)
class Basis:
    """Named basis f_1(w), ..., f_J(w) (no constant term).

    Spec strings: ``none``, ``poly:D`` (w, ..., w**D), ``indicator:a,b,...``
    (one indicator per listed level).
    """

    kind: str
    degree: int = 0
    levels: tuple = ()

    @classmethod
    def parse(cls, text: Optional[str]) -> "Basis":
        if text is None or text in ("", "none"):
            return cls("none")
        if text == "linear":
            return cls("poly", degree=1)
        head, _, tail = text.partition(":")
        if head == "poly":
            try:
                deg = int(tail)
            except ValueError as exc:
                raise InputError(f"bad basis spec {text!r}") from exc
            if deg < 0:
                raise InputError("polynomial degree must be non-negative")
            return cls("poly", degree=deg) if deg else cls("none")
        if head == "indicator":
            try:
                levels = tuple(float(v) for v in tail.split(",") if v)
            except ValueError as exc:
                raise InputError(f"bad basis spec {text!r}") from exc
            if not levels:
                raise InputError("indicator basis needs at least one level")
            return cls("indicator", levels=levels)
        raise InputError(f"unknown basis spec {text!r}")

    @property
    def size(self) -> int:
        return {"none": 0, "poly": self.degree, "indicator": len(self.levels)}[self.kind]

    def names(self, prefix: str = "f") -> list[str]:
        if self.kind == "poly":
            return [f"{prefix}:w^{k}" for k in range(1, self.degree + 1)]
        if self.kind == "indicator":
            return [f"{prefix}:w=={v:g}" for v in self.levels]
        return []

    def __call__(self, w) -> np.ndarray:
        w = np.atleast_1d(np.asarray(w, dtype=float))
        if self.kind == "poly":
            return poly_basis(w, self.degree)
        if self.kind == "indicator":
            return np.column_stack([(w == v).astype(float) for v in self.levels])
        return np.empty((w.size, 0))

    def __str__(self) -> str:
        if self.kind == "poly":
            return f"poly:{self.degree}"
        if self.kind == "indicator":
            return "indicator:" + ",".join(f"{v:g}" for v in self.levels)
        return "none"


@dataclass
class OutcomeModelSpec:
    """Outcome model family and the W basis of each arm.

    ``basis`` is f_j (treated-arm model for the general case, and the
    shared basis in the constant-S0 case); ``basis0`` is h_j for the control
    arm and defaults to ``basis``. ``g_degree`` is the polynomial degree of
    the series fit of E(S | Z, W) when W is continuous.
    """

    family: str = "linear"
    basis: str = "poly:1"
    basis0: Optional[str] = None
    g_degree: int = 3
    s_terms: Optional[tuple] = None

    def __post_init__(self):
        if self.family not in ("linear", "probit"):
            raise InputError(f"family must be 'linear' or 'probit', got {self.family!r}")
        if self.g_degree < 1:
            raise InputError("g_degree must be at least 1")

    @property
    def f(self) -> Basis:
        return Basis.parse(self.basis)

    @property
    def h(self) -> Basis:
        return Basis.parse(self.basis if self.basis0 is None else self.basis0)

    def require_terms(self, terms: tuple) -> None:
        if self.s_terms is not None and tuple(self.s_terms) != terms:
            raise InputError(f"this estimator uses s-terms {terms}, spec declares {tuple(self.s_terms)}")


@dataclass
class ParametricFit:
    """Fitted per-arm coefficients plus a PCE evaluator.

    ``beta1`` and ``beta0`` are the treated- and control-arm coefficient
    vectors, labelled by ``names1`` / ``names0``.
    """

    method: str
    beta1: np.ndarray
    beta0: np.ndarray
    names1: list
    names0: list
    surface: Callable = field(repr=False)
    diagnostics: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    @property
    def coefficients(self) -> dict:
        out = {f"arm1:{n}": float(v) for n, v in zip(self.names1, self.beta1)}
        out.update({f"arm0:{n}": float(v) for n, v in zip(self.names0, self.beta0)})
        out.update({k: float(v) for k, v in self.extras.items()})
        return out

    def pce(self, stratum: PrincipalStratum) -> PceEstimate:
        stratum = PrincipalStratum(float(stratum.s1), float(stratum.s0))
        return PceEstimate(stratum, float(self.surface(stratum.s1, stratum.s0)), method=self.method)

    def pce_table(self, strata) -> list[PceEstimate]:
        return [self.pce(u) for u in strata]

    def grid(self, s1_values, s0_values) -> np.ndarray:
        """PCE surface on the outer grid, shape (len(s1_values), len(s0_values))."""
        return np.array([[float(self.surface(a, b)) for b in s0_values] for a in s1_values])


# ---------------------------------------------------------------------------
# Diagnostics


def linear_independence_diagnostic(F, rtol: float = RANK_RTOL) -> dict:
    """Column-rank check of ``[1, F]`` evaluated on a set of points.

    ``F`` holds the non-constant functions column-wise, one row per
    evaluation point.
    """
    F = np.asarray(F, dtype=float)
    if F.ndim == 1:
        F = F[:, None]
    A = np.column_stack([np.ones(F.shape[0]), F])
    if A.shape[0] < A.shape[1]:
        raise InputError(f"need at least {A.shape[1]} evaluation points, got {A.shape[0]}")
    # Scale columns so that the tolerance is unit-free.
    norms = np.linalg.norm(A, axis=0)
    if np.any(norms == 0):
        return {"independent": False, "min_singular_value": 0.0, "rank": int(np.sum(norms > 0)), "columns": A.shape[1]}
    rank, cond, sv = numerical_rank(A / norms, rtol)
    return {
        "independent": bool(rank == A.shape[1]),
        "min_singular_value": float(sv[-1]),
        "rank": rank,
        "columns": A.shape[1],
        "condition": cond,
    }


def _wls_rss(X, y, wt) -> tuple[float, int]:
    r = np.sqrt(wt)
    Xr, yr = X * r[:, None], y * r
    rank = numerical_rank(Xr)[0]
    coef = np.linalg.lstsq(Xr, yr, rcond=None)[0]
    resid = yr - Xr @ coef
    return float(resid @ resid), rank


def span_test(d: Dataset, f: Basis, g_degree: int = 3) -> dict:
    """Does E(S | Z=1, W=w) carry anything beyond span{1, f_j(w)}?

    Sampled data: nested F-test in the treated arm of ``S ~ 1 + f(W)``
    against an unrestricted mean (W-cell indicators for discrete W, a
    degree-``g_degree`` polynomial otherwise, plus f). Independence is
    declared when the p-value is below ``SPAN_TEST_ALPHA``. Population data:
    exact rank check of ``[1, g(w), f(w)]``.
    """
    treated = d.arm(1)
    wt = treated.unit_weights
    fw = f(treated.w)
    if d.schema.population:
        g = fit_arm_marginal(d, 1, g_degree, use_x=False).mean(treated.w)
        res = linear_independence_diagnostic(np.column_stack([g, fw]))
        res["test"] = "exact-rank"
        return res
    if d.schema.w_kind == "discrete":
        idx = treated.w_index()
        unrestricted = np.eye(len(d.w_levels))[idx]
    else:
        unrestricted = poly_basis(treated.w, g_degree)
    R = np.column_stack([np.ones(treated.n), fw])
    U = np.column_stack([R, unrestricted])
    rss_r, rank_r = _wls_rss(R, treated.s, wt)
    rss_u, rank_u = _wls_rss(U, treated.s, wt)
    df1 = rank_u - rank_r
    df2 = float(wt.sum()) - rank_u
    out = {"test": "nested-F", "df1": int(df1), "df2": df2, "alpha": SPAN_TEST_ALPHA}
    if df1 <= 0 or df2 <= 0:
        out.update(F=0.0, p_value=1.0, independent=False)
        return out
    F = ((rss_r - rss_u) / df1) / (rss_u / df2) if rss_u > 0 else np.inf
    p = float(stats.f.sf(F, df1, df2)) if np.isfinite(F) else 0.0
    out.update(F=float(F), p_value=p, independent=bool(p < SPAN_TEST_ALPHA))
    return out


# ---------------------------------------------------------------------------
# Probit maximum likelihood


def _mills(t):
    """phi(t) / Phi(t), stable in both tails."""
    return np.exp(-0.5 * t**2 - _LOG_SQRT_2PI - special.log_ndtr(t))


def _line_search(objective, theta, step, current, max_halvings=60):
    t = 1.0
    for _ in range(max_halvings):
        cand = theta + t * step
        val = objective(cand)
        if np.isfinite(val) and val >= current - 1e-12 * abs(current):
            return cand, val
        t *= 0.5
    return theta, current


def probit_mle(X, y, weights=None, tol: float = 1e-9, max_iter: int = 500) -> tuple[np.ndarray, dict]:
    """Probit regression by Newton's method with step halving, started at zero.

    Convergence when the largest gradient entry divided by the total weight
    falls below ``tol``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    wt = np.ones(y.size) if weights is None else np.asarray(weights, dtype=float)
    q = 2 * y - 1
    total = wt.sum()

    def loglik(b):
        return float(wt @ special.log_ndtr(q * (X @ b)))

    beta = np.zeros(X.shape[1])
    ll = loglik(beta)
    for it in range(max_iter):
        eta = X @ beta
        lam = q * _mills(q * eta)
        grad = X.T @ (wt * lam)
        if np.max(np.abs(grad)) / total <= tol:
            return beta, {"iterations": it, "loglik": ll}
        H = (X * (wt * lam * (lam + eta))[:, None]).T @ X
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError as exc:
            raise NonConvergence("singular probit Hessian", iterations=it) from exc
        new_beta, new_ll = _line_search(loglik, beta, step, ll)
        if np.array_equal(new_beta, beta):
            break
        beta, ll = new_beta, new_ll
    raise NonConvergence(f"probit fit did not converge in {max_iter} iterations", iterations=max_iter)


def scaled_probit_mle(
    X, y, v, scale_index: int, weights=None, tol: float = 1e-9, max_iter: int = 500
) -> tuple[np.ndarray, dict]:
    """Probit with unit-specific scale: P(Y=1) = Phi(x'theta / sqrt(1 + theta[a]^2 v)).

    ``a = scale_index``. Fisher scoring with step halving from zero.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    v = np.asarray(v, dtype=float)
    wt = np.ones(y.size) if weights is None else np.asarray(weights, dtype=float)
    q = 2 * y - 1
    total = wt.sum()
    a = scale_index

    def index(theta):
        eta = X @ theta
        k = np.sqrt(1.0 + theta[a] ** 2 * v)
        return eta, k, eta / k

    def loglik(theta):
        return float(wt @ special.log_ndtr(q * index(theta)[2]))

    theta = np.zeros(X.shape[1])
    ll = loglik(theta)
    for it in range(max_iter):
        eta, k, t = index(theta)
        lam = q * _mills(q * t)
        G = X / k[:, None]
        G[:, a] -= eta * theta[a] * v / k**3
        grad = G.T @ (wt * lam)
        if np.max(np.abs(grad)) / total <= tol:
            return theta, {"iterations": it, "loglik": ll}
        info_w = np.exp(-(t**2) - 2 * _LOG_SQRT_2PI - special.log_ndtr(t) - special.log_ndtr(-t))
        info = (G * (wt * info_w)[:, None]).T @ G
        try:
            step = np.linalg.solve(info, grad)
        except np.linalg.LinAlgError as exc:
            raise NonConvergence("singular information matrix", iterations=it) from exc
        new_theta, new_ll = _line_search(loglik, theta, step, ll)
        if np.array_equal(new_theta, theta):
            break
        theta, ll = new_theta, new_ll
    raise NonConvergence(f"scaled probit fit did not converge in {max_iter} iterations", iterations=max_iter)


# ---------------------------------------------------------------------------
# Helpers


def _require(d: Dataset, s_kind=None, y_kind=None, w_kind=None):
    d.require_both_arms()
    if s_kind and d.schema.s_kind != s_kind:
        raise InputError(f"this estimator needs a {s_kind} S")
    if y_kind and d.schema.y_kind != y_kind:
        raise InputError(f"this estimator needs a {y_kind} Y")
    if w_kind and d.schema.w_kind != w_kind:
        raise InputError(f"this estimator needs a {w_kind} W")


def _normal_weights(points, means, sds) -> np.ndarray:
    """Normal densities N(point; mean_i, sd_i) for each unit i (rows: points)."""
    points = np.atleast_1d(np.asarray(points, dtype=float))
    z = (points[:, None] - means[None, :]) / sds[None, :]
    return np.exp(-0.5 * z**2) / sds[None, :]


def _constant_s0(d: Dataset) -> float:
    if d.schema.s0_constant is not None:
        return float(d.schema.s0_constant)
    vals = np.unique(d.s[d.z == 0])
    if vals.size != 1:
        raise InputError("constant-S0 estimators need a constant control-arm S (declare s0_constant)")
    return float(vals[0])


def _marginal_w(d: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """Support of W and its (weighted) empirical probabilities, over all units."""
    wt = d.unit_weights
    levels, inv = np.unique(d.w, return_inverse=True)
    pw = np.bincount(inv, weights=wt) / wt.sum()
    return levels, pw


# ---------------------------------------------------------------------------
# Constant control intermediate


def _fit_g(d: Dataset, spec: OutcomeModelSpec, homoscedastic: bool) -> ArmMarginal:
    g = fit_arm_marginal(d, 1, spec.g_degree, use_x=False)
    if homoscedastic and g.sd.size > 1:
        treated = d.arm(1)
        resid = treated.s - g.mean(treated.w)
        wt = treated.unit_weights
        dof = wt.sum() if d.schema.population else wt.sum() - g.intercept.size
        pooled = np.sqrt(float(wt @ resid**2) / dof)
        g = ArmMarginal(g.intercept, g.slope_x, np.full(g.sd.shape, pooled), w_levels=g.w_levels)
    return g


def _constant_s0_surface(d: Dataset, g: ArmMarginal, f: Basis, beta1, beta0, link: Callable) -> Callable:
    """tau(s1) = E{m1(s1, W) - m0(s1, W) | S1 = s1}, W | S1 = s1 by Bayes' rule."""
    levels, pw = _marginal_w(d)
    mu, sd = g.mean(levels), g.sigma(levels)
    F = f(levels)

    def surface(s1, s0=None):
        dens = _normal_weights([s1], mu, sd)[0] * pw
        if dens.sum() <= 0:
            raise EstimatorFailure(f"S1={s1} has zero density under the fitted marginal")
        X = np.column_stack([np.ones(levels.size), np.full(levels.size, float(s1)), F])
        return float(dens @ (link(X @ beta1) - link(X @ beta0)) / dens.sum())

    return surface


def fit_prop1_linear(d: Dataset, spec: Optional[OutcomeModelSpec] = None) -> ParametricFit:
    """Additive-linear outcome with constant S0.

    Step 1 fits g(w) = E(S | Z=1, W=w) (per cell, or a polynomial series).
    Step 2 regresses control-arm Y on (1, g(W), f(W)) to get (beta0, alpha,
    beta_j), and treated-arm Y on (1, S, f(W)).
    """
    spec = spec or OutcomeModelSpec()
    spec.require_terms(("s1",))
    if spec.family != "linear":
        raise InputError("fit_prop1_linear needs family='linear'")
    _require(d, s_kind="continuous")
    s0 = _constant_s0(d)
    f = spec.f
    span = span_test(d, f, spec.g_degree)
    if not span["independent"]:
        raise LinearDependence("{1, g(w), f_j(w)} are not linearly independent", **span)
    g = _fit_g(d, spec, homoscedastic=False)
    treated, control = d.arm(1), d.arm(0)
    X0 = np.column_stack([np.ones(control.n), g.mean(control.w), f(control.w)])
    beta0 = weighted_ols(X0, control.y, control.weights)
    X1 = np.column_stack([np.ones(treated.n), treated.s, f(treated.w)])
    beta1 = weighted_ols(X1, treated.y, treated.weights)
    names = ["intercept", "s1"] + f.names()
    surface = _constant_s0_surface(d, g, f, beta1, beta0, lambda e: e)
    return ParametricFit(
        "prop1",
        beta1,
        beta0,
        names,
        names,
        surface,
        diagnostics={"linear_independence": span, "s0": s0, "basis": str(f)},
        extras={"g_sigma_mean": float(np.mean(g.sd))},
    )


def unscale_probit(c: np.ndarray, alpha_index: int, sigma2: float) -> tuple[np.ndarray, float]:
    """Invert c = theta / sqrt(1 + alpha^2 sigma2) with alpha = theta[alpha_index].

    Returns ``(theta, k)`` with ``k = sqrt(1 + alpha^2 sigma2)``.
    """
    ca = float(c[alpha_index])
    denom = 1.0 - ca**2 * sigma2
    if denom <= 0:
        raise EstimatorFailure(
            f"scaled slope {ca:.4g} is incompatible with sigma^2 = {sigma2:.4g} (|c| sigma must be < 1)",
            scaled_slope=ca,
            sigma2=sigma2,
        )
    k = 1.0 / np.sqrt(denom)
    return np.asarray(c, dtype=float) * k, float(k)


def fit_prop2_probit(d: Dataset, spec: Optional[OutcomeModelSpec] = None) -> ParametricFit:
    """Probit outcome, Normal homoscedastic S1 | W, constant S0.

    The control-arm probit of Y on (1, g(W), f(W)) estimates coefficients
    scaled by 1 / sqrt(1 + alpha^2 sigma^2); sigma^2 comes from the treated
    arm, which undoes the scaling. The treated arm is a plain probit on
    (1, S, f(W)).
    """
    spec = spec or OutcomeModelSpec(family="probit")
    spec.require_terms(("s1",))
    if spec.family != "probit":
        raise InputError("fit_prop2_probit needs family='probit'")
    _require(d, s_kind="continuous", y_kind="binary")
    s0 = _constant_s0(d)
    f = spec.f
    span = span_test(d, f, spec.g_degree)
    if not span["independent"]:
        raise LinearDependence("{1, g(w), f_j(w)} are not linearly independent", **span)
    g = _fit_g(d, spec, homoscedastic=True)
    sigma2 = float(g.sd[0] ** 2)
    treated, control = d.arm(1), d.arm(0)
    X0 = np.column_stack([np.ones(control.n), g.mean(control.w), f(control.w)])
    c0, info0 = probit_mle(X0, control.y, control.weights)
    beta0, k = unscale_probit(c0, 1, sigma2)
    X1 = np.column_stack([np.ones(treated.n), treated.s, f(treated.w)])
    beta1, info1 = probit_mle(X1, treated.y, treated.weights)
    names = ["intercept", "s1"] + f.names()
    surface = _constant_s0_surface(d, g, f, beta1, beta0, std_normal_cdf)
    return ParametricFit(
        "prop2",
        beta1,
        beta0,
        names,
        names,
        surface,
        diagnostics={
            "linear_independence": span,
            "s0": s0,
            "basis": str(f),
            "iterations": [info1["iterations"], info0["iterations"]],
            "scaled_control_coefficients": c0.tolist(),
        },
        extras={"sigma2": sigma2, "scale_factor": k},
    )


# ---------------------------------------------------------------------------
# General intermediate


def _ratio_check(r: np.ndarray, name: str, tol: float = 1e-8) -> dict:
    spread = float(np.ptp(r))
    info = {"ratio": r.tolist(), "spread": spread}
    if spread <= tol * max(1.0, float(np.max(np.abs(r)))):
        raise ConstantRatio(f"{name} is constant in w (spread {spread:.3g})", **info)
    return info


def fit_prop3_binary(d: Dataset, eps: float = 0.02) -> ParametricFit:
    """Binary S with monotonicity; E(Y_z | S1, S0, W) = b_z0 + b_z1 S1 + b_z2 S0 + b_z3 W.

    Arm 1: E(Y | Z=1, S=1, w) = b10 + b11 + b12 r1(w) + b13 w with
    r1 = P(S=1|Z=0,w) / P(S=1|Z=1,w), and E(Y | Z=1, S=0, w) = b10 + b13 w.
    Arm 0: E(Y | Z=0, S=0, w) = b00 + b01 (1 - r0(w)) + b03 w with
    r0 = P(S=0|Z=1,w) / P(S=0|Z=0,w), and E(Y | Z=0, S=1, w) = b00 + b01 + b02 + b03 w.
    The cell equations are stacked and solved by least squares weighted by
    cell size.
    """
    _require(d, s_kind="discrete", w_kind="discrete")
    joint = joint_from_monotonicity(d, eps)
    p1 = cell_prob_s(d, 1)  # (2, L)
    p0 = cell_prob_s(d, 0)
    r1 = p0[1] / p1[1]
    r0 = p1[0] / p0[0]
    diag = {
        "ratio_arm1": _ratio_check(r1, "P(S=1|Z=0,w)/P(S=1|Z=1,w)"),
        "ratio_arm0": _ratio_check(r0, "P(S=0|Z=1,w)/P(S=0|Z=0,w)"),
        "joint": joint.diagnostics,
    }
    levels = d.w_levels
    widx = d.w_index()
    wt = d.unit_weights
    betas = {}
    for z in (1, 0):
        rows, targets, cw = [], [], []
        for l, wv in enumerate(levels):
            for s in (0.0, 1.0):
                sel = (d.z == z) & (d.s == s) & (widx == l)
                mass = wt[sel].sum()
                if mass <= 0:
                    continue
                if z == 1:
                    rows.append([1.0, 1.0, r1[l], wv] if s == 1 else [1.0, 0.0, 0.0, wv])
                else:
                    rows.append([1.0, 1.0, 1.0, wv] if s == 1 else [1.0, 1.0 - r0[l], 0.0, wv])
                targets.append(float(wt[sel] @ d.y[sel] / mass))
                cw.append(mass)
        betas[z] = weighted_ols(np.array(rows), np.array(targets), np.array(cw))
    beta1, beta0 = betas[1], betas[0]

    levels_all, pw = _marginal_w(d)

    def surface(s1, s0):
        e = joint.score(PrincipalStratum(s1, s0), levels_all) * pw
        if e.sum() <= 0:
            raise EstimatorFailure(f"stratum ({s1:g},{s0:g}) has zero mass")
        ew = float(e @ levels_all / e.sum())
        diff = beta1 - beta0
        return diff[0] + diff[1] * s1 + diff[2] * s0 + diff[3] * ew

    names = ["intercept", "s1", "s0", "w"]
    fit = ParametricFit("prop3", beta1, beta0, names, names, surface, diagnostics=diag)
    fit.diagnostics["strata"] = [u.label() for u in joint.support()]
    return fit


def _gaussian_design(s, w, cross, basis: Basis, own_first: bool) -> np.ndarray:
    F = basis(w)
    ones = np.ones(np.size(s))
    cols = [ones, s, cross] if own_first else [ones, cross, s]
    return np.column_stack(cols + [F])


def fit_prop4_prop5(d: Dataset, joint: GaussianJoint, spec: Optional[OutcomeModelSpec] = None) -> ParametricFit:
    """Bivariate-Normal (S1, S0) | W with known rho(w); linear or Probit outcomes.

    Treated arm: Y on (1, S1, E(S0 | S1, W), f(W)); control arm: Y on
    (1, E(S1 | S0, W), S0, h(W)). For Probit outcomes the index is divided
    by sqrt(1 + a^2 v(w)) where ``a`` is the cross-term coefficient and v the
    conditional variance of the missing intermediate.
    Coefficients are ordered (intercept, s1, s0, basis...) in both arms.
    """
    spec = spec or OutcomeModelSpec()
    spec.require_terms(("s1", "s0"))
    _require(d, s_kind="continuous")
    if not isinstance(joint, GaussianJoint):
        raise InputError("fit_prop4_prop5 needs a Gaussian joint")
    if spec.family == "probit" and d.schema.y_kind != "binary":
        raise InputError("Probit outcome models need a binary Y")
    f, h = spec.f, spec.h
    treated, control = d.arm(1), d.arm(0)
    xt = treated.x if treated.p and joint.arm1.slope_x.size else None
    xc = control.x if control.p and joint.arm1.slope_x.size else None
    m0 = joint.cond_mean_s0(treated.s, treated.w, xt)
    m1 = joint.cond_mean_s1(control.s, control.w, xc)
    X1 = np.column_stack([np.ones(treated.n), treated.s, m0, f(treated.w)])
    X0 = np.column_stack([np.ones(control.n), m1, control.s, h(control.w)])
    diag = {
        "condition_a": linear_independence_diagnostic(X1[:, 1:]),
        "condition_b": linear_independence_diagnostic(X0[:, 1:]),
        "joint": joint.provenance,
        "family": spec.family,
    }
    for key, label in (("condition_a", "(a)"), ("condition_b", "(b)")):
        if not diag[key]["independent"]:
            raise LinearDependence(f"linear independence condition {label} fails", failed_condition=label, **diag[key])
    if spec.family == "linear":
        beta1 = weighted_ols(X1, treated.y, treated.weights)
        beta0 = weighted_ols(X0, control.y, control.weights)
        link = lambda e: e  # noqa: E731
    else:
        beta1, i1 = scaled_probit_mle(X1, treated.y, joint.cond_var_s0(treated.w), 2, treated.weights)
        beta0, i0 = scaled_probit_mle(X0, control.y, joint.cond_var_s1(control.w), 1, control.weights)
        diag["iterations"] = [i1["iterations"], i0["iterations"]]
        link = std_normal_cdf
    levels, pw = _marginal_w(d)
    F1, H0 = f(levels), h(levels)

    def surface(s1, s0):
        dens = joint.density(s1, s0, levels) * pw if d.p == 0 else None
        if dens is None:
            # with covariates, average the density over the sample X
            dens = np.array([np.mean(joint.density(s1, s0, np.full(d.n, lv), d.x)) for lv in levels]) * pw
        if dens.sum() <= 0:
            raise EstimatorFailure(f"stratum ({s1:g},{s0:g}) has zero density")
        L = levels.size
        base = np.column_stack([np.ones(L), np.full(L, float(s1)), np.full(L, float(s0))])
        e1 = np.column_stack([base, F1]) @ beta1
        e0 = np.column_stack([base, H0]) @ beta0
        return float(dens @ (link(e1) - link(e0)) / dens.sum())

    method = "prop4" if spec.family == "linear" else "prop5"
    return ParametricFit(
        method,
        beta1,
        beta0,
        ["intercept", "s1", "s0"] + f.names("f"),
        ["intercept", "s1", "s0"] + h.names("h"),
        surface,
        diagnostics=diag,
    )


def _cond_mean_table(joint: JointStratumModel, values, w_levels) -> np.ndarray:
    """E(S_other | S_own = v, w) for own = 0 (rows: values, cols: w levels)."""
    out = np.full((len(values), len(w_levels)), np.nan)
    if isinstance(joint, GaussianJoint):
        for i, v in enumerate(values):
            out[i] = joint.cond_mean_s1(np.full(len(w_levels), v), w_levels)
        return out
    for i, v in enumerate(values):
        M = joint.cond_s1_given_s0(v)  # (K, L)
        tot = M.sum(axis=0)
        out[i] = np.where(tot > 0, joint.s_levels @ M, np.nan)
    return out


def _cond_mean_table_s0(joint: JointStratumModel, values, w_levels) -> np.ndarray:
    out = np.full((len(values), len(w_levels)), np.nan)
    if isinstance(joint, GaussianJoint):
        for i, v in enumerate(values):
            out[i] = joint.cond_mean_s0(np.full(len(w_levels), v), w_levels)
        return out
    for i, v in enumerate(values):
        M = joint.cond_s0_given_s1(v)
        tot = M.sum(axis=0)
        out[i] = np.where(tot > 0, joint.s_levels @ M, np.nan)
    return out


def _varies_in_w(table: np.ndarray, tol: float = 1e-8) -> tuple[bool, float]:
    best = 0.0
    for row in table:
        row = row[np.isfinite(row)]
        if row.size >= 2:
            scale = max(1.0, float(np.max(np.abs(row))))
            best = max(best, float(np.ptp(row)) / scale)
    return best > tol, best


def _unit_cond_mean(joint: JointStratumModel, s, w, given: int) -> np.ndarray:
    """E(S_other | S_given = s_i, W = w_i) per unit."""
    if isinstance(joint, GaussianJoint):
        return joint.cond_mean_s1(s, w) if given == 0 else joint.cond_mean_s0(s, w)
    out = np.empty(np.size(s))
    widx = np.searchsorted(joint.w_levels, w)
    for v in np.unique(s):
        M = joint.cond_s1_given_s0(v) if given == 0 else joint.cond_s0_given_s1(v)
        means = joint.s_levels @ M
        sel = s == v
        out[sel] = means[widx[sel]]
    return out


def fit_propS1_discreteW(d: Dataset, joint: JointStratumModel) -> ParametricFit:
    """Discrete W, identified joint, E(Y_z | S1, S0, W) = b_z0 + b_z1 S1 + b_z2 S0.

    Control arm: Y on (1, E(S1 | S0, W), S0); treated arm: Y on
    (1, S1, E(S0 | S1, W)). Requires E(S1 | S0=s0, w) to vary in w for some
    s0, and symmetrically.
    """
    _require(d, w_kind="discrete")
    levels = d.w_levels
    control, treated = d.arm(0), d.arm(1)
    grid0 = np.unique(control.s) if d.schema.s_kind == "discrete" else np.quantile(control.s, [0.1, 0.5, 0.9])
    grid1 = np.unique(treated.s) if d.schema.s_kind == "discrete" else np.quantile(treated.s, [0.1, 0.5, 0.9])
    ok0, spread0 = _varies_in_w(_cond_mean_table(joint, grid0, levels))
    ok1, spread1 = _varies_in_w(_cond_mean_table_s0(joint, grid1, levels))
    diag = {"spread_E_S1_given_S0": spread0, "spread_E_S0_given_S1": spread1, "joint": joint.provenance}
    if not ok0:
        raise ConstantConditionalMean("E(S1 | S0=s0, w) is constant in w for every s0", **diag)
    if not ok1:
        raise ConstantConditionalMean("E(S0 | S1=s1, w) is constant in w for every s1", **diag)
    m1 = _unit_cond_mean(joint, control.s, control.w, given=0)
    m0 = _unit_cond_mean(joint, treated.s, treated.w, given=1)
    X0 = np.column_stack([np.ones(control.n), m1, control.s])
    X1 = np.column_stack([np.ones(treated.n), treated.s, m0])
    beta0 = weighted_ols(X0, control.y, control.weights)
    beta1 = weighted_ols(X1, treated.y, treated.weights)

    def surface(s1, s0):
        diff = beta1 - beta0
        return diff[0] + diff[1] * s1 + diff[2] * s0

    names = ["intercept", "s1", "s0"]
    return ParametricFit("propS1", beta1, beta0, names, names, surface, diagnostics=diag)
