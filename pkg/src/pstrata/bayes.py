"""Gibbs samplers for the identifiability experiments.

Models 1 and 2 (continuous S, constant S0, binary Y)::

    S1 | W ~ N(gamma . (1, W[, W^2]), sigma^2)
    P(Y_z = 1 | S1, W) = Phi(beta_z0 + beta_z1 S1 + beta_z2 W)

sampled by Probit data augmentation with the control units' S1 imputed.
Plain augmentation sticks when |beta_01| is large (imputed S1 and beta_01
pin each other), so each sweep also moves beta_0 by a Metropolis step on the
S1-marginal control likelihood and then redraws the control (Y*, S1) jointly.
Models 3 and 4 (binary S, binary Y, discrete W) put a categorical law on the
principal stratum in each W cell and a Bernoulli outcome per (Z, U); model 3
drops the (0,1) stratum.
"""

from __future__ import annotations

import csv
import logging
import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import NamedTuple, Optional, Union

import numpy as np
from scipy.special import log_ndtr, ndtri_exp

from .core import (
    BadParams,
    Dataset,
    InputError,
    InsufficientChains,
    PrincipalStratum,
    RngStream,
    fmt_float,
    std_normal_cdf,
    write_json,
)

log = logging.getLogger(__name__)

RHAT_FLAG = 1.2
INIT_VAR_CAP = 9.0
STRATA_M3 = ((1, 1), (1, 0), (0, 0))
STRATA_M4 = ((1, 1), (1, 0), (0, 0), (0, 1))


@dataclass(frozen=True)
class PriorSet:
    """Prior hyperparameters.

    ``beta_var``/``gamma_var`` are the diagonal Normal variances of the
    outcome and intermediate regression blocks; ``beta_a`` gives the
    symmetric Beta(a, a) prior on outcome probabilities and ``dirichlet`` the
    common Dirichlet weight on stratum probabilities. Variances of Normal
    errors always get the scale-invariant prior p(s2) proportional to 1/s2.
    """

    name: str
    beta_var: float = 100.0
    gamma_var: float = 100.0
    beta_a: float = 1.0
    dirichlet: float = 1.0
    scale_invariant_sigma2: bool = True

    def __post_init__(self):
        if min(self.beta_var, self.gamma_var, self.beta_a, self.dirichlet) <= 0:
            raise BadParams("prior variances and Beta/Dirichlet weights must be positive")


PRIORS = {
    "A": PriorSet("A", beta_var=100.0, gamma_var=100.0),
    # Only the beta blocks shrink; gamma keeps the diffuse variance.
    "B": PriorSet("B", beta_var=1.0, gamma_var=100.0),
    "beta11": PriorSet("beta11", beta_a=1.0),
    "beta55": PriorSet("beta55", beta_a=0.5),
}


def get_prior(prior: Union[str, PriorSet]) -> PriorSet:
    if isinstance(prior, PriorSet):
        return prior
    try:
        return PRIORS[prior]
    except KeyError:
        raise BadParams(f"unknown prior {prior!r}; choose from {sorted(PRIORS)}") from None


@dataclass
class McmcConfig:
    iterations: int = 20000
    burn_in: int = 4000
    chains: int = 4
    thin: int = 1
    seed: int = 0
    prior: Union[str, PriorSet] = "A"

    def __post_init__(self):
        if self.iterations < 1 or self.burn_in < 0 or self.thin < 1 or self.chains < 1:
            raise BadParams("iterations, chains and thin must be positive; burn_in non-negative")
        if self.burn_in >= self.iterations:
            raise BadParams("burn_in must be smaller than iterations")
        get_prior(self.prior)

    @property
    def prior_set(self) -> PriorSet:
        return get_prior(self.prior)

    @property
    def kept(self) -> int:
        return -(-(self.iterations - self.burn_in) // self.thin)

    def keep_index(self, it: int) -> int:
        """Slot of iteration ``it`` in the stored trace, or -1 if not stored."""
        off = it - self.burn_in
        if off < 0 or off % self.thin:
            return -1
        return off // self.thin

    def to_dict(self) -> dict:
        out = asdict(self)
        out["prior"] = asdict(self.prior_set)
        return out


class Rhat(NamedTuple):
    value: float
    degenerate: bool = False

    def __float__(self):
        return float(self.value)


@dataclass
class PosteriorDraws:
    """Post-burn-in draws: ``params[name]`` has shape (chains, kept)."""

    model: str
    params: dict
    config: McmcConfig
    pce: dict = field(default_factory=dict)  # PrincipalStratum or label -> parameter name
    metadata: dict = field(default_factory=dict)

    @property
    def names(self) -> list:
        return list(self.params)

    @property
    def chains(self) -> int:
        return next(iter(self.params.values())).shape[0]

    @property
    def n_draws(self) -> int:
        return next(iter(self.params.values())).shape[1]

    def pooled(self, name: str) -> np.ndarray:
        return self.params[name].reshape(-1)

    def summary(self, name: str, level: float = 0.95) -> dict:
        x = self.pooled(name)
        a = (1 - level) / 2
        out = {
            "median": float(np.median(x)),
            "lower": float(np.quantile(x, a)),
            "upper": float(np.quantile(x, 1 - a)),
            "mean": float(x.mean()),
            "sd": float(x.std(ddof=1)) if x.size > 1 else 0.0,
        }
        if self.chains >= 2:
            r = gelman_rubin(self, name)
            out["rhat"] = r.value
            out["rhat_degenerate"] = r.degenerate
        return out

    def summary_table(self, level: float = 0.95) -> dict:
        return {name: self.summary(name, level) for name in self.params}

    def interval(self, name: str, level: float = 0.95) -> tuple:
        s = self.summary(name, level)
        return s["lower"], s["upper"]

    def write_traces(self, directory) -> list:
        """One CSV per parameter per chain with columns (chain, iteration, value, burn_in)."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        cfg = self.config
        iters = cfg.burn_in + cfg.thin * np.arange(self.n_draws) + 1
        paths = []
        for name, arr in self.params.items():
            for c in range(arr.shape[0]):
                path = directory / f"{safe_name(name)}_chain{c + 1}.csv"
                with open(path, "w", newline="", encoding="utf-8") as fh:
                    w = csv.writer(fh, lineterminator="\n")
                    w.writerow(["parameter", "chain", "iteration", "value", "burn_in"])
                    for it, v in zip(iters, arr[c]):
                        w.writerow([name, c + 1, int(it), fmt_float(v), cfg.burn_in])
                paths.append(path)
        return paths

    def write_summary(self, path, level: float = 0.95) -> Path:
        payload = {
            "model": self.model,
            "config": self.config.to_dict(),
            "level": level,
            "parameters": self.summary_table(level),
            "pce": {str(k): v for k, v in self.pce.items()},
            "metadata": self.metadata,
        }
        return write_json(path, payload)


def safe_name(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.=-]+", "_", name).strip("_")


def gelman_rubin(draws: PosteriorDraws, parameter: str) -> Rhat:
    """Potential scale reduction factor from the between/within-chain variances.

    Identical constant chains return 1.0 flagged degenerate; a single draw per
    chain returns NaN flagged degenerate.
    """
    x = np.asarray(draws.params[parameter], dtype=float)
    m, n = x.shape
    if m < 2:
        raise InsufficientChains("the Gelman-Rubin statistic needs at least 2 chains", chains=m)
    if n < 2:
        return Rhat(float("nan"), True)
    means = x.mean(axis=1)
    within = x.var(axis=1, ddof=1).mean()
    between = n * means.var(ddof=1)
    if within <= 0:
        return Rhat(1.0, True) if between <= 0 else Rhat(float("inf"), True)
    vhat = (n - 1) / n * within + between / n
    return Rhat(float(math.sqrt(vhat / within)), False)


def _run_chains(cfg: McmcConfig, chain_fn, threads: int = 1) -> list:
    streams = [RngStream(cfg.seed, c).generator() for c in range(cfg.chains)]
    if threads > 1 and cfg.chains > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(chain_fn, streams))
    return [chain_fn(rng) for rng in streams]


def _stack(results: list) -> dict:
    return {k: np.vstack([r[k] for r in results]) for k in results[0]}


def _flag_convergence(draws: PosteriorDraws) -> None:
    if draws.chains < 2 or draws.n_draws < 2:
        return
    bad = {}
    for name in draws.params:
        r = gelman_rubin(draws, name)
        if not r.degenerate and r.value > RHAT_FLAG:
            bad[name] = r.value
    if bad:
        draws.metadata["nonconvergence"] = bad
        log.warning("Gelman-Rubin above %.1f for %s", RHAT_FLAG, ", ".join(sorted(bad)))


def _mvn_draw(rng, Q: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Draw from N(Q^-1 rhs, Q^-1) via the Cholesky factor of the precision."""
    L = np.linalg.cholesky(Q)
    mean = np.linalg.solve(L.T, np.linalg.solve(L, rhs))
    return mean + np.linalg.solve(L.T, rng.standard_normal(Q.shape[0]))


def truncated_utilities(rng, m: np.ndarray, y1: np.ndarray) -> np.ndarray:
    """Y* ~ N(m, 1) truncated to (0, inf) where ``y1`` and (-inf, 0] elsewhere.

    Inverse CDF in log space: with V uniform on (0, Phi(+-m)),
    Y* = m - Phi^-1(V) for y = 1 and m + Phi^-1(V) for y = 0.
    """
    u = 1.0 - rng.random(m.shape[0])  # (0, 1]
    e = ndtri_exp(np.log(u) + log_ndtr(np.where(y1, m, -m)))
    # e is +inf only when u == 1 and Phi(+-m) rounds to 1; clamp to the bound
    return np.where(y1, np.maximum(m - e, 0.0), np.minimum(m + e, 0.0))


def _check12(d: Dataset):
    if d.schema.y_kind != "binary":
        raise InputError("models 1 and 2 need a binary outcome")
    if d.schema.s_kind != "continuous" or d.schema.w_kind != "continuous":
        raise InputError("models 1 and 2 need continuous S and W")
    if d.weights is not None:
        raise InputError("the Gibbs samplers need unit-level (unweighted) data")
    d.require_both_arms()
    s0 = d.s[d.z == 0]
    if np.any(s0 != s0[0]):
        raise InputError("models 1 and 2 assume a constant control intermediate")


def _collapsed_logpost(b0, gc, wc, y1c, sigma2, beta_var) -> float:
    """Control-arm log posterior of beta_0 with S1 integrated out.

    P(Y0 = 1 | W) = Phi((b00 + b01 g(W) + b02 W) / sqrt(1 + b01^2 sigma^2)).
    """
    eta = (b0[0] + b0[1] * gc + b0[2] * wc) / math.sqrt(1.0 + b0[1] ** 2 * sigma2)
    return float(np.sum(log_ndtr(np.where(y1c, eta, -eta)))) - 0.5 * float(b0 @ b0) / beta_var


def _scaled_step(rng, b0, chol, gc, wc, y1c, sigma2, beta_var):
    """Random-walk Metropolis on the scaled coefficients c = b0 / sqrt(1 + b01^2 sigma^2).

    The control likelihood depends on b0 only through c, which lives in a
    bounded, well-conditioned region even where b0 runs off along a ridge.
    The target stays the beta-scale posterior via the Jacobian
    |d b0 / d c| = (1 - c1^2 sigma^2)^(-5/2).
    """
    c_cur = b0 / math.sqrt(1.0 + b0[1] ** 2 * sigma2)
    c_new = c_cur + chol @ rng.standard_normal(3)
    r_new = 1.0 - c_new[1] ** 2 * sigma2
    u = math.log(1.0 - rng.random())
    if r_new <= 0:
        return b0, False
    r_cur = 1.0 - c_cur[1] ** 2 * sigma2
    b_new = c_new / math.sqrt(r_new)
    ratio = (
        _collapsed_logpost(b_new, gc, wc, y1c, sigma2, beta_var)
        - 2.5 * math.log(r_new)
        - _collapsed_logpost(b0, gc, wc, y1c, sigma2, beta_var)
        + 2.5 * math.log(r_cur)
    )
    if u < ratio:
        return b_new, True
    return b0, False


def _collapsed_proposal(G, t, c, s, w) -> np.ndarray:
    """Cholesky factor of the fixed random-walk covariance for the scaled step.

    Built once from the data: a pilot control design (1, g-hat(W), W), with
    g-hat the treated-arm least-squares fit, the Probit information
    approximation 0.64 X'X plus a unit ridge (g-hat is collinear with (1, W)
    in model 1), and the usual 2.38^2 / dim scaling.
    """
    coef = np.linalg.lstsq(G[t], s[t], rcond=None)[0]
    Xp = np.column_stack([np.ones(c.sum()), G[c] @ coef, w[c]])
    cov = (2.38**2 / 3) * np.linalg.inv(0.64 * Xp.T @ Xp + np.eye(3))
    return np.linalg.cholesky(cov)


def default_s1_grid(d: Dataset) -> np.ndarray:
    return np.quantile(d.s[d.z == 1], [0.25, 0.5, 0.75])


def gibbs_model12(
    d: Dataset,
    model: str,
    cfg: McmcConfig,
    s1_grid=None,
    threads: int = 1,
) -> PosteriorDraws:
    """Probit data-augmentation sampler for models 1 (linear g) and 2 (quadratic g).

    One sweep: beta_0 by the scaled-coefficient Metropolis step; control
    Y* from its S1-marginal truncated Normal, then control S1 | Y*; treated
    Y*; conjugate Normal draws of beta_0, beta_1 and gamma; sigma^2 from its
    inverse-Gamma conditional under p(sigma^2) proportional to 1/sigma^2.
    Emits beta_zk, gamma_k, sigma2 and the PCE surface
    tau(s1) = E{Phi(beta_1 . x) - Phi(beta_0 . x) | S1 = s1} at ``s1_grid``
    (default: treated-arm quartiles), averaging over the empirical W law
    reweighted by the current N(g(W), sigma^2) density of s1.
    """
    model = model.upper()
    if model not in ("M1", "M2"):
        raise BadParams("model must be M1 or M2")
    _check12(d)
    prior = cfg.prior_set
    q = 2 if model == "M1" else 3
    z, w, y1 = d.z, d.w, d.y == 1
    n = d.n
    t = z == 1
    c = ~t
    s0_value = float(d.s[c][0])
    G = np.column_stack([w**k for k in range(q)])
    GtG = G.T @ G
    grid = np.asarray(default_s1_grid(d) if s1_grid is None else s1_grid, dtype=float)
    prec_b = np.eye(3) / prior.beta_var
    prec_g = np.eye(q) / prior.gamma_var
    s_treated = d.s[t]
    idx = [np.flatnonzero(c), np.flatnonzero(t)]
    K = cfg.kept
    wc, y1c = w[c], y1[c]
    prop_chol = _collapsed_proposal(G, t, c, d.s, w)

    def chain(rng):
        out = {f"beta{a}{k}": np.empty(K) for a in (0, 1) for k in range(3)}
        out.update({f"gamma{k}": np.empty(K) for k in range(q)})
        out["sigma2"] = np.empty(K)
        for j in range(grid.size):
            out[f"tau[s1={grid[j]:.4g}]"] = np.empty(K)
        # overdispersed start from the priors (variance capped)
        beta = rng.normal(0.0, math.sqrt(min(prior.beta_var, INIT_VAR_CAP)), (2, 3))
        gamma = rng.normal(0.0, math.sqrt(min(prior.gamma_var, INIT_VAR_CAP)), q)
        sigma2 = float(np.var(s_treated) * math.exp(rng.normal()))
        X = np.column_stack([np.ones(n), d.s.astype(float), w])
        X[c, 1] = G[c] @ gamma + math.sqrt(sigma2) * rng.standard_normal(c.sum())
        accepted = 0
        ystar = np.empty(n)
        for it in range(cfg.iterations):
            # control coefficients with (Y*, S1) integrated out
            gc = G[c] @ gamma
            beta[0], ok = _scaled_step(rng, beta[0], prop_chol, gc, wc, y1c, sigma2, prior.beta_var)
            accepted += ok
            # control (Y*, S1) jointly: Y* marginally, then S1 given Y*
            b0 = beta[0]
            v = 1.0 + b0[1] ** 2 * sigma2
            m0 = b0[0] + b0[1] * gc + b0[2] * wc
            ystar[c] = math.sqrt(v) * truncated_utilities(rng, m0 / math.sqrt(v), y1c)
            prec = 1.0 / sigma2 + b0[1] ** 2
            mean = (gc / sigma2 + b0[1] * (ystar[c] - b0[0] - b0[2] * wc)) / prec
            X[c, 1] = mean + rng.standard_normal(mean.size) / math.sqrt(prec)
            # treated utilities
            ystar[t] = truncated_utilities(rng, X[t] @ beta[1], y1[t])
            # outcome coefficients per arm
            for a in (0, 1):
                Xa = X[idx[a]]
                beta[a] = _mvn_draw(rng, prec_b + Xa.T @ Xa, Xa.T @ ystar[idx[a]])
            # intermediate regression and its variance
            s1 = X[:, 1]
            gamma = _mvn_draw(rng, prec_g + GtG / sigma2, G.T @ s1 / sigma2)
            ssr = float(np.sum((s1 - G @ gamma) ** 2))
            sigma2 = 0.5 * ssr / rng.gamma(0.5 * n)
            slot = cfg.keep_index(it)
            if slot < 0:
                continue
            for a in (0, 1):
                for k in range(3):
                    out[f"beta{a}{k}"][slot] = beta[a, k]
            for k in range(q):
                out[f"gamma{k}"][slot] = gamma[k]
            out["sigma2"][slot] = sigma2
            g = G @ gamma
            for j, v in enumerate(grid):
                lw = -0.5 * (v - g) ** 2 / sigma2
                wt = np.exp(lw - lw.max())
                diff = std_normal_cdf(beta[1, 0] + beta[1, 1] * v + beta[1, 2] * w) - std_normal_cdf(
                    beta[0, 0] + beta[0, 1] * v + beta[0, 2] * w
                )
                out[f"tau[s1={v:.4g}]"][slot] = float(wt @ diff / wt.sum())
        out["_accept"] = np.full(K, accepted / cfg.iterations)
        return out

    params = _stack(_run_chains(cfg, chain, threads))
    accept = params.pop("_accept")[:, 0]
    pce = {PrincipalStratum(float(v), s0_value): f"tau[s1={v:.4g}]" for v in grid}
    meta = {"s1_grid": grid.tolist(), "n": n, "collapsed_acceptance": accept.tolist()}
    draws = PosteriorDraws(model, params, cfg, pce, meta)
    _flag_convergence(draws)
    return draws


def _cell_counts(d: Dataset) -> tuple:
    """Counts n[l, z, s, y] over W levels and binary (Z, S, Y)."""
    levels = d.w_levels
    l = d.w_index()
    counts = np.zeros((levels.size, 2, 2, 2), dtype=np.int64)
    np.add.at(counts, (l, d.z, d.s.astype(int), d.y.astype(int)), 1)
    return levels, counts


def gibbs_model34(
    d: Dataset,
    model: str,
    cfg: McmcConfig,
    use_outcome: bool = True,
    threads: int = 1,
) -> PosteriorDraws:
    """Stratum-allocation sampler for models 3 (monotone) and 4 (all four strata).

    Units in the same (W, Z, S, Y) cell share one categorical full
    conditional over their compatible strata, so their labels are drawn
    jointly as a multinomial count (equivalent to per-unit draws).
    ``use_outcome=False`` drops the outcome likelihood, so outcome
    probabilities are drawn from their prior.
    """
    model = model.upper()
    if model not in ("M3", "M4"):
        raise BadParams("model must be M3 or M4")
    if d.schema.y_kind != "binary" or d.schema.s_kind != "discrete" or d.schema.w_kind != "discrete":
        raise InputError("models 3 and 4 need binary S and Y and a discrete W")
    if not set(np.unique(d.s)) <= {0.0, 1.0}:
        raise InputError("models 3 and 4 need S coded 0/1")
    if d.weights is not None:
        raise InputError("the Gibbs samplers need unit-level (unweighted) data")
    d.require_both_arms()
    prior = cfg.prior_set
    strata = STRATA_M3 if model == "M3" else STRATA_M4
    K = len(strata)
    levels, counts = _cell_counts(d)
    L = levels.size
    # flatten nonempty cells and their compatible strata
    cells = [(l, z, s, y, counts[l, z, s, y]) for l in range(L) for z in (0, 1) for s in (0, 1) for y in (0, 1)]
    cells = [cell for cell in cells if cell[4] > 0]
    cl = np.array([cell[0] for cell in cells])
    cz = np.array([cell[1] for cell in cells])
    cy = np.array([cell[3] for cell in cells])
    cn = np.array([cell[4] for cell in cells])
    compat = np.array([[float(u[1 - z] == s) for u in strata] for (_, z, s, _, _) in cells])
    if np.any(compat.sum(axis=1) == 0):
        raise InputError(f"observed (Z, S) cells incompatible with {model}'s strata")
    n_w = counts.sum(axis=(1, 2, 3))
    n_wz = counts.sum(axis=(2, 3))  # (L, 2)
    labels = [f"{a}{b}" for a, b in strata]
    wl = [f"{v:g}" for v in levels]
    n_keep = cfg.kept
    a0 = prior.beta_a

    def chain(rng):
        out = {}
        for l in range(L):
            for k in range(K):
                out[f"pi[w={wl[l]}]_{labels[k]}"] = np.empty(n_keep)
        for zz in (1, 0):
            for k in range(K):
                out[f"delta{zz}_{labels[k]}"] = np.empty(n_keep)
        for k in range(K):
            out[f"tau_{labels[k]}"] = np.empty(n_keep)
        for l in range(L):
            out[f"alpha[w={wl[l]}]"] = np.empty(n_keep)
            out[f"pW[w={wl[l]}]"] = np.empty(n_keep)
        pi = rng.dirichlet(np.full(K, prior.dirichlet), size=L)
        delta = rng.beta(a0, a0, size=(2, K))
        for it in range(cfg.iterations):
            if use_outcome:
                lik = np.where(cy[:, None] == 1, delta[cz], 1.0 - delta[cz])
            else:
                lik = 1.0
            p = pi[cl] * lik * compat
            p /= p.sum(axis=1, keepdims=True)
            alloc = rng.multinomial(cn, p)  # (cells, K)
            N = np.zeros((L, K))
            np.add.at(N, cl, alloc)
            pi = np.vstack([rng.dirichlet(prior.dirichlet + N[l]) for l in range(L)])
            succ = np.zeros((2, K))
            fail = np.zeros((2, K))
            if use_outcome:
                np.add.at(succ, cz[cy == 1], alloc[cy == 1])
                np.add.at(fail, cz[cy == 0], alloc[cy == 0])
            delta = rng.beta(a0 + succ, a0 + fail)
            alpha = rng.beta(1.0 + n_wz[:, 1], 1.0 + n_wz[:, 0])
            p_w = rng.dirichlet(1.0 + n_w)
            slot = cfg.keep_index(it)
            if slot < 0:
                continue
            for l in range(L):
                for k in range(K):
                    out[f"pi[w={wl[l]}]_{labels[k]}"][slot] = pi[l, k]
                out[f"alpha[w={wl[l]}]"][slot] = alpha[l]
                out[f"pW[w={wl[l]}]"][slot] = p_w[l]
            for k in range(K):
                out[f"delta1_{labels[k]}"][slot] = delta[1, k]
                out[f"delta0_{labels[k]}"][slot] = delta[0, k]
                out[f"tau_{labels[k]}"][slot] = delta[1, k] - delta[0, k]
        return out

    params = _stack(_run_chains(cfg, chain, threads))
    pce = {PrincipalStratum(float(a), float(b)): f"tau_{a}{b}" for a, b in strata}
    meta = {"n": d.n, "strata": [list(u) for u in strata], "use_outcome": use_outcome}
    if model == "M4":
        meta["tau_01_note"] = (
            "tau_01 is reported for completeness; it is not well-defined when the data "
            "were generated under monotonicity (no (0,1) stratum)"
        )
    draws = PosteriorDraws(model, params, cfg, pce, meta)
    _flag_convergence(draws)
    return draws


def run_model(d: Dataset, model: Union[int, str], cfg: McmcConfig, threads: int = 1, **kw) -> PosteriorDraws:
    """Dispatch on model 1-4."""
    key = f"M{model}" if isinstance(model, int) or str(model).isdigit() else str(model).upper()
    if key in ("M1", "M2"):
        return gibbs_model12(d, key, cfg, threads=threads, **kw)
    if key in ("M3", "M4"):
        return gibbs_model34(d, key, cfg, threads=threads, **kw)
    raise BadParams(f"unknown model {model!r}")


def prior_median_shift(d: Dataset, model, parameter: str, priors=("A", "B"), cfg: Optional[McmcConfig] = None) -> dict:
    """Posterior medians of ``parameter`` under two priors (same seed) and their absolute difference."""
    cfg = cfg or McmcConfig()
    meds = {}
    for p in priors:
        c = McmcConfig(cfg.iterations, cfg.burn_in, cfg.chains, cfg.thin, cfg.seed, p)
        meds[p] = float(np.median(run_model(d, model, c).pooled(parameter)))
    return {"medians": meds, "shift": abs(meds[priors[0]] - meds[priors[1]])}
