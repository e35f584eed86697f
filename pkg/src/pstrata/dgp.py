"""Synthetic data generators with known principal causal effects.

DGP1/DGP2: constant control intermediate (S0 = 0), Normal S1 given a Normal W,
Probit potential outcomes. DGP3/DGP4: binary S, binary W, Bernoulli outcomes
given (Z, U). JOBS_LIKE: seven-level W, bivariate Normal (S1, S0) given W,
linear potential outcomes.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import BadParams, Dataset, PrincipalStratum, Schema, rng_stream, std_normal_cdf

STRATA4 = ((1, 1), (1, 0), (0, 0), (0, 1))

DEFAULTS: dict[str, dict] = {
    "DGP1": {
        "beta0": [1.0, -0.5, 0.5],
        "beta1": [0.5, 1.0, 1.5],
        "gamma": [1.0, 0.5],
        "sigma": 1.0,
        "p_treat": 0.5,
    },
    "DGP2": {
        "beta0": [1.0, -0.5, 0.5],
        "beta1": [0.5, 1.0, 1.5],
        "gamma": [1.0, 0.5, 1.0],
        "sigma": 1.0,
        "p_treat": 0.5,
    },
    "DGP3": {
        "w_levels": [1.0, 2.0],
        "w_prob": [0.5, 0.5],
        "alpha": [0.5, 0.5],
        "strata": [[1, 1], [1, 0], [0, 0]],
        "pi": [[0.5, 0.3, 0.2], [0.2, 0.3, 0.5]],
        "delta": {"1": [0.8, 0.7, 0.6], "0": [0.5, 0.3, 0.1]},
    },
    "DGP4": {
        "w_levels": [1.0, 2.0],
        "w_prob": [0.5, 0.5],
        "alpha": [0.5, 0.5],
        "strata": [[1, 1], [1, 0], [0, 0], [0, 1]],
        "pi": [[0.5, 0.3, 0.1, 0.1], [0.1, 0.3, 0.5, 0.1]],
        "delta": {"1": [0.8, 0.7, 0.6, 0.2], "0": [0.5, 0.3, 0.1, 0.5]},
    },
    # Design-time constants; the real job-search data are not distributed.
    "JOBS_LIKE": {
        "w_prob": [0.10, 0.15, 0.20, 0.15, 0.15, 0.15, 0.10],
        "mu1": [2.4, 3.0, 3.6, 4.0, 4.4, 4.8, 5.2],
        "mu0": [4.2, 3.0, 4.4, 2.6, 3.8, 3.2, 2.4],
        "sigma1": [0.60, 0.70, 0.65, 0.60, 0.70, 0.55, 0.60],
        "sigma0": [0.80, 0.75, 0.70, 0.85, 0.70, 0.80, 0.75],
        "beta1": [2.0, -0.3, 0.2],
        "beta0": [1.9, 0.2, -0.3],
        "sigma_y": [0.3, 0.3],
        "p_treat": 0.5,
        "rho": 0.4,
        "covariates": 0,
        "gamma1_x": 0.3,
        "gamma0_x": -0.2,
        "beta1_x": 0.25,
        "beta0_x": 0.1,
    },
}


@dataclass
class DgpSpec:
    id: str
    n: int
    params: dict = field(default_factory=dict)
    seed: int = 0

    def resolved_params(self) -> dict:
        if self.id not in DEFAULTS:
            raise BadParams(f"unknown DGP {self.id!r}")
        out = copy.deepcopy(DEFAULTS[self.id])
        for key, value in self.params.items():
            if key not in out:
                raise BadParams(f"unknown parameter {key!r} for {self.id}")
            out[key] = value
        return out


@dataclass
class SimulatedData:
    dataset: Dataset
    truth: dict
    latent: dict  # oracle-only columns (s1, s0); never part of the observed data


def _check_prob_rows(rows, name, tol=1e-12):
    arr = np.asarray(rows, dtype=float)
    if np.any(arr < 0) or np.any(arr > 1):
        raise BadParams(f"{name}: probabilities must lie in [0, 1]")
    sums = arr.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > tol):
        raise BadParams(f"{name}: rows must sum to 1 (got {sums.tolist()})")
    return arr


def _check_unit_interval(values, name):
    arr = np.asarray(values, dtype=float)
    if np.any(arr <= 0) or np.any(arr >= 1):
        raise BadParams(f"{name}: values must lie in (0, 1)")
    return arr


def generate(spec: DgpSpec) -> SimulatedData:
    """Draw ``spec.n`` units from the named design.

    Returns the observed dataset, the truth (PCE table for discrete designs,
    coefficient vectors otherwise) and the latent potential intermediates.
    """
    if spec.n < 1:
        raise BadParams("n must be at least 1")
    p = spec.resolved_params()
    if spec.id in ("DGP1", "DGP2"):
        return _generate_probit(spec, p)
    if spec.id in ("DGP3", "DGP4"):
        return _generate_discrete(spec, p)
    return generate_jobs_like(spec.n, p["rho"], spec.seed, **{k: v for k, v in p.items() if k != "rho"})


def _generate_probit(spec: DgpSpec, p: dict) -> SimulatedData:
    gamma = np.asarray(p["gamma"], dtype=float)
    expected = 2 if spec.id == "DGP1" else 3
    if gamma.size != expected:
        raise BadParams(f"{spec.id} needs {expected} gamma coefficients")
    if p["sigma"] <= 0:
        raise BadParams("sigma must be positive")
    p_treat = float(_check_unit_interval(p["p_treat"], "p_treat"))
    beta0 = np.asarray(p["beta0"], dtype=float)
    beta1 = np.asarray(p["beta1"], dtype=float)
    rng = rng_stream(spec.seed, 0)
    n = spec.n
    z = (rng.random(n) < p_treat).astype(np.int64)
    w = rng.standard_normal(n)
    g = sum(gamma[k] * w**k for k in range(gamma.size))
    s1 = g + p["sigma"] * rng.standard_normal(n)
    s0 = np.zeros(n)
    u = rng.random(n)
    y1 = (u < std_normal_cdf(beta1[0] + beta1[1] * s1 + beta1[2] * w)).astype(float)
    y0 = (u < std_normal_cdf(beta0[0] + beta0[1] * s1 + beta0[2] * w)).astype(float)
    y = np.where(z == 1, y1, y0)
    s = np.where(z == 1, s1, s0)
    schema = Schema(s_kind="continuous", w_kind="continuous", y_kind="binary", s0_constant=0.0)
    truth = {
        "dgp": spec.id,
        "beta0": beta0.tolist(),
        "beta1": beta1.tolist(),
        "gamma": gamma.tolist(),
        "sigma": float(p["sigma"]),
        "pce": "surface: Phi(beta1 . (1, s1, w)) - Phi(beta0 . (1, s1, w)) averaged over W | S1 = s1",
    }
    return SimulatedData(Dataset(z=z, s=s, y=y, w=w, schema=schema), truth, {"s1": s1, "s0": s0})


def _discrete_params(p: dict):
    strata = [tuple(int(v) for v in u) for u in p["strata"]]
    if len(set(strata)) != len(strata) or not set(strata) <= set(STRATA4):
        raise BadParams("strata must be distinct binary pairs")
    pi = _check_prob_rows(p["pi"], "pi")
    w_prob = _check_prob_rows(p["w_prob"], "w_prob")
    alpha = _check_unit_interval(p["alpha"], "alpha")
    delta1 = np.asarray(p["delta"]["1"], dtype=float)
    delta0 = np.asarray(p["delta"]["0"], dtype=float)
    for name, arr in (("delta[1]", delta1), ("delta[0]", delta0)):
        if np.any(arr < 0) or np.any(arr > 1):
            raise BadParams(f"{name}: probabilities must lie in [0, 1]")
    L = len(p["w_levels"])
    if pi.shape != (L, len(strata)) or w_prob.shape != (L,) or alpha.shape != (L,):
        raise BadParams("probability tables do not match the number of strata / W levels")
    if delta1.shape != (len(strata),) or delta0.shape != (len(strata),):
        raise BadParams("delta rows must have one entry per stratum")
    return strata, pi, w_prob, alpha, delta1, delta0


def discrete_truth(spec_id: str, p: dict) -> dict:
    strata, _, _, _, delta1, delta0 = _discrete_params(p)
    return {
        "dgp": spec_id,
        "pce": {f"{a},{b}": float(round(d1 - d0, 15)) for (a, b), d1, d0 in zip(strata, delta1, delta0)},
        "strata": [list(u) for u in strata],
    }


def _generate_discrete(spec: DgpSpec, p: dict) -> SimulatedData:
    strata, pi, w_prob, alpha, delta1, delta0 = _discrete_params(p)
    levels = np.asarray(p["w_levels"], dtype=float)
    rng = rng_stream(spec.seed, 0)
    n = spec.n
    widx = np.searchsorted(np.cumsum(w_prob), rng.random(n), side="right").clip(0, len(levels) - 1)
    z = (rng.random(n) < alpha[widx]).astype(np.int64)
    cum = np.cumsum(pi, axis=1)
    uidx = (rng.random(n)[:, None] >= cum[widx]).sum(axis=1).clip(0, len(strata) - 1)
    su = np.asarray(strata, dtype=float)
    s1, s0 = su[uidx, 0], su[uidx, 1]
    py = np.where(z == 1, delta1[uidx], delta0[uidx])
    y = (rng.random(n) < py).astype(float)
    s = np.where(z == 1, s1, s0)
    schema = Schema(
        s_kind="discrete", w_kind="discrete", y_kind="binary", s_levels=(0.0, 1.0), w_levels=tuple(levels)
    )
    ds = Dataset(z=z, s=s, y=y, w=levels[widx], schema=schema)
    return SimulatedData(ds, discrete_truth(spec.id, p), {"s1": s1, "s0": s0})


def population(spec_id: str, params: Optional[dict] = None) -> Dataset:
    """Exact observed-data law of DGP3/DGP4 as a weighted dataset.

    One row per (z, s, y, w) cell with probability weights; estimators fed
    this dataset compute population-level quantities.
    """
    p = DgpSpec(spec_id, 1, params or {}).resolved_params()
    if spec_id not in ("DGP3", "DGP4"):
        raise BadParams("population tables exist for DGP3 and DGP4 only")
    strata, pi, w_prob, alpha, delta1, delta0 = _discrete_params(p)
    levels = np.asarray(p["w_levels"], dtype=float)
    rows = {}
    for l, wv in enumerate(levels):
        for z in (0, 1):
            pz = alpha[l] if z == 1 else 1 - alpha[l]
            delta = delta1 if z == 1 else delta0
            for k, u in enumerate(strata):
                s = u[0] if z == 1 else u[1]
                for y in (0, 1):
                    py = delta[k] if y == 1 else 1 - delta[k]
                    key = (z, s, y, wv)
                    rows[key] = rows.get(key, 0.0) + w_prob[l] * pz * pi[l, k] * py
    keys = sorted(rows)
    schema = Schema(
        s_kind="discrete",
        w_kind="discrete",
        y_kind="binary",
        s_levels=(0.0, 1.0),
        w_levels=tuple(levels),
        population=True,
    )
    return Dataset(
        z=[k[0] for k in keys],
        s=[k[1] for k in keys],
        y=[k[2] for k in keys],
        w=[k[3] for k in keys],
        weights=[rows[k] for k in keys],
        schema=schema,
    )


def generate_jobs_like(n: int, rho_true: float, seed: int, **overrides) -> SimulatedData:
    """Job-search-like design: seven occupations, bivariate Normal strata.

    ``Y_z = b_z0 + b_z1 S1 + b_z2 S0 [+ b_zx . X] + N(0, sigma_y[z]^2)``.
    """
    if n < 1:
        raise BadParams("n must be at least 1")
    if not -1 < rho_true < 1:
        raise BadParams("rho_true must lie in (-1, 1)")
    p = copy.deepcopy(DEFAULTS["JOBS_LIKE"])
    for key, value in overrides.items():
        if key not in p:
            raise BadParams(f"unknown parameter {key!r} for JOBS_LIKE")
        p[key] = value
    w_prob = _check_prob_rows(p["w_prob"], "w_prob")
    L = w_prob.size
    mu1, mu0 = np.asarray(p["mu1"], float), np.asarray(p["mu0"], float)
    sd1, sd0 = np.asarray(p["sigma1"], float), np.asarray(p["sigma0"], float)
    if not (mu1.size == mu0.size == sd1.size == sd0.size == L):
        raise BadParams("per-occupation parameter lengths differ")
    if np.any(sd1 <= 0) or np.any(sd0 <= 0) or np.any(np.asarray(p["sigma_y"]) <= 0):
        raise BadParams("standard deviations must be positive")
    p_treat = float(_check_unit_interval(p["p_treat"], "p_treat"))
    b1, b0 = np.asarray(p["beta1"], float), np.asarray(p["beta0"], float)
    q = int(p["covariates"])

    rng = rng_stream(seed, 0)
    widx = np.searchsorted(np.cumsum(w_prob), rng.random(n), side="right").clip(0, L - 1)
    z = (rng.random(n) < p_treat).astype(np.int64)
    x = rng.standard_normal((n, q))
    e1 = rng.standard_normal(n)
    e0 = rho_true * e1 + np.sqrt(1 - rho_true**2) * rng.standard_normal(n)
    xs1 = p["gamma1_x"] * x.sum(axis=1)
    xs0 = p["gamma0_x"] * x.sum(axis=1)
    s1 = mu1[widx] + xs1 + sd1[widx] * e1
    s0 = mu0[widx] + xs0 + sd0[widx] * e0
    y1 = b1[0] + b1[1] * s1 + b1[2] * s0 + p["beta1_x"] * x.sum(axis=1) + p["sigma_y"][0] * rng.standard_normal(n)
    y0 = b0[0] + b0[1] * s1 + b0[2] * s0 + p["beta0_x"] * x.sum(axis=1) + p["sigma_y"][1] * rng.standard_normal(n)
    levels = tuple(float(l + 1) for l in range(L))
    schema = Schema(s_kind="continuous", w_kind="discrete", y_kind="continuous", w_levels=levels)
    ds = Dataset(
        z=z,
        s=np.where(z == 1, s1, s0),
        y=np.where(z == 1, y1, y0),
        w=np.asarray(levels)[widx],
        x=x if q else None,
        schema=schema,
    )
    truth = {
        "dgp": "JOBS_LIKE",
        "rho": float(rho_true),
        "beta1": b1.tolist(),
        "beta0": b0.tolist(),
        "sigma_y": list(map(float, p["sigma_y"])),
        "mu1": mu1.tolist(),
        "mu0": mu0.tolist(),
        "sigma1": sd1.tolist(),
        "sigma0": sd0.tolist(),
        "covariates": q,
        "beta_x": [float(p["beta1_x"]), float(p["beta0_x"])] if q else [],
        "pce": "(beta1[0]-beta0[0]) + (beta1[1]-beta0[1]) s1 + (beta1[2]-beta0[2]) s0",
    }
    return SimulatedData(ds, truth, {"s1": s1, "s0": s0})


def jobs_like_pce(truth: dict, stratum: PrincipalStratum) -> float:
    b1, b0 = truth["beta1"], truth["beta0"]
    return (b1[0] - b0[0]) + (b1[1] - b0[1]) * stratum.s1 + (b1[2] - b0[2]) * stratum.s0
