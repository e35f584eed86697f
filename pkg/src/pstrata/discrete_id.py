"""Identification under auxiliary independence for discrete S and W.

The observed arm-z outcome law in each W cell is a mixture, over the missing
potential intermediate, of stratum-specific outcome laws that do not depend
on W. Stacking the cells gives a linear system ``M^T theta = b`` that is
solvable whenever M has full row rank.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .copula import TabularJoint
from .core import (
    Dataset,
    InputError,
    PrincipalStratum,
    RankDeficient,
    ZeroStratumMass,
    cell_mean_y,
    cell_prob_s,
    numerical_rank,
    solve_least_squares,
)

log = logging.getLogger(__name__)

Functional = Union[str, tuple]  # "mean" or ("prob", y)


@dataclass
class MomentSystem:
    """``M[k, l]`` mixes row-stratum k into W column l; ``b[l]`` is the observed cell functional."""

    M: np.ndarray
    b: np.ndarray
    row_labels: list
    col_labels: list
    notes: dict = field(default_factory=dict)

    def __post_init__(self):
        self.M = np.atleast_2d(np.asarray(self.M, dtype=float))
        self.b = np.asarray(self.b, dtype=float)
        if self.b.ndim == 1 and self.b.shape[0] != self.M.shape[1]:
            raise InputError("b must have one entry per column of M")
        colsum = self.M.sum(axis=0)
        if np.any(np.abs(colsum - 1) > 1e-10):
            raise InputError("columns of M must be conditional distributions (sum to 1)")

    @property
    def K(self) -> int:
        return self.M.shape[0]

    @property
    def L(self) -> int:
        return self.M.shape[1]


def _cell_functional(d: Dataset, z: int, functional: Functional, s_value=None) -> np.ndarray:
    if functional == "mean":
        return cell_mean_y(d, z, s_value)
    kind, yv = functional
    if kind != "prob":
        raise InputError(f"unknown outcome functional {functional!r}")
    shifted = d.subset(np.arange(d.n))
    shifted.y = (d.y == float(yv)).astype(float)
    return cell_mean_y(shifted, z, s_value)


def build_system_constant_s0(d: Dataset, outcome_functional: Functional = "mean") -> MomentSystem:
    """System for E(Y0 | S1 = s_k) when S0 is constant.

    ``M[k, l] = P(S = s_k | Z=1, W=w_l)`` and ``b[l] = E(Y | Z=0, W=w_l)`` (or
    ``P(Y = y | Z=0, W=w_l)`` for ``("prob", y)``).
    """
    if d.schema.s_kind != "discrete" or d.schema.w_kind != "discrete":
        raise InputError("the discrete system needs discrete S and W")
    notes = {}
    if d.schema.s0_constant is None:
        distinct = np.unique(d.s[d.z == 0])
        if distinct.size > 1:
            notes["warning"] = "control-arm S is not constant; the constant-S0 assumption is not declared"
            log.warning(notes["warning"])
    M = cell_prob_s(d, 1)
    b = _cell_functional(d, 0, outcome_functional)
    return MomentSystem(M, b, [float(v) for v in d.s_levels], [float(v) for v in d.w_levels], notes)


def rank_diagnostic(sys: MomentSystem) -> dict:
    """Numerical rank of M (tolerance 1e-8 relative); identifiable iff rank equals K."""
    rank, cond, sv = numerical_rank(sys.M)
    return {
        "rank": rank,
        "K": sys.K,
        "L": sys.L,
        "condition": cond,
        "min_singular_value": float(sv[-1]) if sv.size else 0.0,
        "identifiable": bool(rank == sys.K),
    }


def solve_system(sys: MomentSystem) -> dict:
    """Least-squares solution of ``M^T theta = b``; exact when K = L.

    Returns ``{row label: theta_k}``.
    """
    diag = rank_diagnostic(sys)
    if not diag["identifiable"]:
        raise RankDeficient(
            f"rank(M) = {diag['rank']} < K = {sys.K}; W must have at least as many informative levels as S",
            **diag,
        )
    theta = solve_least_squares(sys.M.T, sys.b)
    return dict(zip(sys.row_labels, theta))


def example5_closed_form(theta: np.ndarray, delta: np.ndarray) -> tuple[float, float]:
    """Binary S and W closed form.

    ``theta[s, w] = P(S1 = s | W = w)`` and ``delta[w] = E(Y0 | W = w)``;
    returns ``(E(Y0 | S1=1), E(Y0 | S1=0))``. The second entry is
    ``(delta0 theta11 - delta1 theta10) / det``; the commonly printed companion
    with numerator ``delta1 theta10 - delta0 theta11`` has the wrong sign.
    """
    th11, th10, th01, th00 = theta[1, 1], theta[1, 0], theta[0, 1], theta[0, 0]
    det = th11 * th00 - th10 * th01
    if det == 0:
        raise RankDeficient("S is independent of W in the treated arm", det=0.0)
    e1 = (delta[1] * th00 - delta[0] * th01) / det
    e0 = (delta[0] * th11 - delta[1] * th10) / det
    return float(e1), float(e0)


def _solve_law(M_rows: np.ndarray, d: Dataset, arm: int, s_obs, y_levels, binary: bool, context: str):
    """Solve one fixed-s system for every outcome functional needed."""
    rank, cond, sv = numerical_rank(M_rows)
    if rank < M_rows.shape[0]:
        raise RankDeficient(
            f"{context}: rank {rank} < {M_rows.shape[0]}",
            s_value=float(s_obs),
            rank=rank,
            K=int(M_rows.shape[0]),
            condition=cond,
        )
    if not binary:
        b = cell_mean_y(d, arm, s_obs)
        return {"mean": solve_least_squares(M_rows.T, b)}, {}
    laws = []
    for yv in y_levels:
        b = _cell_functional(d, arm, ("prob", yv), s_obs)
        laws.append(solve_least_squares(M_rows.T, b))
    raw = np.array(laws)  # (levels, strata)
    clipped = np.clip(raw, 0.0, 1.0)
    tot = clipped.sum(axis=0)
    law = clipped / np.where(tot > 0, tot, 1.0)
    log_entry = {}
    if np.any(raw != clipped):
        log_entry = {"pre_clip": raw.tolist()}
        log.info("%s: recovered probabilities clipped to [0, 1]", context)
    return {"law": law, "mean": (np.asarray(y_levels)[:, None] * law).sum(axis=0)}, log_entry


def build_and_solve_general(d: Dataset, joint: TabularJoint, arm: int) -> dict:
    """Recover the arm-``arm`` outcome law in every stratum with positive mass.

    For arm 0 and each observed s0, the control units with S = s0 form a
    mixture over S1 with weights ``P(S1 | S0 = s0, w)`` (system ``M_{s0}``);
    symmetrically for arm 1. Returns
    ``{PrincipalStratum: {"mean": E(Y_arm | U), "law": ..., ...}}``.
    """
    if arm not in (0, 1):
        raise InputError("arm must be 0 or 1")
    if not isinstance(joint, TabularJoint):
        raise InputError("the discrete solver needs a tabular joint")
    if d.schema.s_kind != "discrete" or d.schema.w_kind != "discrete":
        raise InputError("the discrete solver needs discrete S and W")
    if not np.array_equal(joint.w_levels, d.w_levels):
        raise InputError("joint and dataset disagree on W levels")
    binary = d.schema.y_kind == "binary"
    y_levels = [0.0, 1.0] if binary else None
    levels = joint.s_levels
    out: dict = {}
    for s_obs in levels:
        # mixing matrix over the missing potential intermediate
        M = joint.cond_s1_given_s0(s_obs) if arm == 0 else joint.cond_s0_given_s1(s_obs)
        observed_mass = (joint.marginal_s0() if arm == 0 else joint.marginal_s1())[levels == s_obs][0]
        if np.all(observed_mass <= 0):
            continue
        keep = M.max(axis=1) > 0
        if not np.any(keep):
            raise ZeroStratumMass(f"no strata compatible with S={s_obs} in arm {arm}")
        rows = M[keep]
        cols = observed_mass > 0
        context = f"arm {arm}, S={s_obs:g}"
        sub = d.subset(np.isin(d.w, joint.w_levels[cols])).with_schema(w_levels=tuple(joint.w_levels[cols]))
        res, clip_log = _solve_law(rows[:, cols], sub, arm, s_obs, y_levels, binary, context)
        for j, k in enumerate(np.flatnonzero(keep)):
            other = float(levels[k])
            stratum = PrincipalStratum(other, float(s_obs)) if arm == 0 else PrincipalStratum(float(s_obs), other)
            entry = {"mean": float(res["mean"][j])}
            if binary:
                entry["law"] = {float(yv): float(res["law"][i, j]) for i, yv in enumerate(y_levels)}
            if clip_log:
                entry["pre_clip"] = [row[j] for row in clip_log["pre_clip"]]
            out[stratum] = entry
    return out


def pce_from_laws(arm1: dict, arm0: dict) -> dict:
    """tau_u = E(Y1 | U=u) - E(Y0 | U=u) for strata recovered in both arms."""
    return {u: arm1[u]["mean"] - arm0[u]["mean"] for u in arm1 if u in arm0}


def build_systems_general(d: Dataset, joint: TabularJoint, arm: int) -> list[MomentSystem]:
    """The per-s systems of :func:`build_and_solve_general`, for diagnostics."""
    levels = joint.s_levels
    systems = []
    for s_obs in levels:
        M = joint.cond_s1_given_s0(s_obs) if arm == 0 else joint.cond_s0_given_s1(s_obs)
        keep = M.max(axis=1) > 0
        cols = M.sum(axis=0) > 0
        if not np.any(keep) or not np.any(cols):
            continue
        rows = M[keep][:, cols]
        systems.append(
            MomentSystem(
                rows,
                np.zeros(rows.shape[1]),
                [float(v) for v in levels[keep]],
                [float(v) for v in joint.w_levels[cols]],
                {"arm": arm, "s": float(s_obs)},
            )
        )
    return systems
