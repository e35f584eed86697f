"""Data model, seeded randomness and small numeric helpers shared by every estimator."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterator, NamedTuple, Optional, Sequence

import numpy as np
from scipy import special

RANK_RTOL = 1e-8
PROB_CLIP = 1e-12


# ---------------------------------------------------------------------------
# Errors. Each carries the CLI exit code it maps to.


class PStrataError(Exception):
    exit_code = 1
    condition = "error"

    def __init__(self, message: str = "", **margin: Any):
        super().__init__(message)
        self.margin = margin


class InputError(PStrataError, ValueError):
    """Malformed input: bad parameters, empty cells, schema violations."""

    exit_code = 2
    condition = "input"


class BadParams(InputError):
    condition = "bad-params"


class EmptyCell(InputError):
    condition = "empty-cell"


class DegenerateCell(InputError):
    condition = "degenerate-cell"


class InsufficientChains(InputError):
    condition = "insufficient-chains"


class IdentificationError(PStrataError):
    """An identifiability diagnostic failed; no estimate is produced."""

    exit_code = 3
    condition = "identification"


class RankDeficient(IdentificationError):
    condition = "rank"


class LinearDependence(IdentificationError):
    condition = "linear-independence"


class ConstantRatio(IdentificationError):
    condition = "constant-ratio"


class ConstantConditionalMean(IdentificationError):
    condition = "constant-conditional-mean"


class MonotonicityViolated(IdentificationError):
    condition = "monotonicity"


class ZeroStratumMass(IdentificationError):
    condition = "stratum-mass"


class JointNotIdentified(IdentificationError):
    condition = "joint-not-identified"


class NumericalError(PStrataError, ArithmeticError):
    exit_code = 4
    condition = "numerical"


class NonConvergence(NumericalError):
    condition = "non-convergence"


class EstimatorFailure(NumericalError):
    condition = "estimator-failure"


# ---------------------------------------------------------------------------
# Value types


class ObservedUnit(NamedTuple):
    z: int
    s: float
    y: float
    w: float
    x: tuple = ()


class PrincipalStratum(NamedTuple):
    s1: float
    s0: float

    def label(self) -> str:
        return f"{_fmt_level(self.s1)},{_fmt_level(self.s0)}"


def _fmt_level(v: float) -> str:
    v = float(v)
    return str(int(v)) if v.is_integer() else repr(v)


@dataclass
class PceEstimate:
    """Point estimate of a principal causal effect plus provenance."""

    stratum: PrincipalStratum
    point: float
    interval: Optional[tuple[float, float]] = None
    level: Optional[float] = None
    method: str = ""
    seed: Optional[int] = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.interval is not None:
            lo, hi = self.interval
            if lo > hi:
                raise ValueError("interval lower bound exceeds upper bound")
            if not lo <= self.point <= hi:
                self.diagnostics["point_outside_interval"] = True

    def to_dict(self) -> dict:
        return {
            "stratum": {"s1": float(self.stratum.s1), "s0": float(self.stratum.s0)},
            "point": float(self.point),
            "interval": None if self.interval is None else [float(v) for v in self.interval],
            "level": self.level,
            "method": self.method,
            "seed": self.seed,
            "diagnostics": _jsonable(self.diagnostics),
        }


@dataclass(frozen=True)
class RngStream:
    """A (seed, stream id) pair naming an independent random stream.

    Streams with distinct ids are statistically independent; the same pair
    always yields the same draws regardless of how work is scheduled.
    """

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.seed) & (2**64 - 1), spawn_key=(int(self.stream_id),))
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, stream_id: int) -> "RngStream":
        # Children live in a disjoint id range from their parent.
        return RngStream(self.seed, (self.stream_id + 1) * 1_000_003 + stream_id)


def rng_stream(seed: int, stream_id: int = 0) -> np.random.Generator:
    return RngStream(seed, stream_id).generator()


# ---------------------------------------------------------------------------
# Dataset


@dataclass(frozen=True)
class Schema:
    """Types of S, W, Y.

    ``population=True`` marks a dataset whose rows are cells of an exact
    distribution (``weights`` are probabilities); statistical tests are then
    replaced by exact numerical checks.
    """

    s_kind: str = "continuous"
    w_kind: str = "discrete"
    y_kind: str = "continuous"
    s_levels: Optional[tuple] = None
    w_levels: Optional[tuple] = None
    s0_constant: Optional[float] = None
    population: bool = False

    def __post_init__(self):
        for name, kind, allowed in (
            ("s_kind", self.s_kind, ("discrete", "continuous")),
            ("w_kind", self.w_kind, ("discrete", "continuous")),
            ("y_kind", self.y_kind, ("binary", "continuous")),
        ):
            if kind not in allowed:
                raise InputError(f"{name} must be one of {allowed}, got {kind!r}")

    def to_dict(self) -> dict:
        return {
            "s_kind": self.s_kind,
            "w_kind": self.w_kind,
            "y_kind": self.y_kind,
            "s_levels": None if self.s_levels is None else list(self.s_levels),
            "w_levels": None if self.w_levels is None else list(self.w_levels),
            "s0_constant": self.s0_constant,
            "population": self.population,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Schema":
        d = dict(d)
        for key in ("s_levels", "w_levels"):
            if d.get(key) is not None:
                d[key] = tuple(float(v) for v in d[key])
        return cls(**d)


@dataclass
class Dataset:
    """Columnar container of observed units.

    ``weights`` are frequency weights (``None`` means all ones).
    """

    z: np.ndarray
    s: np.ndarray
    y: np.ndarray
    w: np.ndarray
    schema: Schema
    x: Optional[np.ndarray] = None
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=np.int64)
        self.s = np.asarray(self.s, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        self.w = np.asarray(self.w, dtype=float)
        n = self.z.shape[0]
        if self.x is None:
            self.x = np.empty((n, 0))
        self.x = np.asarray(self.x, dtype=float).reshape(n, -1)
        if self.weights is not None:
            self.weights = np.asarray(self.weights, dtype=float)
        self.validate()

    # -- invariants -------------------------------------------------------
    def validate(self) -> None:
        n = self.n
        for name in ("s", "y", "w"):
            if getattr(self, name).shape != (n,):
                raise InputError(f"column {name} has wrong length")
        if not np.all((self.z == 0) | (self.z == 1)):
            raise InputError("z must be 0 or 1")
        if not np.all(np.isfinite(self.y)):
            raise InputError("y must be finite")
        if self.schema.y_kind == "binary" and not np.all((self.y == 0) | (self.y == 1)):
            raise InputError("binary outcome must be exactly 0 or 1")
        if self.schema.s_kind == "discrete" and self.schema.s_levels is not None:
            if not np.all(np.isin(self.s, self.schema.s_levels)):
                raise InputError("s outside declared category set")
        if self.schema.w_kind == "discrete" and self.schema.w_levels is not None:
            if not np.all(np.isin(self.w, self.schema.w_levels)):
                raise InputError("w outside declared category set")
        if self.weights is not None:
            if self.weights.shape != (n,) or np.any(self.weights < 0):
                raise InputError("weights must be a non-negative vector of length n")

    def require_both_arms(self) -> None:
        wt = self.unit_weights
        if wt[self.z == 1].sum() <= 0 or wt[self.z == 0].sum() <= 0:
            raise EmptyCell("both treatment arms must be non-empty")

    # -- basic views ------------------------------------------------------
    @property
    def n(self) -> int:
        return int(self.z.shape[0])

    @property
    def p(self) -> int:
        return int(self.x.shape[1])

    @property
    def unit_weights(self) -> np.ndarray:
        return np.ones(self.n) if self.weights is None else self.weights

    @property
    def s_levels(self) -> np.ndarray:
        if self.schema.s_levels is not None:
            return np.asarray(self.schema.s_levels, dtype=float)
        return np.unique(self.s)

    @property
    def w_levels(self) -> np.ndarray:
        if self.schema.w_levels is not None:
            return np.asarray(self.schema.w_levels, dtype=float)
        return np.unique(self.w)

    def w_index(self) -> np.ndarray:
        """Cell index of every unit's W (discrete W only)."""
        levels = self.w_levels
        idx = np.searchsorted(levels, self.w)
        idx = np.clip(idx, 0, len(levels) - 1)
        if not np.all(levels[idx] == self.w):
            raise InputError("w value not among declared levels")
        return idx

    def subset(self, mask_or_index) -> "Dataset":
        sel = np.asarray(mask_or_index)
        return Dataset(
            z=self.z[sel],
            s=self.s[sel],
            y=self.y[sel],
            w=self.w[sel],
            x=self.x[sel],
            weights=None if self.weights is None else self.weights[sel],
            schema=self.schema,
        )

    def arm(self, z: int) -> "Dataset":
        return self.subset(self.z == z)

    def units(self) -> Iterator[ObservedUnit]:
        for i in range(self.n):
            yield ObservedUnit(int(self.z[i]), float(self.s[i]), float(self.y[i]), float(self.w[i]), tuple(self.x[i]))

    @classmethod
    def from_units(cls, units: Sequence[ObservedUnit], schema: Schema, weights=None) -> "Dataset":
        units = list(units)
        p = len(units[0].x) if units else 0
        return cls(
            z=[u.z for u in units],
            s=[u.s for u in units],
            y=[u.y for u in units],
            w=[u.w for u in units],
            x=np.array([u.x for u in units], dtype=float).reshape(len(units), p),
            weights=weights,
            schema=schema,
        )

    def with_schema(self, **changes) -> "Dataset":
        return replace(self, schema=replace(self.schema, **changes))

    # -- I/O --------------------------------------------------------------
    def to_csv(self, path, schema_path=None) -> list[Path]:
        path = Path(path)
        header = ["z", "s", "y", "w"] + [f"x{j + 1}" for j in range(self.p)]
        if self.weights is not None:
            header.append("weight")
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for i in range(self.n):
                row = [str(int(self.z[i])), fmt_float(self.s[i]), fmt_float(self.y[i]), fmt_float(self.w[i])]
                row += [fmt_float(v) for v in self.x[i]]
                if self.weights is not None:
                    row.append(fmt_float(self.weights[i]))
                writer.writerow(row)
        schema_path = Path(schema_path) if schema_path else schema_path_for(path)
        write_json(schema_path, self.schema.to_dict())
        return [path, schema_path]

    @classmethod
    def from_csv(cls, path, schema_path=None) -> "Dataset":
        path = Path(path)
        schema_path = Path(schema_path) if schema_path else schema_path_for(path)
        if not path.exists():
            raise InputError(f"dataset not found: {path}")
        if not schema_path.exists():
            raise InputError(f"schema sidecar not found: {schema_path}")
        schema = Schema.from_dict(json.loads(schema_path.read_text(encoding="utf-8")))
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = [r for r in reader if r]
        if header[:4] != ["z", "s", "y", "w"]:
            raise InputError("dataset header must start with z,s,y,w")
        data = np.array(rows, dtype=float).reshape(len(rows), len(header))
        xcols = [j for j, h in enumerate(header) if h.startswith("x")]
        weights = data[:, header.index("weight")] if "weight" in header else None
        return cls(
            z=data[:, 0].astype(np.int64),
            s=data[:, 1],
            y=data[:, 2],
            w=data[:, 3],
            x=data[:, xcols] if xcols else None,
            weights=weights,
            schema=schema,
        )


def schema_path_for(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".schema.json")


# ---------------------------------------------------------------------------
# Weighted cell summaries


def weighted_mean(values: np.ndarray, weights: Optional[np.ndarray] = None) -> float:
    values = np.asarray(values, dtype=float)
    if weights is None:
        return float(values.mean())
    total = weights.sum()
    if total <= 0:
        raise EmptyCell("zero total weight")
    return float(np.dot(weights, values) / total)


def cell_prob_s(d: Dataset, z: int) -> np.ndarray:
    """Matrix P(S = s_k | Z = z, W = w_l) with shape (K, L); discrete S and W."""
    s_levels, w_levels = d.s_levels, d.w_levels
    widx = d.w_index()
    sidx = np.searchsorted(s_levels, d.s)
    wt = d.unit_weights
    out = np.zeros((len(s_levels), len(w_levels)))
    sel = d.z == z
    np.add.at(out, (sidx[sel], widx[sel]), wt[sel])
    tot = out.sum(axis=0)
    if np.any(tot <= 0):
        empty = [float(w_levels[l]) for l in np.flatnonzero(tot <= 0)]
        raise EmptyCell(f"no units with Z={z} in W cells {empty}")
    return out / tot


def cell_mean_y(d: Dataset, z: int, s_value: Optional[float] = None) -> np.ndarray:
    """Vector E(Y | Z=z, [S=s], W=w_l) over W levels."""
    widx = d.w_index()
    L = len(d.w_levels)
    sel = d.z == z
    if s_value is not None:
        sel &= d.s == s_value
    wt = d.unit_weights
    num = np.bincount(widx[sel], weights=(wt * d.y)[sel], minlength=L)
    den = np.bincount(widx[sel], weights=wt[sel], minlength=L)
    if np.any(den <= 0):
        raise EmptyCell(f"empty cell for Z={z}, S={s_value}")
    return num / den


# ---------------------------------------------------------------------------
# Numerics


def std_normal_cdf(x):
    """Standard Normal CDF; saturates to exactly 0/1 beyond |x| > 40."""
    x = np.asarray(x, dtype=float)
    out = special.ndtr(x)
    out = np.where(x > 40, 1.0, np.where(x < -40, 0.0, out))
    return out if out.ndim else float(out)


def std_normal_quantile(p):
    p = np.asarray(p, dtype=float)
    out = special.ndtri(p)
    return out if out.ndim else float(out)


def clip_prob(p, eps: float = PROB_CLIP):
    """Clip to [eps, 1-eps]; returns (clipped, number of clipped entries)."""
    p = np.asarray(p, dtype=float)
    clipped = np.clip(p, eps, 1.0 - eps)
    return clipped, int(np.count_nonzero(clipped != p))


def numerical_rank(A: np.ndarray, rtol: float = RANK_RTOL) -> tuple[int, float, np.ndarray]:
    """Rank with singular values below ``rtol * s_max`` treated as zero.

    Returns ``(rank, condition, singular_values)``.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.size == 0:
        return 0, np.inf, np.zeros(0)
    sv = np.linalg.svd(A, compute_uv=False)
    smax = sv[0] if sv.size else 0.0
    if smax == 0:
        return 0, np.inf, sv
    rank = int(np.sum(sv > rtol * smax))
    smin = sv[min(A.shape) - 1] if sv.size >= min(A.shape) else 0.0
    cond = np.inf if smin == 0 else float(smax / smin)
    return rank, cond, sv


def solve_least_squares(A, b, rtol: float = RANK_RTOL) -> np.ndarray:
    """argmin ||Ax - b||; exact solve when A is square and nonsingular.

    Raises
    ------
    RankDeficient
        If the numerical column rank of ``A`` is below its column count.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float)
    rank, cond, _ = numerical_rank(A, rtol)
    if rank < A.shape[1]:
        raise RankDeficient(
            f"design has numerical rank {rank} < {A.shape[1]} columns (condition ~ {cond:.3g})",
            rank=rank,
            columns=A.shape[1],
            condition=cond,
        )
    if A.shape[0] == A.shape[1]:
        return np.linalg.solve(A, b)
    return np.linalg.lstsq(A, b, rcond=None)[0]


def weighted_ols(X, y, weights=None) -> np.ndarray:
    """Weighted least squares through :func:`solve_least_squares`."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if weights is None:
        return solve_least_squares(X, y)
    r = np.sqrt(np.asarray(weights, dtype=float))
    return solve_least_squares(X * r[:, None], y * r)


def poly_basis(w: np.ndarray, degree: int) -> np.ndarray:
    """Columns w, w**2, ..., w**degree (no constant)."""
    w = np.asarray(w, dtype=float)
    return np.column_stack([w**k for k in range(1, degree + 1)]) if degree > 0 else np.empty((w.size, 0))


# ---------------------------------------------------------------------------
# Output helpers


def fmt_float(v: float) -> str:
    return repr(float(v))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    return obj


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path
