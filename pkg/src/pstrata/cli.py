"""Command-line front end: simulate, estimate, diagnose, sweep, report.

Every run writes its outputs plus one ``manifest.json`` into ``--out``.
Feeding a manifest back through ``--config`` replays the run.
Exit codes: 0 success, 2 input error, 3 identifiability diagnostic failed,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import platform
import sys
import time
from collections import defaultdict
from pathlib import Path
from typing import Optional

import numpy as np
import scipy

from . import __version__
from .bayes import McmcConfig, PRIORS, run_model
from .copula import joint_equipercentile, joint_from_gaussian_copula, joint_from_monotonicity
from .core import (
    Dataset,
    IdentificationError,
    InputError,
    NumericalError,
    PceEstimate,
    PStrataError,
    PrincipalStratum,
    fmt_float,
    weighted_mean,
    write_json,
)
from .dgp import DgpSpec, generate, population
from .discrete_id import (
    build_and_solve_general,
    build_system_constant_s0,
    build_systems_general,
    pce_from_laws,
    rank_diagnostic,
    solve_system,
)
from .mom import SweepSpec, bootstrap_ci, default_strata, mom_estimate, mom_fit, sensitivity_sweep
from .parametric import (
    Basis,
    OutcomeModelSpec,
    fit_prop1_linear,
    fit_prop2_probit,
    fit_prop3_binary,
    fit_prop4_prop5,
    fit_propS1_discreteW,
    span_test,
)
from .scores import (
    fit_principal_score_constant_s0,
    fit_propensity,
    pce_weighting_constant_s0,
    pce_weighting_general,
)

log = logging.getLogger("pstrata")

EXIT_OK, EXIT_INPUT, EXIT_IDENT, EXIT_NUMERIC = 0, 2, 3, 4
METHODS = ("weighting", "discrete-ai", "prop1", "prop2", "prop3", "prop4", "prop5", "propS1", "mom", "bayes")
DGP_IDS = {"1": "DGP1", "2": "DGP2", "3": "DGP3", "4": "DGP4", "jobs": "JOBS_LIKE"}
NOT_CONFIG = {"config", "out", "verbose"}


# ---------------------------------------------------------------------------
# Manifest


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class RunManifest:
    """Collects inputs and outputs of one run and writes ``manifest.json``."""

    def __init__(self, out: Path, argv: list, config: dict):
        self.out = out
        self.argv = list(argv)
        self.config = config
        self.inputs: dict = {}
        self.outputs: list = []
        self.start = time.perf_counter()

    def input(self, path) -> Path:
        path = Path(path)
        self.inputs[str(path)] = sha256(path)
        return path

    def output(self, path) -> Path:
        path = Path(path)
        if path not in self.outputs:
            self.outputs.append(path)
        return path

    def json(self, name: str, obj) -> Path:
        path = self.out / name
        path.parent.mkdir(parents=True, exist_ok=True)
        return self.output(write_json(path, obj))

    def write(self, status: str = "ok", error: Optional[dict] = None) -> Path:
        payload = {
            "tool": "pstrata",
            "version": __version__,
            "versions": {
                "pstrata": __version__,
                "numpy": np.__version__,
                "scipy": scipy.__version__,
                "python": platform.python_version(),
            },
            "command": self.config.get("command"),
            "argv": self.argv,
            "config": self.config,
            "seed": self.config.get("seed"),
            "inputs": self.inputs,
            "outputs": [
                {"path": str(p.relative_to(self.out)), "sha256": sha256(p)} for p in self.outputs if p.exists()
            ],
            "wall_time_seconds": round(time.perf_counter() - self.start, 3),
            "status": status,
        }
        if error:
            payload["error"] = error
        return write_json(self.out / "manifest.json", payload)


# ---------------------------------------------------------------------------
# Argument parsing


def _strata_arg(text: str) -> list:
    """``"1,1;1,0"`` -> [PrincipalStratum(1, 1), PrincipalStratum(1, 0)]."""
    out = []
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        try:
            a, b = (float(v) for v in part.split(","))
        except ValueError:
            raise InputError(f"bad stratum {part!r}; expected 's1,s0'") from None
        out.append(PrincipalStratum(a, b))
    if not out:
        raise InputError("no strata given")
    return out


def _float_list(text: str) -> list:
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise InputError(f"bad number list {text!r}") from None


def build_parser() -> tuple[argparse.ArgumentParser, dict]:
    parser = argparse.ArgumentParser(prog="pstrata", description=__doc__.splitlines()[0])
    parser.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    parser.add_argument("--threads", type=int, default=1, help="worker threads for bootstrap/chains")
    parser.add_argument("--out", default="pstrata-out", help="output directory")
    parser.add_argument("--config", help="JSON config (or a manifest.json) supplying defaults")
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("--version", action="version", version=f"pstrata {__version__}")
    sub = parser.add_subparsers(dest="command")
    subs = {}

    p = sub.add_parser("simulate", help="draw a synthetic dataset with known truth")
    p.add_argument("--dgp", help="1, 2, 3, 4 or jobs")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--rho", type=float, default=None, help="true rho for the jobs design")
    p.add_argument("--param", action="append", default=[], metavar="KEY=JSON", help="override a DGP parameter")
    p.add_argument("--population", action="store_true", help="write the exact weighted law (DGP3/DGP4)")
    subs["simulate"] = p

    p = sub.add_parser("estimate", help="estimate principal causal effects")
    p.add_argument("--data", help="dataset CSV (schema sidecar alongside)")
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--joint", choices=("auto", "mono", "copula", "equipercentile"), default="auto")
    p.add_argument("--rho", type=float, default=0.0, help="copula / sensitivity correlation")
    p.add_argument("--eps", type=float, default=0.02, help="monotonicity tolerance")
    p.add_argument("--allow-provisional", action="store_true", help="accept a sensitivity joint for weighting")
    p.add_argument("--strata", default=None, help="'s1,s0;s1,s0;...'")
    p.add_argument("--basis", default=None, help="treated-arm W basis: none, linear, poly:D, indicator:a,b")
    p.add_argument("--basis0", default=None, help="control-arm W basis (defaults to --basis)")
    p.add_argument("--g-degree", type=int, default=3)
    p.add_argument("--degree", type=int, default=3, help="polynomial degree of the Normal marginal means")
    p.add_argument("--bootstrap", type=int, default=0, help="bootstrap replicates for mom intervals")
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--model", default=None, help="Bayesian model 1-4")
    p.add_argument("--prior", default="A", choices=sorted(PRIORS))
    p.add_argument("--iterations", type=int, default=20000)
    p.add_argument("--burn-in", type=int, default=4000)
    p.add_argument("--chains", type=int, default=4)
    p.add_argument("--thin", type=int, default=1)
    subs["estimate"] = p

    p = sub.add_parser("diagnose", help="report every applicable identifiability diagnostic")
    p.add_argument("--data")
    p.add_argument("--basis", default="poly:1")
    p.add_argument("--g-degree", type=int, default=3)
    p.add_argument("--rho", type=float, default=0.0)
    p.add_argument("--eps", type=float, default=0.02)
    subs["diagnose"] = p

    p = sub.add_parser("sweep", help="moment estimator over a grid of rho with bootstrap intervals")
    p.add_argument("--data")
    p.add_argument("--rhos", default="0,0.2,0.4,0.6,0.8")
    p.add_argument("--bootstrap", type=int, default=500)
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--strata", default=None)
    p.add_argument("--degree", type=int, default=3)
    subs["sweep"] = p

    p = sub.add_parser("report", help="histogram CSVs from Bayesian traces; PCE surface grid")
    p.add_argument("--traces", action="append", default=[], help="an 'estimate --method bayes' output dir")
    p.add_argument("--bins", type=int, default=40)
    p.add_argument("--data", default=None, help="dataset for a moment-estimator PCE surface")
    p.add_argument("--rho", type=float, default=0.0)
    p.add_argument("--grid", type=int, default=21)
    p.add_argument("--degree", type=int, default=3)
    subs["report"] = p
    return parser, subs


def _load_config(path) -> dict:
    try:
        cfg = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read config {path}: {exc}") from None
    if isinstance(cfg, dict) and "argv" in cfg and "config" in cfg:
        cfg = cfg["config"]
    if not isinstance(cfg, dict):
        raise InputError("config must be a JSON object")
    return cfg


def parse_args(argv: list) -> argparse.Namespace:
    parser, subs = build_parser()
    pre, _ = parser.parse_known_args(argv)
    if pre.config:
        cfg = _load_config(pre.config)
        command = pre.command or cfg.get("command")
        if command not in subs:
            raise InputError("config names no valid command")
        if pre.command is None:
            argv = list(argv) + [command]
        glob = {k: v for k, v in cfg.items() if k in ("seed", "threads")}
        parser.set_defaults(**glob)
        local = {k: v for k, v in cfg.items() if k not in ("seed", "threads", "command") and k not in NOT_CONFIG}
        known = {a.dest for a in subs[command]._actions}
        unknown = set(local) - known
        if unknown:
            raise InputError(f"unknown config keys for {command}: {sorted(unknown)}")
        subs[command].set_defaults(**local)
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help(sys.stderr)
        raise InputError("no command given")
    return args


def _config_of(args: argparse.Namespace) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in NOT_CONFIG}


# ---------------------------------------------------------------------------
# Helpers


def _require(value, flag: str):
    if value is None or value == "":
        raise InputError(f"{flag} is required")
    return value


def _load(args, manifest: RunManifest) -> Dataset:
    path = Path(_require(args.data, "--data"))
    if not path.exists():
        raise InputError(f"no such dataset: {path}")
    manifest.input(path)
    from .core import schema_path_for

    sp = schema_path_for(path)
    if sp.exists():
        manifest.input(sp)
    return Dataset.from_csv(path)


def _s0_constant(d: Dataset) -> bool:
    if d.schema.s0_constant is not None:
        return True
    s0 = d.s[d.z == 0]
    return s0.size > 0 and bool(np.all(s0 == s0[0]))


def _joint(d: Dataset, args):
    kind = args.joint
    if kind == "auto":
        kind = "mono" if d.schema.s_kind == "discrete" else "copula"
    if kind == "mono":
        return joint_from_monotonicity(d, args.eps)
    if kind == "equipercentile":
        return joint_equipercentile(d, args.degree)
    return joint_from_gaussian_copula(d, args.rho, degree=args.degree)


def _treated_quartiles(d: Dataset) -> list:
    s0 = float(d.s[d.z == 0][0])
    return [PrincipalStratum(float(v), s0) for v in np.quantile(d.s[d.z == 1], [0.25, 0.5, 0.75])]


def _default_strata(d: Dataset, method: str, joint=None) -> list:
    if joint is not None and hasattr(joint, "support"):
        return list(joint.support())
    if _s0_constant(d):
        if d.schema.s_kind == "discrete":
            s0 = float(d.s[d.z == 0][0])
            return [PrincipalStratum(float(v), s0) for v in d.s_levels]
        return _treated_quartiles(d)
    return default_strata(d)


# ---------------------------------------------------------------------------
# Commands


def cmd_simulate(args, manifest: RunManifest) -> None:
    dgp = DGP_IDS.get(str(_require(args.dgp, "--dgp")).lower(), str(args.dgp).upper())
    params = {}
    for item in args.param:
        key, sep, value = item.partition("=")
        if not sep:
            raise InputError(f"--param expects KEY=JSON, got {item!r}")
        try:
            params[key] = json.loads(value)
        except json.JSONDecodeError:
            raise InputError(f"--param {key}: value is not JSON") from None
    if args.rho is not None:
        if dgp != "JOBS_LIKE":
            raise InputError("--rho applies to the jobs design only")
        params["rho"] = args.rho
    out = manifest.out
    if args.population:
        d = population(dgp, params)
        for p in d.to_csv(out / "dataset.csv"):
            manifest.output(p)
        from .dgp import discrete_truth

        manifest.json("truth.json", discrete_truth(dgp, DgpSpec(dgp, 1, params).resolved_params()))
        return
    sim = generate(DgpSpec(dgp, args.n, params, args.seed))
    for p in sim.dataset.to_csv(out / "dataset.csv"):
        manifest.output(p)
    manifest.json("truth.json", sim.truth)
    oracle = out / "oracle.csv"
    with open(oracle, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["s1", "s0"])
        for a, b in zip(sim.latent["s1"], sim.latent["s0"]):
            w.writerow([fmt_float(a), fmt_float(b)])
    manifest.output(oracle)


def _estimate_weighting(d, args):
    pr = fit_propensity(d)
    if d.schema.s_kind != "discrete":
        raise InputError("weighting estimators need a discrete S")
    if _s0_constant(d):
        ps = fit_principal_score_constant_s0(d)
        strata = _strata_arg(args.strata) if args.strata else _default_strata(d, "weighting")
        return [pce_weighting_constant_s0(d, ps, pr, u.s1) for u in strata], {"route": "constant-s0"}
    joint = _joint(d, args)
    strata = _strata_arg(args.strata) if args.strata else list(joint.support())
    ests = [pce_weighting_general(d, joint, pr, u, args.allow_provisional) for u in strata]
    return ests, {"route": "general", "joint": joint.provenance}


def _estimate_discrete(d, args):
    if _s0_constant(d):
        sys_ = build_system_constant_s0(d)
        e0 = solve_system(sys_)
        treated = d.arm(1)
        s0 = float(d.s[d.z == 0][0])
        out = []
        for s, m0 in e0.items():
            mask = treated.s == s
            m1 = weighted_mean(treated.y[mask], treated.weights[mask] if treated.weights is not None else None)
            out.append(
                PceEstimate(
                    PrincipalStratum(float(s), s0),
                    m1 - m0,
                    method="discrete-ai",
                    diagnostics={"E[Y1|S1]": m1, "E[Y0|S1]": m0},
                )
            )
        return out, {"route": "constant-s0", "rank": rank_diagnostic(sys_), **sys_.notes}
    joint = _joint(d, args)
    arm1 = build_and_solve_general(d, joint, 1)
    arm0 = build_and_solve_general(d, joint, 0)
    taus = pce_from_laws(arm1, arm0)
    out = [
        PceEstimate(
            u,
            tau,
            method="discrete-ai",
            diagnostics={"E[Y1|U]": arm1[u]["mean"], "E[Y0|U]": arm0[u]["mean"]},
        )
        for u, tau in sorted(taus.items(), reverse=True)
    ]
    ranks = [rank_diagnostic(s) | s.notes for z in (1, 0) for s in build_systems_general(d, joint, z)]
    return out, {"route": "general", "joint": joint.provenance, "joint_diagnostics": joint.diagnostics, "systems": ranks}


def _estimate_parametric(d, args):
    m = args.method
    family = "probit" if m in ("prop2", "prop5") else "linear"
    if m in ("prop4", "prop5") and d.schema.y_kind == "binary" and m == "prop4":
        raise InputError("prop4 is the linear family; use prop5 for a binary outcome")
    default_basis = "none" if m in ("prop4", "prop5") else "poly:1"
    spec = OutcomeModelSpec(
        family=family, basis=args.basis or default_basis, basis0=args.basis0, g_degree=args.g_degree
    )
    joint = None
    if m == "prop1":
        fit = fit_prop1_linear(d, spec)
    elif m == "prop2":
        fit = fit_prop2_probit(d, spec)
    elif m == "prop3":
        fit = fit_prop3_binary(d, args.eps)
    elif m in ("prop4", "prop5"):
        joint = joint_from_gaussian_copula(d, args.rho, degree=args.degree)
        fit = fit_prop4_prop5(d, joint, spec)
        joint = None
    else:
        joint = _joint(d, args)
        fit = fit_propS1_discreteW(d, joint)
    if args.strata:
        strata = _strata_arg(args.strata)
    elif m == "prop3":
        strata = [PrincipalStratum(1.0, 1.0), PrincipalStratum(1.0, 0.0), PrincipalStratum(0.0, 0.0)]
    else:
        strata = _default_strata(d, m, joint if joint is not None and d.schema.s_kind == "discrete" else None)
    ests = fit.pce_table(strata)
    return ests, {"coefficients": fit.coefficients, **fit.diagnostics}


def _estimate_mom(d, args):
    strata = _strata_arg(args.strata) if args.strata else default_strata(d)
    ests = mom_estimate(d, args.rho, strata, args.degree)
    fit = mom_fit(d, args.rho, args.degree)
    diag = {"rho": args.rho, "coefficients": fit.coefficients(), "provenance": fit.joint.provenance}
    if args.bootstrap:
        boot = bootstrap_ci(
            d, lambda x: mom_estimate(x, args.rho, strata, args.degree), args.bootstrap, args.level, args.seed, args.threads
        )
        ests = [
            PceEstimate(e.stratum, e.point, boot.intervals[e.stratum.label()], args.level, "mom", args.seed, e.diagnostics)
            for e in ests
        ]
        diag["bootstrap"] = {"replicates": args.bootstrap, "failures": boot.failures}
    return ests, diag


def _estimate_bayes(d, args, manifest: RunManifest):
    model = _require(args.model, "--model")
    cfg = McmcConfig(args.iterations, args.burn_in, args.chains, args.thin, args.seed, args.prior)
    draws = run_model(d, model, cfg, threads=args.threads)
    for p in draws.write_traces(manifest.out / "traces"):
        manifest.output(p)
    manifest.output(draws.write_summary(manifest.out / "summary.json"))
    ests = []
    for u, name in draws.pce.items():
        s = draws.summary(name)
        diag = {"parameter": name, "sd": s["sd"]}
        if "rhat" in s:
            diag["rhat"] = s["rhat"]
        ests.append(
            PceEstimate(u, s["median"], (s["lower"], s["upper"]), 0.95, f"bayes-{draws.model}", args.seed, diag)
        )
    return ests, {"model": draws.model, "prior": args.prior, "metadata": draws.metadata}


def cmd_estimate(args, manifest: RunManifest) -> None:
    method = _require(args.method, "--method")
    d = _load(args, manifest)
    if method == "weighting":
        ests, diag = _estimate_weighting(d, args)
    elif method == "discrete-ai":
        ests, diag = _estimate_discrete(d, args)
    elif method == "mom":
        ests, diag = _estimate_mom(d, args)
    elif method == "bayes":
        ests, diag = _estimate_bayes(d, args, manifest)
    else:
        ests, diag = _estimate_parametric(d, args)
    manifest.json("estimates.json", [e.to_dict() for e in ests])
    manifest.json("diagnostics.json", {"method": method, **diag})


def _check(report: dict, name: str, fn) -> None:
    try:
        info = fn()
    except IdentificationError as exc:
        report[name] = {"pass": False, "condition": exc.condition, "message": str(exc), "margin": exc.margin}
    except (InputError, NumericalError) as exc:
        report[name] = {"pass": None, "applicable": False, "message": str(exc)}
    else:
        info = dict(info or {})
        ok = info.pop("pass", True)
        report[name] = {"pass": bool(ok), "margin": info}


def cmd_diagnose(args, manifest: RunManifest) -> None:
    d = _load(args, manifest)
    report: dict = {}
    _check(report, "both-arms", lambda: d.require_both_arms())

    def overlap():
        pi = fit_propensity(d).predict(d)
        return {"min_propensity": float(pi.min()), "max_propensity": float(pi.max())}

    _check(report, "overlap", overlap)
    const = _s0_constant(d)
    if d.schema.s_kind == "discrete" and d.schema.w_kind == "discrete":
        if const:

            def rank_const():
                r = rank_diagnostic(build_system_constant_s0(d))
                return {"pass": r["identifiable"], **r}

            _check(report, "rank", rank_const)
        else:
            _check(report, "monotonicity", lambda: joint_from_monotonicity(d, args.eps).diagnostics)

            def rank_general():
                joint = joint_from_monotonicity(d, args.eps)
                systems = [rank_diagnostic(s) | s.notes for z in (1, 0) for s in build_systems_general(d, joint, z)]
                return {"pass": all(s["identifiable"] for s in systems), "systems": systems}

            _check(report, "rank", rank_general)
            if set(d.s_levels) <= {0.0, 1.0}:
                _check(report, "constant-ratio", lambda: fit_prop3_binary(d, args.eps).diagnostics)
            _check(
                report,
                "constant-conditional-mean",
                lambda: fit_propS1_discreteW(d, joint_from_monotonicity(d, args.eps)).diagnostics,
            )
    elif d.schema.s_kind == "continuous":
        if const:

            def li():
                r = span_test(d, Basis.parse(args.basis), args.g_degree)
                return {"pass": r["independent"], **r}

            _check(report, "linear-independence", li)
        else:
            family = "probit" if d.schema.y_kind == "binary" else "linear"

            def conds():
                joint = joint_from_gaussian_copula(d, args.rho)
                fit = fit_prop4_prop5(d, joint, OutcomeModelSpec(family=family, basis="none"))
                return {k: v for k, v in fit.diagnostics.items() if k.startswith("condition")}

            _check(report, "linear-independence", conds)
            if d.schema.w_kind == "discrete":
                _check(
                    report,
                    "constant-conditional-mean",
                    lambda: fit_propS1_discreteW(d, joint_from_gaussian_copula(d, args.rho)).diagnostics,
                )
    manifest.json("diagnostics.json", report)
    for name, entry in report.items():
        status = "n/a" if entry["pass"] is None else ("pass" if entry["pass"] else "FAIL")
        print(f"{name}: {status}")


def cmd_sweep(args, manifest: RunManifest) -> None:
    d = _load(args, manifest)
    spec = SweepSpec(
        rho_values=tuple(_float_list(args.rhos)),
        strata=_strata_arg(args.strata) if args.strata else None,
        bootstrap=args.bootstrap,
        level=args.level,
        seed=args.seed,
        degree=args.degree,
    )
    table = sensitivity_sweep(d, spec, threads=args.threads)
    manifest.output(table.to_csv(manifest.out / "sweep.csv"))
    manifest.json(
        "sweep.json",
        {"rows": table.to_rows(), "level": table.level, "replicates": table.replicates, "failures": table.failures},
    )


def _read_traces(directory: Path) -> tuple[str, dict]:
    summary = directory / "summary.json"
    if not summary.exists():
        raise InputError(f"{directory} holds no Bayesian summary.json")
    meta = json.loads(summary.read_text(encoding="utf-8"))
    prior = meta["config"]["prior"]["name"]
    values = defaultdict(list)
    files = sorted((directory / "traces").glob("*.csv"))
    if not files:
        raise InputError(f"{directory} holds no trace files")
    for f in files:
        with open(f, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                values[row["parameter"]].append(float(row["value"]))
    return f"{meta['model']}_{prior}", {k: np.asarray(v) for k, v in values.items()}


def cmd_report(args, manifest: RunManifest) -> None:
    if not args.traces and not args.data:
        raise InputError("report needs --traces and/or --data")
    if args.bins < 1:
        raise InputError("--bins must be positive")
    runs = []
    for t in args.traces:
        directory = Path(t)
        manifest.input(directory / "summary.json")
        runs.append(_read_traces(directory))
    # shared bin edges per parameter so priors overlay directly
    edges = {}
    for _, vals in runs:
        for name, v in vals.items():
            lo, hi = edges.get(name, (np.inf, -np.inf))
            edges[name] = (min(lo, float(v.min())), max(hi, float(v.max())))
    from .bayes import safe_name

    for tag, vals in runs:
        for name, v in vals.items():
            lo, hi = edges[name]
            if hi <= lo:
                hi = lo + 1.0
            counts, e = np.histogram(v, bins=args.bins, range=(lo, hi))
            width = e[1] - e[0]
            path = manifest.out / "histograms" / f"{safe_name(name)}_{tag}.csv"
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["bin_lower", "bin_upper", "count", "density"])
                for a, b, c in zip(e[:-1], e[1:], counts):
                    w.writerow([fmt_float(a), fmt_float(b), int(c), fmt_float(c / (v.size * width))])
            manifest.output(path)
    if args.data:
        d = _load(args, manifest)
        fit = mom_fit(d, args.rho, args.degree)
        g1 = np.linspace(*np.quantile(d.s[d.z == 1], [0.05, 0.95]), args.grid)
        g0 = np.linspace(*np.quantile(d.s[d.z == 0], [0.05, 0.95]), args.grid)
        path = manifest.out / "surface.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["s1", "s0", "tau"])
            for a in g1:
                for b in g0:
                    w.writerow([fmt_float(a), fmt_float(b), fmt_float(fit.tau(a, b))])
        manifest.output(path)


COMMANDS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "diagnose": cmd_diagnose,
    "sweep": cmd_sweep,
    "report": cmd_report,
}


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, IdentificationError):
        return EXIT_IDENT
    if isinstance(exc, NumericalError):
        return EXIT_NUMERIC
    return EXIT_INPUT


def main(argv: Optional[list] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
    except InputError as exc:
        print(f"error [input]: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SystemExit as exc:  # argparse usage errors and --help/--version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(out, argv, _config_of(args))
    try:
        COMMANDS[args.command](args, manifest)
    except (PStrataError, OSError, ValueError) as exc:
        code = _exit_code(exc)
        condition = getattr(exc, "condition", "input")
        margin = getattr(exc, "margin", None)
        print(f"error [{condition}]: {exc}", file=sys.stderr)
        manifest.write("error", {"condition": condition, "message": str(exc), "exit_code": code, "margin": margin})
        return code
    manifest.write()
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
