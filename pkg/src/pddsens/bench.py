"""Analytic benchmarks and replicated sensitivity studies.

A study draws ``M`` Latin hypercube training points per trial, fits the
surrogate with each requested method on the same data, and summarizes the
per-trial errors against the benchmark's reference values in a table with
one row per (M, method, lambda, iteration).
"""
from __future__ import annotations

import json
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache, partial
from importlib import resources
from typing import Callable

import numpy as np

from .errors import AssetError, ParameterError
from .gsa import error_metrics, mc_sobol_oracle, sobol_indices
from .measures import Distribution, sample_design
from .pdd import PddModel, TrainingSet, design_matrix, enumerate_basis
from .regress import DmorphConfig, LassoConvergenceWarning, dmorph_sparse, lasso_cv, least_squares


def ishigami(x, a: float = 7.0, b: float = 0.1):
    """``sin x1 + a sin^2 x2 + b x3^4 sin x1`` for one point or rows of an array."""
    x = np.asarray(x, dtype=float)
    x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
    out = np.sin(x1) + a * np.sin(x2) ** 2 + b * x3 ** 4 * np.sin(x1)
    return float(out) if out.ndim == 0 else out


def ishigami_reference(a: float = 7.0, b: float = 0.1) -> dict:
    pi4, pi8 = math.pi ** 4, math.pi ** 8
    var = a ** 2 / 8 + b * pi4 / 5 + b ** 2 * pi8 / 18 + 0.5
    return {
        "mean": a / 2,
        "std": math.sqrt(var),
        "S1": (b * pi4 / 5 + b ** 2 * pi8 / 50 + 0.5) / var,
        "S2": (a ** 2 / 8) / var,
        "S3": 0.0,
        "S1,2": 0.0,
        "S1,3": (8 * b ** 2 * pi8 / 225) / var,
        "S2,3": 0.0,
    }


@dataclass(frozen=True)
class OakleyCoefficients:
    a1: np.ndarray
    a2: np.ndarray
    a3: np.ndarray
    M: np.ndarray


def load_oakley_coefficients(path=None) -> OakleyCoefficients:
    """Read the shipped 15-input coefficient asset (or ``path``)."""
    try:
        if path is None:
            text = resources.files("pddsens").joinpath("data/oakley_ohagan.json").read_text()
        else:
            with open(path) as fh:
                text = fh.read()
        d = json.loads(text)
        coeffs = OakleyCoefficients(*(np.asarray(d[k], dtype=float) for k in ("a1", "a2", "a3", "M")))
    except (OSError, KeyError, ValueError, TypeError) as exc:
        raise AssetError(f"cannot load Oakley-O'Hagan coefficients: {exc}") from exc
    n = coeffs.a1.shape
    if not (coeffs.a2.shape == coeffs.a3.shape == n and len(n) == 1 and coeffs.M.shape == n * 2):
        raise AssetError("Oakley-O'Hagan coefficient shapes are inconsistent")
    return coeffs


def oakley_ohagan(x, coeffs: OakleyCoefficients | None = None):
    """``a1'x + a2' sin x + a3' cos x + x' M x`` for one point or rows of an array."""
    coeffs = coeffs or load_oakley_coefficients()
    x = np.asarray(x, dtype=float)
    out = (x @ coeffs.a1 + np.sin(x) @ coeffs.a2 + np.cos(x) @ coeffs.a3
           + np.einsum("...i,ij,...j->...", x, coeffs.M, x))
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class Benchmark:
    name: str
    dims: int
    distributions: tuple[Distribution, ...]
    evaluator: Callable
    references: dict = field(default_factory=dict)

    def __call__(self, x):
        return self.evaluator(x)


def ishigami_benchmark(a: float = 7.0, b: float = 0.1) -> Benchmark:
    return Benchmark(
        "ishigami", 3, (Distribution.uniform(-math.pi, math.pi),) * 3,
        partial(ishigami, a=a, b=b), ishigami_reference(a, b),
    )


@lru_cache(maxsize=4)
def _oakley_oracle(n: int, seed: int) -> dict:
    coeffs = load_oakley_coefficients()
    dists = (Distribution.normal(),) * 15
    rep = mc_sobol_oracle(partial(oakley_ohagan, coeffs=coeffs), dists, n, seed)
    refs = {"mean": rep.mean, "std": rep.std}
    refs.update({f"S{i[0] + 1}": v for i, v in sorted(rep.first_order.items())})
    refs.update({f"T{i[0] + 1}": v for i, v in sorted(rep.total_effect.items())})
    return refs


def oakley_benchmark(oracle_samples: int = 10 ** 6, oracle_seed: int = 2004) -> Benchmark:
    """15 standard-normal inputs; references come from the pick-freeze oracle."""
    coeffs = load_oakley_coefficients()
    return Benchmark(
        "oakley", 15, (Distribution.normal(),) * 15,
        partial(oakley_ohagan, coeffs=coeffs), dict(_oakley_oracle(oracle_samples, oracle_seed)),
    )


def get_benchmark(name: str, **kwargs) -> Benchmark:
    name = name.lower()
    if name == "ishigami":
        return ishigami_benchmark(**{k: kwargs[k] for k in ("a", "b") if k in kwargs})
    if name in ("oakley", "oakley_ohagan"):
        keep = ("oracle_samples", "oracle_seed")
        return oakley_benchmark(**{k: kwargs[k] for k in keep if k in kwargs})
    raise ParameterError(f"unknown benchmark {name!r}")


@dataclass(frozen=True)
class StudyConfig:
    benchmark: str = "ishigami"
    S: int = 2
    m: int = 11
    samples: tuple[int, ...] = (59,)
    trials: int = 30
    methods: tuple[str, ...] = ("dmorph", "lasso")
    lambdas: tuple[float, ...] = (0.5,)
    report_iterations: tuple[int, ...] = (0, 20, 30)
    dmorph: DmorphConfig = field(default_factory=DmorphConfig)
    seed_base: int = 0
    sampling: str = "lhs"
    oracle_samples: int = 10 ** 6
    oracle_seed: int = 2004
    record_trajectory: bool = False
    workers: int = 1

    def __post_init__(self):
        samples = (self.samples,) if isinstance(self.samples, int) else tuple(int(v) for v in self.samples)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "methods", tuple(self.methods))
        object.__setattr__(self, "lambdas", tuple(float(v) for v in self.lambdas))
        object.__setattr__(self, "report_iterations", tuple(sorted(int(v) for v in self.report_iterations)))
        if self.trials < 1:
            raise ParameterError(f"trials must be >= 1, got {self.trials}")
        if not samples or min(samples) < 1:
            raise ParameterError(f"sample counts must be >= 1, got {samples}")
        bad = set(self.methods) - {"ls", "lasso", "dmorph"}
        if bad or not self.methods:
            raise ParameterError(f"unknown methods {sorted(bad)}; use ls, lasso, dmorph")
        if "dmorph" in self.methods and not self.lambdas:
            raise ParameterError("dmorph needs at least one lambda")
        if self.report_iterations and self.report_iterations[0] < 0:
            raise ParameterError("report iterations must be >= 0")
        if self.workers < 1:
            raise ParameterError("workers must be >= 1")
        for lam in self.lambdas:
            replace(self.dmorph, lam=lam)  # validates

    @property
    def dmorph_iterations(self) -> int:
        return max(self.report_iterations, default=self.dmorph.max_iterations)

    def to_dict(self) -> dict:
        return {
            "benchmark": self.benchmark,
            "S": self.S,
            "m": self.m,
            "M": list(self.samples),
            "trials": self.trials,
            "methods": list(self.methods),
            "lambdas": list(self.lambdas),
            "report_iterations": list(self.report_iterations),
            "regression": self.dmorph.to_dict(),
            "seed_base": self.seed_base,
            "sampling": self.sampling,
            "oracle_samples": self.oracle_samples,
            "oracle_seed": self.oracle_seed,
            "record_trajectory": self.record_trajectory,
            "workers": self.workers,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StudyConfig":
        d = dict(d)
        kwargs = {}
        simple = ("benchmark", "S", "m", "trials", "methods", "lambdas", "report_iterations",
                  "seed_base", "sampling", "oracle_samples", "oracle_seed", "record_trajectory",
                  "workers")
        for k in simple:
            if k in d:
                kwargs[k] = d.pop(k)
        if "M" in d:
            kwargs["samples"] = d.pop("M")
        if "regression" in d:
            kwargs["dmorph"] = DmorphConfig.from_dict(d.pop("regression"))
        d.pop("name", None)
        d.pop("description", None)
        if d:
            raise ParameterError(f"unknown study settings: {sorted(d)}")
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ParameterError(str(exc)) from exc


def dmorph_label(lam: float, iteration: int) -> str:
    return f"dmorph(lambda={lam:g}) iteration={iteration}"


@dataclass
class TrialResult:
    trial: int
    seed: int
    M: int
    reports: dict            # label -> SensitivityReport
    diagnostics: dict        # label -> plain dict
    trajectories: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "trial": self.trial,
            "seed": self.seed,
            "M": self.M,
            "reports": {k: r.to_dict() for k, r in self.reports.items()},
            "diagnostics": self.diagnostics,
            "trajectories": self.trajectories,
        }


def run_trial(cfg: StudyConfig, bench: Benchmark, M: int, trial: int) -> TrialResult:
    seed = cfg.seed_base + trial
    basis = enumerate_basis(bench.dims, cfg.S, cfg.m)
    X = sample_design(bench.distributions, M, seed=seed, method=cfg.sampling)
    ts = TrainingSet(X, bench(X), bench.distributions, {"benchmark": bench.name, "seed": seed})
    A, b = design_matrix(ts, basis)

    def report(c):
        return sobol_indices(PddModel(basis, c, bench.distributions))

    reports, diags, trajectories = {}, {}, {}
    if "ls" in cfg.methods:
        reports["least_squares"] = report(least_squares(A, b, cfg.dmorph.rank_tol))
    if "lasso" in cfg.methods or "dmorph" in cfg.methods:
        with warnings.catch_warnings():
            # recorded in the trial diagnostics instead
            warnings.simplefilter("ignore", LassoConvergenceWarning)
            k, c0, info = lasso_cv(A, b, folds=cfg.dmorph.lasso_folds, seed=seed,
                                   grid_size=cfg.dmorph.lasso_grid_size, return_info=True)
        lasso_diag = {"penalty": k, "nonzeros": int(np.count_nonzero(c0)), "converged": info["converged"]}
        if "lasso" in cfg.methods:
            reports["lasso"] = report(c0)
            diags["lasso"] = lasso_diag
        if "dmorph" in cfg.methods:
            iters = cfg.dmorph_iterations
            keep = range(iters + 1) if cfg.record_trajectory else cfg.report_iterations
            for lam in cfg.lambdas:
                dcfg = replace(cfg.dmorph, lam=lam, max_iterations=iters)
                _, d = dmorph_sparse(A, b, c0, dcfg, keep_iterates=keep)
                for it in cfg.report_iterations:
                    reports[dmorph_label(lam, it)] = report(d.snapshots[it])
                diags[f"dmorph(lambda={lam:g})"] = {
                    "lasso": lasso_diag,
                    "iterations": d.iterations,
                    "relative_residual": d.relative_residual,
                    "change_history": d.change_history,
                    "cost_history": d.cost_history,
                }
                if cfg.record_trajectory:
                    traj = [report(d.snapshots[i]).quantities() for i in range(iters + 1)]
                    trajectories[f"dmorph(lambda={lam:g})"] = {
                        name: [q[name] for q in traj] for name in traj[0]
                    }
    return TrialResult(trial, seed, M, reports, diags, trajectories)


def _run_trial_job(args):
    cfg, M, trial = args
    bench = get_benchmark(cfg.benchmark, oracle_samples=cfg.oracle_samples, oracle_seed=cfg.oracle_seed)
    return run_trial(cfg, bench, M, trial)


@dataclass
class StudyResult:
    config: StudyConfig
    references: dict
    trials: list            # list[TrialResult]
    summary: list           # list of row dicts

    def summary_columns(self) -> list[str]:
        qs = self.quantities()
        rel = [f"MRE({q})" for q in qs if self.references[q] != 0]
        ab = [f"MAE({q})" for q in qs if self.references[q] == 0]
        return ["M", "method", "lambda", "iteration", "trials"] + rel + ab

    def quantities(self) -> list[str]:
        qs = [q for q in self.references if q == "std" or q.startswith("S")]
        return sorted(qs, key=_quantity_order)

    def row(self, label: str, M: int | None = None) -> dict:
        for r in self.summary:
            if r["label"] == label and (M is None or r["M"] == M):
                return r
        raise KeyError(label)

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "references": self.references,
            "summary": self.summary,
        }


def _quantity_order(q: str):
    if q == "std":
        return (0, ())
    sub = tuple(int(t) for t in q[1:].split(","))
    return (1, (len(sub), sub))


def _parse_label(label: str):
    if label.startswith("dmorph"):
        lam = float(label.split("lambda=")[1].split(")")[0])
        it = int(label.split("iteration=")[1])
        return "dmorph", lam, it
    return label, None, None


def summarize(cfg: StudyConfig, references: dict, trials: list) -> list[dict]:
    """Per (M, method) mean absolute / relative errors over trials."""
    quantities = sorted((q for q in references if q == "std" or q.startswith("S")), key=_quantity_order)
    rows = []
    for M in cfg.samples:
        group = [t for t in trials if t.M == M]
        labels = list(group[0].reports) if group else []
        for label in labels:
            method, lam, it = _parse_label(label)
            row = {"M": M, "label": label, "method": method, "lambda": lam,
                   "iteration": it, "trials": len(group)}
            for q in quantities:
                est = [t.reports[label].quantities().get(q, 0.0) for t in group]
                em = error_metrics(est, references[q])
                row[f"MAE({q})"] = em.mae
                row[f"MRE({q})"] = em.mre
            rows.append(row)
    return rows


def _with_trial(exc: Exception, M: int, trial: int) -> Exception:
    msg = f"trial {trial} (M={M}) failed: {exc}"
    try:
        new = type(exc)(msg)
    except Exception:
        return RuntimeError(msg)
    new.trial = trial
    return new


def run_study(cfg: StudyConfig) -> StudyResult:
    """Run every (M, trial) job and summarize; deterministic given the config."""
    bench = get_benchmark(cfg.benchmark, oracle_samples=cfg.oracle_samples, oracle_seed=cfg.oracle_seed)
    jobs = [(cfg, M, t) for M in cfg.samples for t in range(cfg.trials)]
    results = []
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            futures = [pool.submit(_run_trial_job, job) for job in jobs]
            for (_, M, t), fut in zip(jobs, futures):
                try:
                    results.append(fut.result())
                except Exception as exc:
                    raise _with_trial(exc, M, t) from exc
    else:
        for cfg_, M, t in jobs:
            try:
                results.append(run_trial(cfg_, bench, M, t))
            except Exception as exc:
                raise _with_trial(exc, M, t) from exc
    refs = {k: v for k, v in bench.references.items()}
    return StudyResult(cfg, refs, results, summarize(cfg, refs, results))
