"""Moments and Sobol indices from PDD coefficients, plus a Monte Carlo oracle.

With an orthonormal basis the surrogate mean is the constant coefficient
and the variance is the sum of the remaining squared coefficients, so the
Sobol index of a variable subset V is the share of that sum carried by the
terms whose subset is exactly V.
"""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .errors import FormatError, NumericError, ParameterError
from .measures import Distribution
from .pdd import PddModel


def subset_name(subset) -> str:
    """``(0, 2)`` -> ``'1,3'`` (1-based, comma separated)."""
    return ",".join(str(i + 1) for i in subset)


def parse_subset(name: str) -> tuple[int, ...]:
    return tuple(int(tok) - 1 for tok in str(name).split(","))


@dataclass
class SensitivityReport:
    """Mean, standard deviation and Sobol indices of one (or an average of) surrogate(s).

    Index dictionaries are keyed by 0-based variable tuples, e.g. ``(0,)``
    for the first-order index of the first input and ``(0, 2)`` for the
    pair (1, 3).  ``per_trial`` maps quantity names (``'std'``, ``'S1'``,
    ``'S1,3'``, ``'T2'``...) to the per-trial values behind an averaged
    report.
    """

    mean: float
    std: float
    first_order: dict = field(default_factory=dict)
    second_order: dict = field(default_factory=dict)
    total_effect: dict = field(default_factory=dict)
    higher_order: dict = field(default_factory=dict)
    trials: int = 1
    per_trial: dict = field(default_factory=dict)
    degenerate: bool = False

    @property
    def variance(self) -> float:
        return self.std ** 2

    def subset_indices(self) -> dict:
        out = {}
        out.update(self.first_order)
        out.update(self.second_order)
        out.update(self.higher_order)
        return out

    def quantities(self) -> dict[str, float]:
        """Flat ``name -> value`` view: mean, std, S<subset>, T<var>."""
        q = {"mean": self.mean, "std": self.std}
        for V, v in sorted(self.subset_indices().items(), key=lambda kv: (len(kv[0]), kv[0])):
            q["S" + subset_name(V)] = v
        for i, v in sorted(self.total_effect.items()):
            q["T" + subset_name(i)] = v
        return q

    def to_dict(self) -> dict:
        d = {
            "mean": self.mean,
            "std": self.std,
            "first_order": {subset_name(k): v for k, v in sorted(self.first_order.items())},
            "second_order": {subset_name(k): v for k, v in sorted(self.second_order.items())},
            "total_effect": {subset_name(k): v for k, v in sorted(self.total_effect.items())},
            "trials": self.trials,
            "per_trial": self.per_trial,
            "degenerate": self.degenerate,
        }
        if self.higher_order:
            d["higher_order"] = {subset_name(k): v for k, v in sorted(self.higher_order.items())}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SensitivityReport":
        try:
            conv = lambda m: {parse_subset(k): float(v) for k, v in (m or {}).items()}
            return cls(
                mean=float(d["mean"]),
                std=float(d["std"]),
                first_order=conv(d.get("first_order")),
                second_order=conv(d.get("second_order")),
                total_effect=conv(d.get("total_effect")),
                higher_order=conv(d.get("higher_order")),
                trials=int(d.get("trials", 1)),
                per_trial=dict(d.get("per_trial") or {}),
                degenerate=bool(d.get("degenerate", False)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"malformed sensitivity report: {exc}") from exc

    def table_rows(self) -> list[tuple[str, float]]:
        return list(self.quantities().items())


def moments(model: PddModel) -> tuple[float, float]:
    """``(mean, variance)`` of the surrogate under the input measure."""
    c = model.coefficients
    return float(c[0]), float(np.sum(c[1:] ** 2))


def sobol_indices(model: PddModel) -> SensitivityReport:
    mean, variance = moments(model)
    c2 = model.coefficients ** 2
    by_subset = defaultdict(float)
    for term, v in zip(model.basis.terms[1:], c2[1:]):
        by_subset[term.subset] += v

    N = model.basis.dims
    subsets = list(by_subset)
    degenerate = not variance > 0.0
    if degenerate:
        share = {V: 0.0 for V in subsets}
    else:
        share = {V: by_subset[V] / variance for V in subsets}

    total = {(i,): 0.0 for i in range(N)}
    for V, s in share.items():
        for i in V:
            total[(i,)] += s
    return SensitivityReport(
        mean=mean,
        std=math.sqrt(variance),
        first_order={V: s for V, s in share.items() if len(V) == 1},
        second_order={V: s for V, s in share.items() if len(V) == 2},
        higher_order={V: s for V, s in share.items() if len(V) > 2},
        total_effect=total,
        degenerate=degenerate,
    )


def aggregate_reports(reports: Sequence[SensitivityReport]) -> SensitivityReport:
    """Average several single-trial reports, keeping the per-trial values."""
    if not reports:
        raise ParameterError("no reports to aggregate")
    per_trial = defaultdict(list)
    for r in reports:
        for name, v in r.quantities().items():
            per_trial[name].append(v)

    def avg(attr):
        keys = set().union(*(getattr(r, attr) for r in reports))
        return {k: float(np.mean([getattr(r, attr).get(k, 0.0) for r in reports])) for k in keys}

    return SensitivityReport(
        mean=float(np.mean([r.mean for r in reports])),
        std=float(np.mean([r.std for r in reports])),
        first_order=avg("first_order"),
        second_order=avg("second_order"),
        total_effect=avg("total_effect"),
        higher_order=avg("higher_order"),
        trials=len(reports),
        per_trial=dict(per_trial),
        degenerate=any(r.degenerate for r in reports),
    )


def mc_sobol_oracle(f: Callable[[np.ndarray], np.ndarray], dists: Sequence[Distribution],
                    n: int, seed: int | None = 0, block_size: int = 50_000) -> SensitivityReport:
    """Pick-freeze Monte Carlo estimate of first-order and total indices.

    Uses two independent base samples ``A``, ``B`` and, for each input ``i``,
    the hybrid ``A`` with column ``i`` taken from ``B``: first-order indices by
    the Saltelli (2010) estimator and total effects by Jansen's, at a cost of
    ``n * (N + 2)`` evaluations of ``f`` (vectorized over rows).  Blocks of
    ``block_size`` rows draw from independent child seeds.
    """
    if n < 100:
        raise ParameterError(f"the oracle needs n >= 100 samples, got {n}")
    N = len(dists)
    n_blocks = -(-n // block_size)
    children = np.random.SeedSequence(seed).spawn(n_blocks)

    shift = None
    s_a = s_aa = 0.0
    first = np.zeros(N)
    total = np.zeros(N)
    done = 0
    for child in children:
        m = min(block_size, n - done)
        rng = np.random.default_rng(child)
        u = rng.random((m, 2 * N))
        X = np.column_stack([d.ppf(u[:, k]) for k, d in enumerate(dists)])
        Y = np.column_stack([d.ppf(u[:, N + k]) for k, d in enumerate(dists)])
        fA = _evaluate(f, X)
        fB = _evaluate(f, Y)
        if shift is None:
            shift = float(np.mean(fA))
        for v in (fA - shift, fB - shift):
            s_a += v.sum()
            s_aa += (v * v).sum()
        for i in range(N):
            Z = X.copy()
            Z[:, i] = Y[:, i]
            fAB = _evaluate(f, Z)
            first[i] += np.sum(fB * (fAB - fA))
            total[i] += np.sum((fA - fAB) ** 2)
        done += m

    count = 2 * n
    mean_shifted = s_a / count
    variance = (s_aa - count * mean_shifted ** 2) / (count - 1)
    mean = shift + mean_shifted
    if not variance > 0:
        return SensitivityReport(mean=mean, std=0.0,
                                 first_order={(i,): 0.0 for i in range(N)},
                                 total_effect={(i,): 0.0 for i in range(N)},
                                 degenerate=True)
    S = np.clip(first / n / variance, 0.0, 1.0)
    T = np.clip(total / (2 * n) / variance, 0.0, 1.0)
    return SensitivityReport(
        mean=mean,
        std=math.sqrt(variance),
        first_order={(i,): float(S[i]) for i in range(N)},
        total_effect={(i,): float(T[i]) for i in range(N)},
    )


def _evaluate(f, X):
    y = np.asarray(f(X), dtype=float).reshape(-1)
    if y.shape[0] != X.shape[0]:
        raise NumericError(f"function returned {y.shape[0]} values for {X.shape[0]} points")
    if not np.isfinite(y).all():
        raise NumericError("function returned non-finite values")
    return y


class ErrorMetrics(NamedTuple):
    mae: float
    mre: float | None  # None when the reference is zero


def error_metrics(estimates, exact: float) -> ErrorMetrics:
    """Mean absolute and mean relative error of per-trial estimates."""
    est = np.asarray(estimates, dtype=float).reshape(-1)
    if est.size == 0:
        raise ParameterError("need at least one trial")
    mae = float(np.mean(np.abs(exact - est)))
    mre = None if exact == 0 else float(np.mean(np.abs((exact - est) / exact)))
    return ErrorMetrics(mae, mre)
