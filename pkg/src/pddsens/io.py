"""File formats: training CSVs, problem configs, persisted models and reports.

Floats go through :mod:`json`, which writes the shortest repr that reads back
to the identical double, so a saved model reproduces its coefficients bit for
bit.
"""
from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import FormatError, IngestionError, ParameterError
from .gsa import SensitivityReport
from .measures import Distribution
from .pdd import BasisSet, PddModel, TrainingSet, basis_size
from .regress import DmorphConfig, FitDiagnostics

MODEL_FORMAT = "pddsens-model"
MODEL_VERSION = 1


def _clean(obj):
    """Replace NaN/inf by None so the output stays strict JSON."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def write_json(path, obj) -> None:
    path = Path(path)
    if path.parent != Path(""):
        path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(_clean(obj), fh, indent=2, allow_nan=False)
        fh.write("\n")
    os.replace(tmp, path)


def read_json(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: invalid JSON ({exc})") from exc


def write_rows(path, header: Sequence[str], rows) -> None:
    path = Path(path)
    if path.parent != Path(""):
        path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow(["" if v is None else (repr(float(v)) if isinstance(v, (float, np.floating)) else v)
                        for v in row])


# -- training data -----------------------------------------------------------

def input_header(N: int) -> list[str]:
    return [f"x{i + 1}" for i in range(N)]


def write_design_csv(path, X) -> None:
    """Design points only (columns ``x1..xN``), for running an external simulator."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    write_rows(path, input_header(X.shape[1]), X.tolist())


def write_training_csv(path, X, y) -> None:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).reshape(-1)
    write_rows(path, input_header(X.shape[1]) + ["y"], np.column_stack([X, y]).tolist())


def read_training_csv(path, distributions: Sequence[Distribution]) -> TrainingSet:
    """Parse ``x1,...,xN,y`` rows; any defect raises :class:`IngestionError` naming the row.

    Rows are numbered from 1 for the first data line after the header.
    """
    N = len(distributions)
    expected = input_header(N) + ["y"]
    try:
        with open(path, newline="", encoding="utf-8-sig") as fh:
            lines = list(csv.reader(fh))
    except UnicodeDecodeError as exc:
        raise IngestionError(f"{path}: not UTF-8 text") from exc
    lines = [ln for ln in lines if any(cell.strip() for cell in ln)]
    if not lines:
        raise IngestionError(f"{path}: empty file")
    header = [h.strip() for h in lines[0]]
    if header != expected:
        raise IngestionError(f"header {','.join(header)!r} does not match {','.join(expected)!r}",
                             row=0)
    if len(lines) == 1:
        raise IngestionError(f"{path}: no data rows")

    data = np.empty((len(lines) - 1, N + 1))
    for r, line in enumerate(lines[1:], start=1):
        if len(line) != N + 1:
            raise IngestionError(f"expected {N + 1} columns, found {len(line)}", row=r)
        for k, cell in enumerate(line):
            try:
                v = float(cell)
            except ValueError:
                raise IngestionError(f"column {expected[k]}: non-numeric value {cell.strip()!r}",
                                     row=r) from None
            if not math.isfinite(v):
                raise IngestionError(f"column {expected[k]}: non-finite value {cell.strip()!r}",
                                     row=r)
            data[r - 1, k] = v
        for k, d in enumerate(distributions):
            if not d.in_support(data[r - 1, k]):
                raise IngestionError(f"x{k + 1}={float(data[r - 1, k])!r} outside the support of {d.kind.value} "
                                     f"[{d.lower}, {d.upper}]", row=r)
    return TrainingSet(data[:, :N], data[:, N], tuple(distributions), {"source": str(path)})


# -- problem config ----------------------------------------------------------

@dataclass(frozen=True)
class ProblemConfig:
    distributions: tuple[Distribution, ...]
    S: int
    m: int
    regression: DmorphConfig = field(default_factory=DmorphConfig)
    outputs: dict = field(default_factory=dict)

    def __post_init__(self):
        N = len(self.distributions)
        if N < 1:
            raise ParameterError("need at least one input distribution")
        if not 1 <= self.S <= N:
            raise ParameterError(f"interaction order S={self.S} must lie in [1, {N}]")
        if self.m < self.S:
            raise ParameterError(f"degree m={self.m} must be >= S={self.S}")

    @property
    def dims(self) -> int:
        return len(self.distributions)

    @property
    def n_terms(self) -> int:
        return basis_size(self.dims, self.S, self.m)

    def to_dict(self) -> dict:
        return {
            "distributions": [d.to_dict() for d in self.distributions],
            "S": self.S,
            "m": self.m,
            "regression": self.regression.to_dict(),
            "outputs": dict(self.outputs),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ProblemConfig":
        if not isinstance(d, dict):
            raise ParameterError("problem config must be a JSON object")
        try:
            dists = tuple(Distribution.from_dict(x) for x in d["distributions"])
            S, m = d["S"], d["m"]
        except KeyError as exc:
            raise ParameterError(f"problem config misses {exc}") from exc
        except TypeError as exc:
            raise ParameterError(f"bad distributions: {exc}") from exc
        if not (isinstance(S, int) and isinstance(m, int)):
            raise ParameterError("S and m must be integers")
        return cls(dists, S, m, DmorphConfig.from_dict(d.get("regression")), dict(d.get("outputs") or {}))


def load_problem_config(path) -> ProblemConfig:
    try:
        return ProblemConfig.from_dict(read_json(path))
    except FormatError as exc:
        raise ParameterError(str(exc)) from exc


# -- models and reports ------------------------------------------------------

def model_to_dict(model: PddModel, diagnostics: FitDiagnostics | None = None) -> dict:
    d = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "distributions": [x.to_dict() for x in model.distributions],
        "basis": model.basis.to_dict(),
        "coefficients": model.coefficients.tolist(),
    }
    if diagnostics is not None:
        d["diagnostics"] = diagnostics.to_dict()
    return d


def model_from_dict(d: dict) -> tuple[PddModel, FitDiagnostics | None]:
    try:
        if d.get("format") != MODEL_FORMAT:
            raise FormatError(f"not a {MODEL_FORMAT} file")
        if d.get("version") != MODEL_VERSION:
            raise FormatError(f"unsupported model version {d.get('version')!r}")
        dists = tuple(Distribution.from_dict(x) for x in d["distributions"])
        basis = BasisSet.from_dict(d["basis"])
        coeffs = np.array(d["coefficients"], dtype=float)
        model = PddModel(basis, coeffs, dists)
        diag = d.get("diagnostics")
        diag = None if diag is None else FitDiagnostics.from_dict(
            {k: (float("nan") if v is None and k in ("residual_norm", "relative_residual") else v)
             for k, v in diag.items()})
    except FormatError:
        raise
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise FormatError(f"corrupt model file: {exc}") from exc
    return model, diag


def save_model(path, model: PddModel, diagnostics: FitDiagnostics | None = None) -> None:
    write_json(path, model_to_dict(model, diagnostics))


def load_model(path) -> tuple[PddModel, FitDiagnostics | None]:
    d = read_json(path)
    if not isinstance(d, dict):
        raise FormatError(f"{path}: corrupt model file")
    return model_from_dict(d)


def save_report(report: SensitivityReport, json_path, csv_path=None) -> None:
    write_json(json_path, report.to_dict())
    if csv_path is not None:
        write_rows(csv_path, ["name", "value"], report.table_rows())


def load_report(path) -> SensitivityReport:
    return SensitivityReport.from_dict(read_json(path))
