"""Truncated polynomial dimensional decomposition (PDD) bases.

A basis term is a pair ``(U, j_U)``: a sorted tuple of 0-based variable
indices and one positive degree per variable.  The constant term has an
empty subset and always comes first.  Subsets are written 1-based whenever
they leave the process (JSON, CSV, index names).
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from math import comb
from typing import Sequence

import numpy as np

from .errors import NumericError, ParameterError, ShapeError, TruncationError
from .measures import Distribution, PolynomialFamily, family_for


@dataclass(frozen=True, order=True)
class BasisTerm:
    subset: tuple[int, ...] = ()
    degrees: tuple[int, ...] = ()

    def __post_init__(self):
        subset = tuple(int(i) for i in self.subset)
        degrees = tuple(int(j) for j in self.degrees)
        if len(subset) != len(degrees):
            raise ShapeError(f"subset {subset} and degrees {degrees} differ in length")
        if any(b <= a for a, b in zip(subset, subset[1:])):
            raise TruncationError(f"subset indices must be strictly increasing: {subset}")
        if any(j < 1 for j in degrees):
            raise TruncationError(f"degrees must be positive: {degrees}")
        object.__setattr__(self, "subset", subset)
        object.__setattr__(self, "degrees", degrees)

    @property
    def is_constant(self) -> bool:
        return not self.subset

    @property
    def total_degree(self) -> int:
        return sum(self.degrees)

    def to_dict(self) -> dict:
        return {"subset": [i + 1 for i in self.subset], "degrees": list(self.degrees)}

    @classmethod
    def from_dict(cls, d: dict) -> "BasisTerm":
        return cls(tuple(i - 1 for i in d["subset"]), tuple(d["degrees"]))


def basis_size(N: int, S: int, m: int) -> int:
    """Number of coefficients ``L`` of the S-variate, m-th order truncation."""
    return 1 + sum(comb(N, s) * comb(m, s) for s in range(1, S + 1))


@dataclass(frozen=True)
class BasisSet:
    terms: tuple[BasisTerm, ...]
    dims: int
    order: int
    variate: int
    _index: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_index", {t: k for k, t in enumerate(self.terms)})

    def __len__(self):
        return len(self.terms)

    def __iter__(self):
        return iter(self.terms)

    def __getitem__(self, k):
        return self.terms[k]

    def index(self, term: BasisTerm) -> int:
        return self._index[term]

    def families(self, dists: Sequence[Distribution]) -> list[PolynomialFamily]:
        if len(dists) != self.dims:
            raise ShapeError(f"basis has {self.dims} dimensions, got {len(dists)} distributions")
        return [family_for(d, self.order) for d in dists]

    def to_dict(self) -> dict:
        return {
            "dims": self.dims,
            "order": self.order,
            "variate": self.variate,
            "terms": [t.to_dict() for t in self.terms],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BasisSet":
        terms = tuple(BasisTerm.from_dict(t) for t in d["terms"])
        return cls(terms, int(d["dims"]), int(d["order"]), int(d["variate"]))


def enumerate_basis(N: int, S: int, m: int) -> BasisSet:
    """All terms with ``1 <= |U| <= S`` and ``|U| <= sum(j_U) <= m``, plus the constant.

    Ordered by ``|U|``, then lexicographically by ``U``, then by ``j_U``.
    """
    if N < 1 or S < 1 or S > N:
        raise TruncationError(f"need 1 <= S <= N, got S={S}, N={N}")
    if m < S:
        raise TruncationError(f"need m >= S, got m={m}, S={S}")
    terms = [BasisTerm()]
    for s in range(1, S + 1):
        degree_tuples = [
            j for j in itertools.product(range(1, m - s + 2), repeat=s) if sum(j) <= m
        ]
        for subset in itertools.combinations(range(N), s):
            terms.extend(BasisTerm(subset, j) for j in degree_tuples)
    return BasisSet(tuple(terms), N, m, S)


def eval_basis_term(term: BasisTerm, families: Sequence[PolynomialFamily], x) -> float:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != len(families):
        raise ShapeError(f"expected a point of length {len(families)}, got shape {x.shape}")
    value = 1.0
    for i, j in zip(term.subset, term.degrees):
        value *= families[i](j, x[i])
    return float(value)


def _univariate_tables(X: np.ndarray, families: Sequence[PolynomialFamily]) -> list[np.ndarray]:
    return [fam.eval_all(X[:, i]) for i, fam in enumerate(families)]


def evaluate_basis(basis: BasisSet, dists: Sequence[Distribution], X) -> np.ndarray:
    """Matrix of basis values, one row per point of ``X`` (``n x N``)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != basis.dims:
        raise ShapeError(f"points have {X.shape[1]} columns, basis expects {basis.dims}")
    tables = _univariate_tables(X, basis.families(dists))
    out = np.ones((X.shape[0], len(basis)))
    for k, term in enumerate(basis.terms):
        for i, j in zip(term.subset, term.degrees):
            out[:, k] *= tables[i][:, j]
    return out


@dataclass(frozen=True)
class TrainingSet:
    inputs: np.ndarray
    outputs: np.ndarray
    distributions: tuple[Distribution, ...]
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        X = np.atleast_2d(np.array(self.inputs, dtype=float))
        y = np.array(self.outputs, dtype=float).reshape(-1)
        dists = tuple(self.distributions)
        if X.shape[0] < 1:
            raise ShapeError("a training set needs at least one sample")
        if X.shape[0] != y.shape[0]:
            raise ShapeError(f"{X.shape[0]} input rows but {y.shape[0]} outputs")
        if X.shape[1] != len(dists):
            raise ShapeError(f"{X.shape[1]} input columns but {len(dists)} distributions")
        if not (np.isfinite(X).all() and np.isfinite(y).all()):
            raise NumericError("training data contains non-finite values")
        for k, d in enumerate(dists):
            bad = np.flatnonzero(~d.in_support(X[:, k]))
            if bad.size:
                raise ParameterError(
                    f"row {bad[0] + 1}: x{k + 1}={X[bad[0], k]!r} outside support of {d.to_dict()}"
                )
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "inputs", X)
        object.__setattr__(self, "outputs", y)
        object.__setattr__(self, "distributions", dists)

    @property
    def size(self) -> int:
        return self.inputs.shape[0]

    @property
    def dims(self) -> int:
        return self.inputs.shape[1]


def design_matrix(ts: TrainingSet, basis: BasisSet) -> tuple[np.ndarray, np.ndarray]:
    A = evaluate_basis(basis, ts.distributions, ts.inputs)
    bad = np.argwhere(~np.isfinite(A))
    if bad.size:
        row, col = bad[0]
        raise NumericError(f"non-finite basis value at row {row + 1}, column {col + 1}")
    return A, np.array(ts.outputs)


@dataclass(frozen=True)
class PddModel:
    basis: BasisSet
    coefficients: np.ndarray
    distributions: tuple[Distribution, ...]

    def __post_init__(self):
        c = np.array(self.coefficients, dtype=float).reshape(-1)
        if c.shape[0] != len(self.basis):
            raise ShapeError(f"{c.shape[0]} coefficients for a basis of {len(self.basis)} terms")
        if not np.isfinite(c).all():
            raise NumericError("model coefficients must be finite")
        if len(self.distributions) != self.basis.dims:
            raise ShapeError("one distribution per input dimension is required")
        c.setflags(write=False)
        object.__setattr__(self, "coefficients", c)
        object.__setattr__(self, "distributions", tuple(self.distributions))

    def predict(self, x) -> float | np.ndarray:
        """Surrogate value at a point (length-N) or at each row of an ``n x N`` array."""
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            if x.shape[0] != self.basis.dims:
                raise ShapeError(f"expected a point of length {self.basis.dims}, got {x.shape[0]}")
            return float((evaluate_basis(self.basis, self.distributions, x[None, :]) @ self.coefficients)[0])
        return evaluate_basis(self.basis, self.distributions, x) @ self.coefficients

    __call__ = predict

    def with_coefficients(self, c) -> "PddModel":
        return PddModel(self.basis, c, self.distributions)


def predict(model: PddModel, x):
    return model.predict(x)
