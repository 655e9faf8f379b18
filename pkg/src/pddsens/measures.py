"""Input probability measures and their orthonormal polynomial families.

Two measures are supported: uniform on ``[lower, upper]`` (Legendre family)
and normal ``N(mean, std**2)`` (probabilists' Hermite family).  Families are
evaluated in the native coordinates of the input by first mapping ``x`` to
the reference variable ``t`` (``[-1, 1]`` or standard normal).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.special import ndtri

from .errors import DegreeError, ParameterError


class Kind(str, Enum):
    UNIFORM = "uniform"
    NORMAL = "normal"


class SamplingMethod(str, Enum):
    MONTE_CARLO = "mc"
    LATIN_HYPERCUBE = "lhs"


@dataclass(frozen=True)
class Distribution:
    """Marginal law of one input variable.

    For ``Kind.UNIFORM`` the two parameters are ``(lower, upper)``; for
    ``Kind.NORMAL`` they are ``(mean, std)``.
    """

    kind: Kind
    first: float
    second: float

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        a, b = float(self.first), float(self.second)
        if not (math.isfinite(a) and math.isfinite(b)):
            raise ParameterError(f"non-finite parameters for {self.kind.value}: {a}, {b}")
        if self.kind is Kind.UNIFORM and not a < b:
            raise ParameterError(f"uniform requires lower < upper, got [{a}, {b}]")
        if self.kind is Kind.NORMAL and not b > 0:
            raise ParameterError(f"normal requires std > 0, got {b}")
        object.__setattr__(self, "first", a)
        object.__setattr__(self, "second", b)

    @classmethod
    def uniform(cls, lower: float, upper: float) -> "Distribution":
        return cls(Kind.UNIFORM, lower, upper)

    @classmethod
    def normal(cls, mean: float = 0.0, std: float = 1.0) -> "Distribution":
        return cls(Kind.NORMAL, mean, std)

    @property
    def lower(self) -> float:
        return self.first if self.kind is Kind.UNIFORM else -math.inf

    @property
    def upper(self) -> float:
        return self.second if self.kind is Kind.UNIFORM else math.inf

    @property
    def mean(self) -> float:
        if self.kind is Kind.UNIFORM:
            return 0.5 * (self.first + self.second)
        return self.first

    @property
    def std(self) -> float:
        if self.kind is Kind.UNIFORM:
            return (self.second - self.first) / math.sqrt(12.0)
        return self.second

    def to_reference(self, x):
        """Affine map from native coordinates to the reference variable."""
        x = np.asarray(x, dtype=float)
        if self.kind is Kind.UNIFORM:
            return (2.0 * x - self.first - self.second) / (self.second - self.first)
        return (x - self.first) / self.second

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        if self.kind is Kind.UNIFORM:
            return self.first + (self.second - self.first) * u
        # a draw of exactly 0.0 would map to -inf
        u = np.clip(u, np.finfo(float).tiny, 1.0)
        return self.first + self.second * ndtri(u)

    def in_support(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.isfinite(x) & (x >= self.lower) & (x <= self.upper)

    def to_dict(self) -> dict:
        if self.kind is Kind.UNIFORM:
            return {"kind": "uniform", "lower": self.first, "upper": self.second}
        return {"kind": "normal", "mean": self.first, "std": self.second}

    @classmethod
    def from_dict(cls, d: dict) -> "Distribution":
        try:
            kind = Kind(str(d["kind"]).lower())
            if kind is Kind.UNIFORM:
                return cls.uniform(float(d["lower"]), float(d["upper"]))
            return cls.normal(float(d["mean"]), float(d["std"]))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ParameterError):
                raise
            raise ParameterError(f"bad distribution spec {d!r}: {exc}") from exc


@dataclass(frozen=True)
class PolynomialFamily:
    """Orthonormal polynomials for ``distribution`` up to degree ``max_degree``.

    The reference polynomials obey the symmetric three-term recurrence
    ``t p_n = beta[n+1] p_{n+1} + beta[n] p_{n-1}`` (zero diagonal term for
    both supported measures), with ``p_0 = 1``.
    """

    distribution: Distribution
    max_degree: int
    beta: np.ndarray = field(repr=False, compare=False)

    def __call__(self, degree: int, x):
        return eval_poly(self, degree, x)

    def eval_all(self, x) -> np.ndarray:
        """Values of degrees ``0..max_degree`` at ``x``; shape ``x.shape + (m+1,)``."""
        t = self.distribution.to_reference(x)
        out = np.empty(t.shape + (self.max_degree + 1,))
        out[..., 0] = 1.0
        if self.max_degree >= 1:
            out[..., 1] = t / self.beta[1]
        # overflow for extreme inputs surfaces as inf and is reported by the caller
        with np.errstate(over="ignore", invalid="ignore"):
            for n in range(1, self.max_degree):
                out[..., n + 1] = (t * out[..., n] - self.beta[n] * out[..., n - 1]) / self.beta[n + 1]
        return out

    def leading_coefficients(self) -> np.ndarray:
        """Leading coefficient of each ``p_n`` in the reference variable."""
        lead = np.ones(self.max_degree + 1)
        for n in range(1, self.max_degree + 1):
            lead[n] = lead[n - 1] / self.beta[n]
        return lead


def family_for(dist: Distribution, max_degree: int) -> PolynomialFamily:
    if not isinstance(dist, Distribution):
        raise ParameterError(f"expected a Distribution, got {type(dist).__name__}")
    if max_degree < 0 or int(max_degree) != max_degree:
        raise DegreeError(f"max_degree must be a non-negative integer, got {max_degree}")
    max_degree = int(max_degree)
    n = np.arange(max_degree + 2, dtype=float)
    beta = np.zeros(max_degree + 2)
    if dist.kind is Kind.UNIFORM:
        # orthonormal Legendre on [-1, 1] with density 1/2
        beta[1:] = n[1:] / np.sqrt(4.0 * n[1:] ** 2 - 1.0)
    else:
        beta[1:] = np.sqrt(n[1:])
    return PolynomialFamily(dist, max_degree, beta)


def eval_poly(fam: PolynomialFamily, degree: int, x):
    if degree < 0 or degree > fam.max_degree:
        raise DegreeError(f"degree {degree} outside 0..{fam.max_degree}")
    vals = fam.eval_all(x)[..., degree]
    return float(vals) if np.ndim(vals) == 0 else vals


def gauss_rule(dist: Distribution, n_nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss nodes (native coordinates) and probability weights for ``dist``."""
    if dist.kind is Kind.UNIFORM:
        t, w = np.polynomial.legendre.leggauss(n_nodes)
        w = w / 2.0
        x = 0.5 * (dist.first + dist.second) + 0.5 * (dist.second - dist.first) * t
    else:
        t, w = np.polynomial.hermite_e.hermegauss(n_nodes)
        w = w / math.sqrt(2.0 * math.pi)
        x = dist.first + dist.second * t
    return x, w


def gram_matrix(fam: PolynomialFamily, n_nodes: int | None = None) -> np.ndarray:
    """Quadrature estimate of ``E[p_i p_j]`` for ``i, j <= max_degree``."""
    if n_nodes is None:
        n_nodes = math.ceil((2 * fam.max_degree + 1) / 2) + 5
    x, w = gauss_rule(fam.distribution, n_nodes)
    P = fam.eval_all(x)
    return (P * w[:, None]).T @ P


def _unit_draws(rng: np.random.Generator, n: int, dims: int, method) -> np.ndarray:
    method = SamplingMethod(method)
    if method is SamplingMethod.MONTE_CARLO:
        return rng.random((n, dims))
    u = np.empty((n, dims))
    for k in range(dims):
        strata = rng.permutation(n)
        u[:, k] = (strata + rng.random(n)) / n
    return u


def sample(dist: Distribution, n: int, seed: int | None = None,
           method="mc") -> np.ndarray:
    """``n`` draws from ``dist``; LHS places one draw in each of ``n`` equal-probability bins."""
    if n < 1:
        raise ParameterError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    return dist.ppf(_unit_draws(rng, n, 1, method)[:, 0])


def sample_design(dists, n: int, seed: int | None = None, method="lhs") -> np.ndarray:
    """``n x N`` design over the product measure of ``dists``."""
    if n < 1:
        raise ParameterError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    u = _unit_draws(rng, n, len(dists), method)
    return np.column_stack([d.ppf(u[:, k]) for k, d in enumerate(dists)])
