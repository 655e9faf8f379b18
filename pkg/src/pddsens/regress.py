"""Solvers for PDD expansion coefficients.

Overdetermined systems use the minimum-norm least-squares solution.  For
underdetermined systems (fewer samples than coefficients) the coefficients
come from an l1-penalized fit followed by a D-MORPH homotopy: the solution
slides along the affine manifold ``{c : A c = b}`` until a weighted distance
to a sparse target is minimal, and the target is refined over iterations
with reweighting ``1 / (|c| + eps)``.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg

from . import _cd
from .errors import ConditioningError, NumericError, ParameterError, ShapeError
from .pdd import BasisSet, PddModel, TrainingSet, design_matrix

log = logging.getLogger(__name__)

EPS = np.finfo(float).eps
# (E'F) blocks beyond this condition number make the projector meaningless
MAX_CONDITION = 1e13

LASSO_TOL = 1e-8
LASSO_MAX_SWEEPS = 10_000
# cross-validation only needs the out-of-fold error to a few digits
CV_PATH_SWEEPS = 1_000


class LassoConvergenceWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class SvdFactors:
    """Full SVD ``A = U diag(s) Vt`` with numerical rank ``rank``."""

    u: np.ndarray
    s: np.ndarray
    vt: np.ndarray
    rank: int

    @property
    def null_basis(self) -> np.ndarray:
        """Orthonormal basis of the null space of ``A`` (columns)."""
        return self.vt[self.rank:].T

    @property
    def nullity(self) -> int:
        return self.vt.shape[0] - self.rank


@dataclass(frozen=True)
class DmorphConfig:
    lam: float = 0.5
    epsilon: float = 1e-6
    max_iterations: int = 30
    convergence_tol: float = 1e-8
    rank_tol: float | None = None
    enforce_fit: bool = True
    lasso_folds: int = 5
    lasso_grid_size: int = 50
    solver: str = "svd"

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ParameterError(f"lambda must lie in [0, 1], got {self.lam}")
        if not self.epsilon > 0:
            raise ParameterError(f"epsilon must be positive, got {self.epsilon}")
        if self.max_iterations < 0 or int(self.max_iterations) != self.max_iterations:
            raise ParameterError(f"max_iterations must be a non-negative integer, got {self.max_iterations}")
        if self.rank_tol is not None and not self.rank_tol > 0:
            raise ParameterError(f"rank_tol must be positive or null, got {self.rank_tol}")
        if self.lasso_folds < 2 or self.lasso_grid_size < 1:
            raise ParameterError("lasso needs folds >= 2 and grid_size >= 1")
        if self.solver not in ("svd", "nullspace"):
            raise ParameterError(f"solver must be 'svd' or 'nullspace', got {self.solver!r}")

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "epsilon": self.epsilon,
            "max_iterations": self.max_iterations,
            "convergence_tol": self.convergence_tol,
            "rank_tol": self.rank_tol,
            "enforce_fit": self.enforce_fit,
            "solver": self.solver,
            "lasso": {"folds": self.lasso_folds, "grid_size": self.lasso_grid_size},
        }

    @classmethod
    def from_dict(cls, d: dict | None) -> "DmorphConfig":
        d = dict(d or {})
        lasso = d.pop("lasso", None) or {}
        known = {
            "lambda": "lam",
            "epsilon": "epsilon",
            "max_iterations": "max_iterations",
            "convergence_tol": "convergence_tol",
            "rank_tol": "rank_tol",
            "enforce_fit": "enforce_fit",
            "solver": "solver",
        }
        unknown = set(d) - set(known) - {"method"}
        if unknown:
            raise ParameterError(f"unknown regression settings: {sorted(unknown)}")
        kwargs = {known[k]: v for k, v in d.items() if k in known}
        if "folds" in lasso:
            kwargs["lasso_folds"] = int(lasso["folds"])
        if "grid_size" in lasso:
            kwargs["lasso_grid_size"] = int(lasso["grid_size"])
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ParameterError(str(exc)) from exc


@dataclass
class FitDiagnostics:
    method: str
    path: str = ""
    n_samples: int = 0
    n_terms: int = 0
    rank: int = 0
    residual_norm: float = float("nan")
    relative_residual: float = float("nan")
    iterations: int = 0
    change_history: list = field(default_factory=list)
    cost_history: list = field(default_factory=list)
    start_cost_history: list = field(default_factory=list)
    lasso_penalty: float | None = None
    lasso_converged: bool | None = None
    converged: bool | None = None
    # in-memory only; not serialized
    snapshots: dict = field(default_factory=dict, repr=False)
    lasso_coefficients: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        del d["snapshots"], d["lasso_coefficients"]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FitDiagnostics":
        return cls(**d)


def _check_finite(A, name="matrix"):
    if not np.isfinite(A).all():
        raise NumericError(f"{name} contains non-finite entries")


def _svd(M, full_matrices=True):
    try:
        return np.linalg.svd(M, full_matrices=full_matrices)
    except np.linalg.LinAlgError:
        # divide-and-conquer can fail on highly degenerate spectra (projectors)
        log.debug("gesdd failed on a %s matrix, retrying with gesvd", M.shape)
        return scipy.linalg.svd(M, full_matrices=full_matrices, lapack_driver="gesvd")


def _rank(s: np.ndarray, shape, rank_tol: float | None) -> int:
    if s.size == 0 or s[0] == 0.0:
        return 0
    rel = rank_tol if rank_tol is not None else max(shape) * EPS
    return int(np.count_nonzero(s > rel * s[0]))


def svd_factors(A, rank_tol: float | None = None) -> SvdFactors:
    """Full SVD of ``A``; ``rank_tol`` is relative to the largest singular value.

    The default cutoff is ``max(M, L) * eps * s_max``.
    """
    A = np.asarray(A, dtype=float)
    _check_finite(A)
    u, s, vt = _svd(A)
    return SvdFactors(u, s, vt, _rank(s, A.shape, rank_tol))


def pseudoinverse(A, rank_tol: float | None = None) -> tuple[np.ndarray, SvdFactors]:
    f = svd_factors(A, rank_tol)
    r = f.rank
    pinv = (f.vt[:r].T / f.s[:r]) @ f.u[:, :r].T
    return pinv, f


def null_projector(A, A_pinv) -> np.ndarray:
    """Orthogonal projector ``I - A^+ A`` onto the null space of ``A``."""
    A = np.asarray(A, dtype=float)
    A_pinv = np.asarray(A_pinv, dtype=float)
    if A_pinv.shape != A.shape[::-1]:
        raise ShapeError(f"pseudoinverse shape {A_pinv.shape} does not match {A.shape[::-1]}")
    return np.eye(A.shape[1]) - A_pinv @ A


def least_squares(A, b, rank_tol: float | None = None) -> np.ndarray:
    pinv, _ = pseudoinverse(A, rank_tol)
    return pinv @ np.asarray(b, dtype=float)


# -- l1-penalized regression -------------------------------------------------


def _lasso_gram(G, q, k, c=None, max_sweeps=LASSO_MAX_SWEEPS):
    c = np.zeros(q.shape[0]) if c is None else np.array(c, dtype=float)
    sweeps, converged = _cd.lasso_cd_gram(
        np.ascontiguousarray(G), np.ascontiguousarray(q), 0.5 * k, c, LASSO_TOL, max_sweeps
    )
    return c, sweeps, converged


def lasso(A, b, k: float, c_init=None) -> np.ndarray:
    """Minimize ``|b - A c|^2 + k * |c|_1`` by cyclic coordinate descent.

    Stops when no coefficient moves by more than 1e-8 in a full sweep, or
    after 10^4 sweeps (a ``LassoConvergenceWarning`` is issued then).
    """
    if k < 0:
        raise ParameterError(f"penalty must be non-negative, got {k}")
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    _check_finite(A)
    c, sweeps, converged = _lasso_gram(A.T @ A, A.T @ b, float(k), c_init)
    if not converged:
        warnings.warn(f"lasso did not converge in {sweeps} sweeps (k={k:g})", LassoConvergenceWarning)
    return c


def default_penalty_grid(A, b, size: int = 50) -> np.ndarray:
    scale = np.abs(np.asarray(A).T @ np.asarray(b)).max()
    if scale == 0.0:
        scale = 1.0
    return np.geomspace(1e1, 1e-4, size) * scale


def lasso_cv(A, b, grid=None, folds: int = 5, seed: int | None = 0, grid_size: int = 50,
             path_max_sweeps: int = CV_PATH_SWEEPS, return_info: bool = False):
    """Choose the l1 penalty by K-fold cross-validation and refit on all data.

    Fold fits walk the penalty path from large to small with warm starts and
    at most ``path_max_sweeps`` sweeps per penalty; the refit at the chosen
    penalty runs to the full ``lasso`` tolerance.  Returns ``(k_best, c0)``,
    plus an info dict when ``return_info`` is set.  Ties in the out-of-fold
    error go to the larger penalty.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    _check_finite(A)
    M = A.shape[0]
    if folds < 2:
        raise ParameterError(f"need at least 2 folds, got {folds}")
    if M < folds:
        raise ParameterError(f"cannot split {M} samples into {folds} folds")
    grid = default_penalty_grid(A, b, grid_size) if grid is None else np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ParameterError("penalty grid is empty")
    if (grid < 0).any():
        raise ParameterError("penalties must be non-negative")
    order = np.argsort(-grid, kind="stable")
    path = grid[order]

    rng = np.random.default_rng(seed)
    parts = np.array_split(rng.permutation(M), folds)
    G = A.T @ A
    q = A.T @ b
    cv_err = np.zeros((folds, path.size))
    all_converged = True
    for f, test in enumerate(parts):
        At, bt = A[test], b[test]
        Gf = G - At.T @ At
        qf = q - At.T @ bt
        c = np.zeros(A.shape[1])
        for p, k in enumerate(path):
            c, _, ok = _lasso_gram(Gf, qf, k, c, path_max_sweeps)
            all_converged &= ok
            cv_err[f, p] = np.mean((bt - At @ c) ** 2)
    mean_err = cv_err.mean(axis=0)
    best = int(np.argmin(mean_err))

    c = np.zeros(A.shape[1])
    for k in path[:best]:
        c, _, _ = _lasso_gram(G, q, k, c, path_max_sweeps)
    c, _, ok = _lasso_gram(G, q, path[best], c)
    if not ok:
        warnings.warn(f"lasso did not converge at the selected penalty {path[best]:g}",
                      LassoConvergenceWarning)
    k_best = float(path[best])
    if return_info:
        info = {
            "grid": path.tolist(),
            "cv_error": mean_err.tolist(),
            "converged": bool(ok),
            "path_converged": bool(all_converged),
        }
        return k_best, c, info
    return k_best, c


# -- D-MORPH -----------------------------------------------------------------


def _flow_limit(P, a0, target, max_rank, scale=None):
    """Limit as t -> inf of ``da/dt = -P (a - target)``, ``a(0) = a0``.

    With the SVD ``P = E diag(T) F'`` of numerical rank ``r`` the limit is
    ``target + F_n (E_n' F_n)^{-1} E_n' (a0 - target)``, where ``E_n, F_n``
    hold the trailing ``L - r`` singular vectors.  ``max_rank`` caps ``r``
    (the rank of ``P = Phi W`` cannot exceed that of ``Phi``).  ``scale``
    bounds the norm of the factors of ``P`` so that a product which cancels
    to rounding noise is not mistaken for a nonzero rank.
    """
    L = P.shape[0]
    if max_rank == 0:
        return np.array(a0, dtype=float)
    E, t, Ft = _svd(P)
    if scale is not None and t.size and t[0] < scale:
        r = int(np.count_nonzero(t > max(P.shape) * EPS * scale))
    else:
        r = _rank(t, P.shape, None)
    r = min(r, max_rank)
    if r == 0:
        return np.array(a0, dtype=float)
    if r == L:
        return np.array(target, dtype=float)
    En = E[:, r:]
    Fn = Ft[r:].T
    B = En.T @ Fn
    cond = np.linalg.cond(B)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise ConditioningError("E'F block of the projected weight matrix is singular", cond)
    return target + Fn @ np.linalg.solve(B, En.T @ (a0 - target))


def _manifold_setup(A, b, rank_tol):
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.ndim != 2 or b.shape != (A.shape[0],):
        raise ShapeError(f"incompatible shapes A{A.shape}, b{b.shape}")
    _check_finite(b, "right-hand side")
    pinv, f = pseudoinverse(A, rank_tol)
    phi = null_projector(A, pinv)
    return A, b, pinv, f, phi


def dmorph_original(A, b, D, rank_tol: float | None = None) -> np.ndarray:
    """Point of ``{A c = b}`` reached by the homotopy minimizing ``c' D c / 2``."""
    A, b, pinv, f, phi = _manifold_setup(A, b, rank_tol)
    D = np.asarray(D, dtype=float)
    L = A.shape[1]
    if D.shape != (L, L):
        raise ShapeError(f"weight matrix must be {L}x{L}, got {D.shape}")
    _check_finite(D, "weight matrix")
    scale = max(np.abs(D).max(), 1.0)
    if np.abs(D - D.T).max() > 1e-12 * scale:
        raise ParameterError("weight matrix must be symmetric")
    if np.linalg.eigvalsh(D).min() < -1e-12 * scale:
        raise ParameterError("weight matrix must be non-negative definite")
    return _flow_limit(phi @ D, pinv @ b, np.zeros(L), f.nullity, scale=np.abs(D).sum(axis=1).max())


def dmorph_initial(A, b, c0, rank_tol: float | None = None) -> np.ndarray:
    """Point of ``{A c = b}`` closest to ``c0`` in the Euclidean norm."""
    A, b, pinv, f, phi = _manifold_setup(A, b, rank_tol)
    c0 = _as_coefficients(c0, A.shape[1])
    return _flow_limit(phi, pinv @ b, c0, f.nullity, scale=1.0)


def _as_coefficients(c, L):
    c = np.asarray(c, dtype=float).reshape(-1)
    if c.shape[0] != L:
        raise ShapeError(f"expected {L} coefficients, got {c.shape[0]}")
    _check_finite(c, "coefficient vector")
    return c


def _weights(c, epsilon):
    w = 1.0 / (np.abs(c) + epsilon)
    w[0] = 0.0
    return w


def sparse_cost(a, c0, c1, w, lam) -> float:
    """Weighted two-anchor cost minimized by each refinement step."""
    d0 = a - c0
    d1 = a - c1
    return 0.5 * lam * float(d0 @ (w * d0)) + 0.5 * (1.0 - lam) * float(d1 @ (w * d1))


def _nullspace_limit(Z, a0, target, w):
    """Minimizer of ``(a - target)' W (a - target)`` over ``a0 + span(Z)``."""
    ZW = Z.T * w
    H = ZW @ Z
    rhs = ZW @ (target - a0)
    try:
        y = scipy.linalg.solve(H, rhs, assume_a="pos")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
        y = np.linalg.lstsq(H, rhs, rcond=None)[0]
    return a0 + Z @ y


def dmorph_sparse(A, b, c0, cfg: DmorphConfig | None = None, keep_iterates=()):
    """Iterative Lasso-anchored D-MORPH regression.

    Starting from the manifold point closest to ``c0``, each iteration
    reweights with ``W = diag(0, 1/(|c_2|+eps), ...)`` built from the previous
    iterate and moves to the manifold point minimizing
    ``lam/2 |a - c0|_W^2 + (1-lam)/2 |a - c1|_W^2``, where ``c1`` is the
    running average of all earlier iterates.

    Returns ``(c, diagnostics)``; ``diagnostics.snapshots`` maps each
    iteration listed in ``keep_iterates`` to its coefficient vector (the last
    iterate is used for iterations past an early stop).
    """
    cfg = cfg or DmorphConfig()
    A, b, pinv, f, phi = _manifold_setup(A, b, cfg.rank_tol)
    L = A.shape[1]
    c0 = _as_coefficients(c0, L)
    a0 = pinv @ b
    keep = sorted(set(int(i) for i in keep_iterates))

    diag = FitDiagnostics(method="dmorph", n_samples=A.shape[0], n_terms=L, rank=f.rank)
    snapshots = {}

    def correct(c):
        return c + pinv @ (b - A @ c) if cfg.enforce_fit else c

    Z = f.null_basis if cfg.solver == "nullspace" else None
    if Z is None:
        current = _flow_limit(phi, a0, c0, f.nullity, scale=1.0)
    else:
        current = a0 + Z @ (Z.T @ (c0 - a0))
    if not np.isfinite(current).all():
        raise NumericError("non-finite coefficients at iteration 0")
    if 0 in keep:
        snapshots[0] = correct(current)
    running_sum = current.copy()

    converged = cfg.max_iterations == 0
    i = 0
    for i in range(1, cfg.max_iterations + 1):
        prior = running_sum / i
        w = _weights(current, cfg.epsilon)
        target = cfg.lam * c0 + (1.0 - cfg.lam) * prior
        if Z is None:
            new = _flow_limit(phi * w, a0, target, f.nullity, scale=w.max())
        else:
            new = _nullspace_limit(Z, a0, target, w)
        if not np.isfinite(new).all():
            raise NumericError(f"non-finite coefficients at iteration {i}")
        diag.cost_history.append(sparse_cost(new, c0, prior, w, cfg.lam))
        diag.start_cost_history.append(sparse_cost(a0, c0, prior, w, cfg.lam))
        change = np.linalg.norm(new - current) / max(np.linalg.norm(current), EPS)
        diag.change_history.append(float(change))
        current = new
        running_sum += new
        if i in keep:
            snapshots[i] = correct(current)
        if change < cfg.convergence_tol:
            converged = True
            break
    diag.iterations = i
    diag.converged = converged

    result = correct(current)
    for k in keep:
        snapshots.setdefault(k, result)
    diag.snapshots = snapshots
    _record_residual(diag, A, b, result)
    return result, diag


def _record_residual(diag, A, b, c):
    diag.residual_norm = float(np.linalg.norm(A @ c - b))
    nb = np.linalg.norm(b)
    diag.relative_residual = diag.residual_norm / nb if nb > 0 else diag.residual_norm


# -- workflow ----------------------------------------------------------------

METHODS = ("auto", "ls", "lasso", "dmorph")


def fit(ts: TrainingSet, basis: BasisSet, cfg: DmorphConfig | None = None,
        method: str = "auto", seed: int | None = 0, keep_iterates=()):
    """Fit PDD coefficients to a training set.

    ``method='auto'`` uses least squares when there are at least as many
    samples as basis terms, and otherwise a cross-validated Lasso fit
    followed by sparse D-MORPH refinement.
    """
    cfg = cfg or DmorphConfig()
    if method not in METHODS:
        raise ParameterError(f"method must be one of {METHODS}, got {method!r}")
    if ts.dims != basis.dims:
        raise ShapeError(f"training set has {ts.dims} inputs, basis expects {basis.dims}")
    A, b = design_matrix(ts, basis)
    M, L = A.shape
    path = "overdetermined" if M >= L else "underdetermined"
    if method == "auto":
        method = "ls" if M >= L else "dmorph"

    if method == "ls":
        pinv, f = pseudoinverse(A, cfg.rank_tol)
        c = pinv @ b
        diag = FitDiagnostics(method="least_squares", n_samples=M, n_terms=L, rank=f.rank)
        _record_residual(diag, A, b, c)
    else:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", LassoConvergenceWarning)
            k, c0 = lasso_cv(A, b, folds=cfg.lasso_folds, seed=seed, grid_size=cfg.lasso_grid_size)
        lasso_ok = not any(issubclass(w.category, LassoConvergenceWarning) for w in caught)
        if method == "lasso":
            c = c0
            diag = FitDiagnostics(method="lasso", n_samples=M, n_terms=L,
                                  rank=int(np.linalg.matrix_rank(A)))
            _record_residual(diag, A, b, c)
        else:
            c, diag = dmorph_sparse(A, b, c0, cfg, keep_iterates=keep_iterates)
            diag.lasso_coefficients = c0
        diag.lasso_penalty = k
        diag.lasso_converged = lasso_ok
    diag.path = path
    log.info("fit %s (%s): M=%d L=%d residual=%.3e", diag.method, path, M, L, diag.residual_norm)
    return PddModel(basis, c, ts.distributions), diag
