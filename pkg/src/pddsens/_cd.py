"""Compiled coordinate-descent kernel for the l1-penalized least-squares problem."""
import numpy as np
from numba import njit

# sweeps on the active block between two full sweeps
BLOCK_SWEEPS = 50


@njit(cache=True)
def _update(G, grad, c, j, half_penalty):
    gjj = G[j, j]
    if gjj <= 0.0:
        return 0.0
    cj = c[j]
    rho = grad[j] + gjj * cj
    if rho > half_penalty:
        new = (rho - half_penalty) / gjj
    elif rho < -half_penalty:
        new = (rho + half_penalty) / gjj
    else:
        new = 0.0
    delta = new - cj
    if delta != 0.0:
        c[j] = new
        for i in range(grad.shape[0]):
            grad[i] -= G[j, i] * delta
    return abs(delta)


@njit(cache=True)
def lasso_cd_gram(G, q, half_penalty, c, tol, max_sweeps):
    """Cyclic coordinate descent on ``c'Gc - 2q'c + 2*half_penalty*|c|_1``.

    ``G = A'A`` and ``q = A'b``.  Works in place on ``c`` and returns
    ``(sweeps, converged)``.  A full sweep that moves some coordinate by
    ``tol`` or more is followed by sweeps over the nonzero coordinates only
    (on their compact Gram block) for at most ``BLOCK_SWEEPS`` sweeps or until
    they settle; convergence is declared only by a full sweep.  Every sweep
    counts toward ``max_sweeps``.
    """
    L = c.shape[0]
    sweeps = 0
    while sweeps < max_sweeps:
        grad = q - G @ c
        max_delta = 0.0
        for j in range(L):
            d = _update(G, grad, c, j, half_penalty)
            if d > max_delta:
                max_delta = d
        sweeps += 1
        if max_delta < tol:
            return sweeps, True

        idx = np.flatnonzero(c)
        n = idx.shape[0]
        if n == 0:
            continue
        Ga = np.empty((n, n))
        for a in range(n):
            for b in range(n):
                Ga[a, b] = G[idx[a], idx[b]]
        ca = c[idx].copy()
        grada = q[idx] - Ga @ ca
        # coordinates outside the block are zero, so grad restricted to the
        # block only depends on the block
        for _ in range(min(BLOCK_SWEEPS, max_sweeps - sweeps)):
            max_delta = 0.0
            for a in range(n):
                d = _update(Ga, grada, ca, a, half_penalty)
                if d > max_delta:
                    max_delta = d
            sweeps += 1
            if max_delta < tol:
                break
        for a in range(n):
            c[idx[a]] = ca[a]
    return sweeps, False
