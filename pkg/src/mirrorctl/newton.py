"""Batched damped Newton for gradient equations ``grad F(y) = x``.

Solving ``grad F(y) = x`` for strictly convex ``F`` is the same as minimizing
``F(y) - <x, y>``, so Armijo backtracking on that function globalizes the
iteration. Every row of the batch gets its own step length.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import NewtonDivergence

DEFAULT_TOL = 1e-12
DEFAULT_MAX_ITERS = 100

_ARMIJO_C = 1e-4
_MAX_HALVINGS = 60


@dataclass(frozen=True)
class NewtonSettings:
    tolerance: float = DEFAULT_TOL
    max_iters: int = DEFAULT_MAX_ITERS

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


def spd_solve(H: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Solve ``H d = r`` for a batch of SPD matrices via Cholesky.

    ``H`` has shape (m, n, n) or (m, n) for diagonal matrices.
    """
    if H.ndim == r.ndim:
        if np.any(~(H > 0)):
            raise NewtonDivergence("diagonal Hessian is not positive definite")
        return r / H
    try:
        L = np.linalg.cholesky(H)
    except np.linalg.LinAlgError as exc:
        raise NewtonDivergence("Hessian is not positive definite") from exc
    z = np.linalg.solve(L, r[..., None])
    return np.linalg.solve(np.swapaxes(L, -1, -2), z)[..., 0]


def solve_gradient_equation(
    value: Callable[[np.ndarray], np.ndarray],
    gradient: Callable[[np.ndarray], np.ndarray],
    hessian: Callable[[np.ndarray], np.ndarray],
    target: np.ndarray,
    y0: np.ndarray,
    settings: NewtonSettings = NewtonSettings(),
) -> np.ndarray:
    """Return ``y`` with ``|gradient(y) - target| <= tol * (1 + |target|_inf)`` per row.

    All callables act on arrays of shape (m, n); ``hessian`` may return full
    (m, n, n) matrices or (m, n) diagonals.
    """
    x = np.atleast_2d(np.asarray(target, dtype=float))
    y = np.array(np.broadcast_to(y0, x.shape), dtype=float)
    scale = settings.tolerance * (1.0 + np.max(np.abs(x), axis=-1))

    g = gradient(y) - x
    res = np.linalg.norm(g, axis=-1)
    active = res > scale
    for _ in range(settings.max_iters):
        if not np.any(active):
            return y
        ya, ga, xa = y[active], g[active], x[active]
        d = -spd_solve(hessian(ya), ga)
        psi = value(ya) - np.einsum("ij,ij->i", xa, ya)
        slope = np.einsum("ij,ij->i", ga, d)
        t = np.ones(len(ya))
        pending = np.ones(len(ya), dtype=bool)
        y_new = ya.copy()
        g_new = ga.copy()
        for _ in range(_MAX_HALVINGS):
            idx = np.flatnonzero(pending)
            if idx.size == 0:
                break
            trial = ya[idx] + t[idx, None] * d[idx]
            g_trial = gradient(trial) - xa[idx]
            psi_trial = value(trial) - np.einsum("ij,ij->i", xa[idx], trial)
            ok = np.isfinite(psi_trial) & (
                (psi_trial <= psi[idx] + _ARMIJO_C * t[idx] * slope[idx])
                | (np.linalg.norm(g_trial, axis=-1) < res[active][idx])
            )
            acc = idx[ok]
            y_new[acc] = trial[ok]
            g_new[acc] = g_trial[ok]
            pending[acc] = False
            t[idx[~ok]] *= 0.5
        if not np.all(np.isfinite(y_new)):
            raise NewtonDivergence("non-finite Newton iterate")
        y[active] = y_new
        g[active] = g_new
        res[active] = np.linalg.norm(g_new, axis=-1)
        active = res > scale
    if np.any(active):
        raise NewtonDivergence(
            f"no convergence in {settings.max_iters} iterations "
            f"(worst residual {float(np.max(res)):.3e})"
        )
    return y
