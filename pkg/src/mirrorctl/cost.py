"""Instantaneous cost, value functions and the Fenchel-Young and HJB residuals."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .objectives import ObjectiveSpec
from .potentials import PotentialSpec, _as_points, bregman_dual, bregman_primal

XBAR_TOL = 1e-10


@dataclass(frozen=True)
class ProblemInstance:
    """An objective/potential pair plus the stochastic temperature and horizon.

    ``x_bar`` (the mirror image of the minimizer) is computed on construction.
    """

    objective: ObjectiveSpec
    potential: PotentialSpec
    epsilon: float = 0.0
    horizon_T: float = 1.0
    x_bar: np.ndarray = field(init=False, repr=False)
    y_bar: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.objective.dimension != self.potential.dimension:
            raise ValueError(
                f"objective dimension {self.objective.dimension} != "
                f"potential dimension {self.potential.dimension}"
            )
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        if not self.horizon_T > 0:
            raise ValueError("horizon_T must be positive")
        y_bar = np.asarray(self.objective.minimizer(), dtype=float)
        x_bar = self.potential.gradient(y_bar)
        if np.max(np.abs(self.potential.conjugate_gradient(x_bar) - y_bar)) > XBAR_TOL * (
            1 + np.max(np.abs(y_bar))
        ):
            raise ValueError("mirror map round trip failed at the minimizer")
        y_bar.setflags(write=False)
        x_bar.setflags(write=False)
        object.__setattr__(self, "y_bar", y_bar)
        object.__setattr__(self, "x_bar", x_bar)

    @property
    def n(self) -> int:
        return self.objective.dimension

    @property
    def f_min(self) -> float:
        return float(self.objective.value(self.y_bar))

    def optimal_control(self, x) -> np.ndarray:
        """Mirror-descent feedback -grad f(grad phi*(x))."""
        return -self.objective.gradient(self.potential.conjugate_gradient(x))

    def to_config(self) -> dict:
        return {
            "objective": self.objective.to_config(),
            "potential": self.potential.to_config(),
            "epsilon": self.epsilon,
            "horizon_T": self.horizon_T,
        }


def instantaneous_cost(pi: ProblemInstance, x, u) -> np.ndarray:
    """q(x, u) = f(grad phi*(x)) + f*(-u) + <u, y_bar>."""
    x = _as_points(x, pi.n)
    u = _as_points(u, pi.n)
    f = pi.objective
    y = pi.potential.conjugate_gradient(x)
    return f.value(y) + f.conjugate(-u) + u @ pi.y_bar


def deterministic_value(pi: ProblemInstance, x) -> np.ndarray:
    """V(x) = D_phi*(x, x_bar)."""
    return bregman_dual(pi.potential, x, pi.x_bar)


def primal_value(pi: ProblemInstance, x) -> np.ndarray:
    """The same value read through duality: D_phi(y_bar, grad phi*(x))."""
    return bregman_primal(pi.potential, pi.y_bar, pi.potential.conjugate_gradient(x))


def lemma1_residual(pi: ProblemInstance, x, u) -> np.ndarray:
    """Fenchel-Young gap f(y) + f*(-u) + <u, y> at y = grad phi*(x)."""
    x = _as_points(x, pi.n)
    u = _as_points(u, pi.n)
    y = pi.potential.conjugate_gradient(x)
    f = pi.objective
    return f.value(y) + f.conjugate(-u) + np.sum(u * y, axis=-1)


def _check_time(pi: ProblemInstance, t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(t > pi.horizon_T):
        raise ValueError(f"t must lie in [0, {pi.horizon_T}]")
    return t


def stochastic_value(pi: ProblemInstance, x, t) -> np.ndarray:
    """V(x, t) = D_phi*(x, x_bar) + eps n (T - t)."""
    t = _check_time(pi, t)
    return deterministic_value(pi, x) + pi.epsilon * pi.n * (pi.horizon_T - t)


def hjb_residual(pi: ProblemInstance, x, t, u) -> np.ndarray:
    """dV/dt + L^u V + q evaluated from the generator of the controlled diffusion.

    Uses dV/dt = -eps n, grad V = grad phi*(x) - y_bar and
    hess V = hess phi*(x); the diffusion term is eps tr((hess phi*)^{-1} hess V).
    """
    if not pi.epsilon > 0:
        raise ValueError("hjb_residual needs epsilon > 0")
    t = _check_time(pi, t)
    x = _as_points(x, pi.n)
    u = _as_points(u, pi.n)
    p = pi.potential
    dV_dt = -pi.epsilon * pi.n * np.ones(np.broadcast_shapes(t.shape, x.shape[:-1]))
    grad_V = p.conjugate_gradient(x) - pi.y_bar
    if p.diagonal:
        H = p.conjugate_hessian_diag(x)
        trace = np.sum(H / H, axis=-1)
    else:
        H = p.conjugate_hessian(x)
        trace = np.trace(np.linalg.solve(H, H), axis1=-2, axis2=-1)
    generator = np.sum(u * grad_V, axis=-1) + pi.epsilon * trace
    return dV_dt + generator + instantaneous_cost(pi, x, u)
