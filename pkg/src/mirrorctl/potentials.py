"""Legendre-type potentials, their conjugates, and Bregman divergences.

Every method accepts a single point of shape (n,) or a batch of shape
(..., n) and broadcasts over the leading axes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import ClassVar, Optional

import numpy as np

from .errors import DimensionError, NegativeDivergence, NewtonDivergence
from .newton import NewtonSettings, solve_gradient_equation

# Divergences in [-floor, 0) are roundoff and get clamped to zero.
DIVERGENCE_FLOOR = 1e-12


def _as_points(y, n: int) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.ndim == 0 or y.shape[-1] != n:
        raise DimensionError(f"expected trailing dimension {n}, got shape {y.shape}")
    return y


def _diag_embed(d: np.ndarray) -> np.ndarray:
    out = np.zeros(d.shape + (d.shape[-1],))
    idx = np.arange(d.shape[-1])
    out[..., idx, idx] = d
    return out


@dataclass(frozen=True)
class PotentialSpec:
    """Base for potentials. ``newton=None`` selects the closed-form conjugate."""

    dimension: int
    newton: Optional[NewtonSettings] = None

    kind: ClassVar[str] = ""
    diagonal: ClassVar[bool] = True
    has_analytic_conjugate: ClassVar[bool] = True

    def __post_init__(self):
        if int(self.dimension) < 1:
            raise ValueError("dimension must be a positive integer")
        if self.newton is None and not self.has_analytic_conjugate:
            raise ValueError(f"{self.kind} has no closed-form conjugate; pass newton settings")

    # primal side, implemented per kind
    def _value(self, y):
        raise NotImplementedError

    def _gradient(self, y):
        raise NotImplementedError

    def _hessian_diag(self, y):
        raise NotImplementedError

    def _hessian_full(self, y):
        return _diag_embed(self._hessian_diag(y))

    # closed-form conjugate, implemented per kind where available
    def _conj_value(self, x):
        raise NotImplementedError

    def _conj_gradient(self, x):
        raise NotImplementedError

    def _conj_hessian_diag(self, x):
        raise NotImplementedError

    def _conj_hessian_full(self, x):
        return _diag_embed(self._conj_hessian_diag(x))

    def _newton_start(self, x):
        return np.zeros_like(x)

    @property
    def strong_convexity(self) -> float:
        """Modulus alpha of the secant inequality (0 when not strongly convex)."""
        return 0.0

    # public API

    def value(self, y) -> np.ndarray:
        return self._value(_as_points(y, self.dimension))

    def gradient(self, y) -> np.ndarray:
        return self._gradient(_as_points(y, self.dimension))

    def hessian(self, y) -> np.ndarray:
        y = _as_points(y, self.dimension)
        return self._hessian_full(y)

    def hessian_diag(self, y) -> np.ndarray:
        if not self.diagonal:
            raise TypeError(f"{self.kind} Hessian is not diagonal")
        return self._hessian_diag(_as_points(y, self.dimension))

    def _primal_hess_for_newton(self, y):
        return self._hessian_diag(y) if self.diagonal else self._hessian_full(y)

    def _invert_gradient(self, x: np.ndarray) -> np.ndarray:
        flat = x.reshape(-1, self.dimension)
        y = solve_gradient_equation(
            self._value,
            self._gradient,
            self._primal_hess_for_newton,
            flat,
            self._newton_start(flat),
            self.newton,
        )
        return y.reshape(x.shape)

    def conjugate_gradient(self, x) -> np.ndarray:
        """Mirror map back to the primal space, ``(grad phi)^{-1}(x)``."""
        x = _as_points(x, self.dimension)
        if self.newton is None:
            return self._conj_gradient(x)
        return self._invert_gradient(x)

    def conjugate_value(self, x) -> np.ndarray:
        x = _as_points(x, self.dimension)
        if self.newton is None:
            return self._conj_value(x)
        y = self._invert_gradient(x)
        return np.sum(x * y, axis=-1) - self._value(y)

    def conjugate_hessian_diag(self, x) -> np.ndarray:
        if not self.diagonal:
            raise TypeError(f"{self.kind} Hessian is not diagonal")
        x = _as_points(x, self.dimension)
        if self.newton is None:
            return self._conj_hessian_diag(x)
        h = self._hessian_diag(self._invert_gradient(x))
        if np.any(~(h > 0)):
            raise NewtonDivergence("primal Hessian not positive definite")
        return 1.0 / h

    def conjugate_hessian(self, x) -> np.ndarray:
        x = _as_points(x, self.dimension)
        if self.diagonal:
            return _diag_embed(self.conjugate_hessian_diag(x))
        if self.newton is None:
            return self._conj_hessian_full(x)
        H = self._hessian_full(self._invert_gradient(x))
        try:
            L = np.linalg.cholesky(H)
        except np.linalg.LinAlgError as exc:
            raise NewtonDivergence("primal Hessian not positive definite") from exc
        Linv = np.linalg.inv(L)
        return np.swapaxes(Linv, -1, -2) @ Linv

    def to_config(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Quadratic(PotentialSpec):
    """phi(y) = 1/2 <y, Q y> with Q symmetric positive definite."""

    Q: np.ndarray = field(default=None, repr=False)

    kind: ClassVar[str] = "quadratic"
    diagonal: ClassVar[bool] = False

    def __post_init__(self):
        super().__post_init__()
        n = self.dimension
        Q = np.eye(n) if self.Q is None else np.array(self.Q, dtype=float)
        if Q.shape != (n, n):
            raise DimensionError(f"Q must be {n}x{n}, got {Q.shape}")
        if not np.allclose(Q, Q.T, rtol=0, atol=1e-12 * max(1.0, np.abs(Q).max())):
            raise ValueError("Q must be symmetric")
        try:
            L = np.linalg.cholesky(Q)
        except np.linalg.LinAlgError as exc:
            raise ValueError("Q must be positive definite") from exc
        Linv = np.linalg.inv(L)
        Qinv = Linv.T @ Linv
        Q.setflags(write=False)
        Qinv.setflags(write=False)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "_Qinv", Qinv)
        object.__setattr__(self, "_alpha", float(np.linalg.eigvalsh(Q)[0]))

    @property
    def strong_convexity(self) -> float:
        return self._alpha

    def _value(self, y):
        return 0.5 * np.einsum("...i,ij,...j->...", y, self.Q, y)

    def _gradient(self, y):
        return y @ self.Q

    def _hessian_full(self, y):
        return np.broadcast_to(self.Q, y.shape + (self.dimension,)).copy()

    def _primal_hess_for_newton(self, y):
        return self._hessian_full(y)

    def _conj_value(self, x):
        return 0.5 * np.einsum("...i,ij,...j->...", x, self._Qinv, x)

    def _conj_gradient(self, x):
        return x @ self._Qinv

    def _conj_hessian_full(self, x):
        return np.broadcast_to(self._Qinv, x.shape + (self.dimension,)).copy()

    def to_config(self) -> dict:
        return {"kind": self.kind, "Q": self.Q.tolist()}


@dataclass(frozen=True)
class Hypentropy(PotentialSpec):
    """phi(y) = sum_i y_i asinh(y_i / beta) - sqrt(y_i^2 + beta^2)."""

    beta: float = 1.0

    kind: ClassVar[str] = "hypentropy"

    def __post_init__(self):
        super().__post_init__()
        if not self.beta > 0:
            raise ValueError("beta must be positive")

    def _value(self, y):
        b = self.beta
        return np.sum(y * np.arcsinh(y / b) - np.hypot(y, b), axis=-1)

    def _gradient(self, y):
        return np.arcsinh(y / self.beta)

    def _hessian_diag(self, y):
        return 1.0 / np.hypot(y, self.beta)

    def _conj_value(self, x):
        return self.beta * np.sum(np.cosh(x), axis=-1)

    def _conj_gradient(self, x):
        return self.beta * np.sinh(x)

    def _conj_hessian_diag(self, x):
        return self.beta * np.cosh(x)

    def to_config(self) -> dict:
        return {"kind": self.kind, "beta": self.beta}


@dataclass(frozen=True)
class RegularizedHypentropy(Hypentropy):
    """Hypentropy plus (alpha/2)|y|^2; strongly convex, conjugate by Newton only."""

    alpha: float = 1.0
    newton: Optional[NewtonSettings] = NewtonSettings()

    kind: ClassVar[str] = "reg_hypentropy"
    has_analytic_conjugate: ClassVar[bool] = False

    def __post_init__(self):
        super().__post_init__()
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")

    @property
    def strong_convexity(self) -> float:
        return self.alpha

    def _value(self, y):
        return super()._value(y) + 0.5 * self.alpha * np.sum(y * y, axis=-1)

    def _gradient(self, y):
        return np.arcsinh(y / self.beta) + self.alpha * y

    def _hessian_diag(self, y):
        return 1.0 / np.hypot(y, self.beta) + self.alpha

    def _newton_start(self, x):
        # Both terms of the gradient are odd and increasing, so the root lies
        # inside the smaller of the two single-term inverses.
        with np.errstate(over="ignore"):
            bound = np.minimum(self.beta * np.sinh(np.abs(x)), np.abs(x) / self.alpha)
        return np.sign(x) * bound

    def to_config(self) -> dict:
        return {"kind": self.kind, "beta": self.beta, "alpha": self.alpha}


@dataclass(frozen=True)
class BregmanPair:
    potential: PotentialSpec
    direction: str = "primal"  # "primal" -> D_phi, "dual" -> D_phi*

    def __post_init__(self):
        if self.direction not in ("primal", "dual"):
            raise ValueError("direction must be 'primal' or 'dual'")


def _clamp(d: np.ndarray, scale: np.ndarray) -> np.ndarray:
    floor = -DIVERGENCE_FLOOR * (1.0 + scale)
    if np.any(d < floor):
        raise NegativeDivergence(f"divergence {float(np.min(d)):.3e} below roundoff floor")
    return np.maximum(d, 0.0)


def bregman_primal(p: PotentialSpec, y, y_ref) -> np.ndarray:
    """D_phi(y, y_ref) = phi(y) - phi(y_ref) - <grad phi(y_ref), y - y_ref>."""
    y = _as_points(y, p.dimension)
    y_ref = _as_points(y_ref, p.dimension)
    a, b = p.value(y), p.value(y_ref)
    lin = np.sum(p.gradient(y_ref) * (y - y_ref), axis=-1)
    return _clamp(a - b - lin, np.abs(a) + np.abs(b) + np.abs(lin))


def bregman_dual(p: PotentialSpec, x, x_ref) -> np.ndarray:
    """D_phi*(x, x_ref), the same construction on the conjugate."""
    x = _as_points(x, p.dimension)
    x_ref = _as_points(x_ref, p.dimension)
    a, b = p.conjugate_value(x), p.conjugate_value(x_ref)
    lin = np.sum(p.conjugate_gradient(x_ref) * (x - x_ref), axis=-1)
    return _clamp(a - b - lin, np.abs(a) + np.abs(b) + np.abs(lin))


def bregman(pair: BregmanPair, a, c) -> np.ndarray:
    if pair.direction == "primal":
        return bregman_primal(pair.potential, a, c)
    return bregman_dual(pair.potential, a, c)


# functional aliases

def potential_value(p: PotentialSpec, y):
    return p.value(y)


def potential_gradient(p: PotentialSpec, y):
    return p.gradient(y)


def potential_hessian(p: PotentialSpec, y):
    return p.hessian(y)


def conjugate_value(p: PotentialSpec, x):
    return p.conjugate_value(x)


def conjugate_gradient(p: PotentialSpec, x):
    return p.conjugate_gradient(x)


def conjugate_hessian(p: PotentialSpec, x):
    return p.conjugate_hessian(x)


POTENTIAL_KINDS = {cls.kind: cls for cls in (Quadratic, Hypentropy, RegularizedHypentropy)}
