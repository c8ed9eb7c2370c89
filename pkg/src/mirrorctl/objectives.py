"""Strictly convex objectives with gradients, conjugates and known minimizers."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import ClassVar, Optional

import numpy as np

from .errors import DimensionError, NewtonDivergence, UnboundedConjugate
from .newton import NewtonSettings, solve_gradient_equation
from .potentials import PotentialSpec, _as_points, bregman_primal

# Quadratic regularizer weight inside ConvexQuartic.
QUARTIC_EPS0 = 1e-3

# Half-width of the box on which Lipschitz constants of grad f are quoted.
DEFAULT_BOX_HALFWIDTH = 3.0

_UNBOUNDED_NORM = 1e150


@dataclass(frozen=True)
class ObjectiveSpec:
    dimension: int
    newton: Optional[NewtonSettings] = None
    box_halfwidth: float = DEFAULT_BOX_HALFWIDTH

    kind: ClassVar[str] = ""

    def __post_init__(self):
        if int(self.dimension) < 1:
            raise ValueError("dimension must be a positive integer")

    def _value(self, y):
        raise NotImplementedError

    def _gradient(self, y):
        raise NotImplementedError

    def _hessian(self, y):
        raise NotImplementedError

    def _conj_argmax(self, v):
        raise NotImplementedError

    def minimizer(self) -> np.ndarray:
        raise NotImplementedError

    @property
    def lipschitz(self) -> float:
        """Lipschitz constant of grad f on the working box around the minimizer."""
        raise NotImplementedError

    def value(self, y) -> np.ndarray:
        return self._value(_as_points(y, self.dimension))

    def gradient(self, y) -> np.ndarray:
        return self._gradient(_as_points(y, self.dimension))

    def hessian(self, y) -> np.ndarray:
        return self._hessian(_as_points(y, self.dimension))

    def conjugate_gradient(self, v) -> np.ndarray:
        """Maximizer of <v, x> - f(x), which is also grad f*(v)."""
        v = _as_points(v, self.dimension)
        if self.newton is None:
            x = self._conj_argmax(v)
        else:
            flat = v.reshape(-1, self.dimension)
            start = np.broadcast_to(self.minimizer(), flat.shape)
            try:
                x = solve_gradient_equation(
                    self._value, self._gradient, self._hessian, flat, start, self.newton
                ).reshape(v.shape)
            except NewtonDivergence:
                if np.any(~np.isfinite(v)):
                    raise UnboundedConjugate("non-finite conjugate argument") from None
                raise
        if np.any(~np.isfinite(x)) or np.any(np.abs(x) > _UNBOUNDED_NORM):
            raise UnboundedConjugate("conjugate maximizer escaped to infinity")
        return x

    def conjugate(self, v) -> np.ndarray:
        v = _as_points(v, self.dimension)
        x = self.conjugate_gradient(v)
        return np.sum(v * x, axis=-1) - self._value(x)

    def to_config(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class LeastSquares(ObjectiveSpec):
    """f(y) = 1/2 |A y - b|^2 with A^T A nonsingular."""

    A: np.ndarray = field(default=None, repr=False)
    b: np.ndarray = field(default=None, repr=False)

    kind: ClassVar[str] = "least_squares"

    def __post_init__(self):
        super().__post_init__()
        n = self.dimension
        A = np.eye(n) if self.A is None else np.array(self.A, dtype=float)
        if A.ndim != 2 or A.shape[1] != n:
            raise DimensionError(f"A must have {n} columns, got shape {A.shape}")
        b = np.zeros(A.shape[0]) if self.b is None else np.array(self.b, dtype=float)
        if b.shape != (A.shape[0],):
            raise DimensionError(f"b must have length {A.shape[0]}, got shape {b.shape}")
        G = A.T @ A
        try:
            L = np.linalg.cholesky(G)
        except np.linalg.LinAlgError as exc:
            raise ValueError("A^T A is singular") from exc
        eig = np.linalg.eigvalsh(G)
        if eig[0] <= 1e-12 * eig[-1]:
            raise ValueError("A^T A is singular")
        Linv = np.linalg.inv(L)
        Ginv = Linv.T @ Linv
        Atb = A.T @ b
        for arr in (A, b, G, Ginv, Atb):
            arr.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "_G", G)
        object.__setattr__(self, "_Ginv", Ginv)
        object.__setattr__(self, "_Atb", Atb)
        object.__setattr__(self, "_L", float(eig[-1]))

    @property
    def gram(self) -> np.ndarray:
        return self._G

    @property
    def lipschitz(self) -> float:
        return self._L

    def _value(self, y):
        r = y @ self.A.T - self.b
        return 0.5 * np.sum(r * r, axis=-1)

    def _gradient(self, y):
        return (y @ self.A.T - self.b) @ self.A

    def _hessian(self, y):
        return np.broadcast_to(self._G, y.shape + (self.dimension,)).copy()

    def _conj_argmax(self, v):
        return (v + self._Atb) @ self._Ginv

    def minimizer(self):
        return self._Ginv @ self._Atb

    def to_config(self):
        return {"kind": self.kind, "A": self.A.tolist(), "b": self.b.tolist()}


@dataclass(frozen=True)
class CenteredQuadratic(ObjectiveSpec):
    """f(y) = (lam/2) |y - center|^2."""

    lam: float = 1.0
    center: np.ndarray = field(default=None, repr=False)

    kind: ClassVar[str] = "centered_quadratic"

    def __post_init__(self):
        super().__post_init__()
        if not self.lam > 0:
            raise ValueError("lam must be positive")
        c = np.zeros(self.dimension) if self.center is None else np.array(self.center, dtype=float)
        if c.shape != (self.dimension,):
            raise DimensionError(f"center must have length {self.dimension}")
        c.setflags(write=False)
        object.__setattr__(self, "center", c)

    @property
    def lipschitz(self) -> float:
        return float(self.lam)

    def _value(self, y):
        d = y - self.center
        return 0.5 * self.lam * np.sum(d * d, axis=-1)

    def _gradient(self, y):
        return self.lam * (y - self.center)

    def _hessian(self, y):
        return np.broadcast_to(self.lam * np.eye(self.dimension), y.shape + (self.dimension,)).copy()

    def _conj_argmax(self, v):
        return self.center + v / self.lam

    def minimizer(self):
        return self.center.copy()

    def to_config(self):
        return {"kind": self.kind, "lam": self.lam, "center": self.center.tolist()}


@dataclass(frozen=True)
class ConvexQuartic(ObjectiveSpec):
    """f(y) = 1/4 |y - c|^4 + (eps0/2) |y - c|^2, convex but barely strongly convex."""

    center: np.ndarray = field(default=None, repr=False)

    kind: ClassVar[str] = "convex_quartic"
    eps0: ClassVar[float] = QUARTIC_EPS0

    def __post_init__(self):
        super().__post_init__()
        c = np.zeros(self.dimension) if self.center is None else np.array(self.center, dtype=float)
        if c.shape != (self.dimension,):
            raise DimensionError(f"center must have length {self.dimension}")
        c.setflags(write=False)
        object.__setattr__(self, "center", c)

    @property
    def lipschitz(self) -> float:
        # Hessian |d|^2 I + 2 d d^T + eps0 I has top eigenvalue 3|d|^2 + eps0.
        r2 = self.dimension * self.box_halfwidth**2
        return 3.0 * r2 + self.eps0

    def _value(self, y):
        d = y - self.center
        s = np.sum(d * d, axis=-1)
        return 0.25 * s * s + 0.5 * self.eps0 * s

    def _gradient(self, y):
        d = y - self.center
        s = np.sum(d * d, axis=-1, keepdims=True)
        return (s + self.eps0) * d

    def _hessian(self, y):
        d = y - self.center
        s = np.sum(d * d, axis=-1)[..., None, None]
        eye = np.eye(self.dimension)
        return (s + self.eps0) * eye + 2.0 * d[..., :, None] * d[..., None, :]

    def _conj_argmax(self, v):
        # Solve r^3 + eps0 r = |v| for the radius; the cubic has one real root.
        # Writing r = A + B with A^3 + B^3 = |v|, AB = -eps0/3 and then
        # r = |v| / (A^2 - AB + B^2) avoids cancellation for small |v|.
        q = np.linalg.norm(v, axis=-1)
        p = self.eps0
        disc = np.sqrt(0.25 * q * q + (p / 3.0) ** 3)
        A = np.cbrt(0.5 * q + disc)
        B = -p / (3.0 * A)
        r = q / (A * A - A * B + B * B)
        # one Newton polish on the cubic
        r = r - (r**3 + p * r - q) / (3.0 * r * r + p)
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = np.where(q[..., None] > 0, v / q[..., None], 0.0)
        return self.center + r[..., None] * unit

    def minimizer(self):
        return self.center.copy()

    def to_config(self):
        return {"kind": self.kind, "center": self.center.tolist()}


@dataclass(frozen=True)
class RelativeModulus:
    mu: float
    relative_to: PotentialSpec


def objective_value(o: ObjectiveSpec, y):
    return o.value(y)


def objective_gradient(o: ObjectiveSpec, y):
    return o.gradient(y)


def objective_conjugate(o: ObjectiveSpec, v):
    return o.conjugate(v)


def minimizer(o: ObjectiveSpec) -> np.ndarray:
    return o.minimizer()


def secant_ratios(o: ObjectiveSpec, p: PotentialSpec, y, y2) -> np.ndarray:
    """(f(y2) - f(y) - <grad f(y), y2 - y>) / D_phi(y2, y), NaN where D_phi = 0."""
    gap = o.value(y2) - o.value(y) - np.sum(o.gradient(y) * (y2 - y), axis=-1)
    d = bregman_primal(p, y2, y)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(d > 0, gap / d, np.nan)


def estimate_relative_modulus(
    o: ObjectiveSpec,
    p: PotentialSpec,
    samples: int = 10_000,
    seed: int = 0,
    halfwidth: float | None = None,
) -> RelativeModulus:
    """Largest mu >= 0 with f(y') >= f(y) + <grad f(y), y'-y> + mu D_phi(y', y) on sampled pairs.

    Pairs are drawn uniformly from the working box centred at the minimizer.
    """
    if samples < 2:
        raise ValueError("samples must be >= 2")
    h = o.box_halfwidth if halfwidth is None else halfwidth
    rng = np.random.default_rng(seed)
    ybar = o.minimizer()
    y = ybar + rng.uniform(-h, h, size=(samples, o.dimension))
    y2 = ybar + rng.uniform(-h, h, size=(samples, o.dimension))
    ratios = secant_ratios(o, p, y, y2)
    mu = float(np.nanmin(ratios)) if np.any(np.isfinite(ratios)) else 0.0
    return RelativeModulus(mu=max(mu, 0.0), relative_to=p)


OBJECTIVE_KINDS = {cls.kind: cls for cls in (LeastSquares, CenteredQuadratic, ConvexQuartic)}
