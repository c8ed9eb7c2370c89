"""Integration of the controlled system, the mirror flow and mirror Langevin dynamics."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

from .cost import ProblemInstance, deterministic_value
from .errors import HorizonExceeded, NonFiniteState, NonSPDHessian
from .potentials import Quadratic

DEFAULT_STEP = 1e-3
TAIL_RTOL = 1e-8
MAX_HORIZON = 1e3


# ---------------------------------------------------------------- control laws


class ControlLaw:
    """A control evaluated as ``law(pi, x, t)``; ``x`` may be a batch (..., n)."""

    name = "law"

    def __call__(self, pi: ProblemInstance, x: np.ndarray, t: float) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class OpenLoop(ControlLaw):
    """u(t), ignoring the state.

    With ``piecewise_constant=True`` each integration step uses the value at
    the step midpoint, which is exact when the breakpoints sit on the grid.
    """

    u: Callable[[float], np.ndarray]
    piecewise_constant: bool = False
    name: str = "open_loop"

    def __call__(self, pi, x, t):
        return np.broadcast_to(np.asarray(self.u(t), dtype=float), np.shape(x)).copy()


@dataclass(frozen=True)
class StateFeedback(ControlLaw):
    k: Callable[[np.ndarray], np.ndarray]
    name: str = "state_feedback"

    def __call__(self, pi, x, t):
        return np.asarray(self.k(x), dtype=float)


@dataclass(frozen=True)
class TimeVaryingFeedback(ControlLaw):
    k: Callable[[np.ndarray, float], np.ndarray]
    name: str = "time_varying_feedback"

    def __call__(self, pi, x, t):
        return np.asarray(self.k(x, t), dtype=float)


@dataclass(frozen=True)
class MirrorDescentFeedback(ControlLaw):
    name: str = "mirror_descent"

    def __call__(self, pi, x, t):
        return pi.optimal_control(x)


def bang_then_coast(pi: ProblemInstance, x0, duration: float = 1.0) -> OpenLoop:
    """u(t) = (x_bar - x0)/duration on [0, duration], zero afterwards."""
    rate = (pi.x_bar - np.asarray(x0, dtype=float)) / duration
    zero = np.zeros_like(rate)

    def u(t):
        return rate if 0.0 <= t <= duration else zero

    return OpenLoop(u, piecewise_constant=True, name="bang_then_coast")


@dataclass(frozen=True)
class ScaledMirrorFeedback(ControlLaw):
    """k(x) = -gain * grad f(grad phi*(x)); stabilizing but suboptimal for gain != 1."""

    gain: float = 2.0

    @property
    def name(self):
        return f"scaled_mirror_{self.gain:g}"

    def __call__(self, pi, x, t):
        return self.gain * pi.optimal_control(x)


@dataclass(frozen=True)
class LinearFeedback(ControlLaw):
    """k(x) = -gain (x - x_bar)."""

    gain: float = 1.0

    @property
    def name(self):
        return f"linear_{self.gain:g}"

    def __call__(self, pi, x, t):
        return -self.gain * (np.asarray(x, dtype=float) - pi.x_bar)


# ---------------------------------------------------------------- trajectories


@dataclass
class Trajectory:
    times: np.ndarray
    x: np.ndarray
    y: np.ndarray
    u: np.ndarray
    q: np.ndarray
    J: np.ndarray
    seed: Optional[int] = None
    path: Optional[int] = None

    @property
    def n(self) -> int:
        return self.x.shape[1]

    def header(self) -> list[str]:
        n = self.n
        return (
            ["t"]
            + [f"x_{i}" for i in range(1, n + 1)]
            + [f"y_{i}" for i in range(1, n + 1)]
            + [f"u_{i}" for i in range(1, n + 1)]
            + ["q", "J_accum"]
        )

    def to_csv(self, path) -> None:
        table = np.column_stack([self.times, self.x, self.y, self.u, self.q, self.J])
        np.savetxt(path, table, fmt="%.17g", delimiter=",", header=",".join(self.header()), comments="")

    @classmethod
    def from_csv(cls, path) -> "Trajectory":
        table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        n = (table.shape[1] - 3) // 3
        return cls(
            times=table[:, 0],
            x=table[:, 1 : 1 + n],
            y=table[:, 1 + n : 1 + 2 * n],
            u=table[:, 1 + 2 * n : 1 + 3 * n],
            q=table[:, -2],
            J=table[:, -1],
        )


def _check_finite(*arrays) -> None:
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NonFiniteState("non-finite state or cost; reduce the step size")


def _grid(T_sim: float, step_h: float) -> tuple[int, float]:
    if not (T_sim > 0 and step_h > 0):
        raise ValueError("T_sim and step_h must be positive")
    steps = max(1, int(round(T_sim / step_h)))
    return steps, T_sim / steps


def _stage(pi: ProblemInstance, law: ControlLaw, x, t):
    """Control and running cost at one state; shares grad phi*(x) between both."""
    f = pi.objective
    y = pi.potential.conjugate_gradient(x)
    if isinstance(law, MirrorDescentFeedback):
        u = -f.gradient(y)
    else:
        u = law(pi, x, t)
    q = f.value(y) + f.conjugate(-u) + u @ pi.y_bar
    return y, u, q


def integrate_controlled(
    pi: ProblemInstance,
    x0,
    law: ControlLaw,
    T_sim: float,
    step_h: float = DEFAULT_STEP,
    stop: Optional[Callable[[np.ndarray], bool]] = None,
) -> Trajectory:
    """Fixed-step RK4 for xdot = u, with the accumulated cost carried as an extra state.

    ``stop(x)`` is checked after every step and truncates the trajectory.
    """
    steps, h = _grid(T_sim, step_h)
    x = np.array(x0, dtype=float)
    if x.shape != (pi.n,):
        raise ValueError(f"x0 must have shape ({pi.n},)")
    piecewise = isinstance(law, OpenLoop) and law.piecewise_constant

    ts, xs, ys, us, qs, Js = [], [], [], [], [], []
    J = 0.0
    stopped = False
    for i in range(steps + 1):
        t = i * h
        y, u, q = _stage(pi, law, x, t)
        _check_finite(x, u, q)
        ts.append(t)
        xs.append(x)
        ys.append(y)
        us.append(u)
        qs.append(q)
        Js.append(J)
        if i == steps or stopped:
            break
        if piecewise:
            um = law(pi, x, t + 0.5 * h)
            qa = _stage(pi, _Const(um), x, t)[2]
            qm = _stage(pi, _Const(um), x + 0.5 * h * um, t)[2]
            x_next = x + h * um
            qb = _stage(pi, _Const(um), x_next, t)[2]
            J = J + h / 6.0 * (qa + 4.0 * qm + qb)
        else:
            k1, c1 = u, q
            _, k2, c2 = _stage(pi, law, x + 0.5 * h * k1, t + 0.5 * h)
            _, k3, c3 = _stage(pi, law, x + 0.5 * h * k2, t + 0.5 * h)
            _, k4, c4 = _stage(pi, law, x + h * k3, t + h)
            x_next = x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            J = J + h / 6.0 * (c1 + 2.0 * c2 + 2.0 * c3 + c4)
        x = x_next
        if stop is not None and stop(x):
            stopped = True
    return Trajectory(
        times=np.array(ts),
        x=np.array(xs),
        y=np.array(ys),
        u=np.array(us),
        q=np.array(qs, dtype=float),
        J=np.array(Js, dtype=float),
    )


@dataclass(frozen=True)
class _Const(ControlLaw):
    value: np.ndarray

    def __call__(self, pi, x, t):
        return self.value


def integrate_mirror_flow(
    pi: ProblemInstance, x0, T_sim: float, step_h: float = DEFAULT_STEP, stop=None
) -> Trajectory:
    """Closed-loop mirror descent xdot = -grad f(grad phi*(x))."""
    return integrate_controlled(pi, x0, MirrorDescentFeedback(), T_sim, step_h, stop=stop)


@dataclass
class InfiniteHorizonResult:
    cost: float
    lower: float
    upper: float
    stopping_time: float
    V0: float
    V_end: float
    trajectory: Trajectory = field(repr=False)

    @property
    def bracket_width(self) -> float:
        return self.upper - self.lower


def infinite_horizon_cost(
    pi: ProblemInstance,
    x0,
    law: ControlLaw = MirrorDescentFeedback(),
    tolerance: float = TAIL_RTOL,
    step_h: float = DEFAULT_STEP,
    max_time: float = MAX_HORIZON,
) -> InfiniteHorizonResult:
    """Integrate until V(x(t)) <= tolerance * max(V(x0), 1) and bracket the tail.

    For the optimal law the full cost lies in [J(t), J(t) + V(x(t))]; for any
    other stabilizing law J(t) is a lower bound.
    """
    V0 = float(deterministic_value(pi, x0))
    threshold = tolerance * max(V0, 1.0)

    def stop(x):
        return float(deterministic_value(pi, x)) <= threshold

    if V0 <= threshold:
        traj = integrate_controlled(pi, x0, law, step_h, step_h, stop=lambda x: True)
        traj = _truncate(traj, 1)
    else:
        traj = integrate_controlled(pi, x0, law, max_time, step_h, stop=stop)
    V_end = float(deterministic_value(pi, traj.x[-1]))
    if V_end > threshold:
        raise HorizonExceeded(
            f"V(x(t)) = {V_end:.3e} above {threshold:.3e} at t = {traj.times[-1]:g}"
        )
    J = float(traj.J[-1])
    return InfiniteHorizonResult(
        cost=J,
        lower=J,
        upper=J + V_end,
        stopping_time=float(traj.times[-1]),
        V0=V0,
        V_end=V_end,
        trajectory=traj,
    )


def _truncate(traj: Trajectory, length: int) -> Trajectory:
    return Trajectory(
        traj.times[:length], traj.x[:length], traj.y[:length],
        traj.u[:length], traj.q[:length], traj.J[:length],
    )


# ---------------------------------------------------------------- SDEs


@dataclass(frozen=True)
class SdeConfig:
    step_h: float = DEFAULT_STEP
    horizon_T: float = 1.0
    paths: int = 1
    seed: int = 0
    scheme: str = "euler_maruyama"
    chunk_size: int = 256

    def __post_init__(self):
        if not (self.step_h > 0 and self.horizon_T > 0):
            raise ValueError("step_h and horizon_T must be positive")
        if self.step_h > self.horizon_T:
            raise ValueError("step_h must not exceed horizon_T")
        if self.paths < 1:
            raise ValueError("paths must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")
        if self.scheme != "euler_maruyama":
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.chunk_size < 1:
            raise ValueError("chunk_size must be >= 1")

    @property
    def steps(self) -> int:
        return _grid(self.horizon_T, self.step_h)[0]

    @property
    def h(self) -> float:
        return _grid(self.horizon_T, self.step_h)[1]


def path_normals(seed: int, path: int, steps: int, n: int) -> np.ndarray:
    """Standard normals for one path from a Philox stream keyed by (seed, path).

    The counter position within the stream indexes the step, so a path's
    noise does not depend on which other paths are simulated or in what order.
    """
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(path,))
    return np.random.Generator(np.random.Philox(ss)).standard_normal((steps, n))


def diffusion_factor(pi: ProblemInstance, x: np.ndarray) -> np.ndarray:
    """SPD square root of (hess phi*(x))^{-1}; diagonal (m, n) or full (m, n, n)."""
    p = pi.potential
    if isinstance(p, Quadratic):
        w, V = np.linalg.eigh(p.Q)
        return np.broadcast_to((V * np.sqrt(w)) @ V.T, x.shape + (pi.n,))
    if p.diagonal:
        d = p.conjugate_hessian_diag(x)
        if np.any(~(d > 0)):
            raise NonSPDHessian("conjugate Hessian not positive definite")
        return 1.0 / np.sqrt(d)
    w, V = np.linalg.eigh(p.conjugate_hessian(x))
    if np.any(~(w > 0)):
        raise NonSPDHessian("conjugate Hessian not positive definite")
    return (V * (1.0 / np.sqrt(w))[..., None, :]) @ np.swapaxes(V, -1, -2)


def _apply_factor(S: np.ndarray, xi: np.ndarray) -> np.ndarray:
    if S.ndim == xi.ndim:
        return S * xi
    return np.einsum("...ij,...j->...i", S, xi)


def simulate_states(
    pi: ProblemInstance,
    x0,
    law: ControlLaw,
    cfg: SdeConfig,
    path_ids: Sequence[int],
    epsilon: Optional[float] = None,
) -> np.ndarray:
    """Euler-Maruyama states for the given paths, shape (len(path_ids), steps + 1, n)."""
    eps = pi.epsilon if epsilon is None else epsilon
    steps, h = cfg.steps, cfg.h
    n = pi.n
    m = len(path_ids)
    X = np.empty((m, steps + 1, n))
    X[:, 0] = np.asarray(x0, dtype=float)
    if eps > 0:
        xi = np.stack([path_normals(cfg.seed, int(k), steps, n) for k in path_ids], axis=1)
        scale = np.sqrt(2.0 * eps * h)
    x = X[:, 0].copy()
    for k in range(steps):
        drift = law(pi, x, k * h)
        x_new = x + h * drift
        if eps > 0:
            x_new = x_new + scale * _apply_factor(diffusion_factor(pi, x), xi[k])
        if not np.all(np.isfinite(x_new)):
            raise NonFiniteState(f"non-finite state at step {k + 1}; reduce the step size")
        X[:, k + 1] = x_new
        x = x_new
    return X


def iter_state_chunks(
    pi: ProblemInstance,
    x0,
    law: ControlLaw,
    cfg: SdeConfig,
    epsilon: Optional[float] = None,
) -> Iterator[tuple[range, np.ndarray]]:
    """Yield (path range, states) in fixed chunks of ``cfg.chunk_size`` paths."""
    for start in range(0, cfg.paths, cfg.chunk_size):
        ids = range(start, min(start + cfg.chunk_size, cfg.paths))
        yield ids, simulate_states(pi, x0, law, cfg, ids, epsilon=epsilon)


def states_to_trajectory(
    pi: ProblemInstance, law: ControlLaw, times: np.ndarray, X: np.ndarray, seed=None, path=None
) -> Trajectory:
    """Fill outputs, controls and trapezoidal cost for one sampled path."""
    f = pi.objective
    Y = pi.potential.conjugate_gradient(X)
    if isinstance(law, MirrorDescentFeedback):
        U = -f.gradient(Y)
    else:
        U = np.stack([law(pi, X[i], t) for i, t in enumerate(times)])
    q = f.value(Y) + f.conjugate(-U) + U @ pi.y_bar
    J = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(times) * (q[1:] + q[:-1]))])
    return Trajectory(times, X, Y, U, q, J, seed=seed, path=path)


def simulate_controlled_sde(
    pi: ProblemInstance, x0, law: ControlLaw, cfg: SdeConfig
) -> list[Trajectory]:
    """dX = u dt + sqrt(2 eps (hess phi*(X))^{-1}) dW, one Trajectory per path."""
    times = np.arange(cfg.steps + 1) * cfg.h
    out = []
    for ids, X in iter_state_chunks(pi, x0, law, cfg):
        for j, k in enumerate(ids):
            out.append(states_to_trajectory(pi, law, times, X[j], seed=cfg.seed, path=k))
    return out


def simulate_mld(pi: ProblemInstance, x0, cfg: SdeConfig) -> list[Trajectory]:
    """Mirror Langevin dynamics: the controlled SDE under mirror-descent feedback."""
    if not pi.epsilon > 0:
        raise ValueError("mirror Langevin dynamics needs epsilon > 0")
    return simulate_controlled_sde(pi, x0, MirrorDescentFeedback(), cfg)


def write_trajectories(trajs: Sequence[Trajectory], directory, stem: str) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for k, tr in enumerate(trajs):
        p = directory / f"traj_{stem}_{k}.csv"
        tr.to_csv(p)
        paths.append(p)
    return paths
