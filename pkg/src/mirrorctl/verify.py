"""Executable checks of the optimality, Lyapunov and rate statements.

Each check returns a :class:`CheckResult`. A check is made of one or more
parts; every part has a margin with the convention "margin >= -tolerance
passes", and the headline bound/observed/margin of the result is the part
closest to failing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

import numpy as np

from . import cost
from .cost import ProblemInstance, deterministic_value, hjb_residual, lemma1_residual
from .dynamics import (
    DEFAULT_STEP,
    ControlLaw,
    MirrorDescentFeedback,
    SdeConfig,
    Trajectory,
    infinite_horizon_cost,
    integrate_mirror_flow,
    iter_state_chunks,
    simulate_states,
    states_to_trajectory,
)
from .errors import MirrorCtlError
from .objectives import CenteredQuadratic, estimate_relative_modulus
from .potentials import Quadratic, bregman_primal

RESIDUAL_FLOOR = 1e-9
EQUALITY_TOL = 1e-8
COST_TO_GO_SLACK = 1e-6
RATE_SLACK = 1e-8
BRACKET_SLACK = 1e-9
MONOTONE_SLACK = 1e-9
LYAPUNOV_RTOL = 1e-6
N_SE = 3.0
STATE_HALFWIDTH = 3.0
MU_SAMPLES = 10_000


@dataclass
class CheckResult:
    check_name: str
    passed: bool
    bound: float
    observed: float
    margin: float
    tolerance: float
    quantities: dict[str, float] = field(default_factory=dict)
    config_echo: dict[str, Any] = field(default_factory=dict)
    error: Optional[str] = None
    trajectories: list[Trajectory] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        d = {
            "check_name": self.check_name,
            "passed": self.passed,
            "bound": _json_float(self.bound),
            "observed": _json_float(self.observed),
            "margin": _json_float(self.margin),
            "tolerance": _json_float(self.tolerance),
            "quantities": {k: _json_float(v) for k, v in self.quantities.items()},
            "config_echo": self.config_echo,
        }
        if self.error is not None:
            d["error"] = self.error
        return d


def _json_float(v):
    v = float(v)
    return v if math.isfinite(v) else None


class _Parts:
    """Collects named inequality parts and folds them into a CheckResult."""

    def __init__(self, name: str, echo: dict):
        self.name = name
        self.echo = echo
        self.rows: list[tuple[str, float, float, float, float]] = []
        self.quantities: dict[str, float] = {}

    def upper(self, label, observed, bound, tol):
        """observed <= bound."""
        self._add(label, observed, bound, bound - observed, tol)

    def lower(self, label, observed, bound, tol):
        """observed >= bound."""
        self._add(label, observed, bound, observed - bound, tol)

    def match(self, label, observed, expected, tol):
        """|observed - expected| <= tol."""
        self._add(label, observed, expected, -abs(observed - expected), tol)

    def _add(self, label, observed, bound, margin, tol):
        observed, bound, margin, tol = map(float, (observed, bound, margin, tol))
        self.rows.append((label, observed, bound, margin, tol))
        self.quantities[f"{label}.observed"] = observed
        self.quantities[f"{label}.bound"] = bound
        self.quantities[f"{label}.margin"] = margin
        self.quantities[f"{label}.tolerance"] = tol

    def result(self, trajectories=()) -> CheckResult:
        if not self.rows:
            raise ValueError(f"{self.name}: nothing was checked")
        worst = min(self.rows, key=lambda r: r[3] + r[4])
        _, observed, bound, margin, tol = worst
        passed = all(m >= -t for _, _, _, m, t in self.rows)
        self.quantities["worst_part_index"] = float(self.rows.index(worst))
        return CheckResult(
            check_name=self.name,
            passed=passed,
            bound=bound,
            observed=observed,
            margin=margin,
            tolerance=tol,
            quantities=self.quantities,
            config_echo=self.echo,
            trajectories=list(trajectories),
        )


def failed_result(name: str, echo: dict, exc: Exception) -> CheckResult:
    """Record a numeric error as a failed check instead of aborting a suite."""
    return CheckResult(
        check_name=name,
        passed=False,
        bound=float("nan"),
        observed=float("nan"),
        margin=float("nan"),
        tolerance=0.0,
        config_echo=echo,
        error=f"{type(exc).__name__}: {exc}",
    )


def _echo(pi: ProblemInstance, x0=None, **params) -> dict:
    d = {"instance": pi.to_config()}
    if x0 is not None:
        d["x0"] = [float(v) for v in np.asarray(x0, dtype=float)]
    for k, v in params.items():
        if isinstance(v, np.ndarray):
            v = v.tolist()
        d[k] = v
    return d


def _index_of(times: np.ndarray, t: float) -> int:
    h = times[1] - times[0]
    i = int(round(t / h))
    if i < 0 or i >= len(times) or abs(times[i] - t) > 1e-9 * max(1.0, abs(t)):
        raise ValueError(f"time {t} is not on the integration grid (h = {h})")
    return i


def sample_states_controls(pi: ProblemInstance, samples: int, seed: int, halfwidth=STATE_HALFWIDTH):
    """Uniform states around x_bar and controls on a box sized by |grad f| there.

    The first sample is the equilibrium pair (x_bar, 0).
    """
    rng = np.random.default_rng(seed)
    x = pi.x_bar + rng.uniform(-halfwidth, halfwidth, size=(samples, pi.n))
    x[0] = pi.x_bar
    gnorm = np.max(np.abs(pi.objective.gradient(pi.potential.conjugate_gradient(x))))
    uw = max(3.0, 2.0 * float(gnorm))
    u = rng.uniform(-uw, uw, size=(samples, pi.n))
    u[0] = 0.0
    return x, u


# ---------------------------------------------------------------- Fenchel-Young gap / HJB


def check_lemma1(pi: ProblemInstance, samples: int = 10_000, seed: int = 0) -> CheckResult:
    """Fenchel-Young gap is nonnegative and vanishes exactly at the mirror-descent control."""
    parts = _Parts("check_lemma1", _echo(pi, samples=samples, seed=seed))
    x, u = sample_states_controls(pi, samples, seed)
    r = lemma1_residual(pi, x, u)
    u_star = pi.optimal_control(x)
    r_star = lemma1_residual(pi, x, u_star)
    parts.lower("min_residual", np.min(r), 0.0, RESIDUAL_FLOOR)
    parts.upper("max_abs_residual_at_optimum", np.max(np.abs(r_star)), 0.0, EQUALITY_TOL)
    parts.upper("abs_residual_at_equilibrium", abs(r[0]), 0.0, EQUALITY_TOL)
    parts.quantities["samples"] = float(samples)
    parts.quantities["median_residual"] = float(np.median(r))
    return parts.result()


def check_hjb(
    pi: ProblemInstance,
    grid_points: int = 5,
    time_points: int = 5,
    controls_per_point: int = 20,
    seed: int = 0,
    halfwidth: float = STATE_HALFWIDTH,
) -> CheckResult:
    """Evaluate the HJB residual of V(x,t) = D(x, x_bar) + eps n (T - t) on a space-time grid."""
    parts = _Parts(
        "check_hjb",
        _echo(pi, grid_points=grid_points, time_points=time_points,
              controls_per_point=controls_per_point, seed=seed),
    )
    axes = [np.linspace(c - halfwidth, c + halfwidth, grid_points) for c in pi.x_bar]
    xs = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, pi.n)
    ts = np.linspace(0.0, pi.horizon_T, time_points)
    X = np.repeat(xs, len(ts), axis=0)
    T = np.tile(ts, len(xs))
    rng = np.random.default_rng(seed)
    gnorm = np.max(np.abs(pi.objective.gradient(pi.potential.conjugate_gradient(xs))))
    uw = max(3.0, 2.0 * float(gnorm))
    Xr = np.repeat(X, controls_per_point, axis=0)
    Tr = np.repeat(T, controls_per_point)
    U = rng.uniform(-uw, uw, size=Xr.shape)

    r = hjb_residual(pi, Xr, Tr, U)
    diff = r - lemma1_residual(pi, Xr, U)
    r_star = hjb_residual(pi, X, T, pi.optimal_control(X))
    parts.lower("min_residual", np.min(r), 0.0, RESIDUAL_FLOOR)
    parts.upper("max_abs_residual_at_optimum", np.max(np.abs(r_star)), 0.0, EQUALITY_TOL)
    parts.upper("max_abs_hjb_minus_fenchel_gap", np.max(np.abs(diff)), 0.0, RESIDUAL_FLOOR)
    worst = int(np.argmin(r))
    parts.quantities["worst_t"] = float(Tr[worst])
    for i, v in enumerate(Xr[worst]):
        parts.quantities[f"worst_x_{i + 1}"] = float(v)
    parts.quantities["evaluations"] = float(len(r))
    return parts.result()


# ---------------------------------------------------------------- infinite-horizon optimality


def _cost_to_go_slack(pi: ProblemInstance, traj: Trajectory, V0: float) -> float:
    """min over the grid of J(t) - (V(x0) - V(x(t)))."""
    V = deterministic_value(pi, traj.x)
    return float(np.min(traj.J - (V0 - V)))


def check_theorem1(
    pi: ProblemInstance,
    x0,
    suboptimal_laws: Sequence[ControlLaw] = (),
    step_h: float = DEFAULT_STEP,
    tolerance: float = 1e-8,
) -> CheckResult:
    """Optimal cost equals V(x0), other laws cost at least V(x0), J(t) >= V(x0) - V(x(t)) and Lyapunov descent."""
    x0 = np.asarray(x0, dtype=float)
    parts = _Parts(
        "check_theorem1",
        _echo(pi, x0, laws=[law.name for law in suboptimal_laws], step_h=step_h, tolerance=tolerance),
    )
    opt = infinite_horizon_cost(pi, x0, MirrorDescentFeedback(), tolerance, step_h)
    V0 = opt.V0
    parts.quantities["V0"] = V0
    parts.quantities["optimal.bracket_width"] = opt.bracket_width
    parts.quantities["optimal.stopping_time"] = opt.stopping_time
    parts.upper("optimal.lower_le_V0", opt.lower, V0, BRACKET_SLACK)
    parts.lower("optimal.upper_ge_V0", opt.upper, V0, BRACKET_SLACK)
    parts.lower("optimal.cost_to_go", _cost_to_go_slack(pi, opt.trajectory, V0), 0.0, COST_TO_GO_SLACK)

    V = deterministic_value(pi, opt.trajectory.x)
    active = V[:-1] > LYAPUNOV_RTOL * max(V0, 1.0)
    dV = np.diff(V)[active]
    parts.upper("optimal.lyapunov_max_dV", np.max(dV) if dV.size else -0.0, 0.0, 0.0)
    f_vals = pi.objective.value(opt.trajectory.y)
    parts.upper("optimal.f_max_increase", np.max(np.diff(f_vals)) if len(f_vals) > 1 else 0.0, 0.0, MONOTONE_SLACK)

    trajs = [opt.trajectory]
    for law in suboptimal_laws:
        res = infinite_horizon_cost(pi, x0, law, tolerance, step_h)
        parts.lower(f"{law.name}.J_ge_V0", res.lower, V0, COST_TO_GO_SLACK)
        parts.quantities[f"{law.name}.excess_over_V0"] = res.lower - V0
        parts.quantities[f"{law.name}.stopping_time"] = res.stopping_time
        parts.lower(f"{law.name}.cost_to_go", _cost_to_go_slack(pi, res.trajectory, V0), 0.0, COST_TO_GO_SLACK)
        trajs.append(res.trajectory)
    return parts.result(trajs)


# ---------------------------------------------------------------- deterministic rates


def check_theorem2_convex(
    pi: ProblemInstance, x0, times: Sequence[float] = (1.0, 2.0, 5.0, 10.0), step_h: float = DEFAULT_STEP
) -> CheckResult:
    """f(y(t)) - f(y_bar) <= D_phi(y_bar, y0) / t along the mirror flow."""
    x0 = np.asarray(x0, dtype=float)
    parts = _Parts("check_theorem2_convex", _echo(pi, x0, times=list(times), step_h=step_h))
    if any(t <= 0 for t in times):
        raise ValueError("times must be positive")
    traj = integrate_mirror_flow(pi, x0, max(times), step_h)
    D0 = float(bregman_primal(pi.potential, pi.y_bar, traj.y[0]))
    f_gap = pi.objective.value(traj.y) - pi.f_min
    parts.quantities["D0"] = D0
    for t in times:
        i = _index_of(traj.times, t)
        parts.upper(f"t={t:g}", f_gap[i], D0 / t, RATE_SLACK)
    parts.upper("f_max_increase", np.max(np.diff(f_gap)), 0.0, MONOTONE_SLACK)
    return parts.result([traj])


def _resolve_mu(pi: ProblemInstance, mu: Optional[float], seed: int = 0) -> tuple[float, str]:
    if mu is not None:
        return float(mu), "user"
    est = estimate_relative_modulus(pi.objective, pi.potential, MU_SAMPLES, seed)
    return est.mu, "estimated"


def check_theorem2_strongly_convex(
    pi: ProblemInstance,
    x0,
    mu: Optional[float] = None,
    times: Sequence[float] = (1.0, 2.0, 5.0, 10.0),
    step_h: float = DEFAULT_STEP,
    seed: int = 0,
) -> CheckResult:
    """D_phi(y_bar, y(t)) <= D_phi(y_bar, y0) exp(-mu t) along the mirror flow."""
    x0 = np.asarray(x0, dtype=float)
    mu, source = _resolve_mu(pi, mu, seed)
    parts = _Parts(
        "check_theorem2_strongly_convex",
        _echo(pi, x0, mu=mu, mu_source=source, times=list(times), step_h=step_h),
    )
    if any(t < 0 for t in times):
        raise ValueError("times must be nonnegative")
    traj = integrate_mirror_flow(pi, x0, max(max(times), step_h), step_h)
    D = bregman_primal(pi.potential, pi.y_bar, traj.y)
    parts.quantities["mu"] = mu
    parts.quantities["D0"] = float(D[0])
    for t in times:
        i = _index_of(traj.times, t)
        parts.upper(f"t={t:g}", D[i], D[0] * math.exp(-mu * t), RATE_SLACK)
    return parts.result([traj])


# ---------------------------------------------------------------- stochastic rates


def _trapezoid_time(values: np.ndarray, h: float) -> np.ndarray:
    """Trapezoid integral along axis 1 of a (paths, steps + 1, ...) array."""
    return h * (values.sum(axis=1) - 0.5 * (values[:, 0] + values[:, -1]))


def _mean_se(v: np.ndarray) -> tuple[float, float]:
    v = np.asarray(v, dtype=float)
    se = float(np.std(v, ddof=1) / math.sqrt(len(v))) if len(v) > 1 else float("inf")
    return float(np.mean(v)), se


def _is_ou(pi: ProblemInstance) -> bool:
    p = pi.potential
    return (
        isinstance(p, Quadratic)
        and np.array_equal(p.Q, np.eye(pi.n))
        and isinstance(pi.objective, CenteredQuadratic)
    )


def check_theorem4(
    pi: ProblemInstance,
    x0,
    cfg: SdeConfig,
    mu: Optional[float] = None,
    check_times: Optional[Sequence[float]] = None,
    export_paths: int = 0,
) -> CheckResult:
    """Monte Carlo check of the stochastic rate bounds and the averaged-output gap.

    Passes iff each Monte Carlo estimate is at most its bound plus three
    standard errors. On Ornstein-Uhlenbeck instances the terminal mean and
    per-coordinate variance are also compared with their closed forms.
    """
    if not pi.epsilon > 0:
        raise ValueError("check_theorem4 needs epsilon > 0")
    x0 = np.asarray(x0, dtype=float)
    T = cfg.steps * cfg.h
    if check_times is None:
        check_times = list(np.linspace(0.0, T, 11))
    mu, mu_source = _resolve_mu(pi, mu, cfg.seed)
    echo = _echo(
        pi, x0, step_h=cfg.step_h, horizon_T=cfg.horizon_T, paths=cfg.paths, seed=cfg.seed,
        mu=mu, mu_source=mu_source, check_times=[float(t) for t in check_times],
    )
    parts = _Parts("check_theorem4", echo)
    times = np.arange(cfg.steps + 1) * cfg.h
    idx = [_index_of(times, t) for t in check_times]
    f = pi.objective
    law = MirrorDescentFeedback()

    avg_gap, tavg_gap, D_at, X_T = [], [], [], []
    trajs = []
    for ids, X in iter_state_chunks(pi, x0, law, cfg):
        Y = pi.potential.conjugate_gradient(X)
        gap = f.value(Y) - pi.f_min
        avg_gap.append(_trapezoid_time(gap, cfg.h) / T)
        Y_avg = _trapezoid_time(Y, cfg.h) / T
        tavg_gap.append(f.value(Y_avg) - pi.f_min)
        D_at.append(bregman_primal(pi.potential, pi.y_bar, Y[:, idx]))
        X_T.append(X[:, -1])
        for j, k in enumerate(ids):
            if k < export_paths:
                trajs.append(states_to_trajectory(pi, law, times, X[j], seed=cfg.seed, path=k))
    avg_gap = np.concatenate(avg_gap)
    tavg_gap = np.concatenate(tavg_gap)
    D_at = np.concatenate(D_at)
    X_T = np.concatenate(X_T)

    D0 = float(bregman_primal(pi.potential, pi.y_bar, pi.potential.conjugate_gradient(x0)))
    en = pi.epsilon * pi.n
    parts.quantities["D0"] = D0
    parts.quantities["mu"] = mu
    parts.quantities["paths"] = float(cfg.paths)

    m, se = _mean_se(avg_gap)
    parts.upper("time_average_gap", m, D0 / T + en, N_SE * se)
    parts.quantities["time_average_gap.se"] = se
    m, se = _mean_se(tavg_gap)
    parts.upper("gap_at_averaged_output", m, D0 / T + en, N_SE * se)
    parts.quantities["gap_at_averaged_output.se"] = se

    if mu > 0:
        tail = en / mu * (1.0 - math.exp(-mu * T))
        for j, t in enumerate(check_times):
            m, se = _mean_se(D_at[:, j])
            label = f"divergence_t={float(t):g}"
            parts.upper(label, m, D0 * math.exp(-mu * t) + tail, N_SE * se)
            parts.quantities[f"{label}.se"] = se
    else:
        parts.quantities["divergence_decay_skipped_mu_zero"] = 1.0

    if _is_ou(pi):
        lam = pi.objective.lam
        N = len(X_T)
        mean_exact = pi.x_bar + (x0 - pi.x_bar) * math.exp(-lam * T)
        var_exact = pi.epsilon / lam * (1.0 - math.exp(-2.0 * lam * T))
        for i in range(pi.n):
            c = X_T[:, i]
            m, se = _mean_se(c)
            parts.match(f"ou_mean_{i + 1}", m, mean_exact[i], N_SE * se)
            dev = c - c.mean()
            s2 = float(np.sum(dev**2) / (N - 1))
            m4 = float(np.mean(dev**4))
            se_var = math.sqrt(max(m4 - s2 * s2 * (N - 3) / (N - 1), 0.0) / N)
            parts.match(f"ou_var_{i + 1}", s2, var_exact, N_SE * se_var)
        d0 = 0.5 * float(np.sum((x0 - pi.x_bar) ** 2))
        for j, t in enumerate(check_times):
            decay = math.exp(-2.0 * lam * t)
            exact = d0 * decay + en / (2.0 * lam) * (1.0 - decay)
            m, se = _mean_se(D_at[:, j])
            parts.match(f"ou_divergence_t={float(t):g}", m, exact, N_SE * se + 1e-12)
    return parts.result(trajs)


# ---------------------------------------------------------------- small-noise tracking


def check_theorem5_tracking(
    pi: ProblemInstance,
    x0,
    eps_list: Sequence[float] = (0.0, 1e-8, 1e-6),
    cfg: SdeConfig = SdeConfig(horizon_T=5.0, paths=200),
    zero_noise_tol: float = 1e-6,
    ratio_range: tuple[float, float] = (5.0, 20.0),
) -> CheckResult:
    """Sup-distance between f along noisy and noise-free outputs scales like sqrt(eps).

    The noise-free reference is the Euler-Maruyama recursion with the
    diffusion switched off, on the same grid, so discretization error cancels.
    """
    x0 = np.asarray(x0, dtype=float)
    eps_sorted = sorted(float(e) for e in eps_list)
    parts = _Parts(
        "check_theorem5_tracking",
        _echo(pi, x0, eps_list=eps_sorted, step_h=cfg.step_h, horizon_T=cfg.horizon_T,
              paths=cfg.paths, seed=cfg.seed),
    )
    f = pi.objective
    law = MirrorDescentFeedback()
    ref = simulate_states(pi, x0, law, cfg, [0], epsilon=0.0)[0]
    f_ref = f.value(pi.potential.conjugate_gradient(ref))

    medians = []
    for eps in eps_sorted:
        sup_err = []
        for _, X in iter_state_chunks(pi, x0, law, cfg, epsilon=eps):
            fY = f.value(pi.potential.conjugate_gradient(X))
            sup_err.append(np.max(np.abs(fY - f_ref), axis=1))
        sup_err = np.concatenate(sup_err)
        med = float(np.median(sup_err))
        medians.append(med)
        parts.quantities[f"eps={eps:g}.median_sup_error"] = med
        parts.quantities[f"eps={eps:g}.p95_sup_error"] = float(np.percentile(sup_err, 95))
        parts.quantities[f"eps={eps:g}.max_sup_error"] = float(np.max(sup_err))
        if eps == 0.0:
            parts.upper(f"eps=0.sup_error", float(np.max(sup_err)), zero_noise_tol, 0.0)

    lo, hi = ratio_range
    for (e1, m1), (e2, m2) in zip(zip(eps_sorted, medians), zip(eps_sorted[1:], medians[1:])):
        parts.lower(f"monotone_{e1:g}_{e2:g}", m2, m1, 0.0)
        if e1 > 0 and math.isclose(e2 / e1, 100.0, rel_tol=1e-9):
            ratio = m2 / m1 if m1 > 0 else float("inf")
            parts.lower(f"ratio_{e1:g}_{e2:g}.low", ratio, lo, 0.0)
            parts.upper(f"ratio_{e1:g}_{e2:g}.high", ratio, hi, 0.0)
    return parts.result()


def run_safely(name: str, echo: dict, fn, *args, **kwargs) -> CheckResult:
    """Call a check, converting library and value errors into a failed result."""
    try:
        return fn(*args, **kwargs)
    except (MirrorCtlError, ValueError, ArithmeticError) as exc:
        return failed_result(name, echo, exc)


CHECKS = {
    "check_lemma1": check_lemma1,
    "check_hjb": check_hjb,
    "check_theorem1": check_theorem1,
    "check_theorem2_convex": check_theorem2_convex,
    "check_theorem2_strongly_convex": check_theorem2_strongly_convex,
    "check_theorem4": check_theorem4,
    "check_theorem5_tracking": check_theorem5_tracking,
}
