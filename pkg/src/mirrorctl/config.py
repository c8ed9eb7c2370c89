"""JSON experiment configuration: schema, validation and object construction."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .cost import ProblemInstance
from .dynamics import (
    ControlLaw,
    LinearFeedback,
    ScaledMirrorFeedback,
    SdeConfig,
    bang_then_coast,
)
from .errors import ConfigError
from .newton import NewtonSettings
from .objectives import CenteredQuadratic, ConvexQuartic, LeastSquares
from .potentials import Hypentropy, Quadratic, RegularizedHypentropy


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class _Conjugate(_Strict):
    conjugate_mode: Literal["analytic", "newton"] = "analytic"
    newton_tolerance: float = Field(1e-12, gt=0)
    newton_max_iters: int = Field(100, ge=1)

    def newton(self) -> Optional[NewtonSettings]:
        if self.conjugate_mode == "analytic":
            return None
        return NewtonSettings(self.newton_tolerance, self.newton_max_iters)


# potentials

class QuadraticPotentialCfg(_Conjugate):
    kind: Literal["quadratic"]
    Q: Optional[list[list[float]]] = None


class HypentropyCfg(_Conjugate):
    kind: Literal["hypentropy"]
    beta: float = Field(1.0, gt=0)


class RegHypentropyCfg(_Conjugate):
    kind: Literal["reg_hypentropy"]
    beta: float = Field(1.0, gt=0)
    alpha: float = Field(1.0, gt=0)
    conjugate_mode: Literal["newton"] = "newton"


PotentialCfg = Annotated[
    Union[QuadraticPotentialCfg, HypentropyCfg, RegHypentropyCfg], Field(discriminator="kind")
]


# objectives

class LeastSquaresCfg(_Conjugate):
    kind: Literal["least_squares"]
    A: list[list[float]]
    b: list[float]


class CenteredQuadraticCfg(_Conjugate):
    kind: Literal["centered_quadratic"]
    lam: float = Field(1.0, gt=0)
    center: Optional[list[float]] = None


class ConvexQuarticCfg(_Conjugate):
    kind: Literal["convex_quartic"]
    center: Optional[list[float]] = None


ObjectiveCfg = Annotated[
    Union[LeastSquaresCfg, CenteredQuadraticCfg, ConvexQuarticCfg], Field(discriminator="kind")
]


class InstanceCfg(_Strict):
    objective: ObjectiveCfg
    potential: PotentialCfg
    epsilon: float = Field(0.0, ge=0)
    horizon_T: float = Field(5.0, gt=0)


# comparison control laws

class BangThenCoastCfg(_Strict):
    kind: Literal["bang_then_coast"]
    duration: float = Field(1.0, gt=0)


class ScaledMirrorCfg(_Strict):
    kind: Literal["scaled_mirror"]
    gain: float = Field(2.0, gt=0)


class LinearCfg(_Strict):
    kind: Literal["linear"]
    gain: float = Field(1.0, gt=0)


LawCfg = Annotated[Union[BangThenCoastCfg, ScaledMirrorCfg, LinearCfg], Field(discriminator="kind")]


# checks

class FenchelGapCheck(_Strict):
    name: Literal["check_lemma1"]
    samples: int = Field(10_000, ge=2)


class HjbCheck(_Strict):
    name: Literal["check_hjb"]
    grid_points: int = Field(5, ge=1)
    time_points: int = Field(5, ge=1)
    controls_per_point: int = Field(20, ge=1)


class OptimalCostCheck(_Strict):
    name: Literal["check_theorem1"]
    laws: list[LawCfg] = Field(default_factory=lambda: [BangThenCoastCfg(kind="bang_then_coast")])
    step_h: float = Field(1e-3, gt=0)
    tolerance: float = Field(1e-8, gt=0)


class ConvexRateCheck(_Strict):
    name: Literal["check_theorem2_convex"]
    times: list[float] = Field(default_factory=lambda: [1.0, 2.0, 5.0, 10.0], min_length=1)
    step_h: float = Field(1e-3, gt=0)


class StrongRateCheck(_Strict):
    name: Literal["check_theorem2_strongly_convex"]
    mu: Optional[float] = Field(None, ge=0)
    times: list[float] = Field(default_factory=lambda: [1.0, 2.0, 5.0, 10.0], min_length=1)
    step_h: float = Field(1e-3, gt=0)


class StochasticRateCheck(_Strict):
    name: Literal["check_theorem4"]
    paths: int = Field(10_000, ge=2)
    step_h: float = Field(1e-3, gt=0)
    mu: Optional[float] = Field(None, ge=0)
    check_times: Optional[list[float]] = None
    chunk_size: int = Field(512, ge=1)
    export_paths: int = Field(0, ge=0)


class TrackingCheck(_Strict):
    name: Literal["check_theorem5_tracking"]
    eps_list: list[float] = Field(default_factory=lambda: [0.0, 1e-8, 1e-6], min_length=1)
    paths: int = Field(200, ge=1)
    step_h: float = Field(1e-3, gt=0)
    chunk_size: int = Field(512, ge=1)


CheckCfg = Annotated[
    Union[
        FenchelGapCheck, HjbCheck, OptimalCostCheck, ConvexRateCheck,
        StrongRateCheck, StochasticRateCheck, TrackingCheck,
    ],
    Field(discriminator="name"),
]

CHECK_MODELS = {
    m.model_fields["name"].annotation.__args__[0]: m
    for m in (FenchelGapCheck, HjbCheck, OptimalCostCheck, ConvexRateCheck,
              StrongRateCheck, StochasticRateCheck, TrackingCheck)
}


class ExperimentConfig(_Strict):
    instance: InstanceCfg
    x0: list[float] = Field(min_length=1)
    checks: list[CheckCfg] = Field(default_factory=list)
    output_dir: str = "out"
    seed: int = Field(0, ge=0)
    export_trajectories: bool = True


# ---------------------------------------------------------------- building


def _square(name: str, rows, n: int) -> np.ndarray:
    M = np.asarray(rows, dtype=float)
    if M.shape != (n, n):
        raise ConfigError(f"{name}: expected a {n}x{n} matrix, got shape {M.shape}")
    return M


def _vector(name: str, v, n: int) -> Optional[np.ndarray]:
    if v is None:
        return None
    v = np.asarray(v, dtype=float)
    if v.shape != (n,):
        raise ConfigError(f"{name}: length {v.shape[0] if v.ndim else 0} does not match dimension {n} of x0")
    return v


def build_potential(cfg, n: int):
    field = "instance.potential"
    try:
        if cfg.kind == "quadratic":
            Q = None if cfg.Q is None else _square(f"{field}.Q", cfg.Q, n)
            return Quadratic(n, cfg.newton(), Q=Q)
        if cfg.kind == "hypentropy":
            return Hypentropy(n, cfg.newton(), beta=cfg.beta)
        return RegularizedHypentropy(n, cfg.newton(), beta=cfg.beta, alpha=cfg.alpha)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"{field}: {exc}") from exc


def build_objective(cfg, n: int):
    field = "instance.objective"
    try:
        if cfg.kind == "least_squares":
            A = np.asarray(cfg.A, dtype=float)
            if A.ndim != 2 or A.shape[1] != n:
                raise ConfigError(f"{field}.A: expected {n} columns to match x0, got shape {A.shape}")
            b = np.asarray(cfg.b, dtype=float)
            if b.shape != (A.shape[0],):
                raise ConfigError(f"{field}.b: expected length {A.shape[0]}, got {b.shape}")
            return LeastSquares(n, cfg.newton(), A=A, b=b)
        center = _vector(f"{field}.center", cfg.center, n)
        if cfg.kind == "centered_quadratic":
            return CenteredQuadratic(n, cfg.newton(), lam=cfg.lam, center=center)
        return ConvexQuartic(n, cfg.newton(), center=center)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"{field}: {exc}") from exc


def build_instance(cfg: ExperimentConfig) -> ProblemInstance:
    n = len(cfg.x0)
    obj = build_objective(cfg.instance.objective, n)
    pot = build_potential(cfg.instance.potential, n)
    try:
        return ProblemInstance(obj, pot, cfg.instance.epsilon, cfg.instance.horizon_T)
    except ValueError as exc:
        raise ConfigError(f"instance: {exc}") from exc


def build_law(cfg, pi: ProblemInstance, x0) -> ControlLaw:
    if cfg.kind == "bang_then_coast":
        return bang_then_coast(pi, x0, cfg.duration)
    if cfg.kind == "scaled_mirror":
        return ScaledMirrorFeedback(cfg.gain)
    return LinearFeedback(cfg.gain)


def sde_config(check, horizon_T: float, seed: int) -> SdeConfig:
    try:
        return SdeConfig(
            step_h=check.step_h, horizon_T=horizon_T, paths=check.paths,
            seed=seed, chunk_size=check.chunk_size,
        )
    except ValueError as exc:
        raise ConfigError(f"checks[{check.name}]: {exc}") from exc


def _format_validation(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"{loc}: {err['msg']}")
    return "; ".join(lines)


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from exc
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(f"{source}: {_format_validation(exc)}") from exc


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from exc
    return parse_config(text, str(path))
