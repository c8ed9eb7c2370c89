"""Continuous-time mirror descent and mirror Langevin dynamics as optimal controls."""

from .cost import (
    ProblemInstance,
    deterministic_value,
    hjb_residual,
    instantaneous_cost,
    lemma1_residual,
    stochastic_value,
)
from .dynamics import (
    LinearFeedback,
    MirrorDescentFeedback,
    OpenLoop,
    ScaledMirrorFeedback,
    SdeConfig,
    StateFeedback,
    TimeVaryingFeedback,
    Trajectory,
    bang_then_coast,
    infinite_horizon_cost,
    integrate_controlled,
    integrate_mirror_flow,
    simulate_controlled_sde,
    simulate_mld,
)
from .newton import NewtonSettings
from .objectives import (
    CenteredQuadratic,
    ConvexQuartic,
    LeastSquares,
    estimate_relative_modulus,
)
from .potentials import (
    BregmanPair,
    Hypentropy,
    Quadratic,
    RegularizedHypentropy,
    bregman,
    bregman_dual,
    bregman_primal,
)
from .verify import CheckResult

__version__ = "0.1.0"
