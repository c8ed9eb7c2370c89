import numpy as np
import pytest

from mirrorctl import (
    CenteredQuadratic,
    ConvexQuartic,
    Hypentropy,
    LeastSquares,
    NewtonSettings,
    ProblemInstance,
    Quadratic,
    RegularizedHypentropy,
)


def lqr_instance(**kw):
    return ProblemInstance(LeastSquares(2, A=np.diag([1.0, 2.0]), b=[0.0, 0.0]), Quadratic(2), **kw)


def catalog_instances(epsilon=0.0):
    """One instance per objective/potential pairing exercised by the suite."""
    return {
        "lqr_quadratic": ProblemInstance(
            LeastSquares(2, A=[[1.0, 0.5], [0.0, 2.0], [1.0, 1.0]], b=[1.0, -1.0, 0.5]),
            Quadratic(2, Q=[[2.0, 0.3], [0.3, 1.0]]),
            epsilon=epsilon,
        ),
        "centered_hypentropy": ProblemInstance(
            CenteredQuadratic(2, lam=2.0, center=[0.5, -0.5]), Hypentropy(2, beta=1.0), epsilon=epsilon
        ),
        "quartic_quadratic": ProblemInstance(
            ConvexQuartic(2, center=[1.0, -1.0]), Quadratic(2), epsilon=epsilon
        ),
        "quartic_hypentropy": ProblemInstance(
            ConvexQuartic(2, center=[0.3, 0.2]), Hypentropy(2, beta=2.0), epsilon=epsilon
        ),
        "lsq_reg_hypentropy": ProblemInstance(
            LeastSquares(2, A=np.diag([1.0, 2.0]), b=[1.0, 1.0]),
            RegularizedHypentropy(2, beta=1.0, alpha=0.5),
            epsilon=epsilon,
        ),
        "quartic_newton_conjugate": ProblemInstance(
            ConvexQuartic(2, NewtonSettings(), center=[-0.5, 0.5]), Quadratic(2), epsilon=epsilon
        ),
    }


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(params=list(catalog_instances()))
def instance(request):
    return catalog_instances(epsilon=0.1)[request.param]


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture
def acceptance(request):
    """Yield a recorder; the criterion's PASS/FAIL line follows the test outcome."""
    info = {}

    def record(number, summary):
        info["number"], info["summary"] = number, summary

    yield record
    if info:
        rep = getattr(request.node, "rep_call", None)
        ok = rep is not None and rep.passed
        ACCEPTANCE_LINES[info["number"]] = f"criterion {info['number']}: {'PASS' if ok else 'FAIL'}  {info['summary']}"


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
