import numpy as np
import pytest

from mirrorctl.errors import DimensionError
from mirrorctl.newton import NewtonSettings
from mirrorctl.objectives import (
    QUARTIC_EPS0,
    CenteredQuadratic,
    ConvexQuartic,
    LeastSquares,
    estimate_relative_modulus,
    secant_ratios,
)
from mirrorctl.potentials import Hypentropy, Quadratic

OBJECTIVES = {
    "least_squares": LeastSquares(2, A=[[1.0, 0.5], [0.0, 2.0], [1.0, 1.0]], b=[1.0, -1.0, 0.5]),
    "least_squares_newton": LeastSquares(
        2, NewtonSettings(), A=[[1.0, 0.5], [0.0, 2.0], [1.0, 1.0]], b=[1.0, -1.0, 0.5]
    ),
    "centered": CenteredQuadratic(2, lam=2.0, center=[0.5, -0.5]),
    "quartic": ConvexQuartic(2, center=[1.0, -1.0]),
    "quartic_newton": ConvexQuartic(2, NewtonSettings(), center=[1.0, -1.0]),
}


@pytest.fixture(params=list(OBJECTIVES))
def objective(request):
    return OBJECTIVES[request.param]


def test_values_and_gradients():
    o = LeastSquares(2)
    assert o.value([1.0, 1.0]) == pytest.approx(1.0)
    np.testing.assert_allclose(o.gradient([1.0, 1.0]), [1.0, 1.0])
    c = CenteredQuadratic(1, lam=2.0, center=[1.0])
    assert c.value([1.0]) == 0.0
    np.testing.assert_array_equal(c.gradient([1.0]), [0.0])


def test_gradient_finite_differences(objective, rng):
    step = 1e-6
    for _ in range(20):
        y = rng.uniform(-2, 2, 2)
        fd = np.array(
            [(objective.value(y + step * e) - objective.value(y - step * e)) / (2 * step) for e in np.eye(2)]
        )
        np.testing.assert_allclose(objective.gradient(y), fd, rtol=1e-6, atol=1e-8)


def test_quartic_definition():
    o = ConvexQuartic(2, center=[1.0, 2.0])
    d2 = 3.0**2 + 4.0**2
    assert o.value([4.0, 6.0]) == pytest.approx(0.25 * d2**2 + 0.5 * QUARTIC_EPS0 * d2)


def test_conjugate_examples():
    assert CenteredQuadratic(1, lam=1.0).conjugate([2.0]) == pytest.approx(2.0)
    assert CenteredQuadratic(1, lam=1.0, center=[1.0]).conjugate([1.0]) == pytest.approx(1.5)


def test_conjugate_grid_search_oracle():
    # sup over a fine grid approximates f*(1) for f(x) = (x - 1)^2 / 2
    grid = np.arange(-10.0, 10.0 + 1e-12, 1e-4)
    sup = np.max(1.0 * grid - 0.5 * (grid - 1.0) ** 2)
    assert CenteredQuadratic(1, lam=1.0, center=[1.0]).conjugate([1.0]) == pytest.approx(sup, abs=1e-8)


def test_conjugate_at_zero(objective):
    ybar = objective.minimizer()
    assert objective.conjugate(np.zeros(2)) == pytest.approx(-objective.value(ybar), abs=1e-10)


def test_minimizer_stationary(objective):
    assert np.linalg.norm(objective.gradient(objective.minimizer())) <= 1e-10


def test_minimizer_examples():
    np.testing.assert_allclose(LeastSquares(2, A=np.eye(2), b=[3.0, 4.0]).minimizer(), [3.0, 4.0])
    # normal equations: diag(1, 4) y = (1, 4)
    np.testing.assert_allclose(LeastSquares(2, A=[[1, 0], [0, 2]], b=[1, 2]).minimizer(), [1.0, 1.0])
    np.testing.assert_array_equal(ConvexQuartic(2, center=[5.0, -5.0]).minimizer(), [5.0, -5.0])


def test_fenchel_young(objective, rng):
    x = rng.uniform(-3, 3, (1000, 2))
    v = rng.uniform(-10, 10, (1000, 2))
    gap = objective.value(x) + objective.conjugate(v) - np.sum(v * x, axis=-1)
    assert np.min(gap) >= -1e-9
    g = objective.gradient(x)
    tight = objective.value(x) + objective.conjugate(g) - np.sum(g * x, axis=-1)
    assert np.max(np.abs(tight)) <= 1e-8


def test_least_squares_numeric_matches_analytic(rng):
    v = rng.uniform(-5, 5, (300, 2))
    a, b = OBJECTIVES["least_squares"], OBJECTIVES["least_squares_newton"]
    np.testing.assert_allclose(a.conjugate(v), b.conjugate(v), rtol=0, atol=1e-8)


def test_quartic_closed_form_matches_newton(rng):
    v = np.concatenate([rng.uniform(-50, 50, (300, 2)), rng.uniform(-1e-6, 1e-6, (20, 2))])
    a, b = OBJECTIVES["quartic"], OBJECTIVES["quartic_newton"]
    np.testing.assert_allclose(a.conjugate_gradient(v), b.conjugate_gradient(v), rtol=0, atol=1e-9)


def test_lipschitz_bound(objective, rng):
    c = objective.minimizer()
    h = objective.box_halfwidth
    y = c + rng.uniform(-h, h, (2000, 2))
    y2 = c + rng.uniform(-h, h, (2000, 2))
    ratio = np.linalg.norm(objective.gradient(y) - objective.gradient(y2), axis=-1) / np.linalg.norm(y - y2, axis=-1)
    assert np.max(ratio) <= objective.lipschitz * (1 + 1e-12)


def test_relative_modulus_examples():
    est = estimate_relative_modulus(CenteredQuadratic(2, lam=2.0), Quadratic(2), samples=2000, seed=1)
    assert est.mu == pytest.approx(2.0, abs=1e-6)
    est = estimate_relative_modulus(LeastSquares(2), Quadratic(2, Q=2 * np.eye(2)), samples=2000, seed=1)
    assert est.mu == pytest.approx(0.5, abs=1e-6)


def test_relative_modulus_is_infimum():
    o, p = ConvexQuartic(2), Hypentropy(2)
    est = estimate_relative_modulus(o, p, samples=500, seed=3)
    # regenerate the estimator's own pairs
    rng = np.random.default_rng(3)
    y = rng.uniform(-3, 3, (500, 2))
    y2 = rng.uniform(-3, 3, (500, 2))
    ratios = secant_ratios(o, p, y, y2)
    assert est.mu >= 0.0
    assert np.all(est.mu <= ratios[np.isfinite(ratios)])
    assert est.mu == pytest.approx(max(np.nanmin(ratios), 0.0))
    with pytest.raises(ValueError):
        estimate_relative_modulus(o, p, samples=1)


def test_construction_errors():
    with pytest.raises(ValueError, match="singular"):
        LeastSquares(2, A=[[1.0, 1.0], [1.0, 1.0]], b=[0.0, 0.0])
    with pytest.raises(DimensionError):
        LeastSquares(2, A=np.eye(2), b=[1.0])
    with pytest.raises(DimensionError):
        CenteredQuadratic(2, center=[1.0])
    with pytest.raises(DimensionError):
        ConvexQuartic(2).value([1.0])
