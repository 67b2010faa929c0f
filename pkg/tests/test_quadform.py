"""Tests for secondvar.quadform: test functions, quadratic forms and the coercivity constant."""

from __future__ import annotations

import math

import numpy as np
import pytest

from secondvar.config import Settings
from secondvar.expr import ScalarFunction, compile_expression, parse
from secondvar.jacobi import positive_solution
from secondvar.quadform import (
    CoercivityError,
    TestFunctionError,
    coercivity_constant,
    coercivity_trend,
    gamma_form,
    h1_norm_squared,
    make_test_function,
    omega,
    perfect_square_check,
    standard_battery,
)
from secondvar.riccati import riccati_function

UNIT = (0.0, 1.0)


def _fn(text: str) -> ScalarFunction:
    return compile_expression(parse(text))


def test_battery_vanishes_at_both_ends(settings: Settings) -> None:
    """Every battery function is zero at x0 and x1, on shifted intervals too."""

    for interval in (UNIT, (-1.0, 2.5)):
        battery = standard_battery(interval, settings.grid)
        assert [h.label for h in battery] == [f"sin{k}" for k in range(1, 9)] + [
            f"bump{k}" for k in range(4)
        ]
        for h in battery:
            assert abs(h.values[0]) <= 1e-12
            assert abs(h.values[-1]) <= 1e-12
            assert h.grid[0] == pytest.approx(interval[0])
            assert h.grid[-1] == pytest.approx(interval[1])


def test_bumps_are_normalized(settings: Settings) -> None:
    """Polynomial bumps peak at one."""

    for h in standard_battery(UNIT, settings.grid)[8:]:
        assert float(np.max(h.values)) == pytest.approx(1.0, abs=1e-5)


def test_make_test_function_rejects_nonvanishing_boundary(settings: Settings) -> None:
    """h(x1) != 0 is refused."""

    with pytest.raises(TestFunctionError):
        make_test_function("x", UNIT, settings.grid)


def test_gamma_form_of_first_sine(settings: Settings) -> None:
    """Gamma[sin(pi x)] = (pi^2 + Q)/2 for constant Q and P = 1."""

    h = make_test_function("sin(pi*x)", UNIT, settings.grid)

    assert gamma_form(_fn("1"), _fn("-16"), h) == pytest.approx((math.pi**2 - 16) / 2, abs=1e-9)
    assert h1_norm_squared(h) == pytest.approx((math.pi**2 + 1) / 2, abs=1e-9)


def test_forms_are_homogeneous_of_degree_two(settings: Settings) -> None:
    """Scaling h by c scales both forms by c^2."""

    p, q, r = _fn("1 + x"), _fn("cos(3*x)"), _fn("x^2")
    h = make_test_function("x*(1-x)*exp(x)", UNIT, settings.grid)
    scaled = make_test_function("3*x*(1-x)*exp(x)", UNIT, settings.grid)

    assert gamma_form(p, q, scaled) == pytest.approx(9.0 * gamma_form(p, q, h), rel=1e-12)
    assert omega(p, q, r, scaled) == pytest.approx(9.0 * omega(p, q, r, h), rel=1e-12)


def test_perfect_square_with_tangent(settings: Settings) -> None:
    """With w = tan x solving the Riccati equation for Q = -1, Gamma is a perfect square."""

    p, q, w = _fn("1"), _fn("-1"), _fn("tan(x)")

    for h in standard_battery(UNIT, settings.grid):
        square = perfect_square_check(p, q, w, h)
        assert square.gap <= 1e-6
        assert square.rhs >= 0.0


def test_perfect_square_with_constructed_solution(settings: Settings) -> None:
    """The Riccati solution built from a positive Jacobi solution completes the square."""

    p, q = _fn("1"), _fn("1")
    w = riccati_function(positive_solution(p, q, UNIT, settings))

    for h in standard_battery(UNIT, settings.grid):
        assert perfect_square_check(p, q, w, h).gap <= 1e-6


@pytest.mark.parametrize(
    ("q", "expected", "tolerance"),
    [
        (0.0, math.pi**2 / (math.pi**2 + 1), 1e-3),
        (1.0, 1.0, 1e-6),
        (-16.0, (math.pi**2 - 16) / (math.pi**2 + 1), 1e-3),
    ],
)
def test_coercivity_constant_closed_forms(
    settings: Settings, q: float, expected: float, tolerance: float
) -> None:
    """The smallest eigenvalue of the pencil matches (pi^2 + Q)/(pi^2 + 1)."""

    estimate = coercivity_constant(
        _fn("1"), _fn(repr(q)), UNIT, settings.coercivity_n, tol=settings.eigen_tol
    )

    assert estimate.converged
    assert estimate.gamma == pytest.approx(expected, abs=tolerance)
    assert estimate.shift < estimate.gamma


def test_coercivity_mode_has_matching_rayleigh_quotient(settings: Settings) -> None:
    """The returned mode is a sine arch and reproduces gamma as a Rayleigh quotient."""

    estimate = coercivity_constant(_fn("1"), _fn("0"), UNIT, 400, tol=settings.eigen_tol)

    mode = estimate.mode / np.max(estimate.mode)
    np.testing.assert_allclose(mode, np.sin(math.pi * estimate.nodes), atol=1e-3)

    grid = np.concatenate([[0.0], estimate.nodes, [1.0]])
    values = np.concatenate([[0.0], estimate.mode, [0.0]])
    slope = np.diff(values) / np.diff(grid)
    numerator = float(np.sum(slope**2 * np.diff(grid)))
    denominator = numerator + float(np.sum(estimate.mode**2) * (grid[1] - grid[0]))
    assert numerator / denominator == pytest.approx(estimate.gamma, rel=1e-9)


def test_coercivity_trend_refines_the_mesh(settings: Settings) -> None:
    """Estimates at n, 2n and 4n approach the continuous value."""

    exact = math.pi**2 / (math.pi**2 + 1)
    trend = coercivity_trend(_fn("1"), _fn("0"), UNIT, 100, tol=settings.eigen_tol)

    assert [estimate.n for estimate in trend] == [100, 200, 400]
    errors = [abs(estimate.gamma - exact) for estimate in trend]
    assert errors[0] > errors[1] > errors[2]


def test_coercivity_requires_sixteen_interior_nodes() -> None:
    """A mesh coarser than sixteen interior nodes is rejected; sixteen is accepted."""

    with pytest.raises(ValueError, match="16"):
        coercivity_constant(_fn("1"), _fn("0"), UNIT, 15)

    estimate = coercivity_constant(_fn("1"), _fn("0"), UNIT, 16)
    assert estimate.n == 16
    assert estimate.gamma > 0


def test_coercivity_error_carries_shift() -> None:
    """CoercivityError reports the shift it failed with."""

    error = CoercivityError(-0.5, "leading minor not positive")

    assert error.shift == pytest.approx(-0.5)
    assert "-0.5" in str(error)


def test_nonnegative_forms_under_bounded_riccati(settings: Settings) -> None:
    """A Riccati solution with small residual forces Gamma >= 0 on the battery."""

    p, q = _fn("1 + x^2"), _fn("-2 + x")
    w = riccati_function(positive_solution(p, q, UNIT, settings))

    for h in standard_battery(UNIT, settings.grid):
        square = perfect_square_check(p, q, w, h)
        assert square.lhs >= -1e-6
        assert square.gap <= 1e-6
