"""Tests for secondvar.jacobi: the accessory equation, its zeros and positive solutions."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import pytest
from numpy.typing import ArrayLike, NDArray

from secondvar.config import Settings
from secondvar.expr import ScalarFunction, compile_expression, parse
from secondvar.jacobi import (
    C5Status,
    JacobiSolution,
    JacobiZero,
    LegendreError,
    PositiveSolutionError,
    ZeroKind,
    check_c5,
    find_zeros,
    integrate_jacobi,
    positive_solution,
    require_legendre,
    scan_conjugate_points,
)

UNIT = (0.0, 1.0)


def _fn(text: str) -> ScalarFunction:
    return compile_expression(parse(text))


def _constant_q(value: float) -> ScalarFunction:
    return _fn(repr(value))


@pytest.mark.parametrize(
    ("q", "exact"),
    [
        ("0", 1.0),
        ("-16", math.sin(4.0) / 4.0),
        ("1", math.sinh(1.0)),
    ],
)
def test_integrate_jacobi_closed_forms(settings: Settings, q: str, exact: float) -> None:
    """u(1) for u(0)=0, u'(0)=1 against the closed-form solutions."""

    solution = integrate_jacobi(_fn("1"), _fn(q), UNIT, 0.0, 1.0, settings)

    assert float(solution.u(1.0)) == pytest.approx(exact, abs=1e-8)


def test_v_is_p_times_derivative(settings: Settings) -> None:
    """v = P u' for a variable P, checked against cosh for P = 1, Q = 1."""

    solution = integrate_jacobi(_fn("1"), _fn("1"), UNIT, 0.0, 1.0, settings)
    grid = np.linspace(0.0, 1.0, 11)
    np.testing.assert_allclose(solution.derivative(grid), np.cosh(grid), rtol=1e-8)

    weighted = integrate_jacobi(_fn("1 + x"), _fn("0"), UNIT, 0.0, 1.0, settings)
    # (1 + x) u' = 1 gives u = log(1 + x)
    np.testing.assert_allclose(weighted.u(grid), np.log1p(grid), atol=1e-8)
    np.testing.assert_allclose(weighted.v(grid), 1.0, atol=1e-8)


def test_solution_is_linear_in_seeds(settings: Settings) -> None:
    """Scaling both seeds scales the solution."""

    p, q = _fn("1 + x^2"), _fn("-3 + x")
    base = integrate_jacobi(p, q, UNIT, 0.2, 0.7, settings)
    scaled = integrate_jacobi(p, q, UNIT, 0.6, 2.1, settings)
    grid = np.linspace(0.0, 1.0, 21)

    np.testing.assert_allclose(scaled.u(grid), 3.0 * base.u(grid), rtol=1e-7, atol=1e-9)


def test_nonpositive_p_is_rejected(settings: Settings) -> None:
    """P <= 0 anywhere on the grid raises LegendreError with the location."""

    with pytest.raises(LegendreError) as excinfo:
        integrate_jacobi(_fn("x - 0.5"), _fn("0"), UNIT, 0.0, 1.0, settings)

    assert excinfo.value.x == pytest.approx(0.0)
    assert excinfo.value.value < 0
    assert require_legendre(_fn("2 + x"), UNIT, 16) == pytest.approx(2.0)


def test_no_zeros_for_linear_solution(settings: Settings) -> None:
    """u = x has no zero in (0, 1]."""

    solution = integrate_jacobi(_fn("1"), _fn("0"), UNIT, 0.0, 1.0, settings)

    assert solution.zeros == ()
    assert solution.first_zero is None


def test_single_crossing_at_quarter_pi(settings: Settings) -> None:
    """Q = -16 vanishes once, at pi/4."""

    solution = integrate_jacobi(_fn("1"), _fn("-16"), UNIT, 0.0, 1.0, settings)

    assert [zero.kind for zero in solution.zeros] == [ZeroKind.CROSSING]
    assert solution.zeros[0].location == pytest.approx(math.pi / 4, abs=1e-8)
    assert abs(float(solution.u(solution.zeros[0].location))) <= 1e-9


@pytest.mark.parametrize("omega", [4.0, 2.0 * math.pi, 3.0 * math.pi])
def test_conjugate_points_match_closed_form(settings: Settings, omega: float) -> None:
    """Every zero of sin(omega x) in (0, 1] is found to 1e-6."""

    expected = [k * math.pi / omega for k in range(1, int(omega / math.pi + 1e-9) + 1)]

    points = scan_conjugate_points(_fn("1"), _constant_q(-omega * omega), UNIT, settings)

    assert points == pytest.approx(expected, abs=1e-6)


def test_third_harmonic_ends_with_endpoint_marker(settings: Settings) -> None:
    """Q = -(3 pi)^2 has crossings at 1/3, 2/3 and an endpoint marker at 1."""

    q = _constant_q(-((3.0 * math.pi) ** 2))
    solution = integrate_jacobi(_fn("1"), q, UNIT, 0.0, 1.0, settings)

    assert [zero.location for zero in solution.zeros] == pytest.approx([1 / 3, 2 / 3, 1.0], abs=1e-8)
    assert solution.zeros[-1].kind is ZeroKind.ENDPOINT


def test_detected_zeros_are_conjugate_points(settings: Settings) -> None:
    """Re-integrating up to each zero lands on u = 0."""

    p, q = _fn("1 + x/2"), _fn("-60 + 10*x")
    points = scan_conjugate_points(p, q, UNIT, settings)
    assert points

    for point in points:
        partial = integrate_jacobi(p, q, (0.0, point), 0.0, 1.0, settings)
        assert abs(float(partial.u(point))) <= 1e-8


@dataclass(frozen=True)
class _Parabola:
    """State of u = (x - c)^2 + floor with P = 1."""

    center: float
    floor: float

    def __call__(self, x: ArrayLike) -> NDArray[np.float64]:
        x = np.asarray(x, dtype=float)
        return np.array([(x - self.center) ** 2 + self.floor, 2.0 * (x - self.center)])


def test_touching_minimum_is_a_tangential_marker() -> None:
    """A minimum of |u| inside the band without a sign change is tangential."""

    solution = JacobiSolution(
        interval=UNIT,
        seeds=(0.25, -1.0),
        nodes=np.linspace(0.0, 1.0, 11),
        dense=_Parabola(center=0.5 + 1e-6, floor=5e-13),
        p=_fn("1"),
    )

    zeros = find_zeros(solution, exclude_start=False, zero_tol=1e-9)

    assert [zero.kind for zero in zeros] == [ZeroKind.TANGENTIAL]
    assert zeros[0].location == pytest.approx(0.5, abs=1e-5)


def test_exact_interior_zero_without_sign_change_is_tangential() -> None:
    """An exact zero at a sample where u keeps its sign is tangential."""

    solution = JacobiSolution(
        interval=UNIT,
        seeds=(0.25, -1.0),
        nodes=np.linspace(0.0, 1.0, 11),
        dense=_Parabola(center=0.5, floor=0.0),
        p=_fn("1"),
    )

    zeros = find_zeros(solution, exclude_start=False)

    assert zeros == [JacobiZero(0.5, ZeroKind.TANGENTIAL)]


@pytest.mark.parametrize(
    ("q", "status"),
    [
        (-20.0, C5Status.CONJUGATE_POINT),
        (-16.0, C5Status.CONJUGATE_POINT),
        (-5.0, C5Status.HOLDS),
        (-2.0, C5Status.HOLDS),
        (0.0, C5Status.HOLDS),
        (1.0, C5Status.HOLDS),
        (5.0, C5Status.HOLDS),
        (-((math.pi / 2) ** 2), C5Status.HOLDS),
    ],
)
def test_check_c5_on_constant_family(settings: Settings, q: float, status: C5Status) -> None:
    """The first-zero check holds exactly when Q > -pi^2."""

    outcome = check_c5(_fn("1"), _constant_q(q), UNIT, settings)

    assert outcome.status is status


def test_check_c5_reports_conjugate_location(settings: Settings) -> None:
    """Q = -16 is a conjugate point at pi/4."""

    outcome = check_c5(_fn("1"), _fn("-16"), UNIT, settings)

    assert outcome.status is C5Status.CONJUGATE_POINT
    assert outcome.location == pytest.approx(math.pi / 4, abs=1e-6)
    assert not outcome.holds


def test_endpoint_zero_is_borderline(settings: Settings) -> None:
    """Q = -pi^2 vanishes exactly at the right endpoint."""

    outcome = check_c5(_fn("1"), _constant_q(-(math.pi**2)), UNIT, settings)

    assert outcome.status is C5Status.BORDERLINE
    assert outcome.location == pytest.approx(1.0, abs=1e-6)


def test_steep_growing_solution_holds(settings: Settings) -> None:
    """A fast-growing positive u with P nearly vanishing at x1 carries no endpoint marker."""

    outcome = check_c5(_fn("1 - x + 1e-8"), _fn("0"), UNIT, settings)

    assert outcome.status is C5Status.HOLDS
    assert outcome.solution is not None
    assert outcome.solution.zeros == ()
    assert float(outcome.solution.u(1.0)) > 1.0


@dataclass(frozen=True)
class _Line:
    """State of u = sign * (1 + gap - x) with P = 1."""

    gap: float
    sign: float

    def __call__(self, x: ArrayLike) -> NDArray[np.float64]:
        x = np.asarray(x, dtype=float)
        return np.array([self.sign * (1.0 + self.gap - x), np.full_like(x, -self.sign)])


@pytest.mark.parametrize("sign", [1.0, -1.0])
def test_zero_just_past_endpoint_is_a_marker(sign: float) -> None:
    """|u| shrinking toward a zero 1e-7 beyond x1 gives an endpoint marker."""

    solution = JacobiSolution(
        interval=UNIT,
        seeds=(sign * (1.0 + 1e-7), -sign),
        nodes=np.linspace(0.0, 1.0, 11),
        dense=_Line(gap=1e-7, sign=sign),
        p=_fn("1"),
    )

    zeros = find_zeros(solution, exclude_start=True, zero_tol=1e-9)

    assert zeros == [JacobiZero(1.0, ZeroKind.ENDPOINT)]


@pytest.mark.parametrize(
    ("factor", "status"),
    [(1.0 - 1e-3, C5Status.HOLDS), (1.0 + 1e-3, C5Status.CONJUGATE_POINT)],
)
def test_knife_edge_flips(settings: Settings, factor: float, status: C5Status) -> None:
    """A relative change of 1e-3 around -pi^2 decides the outcome."""

    outcome = check_c5(_fn("1"), _constant_q(-(math.pi**2) * factor), UNIT, settings)

    assert outcome.status is status


def test_halving_tolerance_keeps_outcome(settings: Settings) -> None:
    """Tighter integrator tolerances do not change the decision."""

    tighter = settings.merged(ode_rtol=settings.ode_rtol / 2, ode_atol=settings.ode_atol / 2)
    for q in (-60.0, -20.0, -9.0, -1.0, 0.0, 50.0, 100.0):
        first = check_c5(_fn("1"), _constant_q(q), UNIT, settings)
        second = check_c5(_fn("1"), _constant_q(q), UNIT, tighter)
        assert first.status is second.status


def test_check_c5_not_applicable_when_p_fails(settings: Settings) -> None:
    """A non-positive P yields not_applicable with the offending location."""

    outcome = check_c5(_fn("-1"), _fn("0"), UNIT, settings)

    assert outcome.status is C5Status.NOT_APPLICABLE
    assert outcome.location == pytest.approx(0.0)
    assert outcome.solution is None


def test_positive_solution_for_free_equation(settings: Settings) -> None:
    """P = 1, Q = 0 combines to x + 1/2."""

    solution = positive_solution(_fn("1"), _fn("0"), UNIT, settings)

    assert solution.delta == pytest.approx(1.0)
    assert solution.m == pytest.approx(1.0)
    assert solution.u1_max == pytest.approx(1.0)
    np.testing.assert_allclose(solution.samples, solution.grid + 0.5, atol=1e-9)


def test_positive_solution_solves_jacobi_equation(settings: Settings) -> None:
    """The combination is positive and satisfies (P u')' = Q u."""

    p, q = _fn("1 + x^2"), _fn("1 - 3*x")
    solution = positive_solution(p, q, UNIT, settings)

    assert np.all(solution.samples > 0)
    assert 0.0 < solution.delta <= 1.0
    grid = np.linspace(0.0, 1.0, 20001)
    residual = np.gradient(solution.v(grid), grid, edge_order=2) - q(grid) * solution.u(grid)
    assert float(np.max(np.abs(residual))) <= 1e-6


def test_positive_solution_for_growing_equation(settings: Settings) -> None:
    """P = 1, Q = 1 combines sinh and cosh into a positive function."""

    solution = positive_solution(_fn("1"), _fn("1"), UNIT, settings)

    assert float(np.min(solution.samples)) > 0
    np.testing.assert_allclose(
        solution.u(solution.grid),
        np.sinh(solution.grid) + solution.weight * np.cosh(solution.grid),
        atol=1e-8,
    )


def test_positive_solution_requires_c5(settings: Settings) -> None:
    """No positive solution exists past a conjugate point."""

    with pytest.raises(PositiveSolutionError, match="conjugate_point"):
        positive_solution(_fn("1"), _fn("-16"), UNIT, settings)
