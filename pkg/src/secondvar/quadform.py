"""Quadratic forms of the second variation and their discrete coercivity constant."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy.integrate import simpson
from scipy.linalg import LinAlgError, cho_solve_banded, cholesky_banded

from .expr import Expression, ScalarFunction, compile_expression, differentiate, parse
from .variational import CoefficientSet, uniform_grid

logger = logging.getLogger(__name__)

BOUNDARY_TOL = 1e-12
SINE_MODES = 8
BUMP_POWERS = 4
MIN_NODES = 16


class TestFunctionError(ValueError):
    """A test function does not vanish at both endpoints."""

    __test__ = False


class CoercivityError(RuntimeError):
    """The shifted coercivity matrix could not be factored."""

    def __init__(self, shift: float, message: str) -> None:
        super().__init__(f"factorization failed with shift {shift:.6g}: {message}")
        self.shift = shift


@dataclass(frozen=True, slots=True, eq=False)
class TestFunction:
    """``h`` and ``h'`` sampled on a uniform grid, vanishing at both ends."""

    __test__ = False

    label: str
    expression: Expression
    grid: NDArray[np.float64]
    values: NDArray[np.float64]
    derivative: NDArray[np.float64]


def make_test_function(
    expression: Expression | str,
    interval: tuple[float, float],
    n: int,
    label: str | None = None,
) -> TestFunction:
    if isinstance(expression, str):
        expression = parse(expression)
    grid = uniform_grid(interval, n)
    values = compile_expression(expression)(grid)
    if abs(values[0]) > BOUNDARY_TOL or abs(values[-1]) > BOUNDARY_TOL:
        raise TestFunctionError(
            f"test function {label or expression} is {values[0]:.3g} at x0 and {values[-1]:.3g} at x1"
        )
    derivative = compile_expression(differentiate(expression, "x"))(grid)
    return TestFunction(
        label=label or str(expression),
        expression=expression,
        grid=grid,
        values=values,
        derivative=derivative,
    )


def standard_battery(interval: tuple[float, float], n: int) -> list[TestFunction]:
    """Sine modes ``k = 1..8`` and normalized polynomial bumps of degree 2..5."""

    x0, x1 = interval
    length = x1 - x0
    offset = f"(x - ({x0!r}))"
    battery = [
        make_test_function(
            f"sin({k}*pi*{offset}/({length!r}))", interval, n, label=f"sin{k}"
        )
        for k in range(1, SINE_MODES + 1)
    ]
    for k in range(BUMP_POWERS):
        # max of t^(k+1) (1 - t) on [0, 1] is at t = (k+1)/(k+2)
        t_star = (k + 1) / (k + 2)
        peak = length * length * t_star ** (k + 1) * (1.0 - t_star)
        text = f"{1.0 / peak!r}*{offset}*(({x1!r}) - x)*({offset}/({length!r}))^{k}"
        battery.append(make_test_function(text, interval, n, label=f"bump{k}"))
    return battery


def omega(p: ScalarFunction, q: ScalarFunction, r: ScalarFunction, h: TestFunction) -> float:
    """``int P h'^2 + 2 R h h' + Q h^2``."""

    x = h.grid
    integrand = p(x) * h.derivative**2 + 2.0 * r(x) * h.derivative * h.values + q(x) * h.values**2
    return float(simpson(integrand, x=x))


def gamma_form(p: ScalarFunction, q: ScalarFunction, h: TestFunction) -> float:
    """``int P h'^2 + Q h^2``."""

    x = h.grid
    return float(simpson(p(x) * h.derivative**2 + q(x) * h.values**2, x=x))


def reduce_omega(coeffs: CoefficientSet) -> tuple[ScalarFunction, ScalarFunction]:
    """``(P, Q - R')``: integrating ``2 R h h'`` by parts moves ``R`` into ``Q``."""

    return coeffs.p, coeffs.q_eff


@dataclass(frozen=True, slots=True)
class PerfectSquare:
    lhs: float
    rhs: float

    @property
    def gap(self) -> float:
        return abs(self.lhs - self.rhs)


def perfect_square_check(
    p: ScalarFunction, q: ScalarFunction, w: ScalarFunction, h: TestFunction
) -> PerfectSquare:
    """Compare ``Gamma[h]`` with ``int P (h' + w h / P)^2``."""

    x = h.grid
    p_x = p(x)
    square = p_x * (h.derivative + w(x) * h.values / p_x) ** 2
    return PerfectSquare(lhs=gamma_form(p, q, h), rhs=float(simpson(square, x=x)))


def h1_norm_squared(h: TestFunction) -> float:
    return float(simpson(h.values**2 + h.derivative**2, x=h.grid))


@dataclass(frozen=True, slots=True, eq=False)
class CoercivityEstimate:
    gamma: float
    n: int
    nodes: NDArray[np.float64]
    mode: NDArray[np.float64]
    shift: float
    iterations: int
    converged: bool


def _tridiagonal_product(
    diagonal: NDArray[np.float64], off: NDArray[np.float64], x: NDArray[np.float64]
) -> NDArray[np.float64]:
    result = diagonal * x
    result[:-1] += off * x[1:]
    result[1:] += off * x[:-1]
    return result


def coercivity_constant(
    p: ScalarFunction,
    q: ScalarFunction,
    interval: tuple[float, float],
    n: int,
    *,
    tol: float = 1e-12,
    max_iter: int = 5000,
) -> CoercivityEstimate:
    """Smallest generalized eigenvalue of the stiffness pencil ``A x = gamma B x``.

    ``A`` discretizes ``Gamma`` with ``P`` at cell midpoints and ``Q`` at
    interior nodes; ``B`` is the same discretization of the ``H1`` norm.
    Shifted inverse iteration uses a single banded Cholesky factorization.
    """

    if n < MIN_NODES:
        raise ValueError(f"coercivity needs at least {MIN_NODES} interior nodes, got {n}")
    x0, x1 = interval
    step = (x1 - x0) / (n + 1)
    nodes = x0 + step * np.arange(1, n + 1)
    midpoints = x0 + step * (np.arange(n + 1) + 0.5)
    p_mid = p(midpoints)
    q_nodes = q(nodes)

    a_diagonal = (p_mid[:-1] + p_mid[1:]) / step + step * q_nodes
    a_off = -p_mid[1:-1] / step
    b_diagonal = np.full(n, 2.0 / step + step)
    b_off = np.full(n - 1, -1.0 / step)

    # x^T A x >= min(P, Q) x^T B x, so the shift sits below the spectrum
    lower = min(float(np.min(p_mid)), float(np.min(q_nodes)))
    shift = lower - 1e-3 * (1.0 + abs(lower))

    banded = np.zeros((2, n))
    banded[0, 1:] = a_off - shift * b_off
    banded[1, :] = a_diagonal - shift * b_diagonal
    try:
        factor = cholesky_banded(banded, lower=False)
    except LinAlgError as exc:
        raise CoercivityError(shift, str(exc)) from exc

    # energies summed from squared differences with zero boundary values
    def rayleigh(vector: NDArray[np.float64]) -> float:
        jumps = np.diff(np.concatenate(([0.0], vector, [0.0]))) ** 2
        numerator = float(np.sum(p_mid * jumps)) / step + step * float(np.sum(q_nodes * vector**2))
        denominator = float(np.sum(jumps)) / step + step * float(np.sum(vector**2))
        return numerator / denominator

    vector = np.ones(n)
    vector /= math.sqrt(vector @ _tridiagonal_product(b_diagonal, b_off, vector))
    previous = rayleigh(vector)
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        solved = cho_solve_banded((factor, False), _tridiagonal_product(b_diagonal, b_off, vector))
        vector = solved / math.sqrt(solved @ _tridiagonal_product(b_diagonal, b_off, solved))
        current = rayleigh(vector)
        if abs(current - previous) <= tol * max(abs(current), current - shift):
            converged = True
            previous = current
            break
        previous = current

    if not converged:
        logger.warning(
            "Inverse iteration did not converge in %d steps (n=%d, gamma=%.12g)",
            max_iter,
            n,
            previous,
        )
    if vector.sum() < 0:
        vector = -vector

    logger.debug("Coercivity n=%d gamma=%.12g after %d iterations", n, previous, iterations)
    return CoercivityEstimate(
        gamma=previous,
        n=n,
        nodes=nodes,
        mode=vector,
        shift=shift,
        iterations=iterations,
        converged=converged,
    )


def coercivity_trend(
    p: ScalarFunction,
    q: ScalarFunction,
    interval: tuple[float, float],
    n: int,
    *,
    tol: float = 1e-12,
    max_iter: int = 5000,
) -> list[CoercivityEstimate]:
    """Estimates at ``n``, ``2n`` and ``4n`` interior nodes."""

    return [
        coercivity_constant(p, q, interval, size, tol=tol, max_iter=max_iter)
        for size in (n, 2 * n, 4 * n)
    ]


__all__ = [
    "CoercivityError",
    "CoercivityEstimate",
    "TestFunction",
    "TestFunctionError",
    "coercivity_constant",
    "coercivity_trend",
    "gamma_form",
    "h1_norm_squared",
    "make_test_function",
    "omega",
    "PerfectSquare",
    "perfect_square_check",
    "reduce_omega",
    "standard_battery",
]
