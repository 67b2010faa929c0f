"""Jacobi accessory equation ``(P u')' = Q u``, its zeros and positive solutions.

The equation is integrated as the first-order system ``u' = v / P``,
``v' = Q u`` with an adaptive RK45 stepper; the dense output of the
integrator is used for zero search and resampling.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from enum import StrEnum

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.integrate import OdeSolution, solve_ivp
from scipy.optimize import bisect, minimize_scalar

from .config import Settings
from .expr import ScalarFunction
from .variational import uniform_grid

logger = logging.getLogger(__name__)

ZERO_XTOL = 1e-12
SUBDIVISIONS = 8
ENDPOINT_BAND = 1e-6


class LegendreError(ValueError):
    """``P`` is not strictly positive where it must be."""

    def __init__(self, x: float, value: float) -> None:
        super().__init__(f"P(x) = {value:.6g} <= 0 at x = {x:.6g}")
        self.x = x
        self.value = value


class JacobiIntegrationError(RuntimeError):
    """The ODE integrator stopped before reaching the right endpoint."""


class PositiveSolutionError(RuntimeError):
    """No strictly positive Jacobi solution could be built."""


def require_legendre(p: ScalarFunction, interval: tuple[float, float], n: int) -> float:
    """Return ``min P`` on the grid or raise :class:`LegendreError`."""

    grid = uniform_grid(interval, n)
    samples = p(grid)
    index = int(np.argmin(samples))
    if samples[index] <= 0:
        raise LegendreError(float(grid[index]), float(samples[index]))
    return float(samples[index])


class ZeroKind(StrEnum):
    CROSSING = "crossing"
    TANGENTIAL = "tangential"
    ENDPOINT = "endpoint"


@dataclass(frozen=True, slots=True)
class JacobiZero:
    location: float
    kind: ZeroKind


@dataclass(frozen=True, slots=True, eq=False)
class JacobiSolution:
    interval: tuple[float, float]
    seeds: tuple[float, float]
    nodes: NDArray[np.float64]
    dense: OdeSolution
    p: ScalarFunction
    zeros: tuple[JacobiZero, ...] = ()

    def state(self, x: ArrayLike) -> NDArray[np.float64]:
        return np.asarray(self.dense(x), dtype=float)

    def u(self, x: ArrayLike) -> NDArray[np.float64]:
        return self.state(x)[0]

    def v(self, x: ArrayLike) -> NDArray[np.float64]:
        return self.state(x)[1]

    def derivative(self, x: ArrayLike) -> NDArray[np.float64]:
        return self.v(x) / self.p(x)

    @property
    def first_zero(self) -> JacobiZero | None:
        return self.zeros[0] if self.zeros else None


def integrate_jacobi(
    p: ScalarFunction,
    q: ScalarFunction,
    interval: tuple[float, float],
    u0: float,
    u1: float,
    settings: Settings,
) -> JacobiSolution:
    """Solve ``(P u')' = Q u`` with ``u(x0) = u0``, ``u'(x0) = u1``."""

    x0, x1 = interval
    require_legendre(p, interval, settings.grid)

    def rhs(x: float, state: NDArray[np.float64]) -> NDArray[np.float64]:
        p_x = float(p(x))
        if p_x <= 0:
            raise LegendreError(x, p_x)
        return np.array([state[1] / p_x, float(q(x)) * state[0]])

    sol = solve_ivp(
        rhs,
        (x0, x1),
        [float(u0), float(p(x0)) * float(u1)],
        method="RK45",
        rtol=settings.ode_rtol,
        atol=settings.ode_atol,
        dense_output=True,
    )
    if not sol.success or sol.sol is None:
        raise JacobiIntegrationError(f"Jacobi integration failed at x={sol.t[-1]:.6g}: {sol.message}")

    solution = JacobiSolution(
        interval=interval,
        seeds=(float(u0), float(u1)),
        nodes=np.asarray(sol.t, dtype=float),
        dense=sol.sol,
        p=p,
    )
    zeros = find_zeros(solution, exclude_start=u0 == 0.0, zero_tol=settings.zero_tol)
    logger.debug(
        "Jacobi solution seeds=%s steps=%d zeros=%d",
        solution.seeds,
        len(solution.nodes),
        len(zeros),
    )
    return replace(solution, zeros=tuple(zeros))


def _sample_nodes(nodes: NDArray[np.float64]) -> NDArray[np.float64]:
    fractions = np.linspace(0.0, 1.0, SUBDIVISIONS, endpoint=False)
    steps = np.diff(nodes)
    inner = (nodes[:-1, None] + steps[:, None] * fractions[None, :]).ravel()
    return np.append(inner, nodes[-1])


def find_zeros(
    solution: JacobiSolution,
    *,
    exclude_start: bool = True,
    zero_tol: float = 1e-9,
) -> list[JacobiZero]:
    """Zeros of ``u`` on the interval, sorted by location.

    Sign changes are refined by bisection. Interior minima of ``|u|`` inside
    the ``zero_tol`` band without a sign change are tangential markers. A
    value inside the band at the right endpoint, or a decreasing ``|u|``
    whose Newton step from ``x1`` lands within ``ENDPOINT_BAND``, is an
    endpoint marker.
    """

    x0, x1 = solution.interval
    xs = _sample_nodes(solution.nodes)
    values = solution.u(xs)
    scale = float(np.max(np.abs(values))) or 1.0
    band = zero_tol * scale

    def u_scalar(x: float) -> float:
        return float(solution.u(x))

    zeros: list[JacobiZero] = []
    if not exclude_start and abs(values[0]) <= band:
        zeros.append(JacobiZero(x0, ZeroKind.CROSSING))

    signs = np.sign(values)
    for i in np.flatnonzero(signs[:-1] * signs[1:] < 0):
        location = bisect(u_scalar, xs[i], xs[i + 1], xtol=ZERO_XTOL)
        zeros.append(JacobiZero(float(location), ZeroKind.CROSSING))

    # exact zeros at interior samples
    for i in np.flatnonzero(values[1:-1] == 0.0) + 1:
        kind = ZeroKind.CROSSING if signs[i - 1] * signs[i + 1] < 0 else ZeroKind.TANGENTIAL
        zeros.append(JacobiZero(float(xs[i]), kind))

    magnitude = np.abs(values)
    for i in range(1, len(xs) - 1):
        if not (0.0 < magnitude[i] <= band):
            continue
        if magnitude[i] > magnitude[i - 1] or magnitude[i] > magnitude[i + 1]:
            continue
        if signs[i - 1] != signs[i] or signs[i + 1] != signs[i]:
            continue
        refined = minimize_scalar(
            lambda x: abs(u_scalar(x)),
            bounds=(float(xs[i - 1]), float(xs[i + 1])),
            method="bounded",
            options={"xatol": ZERO_XTOL},
        )
        zeros.append(JacobiZero(float(refined.x), ZeroKind.TANGENTIAL))

    # a zero within ENDPOINT_BAND of x1 is not resolvable: either a crossing
    # already sits there, or u is heading down and a Newton step lands there
    near = ENDPOINT_BAND * (x1 - x0)
    end_value = float(values[-1])
    end_slope = float(solution.derivative(x1))
    approaching = end_value * end_slope < 0 and abs(end_value) <= near * abs(end_slope)
    crossing_at_end = any(x1 - zero.location <= near for zero in zeros)
    if abs(end_value) <= band or approaching or crossing_at_end:
        zeros = [zero for zero in zeros if x1 - zero.location > near]
        zeros.append(JacobiZero(x1, ZeroKind.ENDPOINT))

    zeros.sort(key=lambda zero: zero.location)
    return zeros


class C5Status(StrEnum):
    HOLDS = "holds"
    CONJUGATE_POINT = "conjugate_point"
    BORDERLINE = "borderline"
    NOT_APPLICABLE = "not_applicable"


@dataclass(frozen=True, slots=True, eq=False)
class C5Outcome:
    status: C5Status
    location: float | None = None
    reason: str | None = None
    solution: JacobiSolution | None = None

    @property
    def holds(self) -> bool:
        return self.status is C5Status.HOLDS


def check_c5(
    p: ScalarFunction,
    q: ScalarFunction,
    interval: tuple[float, float],
    settings: Settings,
) -> C5Outcome:
    """Decide whether the solution with ``u(x0) = 0, u'(x0) = 1`` stays nonzero on ``(x0, x1]``."""

    try:
        solution = integrate_jacobi(p, q, interval, 0.0, 1.0, settings)
    except LegendreError as exc:
        logger.warning("Jacobi check not applicable: %s", exc)
        return C5Outcome(C5Status.NOT_APPLICABLE, location=exc.x, reason=str(exc))
    except JacobiIntegrationError as exc:
        logger.warning("Jacobi check not applicable: %s", exc)
        return C5Outcome(C5Status.NOT_APPLICABLE, reason=str(exc))

    first = solution.first_zero
    if first is None:
        logger.info("Jacobi solution stays positive on (%g, %g]", *interval)
        return C5Outcome(C5Status.HOLDS, solution=solution)
    if first.kind is ZeroKind.CROSSING:
        logger.info("Conjugate point at x=%.12g", first.location)
        return C5Outcome(
            C5Status.CONJUGATE_POINT,
            location=first.location,
            reason="Jacobi solution changes sign",
            solution=solution,
        )
    logger.info("Borderline %s zero at x=%.12g", first.kind, first.location)
    return C5Outcome(
        C5Status.BORDERLINE,
        location=first.location,
        reason=f"{first.kind} zero within tolerance",
        solution=solution,
    )


def scan_conjugate_points(
    p: ScalarFunction,
    q: ScalarFunction,
    interval: tuple[float, float],
    settings: Settings,
) -> list[float]:
    """Every sign change (and endpoint marker) of the basic Jacobi solution."""

    solution = integrate_jacobi(p, q, interval, 0.0, 1.0, settings)
    return [zero.location for zero in solution.zeros if zero.kind is not ZeroKind.TANGENTIAL]


@dataclass(frozen=True, slots=True, eq=False)
class PositiveSolution:
    """``U0 + m U1 / (2 max |U1|)``, strictly positive on the closed interval."""

    sine_like: JacobiSolution
    cosine_like: JacobiSolution
    delta: float
    m: float
    u1_max: float
    grid: NDArray[np.float64]
    samples: NDArray[np.float64]

    @property
    def interval(self) -> tuple[float, float]:
        return self.sine_like.interval

    @property
    def weight(self) -> float:
        return self.m / (2.0 * self.u1_max)

    @property
    def p(self) -> ScalarFunction:
        return self.sine_like.p

    def u(self, x: ArrayLike) -> NDArray[np.float64]:
        return self.sine_like.u(x) + self.weight * self.cosine_like.u(x)

    def v(self, x: ArrayLike) -> NDArray[np.float64]:
        return self.sine_like.v(x) + self.weight * self.cosine_like.v(x)

    def derivative(self, x: ArrayLike) -> NDArray[np.float64]:
        return self.v(x) / self.p(x)


def positive_solution(
    p: ScalarFunction,
    q: ScalarFunction,
    interval: tuple[float, float],
    settings: Settings,
) -> PositiveSolution:
    """Combine the sine-like and cosine-like solutions into a positive one."""

    outcome = check_c5(p, q, interval, settings)
    if not outcome.holds or outcome.solution is None:
        raise PositiveSolutionError(
            f"no positive Jacobi solution: first-zero check is {outcome.status}"
            + (f" at x={outcome.location:.12g}" if outcome.location is not None else "")
        )
    sine_like = outcome.solution
    cosine_like = integrate_jacobi(p, q, interval, 1.0, 0.0, settings)

    grid = uniform_grid(interval, settings.grid)
    s = sine_like.u(grid)
    c = cosine_like.u(grid)

    below = np.flatnonzero(c < 0.5)
    delta_index = int(below[0]) - 1 if below.size else len(grid) - 1
    if delta_index < 1:
        raise PositiveSolutionError(
            f"cosine-like solution drops below 1/2 before x={grid[1]:.6g}; refine the grid"
        )
    m = float(np.min(s[delta_index:]))
    if m <= 0:
        raise PositiveSolutionError(f"sine-like solution is not positive on [{grid[delta_index]:.6g}, x1]")

    u1_max = float(np.max(np.abs(c)))
    combined = s + m * c / (2.0 * u1_max)
    bad = np.flatnonzero(combined <= 0)
    if bad.size:
        raise PositiveSolutionError(f"combined solution is not positive at x={grid[bad[0]]:.6g}")

    logger.debug(
        "Positive solution: delta=%.6g m=%.6g max|U1|=%.6g min=%.6g",
        grid[delta_index],
        m,
        u1_max,
        float(np.min(combined)),
    )
    return PositiveSolution(
        sine_like=sine_like,
        cosine_like=cosine_like,
        delta=float(grid[delta_index]),
        m=m,
        u1_max=u1_max,
        grid=grid,
        samples=combined,
    )


__all__ = [
    "C5Outcome",
    "C5Status",
    "JacobiIntegrationError",
    "JacobiSolution",
    "JacobiZero",
    "LegendreError",
    "PositiveSolution",
    "PositiveSolutionError",
    "ZeroKind",
    "check_c5",
    "find_zeros",
    "integrate_jacobi",
    "positive_solution",
    "require_legendre",
    "scan_conjugate_points",
]
