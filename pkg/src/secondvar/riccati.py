"""Riccati equation ``w' = w^2 / P - Q`` and the coercivity bound it yields."""

from __future__ import annotations

import asyncio
import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass
from enum import StrEnum
from typing import Protocol

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.integrate import simpson, solve_ivp

from .config import Settings
from .expr import ScalarFunction
from .jacobi import LegendreError, require_legendre
from .variational import uniform_grid

logger = logging.getLogger(__name__)

LOCAL_STEP_FRACTION = 1e-2
RESIDUAL_TOL = 1e-5


class NonPositiveSolutionError(ValueError):
    """A Jacobi solution used for ``w = -P u' / u`` vanishes or turns negative."""

    def __init__(self, x: float, value: float) -> None:
        super().__init__(f"Jacobi solution is not positive at x = {x:.6g} (u = {value:.3g})")
        self.x = x
        self.value = value


class RiccatiStatus(StrEnum):
    BOUNDED = "bounded"
    BLOWUP = "blowup"


@dataclass(frozen=True, slots=True, eq=False)
class RiccatiOutcome:
    status: RiccatiStatus
    w0: float
    grid: NDArray[np.float64]
    w: NDArray[np.float64]
    location: float | None = None

    @property
    def bounded(self) -> bool:
        return self.status is RiccatiStatus.BOUNDED

    @property
    def max_abs_w(self) -> float:
        return float(np.max(np.abs(self.w))) if self.w.size else 0.0


@dataclass(frozen=True, slots=True)
class _Escape:
    """Terminal event when ``|w|`` reaches the blow-up cap."""

    cap: float
    terminal: bool = True
    direction: float = 0.0

    def __call__(self, x: float, state: NDArray[np.float64]) -> float:
        return self.cap - abs(float(state[0]))


def integrate_riccati(
    p: ScalarFunction,
    q: ScalarFunction,
    interval: tuple[float, float],
    w0: float,
    settings: Settings,
) -> RiccatiOutcome:
    """Integrate from ``w(x0) = w0`` until ``x1`` or ``|w| >= blowup_cap``."""

    x0, x1 = interval
    require_legendre(p, interval, settings.grid)

    def rhs(x: float, state: NDArray[np.float64]) -> NDArray[np.float64]:
        p_x = float(p(x))
        if p_x <= 0:
            raise LegendreError(x, p_x)
        with np.errstate(over="ignore", invalid="ignore"):
            return np.array([state[0] * state[0] / p_x - float(q(x))])

    sol = solve_ivp(
        rhs,
        (x0, x1),
        [float(w0)],
        method="RK45",
        rtol=settings.ode_rtol,
        atol=settings.ode_atol,
        dense_output=True,
        events=_Escape(settings.blowup_cap),
    )

    if sol.status != 0 or sol.sol is None:
        location = float(sol.t[-1])
        logger.info(
            "Riccati from w0=%g blows up near x=%.12g (%s)", w0, location, sol.message
        )
        return RiccatiOutcome(
            status=RiccatiStatus.BLOWUP,
            w0=float(w0),
            grid=np.asarray(sol.t, dtype=float),
            w=np.asarray(sol.y[0], dtype=float),
            location=location,
        )

    grid = uniform_grid(interval, settings.grid)
    w = np.asarray(sol.sol(grid)[0], dtype=float)
    outcome = RiccatiOutcome(status=RiccatiStatus.BOUNDED, w0=float(w0), grid=grid, w=w)
    logger.debug("Riccati from w0=%g bounded, max|w|=%.6g", w0, outcome.max_abs_w)
    return outcome


async def scan_riccati(
    p: ScalarFunction,
    q: ScalarFunction,
    interval: tuple[float, float],
    w0_values: Sequence[float],
    settings: Settings,
) -> list[RiccatiOutcome]:
    """Integrate from several initial values concurrently."""

    tasks = [
        asyncio.to_thread(integrate_riccati, p, q, interval, w0, settings)
        for w0 in w0_values
    ]
    outcomes = list(await asyncio.gather(*tasks))
    bounded = sum(outcome.bounded for outcome in outcomes)
    logger.info("Riccati scan: %d/%d initial values stay bounded", bounded, len(outcomes))
    return outcomes


class JacobiLike(Protocol):
    """Anything exposing ``u`` and ``v = P u'`` on an interval."""

    @property
    def interval(self) -> tuple[float, float]: ...

    def u(self, x: ArrayLike) -> NDArray[np.float64]: ...

    def v(self, x: ArrayLike) -> NDArray[np.float64]: ...


def riccati_function(solution: JacobiLike) -> ScalarFunction:
    """``w = -P u' / u`` as a callable on the interval."""

    def w(x: ArrayLike) -> NDArray[np.float64]:
        return -solution.v(x) / solution.u(x)

    return w


def riccati_from_jacobi(solution: JacobiLike, n: int) -> RiccatiOutcome:
    """Sample ``w = -P u' / u`` from a strictly positive Jacobi solution."""

    grid = uniform_grid(solution.interval, n)
    u = solution.u(grid)
    bad = np.flatnonzero(u <= 0)
    if bad.size:
        index = int(bad[0])
        raise NonPositiveSolutionError(float(grid[index]), float(u[index]))
    w = -solution.v(grid) / u
    return RiccatiOutcome(status=RiccatiStatus.BOUNDED, w0=float(w[0]), grid=grid, w=w)


def riccati_residual(
    p: ScalarFunction,
    q: ScalarFunction,
    grid: NDArray[np.float64],
    w: NDArray[np.float64],
) -> float:
    """Max of ``|w' - w^2/P + Q|`` on interior nodes of a uniform grid.

    ``w'`` comes from the fourth-order five-point central stencil.
    """

    if grid.size < 5:
        raise ValueError("residual needs at least five samples")
    step = (grid[-1] - grid[0]) / (grid.size - 1)
    slope = (w[:-4] - 8.0 * w[1:-3] + 8.0 * w[3:-1] - w[4:]) / (12.0 * step)
    interior = grid[2:-2]
    residual = slope - w[2:-2] ** 2 / p(interior) + q(interior)
    return float(np.max(np.abs(residual)))


def scaled_riccati_residual(
    p: ScalarFunction,
    q: ScalarFunction,
    w: ScalarFunction,
    interval: tuple[float, float],
    n: int,
) -> float:
    """Max of ``|w' - w^2/P + Q| / (1 + w^2/P + |Q|)`` on the interior grid nodes.

    ``w'`` uses the five-point stencil on the callable ``w``, with the step
    shrunk below ``LOCAL_STEP_FRACTION * P / |w|``, the length over which a
    Riccati solution changes by order one.
    """

    if n < 4:
        raise ValueError("residual needs at least five samples")
    x0, x1 = interval
    nodes = uniform_grid(interval, n)[2:-2]
    spacing = (x1 - x0) / n
    p_nodes = p(nodes)
    q_nodes = q(nodes)
    w_nodes = w(nodes)

    step = np.minimum(spacing, LOCAL_STEP_FRACTION * p_nodes / np.maximum(np.abs(w_nodes), 1.0))
    slope = (
        w(nodes - 2.0 * step) - 8.0 * w(nodes - step) + 8.0 * w(nodes + step) - w(nodes + 2.0 * step)
    ) / (12.0 * step)
    balance = w_nodes**2 / p_nodes
    residual = np.abs(slope - balance + q_nodes) / (1.0 + balance + np.abs(q_nodes))
    return float(np.max(residual))


def coercivity_lower_bound(
    p: ScalarFunction,
    w: ScalarFunction,
    interval: tuple[float, float],
    n: int,
) -> float:
    """Certified ``gamma`` with ``Gamma[h] >= gamma * ||h||^2_{H1}`` when ``w`` solves the Riccati equation.

    With ``r = h' + w h / P`` the quadratic form equals ``int P r^2``, which
    is at least ``alpha ||r||^2``. Reconstructing ``h`` from ``r`` bounds
    both ``||h||`` and ``||h'||`` by ``c ||r||``.
    """

    x0, x1 = interval
    grid = uniform_grid(interval, n)
    p_samples = p(grid)
    ratio = np.abs(w(grid)) / p_samples
    alpha = float(np.min(p_samples))
    c_h = (x1 - x0) * math.exp(float(simpson(ratio, x=grid)))
    c = max(c_h, 1.0 + float(np.max(ratio)) * c_h)
    return alpha / (2.0 * c * c)


@dataclass(frozen=True, slots=True, eq=False)
class Reconstruction:
    grid: NDArray[np.float64]
    h: NDArray[np.float64]
    bound_constant: float
    h_norm: float
    r_norm: float


def reconstruct_h(
    r: ScalarFunction,
    w: ScalarFunction,
    p: ScalarFunction,
    interval: tuple[float, float],
    settings: Settings,
) -> Reconstruction:
    """Solve ``h' = r - w h / P`` with ``h(x0) = 0``."""

    x0, x1 = interval

    def rhs(x: float, state: NDArray[np.float64]) -> NDArray[np.float64]:
        return np.array([float(r(x)) - float(w(x)) * state[0] / float(p(x))])

    sol = solve_ivp(
        rhs,
        (x0, x1),
        [0.0],
        method="RK45",
        rtol=settings.ode_rtol,
        atol=settings.ode_atol,
        dense_output=True,
    )
    if not sol.success or sol.sol is None:
        raise RuntimeError(f"reconstruction failed at x={sol.t[-1]:.6g}: {sol.message}")

    grid = uniform_grid(interval, settings.grid)
    h = np.asarray(sol.sol(grid)[0], dtype=float)
    ratio = np.abs(w(grid)) / p(grid)
    return Reconstruction(
        grid=grid,
        h=h,
        bound_constant=(x1 - x0) * math.exp(float(simpson(ratio, x=grid))),
        h_norm=math.sqrt(float(simpson(h * h, x=grid))),
        r_norm=math.sqrt(float(simpson(r(grid) ** 2, x=grid))),
    )


__all__ = [
    "JacobiLike",
    "NonPositiveSolutionError",
    "Reconstruction",
    "RiccatiOutcome",
    "RiccatiStatus",
    "coercivity_lower_bound",
    "integrate_riccati",
    "reconstruct_h",
    "riccati_from_jacobi",
    "riccati_function",
    "RESIDUAL_TOL",
    "riccati_residual",
    "scaled_riccati_residual",
    "scan_riccati",
]
