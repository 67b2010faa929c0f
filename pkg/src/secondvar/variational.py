"""Problem loading, the objective, Euler residual and second-variation coefficients."""

from __future__ import annotations

import json
import logging
from collections.abc import Mapping
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
from numpy.typing import NDArray
from pydantic import ValidationError
from scipy.integrate import simpson

from .autodiff import hessian_pq
from .config import Settings, load_settings
from .expr import (
    ZERO,
    Const,
    Expression,
    ExpressionError,
    ScalarFunction,
    add,
    compile_expression,
    differentiate,
    mul,
    parse,
    sub,
    substitute,
)
from .models import CoefficientOverrides, Problem, ProblemDocument, ProblemError

logger = logging.getLogger(__name__)

HYPERDUAL_SAMPLES = 64


def uniform_grid(interval: tuple[float, float], n: int) -> NDArray[np.float64]:
    """``n + 1`` equally spaced nodes covering the closed interval."""

    x0, x1 = interval
    return np.linspace(x0, x1, n + 1)


def _parse_field(label: str, text: str) -> Expression:
    try:
        return parse(text)
    except ExpressionError as exc:
        raise ProblemError(f"{label}: {exc}") from exc


def load_problem(
    source: Path | str | Mapping[str, Any],
    settings: Settings | None = None,
) -> Problem:
    """Read a problem document from a JSON file or an already decoded mapping.

    Tolerance fields inside the document override ``settings``; command-line
    overrides are applied afterwards by the caller.
    """

    label: str | None = None
    if isinstance(source, Mapping):
        raw: Any = source
    else:
        path = Path(source)
        label = str(path)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ProblemError(f"{path}: invalid JSON ({exc})") from exc

    try:
        document = ProblemDocument.model_validate(raw)
    except ValidationError as exc:
        raise ProblemError(str(exc)) from exc

    base = settings if settings is not None else load_settings()
    try:
        effective = base.merged(**document.settings.model_dump())
    except ValidationError as exc:
        raise ProblemError(str(exc)) from exc

    overrides: CoefficientOverrides | None = None
    integrand: Expression | None = None
    candidate: Expression | None = None
    if document.overrides is not None:
        assert document.overrides.p is not None and document.overrides.q is not None
        overrides = CoefficientOverrides(
            p=_parse_field("overrides.P", document.overrides.p),
            q=_parse_field("overrides.Q", document.overrides.q),
            r=(
                _parse_field("overrides.R", document.overrides.r)
                if document.overrides.r is not None
                else None
            ),
        )
    else:
        assert document.integrand is not None and document.candidate is not None
        integrand = _parse_field("integrand", document.integrand)
        candidate = _parse_field("candidate", document.candidate)

    problem = Problem(
        interval=document.interval,
        settings=effective,
        integrand=integrand,
        candidate=candidate,
        overrides=overrides,
        source=label,
    )
    logger.debug("Loaded %s problem from %s", problem.mode, label or "mapping")
    return problem


def _require_integrand(problem: Problem) -> tuple[Expression, Expression]:
    if problem.integrand is None or problem.candidate is None:
        raise ProblemError("operation needs an integrand and a candidate")
    return problem.integrand, problem.candidate


def along(expression: Expression, y: Expression) -> Expression:
    """Compose ``expression(yp, y, x)`` with the curve ``y(x)``."""

    slope = differentiate(y, "x")
    return substitute(substitute(expression, "yp", slope), "y", y)


def objective(problem: Problem, y: Expression, n: int | None = None) -> float:
    """``F[y]`` by composite Simpson quadrature."""

    integrand, _ = _require_integrand(problem)
    n = n if n is not None else problem.settings.grid
    if n < 2 or n % 2:
        raise ValueError(f"Simpson quadrature needs an even number of subintervals, got {n}")
    grid = uniform_grid(problem.interval, n)
    values = compile_expression(along(integrand, y))(grid)
    return float(simpson(values, x=grid))


@dataclass(frozen=True, slots=True, eq=False)
class EulerResidual:
    grid: NDArray[np.float64]
    samples: NDArray[np.float64]
    max_abs: float
    fp_scale: float

    def threshold(self, euler_tol: float) -> float:
        return euler_tol * (1.0 + self.fp_scale)


def euler_residual(problem: Problem, n: int | None = None) -> EulerResidual:
    """Sample ``d/dx f_p - f_y`` along the candidate."""

    integrand, candidate = _require_integrand(problem)
    n = n if n is not None else problem.settings.grid
    grid = uniform_grid(problem.interval, n)

    f_p = along(differentiate(integrand, "yp"), candidate)
    f_y = along(differentiate(integrand, "y"), candidate)
    residual = sub(differentiate(f_p, "x"), f_y)

    samples = compile_expression(residual)(grid)
    scale = float(np.max(np.abs(compile_expression(f_p)(grid))))
    result = EulerResidual(
        grid=grid,
        samples=samples,
        max_abs=float(np.max(np.abs(samples))),
        fp_scale=scale,
    )
    logger.debug("Euler residual max=%.3e (f_p scale %.3e)", result.max_abs, scale)
    return result


@dataclass(frozen=True, slots=True, eq=False)
class CoefficientSet:
    """``P``, ``R``, ``Q`` and ``Q_eff = Q - R'`` as expressions, functions and samples."""

    interval: tuple[float, float]
    grid: NDArray[np.float64]
    p_expr: Expression
    r_expr: Expression
    q_raw_expr: Expression
    q_eff_expr: Expression
    p: ScalarFunction
    r: ScalarFunction
    q_raw: ScalarFunction
    q_eff: ScalarFunction
    p_samples: NDArray[np.float64]
    r_samples: NDArray[np.float64]
    q_raw_samples: NDArray[np.float64]
    q_eff_samples: NDArray[np.float64]

    @property
    def min_p(self) -> float:
        return float(np.min(self.p_samples))

    @property
    def argmin_p(self) -> float:
        return float(self.grid[int(np.argmin(self.p_samples))])


def coefficients(problem: Problem, n: int | None = None) -> CoefficientSet:
    """Second partials of the integrand along the candidate, or the overrides."""

    if problem.overrides is not None:
        p_expr = problem.overrides.p
        q_raw_expr = problem.overrides.q
        r_expr = problem.overrides.r if problem.overrides.r is not None else ZERO
    else:
        integrand, candidate = _require_integrand(problem)
        f_p = differentiate(integrand, "yp")
        p_expr = along(differentiate(f_p, "yp"), candidate)
        r_expr = along(differentiate(f_p, "y"), candidate)
        q_raw_expr = along(differentiate(differentiate(integrand, "y"), "y"), candidate)

    q_eff_expr = sub(q_raw_expr, differentiate(r_expr, "x"))

    n = n if n is not None else problem.settings.grid
    grid = uniform_grid(problem.interval, n)
    p = compile_expression(p_expr)
    r = compile_expression(r_expr)
    q_raw = compile_expression(q_raw_expr)
    q_eff = compile_expression(q_eff_expr)
    coeffs = CoefficientSet(
        interval=problem.interval,
        grid=grid,
        p_expr=p_expr,
        r_expr=r_expr,
        q_raw_expr=q_raw_expr,
        q_eff_expr=q_eff_expr,
        p=p,
        r=r,
        q_raw=q_raw,
        q_eff=q_eff,
        p_samples=p(grid),
        r_samples=r(grid),
        q_raw_samples=q_raw(grid),
        q_eff_samples=q_eff(grid),
    )
    logger.debug("Coefficients: P=%s R=%s Q_eff=%s", p_expr, r_expr, q_eff_expr)
    return coeffs


@dataclass(frozen=True, slots=True, eq=False)
class HessianCheck:
    passed: bool
    witness: float | None
    determinant: NDArray[np.float64]


def pointwise_hessian_check(coeffs: CoefficientSet) -> HessianCheck:
    """Strict positivity of ``P`` and ``P Q - R^2`` on every grid node."""

    determinant = coeffs.p_samples * coeffs.q_raw_samples - coeffs.r_samples**2
    failing = np.flatnonzero((coeffs.p_samples <= 0) | (determinant <= 0))
    witness = float(coeffs.grid[failing[0]]) if failing.size else None
    return HessianCheck(passed=witness is None, witness=witness, determinant=determinant)


def hyperdual_discrepancy(
    problem: Problem, coeffs: CoefficientSet, n: int = HYPERDUAL_SAMPLES
) -> float:
    """Largest relative gap between the symbolic ``P, R, Q_raw`` and hyper-dual second partials.

    Only meaningful in integrand mode; the partials are taken at
    ``(y*'(x), y*(x), x)`` on ``n + 1`` nodes.
    """

    integrand, candidate = _require_integrand(problem)
    grid = uniform_grid(problem.interval, n)
    y = compile_expression(candidate)(grid)
    slope = compile_expression(differentiate(candidate, "x"))(grid)
    symbolic = np.stack([coeffs.p(grid), coeffs.r(grid), coeffs.q_raw(grid)], axis=1)

    worst = 0.0
    for x, y_x, p_x, expected in zip(grid, y, slope, symbolic, strict=True):
        dual = np.asarray(hessian_pq(integrand, float(p_x), float(y_x), float(x)))
        gap = np.abs(dual - expected) / np.maximum(1.0, np.abs(expected))
        worst = max(worst, float(np.max(gap)))
    logger.debug("Symbolic vs hyper-dual second partials: max relative gap %.3e", worst)
    return worst


def perturbed(candidate: Expression, eps: float, h: Expression) -> Expression:
    """The curve ``candidate + eps * h``."""

    return add(candidate, mul(Const(float(eps)), h))


__all__ = [
    "CoefficientSet",
    "EulerResidual",
    "HessianCheck",
    "along",
    "coefficients",
    "euler_residual",
    "hyperdual_discrepancy",
    "load_problem",
    "objective",
    "perturbed",
    "pointwise_hessian_check",
    "uniform_grid",
]
