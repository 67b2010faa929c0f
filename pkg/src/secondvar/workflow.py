from __future__ import annotations

import asyncio
import logging
from typing import Any

import numpy as np
from llama_index.core.workflow import Event, StartEvent, StopEvent, Workflow, step
from pydantic import ConfigDict

from . import __version__
from .config import Settings
from .expr import ExpressionError, compile_expression
from .jacobi import C5Status, PositiveSolutionError, check_c5, positive_solution
from .models import Diagnostics, Problem, Provenance, Report, Verdict, VerdictKind
from .quadform import CoercivityError, coercivity_constant
from .riccati import (
    RESIDUAL_TOL,
    coercivity_lower_bound,
    riccati_function,
    scaled_riccati_residual,
)
from .variational import (
    CoefficientSet,
    coefficients,
    euler_residual,
    hyperdual_discrepancy,
    pointwise_hessian_check,
)

logger = logging.getLogger(__name__)

HYPERDUAL_TOL = 1e-8


class VerificationError(RuntimeError):
    """The Jacobi integration broke down for reasons other than a sign of ``P``."""


def build_report(problem: Problem, verdict: Verdict, diagnostics: Diagnostics) -> Report:
    return Report(
        verdict=verdict,
        diagnostics=diagnostics,
        provenance=Provenance(
            tool_version=__version__,
            mode=problem.mode,
            interval=problem.interval,
            settings=problem.settings.model_dump(),
        ),
    )


def _boundary_note(problem: Problem) -> str | None:
    if problem.candidate is None:
        return None
    ends = compile_expression(problem.candidate)(np.asarray(problem.interval))
    if np.any(np.abs(ends) > 0):
        return (
            "candidate has nonzero boundary values "
            f"({ends[0]:.6g}, {ends[1]:.6g}); the verdict is for the fixed-endpoint problem"
        )
    return None


class VerificationStartEvent(StartEvent):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    problem: Problem
    cross_check: bool = False


class StationaryEvent(Event):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    problem: Problem
    cross_check: bool = False
    diagnostics: Diagnostics


class CoefficientsEvent(Event):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    problem: Problem
    cross_check: bool = False
    diagnostics: Diagnostics
    # CoefficientSet
    coefficients: Any


class CrossCheckEvent(Event):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    problem: Problem
    diagnostics: Diagnostics
    verdict: Verdict
    # CoefficientSet
    coefficients: Any


class VerificationWorkflow(Workflow):
    """Euler, Legendre and Jacobi checks in order, stopping at the first failure."""

    def __init__(self) -> None:
        super().__init__(timeout=None)

    @step(num_workers=1)
    async def stationarity(self, event: VerificationStartEvent) -> StationaryEvent | StopEvent:
        problem = event.problem
        settings = problem.settings
        diagnostics = Diagnostics()
        logger.info(
            "Verify[stationarity]: mode=%s interval=%s grid=%d",
            problem.mode,
            problem.interval,
            settings.grid,
        )

        if problem.coefficient_mode:
            diagnostics.notes.append("coefficient overrides given; Euler check skipped")
        else:
            note = _boundary_note(problem)
            if note:
                diagnostics.notes.append(note)
            residual = await asyncio.to_thread(euler_residual, problem, settings.grid)
            threshold = residual.threshold(settings.euler_tol)
            diagnostics.euler_residual_max = residual.max_abs
            diagnostics.euler_threshold = threshold
            logger.info(
                "Verify[stationarity]: residual=%.3e threshold=%.3e",
                residual.max_abs,
                threshold,
            )
            if residual.max_abs > threshold:
                verdict = Verdict(VerdictKind.EULER_FAILS, residual=residual.max_abs)
                return StopEvent(result=build_report(problem, verdict, diagnostics))

        return StationaryEvent(
            problem=problem, cross_check=event.cross_check, diagnostics=diagnostics
        )

    @step(num_workers=1)
    async def legendre(self, event: StationaryEvent) -> CoefficientsEvent | StopEvent:
        problem = event.problem
        diagnostics = event.diagnostics
        coeffs = await asyncio.to_thread(coefficients, problem, problem.settings.grid)
        diagnostics.min_p = coeffs.min_p
        logger.info("Verify[legendre]: min P=%.6g at x=%.6g", coeffs.min_p, coeffs.argmin_p)

        if coeffs.min_p <= 0:
            verdict = Verdict(
                VerdictKind.LEGENDRE_FAILS, witness=coeffs.argmin_p, min_p=coeffs.min_p
            )
            return StopEvent(result=build_report(problem, verdict, diagnostics))

        return CoefficientsEvent(
            problem=problem,
            cross_check=event.cross_check,
            diagnostics=diagnostics,
            coefficients=coeffs,
        )

    @step(num_workers=1)
    async def jacobi(self, event: CoefficientsEvent) -> CrossCheckEvent | StopEvent:
        problem = event.problem
        diagnostics = event.diagnostics
        coeffs: CoefficientSet = event.coefficients
        outcome = await asyncio.to_thread(
            check_c5, coeffs.p, coeffs.q_eff, problem.interval, problem.settings
        )
        if outcome.solution is not None and outcome.solution.first_zero is not None:
            diagnostics.first_zero = outcome.solution.first_zero.location
        logger.info(
            "Verify[jacobi]: status=%s location=%s", outcome.status, outcome.location
        )

        match outcome.status:
            case C5Status.HOLDS:
                verdict = Verdict(VerdictKind.STRICT_LOCAL_MINIMIZER)
            case C5Status.CONJUGATE_POINT:
                verdict = Verdict(VerdictKind.CONJUGATE_POINT, location=outcome.location)
            case C5Status.BORDERLINE:
                verdict = Verdict(VerdictKind.BORDERLINE, location=outcome.location)
            case _:
                if outcome.location is None:
                    raise VerificationError(outcome.reason or "Jacobi integration failed")
                verdict = Verdict(
                    VerdictKind.LEGENDRE_FAILS,
                    witness=outcome.location,
                    min_p=diagnostics.min_p,
                )

        if not event.cross_check:
            return StopEvent(result=build_report(problem, verdict, diagnostics))
        return CrossCheckEvent(
            problem=problem,
            diagnostics=diagnostics,
            verdict=verdict,
            coefficients=coeffs,
        )

    @step(num_workers=1)
    async def cross_check(self, event: CrossCheckEvent) -> StopEvent:
        problem = event.problem
        settings = problem.settings
        diagnostics = event.diagnostics
        coeffs: CoefficientSet = event.coefficients
        logger.info("Verify[cross_check]: running coercivity, Riccati and pointwise checks")

        estimate, riccati, hessian, discrepancy = await asyncio.gather(
            asyncio.to_thread(_coercivity, coeffs, settings.coercivity_n, settings),
            asyncio.to_thread(_riccati_check, coeffs, settings),
            asyncio.to_thread(pointwise_hessian_check, coeffs),
            asyncio.to_thread(_hyperdual_check, problem, coeffs),
        )

        if estimate is None:
            diagnostics.notes.append("coercivity factorization failed")
        else:
            diagnostics.gamma_estimate = estimate
        bounded, residual, certified = riccati
        diagnostics.riccati_bounded = bounded
        diagnostics.riccati_residual = residual
        diagnostics.certified_gamma = certified
        if not bounded and residual is not None:
            diagnostics.notes.append(
                f"constructed Riccati solution misses the residual tolerance ({residual:.3e})"
            )
        diagnostics.pointwise_hessian = hessian.passed
        if not hessian.passed:
            diagnostics.notes.append(
                f"pointwise Hessian not positive definite at x={hessian.witness:.6g}"
            )
        diagnostics.hyperdual_discrepancy = discrepancy
        if discrepancy is not None and discrepancy > HYPERDUAL_TOL:
            diagnostics.notes.append(
                f"symbolic and hyper-dual second partials differ by {discrepancy:.3e}"
            )

        if _disagrees(event.verdict, diagnostics):
            diagnostics.notes.append("cross-checks disagree with the Jacobi verdict")
        logger.info(
            "Verify[cross_check]: gamma=%s riccati_bounded=%s pointwise=%s hyperdual=%s",
            diagnostics.gamma_estimate,
            bounded,
            hessian.passed,
            discrepancy,
        )
        return StopEvent(result=build_report(problem, event.verdict, diagnostics))


def _disagrees(verdict: Verdict, diagnostics: Diagnostics) -> bool:
    """Concordance of the Jacobi verdict with the coercivity sign and Riccati boundedness."""

    if verdict.kind not in (VerdictKind.STRICT_LOCAL_MINIMIZER, VerdictKind.CONJUGATE_POINT):
        return False
    holds = verdict.kind is VerdictKind.STRICT_LOCAL_MINIMIZER
    if diagnostics.gamma_estimate is not None and (diagnostics.gamma_estimate > 0) != holds:
        return True
    return bool(diagnostics.riccati_bounded) != holds


def _hyperdual_check(problem: Problem, coeffs: CoefficientSet) -> float | None:
    if problem.coefficient_mode:
        return None
    try:
        return hyperdual_discrepancy(problem, coeffs)
    except ExpressionError as exc:
        logger.warning("Hyper-dual partials unavailable: %s", exc)
        return None


def _coercivity(coeffs: CoefficientSet, n: int, settings: Settings) -> float | None:
    try:
        estimate = coercivity_constant(
            coeffs.p,
            coeffs.q_eff,
            coeffs.interval,
            n,
            tol=settings.eigen_tol,
            max_iter=settings.eigen_max_iter,
        )
    except CoercivityError as exc:
        logger.warning("Coercivity estimate unavailable: %s", exc)
        return None
    return estimate.gamma


def _riccati_check(
    coeffs: CoefficientSet, settings: Settings
) -> tuple[bool, float | None, float | None]:
    """Build ``w`` from a positive Jacobi solution; it counts only when its residual is small."""

    try:
        solution = positive_solution(coeffs.p, coeffs.q_eff, coeffs.interval, settings)
    except PositiveSolutionError as exc:
        logger.info("No bounded Riccati solution: %s", exc)
        return False, None, None
    w = riccati_function(solution)
    residual = scaled_riccati_residual(coeffs.p, coeffs.q_eff, w, coeffs.interval, settings.grid)
    if residual > RESIDUAL_TOL:
        logger.warning("Constructed Riccati solution has residual %.3e", residual)
        return False, residual, None
    certified = coercivity_lower_bound(coeffs.p, w, coeffs.interval, settings.grid)
    return True, residual, certified


__all__ = [
    "CoefficientsEvent",
    "CrossCheckEvent",
    "StationaryEvent",
    "VerificationError",
    "VerificationStartEvent",
    "VerificationWorkflow",
    "build_report",
]
