from __future__ import annotations

import asyncio
import logging
from collections.abc import Sequence

from .models import (
    PerturbationProbe,
    PerturbationRow,
    Problem,
    ProblemError,
    Report,
    Verdict,
    VerdictKind,
)
from .quadform import TestFunction, standard_battery
from .variational import objective, perturbed
from .workflow import VerificationWorkflow

logger = logging.getLogger(__name__)

PROBE_EPS_LIMIT = 1e-2


async def acheck_problem(problem: Problem, *, cross_check: bool = False) -> Report:
    """Run the verification workflow and, with ``cross_check``, the perturbation probe."""

    workflow = VerificationWorkflow()
    handler = workflow.run(problem=problem, cross_check=cross_check)
    report: Report = await handler

    if (
        cross_check
        and not problem.coefficient_mode
        and report.verdict.kind is not VerdictKind.EULER_FAILS
    ):
        probe = await asyncio.to_thread(perturbation_probe, problem, report.verdict)
        report.perturbation = probe
        report.diagnostics.perturbation_consistent = probe.consistent
        if not probe.consistent:
            report.diagnostics.notes.append(
                "perturbation probe found F(y* + eps h) <= F(y*) despite a positive verdict"
            )

    logger.info("Verdict: %s", report.verdict.kind)
    return report


def check_problem(problem: Problem, *, cross_check: bool = False) -> Report:
    return asyncio.run(acheck_problem(problem, cross_check=cross_check))


def perturbation_probe(
    problem: Problem,
    verdict: Verdict,
    eps_values: Sequence[float] | None = None,
    battery: Sequence[TestFunction] | None = None,
) -> PerturbationProbe:
    """Tabulate ``F(y* + eps h) - F(y*)`` over a battery of test functions.

    A strict-minimizer verdict is consistent when every difference with
    ``0 < eps <= 1e-2`` is positive.
    """

    if problem.candidate is None or problem.integrand is None:
        raise ProblemError("perturbation probe needs an integrand and a candidate")
    settings = problem.settings
    eps_values = list(eps_values) if eps_values is not None else list(settings.perturbation_eps)
    if battery is None:
        battery = standard_battery(problem.interval, settings.grid)

    base = objective(problem, problem.candidate)
    rows: list[PerturbationRow] = []
    for h in battery:
        for eps in eps_values:
            value = objective(problem, perturbed(problem.candidate, eps, h.expression))
            rows.append(PerturbationRow(eps=float(eps), label=h.label, difference=value - base))

    probed = [row for row in rows if 0 < row.eps <= PROBE_EPS_LIMIT]
    all_positive = all(row.difference > 0 for row in probed)
    consistent = verdict.kind is not VerdictKind.STRICT_LOCAL_MINIMIZER or all_positive
    logger.debug(
        "Perturbation probe: %d rows, all_positive=%s consistent=%s",
        len(rows),
        all_positive,
        consistent,
    )
    return PerturbationProbe(rows=rows, all_positive=all_positive, consistent=consistent)


__all__ = ["acheck_problem", "check_problem", "perturbation_probe"]
