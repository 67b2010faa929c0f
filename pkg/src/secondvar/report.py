from __future__ import annotations

import csv
import io
from collections.abc import Sequence

import numpy as np
from numpy.typing import ArrayLike

from .models import Report, VerdictKind


def _verdict_record(report: Report) -> dict[str, object]:
    verdict = report.verdict
    record: dict[str, object] = {"kind": str(verdict.kind)}
    match verdict.kind:
        case VerdictKind.CONJUGATE_POINT | VerdictKind.BORDERLINE:
            record["location"] = verdict.location
        case VerdictKind.LEGENDRE_FAILS:
            record["witness"] = verdict.witness
            record["min_P"] = verdict.min_p
        case VerdictKind.EULER_FAILS:
            record["max_residual"] = verdict.residual
        case _:
            pass
    return record


def build_json_record(report: Report) -> dict[str, object]:
    """Return a JSON-serializable dictionary with stable field names."""

    diagnostics = report.diagnostics
    record: dict[str, object] = {
        "verdict": _verdict_record(report),
        "diagnostics": {
            "euler_residual_max": diagnostics.euler_residual_max,
            "euler_threshold": diagnostics.euler_threshold,
            "min_P": diagnostics.min_p,
            "first_zero": diagnostics.first_zero,
            "gamma_estimate": diagnostics.gamma_estimate,
            "certified_gamma": diagnostics.certified_gamma,
            "riccati_bounded": diagnostics.riccati_bounded,
            "riccati_residual": diagnostics.riccati_residual,
            "pointwise_hessian": diagnostics.pointwise_hessian,
            "hyperdual_discrepancy": diagnostics.hyperdual_discrepancy,
            "perturbation_consistent": diagnostics.perturbation_consistent,
            "notes": list(diagnostics.notes),
        },
        "provenance": {
            "tool_version": report.provenance.tool_version,
            "mode": report.provenance.mode,
            "interval": list(report.provenance.interval),
            "settings": report.provenance.settings,
        },
    }
    if report.perturbation is not None:
        record["perturbation"] = {
            "all_positive": report.perturbation.all_positive,
            "consistent": report.perturbation.consistent,
            "rows": [
                {"eps": row.eps, "h": row.label, "difference": row.difference}
                for row in report.perturbation.rows
            ],
        }
    return record


def _format_optional(value: float | None) -> str:
    return "n/a" if value is None else f"{value:.6g}"


def render_report(report: Report) -> str:
    verdict = report.verdict
    diagnostics = report.diagnostics
    headline = f"Verdict: {verdict.kind}"
    if verdict.location is not None:
        headline += f" at x = {verdict.location:.12g}"
    if verdict.witness is not None:
        headline += f" (P = {_format_optional(verdict.min_p)} at x = {verdict.witness:.6g})"
    if verdict.residual is not None:
        headline += f" (max residual {verdict.residual:.3e})"

    lines = [
        headline,
        "",
        "## Diagnostics",
        f"Euler residual: {_format_optional(diagnostics.euler_residual_max)}"
        f" (threshold {_format_optional(diagnostics.euler_threshold)})",
        f"min P: {_format_optional(diagnostics.min_p)}",
        f"First Jacobi zero: {_format_optional(diagnostics.first_zero)}",
    ]
    if diagnostics.gamma_estimate is not None or diagnostics.riccati_bounded is not None:
        lines.extend(
            [
                f"Coercivity estimate: {_format_optional(diagnostics.gamma_estimate)}",
                f"Certified lower bound: {_format_optional(diagnostics.certified_gamma)}",
                f"Riccati bounded: {diagnostics.riccati_bounded}"
                f" (residual {_format_optional(diagnostics.riccati_residual)})",
                f"Pointwise Hessian positive: {diagnostics.pointwise_hessian}",
                f"Symbolic vs hyper-dual partials: {_format_optional(diagnostics.hyperdual_discrepancy)}",
            ]
        )
    if diagnostics.perturbation_consistent is not None:
        lines.append(f"Perturbation probe consistent: {diagnostics.perturbation_consistent}")

    if diagnostics.notes:
        lines.append("")
        lines.append("## Notes")
        lines.extend(f"- {note}" for note in diagnostics.notes)

    lines.append("")
    lines.append(
        f"secondvar {report.provenance.tool_version}, {report.provenance.mode} mode"
    )
    return "\n".join(lines)


def render_csv(header: Sequence[str], columns: Sequence[ArrayLike]) -> str:
    """Render equally long sample columns as CSV with round-trip exact floats."""

    arrays = [np.asarray(column, dtype=float) for column in columns]
    if len(arrays) != len(header):
        raise ValueError("one column per header field is required")
    if len({array.shape for array in arrays}) > 1:
        raise ValueError("CSV columns must share one length")

    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in zip(*arrays, strict=True):
        writer.writerow(["%.17g" % value for value in row])
    return buffer.getvalue()


__all__ = ["build_json_record", "render_csv", "render_report"]
