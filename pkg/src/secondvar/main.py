from __future__ import annotations

import argparse
import asyncio
import json
import logging
import sys
from pathlib import Path

from .config import load_settings
from .jacobi import (
    PositiveSolutionError,
    integrate_jacobi,
    positive_solution,
    scan_conjugate_points,
)
from .models import Problem
from .quadform import (
    CoercivityError,
    coercivity_trend,
    gamma_form,
    perfect_square_check,
    standard_battery,
)
from .report import build_json_record, render_csv, render_report
from .riccati import (
    RiccatiOutcome,
    coercivity_lower_bound,
    riccati_from_jacobi,
    riccati_function,
    scan_riccati,
)
from .variational import coefficients, load_problem, pointwise_hessian_check, uniform_grid
from .verdict import acheck_problem

logger = logging.getLogger(__name__)

COMMANDS = ("check", "jacobi", "riccati", "gamma", "scan", "hessian")
CSV_COMMANDS = frozenset({"jacobi", "riccati", "hessian"})
DEFAULT_FORMATS = {
    "check": "json",
    "jacobi": "csv",
    "riccati": "csv",
    "gamma": "json",
    "scan": "json",
    "hessian": "csv",
}


class UsageError(ValueError):
    """Flag combination that argparse cannot reject on its own."""


def _configure_logging(verbose: bool) -> None:
    level = logging.DEBUG if verbose else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s %(name)s - %(message)s")


def parse_args(argv: list[str]) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        prog="secondvar",
        description="Check second-order sufficient conditions for a variational problem",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    help_texts = {
        "check": "Run the Euler, Legendre and Jacobi gates and print a report",
        "jacobi": "Sample the Jacobi solution with u(x0)=0, u'(x0)=1",
        "riccati": "Sample a Riccati solution (constructed, or from --w0 values)",
        "gamma": "Evaluate the second variation on the test-function battery",
        "scan": "List every conjugate point on the interval",
        "hessian": "Sample the pointwise Hessian minors along the candidate",
    }
    for command in COMMANDS:
        sub = subparsers.add_parser(command, help=help_texts[command])
        sub.add_argument("problem", type=Path, help="Path to the JSON problem file")
        sub.add_argument("--grid", type=int, help="Uniform grid size (overrides setting)")
        sub.add_argument("--tol", type=float, help="Relative ODE tolerance (overrides setting)")
        sub.add_argument("--output", type=Path, help="Write the payload here instead of stdout")
        sub.add_argument(
            "--format",
            choices=("json", "csv", "text"),
            help="Payload format (default depends on the subcommand)",
        )
        sub.add_argument("--verbose", action="store_true", help="Enable debug logging")
        if command == "check":
            sub.add_argument(
                "--cross-check",
                action="store_true",
                help="Also run coercivity, Riccati, pointwise Hessian and perturbation checks",
            )
        if command == "riccati":
            sub.add_argument(
                "--w0",
                type=float,
                action="append",
                help="Initial value for a forward Riccati integration (repeat to scan)",
            )
            sub.add_argument(
                "--scan",
                action="store_true",
                help="Integrate from every initial value in the riccati_w0_scan setting",
            )
    return parser.parse_args(argv)


def _scanning(args: argparse.Namespace) -> bool:
    return args.command == "riccati" and (args.scan or len(args.w0 or ()) > 1)


def _resolve_format(args: argparse.Namespace) -> str:
    default = "json" if _scanning(args) else DEFAULT_FORMATS[args.command]
    fmt: str = args.format or default
    if fmt == "csv" and args.command not in CSV_COMMANDS:
        raise UsageError(f"--format csv is not available for {args.command}")
    if fmt == "text" and args.command != "check":
        raise UsageError("--format text is only available for check")
    if fmt == "csv" and _scanning(args):
        raise UsageError("--format csv takes a single --w0; use json for a scan")
    return fmt


def _load(args: argparse.Namespace) -> Problem:
    problem = load_problem(args.problem.expanduser(), load_settings())
    problem.settings = problem.settings.merged(grid=args.grid, ode_rtol=args.tol)
    return problem


def _emit(payload: str, output: Path | None) -> None:
    if not payload.endswith("\n"):
        payload += "\n"
    if output is None:
        sys.stdout.write(payload)
        return
    path = output.expanduser()
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(payload, encoding="utf-8")
    logger.info("Wrote %s", path)


def _dump(data: object) -> str:
    return json.dumps(data, indent=2, ensure_ascii=False)


async def _run_check(problem: Problem, args: argparse.Namespace, fmt: str) -> tuple[str, int]:
    report = await acheck_problem(problem, cross_check=args.cross_check)
    if fmt == "text":
        return render_report(report), report.exit_code
    return _dump(build_json_record(report)), report.exit_code


def _run_jacobi(problem: Problem, fmt: str) -> str:
    settings = problem.settings
    coeffs = coefficients(problem)
    solution = integrate_jacobi(coeffs.p, coeffs.q_eff, problem.interval, 0.0, 1.0, settings)
    grid = uniform_grid(problem.interval, settings.grid)
    u = solution.u(grid)
    v = solution.v(grid)
    if fmt == "csv":
        return render_csv(("x", "u", "v"), (grid, u, v))
    return _dump(
        {
            "zeros": [
                {"location": zero.location, "kind": str(zero.kind)} for zero in solution.zeros
            ],
            "x": grid.tolist(),
            "u": u.tolist(),
            "v": v.tolist(),
        }
    )


def _riccati_record(outcome: RiccatiOutcome) -> dict[str, object]:
    return {
        "status": str(outcome.status),
        "w0": outcome.w0,
        "location": outcome.location,
        "x": outcome.grid.tolist(),
        "w": outcome.w.tolist(),
    }


async def _run_riccati(problem: Problem, args: argparse.Namespace, fmt: str) -> str:
    settings = problem.settings
    coeffs = coefficients(problem)
    w0_values = args.w0 or (settings.riccati_w0_scan if args.scan else None)
    if w0_values:
        outcomes = await scan_riccati(
            coeffs.p, coeffs.q_eff, problem.interval, w0_values, settings
        )
    else:
        solution = positive_solution(coeffs.p, coeffs.q_eff, problem.interval, settings)
        outcomes = [riccati_from_jacobi(solution, settings.grid)]

    if fmt == "csv":
        outcome = outcomes[0]
        return render_csv(("x", "w"), (outcome.grid, outcome.w))
    if len(outcomes) == 1:
        return _dump(_riccati_record(outcomes[0]))
    return _dump([_riccati_record(outcome) for outcome in outcomes])


def _run_gamma(problem: Problem) -> str:
    settings = problem.settings
    coeffs = coefficients(problem)
    battery = standard_battery(problem.interval, settings.grid)

    w = None
    certified: float | None = None
    try:
        solution = positive_solution(coeffs.p, coeffs.q_eff, problem.interval, settings)
    except PositiveSolutionError as exc:
        logger.info("No positive Jacobi solution, perfect-square column omitted: %s", exc)
    else:
        w = riccati_function(solution)
        certified = coercivity_lower_bound(coeffs.p, w, problem.interval, settings.grid)

    forms: list[dict[str, object]] = []
    for h in battery:
        if w is None:
            lhs = gamma_form(coeffs.p, coeffs.q_eff, h)
            forms.append({"h": h.label, "lhs": lhs, "rhs": None, "gap": None})
            continue
        square = perfect_square_check(coeffs.p, coeffs.q_eff, w, h)
        forms.append({"h": h.label, "lhs": square.lhs, "rhs": square.rhs, "gap": square.gap})

    try:
        estimates = coercivity_trend(
            coeffs.p,
            coeffs.q_eff,
            problem.interval,
            settings.coercivity_n,
            tol=settings.eigen_tol,
            max_iter=settings.eigen_max_iter,
        )
    except CoercivityError as exc:
        logger.warning("Coercivity estimate unavailable: %s", exc)
        estimates = []
    trend = [
        {"n": estimate.n, "gamma": estimate.gamma, "converged": estimate.converged}
        for estimate in estimates
    ]

    return _dump(
        {
            "forms": forms,
            "gamma": estimates[0].gamma if estimates else None,
            "trend": trend,
            "certified_gamma": certified,
        }
    )


def _run_scan(problem: Problem) -> str:
    coeffs = coefficients(problem)
    points = scan_conjugate_points(coeffs.p, coeffs.q_eff, problem.interval, problem.settings)
    return _dump(points)


def _run_hessian(problem: Problem, fmt: str) -> str:
    coeffs = coefficients(problem)
    check = pointwise_hessian_check(coeffs)
    columns = (
        coeffs.grid,
        coeffs.p_samples,
        coeffs.r_samples,
        coeffs.q_raw_samples,
        check.determinant,
    )
    if fmt == "csv":
        return render_csv(("x", "P", "R", "Q_raw", "det"), columns)
    return _dump(
        {
            "passed": check.passed,
            "witness": check.witness,
            "x": coeffs.grid.tolist(),
            "P": coeffs.p_samples.tolist(),
            "R": coeffs.r_samples.tolist(),
            "Q_raw": coeffs.q_raw_samples.tolist(),
            "det": check.determinant.tolist(),
        }
    )


async def run_async(args: argparse.Namespace) -> int:
    fmt = _resolve_format(args)
    problem = _load(args)
    logger.info("Running %s on %s (%s mode)", args.command, args.problem, problem.mode)

    exit_code = 0
    match args.command:
        case "check":
            payload, exit_code = await _run_check(problem, args, fmt)
        case "jacobi":
            payload = await asyncio.to_thread(_run_jacobi, problem, fmt)
        case "riccati":
            payload = await _run_riccati(problem, args, fmt)
        case "gamma":
            payload = await asyncio.to_thread(_run_gamma, problem)
        case "scan":
            payload = await asyncio.to_thread(_run_scan, problem)
        case _:
            payload = await asyncio.to_thread(_run_hessian, problem, fmt)

    _emit(payload, args.output)
    return exit_code


def run(argv: list[str]) -> int:
    args = parse_args(argv)
    _configure_logging(args.verbose)
    try:
        return asyncio.run(run_async(args))
    except (ValueError, OSError) as exc:
        logger.error("%s", exc)
        print(f"secondvar: error: {exc}", file=sys.stderr)
        return 2
    except RuntimeError as exc:
        logger.error("Verification failed: %s", exc)
        print(f"secondvar: error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    raise SystemExit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()


__all__ = ["main", "parse_args", "run", "run_async"]
