from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import StrEnum

from pydantic import BaseModel, ConfigDict, Field, model_validator

from .config import Settings
from .expr import Expression, free_variables

INTEGRAND_VARIABLES = frozenset({"yp", "y", "x"})


class ProblemError(ValueError):
    """Problem document is malformed or inconsistent."""


class OverridesDocument(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    p: str | None = Field(default=None, alias="P", min_length=1)
    q: str | None = Field(default=None, alias="Q", min_length=1)
    r: str | None = Field(default=None, alias="R", min_length=1)


class ProblemSettingsDocument(BaseModel):
    model_config = ConfigDict(extra="forbid")

    grid: int | None = None
    euler_tol: float | None = None
    zero_tol: float | None = None
    blowup_cap: float | None = None


class ProblemDocument(BaseModel):
    """Schema of a problem file."""

    model_config = ConfigDict(extra="forbid")

    integrand: str | None = Field(default=None, min_length=1)
    candidate: str | None = Field(default=None, min_length=1)
    interval: tuple[float, float] = (0.0, 1.0)
    overrides: OverridesDocument | None = None
    settings: ProblemSettingsDocument = Field(default_factory=ProblemSettingsDocument)

    @model_validator(mode="after")
    def _check_mode(self) -> ProblemDocument:
        x0, x1 = self.interval
        if not (math.isfinite(x0) and math.isfinite(x1)):
            raise ValueError("interval endpoints must be finite")
        if x0 >= x1:
            raise ValueError(f"interval must satisfy x0 < x1, got [{x0}, {x1}]")

        integrand_mode = self.integrand is not None or self.candidate is not None
        if self.overrides is not None:
            if integrand_mode:
                raise ValueError(
                    "ambiguous mode: give either integrand+candidate or overrides, not both"
                )
            if self.overrides.p is None or self.overrides.q is None:
                raise ValueError("coefficient overrides need at least P and Q")
        elif self.integrand is None or self.candidate is None:
            raise ValueError("integrand mode needs both integrand and candidate")
        return self


@dataclass(slots=True)
class CoefficientOverrides:
    p: Expression
    q: Expression
    r: Expression | None = None


@dataclass(slots=True)
class Problem:
    interval: tuple[float, float]
    settings: Settings
    integrand: Expression | None = None
    candidate: Expression | None = None
    overrides: CoefficientOverrides | None = None
    source: str | None = None

    def __post_init__(self) -> None:
        x0, x1 = self.interval
        if not (math.isfinite(x0) and math.isfinite(x1)) or x0 >= x1:
            raise ProblemError(f"degenerate interval [{x0}, {x1}]")

        if self.overrides is not None:
            if self.integrand is not None or self.candidate is not None:
                raise ProblemError("ambiguous mode: integrand and overrides both given")
            for name, expression in (
                ("P", self.overrides.p),
                ("Q", self.overrides.q),
                ("R", self.overrides.r),
            ):
                if expression is not None:
                    _require_variables(f"overrides.{name}", expression, {"x"})
            return

        if self.integrand is None or self.candidate is None:
            raise ProblemError("integrand mode needs both integrand and candidate")
        _require_variables("integrand", self.integrand, INTEGRAND_VARIABLES)
        _require_variables("candidate", self.candidate, {"x"})

    @property
    def coefficient_mode(self) -> bool:
        return self.overrides is not None

    @property
    def mode(self) -> str:
        return "coefficients" if self.coefficient_mode else "integrand"


def _require_variables(label: str, expression: Expression, allowed: set[str] | frozenset[str]) -> None:
    extra = free_variables(expression) - allowed
    if extra:
        names = ", ".join(sorted(extra))
        raise ProblemError(f"{label} uses unsupported variables: {names}")


class VerdictKind(StrEnum):
    STRICT_LOCAL_MINIMIZER = "StrictLocalMinimizer"
    CONJUGATE_POINT = "ConjugatePoint"
    LEGENDRE_FAILS = "LegendreFails"
    EULER_FAILS = "EulerFails"
    BORDERLINE = "Borderline"


_EXIT_CODES = {
    VerdictKind.STRICT_LOCAL_MINIMIZER: 0,
    VerdictKind.CONJUGATE_POINT: 3,
    VerdictKind.LEGENDRE_FAILS: 3,
    VerdictKind.EULER_FAILS: 3,
    VerdictKind.BORDERLINE: 4,
}


@dataclass(slots=True)
class Verdict:
    kind: VerdictKind
    location: float | None = None
    witness: float | None = None
    min_p: float | None = None
    residual: float | None = None

    @property
    def exit_code(self) -> int:
        return _EXIT_CODES[self.kind]


@dataclass(slots=True)
class PerturbationRow:
    eps: float
    label: str
    difference: float


@dataclass(slots=True)
class PerturbationProbe:
    rows: list[PerturbationRow]
    all_positive: bool
    consistent: bool


@dataclass(slots=True)
class Diagnostics:
    euler_residual_max: float | None = None
    euler_threshold: float | None = None
    min_p: float | None = None
    first_zero: float | None = None
    gamma_estimate: float | None = None
    gamma_trend: list[float] = field(default_factory=list)
    certified_gamma: float | None = None
    riccati_bounded: bool | None = None
    riccati_residual: float | None = None
    pointwise_hessian: bool | None = None
    hyperdual_discrepancy: float | None = None
    perturbation_consistent: bool | None = None
    notes: list[str] = field(default_factory=list)


@dataclass(slots=True)
class Provenance:
    tool_version: str
    mode: str
    interval: tuple[float, float]
    settings: dict[str, object]


@dataclass(slots=True)
class Report:
    verdict: Verdict
    diagnostics: Diagnostics
    provenance: Provenance
    perturbation: PerturbationProbe | None = None

    @property
    def exit_code(self) -> int:
        return self.verdict.exit_code


__all__ = [
    "CoefficientOverrides",
    "Diagnostics",
    "OverridesDocument",
    "PerturbationProbe",
    "PerturbationRow",
    "Problem",
    "ProblemDocument",
    "ProblemError",
    "ProblemSettingsDocument",
    "Provenance",
    "Report",
    "Verdict",
    "VerdictKind",
]
