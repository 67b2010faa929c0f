from __future__ import annotations

from typing import Any, cast

from dynaconf import Dynaconf
from pydantic import BaseModel, ConfigDict, Field, field_validator

_dynaconf_settings = Dynaconf(
    envvar_prefix="SECONDVAR",
    settings_files=["settings.toml"],
    load_dotenv=True,
    environments=True,
)


SettingValue = int | float | str | list[float]


class Settings(BaseModel):
    """Numerical configuration shared by every verification stage."""

    grid: int = Field(
        default=2048,
        ge=16,
        description="Number of uniform subintervals used for sampling and Simpson quadrature.",
    )
    euler_tol: float = Field(
        default=1e-6,
        gt=0.0,
        description="Relative tolerance on the Euler residual, scaled by 1 + max |f_p|.",
    )
    zero_tol: float = Field(
        default=1e-9,
        gt=0.0,
        description="Band, relative to the Jacobi solution scale, inside which a zero is borderline.",
    )
    blowup_cap: float = Field(
        default=1e8,
        gt=0.0,
        description="Magnitude at which a Riccati trajectory is declared to blow up.",
    )
    ode_rtol: float = Field(
        default=1e-10,
        gt=0.0,
        description="Relative tolerance of the adaptive RK45 integrator.",
    )
    ode_atol: float = Field(
        default=1e-12,
        gt=0.0,
        description="Absolute tolerance of the adaptive RK45 integrator.",
    )
    coercivity_n: int = Field(
        default=1000,
        ge=16,
        description="Interior nodes of the finite-difference coercivity eigenproblem.",
    )
    eigen_tol: float = Field(
        default=1e-12,
        gt=0.0,
        description="Relative eigenvalue change that stops inverse iteration.",
    )
    eigen_max_iter: int = Field(
        default=5000,
        ge=1,
        description="Iteration cap for inverse iteration.",
    )
    perturbation_eps: list[float] = Field(
        default_factory=lambda: [1e-3, 1e-2],
        min_length=1,
        description="Perturbation sizes probed by F(y* + eps h) - F(y*).",
    )
    riccati_w0_scan: list[float] = Field(
        default_factory=lambda: [float(value) for value in range(-10, 11)],
        min_length=1,
        description="Initial values tried by the exploratory Riccati scan.",
    )

    model_config = ConfigDict(validate_assignment=True)

    @field_validator("grid")
    @classmethod
    def _require_even_grid(cls, value: int) -> int:
        if value % 2:
            raise ValueError("grid must be even for Simpson quadrature")
        return value

    def merged(self, **overrides: Any) -> Settings:
        """Return a validated copy with the non-None overrides applied."""

        update = {key: value for key, value in overrides.items() if value is not None}
        if not update:
            return self
        return Settings.model_validate({**self.model_dump(), **update})


def load_settings() -> Settings:
    raw: dict[str, SettingValue] = {}
    for field_name in Settings.model_fields:
        value = _dynaconf_settings.get(field_name, default=None)
        if value is not None:
            raw[field_name] = cast(SettingValue, value)
    return Settings.model_validate(raw)


__all__ = ["Settings", "load_settings", "_dynaconf_settings"]
