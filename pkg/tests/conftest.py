"""Shared fixtures for the secondvar test suite."""

from __future__ import annotations

from collections.abc import Callable

import numpy as np
import pytest

from secondvar.config import Settings

# unary building blocks that stay smooth and finite on [-2, 2]
_SMOOTH_UNARY = [
    "sin({})",
    "cos({})",
    "exp({}/3)",
    "atan({})",
    "tanh({})",
    "sqrt(1 + ({})^2)",
    "log(2 + sin({}))",
    "({})^2",
    "({})^3",
]
_BINARY = ["+", "-", "*"]


def _random_expression(rng: np.random.Generator, variables: list[str], depth: int = 3) -> str:
    if depth == 0 or rng.random() < 0.2:
        if rng.random() < 0.3:
            return repr(round(float(rng.uniform(-2.0, 2.0)), 3))
        return str(rng.choice(variables))
    if rng.random() < 0.5:
        template = _SMOOTH_UNARY[int(rng.integers(len(_SMOOTH_UNARY)))]
        return template.format(_random_expression(rng, variables, depth - 1))
    op = _BINARY[int(rng.integers(len(_BINARY)))]
    left = _random_expression(rng, variables, depth - 1)
    right = _random_expression(rng, variables, depth - 1)
    return f"({left}) {op} ({right})"


@pytest.fixture
def random_expression() -> Callable[..., str]:
    """Builder of random smooth expression text: ``random_expression(rng, variables, depth=3)``."""

    return _random_expression


@pytest.fixture
def settings() -> Settings:
    """Default numerical settings, independent of any settings.toml on disk."""

    return Settings()
