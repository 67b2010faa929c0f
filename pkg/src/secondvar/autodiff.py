"""Hyper-dual numbers: exact first and mixed second derivatives.

A hyper-dual number ``a + b e1 + c e2 + d e1e2`` with ``e1^2 = e2^2 = 0``
carries a value, two directional first derivatives and the mixed second
derivative along the seeded directions.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Mapping
from dataclasses import dataclass

from .expr import (
    BinOp,
    Call,
    Const,
    DomainError,
    Expression,
    Neg,
    UnboundVariableError,
    Var,
    to_text,
)


@dataclass(frozen=True, slots=True)
class HyperDual:
    value: float
    d1: float = 0.0
    d2: float = 0.0
    d12: float = 0.0

    @classmethod
    def constant(cls, value: float) -> HyperDual:
        return cls(float(value))

    @property
    def is_constant(self) -> bool:
        return self.d1 == 0.0 and self.d2 == 0.0 and self.d12 == 0.0

    def __neg__(self) -> HyperDual:
        return HyperDual(-self.value, -self.d1, -self.d2, -self.d12)

    def __add__(self, other: HyperDual) -> HyperDual:
        return HyperDual(
            self.value + other.value,
            self.d1 + other.d1,
            self.d2 + other.d2,
            self.d12 + other.d12,
        )

    def __sub__(self, other: HyperDual) -> HyperDual:
        return self + (-other)

    def __mul__(self, other: HyperDual) -> HyperDual:
        return HyperDual(
            self.value * other.value,
            self.value * other.d1 + self.d1 * other.value,
            self.value * other.d2 + self.d2 * other.value,
            self.value * other.d12
            + self.d1 * other.d2
            + self.d2 * other.d1
            + self.d12 * other.value,
        )

    def __truediv__(self, other: HyperDual) -> HyperDual:
        if other.value == 0.0:
            raise ZeroDivisionError("hyper-dual division by zero real part")
        return self * other.reciprocal()

    def reciprocal(self) -> HyperDual:
        v = self.value
        return self.lift(1.0 / v, -1.0 / (v * v), 2.0 / (v * v * v))

    def lift(self, g: float, dg: float, d2g: float) -> HyperDual:
        """Apply a scalar function given its value and first two derivatives."""

        return HyperDual(
            g,
            dg * self.d1,
            dg * self.d2,
            dg * self.d12 + d2g * self.d1 * self.d2,
        )


# value, first and second derivative of each primitive at t
_PRIMITIVES: dict[str, Callable[[float], tuple[float, float, float]]] = {
    "sin": lambda t: (math.sin(t), math.cos(t), -math.sin(t)),
    "cos": lambda t: (math.cos(t), -math.sin(t), -math.cos(t)),
    "tan": lambda t: (
        math.tan(t),
        1.0 + math.tan(t) ** 2,
        2.0 * math.tan(t) * (1.0 + math.tan(t) ** 2),
    ),
    "exp": lambda t: (math.exp(t), math.exp(t), math.exp(t)),
    "log": lambda t: (math.log(t), 1.0 / t, -1.0 / (t * t)),
    "sqrt": lambda t: (
        math.sqrt(t),
        0.5 / math.sqrt(t),
        -0.25 / (t * math.sqrt(t)),
    ),
    "sinh": lambda t: (math.sinh(t), math.cosh(t), math.sinh(t)),
    "cosh": lambda t: (math.cosh(t), math.sinh(t), math.cosh(t)),
    "tanh": lambda t: (
        math.tanh(t),
        1.0 - math.tanh(t) ** 2,
        -2.0 * math.tanh(t) * (1.0 - math.tanh(t) ** 2),
    ),
    "atan": lambda t: (math.atan(t), 1.0 / (1.0 + t * t), -2.0 * t / (1.0 + t * t) ** 2),
    "abs": lambda t: (abs(t), math.copysign(1.0, t) if t != 0 else 0.0, 0.0),
    "sign": lambda t: ((t > 0) - (t < 0), 0.0, 0.0),
}


def _apply(func: str, a: HyperDual, node: Expression) -> HyperDual:
    t = a.value
    if func == "log" and t <= 0:
        raise DomainError("log of nonpositive value", to_text(node))
    if func == "sqrt" and (t < 0 or (t == 0 and not a.is_constant)):
        raise DomainError("sqrt outside its differentiable domain", to_text(node))
    try:
        g, dg, d2g = _PRIMITIVES[func](t)
    except (OverflowError, ValueError, ZeroDivisionError) as exc:
        raise DomainError(str(exc), to_text(node)) from exc
    return a.lift(float(g), dg, d2g)


def _power(a: HyperDual, b: HyperDual, node: Expression) -> HyperDual:
    if b.is_constant:
        c = b.value
        t = a.value
        if t < 0 and not c.is_integer():
            raise DomainError("negative base with non-integer exponent", to_text(node))
        if t == 0 and c < 0:
            raise DomainError("zero raised to a negative power", to_text(node))
        try:
            g = t**c
            dg = c * t ** (c - 1.0) if c != 0 else 0.0
            d2g = c * (c - 1.0) * t ** (c - 2.0) if c not in (0.0, 1.0) else 0.0
        except (OverflowError, ZeroDivisionError) as exc:
            raise DomainError(str(exc), to_text(node)) from exc
        return a.lift(g, dg, d2g)
    if a.value <= 0:
        raise DomainError("variable exponent needs a positive base", to_text(node))
    # a^b = exp(b log a)
    return _apply("exp", b * _apply("log", a, node), node)


def eval_hyperdual(e: Expression, bindings: Mapping[str, HyperDual]) -> HyperDual:
    """Evaluate ``e`` in hyper-dual arithmetic."""

    match e:
        case Const(value=value):
            return HyperDual.constant(value)
        case Var(name=name):
            try:
                return bindings[name]
            except KeyError:
                raise UnboundVariableError(name) from None
        case Neg(operand=operand):
            return -eval_hyperdual(operand, bindings)
        case Call(func=func, arg=arg):
            return _apply(func, eval_hyperdual(arg, bindings), e)
        case BinOp(op=op, left=left, right=right):
            a = eval_hyperdual(left, bindings)
            b = eval_hyperdual(right, bindings)
            match op:
                case "+":
                    return a + b
                case "-":
                    return a - b
                case "*":
                    return a * b
                case "/":
                    if b.value == 0.0:
                        raise DomainError("division by zero", to_text(e))
                    return a / b
                case _:
                    return _power(a, b, e)
    raise DomainError("unknown node", repr(e))


def hessian_pq(f: Expression, p: float, y: float, x: float) -> tuple[float, float, float]:
    """Second partials ``(f_pp, f_py, f_yy)`` of ``f(yp, y, x)`` at a point."""

    fixed_x = HyperDual.constant(x)
    f_pp = eval_hyperdual(
        f, {"yp": HyperDual(p, 1.0, 1.0), "y": HyperDual.constant(y), "x": fixed_x}
    ).d12
    f_py = eval_hyperdual(
        f, {"yp": HyperDual(p, 1.0, 0.0), "y": HyperDual(y, 0.0, 1.0), "x": fixed_x}
    ).d12
    f_yy = eval_hyperdual(
        f, {"yp": HyperDual.constant(p), "y": HyperDual(y, 1.0, 1.0), "x": fixed_x}
    ).d12
    return f_pp, f_py, f_yy


__all__ = ["HyperDual", "eval_hyperdual", "hessian_pq"]
