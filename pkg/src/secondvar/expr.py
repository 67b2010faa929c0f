"""Scalar expression trees: parsing, evaluation, symbolic derivatives.

Grammar, loosest to tightest binding::

    expression := term (("+" | "-") term)*
    term       := unary (("*" | "/") unary)*
    unary      := ("-" | "+") unary | power
    power      := atom ("^" unary)?          # right-associative
    atom       := NUMBER | NAME | NAME "(" expression ")" | "(" expression ")"

``pi`` and ``e`` are constants. Integrands use the reserved variables
``yp`` (y'), ``y`` and ``x``.
"""

from __future__ import annotations

import logging
import math
import re
from collections.abc import Callable, Mapping
from dataclasses import dataclass
from typing import Any

import numpy as np
from numpy.typing import ArrayLike, NDArray

logger = logging.getLogger(__name__)

# ``sign`` is what ``abs`` differentiates into; it is accepted on input so
# that rendered derivatives parse back.
FUNCTIONS: frozenset[str] = frozenset(
    {
        "sin",
        "cos",
        "tan",
        "exp",
        "log",
        "sqrt",
        "sinh",
        "cosh",
        "tanh",
        "atan",
        "abs",
        "sign",
    }
)
CONSTANTS: dict[str, float] = {"pi": math.pi, "e": math.e}
BINARY_OPERATORS = frozenset("+-*/^")

ScalarFunction = Callable[[ArrayLike], NDArray[np.float64]]


class ExpressionError(ValueError):
    """Base class for every expression failure."""


class ExpressionSyntaxError(ExpressionError):
    def __init__(self, message: str, offset: int) -> None:
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class UnknownFunctionError(ExpressionSyntaxError):
    def __init__(self, name: str, offset: int) -> None:
        super().__init__(f"unknown function {name!r}", offset)
        self.name = name


class UnboundVariableError(ExpressionError):
    def __init__(self, name: str) -> None:
        super().__init__(f"variable {name!r} is not bound")
        self.name = name


class DomainError(ExpressionError):
    def __init__(self, message: str, subexpression: str) -> None:
        super().__init__(f"{message} in {subexpression!r}")
        self.subexpression = subexpression


class Expression:
    """Immutable node of an expression tree."""

    __slots__ = ()

    def __str__(self) -> str:
        return to_text(self)


@dataclass(frozen=True, slots=True)
class Const(Expression):
    value: float


@dataclass(frozen=True, slots=True)
class Var(Expression):
    name: str

    def __post_init__(self) -> None:
        if not self.name:
            raise ExpressionError("variable name must be nonempty")


@dataclass(frozen=True, slots=True)
class Neg(Expression):
    operand: Expression


@dataclass(frozen=True, slots=True)
class BinOp(Expression):
    op: str
    left: Expression
    right: Expression

    def __post_init__(self) -> None:
        if self.op not in BINARY_OPERATORS:
            raise ExpressionError(f"unsupported operator {self.op!r}")


@dataclass(frozen=True, slots=True)
class Call(Expression):
    func: str
    arg: Expression

    def __post_init__(self) -> None:
        if self.func not in FUNCTIONS:
            raise ExpressionError(f"unsupported function {self.func!r}")


ZERO = Const(0.0)
ONE = Const(1.0)


# --------------------------------------------------------------------------
# Parsing

_TOKEN_PATTERN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^()])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True, slots=True)
class _Token:
    kind: str
    text: str
    offset: int


def _tokenize(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    position = 0
    byte_offset = 0
    while position < len(text):
        match = _TOKEN_PATTERN.match(text, position)
        if match is None:
            raise ExpressionSyntaxError(
                f"unexpected character {text[position]!r}", byte_offset
            )
        kind = match.lastgroup or ""
        lexeme = match.group()
        if kind != "ws":
            tokens.append(_Token(kind=kind, text=lexeme, offset=byte_offset))
        position = match.end()
        byte_offset += len(lexeme.encode("utf-8"))
    tokens.append(_Token(kind="end", text="", offset=byte_offset))
    return tokens


class _Parser:
    def __init__(self, text: str) -> None:
        self._tokens = _tokenize(text)
        self._index = 0

    def _peek(self) -> _Token:
        return self._tokens[self._index]

    def _advance(self) -> _Token:
        token = self._tokens[self._index]
        self._index += 1
        return token

    def _fail(self, token: _Token) -> ExpressionSyntaxError:
        if token.kind == "end":
            return ExpressionSyntaxError("unexpected end of input", token.offset)
        return ExpressionSyntaxError(f"unexpected token {token.text!r}", token.offset)

    def _expect(self, text: str) -> None:
        token = self._advance()
        if token.text != text or token.kind != "op":
            raise self._fail(token)

    def parse(self) -> Expression:
        if self._peek().kind == "end":
            raise ExpressionSyntaxError("empty expression", 0)
        result = self._expression()
        trailing = self._peek()
        if trailing.kind != "end":
            raise self._fail(trailing)
        return result

    def _expression(self) -> Expression:
        left = self._term()
        while self._peek().kind == "op" and self._peek().text in ("+", "-"):
            op = self._advance().text
            left = BinOp(op, left, self._term())
        return left

    def _term(self) -> Expression:
        left = self._unary()
        while self._peek().kind == "op" and self._peek().text in ("*", "/"):
            op = self._advance().text
            left = BinOp(op, left, self._unary())
        return left

    def _unary(self) -> Expression:
        token = self._peek()
        if token.kind == "op" and token.text == "-":
            self._advance()
            return Neg(self._unary())
        if token.kind == "op" and token.text == "+":
            self._advance()
            return self._unary()
        return self._power()

    def _power(self) -> Expression:
        base = self._atom()
        token = self._peek()
        if token.kind == "op" and token.text == "^":
            self._advance()
            return BinOp("^", base, self._unary())
        return base

    def _atom(self) -> Expression:
        token = self._advance()
        if token.kind == "number":
            return Const(float(token.text))
        if token.kind == "name":
            following = self._peek()
            if following.kind == "op" and following.text == "(":
                if token.text not in FUNCTIONS:
                    raise UnknownFunctionError(token.text, token.offset)
                self._advance()
                argument = self._expression()
                self._expect(")")
                return Call(token.text, argument)
            if token.text in FUNCTIONS:
                raise ExpressionSyntaxError(
                    f"function {token.text!r} requires an argument", token.offset
                )
            if token.text in CONSTANTS:
                return Const(CONSTANTS[token.text])
            return Var(token.text)
        if token.kind == "op" and token.text == "(":
            inner = self._expression()
            self._expect(")")
            return inner
        raise self._fail(token)


def parse(text: str) -> Expression:
    """Parse infix text into an expression tree."""

    return _Parser(text).parse()


# --------------------------------------------------------------------------
# Rendering

_PRECEDENCE = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}
_NEG_PRECEDENCE = 3
_ATOM_PRECEDENCE = 5


def _format_number(value: float) -> str:
    text = repr(float(value))
    return text[:-2] if text.endswith(".0") else text


def _precedence(e: Expression) -> int:
    match e:
        case BinOp(op=op):
            return _PRECEDENCE[op]
        case Neg():
            return _NEG_PRECEDENCE
        case Const(value=value) if value < 0:
            return _NEG_PRECEDENCE
        case _:
            return _ATOM_PRECEDENCE


def to_text(e: Expression) -> str:
    """Render infix text that parses back to an equivalent tree."""

    match e:
        case Const(value=value):
            return _format_number(value)
        case Var(name=name):
            return name
        case Neg(operand=operand):
            inner = to_text(operand)
            if _precedence(operand) < _NEG_PRECEDENCE:
                inner = f"({inner})"
            return f"-{inner}"
        case Call(func=func, arg=arg):
            return f"{func}({to_text(arg)})"
        case BinOp(op=op, left=left, right=right):
            level = _PRECEDENCE[op]
            left_text = to_text(left)
            right_text = to_text(right)
            left_level = _precedence(left)
            right_level = _precedence(right)
            if left_level < level or (op == "^" and left_level == level):
                left_text = f"({left_text})"
            if op == "^":
                if right_level < level:
                    right_text = f"({right_text})"
            elif right_level < level or (op in "-/" and right_level == level):
                right_text = f"({right_text})"
            return f"{left_text} {op} {right_text}" if level == 1 else f"{left_text}{op}{right_text}"
    raise ExpressionError(f"unknown node {e!r}")


def free_variables(e: Expression) -> frozenset[str]:
    match e:
        case Var(name=name):
            return frozenset({name})
        case Neg(operand=operand):
            return free_variables(operand)
        case Call(arg=arg):
            return free_variables(arg)
        case BinOp(left=left, right=right):
            return free_variables(left) | free_variables(right)
        case _:
            return frozenset()


# --------------------------------------------------------------------------
# Evaluation

_NUMPY_FUNCTIONS: dict[str, Callable[[Any], Any]] = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "sinh": np.sinh,
    "cosh": np.cosh,
    "tanh": np.tanh,
    "atan": np.arctan,
    "abs": np.abs,
    "sign": np.sign,
}


def _checked(value: Any, node: Expression) -> Any:
    if not np.all(np.isfinite(value)):
        raise DomainError("non-finite value", to_text(node))
    return value


def _evaluate(e: Expression, env: Mapping[str, Any]) -> Any:
    match e:
        case Const(value=value):
            return np.float64(value)
        case Var(name=name):
            try:
                return env[name]
            except KeyError:
                raise UnboundVariableError(name) from None
        case Neg(operand=operand):
            return -_evaluate(operand, env)
        case Call(func=func, arg=arg):
            value = _evaluate(arg, env)
            if func == "log" and np.any(value <= 0):
                raise DomainError("log of nonpositive value", to_text(e))
            if func == "sqrt" and np.any(value < 0):
                raise DomainError("sqrt of negative value", to_text(e))
            if func == "sign" and np.any(value == 0):
                logger.warning(
                    "Derivative of abs evaluated at 0 in %s; using subderivative 0",
                    to_text(e),
                )
            with np.errstate(over="ignore", invalid="ignore"):
                result = _NUMPY_FUNCTIONS[func](value)
            return _checked(result, e)
        case BinOp(op=op, left=left, right=right):
            a = _evaluate(left, env)
            b = _evaluate(right, env)
            with np.errstate(over="ignore", invalid="ignore"):
                match op:
                    case "+":
                        result = a + b
                    case "-":
                        result = a - b
                    case "*":
                        result = a * b
                    case "/":
                        if np.any(b == 0):
                            raise DomainError("division by zero", to_text(e))
                        result = a / b
                    case _:
                        if np.any((a < 0) & (b != np.round(b))):
                            raise DomainError(
                                "negative base with non-integer exponent", to_text(e)
                            )
                        if np.any((a == 0) & (b < 0)):
                            raise DomainError("zero raised to a negative power", to_text(e))
                        result = np.power(a, b)
            return _checked(result, e)
    raise ExpressionError(f"unknown node {e!r}")


def evaluate(e: Expression, bindings: Mapping[str, float]) -> float:
    """Evaluate ``e`` with every free variable bound to a real."""

    env = {name: np.float64(value) for name, value in bindings.items()}
    return float(_evaluate(e, env))


def evaluate_array(
    e: Expression, bindings: Mapping[str, ArrayLike]
) -> NDArray[np.float64]:
    """Elementwise evaluation over broadcastable arrays."""

    env = {name: np.asarray(value, dtype=float) for name, value in bindings.items()}
    result = np.asarray(_evaluate(e, env), dtype=float)
    shape = np.broadcast_shapes(*(value.shape for value in env.values()), result.shape)
    return np.broadcast_to(result, shape).copy()


def compile_expression(e: Expression, var: str = "x") -> ScalarFunction:
    """Turn a one-variable expression into a vectorized numpy function."""

    variables = free_variables(e)
    unbound = variables - {var}
    if unbound:
        raise UnboundVariableError(min(unbound))

    if var not in variables:
        constant = evaluate(e, {})

        def constant_function(x: ArrayLike) -> NDArray[np.float64]:
            return np.full(np.shape(x), constant)

        return constant_function

    def function(x: ArrayLike) -> NDArray[np.float64]:
        return evaluate_array(e, {var: x})

    return function


# --------------------------------------------------------------------------
# Construction helpers with constant folding and 0/1 identities


def _const_value(e: Expression) -> float | None:
    return e.value if isinstance(e, Const) else None


def neg(a: Expression) -> Expression:
    value = _const_value(a)
    if value is not None:
        return Const(-value)
    if isinstance(a, Neg):
        return a.operand
    return Neg(a)


def add(a: Expression, b: Expression) -> Expression:
    va, vb = _const_value(a), _const_value(b)
    if va is not None and vb is not None:
        return Const(va + vb)
    if va == 0:
        return b
    if vb == 0:
        return a
    return BinOp("+", a, b)


def sub(a: Expression, b: Expression) -> Expression:
    va, vb = _const_value(a), _const_value(b)
    if va is not None and vb is not None:
        return Const(va - vb)
    if vb == 0:
        return a
    if va == 0:
        return neg(b)
    return BinOp("-", a, b)


def mul(a: Expression, b: Expression) -> Expression:
    va, vb = _const_value(a), _const_value(b)
    if va is not None and vb is not None:
        return Const(va * vb)
    if va == 0 or vb == 0:
        return ZERO
    if va == 1:
        return b
    if vb == 1:
        return a
    if va == -1:
        return neg(b)
    if vb == -1:
        return neg(a)
    return BinOp("*", a, b)


def div(a: Expression, b: Expression) -> Expression:
    va, vb = _const_value(a), _const_value(b)
    if va is not None and vb is not None and vb != 0:
        return Const(va / vb)
    if vb == 1:
        return a
    if va == 0 and vb != 0:
        return ZERO
    return BinOp("/", a, b)


def power(a: Expression, b: Expression) -> Expression:
    va, vb = _const_value(a), _const_value(b)
    if vb == 0:
        return ONE
    if vb == 1:
        return a
    if (
        va is not None
        and vb is not None
        and (va > 0 or (float(vb).is_integer() and va != 0))
    ):
        try:
            return Const(va**vb)
        except OverflowError:
            pass
    return BinOp("^", a, b)


def call(func: str, a: Expression) -> Expression:
    return Call(func, a)


# --------------------------------------------------------------------------
# Symbolic differentiation and substitution


def _function_derivative(func: str, u: Expression) -> Expression:
    match func:
        case "sin":
            return call("cos", u)
        case "cos":
            return neg(call("sin", u))
        case "tan":
            return div(ONE, power(call("cos", u), Const(2.0)))
        case "exp":
            return call("exp", u)
        case "log":
            return div(ONE, u)
        case "sqrt":
            return div(ONE, mul(Const(2.0), call("sqrt", u)))
        case "sinh":
            return call("cosh", u)
        case "cosh":
            return call("sinh", u)
        case "tanh":
            return sub(ONE, power(call("tanh", u), Const(2.0)))
        case "atan":
            return div(ONE, add(ONE, power(u, Const(2.0))))
        case "abs":
            logger.warning(
                "abs(%s) is not differentiable at 0; using d|t|/dt = sign(t)",
                to_text(u),
            )
            return call("sign", u)
        case "sign":
            return ZERO
    raise ExpressionError(f"no derivative rule for {func!r}")


def differentiate(e: Expression, var: str) -> Expression:
    """Exact symbolic derivative of ``e`` with respect to ``var``."""

    match e:
        case Const():
            return ZERO
        case Var(name=name):
            return ONE if name == var else ZERO
        case Neg(operand=operand):
            return neg(differentiate(operand, var))
        case Call(func=func, arg=arg):
            inner = differentiate(arg, var)
            if inner == ZERO:
                return ZERO
            return mul(_function_derivative(func, arg), inner)
        case BinOp(op=op, left=u, right=v):
            du = differentiate(u, var)
            dv = differentiate(v, var)
            match op:
                case "+":
                    return add(du, dv)
                case "-":
                    return sub(du, dv)
                case "*":
                    return add(mul(du, v), mul(u, dv))
                case "/":
                    numerator = sub(mul(du, v), mul(u, dv))
                    return div(numerator, power(v, Const(2.0)))
                case _:
                    if dv == ZERO:
                        if du == ZERO:
                            return ZERO
                        return mul(mul(v, power(u, sub(v, ONE))), du)
                    if du == ZERO:
                        return mul(mul(e, call("log", u)), dv)
                    return mul(
                        e, add(mul(dv, call("log", u)), div(mul(v, du), u))
                    )
    raise ExpressionError(f"unknown node {e!r}")


def substitute(e: Expression, var: str, replacement: Expression) -> Expression:
    """Replace every occurrence of ``var`` by ``replacement``."""

    match e:
        case Var(name=name) if name == var:
            return replacement
        case Neg(operand=operand):
            return Neg(substitute(operand, var, replacement))
        case Call(func=func, arg=arg):
            return Call(func, substitute(arg, var, replacement))
        case BinOp(op=op, left=left, right=right):
            return BinOp(
                op,
                substitute(left, var, replacement),
                substitute(right, var, replacement),
            )
        case _:
            return e


__all__ = [
    "BinOp",
    "Call",
    "Const",
    "DomainError",
    "Expression",
    "ExpressionError",
    "ExpressionSyntaxError",
    "FUNCTIONS",
    "Neg",
    "ONE",
    "ScalarFunction",
    "UnboundVariableError",
    "UnknownFunctionError",
    "Var",
    "ZERO",
    "add",
    "compile_expression",
    "differentiate",
    "div",
    "evaluate",
    "evaluate_array",
    "free_variables",
    "mul",
    "neg",
    "parse",
    "power",
    "sub",
    "substitute",
    "to_text",
]
