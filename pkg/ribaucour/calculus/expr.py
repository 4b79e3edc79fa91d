"""
Closed-form potential expressions with exact second-order derivatives.

Background:
    The transformations in this package are driven by scalar potentials on a
    box in parameter space. Their gradients and Hessians enter every
    construction, and the commuting-Hessian hypothesis of the flat-bundle
    construction must be tested without finite-difference noise. Potentials
    are therefore written in a tiny expression language and evaluated with
    forward-mode jets that carry value, gradient and Hessian together.

Grammar:
    expr   := term (('+' | '-') term)*
    term   := factor (('*' | '/') factor)*
    factor := atom ('^' exponent)?
    atom   := number | 'u' integer | func '(' expr ')' | 'pi'
              | '(' expr ')' | '-' atom
    exponent := ['-'] number
    func   := sin | cos | exp | log | sqrt

    Variables are 1-based (``u1`` .. ``un``). Note that unary minus binds
    tighter than ``^``: ``-u1^2`` is ``(-u1)^2``.

Known Limitations:
    - No simplification and no symbolic differentiation; jets are exact up to
      floating point rounding.
    - Integer exponents are expanded by repeated multiplication. Real
      exponents route through ``exp(k log x)`` and require a positive base.
    - Evaluation is vectorized over a batch of points; the whole batch fails
      on the first point outside the domain of definition.

Usage:
    >>> e = parse("u1*u2", n_vars=2)
    >>> jet = eval_jet2(e, (3.0, 4.0))
    >>> jet.value, jet.gradient, jet.hessian
"""

from __future__ import annotations

import itertools
import logging
import math
import re
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np

from ribaucour.config import DEFAULT_TOLERANCES, Tolerances
from ribaucour.exceptions import (
    ExpressionDomainError,
    ExpressionSyntaxError,
    UnknownIdentifierError,
    VariableIndexError,
)

logger = logging.getLogger(__name__)

FUNCTIONS: frozenset[str] = frozenset({"sin", "cos", "exp", "log", "sqrt"})
CONSTANTS: dict[str, float] = {"pi": math.pi}

_NUMBER_RE = re.compile(r"(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?")
_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_VAR_RE = re.compile(r"u(\d+)")


#############
# AST
#############


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Const:
    name: str


@dataclass(frozen=True)
class Var:
    index: int  # 1-based


@dataclass(frozen=True)
class Neg:
    operand: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Pow:
    base: "Node"
    exponent: float


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Node"


Node = Union[Num, Const, Var, Neg, BinOp, Pow, Call]


#############
# Tokenizer / parser
#############


@dataclass(frozen=True)
class _Token:
    kind: str  # number | var | ident | op | end
    text: str
    offset: int  # 1-based column


def _tokenize(source: str) -> list[_Token]:
    tokens: list[_Token] = []
    pos = 0
    while pos < len(source):
        char = source[pos]
        if char.isspace():
            pos += 1
            continue
        if char.isdigit() or (
            char == "." and pos + 1 < len(source) and source[pos + 1].isdigit()
        ):
            match = _NUMBER_RE.match(source, pos)
            tokens.append(_Token("number", match.group(0), pos + 1))
            pos = match.end()
            continue
        if char.isalpha() or char == "_":
            match = _IDENT_RE.match(source, pos)
            text = match.group(0)
            kind = "var" if _VAR_RE.fullmatch(text) else "ident"
            tokens.append(_Token(kind, text, pos + 1))
            pos = match.end()
            continue
        if char in "+-*/^()":
            tokens.append(_Token("op", char, pos + 1))
            pos += 1
            continue
        raise ExpressionSyntaxError(f"Unexpected character '{char}'", offset=pos + 1)
    tokens.append(_Token("end", "", len(source) + 1))
    return tokens


class _Parser:
    def __init__(self, source: str, n_vars: int):
        self.tokens = _tokenize(source)
        self.pos = 0
        self.n_vars = n_vars

    @property
    def current(self) -> _Token:
        return self.tokens[self.pos]

    def _accept(self, text: str) -> bool:
        if self.current.kind == "op" and self.current.text == text:
            self.pos += 1
            return True
        return False

    def _expect(self, text: str) -> None:
        if not self._accept(text):
            found = self.current.text or "end of input"
            raise ExpressionSyntaxError(
                f"Expected '{text}' but found '{found}'", offset=self.current.offset
            )

    def parse(self) -> Node:
        node = self._expr()
        if self.current.kind != "end":
            raise ExpressionSyntaxError(
                f"Unexpected '{self.current.text}'", offset=self.current.offset
            )
        return node

    def _expr(self) -> Node:
        node = self._term()
        while self.current.kind == "op" and self.current.text in "+-":
            op = self.current.text
            self.pos += 1
            node = BinOp(op, node, self._term())
        return node

    def _term(self) -> Node:
        node = self._factor()
        while self.current.kind == "op" and self.current.text in "*/":
            op = self.current.text
            self.pos += 1
            node = BinOp(op, node, self._factor())
        return node

    def _factor(self) -> Node:
        node = self._atom()
        if self._accept("^"):
            sign = -1.0 if self._accept("-") else 1.0
            token = self.current
            if token.kind != "number":
                raise ExpressionSyntaxError(
                    "Exponent must be a number", offset=token.offset
                )
            self.pos += 1
            node = Pow(node, sign * float(token.text))
        return node

    def _atom(self) -> Node:
        token = self.current
        if token.kind == "number":
            self.pos += 1
            return Num(float(token.text))
        if token.kind == "var":
            index = int(token.text[1:])
            if not 1 <= index <= self.n_vars:
                raise VariableIndexError(index=index, n_vars=self.n_vars)
            self.pos += 1
            return Var(index)
        if token.kind == "ident":
            self.pos += 1
            if token.text in CONSTANTS:
                return Const(token.text)
            if token.text not in FUNCTIONS:
                raise UnknownIdentifierError(token.text, offset=token.offset)
            self._expect("(")
            arg = self._expr()
            self._expect(")")
            return Call(token.text, arg)
        if self._accept("("):
            node = self._expr()
            self._expect(")")
            return node
        if self._accept("-"):
            return Neg(self._atom())
        found = token.text or "end of input"
        raise ExpressionSyntaxError(f"Unexpected '{found}'", offset=token.offset)


#############
# Canonical printer
#############

_PRECEDENCE = {"+": 1, "-": 1, "*": 2, "/": 2}


def _format_number(value: float) -> str:
    if value.is_integer() and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


def _is_primary(node: Node) -> bool:
    return isinstance(node, (Num, Const, Var, Call))


def to_source(node: Node) -> str:
    """Canonical text of an AST; ``parse(to_source(a)) == a``."""
    if isinstance(node, Num):
        return _format_number(node.value)
    if isinstance(node, Const):
        return node.name
    if isinstance(node, Var):
        return f"u{node.index}"
    if isinstance(node, Call):
        return f"{node.func}({to_source(node.arg)})"
    if isinstance(node, Neg):
        inner = to_source(node.operand)
        return f"-{inner}" if _is_primary(node.operand) else f"-({inner})"
    if isinstance(node, Pow):
        base = to_source(node.base)
        if not _is_primary(node.base):
            base = f"({base})"
        return f"{base}^{_format_number(node.exponent)}"
    prec = _PRECEDENCE[node.op]
    left = to_source(node.left)
    if isinstance(node.left, BinOp) and _PRECEDENCE[node.left.op] < prec:
        left = f"({left})"
    right = to_source(node.right)
    if isinstance(node.right, BinOp) and _PRECEDENCE[node.right.op] <= prec:
        right = f"({right})"
    return f"{left} {node.op} {right}"


#############
# Jets
#############


@dataclass(frozen=True)
class Jet2:
    """
    Value, gradient and Hessian of a scalar function.

    Arrays may carry leading batch dimensions: ``value`` has shape ``B``,
    ``gradient`` ``B + (n,)`` and ``hessian`` ``B + (n, n)``.
    """

    value: np.ndarray
    gradient: np.ndarray
    hessian: np.ndarray

    @classmethod
    def constant(cls, c: float, batch: int, n: int) -> "Jet2":
        return cls(
            np.full(batch, float(c)), np.zeros((batch, n)), np.zeros((batch, n, n))
        )

    @classmethod
    def variable(cls, points: np.ndarray, index: int) -> "Jet2":
        batch, n = points.shape
        gradient = np.zeros((batch, n))
        gradient[:, index] = 1.0
        return cls(points[:, index].copy(), gradient, np.zeros((batch, n, n)))

    def __add__(self, other: "Jet2") -> "Jet2":
        return Jet2(
            self.value + other.value,
            self.gradient + other.gradient,
            self.hessian + other.hessian,
        )

    def __sub__(self, other: "Jet2") -> "Jet2":
        return Jet2(
            self.value - other.value,
            self.gradient - other.gradient,
            self.hessian - other.hessian,
        )

    def __neg__(self) -> "Jet2":
        return Jet2(-self.value, -self.gradient, -self.hessian)

    def __mul__(self, other: "Jet2") -> "Jet2":
        a, b = self, other
        cross = _outer(a.gradient, b.gradient)
        cross = cross + np.swapaxes(cross, -1, -2)
        hessian = (
            a.value[..., None, None] * b.hessian + b.value[..., None, None] * a.hessian
        ) + cross
        gradient = a.value[..., None] * b.gradient + b.value[..., None] * a.gradient
        return Jet2(a.value * b.value, gradient, hessian)

    def chain(self, f0: np.ndarray, f1: np.ndarray, f2: np.ndarray) -> "Jet2":
        """Compose with a scalar function given its value and two derivatives."""
        hessian = f1[..., None, None] * self.hessian + f2[..., None, None] * _outer(
            self.gradient, self.gradient
        )
        return Jet2(f0, f1[..., None] * self.gradient, hessian)

    def squeeze(self) -> "Jet2":
        return Jet2(self.value[0], self.gradient[0], self.hessian[0])


def _outer(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a[..., :, None] * b[..., None, :]


class _Evaluator:
    def __init__(self, points: np.ndarray):
        self.points = points
        self.batch, self.n = points.shape

    def _fail(self, mask: np.ndarray, operation: str, message: str) -> None:
        index = int(np.flatnonzero(mask)[0])
        raise ExpressionDomainError(
            message, point=self.points[index], operation=operation
        )

    def jet(self, node: Node) -> Jet2:
        if isinstance(node, Num):
            return Jet2.constant(node.value, self.batch, self.n)
        if isinstance(node, Const):
            return Jet2.constant(CONSTANTS[node.name], self.batch, self.n)
        if isinstance(node, Var):
            return Jet2.variable(self.points, node.index - 1)
        if isinstance(node, Neg):
            return -self.jet(node.operand)
        if isinstance(node, BinOp):
            left, right = self.jet(node.left), self.jet(node.right)
            if node.op == "+":
                return left + right
            if node.op == "-":
                return left - right
            if node.op == "*":
                return left * right
            return left * self._reciprocal(right)
        if isinstance(node, Pow):
            return self._power(self.jet(node.base), node.exponent)
        return self._call(node.func, self.jet(node.arg))

    def _reciprocal(self, x: Jet2) -> Jet2:
        zero = x.value == 0.0
        if zero.any():
            self._fail(zero, "division", "Division by zero")
        inv = 1.0 / x.value
        return x.chain(inv, -inv * inv, 2.0 * inv * inv * inv)

    def _power(self, base: Jet2, exponent: float) -> Jet2:
        if float(exponent).is_integer():
            k = int(exponent)
            result = Jet2.constant(1.0, self.batch, self.n)
            for _ in range(abs(k)):
                result = result * base
            return self._reciprocal(result) if k < 0 else result
        bad = base.value <= 0.0
        if bad.any():
            self._fail(bad, "power", "Real exponent of a non-positive base")
        logged = self._call("log", base)
        scaled = Jet2(
            exponent * logged.value,
            exponent * logged.gradient,
            exponent * logged.hessian,
        )
        return self._call("exp", scaled)

    def _call(self, func: str, x: Jet2) -> Jet2:
        v = x.value
        if func == "sin":
            s, c = np.sin(v), np.cos(v)
            return x.chain(s, c, -s)
        if func == "cos":
            s, c = np.sin(v), np.cos(v)
            return x.chain(c, -s, -c)
        if func == "exp":
            e = np.exp(v)
            return x.chain(e, e, e)
        if func == "log":
            bad = v <= 0.0
            if bad.any():
                self._fail(bad, "log", "Logarithm of a non-positive value")
            inv = 1.0 / v
            return x.chain(np.log(v), inv, -inv * inv)
        bad = v <= 0.0
        if bad.any():
            self._fail(bad, "sqrt", "Square root of a non-positive value")
        r = np.sqrt(v)
        return x.chain(r, 0.5 / r, -0.25 / (r * v))


#############
# Public API
#############


@dataclass(frozen=True)
class Expression:
    """A parsed potential over variables ``u1..u{n_vars}``."""

    root: Node
    n_vars: int

    def to_source(self) -> str:
        return to_source(self.root)

    def jets(self, points: np.ndarray) -> Jet2:
        """Evaluate jets on a batch of points of shape ``(P, n_vars)``."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if points.shape[-1] != self.n_vars:
            raise ValueError(
                f"Expected points with {self.n_vars} coordinates, got {points.shape}"
            )
        jet = _Evaluator(points).jet(self.root)
        finite = (
            np.isfinite(jet.value)
            & np.isfinite(jet.gradient).all(axis=-1)
            & np.isfinite(jet.hessian).all(axis=(-1, -2))
        )
        if not finite.all():
            index = int(np.flatnonzero(~finite)[0])
            raise ExpressionDomainError(
                "Non-finite value", point=points[index], operation="evaluate"
            )
        # exact symmetry: (x + y) / 2 is bitwise equal to (y + x) / 2
        hessian = 0.5 * (jet.hessian + np.swapaxes(jet.hessian, -1, -2))
        return Jet2(jet.value, jet.gradient, hessian)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        return self.jets(points).value

    def __call__(self, point: Sequence[float]) -> float:
        return float(self.evaluate(np.asarray(point, dtype=float)[None, :])[0])


def parse(source: str, n_vars: int) -> Expression:
    """
    Parse ``source`` into an :class:`Expression` over ``n_vars`` variables.

    Raises:
        ExpressionSyntaxError: The text does not conform to the grammar.
        UnknownIdentifierError: A function or constant name is unknown.
        VariableIndexError: A variable ``uK`` has ``K > n_vars`` (or ``K = 0``).
    """
    if n_vars < 1:
        raise ValueError("n_vars must be positive")
    root = _Parser(source, n_vars).parse()
    logger.debug("Parsed expression %r as %s", source, to_source(root))
    return Expression(root=root, n_vars=n_vars)


def eval_jet2(e: Expression, point: Sequence[float]) -> Jet2:
    """Value, gradient and Hessian of ``e`` at a single point."""
    return e.jets(np.asarray(point, dtype=float)[None, :]).squeeze()


@dataclass(frozen=True)
class CommutatorReport:
    """Outcome of a commuting-Hessian test over a sample of points."""

    max_norm: float
    tolerance: float
    passed: bool
    pair: tuple[int, int] | None = None
    point: tuple[float, ...] | None = None


def check_commuting_hessians(
    es: Sequence[Expression],
    sample: Iterable[Sequence[float]] | np.ndarray,
    *,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> CommutatorReport:
    """
    Max Frobenius norm of ``[Hess φ_i, Hess φ_j]`` over sample points and pairs.

    The tolerance is ``tol_commute`` scaled by the largest squared Hessian
    entry seen, so that rounding in large Hessians does not fail the test.
    """
    es = list(es)
    points = np.atleast_2d(np.asarray(list(sample), dtype=float))
    if points.size == 0:
        raise ValueError("Sample must contain at least one point")
    if len({e.n_vars for e in es}) > 1:
        raise ValueError("All expressions must share n_vars")
    hessians = [e.jets(points).hessian for e in es]
    scale = max([1.0] + [float(np.max(np.abs(h))) ** 2 for h in hessians])
    tolerance = tolerances.resolve("tol_commute", 0.0, local_scale=scale)

    worst, worst_pair, worst_point = 0.0, None, None
    for i, j in itertools.combinations(range(len(es)), 2):
        commutator = hessians[i] @ hessians[j] - hessians[j] @ hessians[i]
        norms = np.linalg.norm(commutator, axis=(-2, -1))
        index = int(np.argmax(norms))
        if norms[index] > worst or worst_pair is None:
            worst = float(norms[index])
            worst_pair = (i, j)
            worst_point = tuple(float(x) for x in points[index])
    passed = worst <= tolerance
    if not passed:
        logger.info(
            "Hessians of potentials %s do not commute (%.3e > %.3e)",
            worst_pair,
            worst,
            tolerance,
        )
    return CommutatorReport(
        max_norm=worst,
        tolerance=tolerance,
        passed=passed,
        pair=worst_pair,
        point=worst_point,
    )
