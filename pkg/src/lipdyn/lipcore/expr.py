"""A small, total expression grammar compiled to vectorized numpy closures.

Grammar: numeric constants, coordinate names, ``+ - * / **`` (``^`` is
accepted as power), unary minus, and the functions ``abs min max sin cos
exp ln tanh``.  Predicates add comparisons (chained allowed), ``and``,
``or`` and ``not``.  Parsing goes through :mod:`ast` with a whitelist;
anything else is a :class:`ParseError` carrying line and column.
"""

from __future__ import annotations

import ast
import math
from typing import Callable, Sequence

import numpy as np

from ..errors import EvalError, ParseError

_FUNCS: dict[str, Callable] = {
    "abs": np.abs,
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "ln": np.log,
    "tanh": np.tanh,
}
_VARIADIC = {"min": np.minimum, "max": np.maximum}
_CONSTS = {"pi": math.pi, "e": math.e}

_BINOPS = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.divide,
    ast.Pow: np.power,
}
_CMPOPS = {
    ast.Lt: np.less,
    ast.LtE: np.less_equal,
    ast.Gt: np.greater,
    ast.GtE: np.greater_equal,
    ast.Eq: np.equal,
    ast.NotEq: np.not_equal,
}


def coordinate_names(dim: int) -> dict[str, int]:
    names = {f"x{i}": i for i in range(dim)}
    for i, n in enumerate("xyz"[:dim]):
        names[n] = i
    return names


class Expr:
    """Compiled expression; call with an ``(N, dim)`` array to get ``(N,)`` values."""

    def __init__(self, text: str, variables: dict[str, int], predicate: bool = False):
        self.text = text
        self.variables = dict(variables)
        self.predicate = predicate
        src = text.replace("^", "**")
        try:
            tree = ast.parse(src.strip(), mode="eval")
        except SyntaxError as exc:
            raise ParseError(f"syntax error in {text!r}: {exc.msg}", exc.lineno, exc.offset) from None
        self._fn = self._compile(tree.body)

    def _fail(self, node, msg):
        raise ParseError(f"{msg} in {self.text!r}", getattr(node, "lineno", None),
                         getattr(node, "col_offset", -1) + 1)

    def _compile(self, node) -> Callable[[np.ndarray], np.ndarray]:
        if isinstance(node, ast.Constant):
            if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
                self._fail(node, "unsupported constant")
            v = float(node.value)
            return lambda X: np.full(X.shape[0], v)
        if isinstance(node, ast.Name):
            if node.id in self.variables:
                i = self.variables[node.id]
                return lambda X: X[:, i]
            if node.id in _CONSTS:
                v = _CONSTS[node.id]
                return lambda X: np.full(X.shape[0], v)
            self._fail(node, f"unknown name {node.id!r}")
        if isinstance(node, ast.UnaryOp):
            inner = self._compile(node.operand)
            if isinstance(node.op, ast.USub):
                return lambda X: -inner(X)
            if isinstance(node.op, ast.UAdd):
                return inner
            if isinstance(node.op, ast.Not) and self.predicate:
                return lambda X: np.logical_not(inner(X))
            self._fail(node, "unsupported unary operator")
        if isinstance(node, ast.BinOp):
            op = _BINOPS.get(type(node.op))
            if op is None:
                self._fail(node, "unsupported operator")
            a, b = self._compile(node.left), self._compile(node.right)
            return lambda X: op(a(X), b(X))
        if isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.keywords:
                self._fail(node, "unsupported call")
            name = node.func.id
            args = [self._compile(a) for a in node.args]
            if name in _FUNCS:
                if len(args) != 1:
                    self._fail(node, f"{name} takes one argument")
                f, a = _FUNCS[name], args[0]
                return lambda X: f(a(X))
            if name in _VARIADIC:
                if len(args) < 2:
                    self._fail(node, f"{name} takes at least two arguments")
                f = _VARIADIC[name]

                def call(X, f=f, args=args):
                    out = args[0](X)
                    for a in args[1:]:
                        out = f(out, a(X))
                    return out
                return call
            self._fail(node, f"unknown function {name!r}")
        if self.predicate and isinstance(node, ast.Compare):
            terms = [self._compile(node.left)] + [self._compile(c) for c in node.comparators]
            ops = []
            for op in node.ops:
                if type(op) not in _CMPOPS:
                    self._fail(node, "unsupported comparison")
                ops.append(_CMPOPS[type(op)])

            def compare(X, terms=terms, ops=ops):
                vals = [t(X) for t in terms]
                out = np.ones(X.shape[0], dtype=bool)
                for op, a, b in zip(ops, vals, vals[1:]):
                    out &= op(a, b)
                return out
            return compare
        if self.predicate and isinstance(node, ast.BoolOp):
            parts = [self._compile(v) for v in node.values]
            combine = np.logical_and if isinstance(node.op, ast.And) else np.logical_or

            def boolop(X, parts=parts, combine=combine):
                out = parts[0](X)
                for p in parts[1:]:
                    out = combine(out, p(X))
                return out
            return boolop
        self._fail(node, f"unsupported syntax {type(node).__name__}")

    def __call__(self, X: np.ndarray) -> np.ndarray:
        with np.errstate(divide="raise", invalid="raise", over="raise"):
            try:
                out = self._fn(X)
            except FloatingPointError as exc:
                raise EvalError(f"{self.text!r}: {exc}") from None
        if self.predicate:
            return np.asarray(out, dtype=bool)
        out = np.asarray(out, dtype=float)
        if not np.all(np.isfinite(out)):
            raise EvalError(f"{self.text!r} produced a non-finite value")
        return out


def compile_vector(texts: Sequence[str] | str, variables: dict[str, int]) -> list[Expr]:
    if isinstance(texts, str):
        texts = [texts]
    return [Expr(t, variables) for t in texts]
