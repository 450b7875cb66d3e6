"""A small arithmetic grammar for Kähler potentials and test functions.

Expressions are parsed with :mod:`ast` and translated node by node into
:mod:`sympy`, so nothing user-supplied is ever passed to ``eval``.  Supported:
numbers, the named variables, ``+ - * / ^ **``, unary minus and the functions
in :data:`FUNCTIONS`.
"""

from __future__ import annotations

import ast
from typing import Sequence

import sympy as sp

from .errors import ExpressionError

FUNCTIONS = {
    "exp": sp.exp,
    "log": sp.log,
    "sqrt": sp.sqrt,
    "sin": sp.sin,
    "cos": sp.cos,
    "tanh": sp.tanh,
    "abs": sp.Abs,
}

CONSTANTS = {"pi": sp.pi, "e": sp.E}

_BINOPS = {
    ast.Add: lambda a, b: a + b,
    ast.Sub: lambda a, b: a - b,
    ast.Mult: lambda a, b: a * b,
    ast.Div: lambda a, b: a / b,
    ast.Pow: lambda a, b: a**b,
}


def parse_expression(text: str, variables: Sequence[sp.Symbol]) -> sp.Expr:
    """Parse ``text`` into a sympy expression over ``variables``."""
    names = {str(v): v for v in variables}
    source = text.replace("^", "**").replace("−", "-").strip()
    if not source:
        raise ExpressionError("empty expression")
    try:
        tree = ast.parse(source, mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {text!r}: {exc.msg}") from None
    return _convert(tree.body, names, text)


def _convert(node, names, text):
    if isinstance(node, ast.Constant) and type(node.value) in (int, float):
        return sp.Integer(node.value) if isinstance(node.value, int) else sp.Float(node.value)
    if isinstance(node, ast.Name):
        if node.id in names:
            return names[node.id]
        if node.id in CONSTANTS:
            return CONSTANTS[node.id]
        allowed = ", ".join(sorted(names))
        raise ExpressionError(f"unknown name {node.id!r} in {text!r} (variables: {allowed})")
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        return _BINOPS[type(node.op)](_convert(node.left, names, text), _convert(node.right, names, text))
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        operand = _convert(node.operand, names, text)
        return -operand if isinstance(node.op, ast.USub) else operand
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and not node.keywords:
        func = FUNCTIONS.get(node.func.id)
        if func is None:
            raise ExpressionError(f"unsupported function {node.func.id!r} in {text!r}")
        return func(*[_convert(arg, names, text) for arg in node.args])
    raise ExpressionError(f"unsupported construct {ast.dump(node)[:40]!r} in {text!r}")


def rho_symbols(dimension: int) -> list[sp.Symbol]:
    """Variables for Kähler potentials: ``rho`` in one dimension, else ``rho1..rhom``."""
    if dimension == 1:
        return [sp.Symbol("rho", real=True)]
    return [sp.Symbol(f"rho{j + 1}", real=True) for j in range(dimension)]


def point_symbols(arity: int) -> list[sp.Symbol]:
    """Variables for test functions: ``t``; ``s, t``; or ``t1..tm``."""
    if arity == 1:
        return [sp.Symbol("t", real=True)]
    if arity == 2:
        return [sp.Symbol("s", real=True), sp.Symbol("t", real=True)]
    return [sp.Symbol(f"t{j + 1}", real=True) for j in range(arity)]
