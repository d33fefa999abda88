"""Small arithmetic grammar for fields, rates and jump entries in configs.

Expressions are parsed with the stdlib ast module and compiled to numpy
closures; nothing is passed to eval.  Allowed: numbers, named parameters,
state variables, + - * / ** and unary minus, comparisons (only inside
where), and the functions listed in FUNCTIONS.
"""

from __future__ import annotations

import ast
from typing import Callable, Mapping

import numpy as np

from .errors import ConfigError


def _ramp(v, a, b):
    return np.clip((v - a) / (b - a), 0.0, 1.0)


FUNCTIONS: dict[str, Callable] = {
    "exp": np.exp,
    "ln": np.log,
    "log": np.log,
    "sinh": np.sinh,
    "cosh": np.cosh,
    "tanh": np.tanh,
    "asinh": np.arcsinh,
    "atanh": np.arctanh,
    "sqrt": np.sqrt,
    "abs": np.abs,
    "pow": np.power,
    "min": np.minimum,
    "max": np.maximum,
    "clip": np.clip,
    "ramp": _ramp,
    "where": np.where,
}

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
}


def _compile(node, names: Mapping[str, float], variables: tuple[str, ...]):
    if isinstance(node, ast.Expression):
        return _compile(node.body, names, variables)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        v = float(node.value)
        return lambda env: v
    if isinstance(node, ast.Name):
        if node.id in variables:
            key = node.id
            return lambda env: env[key]
        if node.id in names:
            v = float(names[node.id])
            return lambda env: v
        if node.id in ("pi", "inf"):
            v = np.pi if node.id == "pi" else np.inf
            return lambda env: v
        raise ConfigError(f"unknown name {node.id!r} in expression")
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        inner = _compile(node.operand, names, variables)
        if isinstance(node.op, ast.USub):
            return lambda env: -inner(env)
        return inner
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        op = _BINOPS[type(node.op)]
        lhs = _compile(node.left, names, variables)
        rhs = _compile(node.right, names, variables)
        return lambda env: op(lhs(env), rhs(env))
    if isinstance(node, ast.Compare) and len(node.ops) == 1 and type(node.ops[0]) in _CMPOPS:
        op = _CMPOPS[type(node.ops[0])]
        lhs = _compile(node.left, names, variables)
        rhs = _compile(node.comparators[0], names, variables)
        return lambda env: op(lhs(env), rhs(env))
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name):
        fn = FUNCTIONS.get(node.func.id)
        if fn is None or node.keywords:
            raise ConfigError(f"function {node.func.id!r} not allowed")
        args = [_compile(a, names, variables) for a in node.args]
        return lambda env: fn(*(a(env) for a in args))
    raise ConfigError(f"unsupported syntax: {ast.dump(node)[:60]}")


def compile_expr(text: str | float, variables: tuple[str, ...],
                 params: Mapping[str, float] | None = None):
    """Compile text into f(env) where env maps variable names to arrays."""
    if isinstance(text, (int, float)):
        v = float(text)
        return lambda env: v
    try:
        tree = ast.parse(str(text), mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse expression {text!r}: {exc}") from None
    return _compile(tree, params or {}, variables)


def state_names(d: int) -> tuple[str, ...]:
    names = tuple(f"x{k + 1}" for k in range(d))
    if d == 1:
        names += ("x",)
    elif d == 2:
        names += ("x", "y")
    return names


def state_env(x: np.ndarray) -> dict[str, np.ndarray]:
    """Variable bindings for points x of shape (..., d)."""
    d = x.shape[-1]
    env = {f"x{k + 1}": x[..., k] for k in range(d)}
    if d == 1:
        env["x"] = x[..., 0]
    elif d == 2:
        env["x"], env["y"] = x[..., 0], x[..., 1]
    return env


def vector_expr(components, d: int, params=None, extra: tuple[str, ...] = ()):
    """Compile a list of d component expressions into g(x, **extra) -> (..., d)."""
    if isinstance(components, (str, int, float)):
        components = [components]
    if len(components) != d:
        raise ConfigError(f"expected {d} components, got {len(components)}")
    fns = [compile_expr(c, state_names(d) + extra, params) for c in components]

    def g(x, **kw):
        x = np.asarray(x, dtype=float)
        env = state_env(x)
        env.update(kw)
        shape = np.broadcast_shapes(x.shape[:-1], *(np.shape(v) for v in kw.values()))
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            cols = [np.broadcast_to(np.asarray(f(env), dtype=float), shape) for f in fns]
        return np.stack(cols, axis=-1)

    return g


def scalar_expr(text, d: int, params=None):
    """Compile a scalar state function h(x) with x of shape (..., d)."""
    f = compile_expr(text, state_names(d), params)

    def h(x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            return np.broadcast_to(np.asarray(f(state_env(x)), dtype=float), x.shape[:-1]).copy()

    return h
