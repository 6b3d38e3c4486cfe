"""
PM-Lab Expressions
Whitelisted arithmetic for loads h(t), initial data u(x) and jump densities g(w).
Sources are parsed with ast and walked directly (no eval); every node carries its
value and its derivative with respect to the free variable.
"""

import ast
import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Tuple

import numpy as np

from energy_core import ConcaveJumpDensity, LatticeField
from errors import ConfigError
from piecewise import PiecewiseH1Function
from quasistatic import LoadProgram

logger = logging.getLogger(__name__)

CONSTANTS = {"pi": math.pi, "e": math.e}


@dataclass(frozen=True)
class Dual:
    """Value and derivative of a sub-expression"""

    val: np.ndarray
    der: np.ndarray

    @classmethod
    def const(cls, c) -> "Dual":
        return cls(np.asarray(c, dtype=float), np.zeros_like(np.asarray(c, dtype=float)))

    def __add__(self, o: "Dual") -> "Dual":
        return Dual(self.val + o.val, self.der + o.der)

    def __sub__(self, o: "Dual") -> "Dual":
        return Dual(self.val - o.val, self.der - o.der)

    def __mul__(self, o: "Dual") -> "Dual":
        return Dual(self.val * o.val, self.der * o.val + self.val * o.der)

    def __truediv__(self, o: "Dual") -> "Dual":
        return Dual(self.val / o.val, (self.der * o.val - self.val * o.der) / (o.val * o.val))

    def __pow__(self, o: "Dual") -> "Dual":
        val = self.val ** o.val
        der = o.val * self.val ** (o.val - 1.0) * self.der
        if np.any(o.der != 0.0):
            with np.errstate(divide="ignore", invalid="ignore"):
                der = der + np.where(o.der != 0.0, val * np.log(self.val) * o.der, 0.0)
        return Dual(val, der)

    def __neg__(self) -> "Dual":
        return Dual(-self.val, -self.der)


def _chain(fn: Callable, dfn: Callable) -> Callable[..., Dual]:
    def apply(a: Dual) -> Dual:
        return Dual(fn(a.val), dfn(a.val) * a.der)
    return apply


def _hat(t: Dual, t0: Dual) -> Dual:
    """t0 - |t - t0|"""
    s = np.sign(t.val - t0.val)
    return Dual(t0.val - np.abs(t.val - t0.val), t0.der - s * (t.der - t0.der))


def _step(x: Dual, x0: Dual, height: Dual = None) -> Dual:
    """height * [x >= x0], right-continuous"""
    h = height if height is not None else Dual.const(1.0)
    on = (x.val >= x0.val).astype(float)
    return Dual(h.val * on, h.der * on)


def _ramp(t: Dual, slope: Dual = None) -> Dual:
    return t * (slope if slope is not None else Dual.const(1.0))


def _mode(x: Dual, k: Dual) -> Dual:
    """cos(k pi x)"""
    return _chain(np.cos, lambda v: -np.sin(v))(k * Dual.const(math.pi) * x)


def _const(c: Dual, *_ignored: Dual) -> Dual:
    return c


UNARY = {
    "sin": _chain(np.sin, np.cos),
    "cos": _chain(np.cos, lambda v: -np.sin(v)),
    "exp": _chain(np.exp, np.exp),
    "log": _chain(np.log, lambda v: 1.0 / v),
    "log1p": _chain(np.log1p, lambda v: 1.0 / (1.0 + v)),
    "sqrt": _chain(np.sqrt, lambda v: 0.5 / np.sqrt(v)),
    "abs": _chain(np.abs, np.sign),
    "tanh": _chain(np.tanh, lambda v: 1.0 - np.tanh(v) ** 2),
}

SPECIAL = {
    "hat": (_hat, 2, 2),
    "step": (_step, 2, 3),
    "ramp": (_ramp, 1, 2),
    "mode": (_mode, 2, 2),
    "const": (_const, 1, 2),
}

BINARY = {
    ast.Add: Dual.__add__,
    ast.Sub: Dual.__sub__,
    ast.Mult: Dual.__mul__,
    ast.Div: Dual.__truediv__,
    ast.Pow: Dual.__pow__,
}


class Expression:
    """
    Parsed expression in one free variable.

    Grammar: numbers, pi, e, the variable, + - * / **, unary minus, the functions
    sin cos exp log log1p sqrt abs tanh, and the shapes hat(t, t0), step(x, x0[, h]),
    ramp(t[, slope]), mode(x, k) = cos(k pi x), const(c).
    """

    def __init__(self, source: str, variable: str):
        self.source = source.strip()
        self.variable = variable
        try:
            self.tree = ast.parse(self.source, mode="eval")
        except SyntaxError as e:
            raise ConfigError(f"cannot parse expression '{self.source}': {e.msg}") from e
        self._check(self.tree)

    def _check(self, tree: ast.AST) -> None:
        for node in ast.walk(tree):
            if isinstance(node, (ast.Expression, ast.Load, ast.operator, ast.unaryop)):
                if isinstance(node, ast.operator) and type(node) not in BINARY:
                    raise ConfigError(f"operator {type(node).__name__} not allowed in '{self.source}'")
                if isinstance(node, ast.unaryop) and not isinstance(node, (ast.USub, ast.UAdd)):
                    raise ConfigError(f"operator {type(node).__name__} not allowed in '{self.source}'")
                continue
            if isinstance(node, (ast.BinOp, ast.UnaryOp)):
                continue
            if isinstance(node, ast.Constant):
                if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
                    raise ConfigError(f"only numeric literals are allowed, got {node.value!r}")
                continue
            if isinstance(node, ast.Name):
                if node.id != self.variable and node.id not in CONSTANTS and node.id not in UNARY and node.id not in SPECIAL:
                    raise ConfigError(f"unknown name '{node.id}' in '{self.source}' (variable is '{self.variable}')")
                continue
            if isinstance(node, ast.Call):
                if not isinstance(node.func, ast.Name) or node.keywords:
                    raise ConfigError(f"only plain function calls are allowed in '{self.source}'")
                name = node.func.id
                if name in UNARY:
                    arity = (1, 1)
                elif name in SPECIAL:
                    arity = SPECIAL[name][1:]
                else:
                    raise ConfigError(f"unknown function '{name}' in '{self.source}'")
                if not (arity[0] <= len(node.args) <= arity[1]):
                    raise ConfigError(f"{name}() takes {arity[0]}..{arity[1]} arguments")
                continue
            raise ConfigError(f"{type(node).__name__} is not allowed in '{self.source}'")

    # -- evaluation -------------------------------------------------------------

    def _eval(self, node: ast.AST, var: Dual) -> Dual:
        if isinstance(node, ast.Expression):
            return self._eval(node.body, var)
        if isinstance(node, ast.Constant):
            return Dual.const(float(node.value))
        if isinstance(node, ast.Name):
            if node.id == self.variable:
                return var
            if node.id in CONSTANTS:
                return Dual.const(CONSTANTS[node.id])
            raise ConfigError(f"'{node.id}' is a function, not a value")
        if isinstance(node, ast.UnaryOp):
            inner = self._eval(node.operand, var)
            return -inner if isinstance(node.op, ast.USub) else inner
        if isinstance(node, ast.BinOp):
            return BINARY[type(node.op)](self._eval(node.left, var), self._eval(node.right, var))
        if isinstance(node, ast.Call):
            args = [self._eval(a, var) for a in node.args]
            name = node.func.id
            if name in UNARY:
                return UNARY[name](args[0])
            return SPECIAL[name][0](*args)
        raise ConfigError(f"cannot evaluate {type(node).__name__}")

    def dual(self, values) -> Dual:
        v = np.asarray(values, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = self._eval(self.tree, Dual(v, np.ones_like(v)))
        return Dual(np.broadcast_to(out.val, v.shape).astype(float), np.broadcast_to(out.der, v.shape).astype(float))

    def __call__(self, values):
        return self.dual(values).val

    def derivative(self, values):
        return self.dual(values).der

    def jump_points(self) -> List[float]:
        """Positions x0 of every step(x, x0, ...) whose position is constant"""
        points = []
        for node in ast.walk(self.tree):
            if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id == "step":
                pos = node.args[1]
                if any(isinstance(n, ast.Name) and n.id == self.variable for n in ast.walk(pos)):
                    raise ConfigError("step position must not depend on the variable")
                points.append(float(Expression(ast.unparse(pos), self.variable)(0.0)))
        return sorted(set(points))

    def __repr__(self) -> str:
        return f"Expression({self.source!r}, {self.variable!r})"


# ============================================================================
# BUILDERS
# ============================================================================

def load_from_expression(source: str, horizon: float = 10.0) -> LoadProgram:
    expr = Expression(source, "t")
    try:
        return LoadProgram(h=lambda t: float(expr(t)), description=expr.source, horizon=horizon)
    except ValueError as e:
        raise ConfigError(f"load '{source}' rejected: {e}") from e


def function_from_expression(source: str) -> PiecewiseH1Function:
    """u(x) on [0, 1]; step() calls become jumps, pieces keep exact derivatives"""
    expr = Expression(source, "x")
    jumps = [p for p in expr.jump_points() if 0.0 < p < 1.0]
    fns = [expr] * (len(jumps) + 1)
    return PiecewiseH1Function.from_callables(jumps, fns, [expr.derivative] * len(fns))


def field_from_expression(source: str, n: int) -> LatticeField:
    return LatticeField.from_function(Expression(source, "x"), n)


def density_from_expression(source: str, name: str = "") -> ConcaveJumpDensity:
    expr = Expression(source, "w")
    return ConcaveJumpDensity(name=name or expr.source, g=expr, g_prime=expr.derivative)


def describe_grammar() -> Dict[str, Tuple[str, ...]]:
    return {"functions": tuple(sorted(UNARY)), "shapes": tuple(sorted(SPECIAL)), "constants": tuple(CONSTANTS)}


def check_source(source: str, variable: str) -> str:
    """Validator hook for parameter models: grammar errors surface as ValueError"""
    try:
        Expression(source, variable)
    except ConfigError as e:
        raise ValueError(str(e)) from e
    return source
