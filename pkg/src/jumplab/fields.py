"""Scalar fields over coordinates as parsed expressions.

Experiments declare f and g as strings like ``"sin(x1) + 0.5*x2*x2"``.
Expressions are parsed with the standard ast module, validated against a
whitelist (coordinates x1..xd, arithmetic, abs/sin/cos/exp/min/max and the
constants pi and e), and evaluated vectorized over point arrays.  No
general eval is involved, and instances pickle by source string so they
can cross process boundaries.
"""

from __future__ import annotations

import ast
import math

import numpy as np

from .errors import ConfigError

_FUNCS_1 = {"abs": np.abs, "sin": np.sin, "cos": np.cos, "exp": np.exp}
_FUNCS_N = {"min": np.minimum, "max": np.maximum}
_CONSTANTS = {"pi": math.pi, "e": math.e}

BUILTIN_FIELDS = {"zero": "0", "one": "1"}


class FieldExpr:
    """Compiled scalar field; call with an (n, d) array or a single point."""

    def __init__(self, expr: str, dimension: int):
        if not isinstance(expr, str) or not expr.strip():
            raise ConfigError("field expression must be a non-empty string")
        self.expr = BUILTIN_FIELDS.get(expr.strip(), expr)
        self.dimension = int(dimension)
        self._tree = self._parse()

    # pickling by source keeps workers independent of live AST objects
    def __getstate__(self):
        return {"expr": self.expr, "dimension": self.dimension}

    def __setstate__(self, state):
        self.expr = state["expr"]
        self.dimension = state["dimension"]
        self._tree = self._parse()

    def __repr__(self):
        return f"FieldExpr({self.expr!r}, dimension={self.dimension})"

    def _parse(self):
        try:
            tree = ast.parse(self.expr, mode="eval")
        except SyntaxError as exc:
            raise ConfigError(
                f"cannot parse field expression {self.expr!r} at offset {exc.offset}: {exc.msg}")
        self._validate(tree.body)
        return tree.body

    def _validate(self, node):
        if isinstance(node, ast.BinOp) and isinstance(node.op, (ast.Add, ast.Sub, ast.Mult,
                                                                ast.Div, ast.Pow)):
            self._validate(node.left)
            self._validate(node.right)
            return
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            self._validate(node.operand)
            return
        if isinstance(node, ast.Constant):
            if not isinstance(node.value, (int, float)):
                raise ConfigError(f"non-numeric constant at offset {node.col_offset}")
            return
        if isinstance(node, ast.Name):
            if node.id in _CONSTANTS or self._coord_index(node) is not None:
                return
            raise ConfigError(
                f"unknown identifier {node.id!r} at offset {node.col_offset} "
                f"(coordinates are x1..x{self.dimension})")
        if isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.keywords:
                raise ConfigError(f"unsupported call at offset {node.col_offset}")
            name = node.func.id
            if name in _FUNCS_1:
                if len(node.args) != 1:
                    raise ConfigError(f"{name} takes exactly one argument "
                                      f"(offset {node.col_offset})")
            elif name in _FUNCS_N:
                if len(node.args) < 2:
                    raise ConfigError(f"{name} takes at least two arguments "
                                      f"(offset {node.col_offset})")
            else:
                raise ConfigError(f"unknown function {name!r} at offset {node.col_offset}")
            for a in node.args:
                self._validate(a)
            return
        raise ConfigError(
            f"unsupported syntax {type(node).__name__} at offset {getattr(node, 'col_offset', 0)}")

    def _coord_index(self, node):
        name = node.id
        if name.startswith("x") and name[1:].isdigit():
            i = int(name[1:])
            if 1 <= i <= self.dimension:
                return i - 1
            raise ConfigError(
                f"coordinate {name} out of range for dimension {self.dimension} "
                f"(offset {node.col_offset})")
        return None

    def _eval(self, node, cols):
        if isinstance(node, ast.BinOp):
            a = self._eval(node.left, cols)
            b = self._eval(node.right, cols)
            if isinstance(node.op, ast.Add):
                return a + b
            if isinstance(node.op, ast.Sub):
                return a - b
            if isinstance(node.op, ast.Mult):
                return a * b
            if isinstance(node.op, ast.Div):
                return a / b
            return a ** b
        if isinstance(node, ast.UnaryOp):
            v = self._eval(node.operand, cols)
            return -v if isinstance(node.op, ast.USub) else +v
        if isinstance(node, ast.Constant):
            return float(node.value)
        if isinstance(node, ast.Name):
            if node.id in _CONSTANTS:
                return _CONSTANTS[node.id]
            return cols[self._coord_index(node)]
        if isinstance(node, ast.Call):
            name = node.func.id
            args = [self._eval(a, cols) for a in node.args]
            if name in _FUNCS_1:
                return _FUNCS_1[name](args[0])
            out = args[0]
            for a in args[1:]:
                out = _FUNCS_N[name](out, a)
            return out
        raise AssertionError("unreachable: node survived validation")

    def __call__(self, pts):
        pts = np.asarray(pts, dtype=float)
        single = pts.ndim <= 1
        pts = pts.reshape(-1, self.dimension)
        cols = [pts[:, i] for i in range(self.dimension)]
        out = np.broadcast_to(np.asarray(self._eval(self._tree, cols), dtype=float),
                              (pts.shape[0],)).copy()
        return float(out[0]) if single else out


def expression_eval(expr: str, x) -> float:
    """Evaluate a field expression at a single point."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return float(FieldExpr(expr, x.size)(x))
