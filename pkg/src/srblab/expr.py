"""Safe compilation of the small arithmetic grammar used by config-defined families.

Grammar: numbers, the variables passed in, the constants pi and e, the binary
operators + - * / ^ (or **), unary minus, and the functions sin, cos, exp,
log, floor, sqrt, abs.
"""

from __future__ import annotations

import ast

import numpy as np

from .errors import ConfigInvalid

FUNCTIONS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "log": np.log,
             "floor": np.floor, "sqrt": np.sqrt, "abs": np.abs}
CONSTANTS = {"pi": np.pi, "e": np.e}
_BINOPS = (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow)
_UNARY = (ast.UAdd, ast.USub)


def _check(node, variables):
    if isinstance(node, ast.Expression):
        return _check(node.body, variables)
    if isinstance(node, ast.BinOp) and isinstance(node.op, _BINOPS):
        _check(node.left, variables)
        _check(node.right, variables)
        return
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, _UNARY):
        return _check(node.operand, variables)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
            and not isinstance(node.value, bool):
        return
    if isinstance(node, ast.Name):
        if node.id in variables or node.id in CONSTANTS:
            return
        raise ConfigInvalid(f"unknown name '{node.id}' in expression", name=node.id)
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) \
            and node.func.id in FUNCTIONS and len(node.args) == 1 and not node.keywords:
        return _check(node.args[0], variables)
    raise ConfigInvalid(f"unsupported construct {type(node).__name__} in expression")


def compile_expr(text, variables=("x", "y", "n")):
    """Compile an expression string into a vectorized function of ``variables``."""
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        text = repr(float(text))
    if not isinstance(text, str) or not text.strip():
        raise ConfigInvalid("expression must be a non-empty string", expression=text)
    try:
        tree = ast.parse(text.replace("^", "**"), mode="eval")
    except SyntaxError as exc:
        raise ConfigInvalid(f"cannot parse expression {text!r}: {exc.msg}", expression=text) from None
    _check(tree, set(variables))
    code = compile(tree, "<expr>", "eval")
    scope = {"__builtins__": {}, **FUNCTIONS, **CONSTANTS}

    def fn(*args):
        local = dict(zip(variables, args))
        with np.errstate(all="ignore"):
            return np.asarray(eval(code, scope, local), dtype=float)

    fn.__name__ = f"expr[{text}]"
    return fn
