"""Safe evaluation of scalar expressions in the coordinates x1 ... xn.

Grammar: numbers, identifiers ``x1 .. xn`` and ``pi``, binary ``+ - * /``,
unary ``+ -``, calls to ``sin``, ``cos``, ``exp``, and parentheses.
"""

import ast

import numpy as np

from .errors import ParseError

FUNCTIONS = {"sin": np.sin, "cos": np.cos, "exp": np.exp}
CONSTANTS = {"pi": np.pi}
_BINOPS = {ast.Add: np.add, ast.Sub: np.subtract, ast.Mult: np.multiply, ast.Div: np.divide}
_UNOPS = {ast.USub: np.negative, ast.UAdd: np.positive}


class Expression:
    """A parsed expression; call with points of shape (..., n)."""

    def __init__(self, text, n, path=None):
        self.text = str(text)
        self.n = n
        try:
            tree = ast.parse(self.text.strip(), mode="eval")
        except SyntaxError as exc:
            raise ParseError(f"bad expression {self.text!r}: {exc.msg}", 1, exc.offset, path) from None
        self._check(tree.body, path)
        self.tree = tree.body
        self.constant = not any(
            isinstance(t, ast.Name) and t.id not in CONSTANTS and t.id not in FUNCTIONS for t in ast.walk(tree)
        )

    def _fail(self, node, msg, path):
        raise ParseError(f"{msg} in {self.text!r}", 1, getattr(node, "col_offset", 0) + 1, path)

    def _check(self, node, path):
        if isinstance(node, ast.BinOp):
            if type(node.op) not in _BINOPS:
                self._fail(node, "unsupported operator", path)
            self._check(node.left, path)
            self._check(node.right, path)
        elif isinstance(node, ast.UnaryOp):
            if type(node.op) not in _UNOPS:
                self._fail(node, "unsupported unary operator", path)
            self._check(node.operand, path)
        elif isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in FUNCTIONS:
                self._fail(node, "unknown function", path)
            if len(node.args) != 1 or node.keywords:
                self._fail(node, "functions take one argument", path)
            self._check(node.args[0], path)
        elif isinstance(node, ast.Name):
            if node.id in CONSTANTS:
                return
            if not (node.id.startswith("x") and node.id[1:].isdigit() and 1 <= int(node.id[1:]) <= self.n):
                self._fail(node, f"unknown identifier {node.id!r}", path)
        elif isinstance(node, ast.Constant):
            if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
                self._fail(node, "only real numbers are allowed", path)
        else:
            self._fail(node, "unsupported syntax", path)

    def _eval(self, node, x):
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](self._eval(node.left, x), self._eval(node.right, x))
        if isinstance(node, ast.UnaryOp):
            return _UNOPS[type(node.op)](self._eval(node.operand, x))
        if isinstance(node, ast.Call):
            return FUNCTIONS[node.func.id](self._eval(node.args[0], x))
        if isinstance(node, ast.Name):
            if node.id in CONSTANTS:
                return CONSTANTS[node.id]
            return x[..., int(node.id[1:]) - 1]
        return float(node.value)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.asarray(self._eval(self.tree, x), dtype=float), x.shape[:-1]).copy()


def evaluate_constant(text, path=None):
    e = Expression(text, 0, path)
    return float(e(np.zeros((0,)))) if e.constant else e


def parse_expression(text, n, path=None):
    return Expression(text, n, path)
