"""Safe evaluation of small closed-form expressions from config files.

Expressions are plain arithmetic over a fixed set of variables
(``x``, ``y``, ``z``, ``theta``), the functions ``sin``, ``cos``, ``exp``,
``sqrt``, and the constant ``pi``.  They are parsed with :mod:`ast` and
evaluated by walking the tree, so no arbitrary code can run.
"""

import ast
import math

_FUNCTIONS = {
    "sin": math.sin,
    "cos": math.cos,
    "exp": math.exp,
    "sqrt": math.sqrt,
}

_CONSTANTS = {"pi": math.pi}

_VARIABLES = ("x", "y", "z", "theta")

_ALLOWED_BINOPS = {
    ast.Add: lambda a, b: a + b,
    ast.Sub: lambda a, b: a - b,
    ast.Mult: lambda a, b: a * b,
    ast.Div: lambda a, b: a / b,
    ast.Pow: lambda a, b: a ** b,
}

_ALLOWED_UNARY = {
    ast.UAdd: lambda a: a,
    ast.USub: lambda a: -a,
}


class Expression:
    """A compiled scalar expression over chart coordinates.

    Parameters
    ----------
    source : str
        Expression text, e.g. ``"1 + 0.5*cos(theta)"``.

    Calling the compiled object with keyword arguments for the variables it
    uses returns a float.  Unknown identifiers raise ``ValueError`` at
    construction time.
    """

    def __init__(self, source: str):
        self.source = source
        try:
            tree = ast.parse(source, mode="eval")
        except SyntaxError as exc:
            raise ValueError(f"cannot parse expression {source!r}: {exc}") from exc
        self._validate(tree.body)
        self._tree = tree.body

    def _validate(self, node) -> None:
        if isinstance(node, ast.Constant):
            if not isinstance(node.value, (int, float)):
                raise ValueError(f"non-numeric constant in {self.source!r}")
        elif isinstance(node, ast.Name):
            if node.id not in _VARIABLES and node.id not in _CONSTANTS:
                raise ValueError(f"unknown identifier {node.id!r} in {self.source!r}")
        elif isinstance(node, ast.BinOp):
            if type(node.op) not in _ALLOWED_BINOPS:
                raise ValueError(f"operator not allowed in {self.source!r}")
            self._validate(node.left)
            self._validate(node.right)
        elif isinstance(node, ast.UnaryOp):
            if type(node.op) not in _ALLOWED_UNARY:
                raise ValueError(f"operator not allowed in {self.source!r}")
            self._validate(node.operand)
        elif isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCTIONS:
                raise ValueError(f"function not allowed in {self.source!r}")
            if node.keywords or len(node.args) != 1:
                raise ValueError(f"functions take one positional argument in {self.source!r}")
            self._validate(node.args[0])
        else:
            raise ValueError(f"unsupported syntax in {self.source!r}")

    def _eval(self, node, env) -> float:
        if isinstance(node, ast.Constant):
            return float(node.value)
        if isinstance(node, ast.Name):
            if node.id in env:
                return env[node.id]
            if node.id in _CONSTANTS:
                return _CONSTANTS[node.id]
            raise ValueError(f"variable {node.id!r} not supplied for {self.source!r}")
        if isinstance(node, ast.BinOp):
            return _ALLOWED_BINOPS[type(node.op)](
                self._eval(node.left, env), self._eval(node.right, env)
            )
        if isinstance(node, ast.UnaryOp):
            return _ALLOWED_UNARY[type(node.op)](self._eval(node.operand, env))
        if isinstance(node, ast.Call):
            return _FUNCTIONS[node.func.id](self._eval(node.args[0], env))
        raise ValueError(f"unsupported syntax in {self.source!r}")

    def __call__(self, **variables: float) -> float:
        return float(self._eval(self._tree, variables))

    def __repr__(self) -> str:
        return f"Expression({self.source!r})"


def coordinate_env(point) -> dict:
    """Map a chart point to the expression variable environment.

    1D charts expose the coordinate as both ``x`` and ``theta``; 2D charts
    expose ``x, y``; 3D (embedded) charts expose ``x, y, z``.
    """
    p = [float(c) for c in point]
    if len(p) == 1:
        return {"x": p[0], "theta": p[0]}
    if len(p) == 2:
        return {"x": p[0], "y": p[1]}
    if len(p) == 3:
        return {"x": p[0], "y": p[1], "z": p[2]}
    raise ValueError(f"unsupported chart dimension {len(p)}")
