"""A small arithmetic language for writing coefficients in configuration files.

Expressions are parsed by recursive descent into an immutable syntax tree and
evaluated with numpy, so every variable may be an array over paths.  Which
variables are legal depends on the slot the expression fills:

========  ==========================================
slot      variables
========  ==========================================
f         t, y1..yk, z11..zkd
g         t, y1..yk
terminal  W1..Wd, B1..Bl (values at the horizon T)
scalar    t
========  ==========================================

``z`` entries are written ``z<i><j>`` when both dimensions are below 10 and
``z<i>_<j>`` otherwise.
"""

import re
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .core import Dimensions
from .exceptions import IllegalVariable, ParseError

__all__ = [
    "Num",
    "Var",
    "Neg",
    "BinOp",
    "Call",
    "CoefficientExpression",
    "parse_expression",
    "parse_coefficient",
    "to_source",
    "variables",
    "compile_f",
    "compile_g",
    "compile_scalar",
    "compile_terminal",
    "SLOTS",
]

SLOTS = ("f", "g", "terminal", "scalar")

FUNCTIONS = {
    "sin": (1, np.sin),
    "cos": (1, np.cos),
    "exp": (1, np.exp),
    "sqrt": (1, np.sqrt),
    "abs": (1, np.abs),
    "min": (None, np.minimum),
    "max": (None, np.maximum),
}


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: object


@dataclass(frozen=True)
class BinOp:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Call:
    func: str
    args: Tuple


_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/(),]))"
)


def _tokenize(src):
    tokens = []
    pos = 0
    while pos < len(src):
        if src[pos:].strip() == "":
            break
        m = _TOKEN.match(src, pos)
        if m is None or m.end() == pos:
            col = pos + len(src[pos:]) - len(src[pos:].lstrip()) + 1
            raise ParseError(f"unexpected character {src[col - 1]!r}", 1, col)
        kind = m.lastgroup
        start = m.start(kind) + 1
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(src) + 1))
    return tokens


class _Parser:
    # expr  := term (("+" | "-") term)*
    # term  := unary (("*" | "/") unary)*
    # unary := "-" unary | atom
    # atom  := number | name | name "(" expr ("," expr)* ")" | "(" expr ")"

    def __init__(self, src):
        self.tokens = _tokenize(src)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, text, col = self.take()
        if kind != "op" or text != value:
            found = "end of input" if kind == "end" else repr(text)
            raise ParseError(f"expected {value!r}, found {found}", 1, col)

    def parse(self):
        node = self.expr()
        kind, text, col = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected {text!r}", 1, col)
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        if self.peek()[:2] == ("op", "-"):
            self.take()
            return Neg(self.unary())
        return self.atom()

    def atom(self):
        kind, text, col = self.take()
        if kind == "num":
            return Num(float(text))
        if kind == "name":
            if self.peek()[:2] == ("op", "("):
                return self.call(text, col)
            if text in FUNCTIONS:
                raise ParseError(f"function {text!r} needs arguments", 1, col)
            return Var(text)
        if (kind, text) == ("op", "("):
            node = self.expr()
            self.expect(")")
            return node
        found = "end of input" if kind == "end" else repr(text)
        raise ParseError(f"expected a number, variable or '(', found {found}", 1, col)

    def call(self, name, col):
        if name not in FUNCTIONS:
            raise ParseError(f"unknown function {name!r}", 1, col)
        self.take()
        args = [self.expr()]
        while self.peek()[:2] == ("op", ","):
            self.take()
            args.append(self.expr())
        self.expect(")")
        arity = FUNCTIONS[name][0]
        if arity is not None and len(args) != arity:
            raise ParseError(f"{name} takes {arity} argument(s), got {len(args)}", 1, col)
        if arity is None and len(args) < 2:
            raise ParseError(f"{name} takes at least 2 arguments", 1, col)
        return Call(name, tuple(args))


def parse_expression(source):
    """Parse ``source`` into a syntax tree without any slot check."""
    if not isinstance(source, str):
        source = repr(float(source)) if isinstance(source, (int, float)) else str(source)
    if not source.strip():
        raise ParseError("empty expression", 1, 1)
    return _Parser(source).parse()


def to_source(node):
    """Print a tree so that :func:`parse_expression` gives the same tree back."""
    if isinstance(node, Num):
        return repr(float(node.value))
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        return "-" + to_source(node.operand)
    if isinstance(node, BinOp):
        return f"({to_source(node.left)} {node.op} {to_source(node.right)})"
    if isinstance(node, Call):
        return f"{node.func}({', '.join(to_source(a) for a in node.args)})"
    raise TypeError(f"not an expression node: {node!r}")


def variables(node):
    """Names of every variable in the tree, in first-occurrence order."""
    out = []

    def walk(n):
        if isinstance(n, Var):
            if n.name not in out:
                out.append(n.name)
        elif isinstance(n, Neg):
            walk(n.operand)
        elif isinstance(n, BinOp):
            walk(n.left)
            walk(n.right)
        elif isinstance(n, Call):
            for a in n.args:
                walk(a)

    walk(node)
    return out


def _slot_variables(slot, dims):
    names = {"t"}
    if slot in ("f", "g"):
        names |= {f"y{i}" for i in range(1, dims.k + 1)}
    if slot == "f":
        for i in range(1, dims.k + 1):
            for j in range(1, dims.d + 1):
                names.add(f"z{i}_{j}")
                if dims.k < 10 and dims.d < 10:
                    names.add(f"z{i}{j}")
    if slot == "terminal":
        names = {f"W{j}" for j in range(1, dims.d + 1)} | {f"B{j}" for j in range(1, dims.l + 1)}
    return names


def _column_of(source, name):
    m = re.search(rf"(?<![A-Za-z0-9_]){re.escape(name)}(?![A-Za-z0-9_])", source)
    return m.start() + 1 if m else 1


@dataclass(frozen=True)
class CoefficientExpression:
    """A parsed expression tied to a slot and the dimensions it was checked against."""

    source: str
    tree: object
    slot: str
    dims: Dimensions

    def __str__(self):
        return to_source(self.tree)

    def evaluate(self, **env):
        """Evaluate with numpy broadcasting; missing variables raise ``KeyError``."""
        with np.errstate(all="ignore"):
            return _eval(self.tree, env)


def parse_coefficient(source, dims=None, slot="f"):
    """Parse ``source`` for ``slot`` and reject variables the slot may not use.

    ``z`` in a ``g`` slot raises :class:`IllegalVariable`, as does any
    out-of-range index or unknown name.
    """
    if slot not in SLOTS:
        raise ValueError(f"slot must be one of {SLOTS}")
    dims = dims or Dimensions()
    text = source if isinstance(source, str) else repr(float(source))
    tree = parse_expression(text)
    allowed = _slot_variables(slot, dims)
    for name in variables(tree):
        if name in allowed:
            continue
        col = _column_of(text, name)
        if slot == "g" and name.startswith("z"):
            raise IllegalVariable(f"g may not depend on z, found {name!r}", 1, col)
        raise IllegalVariable(f"variable {name!r} is not available in a {slot} slot", 1, col)
    return CoefficientExpression(text, tree, slot, dims)


def _eval(node, env):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        return env[node.name]
    if isinstance(node, Neg):
        return -_eval(node.operand, env)
    if isinstance(node, BinOp):
        a, b = _eval(node.left, env), _eval(node.right, env)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        return np.divide(a, b)
    if isinstance(node, Call):
        func = FUNCTIONS[node.func][1]
        args = [_eval(a, env) for a in node.args]
        if len(args) == 1:
            return func(args[0])
        out = args[0]
        for a in args[1:]:
            out = func(out, a)
        return out
    raise TypeError(f"not an expression node: {node!r}")


def _state_env(t, y, z=None):
    env = {"t": t}
    k = y.shape[1]
    for i in range(k):
        env[f"y{i + 1}"] = y[:, i]
    if z is not None:
        d = z.shape[2]
        for i in range(k):
            for j in range(d):
                env[f"z{i + 1}_{j + 1}"] = z[:, i, j]
                if k < 10 and d < 10:
                    env[f"z{i + 1}{j + 1}"] = z[:, i, j]
    return env


def _column(value, n):
    return np.broadcast_to(np.asarray(value, dtype=float), (n,))


def compile_f(sources, dims):
    """Build ``f(t, y, z) -> (n, k)`` from ``k`` component expressions."""
    exprs = [parse_coefficient(s, dims, "f") for s in _as_list(sources, dims.k, "f")]

    def f(t, y, z):
        env = _state_env(t, y, z)
        return np.stack([_column(e.evaluate(**env), y.shape[0]) for e in exprs], axis=1)

    f.expressions = exprs
    return f


def compile_g(sources, dims):
    """Build ``g(t, y) -> (n, k, l)`` from a ``k x l`` nested list (or ``k`` strings when ``l = 1``)."""
    rows = _as_list(sources, dims.k, "g")
    table = []
    for i, row in enumerate(rows):
        if dims.l == 1 and not isinstance(row, (list, tuple)):
            row = [row]
        row = _as_list(row, dims.l, f"g[{i}]")
        table.append([parse_coefficient(s, dims, "g") for s in row])

    def g(t, y):
        env = _state_env(t, y)
        n = y.shape[0]
        return np.stack([np.stack([_column(e.evaluate(**env), n) for e in row], axis=1) for row in table], axis=1)

    g.expressions = table
    return g


def compile_scalar(source):
    """Build a scalar function of ``t`` (Lipschitz weights, backward features, Gronwall data)."""
    expr = parse_coefficient(source, Dimensions(), "scalar")

    def h(t):
        return float(expr.evaluate(t=float(t)))

    h.expression = expr
    return h


def compile_terminal(sources, dims):
    """Build ``bundle -> (n, k)`` from expressions in ``W1..Wd`` and ``B1..Bl`` at the horizon."""
    exprs = [parse_coefficient(s, dims, "terminal") for s in _as_list(sources, dims.k, "xi")]

    def evaluator(bundle):
        env = {f"W{j + 1}": bundle.W_T[:, j] for j in range(bundle.d)}
        env.update({f"B{j + 1}": bundle.B_T[:, j] for j in range(bundle.l)})
        return np.stack([_column(e.evaluate(**env), bundle.n_paths) for e in exprs], axis=1)

    evaluator.expressions = exprs
    return evaluator


def _as_list(sources, size, name):
    if isinstance(sources, (str, int, float)):
        sources = [sources]
    sources = list(sources)
    if len(sources) != size:
        raise ValueError(f"{name} needs {size} entr{'y' if size == 1 else 'ies'}, got {len(sources)}")
    return sources
