"""Recursive-descent parser for obstacle expressions.

Grammar (highest precedence last)::

    expr    := term (("+" | "-") term)*
    term    := unary (("*" | "/") unary)*
    unary   := "-" unary | power
    power   := primary ("^" unary)?          # right associative
    primary := NUMBER | NAME | NAME "(" expr ("," expr)* ")" | "(" expr ")"

``-x^2`` parses as ``-(x^2)`` and ``2^-1`` as ``2^(-1)``.  Names are the
coordinates x, y, x1, y1, x2, y2, r, t, m and the constant pi; functions are
sin, cos, exp, log, sqrt (one argument), pospart (one argument, ``max(a, 0)``)
and max (two arguments).
"""
from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

COORDINATES = ("x", "y", "x1", "y1", "x2", "y2", "r", "t", "m")
CONSTANTS = {"pi": np.pi}
FUNCTIONS = {"sin": 1, "cos": 1, "exp": 1, "log": 1, "sqrt": 1, "pospart": 1, "max": 2}


class ExprError(ValueError):
    pass


class ExprSyntaxError(ExprError):
    def __init__(self, message, offset):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class UnknownIdentifierError(ExprError):
    def __init__(self, name, offset):
        super().__init__(f"unknown identifier {name!r} at offset {offset}")
        self.name = name
        self.offset = offset


class ExprDomainError(ExprError):
    def __init__(self, message, node):
        super().__init__(f"{message} at node {node}")
        self.node = node


_TOKEN = re.compile(r"\s*(?:(\d+\.?\d*(?:[eE][-+]?\d+)?|\.\d+(?:[eE][-+]?\d+)?)|([A-Za-z_]\w*)|(.))")


@dataclass(frozen=True)
class Tok:
    kind: str  # "num", "name", "op", "end"
    text: str
    offset: int


def tokenize(text: str) -> list[Tok]:
    toks = []
    pos = 0
    while pos < len(text):
        mt = _TOKEN.match(text, pos)
        if mt is None or mt.end() == pos:
            break
        num, name, op = mt.groups()
        start = mt.start(mt.lastindex)
        if num is not None:
            toks.append(Tok("num", num, start))
        elif name is not None:
            toks.append(Tok("name", name, start))
        elif op is not None:
            if op not in "+-*/^(),":
                raise ExprSyntaxError(f"unexpected character {op!r}", start)
            toks.append(Tok("op", op, start))
        pos = mt.end()
    toks.append(Tok("end", "", len(text)))
    return toks


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: object


@dataclass(frozen=True)
class BinOp:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple


@dataclass(frozen=True)
class ObstacleExpr:
    text: str
    tree: object

    @property
    def variables(self) -> set:
        out = set()

        def walk(node):
            if isinstance(node, Var):
                if node.name not in CONSTANTS:
                    out.add(node.name)
            elif isinstance(node, Neg):
                walk(node.arg)
            elif isinstance(node, BinOp):
                walk(node.left)
                walk(node.right)
            elif isinstance(node, Call):
                for a in node.args:
                    walk(a)
        walk(self.tree)
        return out

    def evaluate(self, env: dict):
        """Evaluate on scalar or array coordinates given in ``env``."""
        missing = self.variables - set(env)
        if missing:
            raise ExprError(f"coordinate(s) {sorted(missing)} not available")
        with np.errstate(all="ignore"):
            out = _eval(self.tree, env)
        shape = np.broadcast(*[np.asarray(v) for v in env.values()]).shape if env else ()
        out = np.broadcast_to(np.asarray(out, dtype=float), shape)
        bad = ~np.isfinite(out)
        if np.any(bad):
            raise ExprDomainError("non-finite value", _node(bad))
        return out if out.shape else float(out)


def _node(mask):
    idx = np.argwhere(np.atleast_1d(mask))[0]
    return tuple(int(i) for i in idx)


def _check(mask, what):
    if np.any(mask):
        raise ExprDomainError(what, _node(mask))


def _eval(node, env):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        return CONSTANTS[node.name] if node.name in CONSTANTS else np.asarray(env[node.name], float)
    if isinstance(node, Neg):
        return -_eval(node.arg, env)
    if isinstance(node, BinOp):
        a, b = _eval(node.left, env), _eval(node.right, env)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        if node.op == "/":
            _check(np.asarray(b) == 0, "division by zero")
            return a / b
        out = np.power(a, b)
        _check(np.isnan(out) & ~np.isnan(a + b), "invalid power")
        return out
    f = node.func
    args = [_eval(a, env) for a in node.args]
    if f == "log":
        _check(np.asarray(args[0]) <= 0, "log of non-positive value")
        return np.log(args[0])
    if f == "sqrt":
        _check(np.asarray(args[0]) < 0, "sqrt of negative value")
        return np.sqrt(args[0])
    if f == "pospart":
        return np.maximum(args[0], 0.0)
    if f == "max":
        return np.maximum(args[0], args[1])
    return getattr(np, f)(args[0])


class _Parser:
    def __init__(self, text):
        self.text = text
        self.toks = tokenize(text)
        self.i = 0

    @property
    def tok(self):
        return self.toks[self.i]

    def take(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, text):
        t = self.tok
        if t.kind != "op" or t.text != text:
            found = "end of input" if t.kind == "end" else repr(t.text)
            raise ExprSyntaxError(f"expected {text!r}, found {found}", t.offset)
        return self.take()

    def parse(self):
        node = self.expr()
        if self.tok.kind != "end":
            raise ExprSyntaxError(f"unexpected {self.tok.text!r}", self.tok.offset)
        return node

    def expr(self):
        node = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.take().text
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.take().text
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        if self.tok.kind == "op" and self.tok.text == "-":
            self.take()
            return Neg(self.unary())
        return self.power()

    def power(self):
        base = self.primary()
        if self.tok.kind == "op" and self.tok.text == "^":
            self.take()
            return BinOp("^", base, self.unary())
        return base

    def primary(self):
        t = self.tok
        if t.kind == "num":
            self.take()
            return Num(float(t.text))
        if t.kind == "name":
            self.take()
            if t.text in FUNCTIONS:
                self.expect("(")
                args = [self.expr()]
                while self.tok.kind == "op" and self.tok.text == ",":
                    self.take()
                    args.append(self.expr())
                close = self.expect(")")
                if len(args) != FUNCTIONS[t.text]:
                    raise ExprSyntaxError(
                        f"{t.text} takes {FUNCTIONS[t.text]} argument(s), got {len(args)}",
                        close.offset)
                return Call(t.text, tuple(args))
            if t.text in COORDINATES or t.text in CONSTANTS:
                return Var(t.text)
            raise UnknownIdentifierError(t.text, t.offset)
        if t.kind == "op" and t.text == "(":
            self.take()
            node = self.expr()
            self.expect(")")
            return node
        found = "end of input" if t.kind == "end" else repr(t.text)
        raise ExprSyntaxError(f"unexpected {found}", t.offset)


def parse_obstacle_expr(text: str) -> ObstacleExpr:
    """Parse ``text`` into an expression tree; raises ExprSyntaxError/UnknownIdentifierError."""
    return ObstacleExpr(text, _Parser(text).parse())
