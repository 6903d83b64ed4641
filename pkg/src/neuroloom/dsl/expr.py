"""Expression language used inside model descriptions.

Grammar (lowest to highest precedence)::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := atom ('^' unary)?          # right associative, -x^2 == -(x^2)
    atom    := NUMBER | IDENT | IDENT '(' args ')' | '(' expr ')'
    cond    := expr ('<' | '<=' | '>' | '>=' | '==') expr   # only as if()'s first argument
"""
import math
import re
from dataclasses import dataclass

import numpy as np

from ..errors import DslError

FUNCTIONS = {
    "sin": 1, "cos": 1, "tan": 1, "exp": 1, "log": 1, "sqrt": 1, "abs": 1,
    "tanh": 1, "pow": 2, "min": 2, "max": 2, "if": 3,
}
COMPARISONS = ("<=", ">=", "==", "<", ">")


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Ident:
    name: str


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * / ^
    left: object
    right: object


@dataclass(frozen=True)
class Neg:
    operand: object


@dataclass(frozen=True)
class Compare:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple


_TOKEN = re.compile(r"""
    \s*(?:
      (?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
    | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
    | (?P<op><=|>=|==|[-+*/^(),<>])
    )""", re.VERBOSE)


def tokenize(text):
    pos, out = 0, []
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise DslError(f"unexpected character {text[pos:].strip()[:1]!r} in expression {text!r}")
        kind = m.lastgroup
        out.append((kind, m.group(kind)))
        pos = m.end()
    out.append(("end", None))
    return out


class _Parser:
    def __init__(self, text):
        self.text = text
        self.toks = tokenize(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self, value=None):
        tok = self.toks[self.i]
        if value is not None and tok[1] != value:
            got = tok[1] if tok[1] is not None else "end of expression"
            raise DslError(f"expected {value!r}, got {got!r} in {self.text!r}")
        self.i += 1
        return tok

    def parse(self):
        node = self.expr()
        if self.peek()[0] != "end":
            raise DslError(f"unexpected {self.peek()[1]!r} in {self.text!r}")
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/"):
            op = self.take()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        if self.peek()[1] == "-":
            self.take()
            return Neg(self.unary())
        if self.peek()[1] == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        node = self.atom()
        if self.peek()[1] == "^":
            self.take()
            node = BinOp("^", node, self.unary())
        return node

    def cond(self):
        left = self.expr()
        op = self.peek()[1]
        if op not in COMPARISONS:
            raise DslError(f"if() needs a comparison as its first argument in {self.text!r}")
        self.take()
        return Compare(op, left, self.expr())

    def atom(self):
        kind, val = self.peek()
        if kind == "num":
            self.take()
            return Num(float(val))
        if kind == "ident":
            self.take()
            if self.peek()[1] != "(":
                return Ident(val)
            if val not in FUNCTIONS:
                raise DslError(f"unknown function {val!r} in {self.text!r}")
            self.take("(")
            args = [self.cond() if val == "if" else self.expr()]
            while self.peek()[1] == ",":
                self.take()
                args.append(self.expr())
            self.take(")")
            if len(args) != FUNCTIONS[val]:
                raise DslError(f"{val}() takes {FUNCTIONS[val]} arguments, got {len(args)}")
            if val == "pow":
                return BinOp("^", args[0], args[1])
            return Call(val, tuple(args))
        if val == "(":
            self.take()
            node = self.expr()
            self.take(")")
            return node
        if val in COMPARISONS:
            raise DslError(f"comparison {val!r} is only allowed as if()'s first argument")
        raise DslError(f"unexpected {val if val is not None else 'end of expression'!r} in {self.text!r}")


def parse_expr(text):
    """Parse expression text into an AST."""
    if not text or not text.strip():
        raise DslError("empty expression")
    return _Parser(text).parse()


def identifiers(node):
    """Set of identifier names referenced by ``node``."""
    out = set()
    stack = [node]
    while stack:
        n = stack.pop()
        if isinstance(n, Ident):
            out.add(n.name)
        elif isinstance(n, (BinOp, Compare)):
            stack += [n.left, n.right]
        elif isinstance(n, Neg):
            stack.append(n.operand)
        elif isinstance(n, Call):
            stack.extend(n.args)
    return out


def _fmt_num(v):
    r = repr(float(v))
    if r in ("inf", "-inf", "nan"):
        raise DslError(f"cannot print non-finite literal {r}")
    return r


def to_text(node):
    """Canonical, fully parenthesised text that parses back to ``node``."""
    if isinstance(node, Num):
        s = _fmt_num(node.value)
        return f"({s})" if s.startswith("-") else s
    if isinstance(node, Ident):
        return node.name
    if isinstance(node, Neg):
        return f"(-{to_text(node.operand)})"
    if isinstance(node, BinOp):
        return f"({to_text(node.left)} {node.op} {to_text(node.right)})"
    if isinstance(node, Compare):
        return f"{to_text(node.left)} {node.op} {to_text(node.right)}"
    if isinstance(node, Call):
        return f"{node.func}({', '.join(to_text(a) for a in node.args)})"
    raise TypeError(node)


# -- reference tree-walking interpreter ----------------------------------------

_UNARY = {
    "sin": np.sin, "cos": np.cos, "tan": np.tan, "exp": np.exp, "log": np.log,
    "sqrt": np.sqrt, "abs": np.abs, "tanh": np.tanh,
}
_BINARY = {
    "+": np.add, "-": np.subtract, "*": np.multiply, "/": np.true_divide,
    "^": np.power, "min": np.minimum, "max": np.maximum,
}
_CMP = {"<": np.less, "<=": np.less_equal, ">": np.greater, ">=": np.greater_equal,
        "==": np.equal}


def evaluate(node, env):
    """Evaluate ``node`` with IEEE semantics; ``env`` maps names to float64 values.

    Works elementwise on arrays. Intended as the slow reference path.
    """
    with np.errstate(all="ignore"):
        return _eval(node, env)


def _eval(node, env):
    if isinstance(node, Num):
        return np.float64(node.value)
    if isinstance(node, Ident):
        return env[node.name]
    if isinstance(node, Neg):
        return np.negative(_eval(node.operand, env))
    if isinstance(node, BinOp):
        return _BINARY[node.op](_eval(node.left, env), _eval(node.right, env))
    if isinstance(node, Compare):
        return _CMP[node.op](_eval(node.left, env), _eval(node.right, env)).astype(np.float64)
    if isinstance(node, Call):
        if node.func == "if":
            c, a, b = (_eval(x, env) for x in node.args)
            return np.where(c != 0.0, a, b)
        if node.func in _UNARY:
            return _UNARY[node.func](_eval(node.args[0], env))
        return _BINARY[node.func](_eval(node.args[0], env), _eval(node.args[1], env))
    raise TypeError(node)


def is_literal(node):
    """True when the subtree contains no identifiers."""
    return not identifiers(node)


def fold_constants(node):
    """Replace every identifier-free subtree by its value."""
    if isinstance(node, (Num, Ident)):
        return node
    if isinstance(node, Compare):
        return Compare(node.op, fold_constants(node.left), fold_constants(node.right))
    if is_literal(node):
        v = float(evaluate(node, {}))
        if math.isfinite(v):
            return Num(v)
    if isinstance(node, Neg):
        return Neg(fold_constants(node.operand))
    if isinstance(node, BinOp):
        return BinOp(node.op, fold_constants(node.left), fold_constants(node.right))
    if isinstance(node, Call):
        return Call(node.func, tuple(fold_constants(a) for a in node.args))
    raise TypeError(node)
