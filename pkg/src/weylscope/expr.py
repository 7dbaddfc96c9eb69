"""Expression trees for metric components, a tokenizer, a recursive-descent
parser, and a canonical renderer.

Grammar (lowest to highest precedence)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := ('-' | '+') unary | power
    power  := atom ('^' unary)?          # right associative, '**' accepted
    atom   := NUMBER | NAME | NAME '(' expr ')' | '(' expr ')'

``render`` emits the minimal parenthesisation that reparses to the same tree.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterator, Union

from .errors import ParseError

FUNCTIONS = ("exp", "log", "sqrt", "sin", "cos", "tan", "sinh", "cosh")
BUILTIN_CONSTANTS = {"pi": 3.141592653589793, "e": 2.718281828459045}


@dataclass(frozen=True)
class Num:
    value: float
    pos: tuple = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Sym:
    name: str
    pos: tuple = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Neg:
    arg: "Expr"
    pos: tuple = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"
    pos: tuple = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Expr"
    pos: tuple = field(default=None, compare=False, repr=False)


Expr = Union[Num, Sym, Neg, BinOp, Call]


# --------------------------------------------------------------------------
# tokenizer

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>\*\*|[-+*/^()\[\],=])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str  # 'num', 'name', 'op', 'end'
    text: str
    line: int
    col: int


def tokenize(text: str, line: int = 1, col0: int = 1) -> list[Token]:
    tokens = []
    i = 0
    while i < len(text):
        m = _TOKEN_RE.match(text, i)
        if m is None:
            raise ParseError(f"unexpected character {text[i]!r}", line, col0 + i)
        kind = m.lastgroup
        if kind != "ws":
            tok = m.group()
            if tok == "**":
                tok = "^"
            tokens.append(Token(kind, tok, line, col0 + i))
        i = m.end()
    tokens.append(Token("end", "", line, col0 + len(text)))
    return tokens


class TokenStream:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.i = 0

    def peek(self) -> Token:
        return self.tokens[self.i]

    def next(self) -> Token:
        tok = self.tokens[self.i]
        if tok.kind != "end":
            self.i += 1
        return tok

    def accept(self, text: str) -> bool:
        tok = self.peek()
        if tok.kind == "op" and tok.text == text:
            self.i += 1
            return True
        return False

    def expect(self, text: str) -> Token:
        tok = self.peek()
        if not (tok.kind == "op" and tok.text == text):
            shown = tok.text or "end of input"
            raise ParseError(f"expected {text!r}, found {shown!r}", tok.line, tok.col)
        return self.next()


# --------------------------------------------------------------------------
# parser


def parse_expr_tokens(ts: TokenStream) -> Expr:
    left = _parse_term(ts)
    while True:
        tok = ts.peek()
        if tok.kind == "op" and tok.text in ("+", "-"):
            ts.next()
            right = _parse_term(ts)
            left = BinOp(tok.text, left, right, pos=(tok.line, tok.col))
        else:
            return left


def _parse_term(ts):
    left = _parse_unary(ts)
    while True:
        tok = ts.peek()
        if tok.kind == "op" and tok.text in ("*", "/"):
            ts.next()
            right = _parse_unary(ts)
            left = BinOp(tok.text, left, right, pos=(tok.line, tok.col))
        else:
            return left


def _parse_unary(ts):
    tok = ts.peek()
    if tok.kind == "op" and tok.text == "-":
        ts.next()
        return Neg(_parse_unary(ts), pos=(tok.line, tok.col))
    if tok.kind == "op" and tok.text == "+":
        ts.next()
        return _parse_unary(ts)
    return _parse_power(ts)


def _parse_power(ts):
    base = _parse_atom(ts)
    tok = ts.peek()
    if tok.kind == "op" and tok.text == "^":
        ts.next()
        exponent = _parse_unary(ts)
        return BinOp("^", base, exponent, pos=(tok.line, tok.col))
    return base


def _parse_atom(ts):
    tok = ts.next()
    where = (tok.line, tok.col)
    if tok.kind == "num":
        return Num(float(tok.text), pos=where)
    if tok.kind == "name":
        if ts.accept("("):
            if tok.text not in FUNCTIONS:
                raise ParseError(f"unknown function {tok.text!r}", tok.line, tok.col)
            arg = parse_expr_tokens(ts)
            ts.expect(")")
            return Call(tok.text, arg, pos=where)
        return Sym(tok.text, pos=where)
    if tok.kind == "op" and tok.text == "(":
        inner = parse_expr_tokens(ts)
        ts.expect(")")
        return inner
    shown = tok.text or "end of input"
    raise ParseError(f"unexpected {shown!r}", tok.line, tok.col)


def parse_expr(text: str, line: int = 1, col0: int = 1) -> Expr:
    """Parse a complete expression; trailing tokens are an error."""
    ts = TokenStream(tokenize(text, line, col0))
    node = parse_expr_tokens(ts)
    tok = ts.peek()
    if tok.kind != "end":
        raise ParseError(f"unexpected {tok.text!r}", tok.line, tok.col)
    return node


# --------------------------------------------------------------------------
# rendering

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}


def _prec(node) -> int:
    if isinstance(node, BinOp):
        return _PREC[node.op]
    if isinstance(node, Neg):
        return 3
    if isinstance(node, Num) and node.value < 0:
        return 3
    return 5


def _fmt_num(v: float) -> str:
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def render(node: Expr) -> str:
    if isinstance(node, Num):
        return _fmt_num(node.value)
    if isinstance(node, Sym):
        return node.name
    if isinstance(node, Call):
        return f"{node.func}({render(node.arg)})"
    if isinstance(node, Neg):
        inner = render(node.arg)
        if _prec(node.arg) < 3:
            inner = f"({inner})"
        return "-" + inner
    if isinstance(node, BinOp):
        p = _PREC[node.op]
        left, right = render(node.left), render(node.right)
        if node.op == "^":
            if _prec(node.left) <= 4:
                left = f"({left})"
            if _prec(node.right) < 3:
                right = f"({right})"
            return f"{left}^{right}"
        if _prec(node.left) < p:
            left = f"({left})"
        if _prec(node.right) <= p:
            right = f"({right})"
        if p == 1:
            return f"{left} {node.op} {right}"
        return f"{left}*{right}" if node.op == "*" else f"{left}/{right}"
    raise TypeError(f"not an expression node: {node!r}")


def walk(node: Expr) -> Iterator[Expr]:
    yield node
    if isinstance(node, (Neg, Call)):
        yield from walk(node.arg)
    elif isinstance(node, BinOp):
        yield from walk(node.left)
        yield from walk(node.right)


def free_symbols(node: Expr) -> set[str]:
    return {n.name for n in walk(node) if isinstance(n, Sym)}


def first_position(node: Expr, name: str):
    for n in walk(node):
        if isinstance(n, Sym) and n.name == name:
            return n.pos
    return None
