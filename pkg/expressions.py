"""Expression language for scalar fields: tokenizer, recursive-descent
parser, printer and forward-mode (dual number) evaluation.

Grammar (whitespace insignificant)::

    expr   := term (("+" | "-") term)*
    term   := factor (("*" | "/") factor)*
    factor := "-" factor | power
    power  := atom ("^" factor)?
    atom   := number | var | func "(" expr ("," expr)* ")" | "(" expr ")"
    var    := "x" integer
    func   := exp | log | sqrt | sin | cos | tanh | abs | max | min

`^` binds tighter than unary minus and is right-associative, so
``-x1^2`` is ``-(x1^2)`` and ``2^3^2`` is ``2^(3^2)``.
"""

import re
from dataclasses import dataclass
from typing import List, Tuple, Union

import numpy as np

from errors import ExpressionSyntaxError, UnknownIdentifier, VariableIndexOutOfRange

UNARY_FUNCS = ("exp", "log", "sqrt", "sin", "cos", "tanh", "abs")
VARIADIC_FUNCS = ("max", "min")
FUNCS = UNARY_FUNCS + VARIADIC_FUNCS


# ----------------------------------------------------------------------
# AST
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    index: int  # 1-based


@dataclass(frozen=True)
class Neg:
    operand: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * / ^
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    name: str
    args: Tuple["Node", ...]


Node = Union[Const, Var, Neg, BinOp, Call]


@dataclass(frozen=True)
class ExpressionAST:
    root: Node
    dim: int

    def variables(self) -> List[int]:
        found = set()

        def walk(node):
            if isinstance(node, Var):
                found.add(node.index)
            elif isinstance(node, Neg):
                walk(node.operand)
            elif isinstance(node, BinOp):
                walk(node.left)
                walk(node.right)
            elif isinstance(node, Call):
                for arg in node.args:
                    walk(arg)

        walk(self.root)
        return sorted(found)

    def __str__(self) -> str:
        return format_expression(self)


# ----------------------------------------------------------------------
# Tokenizer
# ----------------------------------------------------------------------
_TOKEN_RE = re.compile(
    r"\s*(?:"
    r"(?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),])"
    r")"
)


@dataclass(frozen=True)
class Token:
    kind: str  # number, ident, op, end
    text: str
    pos: int


def tokenize(text: str) -> List[Token]:
    tokens: List[Token] = []
    pos = 0
    length = len(text)
    while pos < length:
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN_RE.match(text, pos)
        if not m or m.lastgroup is None:
            raise ExpressionSyntaxError(f"Unexpected character {text[pos]!r}", pos)
        start = m.start(m.lastgroup)
        tokens.append(Token(m.lastgroup, m.group(m.lastgroup), start))
        pos = m.end()
    tokens.append(Token("end", "", length))
    return tokens


# ----------------------------------------------------------------------
# Parser
# ----------------------------------------------------------------------
class _Parser:
    def __init__(self, text: str, dim: int):
        self.tokens = tokenize(text)
        self.i = 0
        self.dim = dim

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def accept(self, text: str) -> bool:
        if self.tok.kind == "op" and self.tok.text == text:
            self.i += 1
            return True
        return False

    def expect(self, text: str):
        if not self.accept(text):
            found = self.tok.text or "end of input"
            raise ExpressionSyntaxError(f"Expected '{text}' but found '{found}'", self.tok.pos)

    def parse(self) -> Node:
        node = self.expr()
        if self.tok.kind != "end":
            raise ExpressionSyntaxError(f"Unexpected '{self.tok.text}'", self.tok.pos)
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.tok.text
            self.i += 1
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.factor()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.tok.text
            self.i += 1
            node = BinOp(op, node, self.factor())
        return node

    def factor(self) -> Node:
        if self.accept("-"):
            return Neg(self.factor())
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        if self.accept("^"):
            return BinOp("^", base, self.factor())
        return base

    def atom(self) -> Node:
        tok = self.tok
        if tok.kind == "number":
            self.i += 1
            return Const(float(tok.text))
        if tok.kind == "op" and tok.text == "(":
            self.i += 1
            node = self.expr()
            self.expect(")")
            return node
        if tok.kind == "ident":
            self.i += 1
            return self.identifier(tok)
        found = tok.text or "end of input"
        raise ExpressionSyntaxError(f"Unexpected '{found}'", tok.pos)

    def identifier(self, tok: Token) -> Node:
        name = tok.text
        var = re.fullmatch(r"x(\d+)", name)
        if var:
            index = int(var.group(1))
            if not (1 <= index <= self.dim):
                raise VariableIndexOutOfRange(f"Variable {name} outside x1..x{self.dim} at position {tok.pos}")
            return Var(index)
        if name not in FUNCS:
            raise UnknownIdentifier(name, tok.pos)
        self.expect("(")
        args = [self.expr()]
        while self.accept(","):
            args.append(self.expr())
        self.expect(")")
        if name in UNARY_FUNCS and len(args) != 1:
            raise ExpressionSyntaxError(f"{name}() takes exactly one argument, got {len(args)}", tok.pos)
        return Call(name, tuple(args))


def parse(text: str, dim: int) -> ExpressionAST:
    """Parse `text` into an ExpressionAST over x1..x{dim}.

    Raises:
        ExpressionSyntaxError: malformed text (carries the position)
        UnknownIdentifier: identifier that is not a function or variable
        VariableIndexOutOfRange: x_i with i outside [1, dim]
    """
    if dim < 1:
        raise ValueError(f"dimension must be >= 1, got {dim}")
    return ExpressionAST(_Parser(text, dim).parse(), dim)


# ----------------------------------------------------------------------
# Printer
# ----------------------------------------------------------------------
def _format_node(node: Node) -> str:
    if isinstance(node, Const):
        return repr(float(node.value))
    if isinstance(node, Var):
        return f"x{node.index}"
    if isinstance(node, Neg):
        return f"(-{_format_node(node.operand)})"
    if isinstance(node, BinOp):
        return f"({_format_node(node.left)} {node.op} {_format_node(node.right)})"
    if isinstance(node, Call):
        return f"{node.name}({', '.join(_format_node(a) for a in node.args)})"
    raise TypeError(f"not an expression node: {node!r}")


def format_expression(ast: Union[ExpressionAST, Node]) -> str:
    """Fully parenthesised text that parses back to an equal tree."""
    root = ast.root if isinstance(ast, ExpressionAST) else ast
    return _format_node(root)


# ----------------------------------------------------------------------
# Dual numbers
# ----------------------------------------------------------------------
@dataclass
class Dual:
    """Batched dual number: values (n,) and gradients (n, d)."""
    val: np.ndarray
    grad: np.ndarray

    @staticmethod
    def constant(c: float, n: int, d: int) -> "Dual":
        return Dual(np.full(n, float(c)), np.zeros((n, d)))

    def __add__(self, other: "Dual") -> "Dual":
        return Dual(self.val + other.val, self.grad + other.grad)

    def __sub__(self, other: "Dual") -> "Dual":
        return Dual(self.val - other.val, self.grad - other.grad)

    def __neg__(self) -> "Dual":
        return Dual(-self.val, -self.grad)

    def __mul__(self, other: "Dual") -> "Dual":
        return Dual(
            self.val * other.val,
            self.val[:, None] * other.grad + other.val[:, None] * self.grad,
        )

    def __truediv__(self, other: "Dual") -> "Dual":
        val = self.val / other.val
        grad = (self.grad - val[:, None] * other.grad) / other.val[:, None]
        return Dual(val, grad)

    def __pow__(self, other: "Dual") -> "Dual":
        val = np.power(self.val, other.val)
        grad = (other.val * np.power(self.val, other.val - 1.0))[:, None] * self.grad
        moving = np.any(other.grad != 0.0, axis=1)
        if np.any(moving):
            # d(u^v) also carries u^v log(u) dv where the exponent varies
            log_term = np.zeros_like(val)
            log_term[moving] = val[moving] * np.log(self.val[moving])
            grad = grad + log_term[:, None] * other.grad
        return Dual(val, grad)

    def apply(self, fn, dfn) -> "Dual":
        return Dual(fn(self.val), dfn(self.val)[:, None] * self.grad)


def _sech2(v):
    return 1.0 / np.cosh(v) ** 2


_UNARY_RULES = {
    "exp": (np.exp, np.exp),
    "log": (np.log, lambda v: 1.0 / v),
    "sqrt": (np.sqrt, lambda v: 0.5 / np.sqrt(v)),
    "sin": (np.sin, np.cos),
    "cos": (np.cos, lambda v: -np.sin(v)),
    "tanh": (np.tanh, _sech2),
    # sign(0) = 0 is the subgradient picked at the kink
    "abs": (np.abs, np.sign),
}


def _select(args: List[Dual], pick) -> Dual:
    """max/min: take value and gradient of the chosen argument.

    Ties go to the lowest argument index (argmax/argmin return the first).
    """
    vals = np.stack([a.val for a in args], axis=1)
    chosen = pick(vals, axis=1)
    rows = np.arange(vals.shape[0])
    grads = np.stack([a.grad for a in args], axis=1)
    return Dual(vals[rows, chosen], grads[rows, chosen])


def _eval_node(node: Node, x: np.ndarray) -> Dual:
    n, d = x.shape
    if isinstance(node, Const):
        return Dual.constant(node.value, n, d)
    if isinstance(node, Var):
        grad = np.zeros((n, d))
        grad[:, node.index - 1] = 1.0
        return Dual(x[:, node.index - 1].copy(), grad)
    if isinstance(node, Neg):
        return -_eval_node(node.operand, x)
    if isinstance(node, BinOp):
        left = _eval_node(node.left, x)
        right = _eval_node(node.right, x)
        if node.op == "+":
            return left + right
        if node.op == "-":
            return left - right
        if node.op == "*":
            return left * right
        if node.op == "/":
            return left / right
        return left ** right
    if isinstance(node, Call):
        args = [_eval_node(a, x) for a in node.args]
        if node.name == "max":
            return _select(args, np.argmax)
        if node.name == "min":
            return _select(args, np.argmin)
        fn, dfn = _UNARY_RULES[node.name]
        return args[0].apply(fn, dfn)
    raise TypeError(f"not an expression node: {node!r}")


def evaluate_dual(ast: ExpressionAST, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Values (n,) and forward-mode gradients (n, d) at the rows of x."""
    with np.errstate(all="ignore"):
        out = _eval_node(ast.root, np.asarray(x, dtype=float))
    return out.val, out.grad


def evaluate_value(ast: ExpressionAST, x: np.ndarray) -> np.ndarray:
    return evaluate_dual(ast, x)[0]
