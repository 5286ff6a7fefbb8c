"""Expression trees over real-valued symbols.

The nodes form a small closed language: constants, symbols, unary negation,
the binary operators ``+ - * / ^`` and the function set
{sin, cos, tan, exp, ln, sqrt, abs}.  Differentiation, simplification,
substitution and printing all stay inside this language, so derivatives of
any order can be taken and re-evaluated exactly.

Two evaluation routes exist: :func:`evaluate` is a plain tree interpreter
with typed domain errors, and :func:`compile_exprs` turns a batch of
expressions into one generated Python function (shared subexpressions are
computed once) for grid-heavy work.  Both agree to rounding.
"""

from __future__ import annotations

import itertools
import math
import re
from typing import Callable, Mapping, Sequence

from .errors import (
    ArityError,
    DomainError,
    LexError,
    ParseError,
    UnboundSymbolError,
)

__all__ = [
    "Expr",
    "Constant",
    "Symbol",
    "Neg",
    "Add",
    "Sub",
    "Mul",
    "Div",
    "Pow",
    "Call",
    "FUNCTIONS",
    "parse",
    "evaluate",
    "diff",
    "simplify",
    "substitute",
    "free_symbols",
    "to_string",
    "compile_exprs",
]

FUNCTIONS = ("sin", "cos", "tan", "exp", "ln", "sqrt", "abs")

_MATH = {
    "sin": math.sin,
    "cos": math.cos,
    "tan": math.tan,
    "exp": math.exp,
    "ln": math.log,
    "sqrt": math.sqrt,
    "abs": abs,
}


# ---------------------------------------------------------------------------
# Node types
# ---------------------------------------------------------------------------


class Expr:
    """Immutable expression node.  Trees are built with the overloaded
    arithmetic operators or by :func:`parse`."""

    __slots__ = ("_hash",)

    def __hash__(self) -> int:
        return self._hash

    def __eq__(self, other: object) -> bool:
        if self is other:
            return True
        if type(self) is not type(other) or self._hash != other._hash:
            return False
        return self._fields() == other._fields()  # type: ignore[attr-defined]

    def __add__(self, other):
        return Add(self, _coerce(other))

    def __radd__(self, other):
        return Add(_coerce(other), self)

    def __sub__(self, other):
        return Sub(self, _coerce(other))

    def __rsub__(self, other):
        return Sub(_coerce(other), self)

    def __mul__(self, other):
        return Mul(self, _coerce(other))

    def __rmul__(self, other):
        return Mul(_coerce(other), self)

    def __truediv__(self, other):
        return Div(self, _coerce(other))

    def __rtruediv__(self, other):
        return Div(_coerce(other), self)

    def __pow__(self, other):
        return Pow(self, _coerce(other))

    def __rpow__(self, other):
        return Pow(_coerce(other), self)

    def __neg__(self):
        return Neg(self)

    def __str__(self) -> str:
        return to_string(self)

    def __repr__(self) -> str:
        return f"<{type(self).__name__} {to_string(self)}>"


class Constant(Expr):
    __slots__ = ("value",)

    def __init__(self, value: float) -> None:
        self.value = float(value)
        self._hash = hash(("c", self.value))

    def _fields(self):
        return (self.value,)


class Symbol(Expr):
    __slots__ = ("name",)

    def __init__(self, name: str) -> None:
        self.name = name
        self._hash = hash(("s", name))

    def _fields(self):
        return (self.name,)


class Neg(Expr):
    __slots__ = ("child",)

    def __init__(self, child: Expr) -> None:
        self.child = child
        self._hash = hash(("-", child._hash))

    def _fields(self):
        return (self.child,)


class _BinOp(Expr):
    __slots__ = ("left", "right")
    op = "?"

    def __init__(self, left: Expr, right: Expr) -> None:
        self.left = left
        self.right = right
        self._hash = hash((self.op, left._hash, right._hash))

    def _fields(self):
        return (self.left, self.right)


class Add(_BinOp):
    __slots__ = ()
    op = "+"


class Sub(_BinOp):
    __slots__ = ()
    op = "-"


class Mul(_BinOp):
    __slots__ = ()
    op = "*"


class Div(_BinOp):
    __slots__ = ()
    op = "/"


class Pow(_BinOp):
    __slots__ = ()
    op = "^"


class Call(Expr):
    __slots__ = ("fn", "arg")

    def __init__(self, fn: str, arg: Expr) -> None:
        if fn not in FUNCTIONS:
            raise ValueError(f"unknown function {fn!r}")
        self.fn = fn
        self.arg = arg
        self._hash = hash((fn, arg._hash))

    def _fields(self):
        return (self.fn, self.arg)


def _coerce(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, (int, float)):
        return Constant(x)
    raise TypeError(f"cannot use {type(x).__name__} as an expression")


_ZERO = Constant(0.0)
_ONE = Constant(1.0)
_TWO = Constant(2.0)


# ---------------------------------------------------------------------------
# Folding constructors (used by diff / simplify / substitute)
# ---------------------------------------------------------------------------


def _is_const(e: Expr, value: float | None = None) -> bool:
    if type(e) is not Constant:
        return False
    return value is None or e.value == value


def _neg(a: Expr) -> Expr:
    if type(a) is Constant:
        return Constant(-a.value)
    if type(a) is Neg:
        return a.child
    return Neg(a)


def _add(a: Expr, b: Expr) -> Expr:
    if type(a) is Constant and type(b) is Constant:
        v = a.value + b.value
        if math.isfinite(v):
            return Constant(v)
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    return Add(a, b)


def _sub(a: Expr, b: Expr) -> Expr:
    if type(a) is Constant and type(b) is Constant:
        v = a.value - b.value
        if math.isfinite(v):
            return Constant(v)
    if _is_const(b, 0.0):
        return a
    if _is_const(a, 0.0):
        return _neg(b)
    return Sub(a, b)


def _mul(a: Expr, b: Expr) -> Expr:
    if type(a) is Constant and type(b) is Constant:
        v = a.value * b.value
        if math.isfinite(v):
            return Constant(v)
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return _ZERO
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    return Mul(a, b)


def _div(a: Expr, b: Expr) -> Expr:
    if type(a) is Constant and type(b) is Constant and b.value != 0.0:
        v = a.value / b.value
        if math.isfinite(v):
            return Constant(v)
    if _is_const(b, 1.0):
        return a
    if _is_const(a, 0.0) and not _is_const(b, 0.0):
        return _ZERO
    return Div(a, b)


def _pow(a: Expr, b: Expr) -> Expr:
    if _is_const(b, 1.0):
        return a
    if _is_const(b, 0.0):
        # x^0 -> 1 assumes x != 0; recorded here once rather than per use.
        return _ONE
    if type(a) is Constant and type(b) is Constant:
        try:
            v = math.pow(a.value, b.value)
        except (ValueError, OverflowError):
            return Pow(a, b)
        if math.isfinite(v):
            return Constant(v)
    return Pow(a, b)


def _call(fn: str, a: Expr) -> Expr:
    if type(a) is Constant:
        try:
            v = _MATH[fn](a.value)
        except (ValueError, OverflowError):
            return Call(fn, a)
        if math.isfinite(v):
            return Constant(v)
    return Call(fn, a)


# ---------------------------------------------------------------------------
# Structure queries
# ---------------------------------------------------------------------------


def free_symbols(e: Expr) -> frozenset[str]:
    """Names of all symbols occurring in the expression."""
    out: set[str] = set()
    stack = [e]
    while stack:
        n = stack.pop()
        t = type(n)
        if t is Symbol:
            out.add(n.name)
        elif t is Neg:
            stack.append(n.child)
        elif t is Call:
            stack.append(n.arg)
        elif t is not Constant:
            stack.append(n.left)
            stack.append(n.right)
    return frozenset(out)


def substitute(e: Expr, bindings: Mapping[str, Expr | float]) -> Expr:
    """Replace symbols by expressions or numbers, folding what folds."""
    repl = {k: _coerce(v) for k, v in bindings.items()}

    def walk(n: Expr, memo: dict[int, Expr]) -> Expr:
        got = memo.get(id(n))
        if got is not None:
            return got
        t = type(n)
        if t is Constant:
            out = n
        elif t is Symbol:
            out = repl.get(n.name, n)
        elif t is Neg:
            out = _neg(walk(n.child, memo))
        elif t is Call:
            out = _call(n.fn, walk(n.arg, memo))
        else:
            left = walk(n.left, memo)
            right = walk(n.right, memo)
            out = _FOLDERS[t](left, right)
        memo[id(n)] = out
        return out

    return walk(e, {})


_FOLDERS = {Add: _add, Sub: _sub, Mul: _mul, Div: _div, Pow: _pow}


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def evaluate(e: Expr, bindings: Mapping[str, float] | None = None) -> float:
    """Evaluate to an IEEE double.

    Every free symbol must be bound (:class:`UnboundSymbolError` otherwise);
    leaving the mathematical domain raises :class:`DomainError` rather than
    returning NaN or infinity.
    """
    return _ev(e, bindings or {}, {})


def _ev(e: Expr, b: Mapping[str, float], memo: dict[int, float]) -> float:
    got = memo.get(id(e))
    if got is not None:
        return got
    t = type(e)
    if t is Constant:
        v = e.value
    elif t is Symbol:
        try:
            v = float(b[e.name])
        except KeyError:
            raise UnboundSymbolError(f"unbound symbol '{e.name}'") from None
    elif t is Neg:
        v = -_ev(e.child, b, memo)
    elif t is Add:
        v = _ev(e.left, b, memo) + _ev(e.right, b, memo)
    elif t is Sub:
        v = _ev(e.left, b, memo) - _ev(e.right, b, memo)
    elif t is Mul:
        v = _ev(e.left, b, memo) * _ev(e.right, b, memo)
    elif t is Div:
        den = _ev(e.right, b, memo)
        if den == 0.0:
            raise DomainError("division by zero")
        v = _ev(e.left, b, memo) / den
    elif t is Pow:
        base = _ev(e.left, b, memo)
        expo = _ev(e.right, b, memo)
        try:
            v = math.pow(base, expo)
        except ValueError:
            raise DomainError(f"invalid power {base!r} ^ {expo!r}") from None
        except OverflowError:
            raise DomainError("overflow in '^'") from None
    else:  # Call
        x = _ev(e.arg, b, memo)
        fn = e.fn
        if fn == "ln" and x <= 0.0:
            raise DomainError(f"ln of non-positive value {x!r}")
        if fn == "sqrt" and x < 0.0:
            raise DomainError(f"sqrt of negative value {x!r}")
        try:
            v = _MATH[fn](x)
        except (ValueError, OverflowError) as exc:
            raise DomainError(f"{fn}: {exc}") from None
    if not math.isfinite(v):
        raise DomainError(f"non-finite value in '{_TAGS.get(t, '?')}'")
    memo[id(e)] = v
    return v


_TAGS = {
    Constant: "const",
    Symbol: "symbol",
    Neg: "-",
    Add: "+",
    Sub: "-",
    Mul: "*",
    Div: "/",
    Pow: "^",
    Call: "call",
}


# ---------------------------------------------------------------------------
# Differentiation
# ---------------------------------------------------------------------------


def diff(e: Expr, name: str) -> Expr:
    """Exact symbolic derivative with respect to ``name``.

    The result stays inside the node language, so nested application is
    valid to any order.  ``a^b`` with a non-constant exponent is rewritten
    through ``exp(b*ln(a))`` before differentiating; ``abs`` differentiates
    to its sign (whose evaluation at 0 is a domain violation).
    """
    return _d(e, name, {})


def _d(e: Expr, s: str, memo: dict[int, Expr]) -> Expr:
    got = memo.get(id(e))
    if got is not None:
        return got
    t = type(e)
    if t is Constant:
        out = _ZERO
    elif t is Symbol:
        out = _ONE if e.name == s else _ZERO
    elif t is Neg:
        out = _neg(_d(e.child, s, memo))
    elif t is Add:
        out = _add(_d(e.left, s, memo), _d(e.right, s, memo))
    elif t is Sub:
        out = _sub(_d(e.left, s, memo), _d(e.right, s, memo))
    elif t is Mul:
        out = _add(
            _mul(_d(e.left, s, memo), e.right),
            _mul(e.left, _d(e.right, s, memo)),
        )
    elif t is Div:
        out = _div(
            _sub(
                _mul(_d(e.left, s, memo), e.right),
                _mul(e.left, _d(e.right, s, memo)),
            ),
            _pow(e.right, _TWO),
        )
    elif t is Pow:
        base, expo = e.left, e.right
        if not free_symbols(expo):
            k = evaluate(expo, {})
            out = _mul(
                _mul(Constant(k), _pow(base, Constant(k - 1.0))),
                _d(base, s, memo),
            )
        else:
            # a^b = exp(b ln a):  d = a^b * (b' ln a + b a'/a)
            out = _mul(
                e,
                _add(
                    _mul(_d(expo, s, memo), Call("ln", base)),
                    _div(_mul(expo, _d(base, s, memo)), base),
                ),
            )
    else:  # Call
        x = e.arg
        dx = _d(x, s, memo)
        fn = e.fn
        if fn == "sin":
            out = _mul(_call("cos", x), dx)
        elif fn == "cos":
            out = _neg(_mul(_call("sin", x), dx))
        elif fn == "tan":
            out = _div(dx, _pow(_call("cos", x), _TWO))
        elif fn == "exp":
            out = _mul(e, dx)
        elif fn == "ln":
            out = _div(dx, x)
        elif fn == "sqrt":
            out = _div(dx, _mul(_TWO, e))
        else:  # abs: sign away from 0
            out = _mul(dx, _div(x, e))
    memo[id(e)] = out
    return out


# ---------------------------------------------------------------------------
# Simplification
# ---------------------------------------------------------------------------


def simplify(e: Expr) -> Expr:
    """Best-effort constant folding and identity elimination.

    The result evaluates identically within rounding wherever both forms
    are defined.  No trigonometric or polynomial normalization is done;
    verification never relies on simplification.
    """

    def walk(n: Expr, memo: dict[int, Expr]) -> Expr:
        got = memo.get(id(n))
        if got is not None:
            return got
        t = type(n)
        if t is Constant or t is Symbol:
            out = n
        elif t is Neg:
            out = _neg(walk(n.child, memo))
        elif t is Call:
            out = _call(n.fn, walk(n.arg, memo))
        else:
            out = _FOLDERS[t](walk(n.left, memo), walk(n.right, memo))
        memo[id(n)] = out
        return out

    return walk(e, {})


# ---------------------------------------------------------------------------
# Printing
# ---------------------------------------------------------------------------

_P_ADD = 1.0
_P_NEG = 1.5
_P_MUL = 2.0
_P_POW = 3.0
_P_ATOM = 4.0


def to_string(e: Expr) -> str:
    """Render with minimal parentheses; ``parse(to_string(e))`` evaluates
    identically to ``e``."""
    return _fmt(e)[0]


def _paren(pair: tuple[str, float], min_prec: float) -> str:
    text, prec = pair
    return f"({text})" if prec < min_prec else text


def _fmt(e: Expr) -> tuple[str, float]:
    t = type(e)
    if t is Constant:
        v = e.value
        if v.is_integer() and abs(v) < 1e16:
            text = str(int(v))
        else:
            text = repr(v)
        return (text, _P_NEG if v < 0 else _P_ATOM)
    if t is Symbol:
        return (e.name, _P_ATOM)
    if t is Neg:
        return ("-" + _paren(_fmt(e.child), _P_NEG), _P_NEG)
    if t is Call:
        return (f"{e.fn}({_fmt(e.arg)[0]})", _P_ATOM)
    if t is Add:
        return (f"{_paren(_fmt(e.left), _P_ADD)}+{_paren(_fmt(e.right), _P_ADD)}", _P_ADD)
    if t is Sub:
        return (f"{_paren(_fmt(e.left), _P_ADD)}-{_paren(_fmt(e.right), _P_ADD + 0.25)}", _P_ADD)
    if t is Mul:
        return (f"{_paren(_fmt(e.left), _P_MUL)}*{_paren(_fmt(e.right), _P_MUL)}", _P_MUL)
    if t is Div:
        return (f"{_paren(_fmt(e.left), _P_MUL)}/{_paren(_fmt(e.right), _P_MUL + 0.25)}", _P_MUL)
    # Pow: right-associative, binds tighter than unary minus
    return (f"{_paren(_fmt(e.left), _P_POW + 0.25)}^{_paren(_fmt(e.right), _P_POW)}", _P_POW)


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

_NUM_RE = re.compile(r"(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?")
_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z_0-9]*")


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens: list[tuple[str, str, int]] = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
            continue
        if c.isdigit() or (c == "." and i + 1 < n and text[i + 1].isdigit()):
            m = _NUM_RE.match(text, i)
            tokens.append(("num", m.group(), i))
            i = m.end()
            continue
        if c.isalpha() or c == "_":
            m = _IDENT_RE.match(text, i)
            tokens.append(("ident", m.group(), i))
            i = m.end()
            continue
        if c in "+-*/^(),":
            tokens.append(("op", c, i))
            i += 1
            continue
        raise LexError(f"unknown character {c!r}", i)
    tokens.append(("end", "", n))
    return tokens


class _Parser:
    """Recursive descent over: expr := term (('+'|'-') term)*;
    term := factor (('*'|'/') factor)*; factor := '-' factor | base ('^' factor)?;
    base := NUMBER | IDENT | IDENT '(' expr ')' | '(' expr ')'.

    Unary minus binds looser than '^', so ``-r^2`` reads as ``-(r^2)``.
    """

    def __init__(self, tokens: list[tuple[str, str, int]]) -> None:
        self.tokens = tokens
        self.i = 0

    def peek(self) -> tuple[str, str, int]:
        return self.tokens[self.i]

    def next_op(self, chars: str) -> str | None:
        kind, value, _ = self.peek()
        if kind == "op" and value in chars:
            self.i += 1
            return value
        return None

    def expect_op(self, char: str, what: str) -> None:
        kind, value, pos = self.peek()
        if kind != "op" or value != char:
            raise ParseError(f"expected {what}", pos)
        self.i += 1

    def expr(self) -> Expr:
        node = self.term()
        while True:
            op = self.next_op("+-")
            if op is None:
                return node
            rhs = self.term()
            node = Add(node, rhs) if op == "+" else Sub(node, rhs)

    def term(self) -> Expr:
        node = self.factor()
        while True:
            op = self.next_op("*/")
            if op is None:
                return node
            rhs = self.factor()
            node = Mul(node, rhs) if op == "*" else Div(node, rhs)

    def factor(self) -> Expr:
        if self.next_op("-"):
            return Neg(self.factor())
        node = self.base()
        if self.next_op("^"):
            return Pow(node, self.factor())
        return node

    def base(self) -> Expr:
        kind, value, pos = self.peek()
        if kind == "num":
            self.i += 1
            return Constant(float(value))
        if kind == "ident":
            self.i += 1
            if self.next_op("("):
                if value not in FUNCTIONS:
                    raise ParseError(f"'{value}' is not a function", pos)
                k, v, p = self.peek()
                if k == "op" and v == ")":
                    raise ArityError(f"'{value}' takes exactly one argument (got 0)", p)
                arg = self.expr()
                k, v, p = self.peek()
                if k == "op" and v == ",":
                    raise ArityError(f"'{value}' takes exactly one argument", p)
                self.expect_op(")", "')'")
                return Call(value, arg)
            return Symbol(value)
        if kind == "op" and value == "(":
            self.i += 1
            node = self.expr()
            self.expect_op(")", "')'")
            return node
        raise ParseError("expected a number, a symbol, a function call or '('", pos)


def parse(text: str) -> Expr:
    """Parse an expression string into a tree."""
    p = _Parser(_tokenize(text))
    node = p.expr()
    kind, _, pos = p.peek()
    if kind != "end":
        raise ParseError("unexpected trailing input", pos)
    return node


# ---------------------------------------------------------------------------
# Compilation
# ---------------------------------------------------------------------------


def compile_exprs(
    exprs: Sequence[Expr], args: Sequence[str]
) -> Callable[..., tuple[float, ...]]:
    """Compile a batch of expressions into one positional-argument function.

    Structurally identical subexpressions across the whole batch are
    evaluated once.  The compiled function raises the same typed errors as
    :func:`evaluate` and checks every output for finiteness.
    """
    arg_names = {name: f"_a{i}" for i, name in enumerate(args)}
    names: dict[Expr, str] = {}
    lines: list[str] = []
    counter = itertools.count()

    def ref(e: Expr) -> str:
        t = type(e)
        if t is Constant:
            return repr(e.value) if e.value >= 0 else f"({e.value!r})"
        got = names.get(e)
        if got is not None:
            return got
        if t is Symbol:
            try:
                name = arg_names[e.name]
            except KeyError:
                raise UnboundSymbolError(f"unbound symbol '{e.name}'") from None
        else:
            if t is Neg:
                src = f"-{ref(e.child)}"
            elif t is Pow:
                src = f"_pow({ref(e.left)}, {ref(e.right)})"
            elif t is Call:
                src = f"_{e.fn}({ref(e.arg)})"
            else:
                src = f"{ref(e.left)} {e.op} {ref(e.right)}"
            name = f"_v{next(counter)}"
            lines.append(f"    {name} = {src}")
        names[e] = name
        return name

    results = [ref(e) for e in exprs]
    body = "\n".join(lines) if lines else "    pass"
    src = "def _compiled({}):\n{}\n    return ({},)".format(
        ", ".join(arg_names[a] for a in args), body, ", ".join(results)
    )
    namespace: dict[str, object] = {f"_{fn}": _MATH[fn] for fn in FUNCTIONS}
    namespace["_pow"] = math.pow
    exec(compile(src, "<curvcheck-compiled>", "exec"), namespace)
    fn = namespace["_compiled"]

    def runner(*values: float) -> tuple[float, ...]:
        try:
            out = fn(*values)
        except ZeroDivisionError:
            raise DomainError("division by zero") from None
        except ValueError as exc:
            raise DomainError(str(exc)) from None
        except OverflowError:
            raise DomainError("overflow") from None
        for v in out:
            if not math.isfinite(v):
                raise DomainError("non-finite value in compiled expression")
        return out

    return runner
