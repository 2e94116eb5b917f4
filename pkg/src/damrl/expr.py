"""Piecewise closed-form functions of t: a small DSL with exact derivatives.

A source string defines a function on [0, inf) as one expression, or as
several expressions glued over contiguous left-closed intervals::

    exp(-t)
    t^2 on [0,1); 2*t-1 on [1,inf)

Grammar (whitespace-insensitive)::

    func   := piece (";" piece)*
    piece  := expr ["on" "[" num "," (num|"inf") ")"]
    expr   := term (("+"|"-") term)*
    term   := factor (("*"|"/") factor)*
    factor := base ["^" base]
    base   := num | "t" | "(" expr ")" | "exp(" expr ")" | "ln(" expr ")" | "-" base

A single piece without an interval means [0, inf).  A closing "]" is
accepted as a synonym for ")" on interval upper bounds.  Values and first
and second derivatives are computed by forward-mode dual arithmetic inside
each piece, so there is no finite-difference noise in m'(t), c''(t), etc.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

__all__ = [
    "ExprError",
    "ExprSyntaxError",
    "ExprDomainError",
    "Dual",
    "PiecewiseExpr",
    "parse",
    "eval_at",
    "deriv",
]


class ExprError(Exception):
    """Base class for DSL failures."""


class ExprSyntaxError(ExprError):
    """Malformed source text, including interval coverage violations."""

    def __init__(self, message: str, line: int = 1, col: int = 0):
        super().__init__(f"{message} (line {line}, col {col})")
        self.line = line
        self.col = col


class ExprDomainError(ExprError):
    """Evaluation left the function's domain (ln of nonpositive, x/0, ...)."""

    def __init__(self, message: str, t: float):
        super().__init__(f"{message} at t={t!r}")
        self.t = t


# ---------------------------------------------------------------------------
# Dual numbers carrying (value, first derivative, second derivative)


@dataclass
class Dual:
    """Second-order dual number: value plus first and second derivative.

    Components may be floats or numpy arrays (for vectorised evaluation);
    the arithmetic is identical either way.
    """

    val: Union[float, np.ndarray]
    d1: Union[float, np.ndarray]
    d2: Union[float, np.ndarray]

    @staticmethod
    def variable(t):
        return Dual(t, _ones_like(t), _zeros_like(t))

    @staticmethod
    def constant(v, like=None):
        z = _zeros_like(like if like is not None else v)
        return Dual(v + z, z, z)

    def __add__(self, o: "Dual") -> "Dual":
        return Dual(self.val + o.val, self.d1 + o.d1, self.d2 + o.d2)

    def __sub__(self, o: "Dual") -> "Dual":
        return Dual(self.val - o.val, self.d1 - o.d1, self.d2 - o.d2)

    def __neg__(self) -> "Dual":
        return Dual(-self.val, -self.d1, -self.d2)

    def __mul__(self, o: "Dual") -> "Dual":
        return Dual(
            self.val * o.val,
            self.d1 * o.val + self.val * o.d1,
            self.d2 * o.val + 2.0 * self.d1 * o.d1 + self.val * o.d2,
        )

    def __truediv__(self, o: "Dual") -> "Dual":
        q = self.val / o.val
        q1 = (self.d1 - q * o.d1) / o.val
        q2 = (self.d2 - 2.0 * q1 * o.d1 - q * o.d2) / o.val
        return Dual(q, q1, q2)

    def exp(self) -> "Dual":
        e = np.exp(self.val) if isinstance(self.val, np.ndarray) else math.exp(self.val)
        return Dual(e, e * self.d1, e * (self.d2 + self.d1 * self.d1))

    def ln(self) -> "Dual":
        l = np.log(self.val) if isinstance(self.val, np.ndarray) else math.log(self.val)
        r = self.d1 / self.val
        return Dual(l, r, self.d2 / self.val - r * r)

    def ipow(self, n: int) -> "Dual":
        """Integer power, valid for any base (negative bases included)."""
        if n == 0:
            return Dual.constant(1.0, like=self.val)
        if n == 1:
            return Dual(self.val, self.d1, self.d2)
        a, a1, a2 = self.val, self.d1, self.d2
        pm2 = a ** (n - 2) if n >= 2 else a ** float(n - 2)
        pm1 = pm2 * a
        p = pm1 * a
        return Dual(p, n * pm1 * a1, n * (n - 1) * pm2 * a1 * a1 + n * pm1 * a2)


def _zeros_like(x):
    return np.zeros_like(x) if isinstance(x, np.ndarray) else 0.0


def _ones_like(x):
    return np.ones_like(x) if isinstance(x, np.ndarray) else 1.0


# ---------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    pass


@dataclass(frozen=True)
class Bin:
    op: str  # one of + - * / ^
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Neg:
    arg: "Node"


@dataclass(frozen=True)
class Fun:
    name: str  # exp | ln
    arg: "Node"


Node = Union[Num, Var, Bin, Neg, Fun]


@dataclass(frozen=True)
class Piece:
    lo: float
    hi: float  # math.inf for the last piece
    body: Node


# ---------------------------------------------------------------------------
# Lexer / parser

_OPS = set("+-*/^(),;[]")


class _Lexer:
    def __init__(self, src: str):
        self.src = src
        self.pos = 0
        self.tokens: list[tuple[str, str, int, int]] = []  # (kind, text, line, col)
        self._scan()

    def _loc(self, pos):
        line = self.src.count("\n", 0, pos) + 1
        nl = self.src.rfind("\n", 0, pos)
        return line, pos - nl - 1 if nl >= 0 else pos

    def _scan(self):
        s, n = self.src, len(self.src)
        i = 0
        while i < n:
            ch = s[i]
            if ch.isspace():
                i += 1
                continue
            line, col = self._loc(i)
            if ch in _OPS:
                self.tokens.append(("op", ch, line, col))
                i += 1
            elif ch.isdigit() or ch == ".":
                j = i
                while j < n and (s[j].isdigit() or s[j] == "."):
                    j += 1
                # optional exponent suffix, e.g. 2.5e-3
                if j < n and s[j] in "eE":
                    k = j + 1
                    if k < n and s[k] in "+-":
                        k += 1
                    if k < n and s[k].isdigit():
                        j = k
                        while j < n and s[j].isdigit():
                            j += 1
                text = s[i:j]
                try:
                    float(text)
                except ValueError:
                    raise ExprSyntaxError(f"bad number {text!r}", line, col)
                self.tokens.append(("num", text, line, col))
                i = j
            elif ch.isalpha():
                j = i
                while j < n and s[j].isalnum():
                    j += 1
                word = s[i:j]
                if word not in ("t", "on", "inf", "exp", "ln"):
                    raise ExprSyntaxError(f"unknown name {word!r}", line, col)
                self.tokens.append(("word", word, line, col))
                i = j
            else:
                raise ExprSyntaxError(f"unexpected character {ch!r}", line, col)
        self.tokens.append(("end", "", *self._loc(n)))


class _Parser:
    def __init__(self, src: str):
        self.toks = _Lexer(src).tokens
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def next(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, kind, text=None):
        tok = self.next()
        if tok[0] != kind or (text is not None and tok[1] != text):
            want = text if text is not None else kind
            raise ExprSyntaxError(f"expected {want!r}, found {tok[1]!r}", tok[2], tok[3])
        return tok

    def error(self, msg):
        tok = self.peek()
        raise ExprSyntaxError(msg, tok[2], tok[3])

    # func := piece (";" piece)*
    def parse_func(self) -> list[tuple[Node, float | None, float | None]]:
        pieces = [self.parse_piece()]
        while self.peek()[:2] == ("op", ";"):
            self.next()
            pieces.append(self.parse_piece())
        if self.peek()[0] != "end":
            self.error(f"trailing input {self.peek()[1]!r}")
        return pieces

    # piece := expr ["on" "[" num "," (num|"inf") (")"|"]")]
    def parse_piece(self):
        body = self.parse_expr()
        if self.peek()[:2] == ("word", "on"):
            self.next()
            self.expect("op", "[")
            lo = float(self.expect("num")[1])
            self.expect("op", ",")
            tok = self.next()
            if tok[:2] == ("word", "inf"):
                hi = math.inf
            elif tok[0] == "num":
                hi = float(tok[1])
            else:
                raise ExprSyntaxError(f"expected number or 'inf', found {tok[1]!r}", tok[2], tok[3])
            close = self.next()
            if close[:2] not in (("op", ")"), ("op", "]")):
                raise ExprSyntaxError(f"expected ')' or ']', found {close[1]!r}", close[2], close[3])
            return body, lo, hi
        return body, None, None

    def parse_expr(self) -> Node:
        node = self.parse_term()
        while self.peek()[:2] in (("op", "+"), ("op", "-")):
            op = self.next()[1]
            node = Bin(op, node, self.parse_term())
        return node

    def parse_term(self) -> Node:
        node = self.parse_factor()
        while self.peek()[:2] in (("op", "*"), ("op", "/")):
            op = self.next()[1]
            node = Bin(op, node, self.parse_factor())
        return node

    # factor := base ["^" base]
    def parse_factor(self) -> Node:
        node = self.parse_base()
        if self.peek()[:2] == ("op", "^"):
            self.next()
            node = Bin("^", node, self.parse_base())
        return node

    def parse_base(self) -> Node:
        tok = self.peek()
        if tok[:2] == ("op", "-"):
            self.next()
            return Neg(self.parse_base())
        if tok[0] == "num":
            self.next()
            return Num(float(tok[1]))
        if tok[:2] == ("word", "t"):
            self.next()
            return Var()
        if tok[:2] == ("word", "exp") or tok[:2] == ("word", "ln"):
            name = self.next()[1]
            self.expect("op", "(")
            arg = self.parse_expr()
            self.expect("op", ")")
            return Fun(name, arg)
        if tok[:2] == ("op", "("):
            self.next()
            node = self.parse_expr()
            self.expect("op", ")")
            return node
        self.error(f"expected expression, found {tok[1]!r}" if tok[1] else "unexpected end of input")


# ---------------------------------------------------------------------------
# Evaluation


def _eval(node: Node, t: Dual, tref: float) -> Dual:
    """Evaluate a piece body at the dual point t.

    tref is the scalar location used in error messages (first offending
    point for vectorised calls).
    """
    if isinstance(node, Num):
        return Dual.constant(node.value, like=t.val)
    if isinstance(node, Var):
        return t
    if isinstance(node, Neg):
        return -_eval(node.arg, t, tref)
    if isinstance(node, Fun):
        arg = _eval(node.arg, t, tref)
        if node.name == "exp":
            return arg.exp()
        if _any(arg.val <= 0.0):
            raise ExprDomainError("ln of nonpositive value", _where(t.val, arg.val <= 0.0, tref))
        return arg.ln()
    if isinstance(node, Bin):
        a = _eval(node.left, t, tref)
        if node.op == "^":
            b = _eval(node.right, t, tref)
            return _power(a, b, t, tref)
        b = _eval(node.right, t, tref)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        if _any(b.val == 0.0):
            raise ExprDomainError("division by zero", _where(t.val, b.val == 0.0, tref))
        return a / b
    raise TypeError(f"unknown node {node!r}")


def _power(a: Dual, b: Dual, t: Dual, tref: float) -> Dual:
    b_const = _all(b.d1 == 0.0) and _all(b.d2 == 0.0)
    if b_const:
        bval = b.val if not isinstance(b.val, np.ndarray) else float(b.val.flat[0])
        if float(bval) == int(bval):
            n = int(bval)
            if n < 0 and _any(a.val == 0.0):
                raise ExprDomainError("zero raised to negative power", _where(t.val, a.val == 0.0, tref))
            return a.ipow(n)
    if _any(a.val <= 0.0):
        raise ExprDomainError(
            "non-integer power of nonpositive base", _where(t.val, a.val <= 0.0, tref)
        )
    return (b * a.ln()).exp()


def _any(cond) -> bool:
    return bool(np.any(cond)) if isinstance(cond, np.ndarray) else bool(cond)


def _all(cond) -> bool:
    return bool(np.all(cond)) if isinstance(cond, np.ndarray) else bool(cond)


def _where(tval, cond, tref: float) -> float:
    if isinstance(cond, np.ndarray):
        idx = int(np.argmax(cond))
        return float(tval[idx]) if isinstance(tval, np.ndarray) else float(tref)
    return float(tref)


# ---------------------------------------------------------------------------
# Printing (round-trips through parse to a structurally equal AST)

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 3}


def _fmt_num(v: float) -> str:
    if v == math.inf:
        return "inf"
    r = repr(float(v))
    return r[:-2] if r.endswith(".0") else r


def _print(node: Node, parent_prec: int = 0, right_side: bool = False) -> str:
    if isinstance(node, Num):
        s = _fmt_num(node.value)
        # a leading digit only; negative constants never occur (Neg wraps them)
        return s
    if isinstance(node, Var):
        return "t"
    if isinstance(node, Fun):
        return f"{node.name}({_print(node.arg)})"
    if isinstance(node, Neg):
        inner = _print(node.arg, parent_prec=4)
        s = f"-{inner}"
        return f"({s})" if parent_prec > 0 else s
    if isinstance(node, Bin):
        p = _PREC[node.op]
        # - and / are left-associative; ^ takes plain bases on both sides
        left = _print(node.left, p, False)
        right = _print(node.right, p + (1 if node.op in "-/" else 0), True)
        if node.op == "^":
            left = _print(node.left, 4, False)
            right = _print(node.right, 4, True)
        s = f"{left}{node.op}{right}"
        need = p < parent_prec or (p == parent_prec and right_side)
        return f"({s})" if need else s
    raise TypeError(f"unknown node {node!r}")


# ---------------------------------------------------------------------------
# Public type


class PiecewiseExpr:
    """A parsed function of t ≥ 0 made of contiguous left-closed pieces.

    Immutable after construction; evaluation and differentiation are pure,
    so instances can be shared freely across threads.
    """

    def __init__(self, pieces: tuple[Piece, ...], source: str):
        self.pieces = pieces
        self.source = source
        self._bps = np.array([p.lo for p in pieces])

    # -- structure ----------------------------------------------------------

    @property
    def breakpoints(self) -> list[float]:
        """Interior joints between pieces (empty for single-piece functions)."""
        return [p.lo for p in self.pieces[1:]]

    def piece_index(self, t: float) -> int:
        """Index of the piece whose [lo, hi) interval contains t."""
        if t < 0:
            raise ExprDomainError("negative argument", t)
        i = int(np.searchsorted(self._bps, t, side="right")) - 1
        return max(i, 0)

    def to_source(self) -> str:
        """Canonical text form; parses back to a structurally equal AST."""
        if len(self.pieces) == 1:
            return _print(self.pieces[0].body)
        parts = []
        for p in self.pieces:
            parts.append(f"{_print(p.body)} on [{_fmt_num(p.lo)},{_fmt_num(p.hi)})")
        return "; ".join(parts)

    def __repr__(self):
        return f"PiecewiseExpr({self.to_source()!r})"

    def __eq__(self, other):
        return isinstance(other, PiecewiseExpr) and self.pieces == other.pieces

    # -- evaluation ---------------------------------------------------------

    def value(self, t: float) -> float:
        """f(t); at a joint the right piece wins (left-closed convention)."""
        p = self.pieces[self.piece_index(t)]
        return float(_eval(p.body, Dual.constant(float(t)), float(t)).val)

    __call__ = value

    def dual(self, t: float, piece: int | None = None) -> Dual:
        """(f, f', f'') at t, optionally forcing a specific piece."""
        p = self.pieces[self.piece_index(t) if piece is None else piece]
        return _eval(p.body, Dual.variable(float(t)), float(t))

    def deriv(self, t: float, order: int = 1, side: str = "two-sided", tol: float = 1e-9) -> float:
        """First or second derivative at t.

        Interior points ignore `side`.  At a piece joint, 'left'/'right'
        select the adjacent piece; 'two-sided' requires both one-sided
        values to agree within tol (relative to max(1, |value|)).
        """
        if order not in (1, 2):
            raise ValueError("order must be 1 or 2")
        t = float(t)
        k = self.piece_index(t)
        at_joint = k > 0 and t == self.pieces[k].lo
        if side == "right" or not at_joint:
            d = self.dual(t, piece=k)
            return float(d.d1 if order == 1 else d.d2)
        if side == "left":
            d = self.dual(t, piece=k - 1)
            return float(d.d1 if order == 1 else d.d2)
        if side != "two-sided":
            raise ValueError("side must be 'left', 'right' or 'two-sided'")
        dl = self.dual(t, piece=k - 1)
        dr = self.dual(t, piece=k)
        vl = float(dl.d1 if order == 1 else dl.d2)
        vr = float(dr.d1 if order == 1 else dr.d2)
        if abs(vl - vr) > tol * max(1.0, abs(vl), abs(vr)):
            raise ExprDomainError(
                f"one-sided derivatives differ at joint ({vl!r} vs {vr!r})", t
            )
        return vr

    # -- vectorised evaluation ----------------------------------------------

    def values(self, ts: np.ndarray) -> np.ndarray:
        """f evaluated over an array of points (left-closed piece selection)."""
        return self.duals(ts, order=0)[0]

    def duals(self, ts: np.ndarray, order: int = 2) -> tuple[np.ndarray, ...]:
        """Arrays (f, f', f'') over ts; order 0/1 trims the tail of the tuple."""
        ts = np.asarray(ts, dtype=float)
        if ts.size and float(ts.min()) < 0:
            raise ExprDomainError("negative argument", float(ts.min()))
        out = [np.empty_like(ts) for _ in range(order + 1)]
        idx = np.searchsorted(self._bps, ts, side="right") - 1
        idx = np.maximum(idx, 0)
        for k, p in enumerate(self.pieces):
            mask = idx == k
            if not mask.any():
                continue
            sub = ts[mask]
            d = _eval(p.body, Dual.variable(sub), float(sub.flat[0]))
            for j, comp in enumerate((d.val, d.d1, d.d2)[: order + 1]):
                out[j][mask] = comp
        return tuple(out)


# ---------------------------------------------------------------------------
# Entry points


def parse(src: str) -> PiecewiseExpr:
    """Parse DSL source into a PiecewiseExpr.

    Raises ExprSyntaxError when the text is malformed or when the pieces
    fail to tile [0, inf): first piece must start at 0, consecutive pieces
    must share an endpoint, and exactly the last piece must end at inf.
    """
    raw = _Parser(src).parse_func()
    if len(raw) == 1 and raw[0][1] is None:
        pieces = (Piece(0.0, math.inf, raw[0][0]),)
        return PiecewiseExpr(pieces, src)
    if any(lo is None for _, lo, _ in raw):
        raise ExprSyntaxError("every piece needs an interval when more than one is given")
    pieces = []
    for body, lo, hi in raw:
        if not lo < hi:
            raise ExprSyntaxError(f"empty interval [{lo},{hi})")
        pieces.append(Piece(lo, hi, body))
    if pieces[0].lo != 0.0:
        raise ExprSyntaxError(f"first piece starts at {pieces[0].lo}, not 0")
    for a, b in zip(pieces, pieces[1:]):
        if a.hi < b.lo:
            raise ExprSyntaxError(f"gap between pieces at [{a.hi},{b.lo})")
        if a.hi > b.lo:
            raise ExprSyntaxError(f"overlap between pieces at [{b.lo},{a.hi})")
    if pieces[-1].hi != math.inf:
        raise ExprSyntaxError("last piece must extend to inf")
    for p in pieces[:-1]:
        if p.hi == math.inf:
            raise ExprSyntaxError("only the last piece may extend to inf")
    return PiecewiseExpr(tuple(pieces), src)


def eval_at(f: PiecewiseExpr, t: float) -> float:
    """Functional form of f.value(t)."""
    return f.value(t)


def deriv(f: PiecewiseExpr, t: float, order: int = 1, side: str = "two-sided") -> float:
    """Functional form of f.deriv(t, order, side)."""
    return f.deriv(t, order=order, side=side)
