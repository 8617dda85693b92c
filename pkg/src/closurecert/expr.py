"""Scalar expression trees over named real variables.

Expressions are immutable and can be evaluated three ways:

* :func:`eval_point` -- plain float evaluation at an assignment,
* :func:`eval_box` -- a conservative interval enclosure over a :class:`Box`,
* :func:`eval_array` -- vectorized numpy evaluation over many points at once.

The text grammar accepted by :func:`parse_expr` (EBNF)::

    expr     = term { ("+" | "-") term } ;
    term     = unary { ("*" | "/") unary } ;          (* "/" only by constants *)
    unary    = "-" unary | power ;
    power    = atom [ "^" exponent ] ;
    exponent = ["-"] integer [ "^" exponent ] ;       (* right associative *)
    atom     = number | "pi" | name
             | ("sin" | "cos") "(" expr ")"
             | ("max" | "min") "(" expr "," expr { "," expr } ")"
             | "ind" "(" region [ "," name { "," name } ] ")"
             | "(" expr ")" ;
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    ExprSyntaxError,
    MissingAssignment,
    NegativeExponent,
    UnknownRegion,
    UnknownVariable,
)

REL_WIDEN = 1e-12
TWO_PI = 2.0 * math.pi
HALF_PI = 0.5 * math.pi


# ---------------------------------------------------------------------------
# Intervals and boxes


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise ValueError(f"invalid interval [{self.lo}, {self.hi}]")

    @classmethod
    def point(cls, v: float) -> Interval:
        return cls(float(v), float(v))

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def contains(self, v: float) -> bool:
        return self.lo <= v <= self.hi

    def subset_of(self, other: Interval) -> bool:
        return other.lo <= self.lo and self.hi <= other.hi

    def __repr__(self):
        return f"[{self.lo:.6g}, {self.hi:.6g}]"


def _out(lo: float, hi: float, absolute: float = 0.0) -> Interval:
    # relative outward widening in place of directed rounding
    return Interval(lo - REL_WIDEN * abs(lo) - absolute, hi + REL_WIDEN * abs(hi) + absolute)


def iv_add(a: Interval, b: Interval) -> Interval:
    return _out(a.lo + b.lo, a.hi + b.hi)


def iv_sub(a: Interval, b: Interval) -> Interval:
    return _out(a.lo - b.hi, a.hi - b.lo)


def iv_mul(a: Interval, b: Interval) -> Interval:
    if a.lo == a.hi and b.lo == b.hi:
        p = a.lo * b.lo
        return _out(p, p)
    ps = (a.lo * b.lo, a.lo * b.hi, a.hi * b.lo, a.hi * b.hi)
    ps = [0.0 if math.isnan(p) else p for p in ps]
    return _out(min(ps), max(ps))


def iv_pow(a: Interval, n: int) -> Interval:
    if n == 0:
        return Interval(1.0, 1.0)
    if n == 1:
        return a
    lo_n, hi_n = a.lo**n, a.hi**n
    if n % 2 == 1 or a.lo >= 0.0:
        return _out(lo_n, hi_n)
    if a.hi <= 0.0:
        return _out(hi_n, lo_n)
    return _out(0.0, max(lo_n, hi_n))


def iv_sin(a: Interval) -> Interval:
    if a.hi - a.lo >= TWO_PI:
        return Interval(-1.0, 1.0)
    s_lo, s_hi = math.sin(a.lo), math.sin(a.hi)
    lo, hi = min(s_lo, s_hi), max(s_lo, s_hi)
    k = math.ceil((a.lo - HALF_PI) / TWO_PI)
    if HALF_PI + k * TWO_PI <= a.hi:
        hi = 1.0
    k = math.ceil((a.lo + HALF_PI) / TWO_PI)
    if -HALF_PI + k * TWO_PI <= a.hi:
        lo = -1.0
    w = _out(lo, hi, 1e-16)
    return Interval(max(w.lo, -1.0), min(w.hi, 1.0))


def iv_cos(a: Interval) -> Interval:
    if a.hi - a.lo >= TWO_PI:
        return Interval(-1.0, 1.0)
    c_lo, c_hi = math.cos(a.lo), math.cos(a.hi)
    lo, hi = min(c_lo, c_hi), max(c_lo, c_hi)
    k = math.ceil(a.lo / TWO_PI)
    if k * TWO_PI <= a.hi:
        hi = 1.0
    k = math.ceil((a.lo - math.pi) / TWO_PI)
    if math.pi + k * TWO_PI <= a.hi:
        lo = -1.0
    w = _out(lo, hi, 1e-16)
    return Interval(max(w.lo, -1.0), min(w.hi, 1.0))


def iv_max(a: Interval, b: Interval) -> Interval:
    return Interval(max(a.lo, b.lo), max(a.hi, b.hi))


def iv_min(a: Interval, b: Interval) -> Interval:
    return Interval(min(a.lo, b.lo), min(a.hi, b.hi))


def iv_scale(c: float, a: Interval) -> Interval:
    if c >= 0:
        return _out(c * a.lo, c * a.hi)
    return _out(c * a.hi, c * a.lo)


@dataclass(frozen=True)
class Box:
    """An axis-aligned box: one :class:`Interval` per named variable."""

    names: tuple
    intervals: tuple

    def __post_init__(self):
        if len(self.names) != len(self.intervals):
            raise DimensionMismatch("box names and intervals differ in length")
        if not self.names:
            raise DimensionMismatch("a box needs at least one dimension")

    @classmethod
    def from_bounds(cls, bounds: Mapping[str, tuple]) -> Box:
        names = tuple(bounds)
        return cls(names, tuple(Interval(float(lo), float(hi)) for lo, hi in bounds.values()))

    @property
    def dim(self) -> int:
        return len(self.names)

    def as_dict(self) -> dict:
        return dict(zip(self.names, self.intervals))

    def __getitem__(self, name: str) -> Interval:
        return self.intervals[self.names.index(name)]

    def midpoint(self) -> dict:
        return {n: iv.mid for n, iv in zip(self.names, self.intervals)}

    def widths(self) -> np.ndarray:
        return np.array([iv.width for iv in self.intervals])

    def replace(self, name: str, iv: Interval) -> Box:
        k = self.names.index(name)
        ivs = list(self.intervals)
        ivs[k] = iv
        return Box(self.names, tuple(ivs))

    def split(self, name: str, at: float | None = None) -> tuple[Box, Box]:
        iv = self[name]
        c = iv.mid if at is None else at
        return self.replace(name, Interval(iv.lo, c)), self.replace(name, Interval(c, iv.hi))

    def contains_point(self, point: Mapping[str, float]) -> bool:
        return all(iv.contains(point[n]) for n, iv in zip(self.names, self.intervals))

    def __repr__(self):
        return "Box(" + ", ".join(f"{n}={iv!r}" for n, iv in zip(self.names, self.intervals)) + ")"


# ---------------------------------------------------------------------------
# Expression nodes


class Expr:
    """Base class of expression nodes."""

    __slots__ = ()

    def __add__(self, other):
        return Add(self, as_expr(other))

    def __radd__(self, other):
        return Add(as_expr(other), self)

    def __sub__(self, other):
        return Sub(self, as_expr(other))

    def __rsub__(self, other):
        return Sub(as_expr(other), self)

    def __mul__(self, other):
        return Mul(self, as_expr(other))

    def __rmul__(self, other):
        return Mul(as_expr(other), self)

    def __neg__(self):
        return Mul(Const(-1.0), self)

    def __pow__(self, n):
        return Pow(self, n)

    def __str__(self):
        return to_text(self)


@dataclass(frozen=True, eq=True)
class Const(Expr):
    value: float


@dataclass(frozen=True)
class Var(Expr):
    name: str


@dataclass(frozen=True)
class Add(Expr):
    a: Expr
    b: Expr


@dataclass(frozen=True)
class Sub(Expr):
    a: Expr
    b: Expr


@dataclass(frozen=True)
class Mul(Expr):
    a: Expr
    b: Expr


@dataclass(frozen=True)
class Pow(Expr):
    base: Expr
    n: int

    def __post_init__(self):
        if not isinstance(self.n, int) or isinstance(self.n, bool):
            raise TypeError("exponent must be an int")
        if self.n < 0:
            raise NegativeExponent(f"negative exponent {self.n}")


@dataclass(frozen=True)
class Sin(Expr):
    a: Expr


@dataclass(frozen=True)
class Cos(Expr):
    a: Expr


@dataclass(frozen=True)
class Max(Expr):
    a: Expr
    b: Expr


@dataclass(frozen=True)
class Min(Expr):
    a: Expr
    b: Expr


@dataclass(frozen=True)
class Indicator(Expr):
    """1 on a region, 0 elsewhere; ``args`` are the variables fed to the region."""

    name: str
    region: object = field(compare=False, hash=False, repr=False)
    args: tuple = ()


def as_expr(v) -> Expr:
    if isinstance(v, Expr):
        return v
    return Const(float(v))


def _children(e: Expr) -> tuple:
    if isinstance(e, (Const, Var, Indicator)):
        return ()
    if isinstance(e, (Sin, Cos)):
        return (e.a,)
    if isinstance(e, Pow):
        return (e.base,)
    return (e.a, e.b)


def free_vars(e: Expr) -> frozenset:
    out = set()
    stack = [e]
    while stack:
        n = stack.pop()
        if isinstance(n, Var):
            out.add(n.name)
        elif isinstance(n, Indicator):
            out.update(n.args)
        else:
            stack.extend(_children(n))
    return frozenset(out)


def indicators(e: Expr) -> list:
    out, stack = [], [e]
    while stack:
        n = stack.pop()
        if isinstance(n, Indicator):
            if n not in out:
                out.append(n)
        else:
            stack.extend(_children(n))
    return out


def substitute(e: Expr, mapping: Mapping[str, Expr]) -> Expr:
    """Simultaneously replace variables by expressions (indicator args must map to variables)."""
    if isinstance(e, Var):
        return mapping.get(e.name, e)
    if isinstance(e, Const):
        return e
    if isinstance(e, Indicator):
        new_args = []
        for a in e.args:
            r = mapping.get(a, Var(a))
            if not isinstance(r, Var):
                # the region is evaluated on an expression; wrap it
                return _IndicatorOf(e, tuple(mapping.get(x, Var(x)) for x in e.args))
            new_args.append(r.name)
        return Indicator(e.name, e.region, tuple(new_args))
    if isinstance(e, _IndicatorOf):
        return _IndicatorOf(e.ind, tuple(substitute(a, mapping) for a in e.exprs))
    if isinstance(e, Pow):
        return Pow(substitute(e.base, mapping), e.n)
    if isinstance(e, (Sin, Cos)):
        return type(e)(substitute(e.a, mapping))
    return type(e)(substitute(e.a, mapping), substitute(e.b, mapping))


@dataclass(frozen=True)
class _IndicatorOf(Expr):
    """Indicator evaluated at computed arguments, e.g. ``ind(R)(f(x))``."""

    ind: Indicator
    exprs: tuple


def _fold(e: Expr) -> Expr:
    """Constant folding of a freshly built node whose children are already folded."""
    kids = _children(e)
    if kids and all(isinstance(k, Const) for k in kids):
        return Const(eval_point(e, {}))
    return e


def fold_constants(e: Expr) -> Expr:
    """Bottom-up constant folding of a whole tree."""
    if isinstance(e, (Const, Var, Indicator, _IndicatorOf)):
        return e
    if isinstance(e, Pow):
        return _fold(Pow(fold_constants(e.base), e.n))
    if isinstance(e, (Sin, Cos)):
        return _fold(type(e)(fold_constants(e.a)))
    return _fold(type(e)(fold_constants(e.a), fold_constants(e.b)))


# ---------------------------------------------------------------------------
# Point evaluation


def eval_point(e: Expr, assignment: Mapping[str, float]) -> float:
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        try:
            return float(assignment[e.name])
        except KeyError:
            raise MissingAssignment(e.name) from None
    if isinstance(e, Add):
        return eval_point(e.a, assignment) + eval_point(e.b, assignment)
    if isinstance(e, Sub):
        return eval_point(e.a, assignment) - eval_point(e.b, assignment)
    if isinstance(e, Mul):
        return eval_point(e.a, assignment) * eval_point(e.b, assignment)
    if isinstance(e, Pow):
        return eval_point(e.base, assignment) ** e.n
    if isinstance(e, Sin):
        return math.sin(eval_point(e.a, assignment))
    if isinstance(e, Cos):
        return math.cos(eval_point(e.a, assignment))
    if isinstance(e, Max):
        return max(eval_point(e.a, assignment), eval_point(e.b, assignment))
    if isinstance(e, Min):
        return min(eval_point(e.a, assignment), eval_point(e.b, assignment))
    if isinstance(e, Indicator):
        for a in e.args:
            if a not in assignment:
                raise MissingAssignment(a)
        return 1.0 if e.region.contains([float(assignment[a]) for a in e.args]) else 0.0
    if isinstance(e, _IndicatorOf):
        vals = [eval_point(x, assignment) for x in e.exprs]
        return 1.0 if e.ind.region.contains(vals) else 0.0
    raise TypeError(f"not an expression node: {e!r}")


# ---------------------------------------------------------------------------
# Interval evaluation


def _eval_box(e: Expr, env: Mapping[str, Interval]) -> Interval:
    if isinstance(e, Const):
        return Interval(e.value, e.value)
    if isinstance(e, Var):
        try:
            return env[e.name]
        except KeyError:
            raise DimensionMismatch(f"box has no dimension {e.name!r}") from None
    if isinstance(e, Add):
        return iv_add(_eval_box(e.a, env), _eval_box(e.b, env))
    if isinstance(e, Sub):
        return iv_sub(_eval_box(e.a, env), _eval_box(e.b, env))
    if isinstance(e, Mul):
        if isinstance(e.a, Const):
            return iv_scale(e.a.value, _eval_box(e.b, env))
        return iv_mul(_eval_box(e.a, env), _eval_box(e.b, env))
    if isinstance(e, Pow):
        return iv_pow(_eval_box(e.base, env), e.n)
    if isinstance(e, Sin):
        return iv_sin(_eval_box(e.a, env))
    if isinstance(e, Cos):
        return iv_cos(_eval_box(e.a, env))
    if isinstance(e, Max):
        return iv_max(_eval_box(e.a, env), _eval_box(e.b, env))
    if isinstance(e, Min):
        return iv_min(_eval_box(e.a, env), _eval_box(e.b, env))
    if isinstance(e, Indicator):
        ivs = []
        for a in e.args:
            if a not in env:
                raise DimensionMismatch(f"box has no dimension {a!r}")
            ivs.append(env[a])
        return _indicator_iv(e.region.classify(ivs))
    if isinstance(e, _IndicatorOf):
        return _indicator_iv(e.ind.region.classify([_eval_box(x, env) for x in e.exprs]))
    raise TypeError(f"not an expression node: {e!r}")


def _indicator_iv(cls) -> Interval:
    if cls is True:
        return Interval(1.0, 1.0)
    if cls is False:
        return Interval(0.0, 0.0)
    return Interval(0.0, 1.0)


def eval_box(e: Expr, box: Box | Mapping[str, Interval]) -> Interval:
    """Inclusion-isotonic enclosure of ``e`` over ``box``."""
    env = box.as_dict() if isinstance(box, Box) else box
    return _eval_box(e, env)


# ---------------------------------------------------------------------------
# Vectorized evaluation


def eval_array(e: Expr, env: Mapping[str, np.ndarray]) -> np.ndarray:
    if isinstance(e, Const):
        return np.float64(e.value)
    if isinstance(e, Var):
        try:
            return np.asarray(env[e.name], dtype=float)
        except KeyError:
            raise MissingAssignment(e.name) from None
    if isinstance(e, Add):
        return eval_array(e.a, env) + eval_array(e.b, env)
    if isinstance(e, Sub):
        return eval_array(e.a, env) - eval_array(e.b, env)
    if isinstance(e, Mul):
        return eval_array(e.a, env) * eval_array(e.b, env)
    if isinstance(e, Pow):
        return eval_array(e.base, env) ** e.n
    if isinstance(e, Sin):
        return np.sin(eval_array(e.a, env))
    if isinstance(e, Cos):
        return np.cos(eval_array(e.a, env))
    if isinstance(e, Max):
        return np.maximum(eval_array(e.a, env), eval_array(e.b, env))
    if isinstance(e, Min):
        return np.minimum(eval_array(e.a, env), eval_array(e.b, env))
    if isinstance(e, Indicator):
        cols = [np.asarray(env[a], dtype=float) for a in e.args]
        return e.region.contains_array(cols).astype(float)
    if isinstance(e, _IndicatorOf):
        cols = [np.broadcast_to(eval_array(x, env), _shape(env)) for x in e.exprs]
        return e.ind.region.contains_array(cols).astype(float)
    raise TypeError(f"not an expression node: {e!r}")


def _shape(env):
    for v in env.values():
        return np.shape(v)
    return ()


# ---------------------------------------------------------------------------
# Expanded form: a sparse polynomial over variables and opaque atoms

_MAX_TERMS = 400


class Expanded:
    """``e`` rewritten as a sum of coefficient * product of powers of atoms.

    Atoms are variables or non-polynomial subtrees (sin, cos, max, min,
    indicators). Like terms are merged exactly, which removes the interval
    dependency problem for expressions such as ``T(x, y) - T(f(x), y)``.
    """

    def __init__(self, terms: dict):
        self.terms = {m: c for m, c in terms.items() if c != 0.0}
        atoms = []
        for m in self.terms:
            for a, _ in m:
                if a not in atoms:
                    atoms.append(a)
        self.atoms = atoms

    @classmethod
    def of(cls, e: Expr) -> Expanded:
        return cls(_expand(e))

    def eval_box(self, env: Mapping[str, Interval]) -> Interval:
        atom_iv = {a: _eval_box(a, env) for a in self.atoms}
        lo = hi = 0.0
        for mono, c in self.terms.items():
            iv = Interval(1.0, 1.0)
            for a, k in mono:
                iv = iv_mul(iv, iv_pow(atom_iv[a], k))
            s = iv_scale(c, iv)
            lo += s.lo
            hi += s.hi
        return _out(lo, hi)

    def eval_array(self, env: Mapping[str, np.ndarray]) -> np.ndarray:
        shape = _shape(env)
        vals = {a: eval_array(a, env) for a in self.atoms}
        total = np.zeros(shape)
        for mono, c in self.terms.items():
            t = np.full(shape, c)
            for a, k in mono:
                t = t * vals[a] ** k
            total = total + t
        return total

    def eval_point(self, assignment: Mapping[str, float]) -> float:
        vals = {a: eval_point(a, assignment) for a in self.atoms}
        total = 0.0
        for mono, c in self.terms.items():
            t = c
            for a, k in mono:
                t *= vals[a] ** k
            total += t
        return total


def _mono_key(powers: dict) -> tuple:
    return tuple(sorted(powers.items(), key=lambda it: to_text(it[0])))


def _poly_mul(p: dict, q: dict) -> dict:
    out: dict = {}
    for m1, c1 in p.items():
        for m2, c2 in q.items():
            powers = dict(m1)
            for a, k in m2:
                powers[a] = powers.get(a, 0) + k
            key = _mono_key(powers)
            out[key] = out.get(key, 0.0) + c1 * c2
    return out


def _poly_add(p: dict, q: dict, sign: float = 1.0) -> dict:
    out = dict(p)
    for m, c in q.items():
        out[m] = out.get(m, 0.0) + sign * c
    return out


def _expand(e: Expr) -> dict:
    if isinstance(e, Const):
        return {(): e.value} if e.value != 0.0 else {}
    if isinstance(e, Var):
        return {((e, 1),): 1.0}
    if isinstance(e, Add):
        return _poly_add(_expand(e.a), _expand(e.b))
    if isinstance(e, Sub):
        return _poly_add(_expand(e.a), _expand(e.b), -1.0)
    if isinstance(e, Mul):
        p, q = _expand(e.a), _expand(e.b)
        if len(p) * len(q) <= _MAX_TERMS:
            return _poly_mul(p, q)
        return {((e, 1),): 1.0}
    if isinstance(e, Pow):
        base = _expand(e.base)
        if len(base) == 1 and e.n > 0:
            ((m, c),) = base.items()
            return {_mono_key({a: k * e.n for a, k in m}): c**e.n}
        out = {(): 1.0}
        for _ in range(e.n):
            out = _poly_mul(out, base)
            if len(out) > _MAX_TERMS:
                return {((e, 1),): 1.0}
        return out
    # opaque atom; normalize constant subtrees so equal atoms merge
    return {((e, 1),): 1.0}


# ---------------------------------------------------------------------------
# Printing


def _num(v: float) -> str:
    s = repr(float(v))
    if s in ("inf", "-inf", "nan"):
        raise ValueError(f"cannot print non-finite constant {v}")
    return f"({s})" if v < 0 else s


def to_text(e: Expr) -> str:
    """Fully parenthesized text that :func:`parse_expr` maps back to the same tree."""
    if isinstance(e, Const):
        return _num(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Add):
        return f"({to_text(e.a)} + {to_text(e.b)})"
    if isinstance(e, Sub):
        return f"({to_text(e.a)} - {to_text(e.b)})"
    if isinstance(e, Mul):
        return f"({to_text(e.a)} * {to_text(e.b)})"
    if isinstance(e, Pow):
        return f"({to_text(e.base)} ^ {e.n})"
    if isinstance(e, Sin):
        return f"sin({to_text(e.a)})"
    if isinstance(e, Cos):
        return f"cos({to_text(e.a)})"
    if isinstance(e, Max):
        return f"max({to_text(e.a)}, {to_text(e.b)})"
    if isinstance(e, Min):
        return f"min({to_text(e.a)}, {to_text(e.b)})"
    if isinstance(e, Indicator):
        return f"ind({', '.join((e.name,) + tuple(e.args))})"
    if isinstance(e, _IndicatorOf):
        return f"ind({e.ind.name})[{', '.join(to_text(x) for x in e.exprs)}]"
    raise TypeError(f"not an expression node: {e!r}")


# ---------------------------------------------------------------------------
# Parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^(),]))"
)
_FUNCS = {"sin", "cos", "max", "min", "ind"}


def _tokenize(text: str) -> list:
    toks, pos = [], 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise ExprSyntaxError(f"unexpected character {text[pos:].lstrip()[:1]!r}", pos)
        kind = m.lastgroup
        toks.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    toks.append(("end", "", len(text)))
    return toks


class _Parser:
    def __init__(self, text, variables, regions):
        self.toks = _tokenize(text)
        self.i = 0
        self.vars = tuple(variables)
        self.regions = regions or {}

    def peek(self):
        return self.toks[self.i]

    def take(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, value):
        t = self.take()
        if t[1] != value:
            raise ExprSyntaxError(f"expected {value!r}, found {t[1] or 'end of input'!r}", t[2])
        return t

    def parse(self):
        e = self.expr()
        t = self.peek()
        if t[0] != "end":
            raise ExprSyntaxError(f"unexpected token {t[1]!r}", t[2])
        return e

    def expr(self):
        e = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            rhs = self.term()
            e = _fold(Add(e, rhs) if op == "+" else Sub(e, rhs))
        return e

    def term(self):
        e = self.unary()
        while self.peek()[1] in ("*", "/"):
            _, op, pos = self.take()
            rhs = self.unary()
            if op == "*":
                e = _fold(Mul(e, rhs))
            else:
                if not isinstance(rhs, Const) or rhs.value == 0.0:
                    raise ExprSyntaxError("division is only allowed by a nonzero constant", pos)
                e = _fold(Mul(e, Const(1.0 / rhs.value)))
        return e

    def unary(self):
        if self.peek()[1] == "-":
            self.take()
            inner = self.unary()
            if isinstance(inner, Const):
                return Const(-inner.value)
            return Mul(Const(-1.0), inner)
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[1] == "^":
            self.take()
            n = self.exponent()
            return _fold(Pow(base, n))
        return base

    def exponent(self):
        neg = False
        t = self.take()
        if t[1] == "-":
            neg = True
            t = self.take()
        paren = t[1] == "("
        if paren:
            t = self.take()
        if t[0] != "num" or not t[1].isdigit():
            raise ExprSyntaxError("exponent must be an integer literal", t[2])
        n = int(t[1])
        if paren:
            self.expect(")")
        if self.peek()[1] == "^":
            self.take()
            n = n ** self.exponent()
        if neg and n != 0:
            raise NegativeExponent(f"negative exponent -{n} at position {t[2]}")
        return n

    def atom(self):
        kind, val, pos = self.take()
        if kind == "num":
            return Const(float(val))
        if val == "(":
            e = self.expr()
            self.expect(")")
            return e
        if kind == "name":
            if val in _FUNCS and self.peek()[1] == "(":
                return self.call(val, pos)
            if val == "pi":
                return Const(math.pi)
            if val not in self.vars:
                raise UnknownVariable(val)
            return Var(val)
        raise ExprSyntaxError(f"unexpected token {val or 'end of input'!r}", pos)

    def call(self, fname, pos):
        self.expect("(")
        if fname == "ind":
            return self.indicator()
        args = [self.expr()]
        while self.peek()[1] == ",":
            self.take()
            args.append(self.expr())
        self.expect(")")
        if fname in ("sin", "cos"):
            if len(args) != 1:
                raise ExprSyntaxError(f"{fname} takes one argument", pos)
            return _fold((Sin if fname == "sin" else Cos)(args[0]))
        if len(args) < 2:
            raise ExprSyntaxError(f"{fname} takes at least two arguments", pos)
        node = Max if fname == "max" else Min
        e = args[0]
        for a in args[1:]:
            e = _fold(node(e, a))
        return e

    def indicator(self):
        kind, rname, pos = self.take()
        if kind != "name":
            raise ExprSyntaxError("ind() needs a region name", pos)
        if rname not in self.regions:
            raise UnknownRegion(rname)
        region = self.regions[rname]
        names = []
        while self.peek()[1] == ",":
            self.take()
            k, v, p = self.take()
            if k != "name":
                raise ExprSyntaxError("ind() arguments must be variable names", p)
            names.append(v)
        self.expect(")")
        dim = region.dim
        if not names:
            names = ["x"]
        if len(names) == 1 and names[0] not in self.vars:
            prefix = names[0]
            names = [f"{prefix}{k + 1}" for k in range(dim)]
        if len(names) != dim:
            raise ExprSyntaxError(f"region {rname!r} has dimension {dim}", pos)
        for v in names:
            if v not in self.vars:
                raise UnknownVariable(v)
        return Indicator(rname, region, tuple(names))


def parse_expr(text: str, variables: Sequence[str], regions: Mapping[str, object] | None = None) -> Expr:
    """Parse ``text`` into an :class:`Expr` whose free variables are among ``variables``."""
    return _Parser(text, variables, regions).parse()


def state_vars(prefix: str, n: int) -> tuple:
    return tuple(f"{prefix}{k + 1}" for k in range(n))
