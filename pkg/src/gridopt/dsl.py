"""A small expression language for user-defined models.

Expressions use the variables ``x1..xk`` (factors) and ``th1..thm``
(parameters), the operators ``+ - * / ^`` and the functions ``exp``, ``log``,
``sqrt``, ``normcdf`` and ``normpdf``. Evaluation is vectorized over rows of
design points, and derivatives with respect to the parameters are computed in
forward mode.

A model file holds one directive per line::

    # compartmental model
    k = 2
    m = 5
    family = nonlinear
    theta0 = [1, 1, 2, 0.7, 0.2]
    factor 1: 0 2 0.001
    factor 2: 0 10 0.001
    eta = th1 + th2*exp(-th3*x1) + th4/(th4-th5) * (exp(-th5*x2) - exp(-th4*x2))

GLM and linear files give ``h1 = ...`` through ``hm = ...`` instead of ``eta``;
factors may also list explicit levels, ``factor 3: {-1, 1}``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import ndtr

from .design import FactorGrid
from .models import GLM_FAMILIES, GLMModel, LinearModel, Model, NonlinearModel

FUNCTIONS = ("exp", "log", "sqrt", "normcdf", "normpdf")
FAMILIES = ("linear", "nonlinear") + GLM_FAMILIES

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


class ParseError(ValueError):
    """Syntax or semantic error in model text, with a 1-based line and column."""

    def __init__(self, message, line=1, col=1, expected=()):
        self.line = line
        self.col = col
        self.expected = tuple(expected)
        text = f"line {line}, column {col}: {message}"
        if expected:
            text += f" (expected {', '.join(expected)})"
        super().__init__(text)


class DomainError(ArithmeticError):
    """Evaluation left the domain of an operation (division by zero, log of a nonpositive number, ...)."""


# ---------------------------------------------------------------------------
# AST


class Expr:
    def __str__(self):
        return to_source(self)


@dataclass(frozen=True)
class Num(Expr):
    value: float


@dataclass(frozen=True)
class Var(Expr):
    kind: str  # "x" or "th"
    index: int  # 1-based


@dataclass(frozen=True)
class Neg(Expr):
    arg: Expr


@dataclass(frozen=True)
class Func(Expr):
    name: str
    arg: Expr


@dataclass(frozen=True)
class BinOp(Expr):
    left: Expr
    right: Expr
    symbol = "?"


class Add(BinOp):
    symbol = "+"


class Sub(BinOp):
    symbol = "-"


class Mul(BinOp):
    symbol = "*"


class Div(BinOp):
    symbol = "/"


class Pow(BinOp):
    symbol = "^"


_BINOPS = {cls.symbol: cls for cls in (Add, Sub, Mul, Div, Pow)}


def to_source(e: Expr) -> str:
    """Fully parenthesized source text; re-parsing yields an identical tree."""
    if isinstance(e, Num):
        return repr(float(e.value)) if e.value >= 0 else f"(-{-float(e.value)!r})"
    if isinstance(e, Var):
        return f"{e.kind}{e.index}"
    if isinstance(e, Neg):
        return f"(-{to_source(e.arg)})"
    if isinstance(e, Func):
        return f"{e.name}({to_source(e.arg)})"
    if isinstance(e, BinOp):
        return f"({to_source(e.left)} {e.symbol} {to_source(e.right)})"
    raise TypeError(f"not an expression node: {e!r}")


def variables(e: Expr) -> set[tuple[str, int]]:
    if isinstance(e, Var):
        return {(e.kind, e.index)}
    if isinstance(e, (Neg, Func)):
        return variables(e.arg)
    if isinstance(e, BinOp):
        return variables(e.left) | variables(e.right)
    return set()


# ---------------------------------------------------------------------------
# parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<ident>[A-Za-z_]\w*)|(?P<op>[-+*/^(),]))"
)


@dataclass
class _Tok:
    kind: str
    text: str
    col: int


def _tokenize(text: str, line: int, col0: int) -> list[_Tok]:
    toks = []
    pos = 0
    while True:
        while pos < len(text) and text[pos].isspace():
            pos += 1
        if pos >= len(text):
            break
        mt = _TOKEN.match(text, pos)
        if mt is None or mt.end() == pos:
            raise ParseError(f"unexpected character {text[pos]!r}", line, col0 + pos)
        kind = mt.lastgroup
        toks.append(_Tok(kind, mt.group(kind), col0 + mt.start(kind)))
        pos = mt.end()
    toks.append(_Tok("eof", "", col0 + len(text)))
    return toks


class _Parser:
    # expr   := term (('+' | '-') term)*
    # term   := unary (('*' | '/') unary)*
    # unary  := '-' unary | power
    # power  := atom ('^' unary)?          right-associative, binds tighter than unary minus
    # atom   := number | variable | func '(' expr ')' | '(' expr ')'

    def __init__(self, text, k=None, m=None, line=1, col0=1):
        self.toks = _tokenize(text, line, col0)
        self.i = 0
        self.k = k
        self.m = m
        self.line = line

    def peek(self):
        return self.toks[self.i]

    def take(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def error(self, msg, expected=()):
        raise ParseError(msg, self.line, self.peek().col, expected)

    def expect(self, text):
        if self.peek().text != text:
            got = self.peek().text or "end of input"
            self.error(f"unexpected {got!r}", [repr(text)])
        return self.take()

    def parse(self):
        e = self.expr()
        if self.peek().kind != "eof":
            self.error(f"unexpected {self.peek().text!r}", ["operator", "end of input"])
        return e

    def expr(self):
        e = self.term()
        while self.peek().text in ("+", "-"):
            op = self.take().text
            e = _BINOPS[op](e, self.term())
        return e

    def term(self):
        e = self.unary()
        while self.peek().text in ("*", "/"):
            op = self.take().text
            e = _BINOPS[op](e, self.unary())
        return e

    def unary(self):
        if self.peek().text == "-":
            self.take()
            return Neg(self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek().text == "^":
            self.take()
            return Pow(base, self.unary())
        return base

    def atom(self):
        t = self.peek()
        if t.kind == "num":
            self.take()
            return Num(float(t.text))
        if t.kind == "ident":
            self.take()
            if t.text in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Func(t.text, arg)
            return self.variable(t)
        if t.text == "(":
            self.take()
            e = self.expr()
            self.expect(")")
            return e
        got = t.text or "end of input"
        self.error(f"unexpected {got!r}", ["number", "variable", "function", "'('", "'-'"])

    def variable(self, t):
        mt = re.fullmatch(r"(x|th)([1-9]\d*)", t.text)
        if mt is None:
            raise ParseError(f"unknown identifier {t.text!r}", self.line, t.col, ["x<i>", "th<j>", *FUNCTIONS])
        kind, idx = mt.group(1), int(mt.group(2))
        bound = self.k if kind == "x" else self.m
        if bound is not None and idx > bound:
            what = "factor" if kind == "x" else "parameter"
            raise ParseError(f"{t.text} exceeds the declared number of {what}s ({bound})", self.line, t.col)
        return Var(kind, idx)


def parse_expr(text: str, k: int | None = None, m: int | None = None, *, line: int = 1, col: int = 1) -> Expr:
    """Parse one expression; ``k``/``m`` bound the variable indices when given."""
    return _Parser(text, k, m, line, col).parse()


# ---------------------------------------------------------------------------
# evaluation


def _check(e, mask, what):
    if np.any(mask):
        raise DomainError(f"{what} in subexpression {to_source(e)}")


def _prep(x, theta):
    x = np.asarray(x, dtype=float)
    theta = np.asarray(theta, dtype=float).ravel()
    return x, theta


def _xcol(x, i, e):
    if x.shape[-1] < i:
        raise IndexError(f"{to_source(e)} refers to factor {i} but only {x.shape[-1]} given")
    return x[..., i - 1]


def _theta(theta, i, e):
    if theta.size < i:
        raise IndexError(f"{to_source(e)} refers to parameter {i} but only {theta.size} given")
    return theta[i - 1]


def evaluate(e: Expr, x, theta=()) -> np.ndarray | float:
    """Evaluate ``e`` at design point(s) ``x`` (shape ``(k,)`` or ``(n, k)``) and parameters ``theta``."""
    x, theta = _prep(x, theta)
    out = _eval(e, x, theta)
    shape = x.shape[:-1]
    out = np.broadcast_to(np.asarray(out, dtype=float), shape)
    if not np.all(np.isfinite(out)):
        raise DomainError(f"non-finite value of {to_source(e)}")
    return float(out) if out.ndim == 0 else np.array(out)


def _eval(e, x, th):
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        return _xcol(x, e.index, e) if e.kind == "x" else _theta(th, e.index, e)
    if isinstance(e, Neg):
        return -_eval(e.arg, x, th)
    if isinstance(e, Func):
        u = np.asarray(_eval(e.arg, x, th), dtype=float)
        return _apply_func(e, u)
    a = _eval(e.left, x, th)
    b = _eval(e.right, x, th)
    if isinstance(e, Add):
        return a + b
    if isinstance(e, Sub):
        return a - b
    if isinstance(e, Mul):
        return a * b
    if isinstance(e, Div):
        b = np.asarray(b, dtype=float)
        _check(e, b == 0, "division by zero")
        return a / b
    if isinstance(e, Pow):
        a = np.asarray(a, dtype=float)
        with np.errstate(all="ignore"):
            out = np.power(a, b)
        _check(e, ~np.isfinite(out) & np.isfinite(a) & np.isfinite(b), "power undefined")
        return out
    raise TypeError(f"not an expression node: {e!r}")


def _apply_func(e, u):
    if e.name == "exp":
        # overflow surfaces as a non-finite result and is reported by the caller
        with np.errstate(over="ignore"):
            return np.exp(u)
    if e.name == "log":
        _check(e, u <= 0, "log of a nonpositive number")
        return np.log(u)
    if e.name == "sqrt":
        _check(e, u < 0, "sqrt of a negative number")
        return np.sqrt(u)
    if e.name == "normcdf":
        return ndtr(u)
    if e.name == "normpdf":
        return _INV_SQRT_2PI * np.exp(-0.5 * u * u)
    raise ValueError(f"unknown function {e.name!r}")


# forward mode: every node yields (value, tangent) with tangent shape (m, *value.shape)


def diff_theta(e: Expr, x, theta) -> np.ndarray:
    """Gradient of ``e`` with respect to ``th1..thm`` at ``(x, theta)``.

    Returns shape ``(m,)`` for a single point and ``(n, m)`` for a batch.
    All ``m`` tangent directions are propagated together in one sweep.
    """
    x, theta = _prep(x, theta)
    m = theta.size
    shape = x.shape[:-1]
    _, tan = _fwd(e, x, theta, m)
    tan = np.broadcast_to(tan, (m, *shape))
    if not np.all(np.isfinite(tan)):
        raise DomainError(f"non-finite derivative of {to_source(e)}")
    return np.moveaxis(np.array(tan, dtype=float), 0, -1)


def _fwd(e, x, th, m):
    tshape = (m,) + (1,) * (x.ndim - 1)
    if isinstance(e, Num):
        return e.value, np.zeros(tshape)
    if isinstance(e, Var):
        if e.kind == "x":
            return _xcol(x, e.index, e), np.zeros(tshape)
        v = _theta(th, e.index, e)
        t = np.zeros(tshape)
        t[e.index - 1] = 1.0
        return v, t
    if isinstance(e, Neg):
        v, t = _fwd(e.arg, x, th, m)
        return -v, -t
    if isinstance(e, Func):
        u, du = _fwd(e.arg, x, th, m)
        u = np.asarray(u, dtype=float)
        v = _apply_func(e, u)
        if e.name == "exp":
            g = v
        elif e.name == "log":
            g = 1.0 / u
        elif e.name == "sqrt":
            _check(e, u == 0, "derivative of sqrt at zero")
            g = 0.5 / v
        elif e.name == "normcdf":
            g = _INV_SQRT_2PI * np.exp(-0.5 * u * u)
        else:
            g = -u * v
        return v, du * g
    a, da = _fwd(e.left, x, th, m)
    b, db = _fwd(e.right, x, th, m)
    if isinstance(e, Add):
        return a + b, da + db
    if isinstance(e, Sub):
        return a - b, da - db
    if isinstance(e, Mul):
        return a * b, da * b + a * db
    if isinstance(e, Div):
        b = np.asarray(b, dtype=float)
        _check(e, b == 0, "division by zero")
        v = a / b
        return v, (da - v * db) / b
    if isinstance(e, Pow):
        a = np.asarray(a, dtype=float)
        with np.errstate(all="ignore"):
            v = np.power(a, b)
        _check(e, ~np.isfinite(v) & np.isfinite(a) & np.isfinite(b), "power undefined")
        with np.errstate(divide="ignore", invalid="ignore"):
            t = da * (b * np.power(a, b - 1.0))
        t = np.where(np.asarray(da) == 0, 0.0, t)
        if np.any(np.asarray(db) != 0):
            _check(e, a <= 0, "power with parameter-dependent exponent of a nonpositive base")
            t = t + db * v * np.log(a)
        return v, t
    raise TypeError(f"not an expression node: {e!r}")


# ---------------------------------------------------------------------------
# model files


@dataclass
class ModelFile:
    k: int
    m: int
    family: str
    theta0: np.ndarray | None
    factors: list = field(default_factory=list)
    h: list[Expr] | None = None
    eta: Expr | None = None
    source: str = ""

    def grid(self) -> FactorGrid:
        return FactorGrid.from_ranges(self.factors)

    def model(self, name: str = "") -> Model:
        name = name or "model file"
        if self.family == "nonlinear":
            eta = self.eta

            def eta_fn(X, th):
                return evaluate(eta, X, th)

            def grad_fn(X, th):
                return diff_theta(eta, X, th)

            return NonlinearModel(eta_fn, grad_fn, self.theta0, self.k, name)
        h = self.h
        m = self.m

        def h_fn(X):
            n = X.shape[0]
            return np.column_stack([np.broadcast_to(evaluate(e, X), (n,)) for e in h]).reshape(n, m)

        if self.family == "linear":
            return LinearModel(h_fn, self.m, self.k, name=name)
        return GLMModel(self.family, h_fn, self.theta0, self.k, name)


_DIRECTIVE = re.compile(r"\s*(?P<key>[A-Za-z_]\w*)(?:\s+(?P<arg>\d+))?\s*(?P<sep>[=:])(?P<rest>.*)$")


def _parse_numbers(text, line, col):
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            raise ParseError("empty list entry", line, col, ["number"])
        try:
            out.append(float(evaluate(parse_expr(part, 0, 0, line=line, col=col), np.zeros(0))))
        except (ParseError, DomainError):
            raise ParseError(f"bad number {part!r}", line, col, ["number"]) from None
    return out


def parse(source: str) -> ModelFile:
    """Parse the text of a model file."""
    header: dict = {}
    factors: dict[int, object] = {}
    exprs: dict[str, tuple[str, int, int]] = {}
    for lineno, raw in enumerate(source.splitlines(), start=1):
        text = raw.split("#", 1)[0]
        if not text.strip():
            continue
        mt = _DIRECTIVE.match(text)
        if mt is None:
            raise ParseError("cannot read directive", lineno, 1, ["'key = value'", "'factor i: ...'"])
        key, arg, sep, rest = mt.group("key"), mt.group("arg"), mt.group("sep"), mt.group("rest")
        col = mt.start("rest") + 1
        if key == "factor":
            if arg is None or sep != ":":
                raise ParseError("factor directives read 'factor <i>: lo hi step' or 'factor <i>: {levels}'", lineno, 1)
            factors[int(arg)] = _parse_factor(rest, lineno, col)
            continue
        if sep != "=" or arg is not None:
            raise ParseError(f"unexpected directive {key!r}", lineno, 1, ["'key = value'"])
        value = rest.strip()
        if key in ("k", "m"):
            if not re.fullmatch(r"\d+", value):
                raise ParseError(f"{key} must be a positive integer", lineno, col, ["integer"])
            header[key] = int(value)
        elif key == "family":
            if value not in FAMILIES:
                raise ParseError(f"unknown family {value!r}", lineno, col, FAMILIES)
            header[key] = value
        elif key == "theta0":
            if not (value.startswith("[") and value.endswith("]")):
                raise ParseError("theta0 must be a bracketed list", lineno, col, ["'['"])
            header[key] = np.array(_parse_numbers(value[1:-1], lineno, col))
        elif key == "eta" or re.fullmatch(r"h[1-9]\d*", key):
            exprs[key] = (rest, lineno, col)
        else:
            raise ParseError(f"unknown directive {key!r}", lineno, 1, ["k", "m", "family", "theta0", "factor", "eta", "h<i>"])

    for key in ("k", "m", "family"):
        if key not in header:
            raise ParseError(f"missing directive {key!r}", 1, 1, [key])
    k, m, family = header["k"], header["m"], header["family"]
    theta0 = header.get("theta0")
    if family != "linear":
        if theta0 is None:
            raise ParseError(f"family {family} needs theta0", 1, 1, ["theta0"])
    if theta0 is not None and theta0.size != m:
        raise ParseError(f"theta0 has {theta0.size} entries but m = {m}", 1, 1)
    missing = [i for i in range(1, k + 1) if i not in factors]
    extra = [i for i in factors if not 1 <= i <= k]
    if missing or extra:
        raise ParseError(f"factor directives must cover 1..{k} exactly (missing {missing}, extra {extra})", 1, 1)

    mf = ModelFile(k, m, family, theta0, [factors[i] for i in range(1, k + 1)], source=source)
    if family == "nonlinear":
        if "eta" not in exprs:
            raise ParseError("nonlinear models need 'eta = ...'", 1, 1, ["eta"])
        if any(key != "eta" for key in exprs):
            raise ParseError("nonlinear models take eta only, not h components", 1, 1)
        text, ln, c = exprs["eta"]
        mf.eta = parse_expr(text, k, m, line=ln, col=c)
    else:
        if "eta" in exprs:
            raise ParseError(f"family {family} takes h1..h{m}, not eta", exprs["eta"][1], 1)
        names = {f"h{i}" for i in range(1, m + 1)}
        if set(exprs) != names:
            raise ParseError(f"expected components h1..h{m}, got {sorted(exprs)}", 1, 1, sorted(names))
        mf.h = []
        for i in range(1, m + 1):
            text, ln, c = exprs[f"h{i}"]
            e = parse_expr(text, k, m, line=ln, col=c)
            if any(kind == "th" for kind, _ in variables(e)):
                raise ParseError(f"h{i} must not depend on parameters", ln, c)
            mf.h.append(e)
    return mf


def _parse_factor(rest, line, col):
    text = rest.strip()
    if text.startswith("{"):
        if not text.endswith("}"):
            raise ParseError("unterminated level list", line, col, ["'}'"])
        levels = sorted(set(_parse_numbers(text[1:-1], line, col)))
        return np.array(levels)
    parts = text.split()
    if len(parts) != 3:
        raise ParseError("expected 'lo hi step'", line, col, ["lo hi step", "{levels}"])
    lo, hi, step = _parse_numbers(",".join(parts), line, col)
    if step <= 0 or hi < lo:
        raise ParseError(f"bad range {lo} {hi} {step}", line, col)
    return (lo, hi, step)


def load(path) -> ModelFile:
    return parse(Path(path).read_text())
