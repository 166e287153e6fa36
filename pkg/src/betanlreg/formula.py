"""Predictor formula DSL.

Parses expressions like ``b0 + b1*x1 + x2^b2`` over named parameters and
covariates and evaluates them together with exact first and second
derivatives with respect to the parameters (forward-mode propagation of
value / gradient / Hessian).  The bias formulas need the per-observation
parameter Hessians exactly; finite-differencing them inside the estimator
would pollute the O(1/n) terms, hence the closed DSL.

Grammar (standard infix precedence, ``^`` highest and right-associative)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' unary)?
    atom   := NUMBER | IDENT | FUNC '(' expr ')' | '(' expr ')'
    FUNC   := 'exp' | 'log' | 'sqrt'
"""

import re
from dataclasses import dataclass

import numpy as np

from .errors import EvalDomainError, FormulaSyntaxError, UnknownIdentifierError

_FUNCS = ("exp", "log", "sqrt")

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)


class _Node:
    __slots__ = ("kind", "value", "args", "span")

    def __init__(self, kind, value=None, args=(), span=(0, 0)):
        self.kind = kind      # num | par | cov | add | sub | mul | div | pow | neg | exp | log | sqrt
        self.value = value    # float for num, index for par/cov
        self.args = args
        self.span = span


def _tokenize(src):
    pos = 0
    tokens = []
    while pos < len(src):
        m = _TOKEN_RE.match(src, pos)
        if m is None or m.end() == pos:
            stripped = src[pos:].lstrip()
            if not stripped:
                break
            off = len(src) - len(stripped)
            raise FormulaSyntaxError(f"unexpected character {stripped[0]!r}", off)
        if m.group("num") is not None:
            tokens.append(("num", m.group("num"), m.start("num")))
        elif m.group("ident") is not None:
            tokens.append(("ident", m.group("ident"), m.start("ident")))
        else:
            tokens.append(("op", m.group("op"), m.start("op")))
        pos = m.end()
    tokens.append(("end", "", len(src)))
    return tokens


class _Parser:
    def __init__(self, src, params, covs):
        self.src = src
        self.params = list(params)
        self.covs = list(covs)
        self.tokens = _tokenize(src)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op):
        kind, text, off = self.peek()
        if kind != "op" or text != op:
            raise FormulaSyntaxError(f"expected {op!r}", off)
        return self.advance()

    def parse(self):
        node = self.expr()
        kind, text, off = self.peek()
        if kind != "end":
            raise FormulaSyntaxError(f"unexpected trailing input {text!r}", off)
        return node

    def expr(self):
        node = self.term()
        while True:
            kind, text, off = self.peek()
            if kind == "op" and text in "+-":
                self.advance()
                rhs = self.term()
                node = _Node("add" if text == "+" else "sub", args=(node, rhs),
                             span=(node.span[0], rhs.span[1]))
            else:
                return node

    def term(self):
        node = self.unary()
        while True:
            kind, text, off = self.peek()
            if kind == "op" and text in "*/":
                self.advance()
                rhs = self.unary()
                node = _Node("mul" if text == "*" else "div", args=(node, rhs),
                             span=(node.span[0], rhs.span[1]))
            else:
                return node

    def unary(self):
        kind, text, off = self.peek()
        if kind == "op" and text == "-":
            self.advance()
            inner = self.unary()
            return _Node("neg", args=(inner,), span=(off, inner.span[1]))
        return self.power()

    def power(self):
        base = self.atom()
        kind, text, off = self.peek()
        if kind == "op" and text == "^":
            self.advance()
            exponent = self.unary()   # right-associative
            return _Node("pow", args=(base, exponent), span=(base.span[0], exponent.span[1]))
        return base

    def atom(self):
        kind, text, off = self.advance()
        if kind == "num":
            return _Node("num", value=float(text), span=(off, off + len(text)))
        if kind == "ident":
            if text in _FUNCS:
                self.expect_op("(")
                inner = self.expr()
                _, _, close_off = self.expect_op(")")
                return _Node(text, args=(inner,), span=(off, close_off + 1))
            if text in self.params:
                return _Node("par", value=self.params.index(text), span=(off, off + len(text)))
            if text in self.covs:
                return _Node("cov", value=self.covs.index(text), span=(off, off + len(text)))
            raise UnknownIdentifierError(text, off)
        if kind == "op" and text == "(":
            inner = self.expr()
            self.expect_op(")")
            return inner
        raise FormulaSyntaxError(f"unexpected token {text!r}" if text else "unexpected end of input", off)


def _linearity(node):
    """Return (params present, params used non-affinely) for a subtree."""
    kind = node.kind
    if kind in ("num", "cov"):
        return set(), set()
    if kind == "par":
        return {node.value}, set()
    if kind in ("add", "sub"):
        pl, nl = _linearity(node.args[0])
        pr, nr = _linearity(node.args[1])
        return pl | pr, nl | nr
    if kind == "neg":
        return _linearity(node.args[0])
    if kind == "mul":
        pl, nl = _linearity(node.args[0])
        pr, nr = _linearity(node.args[1])
        nonlin = nl | nr
        if pl and pr:   # parameter times parameter
            nonlin |= pl | pr
        return pl | pr, nonlin
    if kind == "div":
        pl, nl = _linearity(node.args[0])
        pr, nr = _linearity(node.args[1])
        nonlin = nl | nr | pr           # parameters in a denominator
        if pr:
            nonlin |= pl
        return pl | pr, nonlin
    if kind == "pow":
        base, exponent = node.args
        pl, nl = _linearity(base)
        pr, nr = _linearity(exponent)
        if exponent.kind == "num" and exponent.value == 1.0:
            return pl | pr, nl | nr
        return pl | pr, pl | pr | nl | nr
    # exp / log / sqrt
    p, n = _linearity(node.args[0])
    return p, p | n


@dataclass(frozen=True)
class Formula:
    """A parsed predictor formula.

    Immutable after :func:`parse`; evaluation is pure.
    """

    src: str
    params: tuple
    covs: tuple
    linear: bool
    _ast: _Node

    def __repr__(self):
        return f"Formula({self.src!r}, params={list(self.params)}, linear={self.linear})"

    @property
    def n_params(self):
        return len(self.params)


@dataclass
class DerivBundle:
    """Value, gradient and symmetric Hessian of a formula at one covariate row."""

    value: float
    grad: np.ndarray
    hess: np.ndarray


def parse(src, params, covs):
    """Parse formula text into a :class:`Formula`.

    Parameters
    ----------
    src : str
        Formula text, nonempty.
    params : sequence of str
        Ordered parameter names; each referenced name must be listed here.
    covs : sequence of str
        Covariate names the formula may reference.
    """
    if not src or not src.strip():
        raise FormulaSyntaxError("empty formula", 0)
    params = list(params)
    covs = list(covs)
    overlap = set(params) & set(covs)
    if overlap:
        raise FormulaSyntaxError(f"names {sorted(overlap)} are both parameter and covariate", 0)
    reserved = (set(params) | set(covs)) & set(_FUNCS)
    if reserved:
        raise FormulaSyntaxError(f"names {sorted(reserved)} shadow built-in functions", 0)
    ast = _Parser(src, params, covs).parse()
    _, nonlinear = _linearity(ast)
    return Formula(src=src, params=tuple(params), covs=tuple(covs),
                   linear=not nonlinear, _ast=ast)


def nonlinear_params(formula):
    """Indices of parameters that enter the formula non-affinely."""
    _, nonlinear = _linearity(formula._ast)
    return sorted(nonlinear)


# --- evaluation -----------------------------------------------------------
#
# Gradients / Hessians are propagated as (n,p) and (n,p,p) arrays; None
# stands for an identically-zero derivative so constant subtrees cost
# nothing.

def _fragment(formula, node):
    return formula.src[node.span[0]:node.span[1]]


def _zeros_like_grad(n, p):
    return np.zeros((n, p))


def _gsum(a, b):
    if a is None:
        return b
    if b is None:
        return a
    return a + b


def _gneg(a):
    return None if a is None else -a


def _gscale(s, a):
    """s is (n,), a is (n,p) or (n,p,p) or None."""
    if a is None:
        return None
    return s.reshape((len(s),) + (1,) * (a.ndim - 1)) * a


def _outer(ga, gb):
    """Symmetrized outer product contribution ga (x) gb + gb (x) ga."""
    if ga is None or gb is None:
        return None
    m = ga[:, :, None] * gb[:, None, :]
    return m + np.swapaxes(m, 1, 2)


def _outer_self(g):
    if g is None:
        return None
    return g[:, :, None] * g[:, None, :]


def _check_finite(formula, node, v, what):
    if not np.all(np.isfinite(v)):
        raise EvalDomainError(f"non-finite {what}", _fragment(formula, node))


def _eval(formula, node, pvals, cols, n, p, order):
    """Return (value (n,), grad (n,p)|None, hess (n,p,p)|None)."""
    kind = node.kind
    if kind == "num":
        return np.full(n, node.value), None, None
    if kind == "cov":
        return np.asarray(cols[node.value], dtype=float), None, None
    if kind == "par":
        v = np.full(n, pvals[node.value])
        if order == 0:
            return v, None, None
        g = _zeros_like_grad(n, p)
        g[:, node.value] = 1.0
        return v, g, None
    if kind in ("add", "sub"):
        va, ga, ha = _eval(formula, node.args[0], pvals, cols, n, p, order)
        vb, gb, hb = _eval(formula, node.args[1], pvals, cols, n, p, order)
        if kind == "add":
            return va + vb, _gsum(ga, gb), _gsum(ha, hb)
        return va - vb, _gsum(ga, _gneg(gb)), _gsum(ha, _gneg(hb))
    if kind == "neg":
        va, ga, ha = _eval(formula, node.args[0], pvals, cols, n, p, order)
        return -va, _gneg(ga), _gneg(ha)
    if kind == "mul":
        va, ga, ha = _eval(formula, node.args[0], pvals, cols, n, p, order)
        vb, gb, hb = _eval(formula, node.args[1], pvals, cols, n, p, order)
        v = va * vb
        if order == 0:
            return v, None, None
        g = _gsum(_gscale(vb, ga), _gscale(va, gb))
        if order == 1:
            return v, g, None
        h = _gsum(_gsum(_gscale(vb, ha), _gscale(va, hb)), _outer(ga, gb))
        return v, g, h
    if kind == "div":
        va, ga, ha = _eval(formula, node.args[0], pvals, cols, n, p, order)
        vb, gb, hb = _eval(formula, node.args[1], pvals, cols, n, p, order)
        if np.any(vb == 0.0):
            raise EvalDomainError("division by zero", _fragment(formula, node))
        inv = 1.0 / vb
        v = va * inv
        _check_finite(formula, node, v, "quotient")
        if order == 0:
            return v, None, None
        # d(u/v) = du/v - u dv/v^2
        g = _gsum(_gscale(inv, ga), _gscale(-va * inv * inv, gb))
        if order == 1:
            return v, g, None
        h = _gsum(_gscale(inv, ha), _gscale(-va * inv * inv, hb))
        h = _gsum(h, _gscale(-inv * inv, _outer(ga, gb)))
        if gb is not None:
            h = _gsum(h, _gscale(2.0 * va * inv ** 3, _outer_self(gb)))
        return v, g, h
    if kind == "pow":
        return _eval_pow(formula, node, pvals, cols, n, p, order)
    # exp / log / sqrt
    va, ga, ha = _eval(formula, node.args[0], pvals, cols, n, p, order)
    if kind == "exp":
        if np.any(va > 700.0):
            raise EvalDomainError("exp overflow", _fragment(formula, node))
        v = np.exp(va)
        d1, d2 = v, v
    elif kind == "log":
        if np.any(va <= 0.0):
            raise EvalDomainError("log of a nonpositive value", _fragment(formula, node))
        v = np.log(va)
        d1 = 1.0 / va
        d2 = -d1 * d1
    else:  # sqrt
        if np.any(va <= 0.0):
            raise EvalDomainError("sqrt of a nonpositive value", _fragment(formula, node))
        v = np.sqrt(va)
        d1 = 0.5 / v
        d2 = -0.25 / (va * v)
    if order == 0:
        return v, None, None
    g = _gscale(d1, ga)
    if order == 1:
        return v, g, None
    h = _gsum(_gscale(d1, ha), _gscale(d2, _outer_self(ga)))
    return v, g, h


def _eval_pow(formula, node, pvals, cols, n, p, order):
    base, exponent = node.args
    va, ga, ha = _eval(formula, base, pvals, cols, n, p, order)
    vb, gb, hb = _eval(formula, exponent, pvals, cols, n, p, order)
    const_int = exponent.kind == "num" and float(exponent.value).is_integer()
    if const_int:
        c = float(exponent.value)
        if c < 0.0 and np.any(va == 0.0):
            raise EvalDomainError("zero raised to a negative power", _fragment(formula, node))
        v = np.power(va, c)
        _check_finite(formula, node, v, "power")
        if order == 0:
            return v, None, None
        g = _gscale(c * np.power(va, c - 1.0), ga)
        if order == 1:
            return v, g, None
        h = _gsum(_gscale(c * np.power(va, c - 1.0), ha),
                  _gscale(c * (c - 1.0) * np.power(va, c - 2.0), _outer_self(ga)))
        return v, g, h
    # General u^v = exp(v log u); the derivative needs log u, so u must be
    # positive unless the exponent is a literal integer.
    if np.any(va <= 0.0):
        raise EvalDomainError("nonpositive base with non-integer exponent",
                              _fragment(formula, node))
    logu = np.log(va)
    v = np.exp(vb * logu)
    _check_finite(formula, node, v, "power")
    if order == 0:
        return v, None, None
    inv_u = 1.0 / va
    # A = v log u;  w = e^A;  w' = w A';  w'' = w (A' (x) A' + A'')
    gA = _gsum(_gscale(logu, gb), _gscale(vb * inv_u, ga))
    g = _gscale(v, gA)
    if order == 1:
        return v, g, None
    hA = _gsum(_gscale(logu, hb), _gscale(vb * inv_u, ha))
    hA = _gsum(hA, _gscale(inv_u, _outer(ga, gb)))
    if ga is not None:
        hA = _gsum(hA, _gscale(-vb * inv_u * inv_u, _outer_self(ga)))
    h = _gscale(v, _gsum(hA, _outer_self(gA)))
    return v, g, h


def evaluate(formula, param_values, columns, order=2):
    """Evaluate a formula over a whole dataset.

    Parameters
    ----------
    formula : Formula
    param_values : (p,) array
    columns : mapping of covariate name -> (n,) array
    order : 0, 1 or 2
        Highest derivative to propagate.

    Returns
    -------
    (value, grad, hess)
        value is (n,), grad is (n, p), hess is (n, p, p); the ones beyond
        ``order`` are None.  For linear formulas hess is exactly zero.
    """
    pvals = np.asarray(param_values, dtype=float)
    if pvals.shape != (formula.n_params,):
        raise ValueError(f"expected {formula.n_params} parameter values, got shape {pvals.shape}")
    cols = [np.asarray(columns[name], dtype=float) for name in formula.covs]
    n = len(cols[0]) if cols else _infer_n(columns)
    p = formula.n_params
    v, g, h = _eval(formula, formula._ast, pvals, cols, n, p, order)
    _check_finite(formula, formula._ast, v, "value")
    if order >= 1 and g is None:
        g = np.zeros((n, p))
    if order >= 2 and h is None:
        h = np.zeros((n, p, p))
    return v, g, h


def _infer_n(columns):
    for col in columns.values():
        return len(np.asarray(col))
    return 1


def eval_with_derivs(formula, param_values, cov_row):
    """Evaluate at a single covariate row, returning a :class:`DerivBundle`."""
    columns = {name: np.atleast_1d(np.asarray(cov_row[name], dtype=float))
               for name in formula.covs}
    v, g, h = evaluate(formula, param_values, columns, order=2)
    return DerivBundle(value=float(v[0]), grad=g[0].copy(), hess=h[0].copy())
