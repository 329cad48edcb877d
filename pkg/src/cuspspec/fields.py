"""Smooth scalar fields with exact gradients, and smooth cutoff profiles.

Fields are expression trees over a small closed-form vocabulary (constants,
coordinates, sums, products, integer powers, exponentials).  Gradients are
propagated exactly through the tree, so downstream kernel evaluations and
coefficient quadratures carry no finite-difference noise.
"""

from __future__ import annotations

import ast
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Box",
    "Expr",
    "Const",
    "Var",
    "Add",
    "Mul",
    "Pow",
    "Exp",
    "SmoothField",
    "gaussian",
    "zero_field",
    "constant_field",
    "parse_expression",
    "field_from_expression",
    "CutoffProfile",
    "default_profile",
]


@dataclass(frozen=True)
class Box:
    """Axis-aligned box, used as a declared (numerical) support."""

    lo: tuple
    hi: tuple

    def __post_init__(self):
        if len(self.lo) != len(self.hi):
            raise ValueError("lo/hi dimension mismatch")
        if any(l >= h for l, h in zip(self.lo, self.hi)):
            raise ValueError("box must have positive extent on every axis")

    @property
    def dim(self):
        return len(self.lo)

    @property
    def widths(self):
        return np.asarray(self.hi, dtype=float) - np.asarray(self.lo, dtype=float)

    @property
    def volume(self):
        return float(np.prod(self.widths))

    def contains(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        return np.all((pts >= lo) & (pts <= hi), axis=1)


# ---------------------------------------------------------------------------
# expression nodes
# ---------------------------------------------------------------------------


class Expr:
    """Base node.  ``eval_with_grad`` returns (values (m,), gradients (m, d))."""

    def eval_with_grad(self, pts):
        raise NotImplementedError

    def __add__(self, other):
        return Add(self, _as_expr(other))

    def __radd__(self, other):
        return Add(_as_expr(other), self)

    def __mul__(self, other):
        return Mul(self, _as_expr(other))

    def __rmul__(self, other):
        return Mul(_as_expr(other), self)

    def __sub__(self, other):
        return Add(self, Mul(Const(-1.0), _as_expr(other)))

    def __rsub__(self, other):
        return Add(_as_expr(other), Mul(Const(-1.0), self))

    def __neg__(self):
        return Mul(Const(-1.0), self)

    def __pow__(self, n):
        return Pow(self, n)


def _as_expr(v):
    if isinstance(v, Expr):
        return v
    return Const(float(v))


@dataclass(frozen=True)
class Const(Expr):
    value: float

    def eval_with_grad(self, pts):
        m, d = pts.shape
        return np.full(m, self.value), np.zeros((m, d))


@dataclass(frozen=True)
class Var(Expr):
    index: int

    def eval_with_grad(self, pts):
        m, d = pts.shape
        g = np.zeros((m, d))
        g[:, self.index] = 1.0
        return pts[:, self.index].copy(), g


@dataclass(frozen=True)
class Add(Expr):
    a: Expr
    b: Expr

    def eval_with_grad(self, pts):
        va, ga = self.a.eval_with_grad(pts)
        vb, gb = self.b.eval_with_grad(pts)
        return va + vb, ga + gb


@dataclass(frozen=True)
class Mul(Expr):
    a: Expr
    b: Expr

    def eval_with_grad(self, pts):
        va, ga = self.a.eval_with_grad(pts)
        vb, gb = self.b.eval_with_grad(pts)
        return va * vb, ga * vb[:, None] + gb * va[:, None]


@dataclass(frozen=True)
class Pow(Expr):
    base: Expr
    n: int

    def __post_init__(self):
        if not isinstance(self.n, int) or self.n < 1:
            raise ValueError("Pow exponent must be a positive integer")

    def eval_with_grad(self, pts):
        v, g = self.base.eval_with_grad(pts)
        return v**self.n, self.n * (v ** (self.n - 1))[:, None] * g


@dataclass(frozen=True)
class Exp(Expr):
    arg: Expr

    def eval_with_grad(self, pts):
        v, g = self.arg.eval_with_grad(pts)
        e = np.exp(v)
        return e, e[:, None] * g


# ---------------------------------------------------------------------------
# SmoothField
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SmoothField:
    """Scalar map on R^dim with an exact gradient and an optional support box."""

    dim: int
    expr: Expr
    support: Box | None = None

    def __post_init__(self):
        if self.support is not None and self.support.dim != self.dim:
            raise ValueError("support dimension does not match field dimension")

    def _check(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if pts.shape[1] != self.dim:
            raise ValueError(f"expected points in R^{self.dim}, got shape {pts.shape}")
        return pts

    def __call__(self, pts):
        return self.expr.eval_with_grad(self._check(pts))[0]

    def gradient(self, pts):
        return self.expr.eval_with_grad(self._check(pts))[1]

    def eval_with_grad(self, pts):
        return self.expr.eval_with_grad(self._check(pts))

    def scaled(self, c):
        return SmoothField(self.dim, Mul(Const(float(c)), self.expr), self.support)


def gaussian(dim, center=None, width=1.0, amplitude=1.0, support_sigmas=8.0):
    """amplitude * exp(-|x - center|^2 / width^2) with a declared support box."""
    if center is None:
        center = np.zeros(dim)
    center = np.asarray(center, dtype=float)
    q = Const(0.0)
    for i in range(dim):
        q = Add(q, Pow(Add(Var(i), Const(-center[i])), 2))
    expr = Mul(Const(float(amplitude)), Exp(Mul(Const(-1.0 / width**2), q)))
    r = support_sigmas * width
    box = Box(tuple(center - r), tuple(center + r))
    return SmoothField(dim, expr, box)


def zero_field(dim):
    return SmoothField(dim, Const(0.0), None)


def constant_field(dim, value=1.0, support=None):
    return SmoothField(dim, Const(float(value)), support)


# ---------------------------------------------------------------------------
# expression parsing (config front-end)
# ---------------------------------------------------------------------------


def parse_expression(src, variables):
    """Parse an expression string into an Expr.

    ``variables`` maps names (e.g. "x1", "t3") to coordinate indices.
    Allowed syntax: numbers, the named variables, + - * **(int), unary -,
    and exp(...).
    """
    try:
        tree = ast.parse(src, mode="eval")
    except SyntaxError as exc:
        raise ValueError(f"cannot parse expression {src!r}: {exc}") from exc
    return _convert(tree.body, variables)


def _convert(node, variables):
    if isinstance(node, ast.Constant):
        if isinstance(node.value, (int, float)):
            return Const(float(node.value))
        raise ValueError(f"unsupported constant {node.value!r}")
    if isinstance(node, ast.Name):
        if node.id in variables:
            return Var(variables[node.id])
        raise ValueError(f"unknown variable {node.id!r}")
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.USub):
        return -_convert(node.operand, variables)
    if isinstance(node, ast.BinOp):
        if isinstance(node.op, ast.Pow):
            if not (isinstance(node.right, ast.Constant) and isinstance(node.right.value, int)):
                raise ValueError("** requires a literal integer exponent")
            return Pow(_convert(node.left, variables), node.right.value)
        a = _convert(node.left, variables)
        b = _convert(node.right, variables)
        if isinstance(node.op, ast.Add):
            return a + b
        if isinstance(node.op, ast.Sub):
            return a - b
        if isinstance(node.op, ast.Mult):
            return a * b
        raise ValueError(f"unsupported operator {type(node.op).__name__}")
    if isinstance(node, ast.Call):
        if isinstance(node.func, ast.Name) and node.func.id == "exp" and len(node.args) == 1:
            return Exp(_convert(node.args[0], variables))
        raise ValueError("only exp(...) calls are allowed")
    raise ValueError(f"unsupported syntax node {type(node).__name__}")


def field_from_expression(src, dim, variables=None, support=None):
    """Build a SmoothField from an expression string.

    Default variable names are x1..xd; for dim == 6 the pair-kernel names
    t1..t3, x1..x3 are used (t = first triple, x = second triple).
    """
    if variables is None:
        if dim == 6:
            variables = {f"t{i + 1}": i for i in range(3)}
            variables.update({f"x{i + 1}": 3 + i for i in range(3)})
        else:
            variables = {f"x{i + 1}": i for i in range(dim)}
    return SmoothField(dim, parse_expression(src, variables), support)


# ---------------------------------------------------------------------------
# smooth cutoff profile
# ---------------------------------------------------------------------------


def _rho(u):
    """C-infinity bump on (0,1); zero (with all derivatives) at the endpoints."""
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    inside = (u > 0.0) & (u < 1.0)
    ui = u[inside]
    out[inside] = np.exp(-1.0 / (ui * (1.0 - ui)))
    return out


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(48)
_RHO_NORM = float(np.sum(_GL_WEIGHTS * _rho(0.5 * (_GL_NODES + 1.0))) * 0.5)


def _sigma(s):
    """sigma(s) = int_s^1 rho / int_0^1 rho; 1 for s <= 0, 0 for s >= 1."""
    s = np.asarray(s, dtype=float)
    sc = np.clip(s, 0.0, 1.0)
    # map GL nodes from [-1, 1] onto [s, 1] for every point at once
    half = 0.5 * (1.0 - sc)
    mid = 0.5 * (1.0 + sc)
    u = mid[..., None] + half[..., None] * _GL_NODES
    vals = np.sum(_GL_WEIGHTS * _rho(u), axis=-1) * half
    return vals / _RHO_NORM


@dataclass(frozen=True)
class CutoffProfile:
    """Smooth transition theta with theta=1 on |t|<1/2 and theta=0 on |t|>1.

    theta(t) = sigma(2|t| - 1) with sigma the normalized bump integral; the
    complement is zeta = 1 - theta.  Derivatives up to order 2 are exact.
    """

    def theta(self, t):
        t = np.asarray(t, dtype=float)
        return _sigma(2.0 * np.abs(t) - 1.0)

    def zeta(self, t):
        return 1.0 - self.theta(t)

    def theta_d1(self, t):
        t = np.asarray(t, dtype=float)
        s = 2.0 * np.abs(t) - 1.0
        return -2.0 * np.sign(t) * _rho(s) / _RHO_NORM

    def theta_d2(self, t):
        t = np.asarray(t, dtype=float)
        s = 2.0 * np.abs(t) - 1.0
        g = s * (1.0 - s)
        drho = np.zeros_like(s)
        inside = (s > 0.0) & (s < 1.0)
        drho[inside] = _rho(s[inside]) * (1.0 - 2.0 * s[inside]) / g[inside] ** 2
        return -4.0 * drho / _RHO_NORM

    def __call__(self, t):
        return self.theta(t)


_DEFAULT_PROFILE = CutoffProfile()


def default_profile():
    return _DEFAULT_PROFILE
