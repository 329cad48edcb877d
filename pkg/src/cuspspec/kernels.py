"""Coalescence-cusp kernels: homogeneous factors, pair expansions, cutoffs.

The central objects are vector-valued kernels K(t, x) built from a smooth
part plus homogeneous factors of the particle separation.  Kernels carry an
optional structured decomposition (separable and diagonal-convolution terms)
that the discretization module uses for its fast matrix-free path.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fields import Box, CutoffProfile, SmoothField, default_profile

__all__ = [
    "HomogeneousFunction",
    "grad_abs",
    "abs_kernel",
    "eval_homogeneous",
    "PairExpansion",
    "separable_pair_expansion",
    "CutoffSet",
    "eval_cutoff_partition",
    "ModelKernelSpec",
    "KernelField",
    "SeparableTerm",
    "ConvolutionTerm",
    "gradient_kernel",
    "model_kernel",
]


# ---------------------------------------------------------------------------
# homogeneous functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HomogeneousFunction:
    """Phi: R^dim \\ {0} -> R^components with Phi(t x) = t^order Phi(x), t > 0."""

    dim: int
    order: float
    components: int
    func: callable
    name: str = "custom"

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.order <= -self.dim:
            raise ValueError(f"order must exceed -dim = {-self.dim}")

    def __call__(self, pts):
        """Evaluate away from the origin; the origin raises a domain error."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if np.any(np.all(pts == 0.0, axis=1)):
            raise ValueError("homogeneous function evaluated at the origin")
        return self.func(pts)

    def eval_flagged(self, pts):
        """Evaluate with the measure-zero diagonal convention.

        Rows at the origin are returned as zero and flagged; cell-averaging
        discretizations never rely on those values.
        """
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        bad = np.all(pts == 0.0, axis=1)
        safe = pts.copy()
        safe[bad] = 1.0
        vals = self.func(safe)
        vals[bad] = 0.0
        return vals, bad


def _grad_abs_func(pts):
    r = np.linalg.norm(pts, axis=1)
    return pts / r[:, None]


def _abs_func(pts):
    return np.linalg.norm(pts, axis=1)[:, None]


grad_abs = HomogeneousFunction(3, 0.0, 3, _grad_abs_func, name="grad_abs")
abs_kernel = HomogeneousFunction(3, 1.0, 1, _abs_func, name="abs")

BUILTIN_HOMOGENEOUS = {"grad_abs": grad_abs, "abs": abs_kernel}


def eval_homogeneous(phi, x):
    """Phi(x) for a single point x != 0."""
    x = np.asarray(x, dtype=float)
    if np.all(x == 0.0):
        raise ValueError("homogeneous function evaluated at the origin")
    return phi(x[None, :])[0]


# ---------------------------------------------------------------------------
# pair expansions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PairExpansion:
    """Smooth xi, eta defining the cusp kernel psi(t,x) = xi + |t-x| eta.

    For the two-particle case both fields live on R^6 with the first triple
    of coordinates playing the role of t and the second of x.  Optional
    separable factors (field(t) * field(x)) enable the fast assembly path.
    """

    xi: SmoothField
    eta: SmoothField
    xi_factors: tuple | None = None
    eta_factors: tuple | None = None

    def __post_init__(self):
        if self.xi.dim != self.eta.dim:
            raise ValueError("xi and eta must share a dimension")

    @property
    def dim(self):
        return self.xi.dim

    def psi(self, t, x):
        """psi(t, x); continuous across the diagonal."""
        t = np.atleast_2d(np.asarray(t, dtype=float))
        x = np.atleast_2d(np.asarray(x, dtype=float))
        pts = np.hstack([t, x])
        r = np.linalg.norm(t - x, axis=1)
        return self.xi(pts) + r * self.eta(pts)

    def eta_on_diagonal(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return self.eta(np.hstack([x, x]))


def _product_expr(ft, gx):
    # lift f(t)*g(x) onto R^6 by index shifting of the x-factor
    from .fields import Add, Const, Exp, Mul, Pow, Var

    def shift(e, off):
        if isinstance(e, Var):
            return Var(e.index + off)
        if isinstance(e, Const):
            return e
        if isinstance(e, Add):
            return Add(shift(e.a, off), shift(e.b, off))
        if isinstance(e, Mul):
            return Mul(shift(e.a, off), shift(e.b, off))
        if isinstance(e, Pow):
            return Pow(shift(e.base, off), e.n)
        if isinstance(e, Exp):
            return Exp(shift(e.arg, off))
        raise TypeError(f"cannot shift node {type(e).__name__}")

    expr = Mul(shift(ft.expr, 0), shift(gx.expr, 3))
    support = None
    if ft.support is not None and gx.support is not None:
        support = Box(tuple(ft.support.lo) + tuple(gx.support.lo),
                      tuple(ft.support.hi) + tuple(gx.support.hi))
    return SmoothField(6, expr, support)


def separable_pair_expansion(xi_t, xi_x, eta_t, eta_x):
    """PairExpansion with xi(t,x) = xi_t(t) xi_x(x), eta likewise.

    Keeping the factors around lets gradient_kernel emit the structured
    (separable + convolution) decomposition used by the matrix-free path.
    """
    for f in (xi_t, xi_x, eta_t, eta_x):
        if f.dim != 3:
            raise ValueError("separable factors must be fields on R^3")
    return PairExpansion(
        xi=_product_expr(xi_t, xi_x),
        eta=_product_expr(eta_t, eta_x),
        xi_factors=(xi_t, xi_x),
        eta_factors=(eta_t, eta_x),
    )


# ---------------------------------------------------------------------------
# cutoff sets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CutoffSet:
    """Separation / box / coalescence cutoffs built from one smooth profile.

    With x_0 = 0 adjoined to the coordinates of xhat:
      Y_delta(xhat)  = prod_{l<s} zeta(|x_l - x_s| / (4 delta))
      Q_R(xhat)      = prod_l theta(|x_l| / R)
      K_R(x)         = theta(|x| / R)
    """

    delta: float
    bigR: float
    eps: float
    profile: CutoffProfile = field(default_factory=default_profile)

    def __post_init__(self):
        if self.delta <= 0 or self.bigR <= 0 or self.eps <= 0:
            raise ValueError("delta, bigR, eps must be positive")
        if self.eps > self.delta:
            raise ValueError("coalescence scale eps must not exceed delta")

    @staticmethod
    def _coords_with_origin(xhat):
        xhat = np.atleast_2d(np.asarray(xhat, dtype=float))
        m, d = xhat.shape
        if d % 3 != 0:
            raise ValueError("xhat must consist of R^3 blocks")
        coords = xhat.reshape(m, d // 3, 3)
        zero = np.zeros((m, 1, 3))
        return np.concatenate([zero, coords], axis=1)  # x_0 = 0 first

    def Y(self, xhat):
        coords = self._coords_with_origin(xhat)
        npart = coords.shape[1]
        out = np.ones(coords.shape[0])
        for l in range(npart):
            for s in range(l + 1, npart):
                r = np.linalg.norm(coords[:, l] - coords[:, s], axis=1)
                out *= self.profile.zeta(r / (4.0 * self.delta))
        return out

    def Q(self, xhat):
        xhat = np.atleast_2d(np.asarray(xhat, dtype=float))
        m, d = xhat.shape
        coords = xhat.reshape(m, d // 3, 3)
        out = np.ones(m)
        for l in range(coords.shape[1]):
            out *= self.profile.theta(np.linalg.norm(coords[:, l], axis=1) / self.bigR)
        return out

    def K(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return self.profile.theta(np.linalg.norm(x, axis=1) / self.bigR)

    def theta_terms(self, xhat, x):
        """theta(|x - x_j| / eps) for j = 0..N-1 (x_0 = 0), shape (m, N)."""
        coords = self._coords_with_origin(xhat)
        x = np.atleast_2d(np.asarray(x, dtype=float))
        r = np.linalg.norm(coords - x[:, None, :], axis=2)
        return self.profile.theta(r / self.eps)

    def zeta_product(self, xhat, x):
        coords = self._coords_with_origin(xhat)
        x = np.atleast_2d(np.asarray(x, dtype=float))
        r = np.linalg.norm(coords - x[:, None, :], axis=2)
        return np.prod(self.profile.zeta(r / self.eps), axis=1)


def eval_cutoff_partition(cuts, xhat, x):
    """Return (theta_terms, zeta_product) entering the partition identity.

    Wherever Y_delta > 0 the coalescence neighbourhoods are disjoint and
    Y * (sum_j theta_j + prod_j zeta_j) = Y exactly.
    """
    return cuts.theta_terms(xhat, x), cuts.zeta_product(xhat, x)


# ---------------------------------------------------------------------------
# kernel fields
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SeparableTerm:
    """Contribution left(t) * right(x) to one output component."""

    component: int
    left: callable
    right: callable


@dataclass(frozen=True)
class ConvolutionTerm:
    """Contribution b(t) * Phi_{phi_component}(t - x) * a(x) to one component."""

    component: int
    left: callable
    phi: HomogeneousFunction
    phi_component: int
    right: callable


@dataclass(frozen=True)
class KernelField:
    """Vector-valued kernel on R^{t_dim} x R^{x_dim}.

    ``evaluate(t, x)`` returns (values (m, components), undefined (m,)) where
    the flag marks points falling on a homogeneous-factor singularity; the
    value there follows the zero-vector convention.  ``terms`` holds the
    structured decomposition when one exists (required by the convolutional
    assembly path).
    """

    t_dim: int
    x_dim: int
    components: int
    evaluate: callable
    terms: tuple | None = None
    t_box: Box | None = None
    x_box: Box | None = None
    diagonal_singular: bool = True

    def __call__(self, t, x):
        return self.evaluate(t, x)[0]


def _field_call(f):
    # callables used in terms accept an (m, 3) array and return (m,)
    if isinstance(f, SmoothField):
        return f
    return f


def _grad_component(fld, c):
    def g(pts):
        return fld.gradient(pts)[:, c]

    return g


def gradient_kernel(pe, cuts=None):
    """The 3-vector kernel grad_x psi(t, x) for a two-particle expansion.

    psi = xi + |t-x| eta gives the three-term kernel
        grad_x xi + |t-x| grad_x eta - ((t-x)/|t-x|) eta.
    At t = x the homogeneous direction is undefined; the returned field flags
    such points and sets the third term to zero there.  When ``cuts`` is
    given the kernel is multiplied by Q_R(t) Y_delta(t) K_R(x).
    """
    if pe.dim != 6:
        raise ValueError("gradient_kernel expects a two-particle expansion on R^6")

    def evaluate(t, x):
        t = np.atleast_2d(np.asarray(t, dtype=float))
        x = np.atleast_2d(np.asarray(x, dtype=float))
        pts = np.hstack([t, x])
        d = t - x
        r = np.linalg.norm(d, axis=1)
        on_diag = r == 0.0
        xi_v, xi_g = pe.xi.eval_with_grad(pts)
        eta_v, eta_g = pe.eta.eval_with_grad(pts)
        vals = xi_g[:, 3:] + r[:, None] * eta_g[:, 3:]
        rs = np.where(on_diag, 1.0, r)
        unit = -d / rs[:, None]
        unit[on_diag] = 0.0
        vals = vals + unit * eta_v[:, None]
        if cuts is not None:
            w = cuts.Q(t) * cuts.Y(t) * cuts.K(x)
            vals = vals * w[:, None]
        return vals, on_diag

    terms = None
    if pe.xi_factors is not None and pe.eta_factors is not None:
        xi_t, xi_x = pe.xi_factors
        eta_t, eta_x = pe.eta_factors

        def weighted_t(f):
            if cuts is None:
                return f
            return lambda p, f=f: f(p) * cuts.Q(p) * cuts.Y(p)

        def weighted_x(f):
            if cuts is None:
                return f
            return lambda p, f=f: f(p) * cuts.K(p)

        tms = []
        for c in range(3):
            tms.append(SeparableTerm(c, weighted_t(xi_t), weighted_x(_grad_component(xi_x, c))))
            tms.append(ConvolutionTerm(c, weighted_t(eta_t), abs_kernel, 0,
                                       weighted_x(_grad_component(eta_x, c))))
            tms.append(ConvolutionTerm(c, weighted_t(eta_t), grad_abs, c,
                                       weighted_x(lambda p, f=eta_x: -f(p))))
        terms = tuple(tms)

    t_box = x_box = None
    if pe.xi_factors is not None and pe.eta_factors is not None:
        sup_t = [f.support for f in (pe.xi_factors[0], pe.eta_factors[0])]
        sup_x = [f.support for f in (pe.xi_factors[1], pe.eta_factors[1])]
        if all(s is not None for s in sup_t):
            t_box = _hull(sup_t)
        if all(s is not None for s in sup_x):
            x_box = _hull(sup_x)

    return KernelField(3, 3, 3, evaluate, terms=terms, t_box=t_box, x_box=x_box)


def _hull(boxes):
    lo = np.min([b.lo for b in boxes], axis=0)
    hi = np.max([b.hi for b in boxes], axis=0)
    return Box(tuple(lo), tuple(hi))


# sign note: grad_x |t - x| = (x - t)/|x - t| = -(t - x)/|t - x|; the kernel
# follows the analytic gradient of psi, so the homogeneous term enters with
# the minus sign absorbed into the term callables above.


# ---------------------------------------------------------------------------
# model kernels
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ModelKernelSpec:
    """Kernel M_{j,k}(xhat, x) = b_{j,k}(xhat) Phi(x_k - x) a(x) beta_{j,k}(xhat, x).

    ``b`` is indexed [j][k] with j = 1..N (outer components) and k = 1..N-1
    (pair terms); ``beta`` likewise.  Entries of b live on R^{3N-3}, entries
    of beta on R^{3N} ordered (xhat, x), and a on R^3.
    """

    N: int
    a: SmoothField
    b: tuple
    beta: tuple
    phi: HomogeneousFunction

    def __post_init__(self):
        if self.N < 2:
            raise ValueError("N must be >= 2")
        if self.a.dim != 3:
            raise ValueError("a must be a field on R^3")
        if self.phi.dim != 3:
            raise ValueError("phi must act on R^3")
        if len(self.b) != self.N or len(self.beta) != self.N:
            raise ValueError("b and beta must have N rows")
        for row in self.b:
            if len(row) != self.N - 1:
                raise ValueError("b rows must have N-1 entries")
            for f in row:
                if f.dim != 3 * self.N - 3:
                    raise ValueError("b entries must live on R^{3N-3}")
        for row in self.beta:
            if len(row) != self.N - 1:
                raise ValueError("beta rows must have N-1 entries")
            for f in row:
                if f.dim != 3 * self.N:
                    raise ValueError("beta entries must live on R^{3N}")

    @property
    def xhat_dim(self):
        return 3 * self.N - 3

    @property
    def components(self):
        return self.N * self.phi.components


def model_kernel(spec):
    """KernelField for the model kernel M = {sum_k M_{j,k}}_{j=1..N}."""

    m = spec.phi.components

    def evaluate(xhat, x):
        xhat = np.atleast_2d(np.asarray(xhat, dtype=float))
        x = np.atleast_2d(np.asarray(x, dtype=float))
        npts = xhat.shape[0]
        a_v = spec.a(x)
        full = np.hstack([xhat, x])
        vals = np.zeros((npts, spec.components))
        undefined = np.zeros(npts, dtype=bool)
        for k in range(spec.N - 1):
            xk = xhat[:, 3 * k:3 * k + 3]
            phi_v, bad = spec.phi.eval_flagged(xk - x)
            if spec.phi.order <= 0:
                undefined |= bad
            for j in range(spec.N):
                w = spec.b[j][k](xhat) * spec.beta[j][k](full) * a_v
                vals[:, j * m:(j + 1) * m] += phi_v * w[:, None]
        return vals, undefined

    return KernelField(spec.xhat_dim, 3, spec.components, evaluate,
                       t_box=spec_b_hull(spec), x_box=spec.a.support)


def spec_b_hull(spec):
    sups = [f.support for row in spec.b for f in row]
    if any(s is None for s in sups):
        return None
    return _hull(sups)
