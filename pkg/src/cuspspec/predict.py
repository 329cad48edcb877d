"""Closed-form predictors for the spectral-tail coefficients.

The limit of k * s_k for a cusp kernel is an explicit integral of the
homogeneous-term density eta restricted to the coalescence diagonal; the
order-one (|t-x| itself) variant carries the 3/4 power and the model
operators with a grad-abs factor carry the universal constant
NU_03 = 4 / (3 pi).  Everything here is plain quadrature of smooth
integrands -- no spectra are computed.
"""

from __future__ import annotations

import numpy as np

from .fields import Box
from .quadrature import adaptive_box_quad, tensor_rule

__all__ = ["NU_03", "predict_B", "predict_A", "predict_model_G1", "PredictionError"]

NU_03 = 4.0 / (3.0 * np.pi)


class PredictionError(RuntimeError):
    """Quadrature failed to converge; carries the refinement residual."""

    def __init__(self, message, residual):
        super().__init__(f"{message} (refinement residual {residual:.3e})")
        self.residual = residual


def _is_zero_field(f):
    from .fields import Add, Const, Exp, Mul, Pow

    def zero(e):
        if isinstance(e, Const):
            return e.value == 0.0
        if isinstance(e, Mul):
            return zero(e.a) or zero(e.b)
        if isinstance(e, Add):
            return zero(e.a) and zero(e.b)
        if isinstance(e, Pow):
            return zero(e.base) and e.n > 0
        return False

    return zero(f.expr)


def _pair_x_region(eta, N):
    """Intersection of the t-slice and x-slice of eta's support box."""
    if eta.support is None:
        raise ValueError("eta must declare a support box for coefficient prediction")
    lo = np.asarray(eta.support.lo)
    hi = np.asarray(eta.support.hi)
    t0 = 3 * N - 6
    lo_x = np.maximum(lo[t0:t0 + 3], lo[t0 + 3:t0 + 6])
    hi_x = np.minimum(hi[t0:t0 + 3], hi[t0 + 3:t0 + 6])
    if np.any(hi_x <= lo_x):
        return None
    return Box(tuple(lo_x), tuple(hi_x))


def _tilde_box(eta, N):
    lo = np.asarray(eta.support.lo)[:3 * N - 6]
    hi = np.asarray(eta.support.hi)[:3 * N - 6]
    return Box(tuple(lo), tuple(hi))


def _h_density(pe_list, N, inner_panels, inner_order):
    """H(x)^2 summed over pairs: 2 * sum_pairs int |eta(xtilde, x, x)|^2 dxtilde.

    For N = 2 the inner integral degenerates to |eta(x, x)|^2.  Returns a
    callable mapping (m, 3) points to H(x) >= 0, plus the union box of the
    pair x-regions (None if every eta vanishes identically).
    """
    live = [pe for pe in pe_list if not _is_zero_field(pe.eta)]
    if not live:
        return None, None
    regions = []
    for pe in live:
        if pe.eta.dim != 3 * N:
            raise ValueError(f"eta must be a field on R^{3 * N} for N = {N}")
        r = _pair_x_region(pe.eta, N)
        if r is not None:
            regions.append(r)
    if not regions:
        return None, None
    lo = np.min([r.lo for r in regions], axis=0)
    hi = np.max([r.hi for r in regions], axis=0)
    hull = Box(tuple(lo), tuple(hi))

    inner = []
    if N >= 3:
        for pe in live:
            inner.append(tensor_rule(_tilde_box(pe.eta, N), inner_panels, inner_order))

    def H(x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        acc = np.zeros(x.shape[0])
        for i, pe in enumerate(live):
            if N == 2:
                acc += np.abs(pe.eta(np.hstack([x, x]))) ** 2
            else:
                nodes, wts = inner[i]
                # points (xtilde_q, x_p, x_p) for every node/sample pair
                m, q = x.shape[0], nodes.shape[0]
                pts = np.empty((m * q, 3 * N))
                pts[:, :3 * N - 6] = np.tile(nodes, (m, 1))
                rep = np.repeat(x, q, axis=0)
                pts[:, 3 * N - 6:3 * N - 3] = rep
                pts[:, 3 * N - 3:] = rep
                vals = np.abs(pe.eta(pts)) ** 2
                acc += vals.reshape(m, q) @ wts
        return np.sqrt(2.0 * acc)

    return H, hull


def _integrate(f, box, rel_tol, what):
    res = adaptive_box_quad(f, box, rel_tol=rel_tol)
    if not res.converged:
        raise PredictionError(f"{what} quadrature did not converge", res.error_estimate)
    return res.value


def predict_B(pe_list, N=2, rel_tol=1e-6, inner_panels=4, inner_order=6):
    """Predicted limit of k * s_k: (4 / 3pi) * int H(x) dx."""
    if N < 2:
        raise ValueError("N must be >= 2")
    pe_list = list(pe_list) if isinstance(pe_list, (list, tuple)) else [pe_list]
    H, box = _h_density(pe_list, N, inner_panels, inner_order)
    if H is None:
        return 0.0
    return NU_03 * _integrate(H, box, rel_tol, "coefficient B")


def predict_A(pe_list, N=2, rel_tol=1e-6, inner_panels=4, inner_order=6):
    """Predicted limit of k^{4/3} s_k for the order-one kernel variant.

    A = (1/3) (2/pi)^{5/4} * int H(x)^{3/4} dx.
    """
    if N < 2:
        raise ValueError("N must be >= 2")
    pe_list = list(pe_list) if isinstance(pe_list, (list, tuple)) else [pe_list]
    H, box = _h_density(pe_list, N, inner_panels, inner_order)
    if H is None:
        return 0.0
    val = _integrate(lambda x: H(x) ** 0.75, box, rel_tol, "coefficient A")
    return (1.0 / 3.0) * (2.0 / np.pi) ** 1.25 * val


def _model_h(spec, inner_panels, inner_order):
    """h(x) of the model kernel; see the N = 2 / N >= 3 branches below."""
    N = spec.N

    if N == 2:
        def h(x):
            x = np.atleast_2d(np.asarray(x, dtype=float))
            xx = np.hstack([x, x])
            acc = np.zeros(x.shape[0])
            for j in range(2):
                acc += np.abs(spec.b[j][0](x) * spec.beta[j][0](xx)) ** 2
            return np.sqrt(acc)

        return h

    rules = {}
    for j in range(N):
        for k in range(N - 1):
            f = spec.b[j][k]
            if f.support is None:
                raise ValueError("b entries must declare supports for N >= 3")
            lo = np.asarray(f.support.lo)[:3 * N - 6]
            hi = np.asarray(f.support.hi)[:3 * N - 6]
            rules[(j, k)] = tensor_rule(Box(tuple(lo), tuple(hi)), inner_panels, inner_order)

    def h(x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        m = x.shape[0]
        acc = np.zeros(m)
        for (j, k), (nodes, wts) in rules.items():
            q = nodes.shape[0]
            rep = np.repeat(x, q, axis=0)
            tiled = np.tile(nodes, (m, 1))
            bx = np.hstack([tiled, rep])
            betax = np.hstack([tiled, rep, rep])
            vals = np.abs(spec.b[j][k](bx) * spec.beta[j][k](betax)) ** 2
            acc += vals.reshape(m, q) @ wts
        return np.sqrt(acc)

    return h


def predict_model_G1(spec, rel_tol=1e-6, inner_panels=4, inner_order=6):
    """Predicted tail coefficient of the model operator.

    Order-0 factor (grad-abs): NU_03 * int |a(x) h(x)| dx.  Any positive
    homogeneity order kills the leading term, so the prediction is 0.
    """
    if spec.phi.order > 0:
        return 0.0
    if spec.phi.order < 0:
        raise ValueError("homogeneous orders below 0 are not supported")
    if spec.a.support is None:
        raise ValueError("a must declare a support box")
    h = _model_h(spec, inner_panels, inner_order)

    def integrand(x):
        return np.abs(spec.a(x)) * h(x)

    return NU_03 * _integrate(integrand, spec.a.support, rel_tol, "model coefficient")
