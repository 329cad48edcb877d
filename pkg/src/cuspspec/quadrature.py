"""Tensor Gauss-Legendre quadrature with refinement-based error control."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = ["QuadratureRule", "tensor_rule", "adaptive_box_quad", "QuadResult"]


@dataclass(frozen=True)
class QuadratureRule:
    """Per-cell quadrature parameters used by the Galerkin assembler."""

    order: int = 4
    singular_oversampling: int = 4

    def __post_init__(self):
        if self.order < 1:
            raise ValueError("order must be >= 1")
        if self.singular_oversampling < 1:
            raise ValueError("singular_oversampling must be >= 1")

    @property
    def singular_order(self):
        return self.order * self.singular_oversampling


@lru_cache(maxsize=64)
def _leggauss(order):
    return np.polynomial.legendre.leggauss(order)


def _axis_nodes(lo, hi, panels, order):
    base, wts = _leggauss(order)
    edges = np.linspace(lo, hi, panels + 1)
    half = 0.5 * (edges[1:] - edges[:-1])
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * base).ravel()
    weights = (half[:, None] * wts).ravel()
    return nodes, weights


def tensor_rule(box, panels, order):
    """Nodes (P, d) and weights (P,) on a box; panels per axis (int or tuple)."""
    lo = np.asarray(box.lo, dtype=float)
    hi = np.asarray(box.hi, dtype=float)
    d = lo.size
    if np.isscalar(panels):
        panels = (int(panels),) * d
    per_axis = [_axis_nodes(lo[i], hi[i], panels[i], order) for i in range(d)]
    grids = np.meshgrid(*[n for n, _ in per_axis], indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=1)
    w = per_axis[0][1]
    for i in range(1, d):
        w = np.multiply.outer(w, per_axis[i][1])
    return nodes, w.ravel()


@dataclass(frozen=True)
class QuadResult:
    value: float
    error_estimate: float
    converged: bool
    levels: int


def _tensor_quad_chunked(f, box, panels, order, chunk=1_000_000):
    """Sum of w * f(nodes) over the tensor rule, evaluated in slabs of the
    first axis so the node array never exceeds ``chunk`` rows."""
    lo = np.asarray(box.lo, dtype=float)
    hi = np.asarray(box.hi, dtype=float)
    d = lo.size
    per_axis = [_axis_nodes(lo[i], hi[i], panels, order) for i in range(d)]
    rest = 1
    for n, _ in per_axis[1:]:
        rest *= n.size
    n0 = per_axis[0][0].size
    step = max(1, chunk // max(rest, 1))
    total = 0.0
    for a in range(0, n0, step):
        b = min(a + step, n0)
        axes = [(per_axis[0][0][a:b], per_axis[0][1][a:b])] + per_axis[1:]
        grids = np.meshgrid(*[n for n, _ in axes], indexing="ij")
        nodes = np.stack([g.ravel() for g in grids], axis=1)
        w = axes[0][1]
        for i in range(1, d):
            w = np.multiply.outer(w, axes[i][1])
        vals = np.asarray(f(nodes), dtype=float)
        if vals.shape != w.ravel().shape:
            raise ValueError("integrand must return one value per node")
        total += float(np.dot(w.ravel(), vals))
    return total, n0 * rest


def adaptive_box_quad(f, box, rel_tol=1e-6, order=6, max_levels=7, abs_floor=1e-300,
                      max_nodes=40_000_000):
    """Integrate f over a box by uniformly refined tensor Gauss-Legendre.

    Refinement doubles the panel count per axis; the estimate of the error is
    the difference between the last two levels.  Summation order is fixed per
    level, so results are reproducible.  Refinement stops early if the next
    level would exceed ``max_nodes`` evaluation points.
    """
    prev = None
    value = 0.0
    err = np.inf
    for level in range(max_levels + 1):
        value, npts = _tensor_quad_chunked(f, box, 2**level, order)
        if prev is not None:
            err = abs(value - prev)
            if err <= rel_tol * max(abs(value), abs_floor):
                return QuadResult(value, err, True, level)
        prev = value
        if npts * 8 > max_nodes:
            return QuadResult(value, err, False, level)
    return QuadResult(value, err, False, max_levels)
