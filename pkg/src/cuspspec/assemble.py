"""Galerkin projection of kernels onto cell grids.

Two routes produce a DiscreteOperator:

* dense assembly — materializes the matrix, either from a structured term
  decomposition or by direct tensor quadrature over cell pairs;
* convolutional assembly — a lazy, matrix-free operator built from
  diagonal * convolution * diagonal terms, with the translation-invariant
  factor applied by FFT in O(n log n) per matvec.

Both routes share one discretization convention: diagonal weights are
projected onto the piecewise-constant cell basis (cell averages) and the
translation-invariant factor is averaged exactly over cell pairs.  On
dense-representable problems the two routes therefore agree to solver
precision, which is what the oracle-agreement checks exercise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._accel import (
    KIND_ABS,
    KIND_GRAD_ABS,
    offset_averages,
    offset_averages_generic,
)
from .grids import cell_averages
from .kernels import (
    ConvolutionTerm,
    HomogeneousFunction,
    KernelField,
    ModelKernelSpec,
    SeparableTerm,
    abs_kernel,
    grad_abs,
    model_kernel,
)
from .operators import (
    ConvolutionOperator,
    DenseOperator,
    DiagonalOperator,
    Rank1Operator,
    ZeroOperator,
    op_compose,
    op_stack,
    op_sum,
)
from .quadrature import QuadratureRule, _leggauss

__all__ = [
    "MemoryGuardError",
    "SeparableRankError",
    "assemble_dense",
    "assemble_convolutional",
    "separable_expansion",
]

DENSE_ENTRY_GUARD = 600_000_000


class MemoryGuardError(MemoryError):
    """Dense assembly would exceed the memory bound; use the convolutional path."""


class SeparableRankError(ValueError):
    """The separable expansion of beta did not reach the requested residual."""


# ---------------------------------------------------------------------------
# offset averages of the translation-invariant factor
# ---------------------------------------------------------------------------


def _term_offset_block(phi, phi_component, grid, quad):
    """(2n-1)^3 array of cell-pair averages of phi's component at all offsets."""
    n = grid.n
    h = grid.cell_widths
    axes = [np.arange(-(k - 1), k) for k in n]
    g = np.meshgrid(*axes, indexing="ij")
    offsets = np.stack([a.ravel() for a in g], axis=1)
    if phi is grad_abs:
        vals = offset_averages(offsets, h, quad, KIND_GRAD_ABS)
    elif phi is abs_kernel:
        vals = offset_averages(offsets, h, quad, KIND_ABS)
    else:
        singular = isinstance(phi, HomogeneousFunction)

        def func(pts):
            if hasattr(phi, "eval_flagged"):
                return phi.eval_flagged(pts)[0]
            return np.atleast_2d(np.asarray(phi(pts)))

        vals = offset_averages_generic(offsets, h, quad, func, phi.components,
                                       oversample_all=singular)
    shape = tuple(2 * k - 1 for k in n)
    return vals[:, phi_component].reshape(shape)


def _require_shared_grid(left, right):
    if left.box != right.box or left.n != right.n:
        raise ValueError("structured terms require identical left/right grids")


def _term_blocks(kernel, grid, quad, avg_order=4):
    """Per-term data: (component, b averages, offset block or None, a averages)."""
    out = []
    for term in kernel.terms:
        if isinstance(term, SeparableTerm):
            f = cell_averages(grid, term.left, order=avg_order)
            g = cell_averages(grid, term.right, order=avg_order)
            out.append((term.component, f, None, g))
        elif isinstance(term, ConvolutionTerm):
            b = cell_averages(grid, term.left, order=avg_order)
            a = cell_averages(grid, term.right, order=avg_order)
            block = _term_offset_block(term.phi, term.phi_component, grid, quad)
            out.append((term.component, b, block, a))
        else:
            raise TypeError(f"unknown term type {type(term).__name__}")
    return out


# ---------------------------------------------------------------------------
# dense assembly
# ---------------------------------------------------------------------------


def assemble_dense(kernel, left, right, quad=None, avg_order=4):
    """Galerkin matrix of the kernel: rows = components * left cells.

    Entry ((c,i), j) is sqrt(v_t v_x) times the cell-pair average of the
    c-th kernel component.  Kernels carrying a structured decomposition are
    assembled from it (shared convention with the convolutional path);
    otherwise a direct tensor quadrature over cell pairs is used, with
    oversampling on pairs whose closures meet the diagonal.
    """
    quad = quad or QuadratureRule()
    rows = kernel.components * left.num_cells
    if rows * right.num_cells > DENSE_ENTRY_GUARD:
        raise MemoryGuardError(
            f"{rows} x {right.num_cells} dense matrix exceeds the memory bound; "
            "use assemble_convolutional")
    if kernel.terms is not None:
        _require_shared_grid(left, right)
        return DenseOperator(_dense_from_terms(kernel, left, quad, avg_order))
    return DenseOperator(_dense_from_quadrature(kernel, left, right, quad))


def _dense_from_terms(kernel, grid, quad, avg_order):
    nc = grid.num_cells
    v = grid.cell_volume
    n = grid.n
    idx = np.stack(np.meshgrid(*[np.arange(k) for k in n], indexing="ij"),
                   axis=-1).reshape(nc, len(n))
    gather = None
    mat = np.zeros((kernel.components * nc, nc))
    for comp, bvec, block, avec in _term_blocks(kernel, grid, quad, avg_order):
        blk = mat[comp * nc:(comp + 1) * nc]
        if block is None:
            blk += v * np.outer(bvec, avec)
        else:
            if gather is None:
                d = idx[:, None, :] - idx[None, :, :]
                gather = tuple(d[..., ax] + n[ax] - 1 for ax in range(len(n)))
            blk += v * bvec[:, None] * block[gather] * avec[None, :]
    return mat


def _cell_nodes(grid, order):
    base, wts = _leggauss(order)
    h = grid.cell_widths
    per_axis = [0.5 * h[i] * base for i in range(grid.dim)]
    g = np.meshgrid(*per_axis, indexing="ij")
    offs = np.stack([a.ravel() for a in g], axis=1)
    w = wts.copy()
    for _ in range(grid.dim - 1):
        w = np.multiply.outer(w, wts)
    return offs, w.ravel() / 2.0**grid.dim


def _dense_from_quadrature(kernel, left, right, quad):
    sqrt_vv = np.sqrt(left.cell_volume * right.cell_volume)
    tc = left.centers()
    xc = right.centers()
    nt, nx = left.num_cells, right.num_cells
    t_off, t_w = _cell_nodes(left, quad.order)
    x_off, x_w = _cell_nodes(right, quad.order)
    mat = np.zeros((kernel.components * nt, nx))

    def fill(i, j_idx, toff, tw, xoff, xw, budget=4_000_000):
        P, Q = toff.shape[0], xoff.shape[0]
        step = max(1, budget // (P * Q))
        for start in range(0, j_idx.size, step):
            jj = j_idx[start:start + step]
            tn = tc[i] + toff  # (P, dt)
            xn = xc[jj][:, None, :] + xoff[None, :, :]  # (J, Q, dx)
            J = xn.shape[0]
            tt = np.broadcast_to(tn[None, :, None, :], (J, P, Q, tn.shape[1])).reshape(-1, tn.shape[1])
            xx = np.broadcast_to(xn[:, None, :, :], (J, P, Q, xn.shape[2])).reshape(-1, xn.shape[2])
            vals, _ = kernel.evaluate(tt, xx)
            vals = vals.reshape(J, P, Q, kernel.components)
            avg = np.einsum("jpqc,p,q->jc", vals, tw, xw)
            for c in range(kernel.components):
                mat[c * nt + i, jj] = sqrt_vv * avg[:, c]

    singular_pairs = None
    if kernel.diagonal_singular and left.dim == right.dim:
        # pairs whose closures meet {t = x}: cells overlapping per axis
        lo_t = tc - 0.5 * left.cell_widths
        hi_t = tc + 0.5 * left.cell_widths
        lo_x = xc - 0.5 * right.cell_widths
        hi_x = xc + 0.5 * right.cell_widths
        singular_pairs = []
        for i in range(nt):
            touch = np.all((hi_t[i] >= lo_x) & (lo_t[i] <= hi_x), axis=1)
            singular_pairs.append(np.nonzero(touch)[0])

    for i in range(nt):
        fill(i, np.arange(nx), t_off, t_w, x_off, x_w)
    if singular_pairs is not None:
        s_toff, s_tw = _cell_nodes(left, quad.singular_order)
        s_xoff, s_xw = _cell_nodes(right, quad.singular_order)
        for i in range(nt):
            if singular_pairs[i].size:
                fill(i, singular_pairs[i], s_toff, s_tw, s_xoff, s_xw)
    return mat


# ---------------------------------------------------------------------------
# convolutional assembly
# ---------------------------------------------------------------------------


def assemble_convolutional(source, grid, rank=8, rank_tol=1e-10, quad=None, avg_order=4):
    """Matrix-free operator from a ModelKernelSpec or a structured KernelField.

    Model kernels get their beta factors expanded to separable rank <= rank
    by cross approximation on the cell grid; a residual above rank_tol raises
    SeparableRankError.  The matvec costs O(n log n) per term.
    """
    quad = quad or QuadratureRule()
    if isinstance(source, ModelKernelSpec):
        kernel = _model_terms_kernel(source, grid, rank, rank_tol)
    elif isinstance(source, KernelField):
        if source.terms is None:
            raise ValueError("kernel has no structured decomposition; "
                             "use assemble_dense or provide separable factors")
        kernel = source
    else:
        raise TypeError("source must be a ModelKernelSpec or KernelField")
    _require_shared_grid(grid, grid)
    nc = grid.num_cells
    v = grid.cell_volume
    per_component = {c: [] for c in range(kernel.components)}
    for comp, bvec, block, avec in _term_blocks(kernel, grid, quad, avg_order):
        if block is None:
            per_component[comp].append(Rank1Operator(v * bvec, avec))
        else:
            conv = ConvolutionOperator(v * block, grid.n)
            per_component[comp].append(
                op_compose(DiagonalOperator(bvec), op_compose(conv, DiagonalOperator(avec))))
    parts = []
    for c in range(kernel.components):
        ops = per_component[c]
        parts.append(op_sum(*ops) if ops else ZeroOperator(nc, nc))
    return op_stack(*parts)


def separable_expansion(func, t_pts, x_pts, rank, tol):
    """Cross approximation of func(t, x) sampled on t_pts x x_pts.

    Returns (us, vs, residual): func(t_i, x_j) ~= sum_r us[r][i] vs[r][j].
    The residual is the largest remainder sampled on the pivot cross.
    """
    m, n = t_pts.shape[0], x_pts.shape[0]

    def row(i):
        return np.asarray(func(np.broadcast_to(t_pts[i], (n, t_pts.shape[1])), x_pts))

    def col(j):
        return np.asarray(func(t_pts, np.broadcast_to(x_pts[j], (m, x_pts.shape[1]))))

    us, vs = [], []
    i_piv = 0
    residual = np.inf
    scale = None
    for _ in range(rank):
        r = row(i_piv)
        for u, vv in zip(us, vs):
            r = r - u[i_piv] * vv
        j_piv = int(np.argmax(np.abs(r)))
        pivot = r[j_piv]
        if scale is None:
            scale = max(abs(pivot), 1e-300)
        residual = abs(pivot) / scale
        if residual <= tol:
            return us, vs, residual
        c = col(j_piv)
        for u, vv in zip(us, vs):
            c = c - vv[j_piv] * u
        us.append(c / pivot)
        vs.append(r.copy())
        i_piv = int(np.argmax(np.abs(c)))
    # one more cross sample to estimate the remainder
    r = row(i_piv)
    for u, vv in zip(us, vs):
        r = r - u[i_piv] * vv
    residual = float(np.max(np.abs(r)) / scale)
    if residual > tol:
        raise SeparableRankError(
            f"beta requires separable rank > {rank}: residual {residual:.3e} > {tol:g}")
    return us, vs, residual


def _model_terms_kernel(spec, grid, rank, rank_tol):
    """Expand beta factors on the grid and emit a structured KernelField."""
    if spec.N != 2:
        raise ValueError("convolutional assembly supports the two-particle case")
    centers = grid.centers()
    m = spec.phi.components
    terms = []
    for j in range(spec.N):
        b = spec.b[j][0]
        beta = spec.beta[j][0]

        def beta_pair(t, x, beta=beta):
            return beta(np.hstack([np.atleast_2d(t), np.atleast_2d(x)]))

        us, vs, _ = separable_expansion(beta_pair, centers, centers, rank, rank_tol)
        for u, vvec in zip(us, vs):
            left = _tabulated(grid, u, b)
            right = _tabulated(grid, vvec, spec.a)
            for c in range(m):
                terms.append(ConvolutionTerm(j * m + c, left, spec.phi, c, right))
    return KernelField(3, 3, spec.components, model_kernel(spec).evaluate,
                       terms=tuple(terms), t_box=grid.box, x_box=grid.box)


def _tabulated(grid, values, weight_field):
    """Callable = weight_field(p) * nearest-cell tabulated expansion factor."""
    lo = np.asarray(grid.box.lo)
    h = grid.cell_widths
    n = grid.n
    cube = values.reshape(n)

    def f(pts):
        pts = np.atleast_2d(pts)
        idx = np.clip(((pts - lo) / h).astype(int), 0, np.asarray(n) - 1)
        return weight_field(pts) * cube[tuple(idx.T)]

    return f
