"""Hot numeric kernels: cell-pair averages of homogeneous convolution factors.

Each kernel has a numba @njit implementation and a pure-numpy fallback.  The
backend is chosen once at import time from the CUSPSPEC_NUMBA environment
variable: "1" forces numba (raising if unavailable), "0" forces numpy, and
anything else (or unset) auto-selects numba when importable.
"""

from __future__ import annotations

import os

import numpy as np

from .quadrature import _leggauss

__all__ = ["backend_name", "offset_averages", "offset_averages_generic", "pair_diff_rule"]

KIND_GRAD_ABS = 0
KIND_ABS = 1

_env = os.environ.get("CUSPSPEC_NUMBA", "auto").strip().lower()
# pick a threading layer that is available everywhere instead of letting
# numba probe TBB (which warns on mismatched TBB versions)
os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")
if _env == "0":
    _numba = None
elif _env == "1":
    import numba as _numba
else:
    try:
        import numba as _numba
    except ImportError:  # pragma: no cover
        _numba = None


def backend_name():
    return "numba" if _numba is not None else "numpy"


def pair_diff_rule(h, order):
    """Quadrature for f -> int f(s) prod_c (h_c - |s_c|)/h_c^2 ds over [-h, h]^3.

    This weight is the difference-coordinate density of a pair of cells with
    widths h; integrating K(offset * h + s) against it yields the exact
    cell-pair average of K(t - x).  Nodes are symmetric per axis, so odd
    kernels average to zero exactly.
    """
    h = np.asarray(h, dtype=float)
    base, wts = _leggauss(order)
    axes = []
    for c in range(3):
        s = 0.5 * h[c] * (base + 1.0)  # nodes on (0, h)
        w = 0.5 * h[c] * wts * (h[c] - s) / h[c] ** 2
        nodes = np.concatenate([-s[::-1], s])
        weights = np.concatenate([w[::-1], w])
        axes.append((nodes, weights))
    gx, gy, gz = np.meshgrid(axes[0][0], axes[1][0], axes[2][0], indexing="ij")
    nodes = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)
    w = np.einsum("i,j,k->ijk", axes[0][1], axes[1][1], axes[2][1]).ravel()
    return nodes, w


def _offset_averages_numpy(offsets, h, nodes, weights, kind):
    offsets = np.asarray(offsets, dtype=np.int64)
    h = np.asarray(h, dtype=float)
    m = 3 if kind == KIND_GRAD_ABS else 1
    out = np.zeros((offsets.shape[0], m))
    chunk = max(1, int(2**22 // max(nodes.shape[0], 1)))
    for start in range(0, offsets.shape[0], chunk):
        off = offsets[start:start + chunk]
        pts = off[:, None, :] * h + nodes[None, :, :]  # (M, P, 3)
        r = np.sqrt(np.sum(pts * pts, axis=2))
        if kind == KIND_GRAD_ABS:
            safe = np.where(r == 0.0, 1.0, r)
            vals = pts / safe[:, :, None]
            vals[r == 0.0] = 0.0
            out[start:start + chunk] = np.einsum("mpc,p->mc", vals, weights)
        else:
            out[start:start + chunk, 0] = r @ weights
    return out


if _numba is not None:

    @_numba.njit(parallel=True, cache=True)
    def _offset_averages_numba(offsets, h, nodes, weights, kind):  # pragma: no cover
        n_off = offsets.shape[0]
        n_pts = nodes.shape[0]
        m = 3 if kind == 0 else 1
        out = np.zeros((n_off, m))
        for i in _numba.prange(n_off):
            ox = offsets[i, 0] * h[0]
            oy = offsets[i, 1] * h[1]
            oz = offsets[i, 2] * h[2]
            a0 = 0.0
            a1 = 0.0
            a2 = 0.0
            for p in range(n_pts):
                x = ox + nodes[p, 0]
                y = oy + nodes[p, 1]
                z = oz + nodes[p, 2]
                r = np.sqrt(x * x + y * y + z * z)
                if kind == 0:
                    if r > 0.0:
                        w = weights[p] / r
                        a0 += w * x
                        a1 += w * y
                        a2 += w * z
                else:
                    a0 += weights[p] * r
            out[i, 0] = a0
            if m == 3:
                out[i, 1] = a1
                out[i, 2] = a2
        return out


def offset_averages(offsets, h, rule, kind, singular_radius=2):
    """Cell-pair averages of a built-in homogeneous kernel at integer offsets.

    offsets: (M, 3) integer cell-index differences; h: cell widths;
    rule: QuadratureRule.  Offsets with |d|_inf <= singular_radius are
    re-evaluated with the oversampled rule to resolve the diagonal kink.
    Returns (M, components).
    """
    offsets = np.ascontiguousarray(offsets, dtype=np.int64)
    h = np.ascontiguousarray(np.asarray(h, dtype=float))
    nodes, weights = pair_diff_rule(h, rule.order)
    if _numba is not None:
        out = _offset_averages_numba(offsets, h, nodes, weights, kind)
    else:
        out = _offset_averages_numpy(offsets, h, nodes, weights, kind)
    near = np.max(np.abs(offsets), axis=1) <= singular_radius
    if np.any(near):
        fine_nodes, fine_weights = pair_diff_rule(h, rule.singular_order)
        sub = np.ascontiguousarray(offsets[near])
        if _numba is not None:
            out[near] = _offset_averages_numba(sub, h, fine_nodes, fine_weights, kind)
        else:
            out[near] = _offset_averages_numpy(sub, h, fine_nodes, fine_weights, kind)
    return out


def offset_averages_generic(offsets, h, rule, func, components, oversample_all=False):
    """Numpy-only variant for arbitrary difference kernels func((P,3)) -> (P, m)."""
    offsets = np.asarray(offsets, dtype=np.int64)
    h = np.asarray(h, dtype=float)
    order = rule.singular_order if oversample_all else rule.order
    nodes, weights = pair_diff_rule(h, order)
    out = np.zeros((offsets.shape[0], components))
    chunk = max(1, int(2**21 // max(nodes.shape[0], 1)))
    for start in range(0, offsets.shape[0], chunk):
        off = offsets[start:start + chunk]
        pts = (off[:, None, :] * h + nodes[None, :, :]).reshape(-1, 3)
        vals = np.asarray(func(pts)).reshape(off.shape[0], nodes.shape[0], components)
        out[start:start + chunk] = np.einsum("mpc,p->mc", vals, weights)
    return out
