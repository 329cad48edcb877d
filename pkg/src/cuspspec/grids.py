"""Cell grids carrying the normalized piecewise-constant Galerkin basis."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import Box
from .quadrature import _leggauss

__all__ = ["GridSpec", "refine", "cell_averages"]

MAX_CELLS = 2_000_000


@dataclass(frozen=True)
class GridSpec:
    """Uniform cell partition of a box; basis = unit-L2 cell indicators."""

    box: Box
    n: tuple

    def __post_init__(self):
        if np.isscalar(self.n):
            object.__setattr__(self, "n", (int(self.n),) * self.box.dim)
        if len(self.n) != self.box.dim:
            raise ValueError("n must give a cell count per axis")
        if any(k < 2 for k in self.n):
            raise ValueError("need at least 2 cells per axis")
        if int(np.prod(self.n)) > MAX_CELLS:
            raise ValueError(f"grid exceeds the {MAX_CELLS}-cell resource guard")

    @property
    def dim(self):
        return self.box.dim

    @property
    def num_cells(self):
        return int(np.prod(self.n))

    @property
    def cell_widths(self):
        return self.box.widths / np.asarray(self.n, dtype=float)

    @property
    def cell_volume(self):
        return float(np.prod(self.cell_widths))

    def centers(self):
        """Cell centers in C order, shape (num_cells, dim)."""
        axes = [
            np.asarray(self.box.lo[i]) + (np.arange(self.n[i]) + 0.5) * self.cell_widths[i]
            for i in range(self.dim)
        ]
        grids = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    def grid_id(self):
        lo = ",".join(f"{v:g}" for v in self.box.lo)
        hi = ",".join(f"{v:g}" for v in self.box.hi)
        nn = "x".join(str(k) for k in self.n)
        return f"grid[{lo};{hi};{nn}]"


def refine(grid, factor):
    """Same box, factor-times more cells per axis."""
    if int(factor) != factor or factor < 2:
        raise ValueError("refinement factor must be an integer >= 2")
    return GridSpec(grid.box, tuple(int(factor) * k for k in grid.n))


def cell_averages(grid, func, order=4):
    """Average of func over every cell, shape (num_cells,).

    func takes points (m, dim) and returns (m,).  Uses a tensor
    Gauss-Legendre rule of the given order per cell.
    """
    base, wts = _leggauss(order)
    h = grid.cell_widths
    centers = grid.centers()
    # tensor offsets within one cell
    per_axis = [0.5 * h[i] * base for i in range(grid.dim)]
    grids = np.meshgrid(*per_axis, indexing="ij")
    offs = np.stack([g.ravel() for g in grids], axis=1)  # (q^d, dim)
    w = wts.copy()
    for _ in range(grid.dim - 1):
        w = np.multiply.outer(w, wts)
    w = w.ravel() / 2.0**grid.dim  # averages: weights sum to 1
    out = np.zeros(grid.num_cells)
    chunk = max(1, int(2**21 // offs.shape[0]))
    for start in range(0, grid.num_cells, chunk):
        c = centers[start:start + chunk]
        pts = (c[:, None, :] + offs[None, :, :]).reshape(-1, grid.dim)
        vals = np.asarray(func(pts)).reshape(c.shape[0], offs.shape[0])
        out[start:start + chunk] = vals @ w
    return out
