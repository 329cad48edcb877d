"""Discrete rectangular operators with exact adjoints and lazy composition."""

from __future__ import annotations

import json

import numpy as np
from scipy import fft as sfft

__all__ = [
    "DiscreteOperator",
    "DenseOperator",
    "DiagonalOperator",
    "ConvolutionOperator",
    "Rank1Operator",
    "ZeroOperator",
    "op_adjoint",
    "gram",
    "op_sum",
    "op_stack",
    "op_compose",
    "op_scale",
    "adjoint_residual",
    "save_operator",
    "load_operator",
    "dense_matrix",
    "export_dense_csv",
]


class DiscreteOperator:
    """Rectangular linear map with adjoint; rows x cols over the real field."""

    rows: int
    cols: int
    kind: str

    def apply(self, u):
        raise NotImplementedError

    def apply_adjoint(self, v):
        raise NotImplementedError

    @property
    def shape(self):
        return (self.rows, self.cols)

    def _check(self, u, n):
        u = np.asarray(u, dtype=float)
        if u.shape != (n,):
            raise ValueError(f"expected vector of length {n}, got {u.shape}")
        return u

    # small algebra sugar
    def __add__(self, other):
        return op_sum(self, other)

    def __matmul__(self, other):
        return op_compose(self, other)

    def __rmul__(self, c):
        return op_scale(self, c)


class DenseOperator(DiscreteOperator):
    kind = "dense"

    def __init__(self, matrix):
        self.matrix = np.ascontiguousarray(matrix, dtype=float)
        self.rows, self.cols = self.matrix.shape

    def apply(self, u):
        return self.matrix @ self._check(u, self.cols)

    def apply_adjoint(self, v):
        return self.matrix.T @ self._check(v, self.rows)


class DiagonalOperator(DiscreteOperator):
    kind = "diagonal"

    def __init__(self, diag):
        self.diag = np.asarray(diag, dtype=float)
        self.rows = self.cols = self.diag.size

    def apply(self, u):
        return self.diag * self._check(u, self.cols)

    def apply_adjoint(self, v):
        return self.diag * self._check(v, self.rows)


class ZeroOperator(DiscreteOperator):
    kind = "zero"

    def __init__(self, rows, cols):
        self.rows = rows
        self.cols = cols

    def apply(self, u):
        self._check(u, self.cols)
        return np.zeros(self.rows)

    def apply_adjoint(self, v):
        self._check(v, self.rows)
        return np.zeros(self.cols)


class ConvolutionOperator(DiscreteOperator):
    """(T u)_i = sum_j c[i - j] u_j on an n1 x n2 x n3 cell grid.

    ``block`` holds c at signed offsets d in [-(n-1), n-1]^3 (index d + n - 1
    per axis).  The matvec is a zero-padded FFT convolution; the adjoint is
    convolution with the index-reversed block, realized by conjugating the
    precomputed symbol.
    """

    kind = "convolutional"

    def __init__(self, block, grid_shape):
        self.grid_shape = tuple(int(k) for k in grid_shape)
        n1, n2, n3 = self.grid_shape
        block = np.asarray(block, dtype=float)
        if block.shape != (2 * n1 - 1, 2 * n2 - 1, 2 * n3 - 1):
            raise ValueError("block must cover offsets -(n-1)..(n-1) per axis")
        self.block = block
        self.rows = self.cols = n1 * n2 * n3
        self._fft_shape = tuple(sfft.next_fast_len(2 * k - 1) for k in self.grid_shape)
        wrapped = np.zeros(self._fft_shape)
        idx = np.ix_(*[np.arange(-(k - 1), k) % L for k, L in zip(self.grid_shape, self._fft_shape)])
        wrapped[idx] = block
        self._symbol = sfft.rfftn(wrapped)

    def _convolve(self, u, symbol):
        cube = self._check(u, self.cols).reshape(self.grid_shape)
        spec = sfft.rfftn(cube, s=self._fft_shape)
        full = sfft.irfftn(spec * symbol, s=self._fft_shape)
        n1, n2, n3 = self.grid_shape
        return full[:n1, :n2, :n3].ravel()

    def apply(self, u):
        return self._convolve(u, self._symbol)

    def apply_adjoint(self, v):
        # real block: reversed-kernel symbol is the complex conjugate
        return self._convolve(v, np.conj(self._symbol))


class Rank1Operator(DiscreteOperator):
    """u -> left * (right . u); the rank-one term of separable kernels."""

    kind = "rank1"

    def __init__(self, left, right):
        self.left = np.asarray(left, dtype=float)
        self.right = np.asarray(right, dtype=float)
        self.rows = self.left.size
        self.cols = self.right.size

    def apply(self, u):
        return self.left * float(self.right @ self._check(u, self.cols))

    def apply_adjoint(self, v):
        return self.right * float(self.left @ self._check(v, self.rows))


class _Scaled(DiscreteOperator):
    kind = "scaled"

    def __init__(self, op, c):
        self.op = op
        self.c = float(c)
        self.rows, self.cols = op.rows, op.cols

    def apply(self, u):
        return self.c * self.op.apply(u)

    def apply_adjoint(self, v):
        return self.c * self.op.apply_adjoint(v)


class _Sum(DiscreteOperator):
    kind = "sum"

    def __init__(self, ops):
        rows = {o.rows for o in ops}
        cols = {o.cols for o in ops}
        if len(rows) != 1 or len(cols) != 1:
            raise ValueError("summands must share dimensions")
        self.ops = tuple(ops)
        self.rows = rows.pop()
        self.cols = cols.pop()

    def apply(self, u):
        out = self.ops[0].apply(u)
        for op in self.ops[1:]:
            out = out + op.apply(u)
        return out

    def apply_adjoint(self, v):
        out = self.ops[0].apply_adjoint(v)
        for op in self.ops[1:]:
            out = out + op.apply_adjoint(v)
        return out


class _Stack(DiscreteOperator):
    """Vertical stack {T_j}: maps u to the concatenation of T_j u."""

    kind = "stack"

    def __init__(self, ops):
        cols = {o.cols for o in ops}
        if len(cols) != 1:
            raise ValueError("stacked operators must share the domain")
        self.ops = tuple(ops)
        self.cols = cols.pop()
        self.rows = sum(o.rows for o in ops)
        self._offsets = np.cumsum([0] + [o.rows for o in ops])

    def apply(self, u):
        return np.concatenate([op.apply(u) for op in self.ops])

    def apply_adjoint(self, v):
        v = self._check(v, self.rows)
        out = np.zeros(self.cols)
        for op, a, b in zip(self.ops, self._offsets[:-1], self._offsets[1:]):
            out += op.apply_adjoint(v[a:b])
        return out


class _Compose(DiscreteOperator):
    kind = "composite"

    def __init__(self, outer, inner):
        if outer.cols != inner.rows:
            raise ValueError("composition dimension mismatch")
        self.outer = outer
        self.inner = inner
        self.rows = outer.rows
        self.cols = inner.cols

    def apply(self, u):
        return self.outer.apply(self.inner.apply(u))

    def apply_adjoint(self, v):
        return self.inner.apply_adjoint(self.outer.apply_adjoint(v))


class _Adjoint(DiscreteOperator):
    kind = "adjoint"

    def __init__(self, op):
        self.op = op
        self.rows, self.cols = op.cols, op.rows

    def apply(self, u):
        return self.op.apply_adjoint(u)

    def apply_adjoint(self, v):
        return self.op.apply(v)


def op_sum(*ops):
    return _Sum(ops)


def op_stack(*ops):
    return _Stack(ops)


def op_compose(outer, inner):
    return _Compose(outer, inner)


def op_scale(op, c):
    return _Scaled(op, c)


def op_adjoint(op):
    return _Adjoint(op)


def gram(op):
    """The PSD composition op* op."""
    return _Compose(_Adjoint(op), op)


def adjoint_residual(op, trials=10, seed=0):
    """max |<Au, v> - <u, A*v>| / (|Au||v| + |u||A*v|) over random pairs."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        u = rng.standard_normal(op.cols)
        v = rng.standard_normal(op.rows)
        au = op.apply(u)
        atv = op.apply_adjoint(v)
        num = abs(float(au @ v) - float(u @ atv))
        den = np.linalg.norm(au) * np.linalg.norm(v) + np.linalg.norm(u) * np.linalg.norm(atv)
        if den > 0:
            worst = max(worst, num / den)
    return worst


def dense_matrix(op, max_entries=40_000_000):
    """Materialize any operator column by column (oracle-sized problems only)."""
    if op.rows * op.cols > max_entries:
        raise ValueError("operator too large to materialize densely")
    if isinstance(op, DenseOperator):
        return op.matrix.copy()
    out = np.empty((op.rows, op.cols))
    e = np.zeros(op.cols)
    for j in range(op.cols):
        e[j] = 1.0
        out[:, j] = op.apply(e)
        e[j] = 0.0
    return out


def export_dense_csv(op, path):
    np.savetxt(path, dense_matrix(op), delimiter=",")


# ---------------------------------------------------------------------------
# binary container (npz payload + JSON structure header)
# ---------------------------------------------------------------------------


def _flatten(op, arrays, prefix):
    if isinstance(op, DenseOperator):
        arrays[prefix] = op.matrix
        return {"kind": "dense", "key": prefix}
    if isinstance(op, DiagonalOperator):
        arrays[prefix] = op.diag
        return {"kind": "diagonal", "key": prefix}
    if isinstance(op, ConvolutionOperator):
        arrays[prefix] = op.block
        return {"kind": "convolutional", "key": prefix, "grid_shape": list(op.grid_shape)}
    if isinstance(op, ZeroOperator):
        return {"kind": "zero", "rows": op.rows, "cols": op.cols}
    if isinstance(op, Rank1Operator):
        arrays[prefix + "L"] = op.left
        arrays[prefix + "R"] = op.right
        return {"kind": "rank1", "key": prefix}
    if isinstance(op, _Scaled):
        return {"kind": "scaled", "c": op.c, "child": _flatten(op.op, arrays, prefix + "s")}
    if isinstance(op, _Adjoint):
        return {"kind": "adjoint", "child": _flatten(op.op, arrays, prefix + "a")}
    if isinstance(op, (_Sum, _Stack)):
        return {
            "kind": op.kind,
            "children": [_flatten(o, arrays, f"{prefix}{i}_") for i, o in enumerate(op.ops)],
        }
    if isinstance(op, _Compose):
        return {
            "kind": "composite",
            "outer": _flatten(op.outer, arrays, prefix + "o"),
            "inner": _flatten(op.inner, arrays, prefix + "i"),
        }
    raise TypeError(f"cannot serialize operator of type {type(op).__name__}")


def save_operator(op, path):
    """Serialize to an npz container: header JSON plus one array per leaf."""
    arrays = {}
    header = _flatten(op, arrays, "k")
    header["dims"] = [op.rows, op.cols]
    np.savez(path, __header__=np.frombuffer(json.dumps(header).encode(), dtype=np.uint8), **arrays)


def _rebuild(node, data):
    kind = node["kind"]
    if kind == "dense":
        return DenseOperator(data[node["key"]])
    if kind == "diagonal":
        return DiagonalOperator(data[node["key"]])
    if kind == "convolutional":
        return ConvolutionOperator(data[node["key"]], node["grid_shape"])
    if kind == "zero":
        return ZeroOperator(node["rows"], node["cols"])
    if kind == "rank1":
        return Rank1Operator(data[node["key"] + "L"], data[node["key"] + "R"])
    if kind == "scaled":
        return _Scaled(_rebuild(node["child"], data), node["c"])
    if kind == "adjoint":
        return _Adjoint(_rebuild(node["child"], data))
    if kind == "sum":
        return _Sum([_rebuild(c, data) for c in node["children"]])
    if kind == "stack":
        return _Stack([_rebuild(c, data) for c in node["children"]])
    if kind == "composite":
        return _Compose(_rebuild(node["outer"], data), _rebuild(node["inner"], data))
    raise ValueError(f"unknown operator kind {kind!r}")


def load_operator(path):
    with np.load(path) as data:
        header = json.loads(bytes(data["__header__"]).decode())
        return _rebuild(header, data)
