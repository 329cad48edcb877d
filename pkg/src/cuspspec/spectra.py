"""Singular values and PSD eigenvalues of discrete operators.

Dense operators go through LAPACK's full bidiagonalization.  Matrix-free
operators use Golub-Kahan Lanczos bidiagonalization with full
reorthogonalization and a residual certificate per retained value; a memory
guard drops to one-sided (right-basis) reorthogonalization on very tall
problems.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh_tridiagonal, svd

from .operators import DenseOperator, DiscreteOperator, gram

__all__ = ["SpectralSequence", "singular_values", "eigenvalues_psd"]

REORTH_MEMORY_BUDGET = 1_500_000_000  # bytes for the stored left basis


@dataclass(frozen=True)
class SpectralSequence:
    """Decreasing non-negative sequence with per-value residual certificates."""

    values: np.ndarray
    residuals: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if np.any(v < -1e-300):
            raise ValueError("spectral values must be non-negative")
        if np.any(np.diff(v) > 1e-12 * max(v[0] if v.size else 0.0, 1e-300)):
            raise ValueError("spectral values must be sorted descending")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "residuals", np.asarray(self.residuals, dtype=float))

    @property
    def count(self):
        return self.values.size

    def __len__(self):
        return self.values.size

    def __getitem__(self, k):
        return self.values[k]

    def truncated(self, k):
        return SpectralSequence(self.values[:k], self.residuals[:k], dict(self.provenance))

    def scaled(self, c):
        if c <= 0:
            raise ValueError("scale must be positive")
        return SpectralSequence(c * self.values, c * self.residuals, dict(self.provenance))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "s_k", "residual"])
            for k, (s, r) in enumerate(zip(self.values, self.residuals), start=1):
                w.writerow([k, f"{s:.16e}", f"{r:.6e}"])

    @staticmethod
    def from_csv(path):
        vals, res = [], []
        with open(path, newline="") as fh:
            for rec in csv.DictReader(fh):
                vals.append(float(rec["s_k"]))
                res.append(float(rec["residual"]))
        return SpectralSequence(np.asarray(vals), np.asarray(res))


def _dense_svd_sequence(matrix, k, provenance):
    s = svd(matrix, compute_uv=False)
    s = s[:k] if k is not None else s
    tol = np.finfo(float).eps * (s[0] if s.size else 0.0) * max(matrix.shape)
    return SpectralSequence(s, np.full(s.size, tol), provenance)


def singular_values(op, k=None, tol=1e-10, max_iter=None, seed=0):
    """Top-k singular values of a DiscreteOperator.

    Dense operators: full SVD.  Matrix-free: Lanczos bidiagonalization; the
    returned prefix is certified to residual <= tol * s_1.  If the iteration
    budget runs out, the certified prefix is returned and the provenance
    records convergence failure.
    """
    if not isinstance(op, DiscreteOperator):
        op = DenseOperator(np.asarray(op, dtype=float))
    kmax = min(op.rows, op.cols)
    if k is None:
        k = kmax
    if k > kmax:
        raise ValueError(f"requested {k} singular values of a {op.shape} operator")
    prov = {"operator": f"{op.kind}{op.shape}", "k": k, "tol": tol}
    if isinstance(op, DenseOperator):
        prov["method"] = "dense-svd"
        return _dense_svd_sequence(op.matrix, k, prov)
    return _lanczos_bidiag(op, k, tol, max_iter, seed, prov)


def _lanczos_bidiag(op, k, tol, max_iter, seed, prov):
    n = op.cols
    kmax = min(op.rows, op.cols)
    if max_iter is None:
        max_iter = min(kmax, max(2 * k + 40, int(1.4 * k) + 20))
    max_iter = min(max_iter, kmax)
    rng = np.random.default_rng(seed)
    store_left = op.rows * max_iter * 8 <= REORTH_MEMORY_BUDGET
    prov["method"] = "lanczos-gk" + ("" if store_left else "-onesided")

    V = np.zeros((max_iter + 1, n))
    U = np.zeros((max_iter, op.rows)) if store_left else None
    alphas = np.zeros(max_iter)
    betas = np.zeros(max_iter)

    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    V[0] = v
    u = op.apply(v)
    alphas[0] = np.linalg.norm(u)
    if alphas[0] == 0.0:
        return SpectralSequence(np.zeros(k), np.zeros(k), prov)
    u /= alphas[0]
    if store_left:
        U[0] = u

    m = 0
    breakdown = False
    for i in range(max_iter):
        m = i + 1
        w = op.apply_adjoint(u) - alphas[i] * V[i]
        # full reorthogonalization (twice) against the right basis
        for _ in range(2):
            w -= V[:m].T @ (V[:m] @ w)
        betas[i] = np.linalg.norm(w)
        if betas[i] <= 1e-14 * alphas[:m].max():
            breakdown = True
            break
        if i + 1 >= max_iter:
            break
        V[i + 1] = w / betas[i]
        u_next = op.apply(V[i + 1]) - betas[i] * u
        if store_left:
            for _ in range(2):
                u_next -= U[:m].T @ (U[:m] @ u_next)
        alphas[i + 1] = np.linalg.norm(u_next)
        if alphas[i + 1] <= 1e-14 * alphas[:m].max():
            # the bidiagonal factor still carries beta_i in row i+1
            m = i + 2
            breakdown = True
            break
        u = u_next / alphas[i + 1]
        if store_left:
            U[i + 1] = u

    if m == kmax:
        # the Krylov space exhausts the smaller side: the factorization is
        # exact and the trailing beta is pure reorthogonalization noise
        breakdown = True
    B = np.diag(alphas[:m])
    if m > 1:
        B += np.diag(betas[:m - 1], 1)
    P, sigma, _ = svd(B)
    if breakdown:
        residual = np.zeros(m)
    else:
        residual = betas[m - 1] * np.abs(P[-1, :])
    s1 = sigma[0] if sigma.size else 0.0
    certified = residual <= tol * max(s1, 1e-300)
    # certified prefix: leading run of certified Ritz values
    ncert = int(np.argmin(certified)) if not certified.all() else m
    prov["iterations"] = m
    prov["converged"] = bool(ncert >= k or breakdown)
    take = min(k, ncert) if not breakdown else min(k, m)
    vals = sigma[:take]
    res = residual[:take]
    if breakdown and take < k:
        # operator rank exhausted: the remaining singular values are zero
        pad = k - take
        vals = np.concatenate([vals, np.zeros(pad)])
        res = np.concatenate([res, np.zeros(pad)])
        prov["converged"] = True
    return SpectralSequence(vals, res, prov)


def eigenvalues_psd(op, k=None, tol=1e-10, max_iter=None, seed=0):
    """Top-k eigenvalues of a PSD operator (typically the composite V* V).

    Dense path: eigendecomposition of the materialized Gram matrix when the
    operator is dense; otherwise symmetric Lanczos with full
    reorthogonalization and residual certificates.
    """
    if isinstance(op, DiscreteOperator) and op.rows != op.cols:
        op = gram(op)
    if not isinstance(op, DiscreteOperator):
        mat = np.asarray(op, dtype=float)
        vals = np.linalg.eigvalsh(mat)[::-1]
        vals = np.clip(vals, 0.0, None)
        if k is not None:
            vals = vals[:k]
        res = np.full(vals.size, np.finfo(float).eps * (vals[0] if vals.size else 0.0) * mat.shape[0])
        return SpectralSequence(vals, res, {"method": "dense-eigh"})
    n = op.cols
    if k is None:
        k = n
    if max_iter is None:
        max_iter = min(n, max(2 * k + 40, int(1.4 * k) + 20))
    max_iter = min(max_iter, n)
    rng = np.random.default_rng(seed)
    prov = {"operator": f"{op.kind}({op.rows}x{op.cols})", "k": k, "tol": tol,
            "method": "lanczos-symmetric"}

    V = np.zeros((max_iter + 1, n))
    alphas = np.zeros(max_iter)
    betas = np.zeros(max_iter)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    V[0] = v
    m = 0
    breakdown = False
    for i in range(max_iter):
        m = i + 1
        w = op.apply(V[i])
        alphas[i] = float(V[i] @ w)
        w = w - alphas[i] * V[i]
        if i > 0:
            w = w - betas[i - 1] * V[i - 1]
        for _ in range(2):
            w -= V[:m].T @ (V[:m] @ w)
        betas[i] = np.linalg.norm(w)
        scale = np.abs(alphas[:m]).max() + betas[:m].max()
        if betas[i] <= 1e-14 * max(scale, 1e-300):
            breakdown = True
            break
        if i + 1 < max_iter + 1:
            V[i + 1] = w / betas[i]

    if m == n:
        breakdown = True
    lam, Y = eigh_tridiagonal(alphas[:m], betas[:m - 1])
    order = np.argsort(lam)[::-1]
    lam = lam[order]
    Y = Y[:, order]
    residual = np.zeros(m) if breakdown else betas[m - 1] * np.abs(Y[-1, :])
    lam = np.clip(lam, 0.0, None)
    l1 = lam[0] if lam.size else 0.0
    certified = residual <= tol * max(l1, 1e-300)
    ncert = int(np.argmin(certified)) if not certified.all() else m
    take = min(k, m) if breakdown else min(k, ncert)
    vals = lam[:take]
    res = residual[:take]
    prov["iterations"] = m
    prov["converged"] = bool(take >= k or breakdown)
    if breakdown and take < k:
        vals = np.concatenate([vals, np.zeros(k - take)])
        res = np.concatenate([res, np.zeros(k - take)])
        prov["converged"] = True
    return SpectralSequence(vals, res, prov)
