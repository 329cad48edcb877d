"""Independent ground-truth generators.

Nothing here shares code with the matrix-free assembly path beyond the basic
cell-averaging helpers: dense SVD brute force, Fourier symbols on the torus
for translation-invariant kernels, a continuum radial-symbol integral for the
universal grad-abs constant, closed-form Gaussian coefficients evaluated
symbolically, and a finite-difference check of analytic kernel gradients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import svd

from ._accel import KIND_ABS, KIND_GRAD_ABS, offset_averages, offset_averages_generic
from .fields import default_profile
from .quadrature import QuadratureRule
from .spectra import SpectralSequence

__all__ = [
    "TorusSpectrum",
    "torus_symbol_spectrum",
    "torus_galerkin_matrix",
    "counting_constant",
    "radial_symbol_constant",
    "dense_oracle",
    "gaussian_closed_forms",
    "fd_gradient_error",
]


@dataclass(frozen=True)
class TorusSpectrum:
    """Sorted singular values of a translation-invariant kernel on the torus.

    The values are the Euclidean norms of the discrete Fourier symbol of the
    periodized, smoothly truncated kernel, one per lattice frequency.
    """

    lattice: int
    period: float
    truncation_radius: float
    values: np.ndarray

    def to_sequence(self):
        eps = np.finfo(float).eps * (self.values[0] if self.values.size else 0.0)
        return SpectralSequence(self.values, np.full(self.values.size, eps),
                                {"method": "torus-symbol", "lattice": self.lattice})


def _wrapped_offsets(n):
    ax = np.arange(n)
    sax = np.where(ax < (n + 1) // 2, ax, ax - n)
    g = np.meshgrid(sax, sax, sax, indexing="ij")
    return np.stack([a.ravel() for a in g], axis=1)


def _truncated_offset_block(phi, truncation_radius, lattice, period, profile, quad):
    """Cell averages of phi times the radial cutoff at every wrapped offset.

    Returns an (n^3, m) array ordered like the FFT frequency layout.
    """
    n = lattice
    h = np.full(3, period / n)
    offsets = _wrapped_offsets(n)
    if phi.name == "grad_abs":
        vals = offset_averages(offsets, h, quad, KIND_GRAD_ABS)
    elif phi.name == "abs":
        vals = offset_averages(offsets, h, quad, KIND_ABS)
    else:
        vals = offset_averages_generic(offsets, h, quad, phi.func, phi.components,
                                       oversample_all=True)
    r = np.linalg.norm(offsets * h, axis=1)
    cut = profile.theta(r / truncation_radius)
    return vals * cut[:, None]


def torus_symbol_spectrum(phi, truncation_radius, lattice, period=1.0,
                          profile=None, quad=None):
    """Singular values of the periodized truncated kernel via its symbol.

    The kernel K(y) = phi(y) * theta(|y| / R) is cell-averaged on the n^3
    torus lattice, transformed by FFT per component, and the singular value
    at each frequency is the norm of the symbol vector.
    """
    if phi.dim != 3:
        raise ValueError("torus oracle requires a kernel on R^3")
    if truncation_radius > period / 2:
        raise ValueError("truncation radius exceeds half the torus (wrap-around)")
    profile = profile if profile is not None else default_profile()
    quad = quad if quad is not None else QuadratureRule()
    n = lattice
    block = _truncated_offset_block(phi, truncation_radius, lattice, period, profile, quad)
    v = (period / n) ** 3  # cell volume: the Galerkin weight sqrt(v_t v_x)
    cube = (v * block).reshape(n, n, n, phi.components)
    sym = np.fft.fftn(cube, axes=(0, 1, 2))
    s = np.sqrt(np.sum(np.abs(sym) ** 2, axis=-1)).ravel()
    s.sort()
    return TorusSpectrum(lattice=n, period=period, truncation_radius=truncation_radius,
                         values=s[::-1].copy())


def torus_galerkin_matrix(phi, truncation_radius, lattice, period=1.0,
                          profile=None, quad=None):
    """Dense Galerkin matrix of the same truncated kernel on the torus.

    The piecewise-constant Galerkin matrix of a periodized difference kernel
    is the (block) circulant of its cell averages; materialized here row by
    row without any Fourier shortcut, as the brute-force counterpart of
    torus_symbol_spectrum.
    """
    if truncation_radius > period / 2:
        raise ValueError("truncation radius exceeds half the torus (wrap-around)")
    profile = profile if profile is not None else default_profile()
    quad = quad if quad is not None else QuadratureRule()
    n = lattice
    if (n ** 3) ** 2 * phi.components > 40_000_000:
        raise ValueError("torus lattice too large for the dense oracle")
    block = _truncated_offset_block(phi, truncation_radius, lattice, period, profile, quad)
    v = (period / n) ** 3
    cube = (v * block).reshape(n, n, n, phi.components)
    m = phi.components
    grid = np.indices((n, n, n)).reshape(3, -1)
    d0 = (grid[0][:, None] - grid[0][None, :]) % n
    d1 = (grid[1][:, None] - grid[1][None, :]) % n
    d2 = (grid[2][:, None] - grid[2][None, :]) % n
    rows = np.empty((m * n ** 3, n ** 3))
    for c in range(m):
        rows[c::m] = cube[..., c][d0, d1, d2]
    return rows


def counting_constant(spectrum, window):
    """Constant C of the counting fit N(s) ~ C / s, i.e. median of k * s_k."""
    values = spectrum.values if isinstance(spectrum, TorusSpectrum) else spectrum.values
    k_lo, k_hi = window
    k = np.arange(k_lo, k_hi + 1)
    return float(np.median(k * values[k_lo - 1:k_hi]))


def radial_symbol_constant(rho, truncation_radius=0.25, profile=None, points=4096):
    """Continuum estimate of the universal grad-abs constant at frequency rho.

    The Fourier symbol of (y/|y|) * theta(|y|/R) at |xi| = rho has magnitude
    g(rho) = 4 pi int_0^R theta(r/R) j1(2 pi rho r) r^2 dr (spherical Bessel
    j1).  The counting constant at that frequency is (4 pi / 3) rho^3 g(rho),
    which tends to 4 / (3 pi) as rho grows.  Pure 1-d quadrature; no lattice.
    """
    from scipy.special import spherical_jn

    profile = profile if profile is not None else default_profile()
    R = truncation_radius
    base, wts = np.polynomial.legendre.leggauss(64)
    # panel the oscillatory integrand finely relative to the 1/rho wavelength
    panels = max(64, min(points, int(8 * rho * R) + 64))
    edges = np.linspace(0.0, R, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    r = (mid[:, None] + half[:, None] * base).ravel()
    w = (half[:, None] * wts).ravel()
    integ = profile.theta(r / R) * spherical_jn(1, 2.0 * np.pi * rho * r) * r ** 2
    g = 4.0 * np.pi * float(np.dot(w, integ))
    return (4.0 * np.pi / 3.0) * rho ** 3 * g


def dense_oracle(kernel, left, right, quad=None, max_entries=40_000_000):
    """Full-SVD spectrum of the brute-force dense Galerkin matrix."""
    from .assemble import assemble_dense

    quad = quad if quad is not None else QuadratureRule()
    rows = left.num_cells * kernel.components
    if rows * right.num_cells > max_entries:
        raise ValueError("dense oracle size guard exceeded")
    mat = assemble_dense(kernel, left, right, quad=quad).matrix
    s = svd(mat, compute_uv=False)
    tol = np.finfo(float).eps * s[0] * max(mat.shape)
    return SpectralSequence(s, np.full(s.size, tol), {"method": "dense-oracle"})


def gaussian_closed_forms():
    """Closed-form tail coefficients for the unit-Gaussian pair density.

    For eta(t, x) = exp(-|t|^2) exp(-|x|^2) (two particles) the diagonal
    density is H(x) = sqrt(2) exp(-2|x|^2) and both coefficient integrals are
    Gaussian; everything is evaluated symbolically and returned as floats.
    """
    import sympy as sp

    x = sp.symbols("x", real=True)
    int_h = sp.integrate(sp.exp(-2 * x ** 2), (x, -sp.oo, sp.oo)) ** 3
    B = sp.Rational(4, 3) / sp.pi * sp.sqrt(2) * int_h
    int_h34 = sp.integrate(sp.exp(-sp.Rational(3, 2) * x ** 2), (x, -sp.oo, sp.oo)) ** 3
    A = sp.Rational(1, 3) * (2 / sp.pi) ** sp.Rational(5, 4) * 2 ** sp.Rational(3, 8) * int_h34
    nu = sp.Rational(4, 3) / sp.pi
    return {
        "B_unit_gaussian": float(B),
        "A_unit_gaussian": float(A),
        "B_scaled_by_2": float(2 * B),
        "B_shifted_center": float(B),  # translation invariance of the integral
        "nu_03": float(nu),
        "model_G1_unit_box": float(nu * sp.sqrt(2)),
    }


def fd_gradient_error(pe, pts, h):
    """Max relative error of the analytic cusp-kernel gradient vs central
    differences of psi(t, x) = xi + |t - x| eta at off-diagonal points."""
    from .kernels import gradient_kernel

    kernel = gradient_kernel(pe)
    pts_t = np.atleast_2d(pts[0])
    pts_x = np.atleast_2d(pts[1])
    exact, bad = kernel.evaluate(pts_t, pts_x)
    if np.any(bad):
        raise ValueError("finite-difference oracle needs off-diagonal points")
    approx = np.empty_like(exact)
    for c in range(3):
        e = np.zeros(3)
        e[c] = h
        approx[:, c] = (pe.psi(pts_t, pts_x + e) - pe.psi(pts_t, pts_x - e)) / (2 * h)
    scale = np.maximum(np.linalg.norm(exact, axis=1), 1e-300)
    return float(np.max(np.linalg.norm(approx - exact, axis=1) / scale))
