import numpy as np
import pytest
from scipy.linalg import svd

from cuspspec.fields import Box, gaussian, zero_field
from cuspspec.grids import GridSpec
from cuspspec.kernels import (
    BUILTIN_HOMOGENEOUS,
    HomogeneousFunction,
    gradient_kernel,
    separable_pair_expansion,
)
from cuspspec.oracles import (
    counting_constant,
    dense_oracle,
    fd_gradient_error,
    gaussian_closed_forms,
    radial_symbol_constant,
    torus_galerkin_matrix,
    torus_symbol_spectrum,
)
from cuspspec.predict import NU_03


def test_torus_symbol_matches_dense_circulant():
    phi = BUILTIN_HOMOGENEOUS["grad_abs"]
    spec = torus_symbol_spectrum(phi, truncation_radius=0.25, lattice=8)
    mat = torus_galerkin_matrix(phi, truncation_radius=0.25, lattice=8)
    ref = svd(mat, compute_uv=False)
    k = min(spec.values.size, ref.size)
    assert np.max(np.abs(spec.values[:k] - ref[:k])) < 1e-6 * ref[0]


def test_constant_kernel_dc_symbol_is_radial_integral():
    # the zero-frequency symbol of theta(|y|/R) is 4 pi int theta(r/R) r^2 dr;
    # the lattice value converges to it under refinement
    from cuspspec.fields import default_profile

    phi = HomogeneousFunction(3, 0.0, 1, lambda p: np.ones((p.shape[0], 1)),
                              name="unit")
    prof = default_profile()
    R = 0.4
    base, wts = np.polynomial.legendre.leggauss(64)
    r = 0.5 * R * (base + 1)
    exact = 4 * np.pi * np.dot(0.5 * R * wts, prof.theta(r / R) * r ** 2)
    errs = []
    for n in (8, 16):
        spec = torus_symbol_spectrum(phi, truncation_radius=R, lattice=n)
        errs.append(abs(spec.values[0] - exact) / exact)
    assert errs[1] < 1e-3
    assert errs[1] < 0.1 * errs[0]


def test_symbol_low_frequencies_converge_under_refinement():
    top8 = torus_symbol_spectrum(BUILTIN_HOMOGENEOUS["grad_abs"],
                                 truncation_radius=0.25, lattice=8).values[:10]
    top16 = torus_symbol_spectrum(BUILTIN_HOMOGENEOUS["grad_abs"],
                                  truncation_radius=0.25, lattice=16).values[:10]
    assert np.max(np.abs(top8 - top16) / top16) < 0.02


def test_radial_symbol_constant_tends_to_universal_value():
    lo = radial_symbol_constant(100.0)
    hi = radial_symbol_constant(400.0)
    assert abs(lo - NU_03) < 0.1 * NU_03
    assert abs(hi - NU_03) < 1e-6 * NU_03


def test_counting_constant_window():
    class _Fake:
        values = 2.0 / np.arange(1, 101)

    assert counting_constant(_Fake(), (10, 90)) == pytest.approx(2.0)


def test_truncation_wraparound_guard():
    phi = BUILTIN_HOMOGENEOUS["grad_abs"]
    with pytest.raises(ValueError):
        torus_symbol_spectrum(phi, truncation_radius=0.6, lattice=8)
    with pytest.raises(ValueError):
        torus_galerkin_matrix(phi, truncation_radius=0.6, lattice=8)
    with pytest.raises(ValueError):
        torus_galerkin_matrix(phi, truncation_radius=0.25, lattice=48)


def test_gaussian_closed_forms_match_quadrature_free_constants():
    forms = gaussian_closed_forms()
    assert forms["B_unit_gaussian"] == pytest.approx(1.1816359006036774, rel=1e-14)
    assert forms["A_unit_gaussian"] == pytest.approx(0.7450802778100145, rel=1e-14)
    assert forms["B_scaled_by_2"] == pytest.approx(2 * forms["B_unit_gaussian"])
    assert forms["B_shifted_center"] == forms["B_unit_gaussian"]
    assert forms["nu_03"] == pytest.approx(NU_03, rel=1e-15)
    assert forms["model_G1_unit_box"] == pytest.approx(NU_03 * np.sqrt(2.0), rel=1e-14)


def test_dense_oracle_small_fixture(gaussian_pe):
    box = Box((-1.0,) * 3, (1.0,) * 3)
    grid = GridSpec(box, 4)
    seq = dense_oracle(gradient_kernel(gaussian_pe), grid, grid)
    assert seq.count == grid.num_cells  # min dimension of the 3 nc x nc matrix
    assert seq[0] > 0
    assert seq.provenance["method"] == "dense-oracle"
    with pytest.raises(ValueError):
        dense_oracle(gradient_kernel(gaussian_pe), GridSpec(box, 64), GridSpec(box, 64))


def test_fd_gradient_error_second_order(rng, gaussian_pe):
    t = rng.uniform(-1, 1, (30, 3))
    x = rng.uniform(-1, 1, (30, 3))
    keep = np.linalg.norm(t - x, axis=1) > 0.3
    pts = (t[keep], x[keep])
    errs = np.array([fd_gradient_error(gaussian_pe, pts, h)
                     for h in (1e-2, 5e-3, 2.5e-3)])
    assert errs[0] < 5e-3
    assert np.all(errs[1:] / errs[:-1] < 0.3)


def test_fd_oracle_rejects_diagonal(gaussian_pe):
    x = np.array([[0.1, 0.2, 0.3]])
    with pytest.raises(ValueError):
        fd_gradient_error(gaussian_pe, (x, x), 1e-3)
