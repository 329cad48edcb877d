import numpy as np
import pytest

from cuspspec.operators import (
    ConvolutionOperator,
    DenseOperator,
    dense_matrix,
    gram,
    op_adjoint,
    op_compose,
    op_stack,
)
from cuspspec.spectra import SpectralSequence, eigenvalues_psd, singular_values


def _matrix_free(matrix):
    """Hide a matrix behind stack/compose so the Lanczos path is used."""
    m = matrix.shape[0]
    return op_compose(op_stack(DenseOperator(matrix[: m // 2]),
                               DenseOperator(matrix[m // 2:])),
                      DenseOperator(np.eye(matrix.shape[1])))


def test_known_diagonal_values():
    s = singular_values(np.diag([3.0, 1.0, 2.0]))
    assert np.allclose(s.values, [3.0, 2.0, 1.0])
    assert np.all(s.residuals < 1e-12)


def test_lanczos_matches_dense(rng):
    mat = rng.standard_normal((50, 50))
    ref = np.linalg.svd(mat, compute_uv=False)
    s = singular_values(_matrix_free(mat), k=20, tol=1e-12, seed=4)
    assert s.count == 20
    assert np.max(np.abs(s.values - ref[:20])) < 1e-9 * ref[0]
    assert s.provenance["method"].startswith("lanczos")
    assert s.provenance["converged"]


def test_stack_with_zero_block_keeps_values(rng):
    mat = rng.standard_normal((30, 30))
    stacked = op_stack(DenseOperator(mat), DenseOperator(np.zeros((10, 30))))
    ref = np.linalg.svd(mat, compute_uv=False)
    s = singular_values(stacked, k=10, tol=1e-12, seed=2)
    assert np.max(np.abs(s.values - ref[:10])) < 1e-9 * ref[0]


def test_gram_eigenvalues_are_squared_singular_values(rng):
    mat = rng.standard_normal((40, 60))
    op = _matrix_free(mat)
    s = singular_values(op, k=15, tol=1e-12, seed=0)
    lam = eigenvalues_psd(gram(op), k=15, tol=1e-12, seed=5)
    assert np.max(np.abs(lam.values - s.values ** 2)) < 1e-8 * s[0] ** 2


def test_rectangular_operator_is_grammed(rng):
    # a rectangular operator is replaced by its Gram composite automatically
    mat = rng.standard_normal((20, 12))
    ref = np.linalg.eigvalsh(mat.T @ mat)[::-1][:5]
    got = eigenvalues_psd(op_compose(DenseOperator(np.eye(20)), DenseOperator(mat)), k=5)
    assert np.max(np.abs(got.values - ref)) < 1e-8 * ref[0]


def test_breakdown_pads_with_zeros(rng):
    u = rng.standard_normal(25)
    v = rng.standard_normal(25)
    mat = np.outer(u, v)
    s = singular_values(_matrix_free(mat), k=6, tol=1e-10)
    assert abs(s[0] - np.linalg.norm(u) * np.linalg.norm(v)) < 1e-10 * s[0]
    assert np.all(s.values[1:] < 1e-14 * s[0])
    assert s.provenance["converged"]


def test_csv_roundtrip(tmp_path, rng):
    vals = np.sort(np.abs(rng.standard_normal(12)))[::-1]
    seq = SpectralSequence(vals, np.full(12, 1e-12))
    path = tmp_path / "seq.csv"
    seq.to_csv(path)
    back = SpectralSequence.from_csv(path)
    assert np.allclose(back.values, vals, rtol=1e-15)
    assert np.allclose(back.residuals, 1e-12)


def test_sequence_validation():
    with pytest.raises(ValueError):
        SpectralSequence(np.array([1.0, 2.0]), np.zeros(2))
    with pytest.raises(ValueError):
        SpectralSequence(np.array([1.0, -0.5]), np.zeros(2))
    with pytest.raises(ValueError):
        SpectralSequence(np.array([2.0, 1.0]), np.zeros(2)).scaled(-1.0)


def test_truncate_and_scale():
    seq = SpectralSequence(np.array([4.0, 2.0, 1.0]), np.array([1e-12] * 3))
    assert seq.truncated(2).count == 2
    assert np.allclose(seq.scaled(0.5).values, [2.0, 1.0, 0.5])


def test_requesting_too_many_values_raises(rng):
    with pytest.raises(ValueError):
        singular_values(DenseOperator(rng.standard_normal((4, 4))), k=10)


def test_convolution_operator_spectrum_matches_dense(rng):
    n = 5
    block = rng.standard_normal((2 * n - 1,) * 3)
    op = ConvolutionOperator(block, (n, n, n))
    ref = np.linalg.svd(dense_matrix(op), compute_uv=False)
    s = singular_values(op, k=30, tol=1e-11, seed=1, max_iter=125)
    assert np.max(np.abs(s.values - ref[:30])) < 1e-8 * ref[0]
