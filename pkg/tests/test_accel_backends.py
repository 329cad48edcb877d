import os
import subprocess
import sys

import numpy as np
import pytest

from cuspspec._accel import (
    KIND_ABS,
    KIND_GRAD_ABS,
    backend_name,
    offset_averages,
    offset_averages_generic,
    pair_diff_rule,
)
from cuspspec.quadrature import QuadratureRule


def test_pair_diff_rule_weights_normalize():
    # the triangular density integrates to 1 per axis
    h = np.array([0.5, 0.25, 1.0])
    _, w = pair_diff_rule(h, order=6)
    assert abs(w.sum() - 1.0) < 1e-13


def test_pair_diff_rule_polynomial_exactness():
    # int s^2 (h - |s|)/h^2 ds over [-h, h] = h^2 / 6 per axis
    h = np.array([0.3, 0.3, 0.3])
    nodes, w = pair_diff_rule(h, order=6)
    val = np.dot(w, nodes[:, 0] ** 2)
    assert abs(val - h[0] ** 2 / 6.0) < 1e-15
    # odd moments vanish by node symmetry
    assert abs(np.dot(w, nodes[:, 1] ** 3)) < 1e-16


def test_pair_diff_rule_matches_cell_pair_average():
    # brute force: average of |t - x| over two unit cells at offset (1, 0, 0)
    rng = np.random.default_rng(0)
    t = rng.uniform(0, 1, (400_000, 3))
    x = rng.uniform(0, 1, (400_000, 3)) + np.array([1.0, 0.0, 0.0])
    mc = np.mean(np.linalg.norm(t - x, axis=1))
    nodes, w = pair_diff_rule(np.ones(3), order=8)
    pts = nodes + np.array([-1.0, 0.0, 0.0])
    val = np.dot(w, np.linalg.norm(pts, axis=1))
    assert abs(val - mc) < 5e-3 * mc


def test_offset_averages_zero_offset_is_odd_symmetric():
    rule = QuadratureRule(order=4, singular_oversampling=4)
    out = offset_averages(np.array([[0, 0, 0]]), np.ones(3), rule, KIND_GRAD_ABS)
    assert np.max(np.abs(out)) < 1e-14


def test_offset_averages_far_field_limit():
    # far away, the averaged unit vector approaches the center direction
    rule = QuadratureRule(order=4, singular_oversampling=4)
    out = offset_averages(np.array([[50, 0, 0]]), np.full(3, 0.1), rule, KIND_GRAD_ABS)
    assert abs(out[0, 0] - 1.0) < 1e-4
    assert abs(out[0, 1]) < 1e-12
    out = offset_averages(np.array([[40, 30, 0]]), np.full(3, 0.1), rule, KIND_ABS)
    assert abs(out[0, 0] - 5.0) < 1e-3


def test_generic_agrees_with_builtin():
    rule = QuadratureRule(order=4, singular_oversampling=4)
    # stay inside the oversampled near-diagonal zone so both paths use the
    # same fine rule
    offsets = np.array([[0, 0, 0], [1, 0, 0], [2, -1, 2], [-2, 2, 1]])
    h = np.array([0.2, 0.3, 0.25])
    built = offset_averages(offsets, h, rule, KIND_ABS)

    def func(pts):
        return np.linalg.norm(pts, axis=1)[:, None]

    generic = offset_averages_generic(offsets, h, rule, func, 1, oversample_all=True)
    assert np.max(np.abs(built - generic)) < 1e-13


def test_numpy_backend_matches_default(tmp_path):
    rule = QuadratureRule(order=4, singular_oversampling=4)
    rng = np.random.default_rng(7)
    offsets = np.vstack([np.zeros((1, 3), dtype=int),
                         rng.integers(-5, 6, (40, 3))])
    h = np.array([0.17, 0.23, 0.31])
    here = {
        "grad": offset_averages(offsets, h, rule, KIND_GRAD_ABS),
        "abs": offset_averages(offsets, h, rule, KIND_ABS),
    }
    script = (
        "import numpy as np\n"
        "from cuspspec._accel import offset_averages, backend_name, KIND_GRAD_ABS, KIND_ABS\n"
        "from cuspspec.quadrature import QuadratureRule\n"
        "assert backend_name() == 'numpy', backend_name()\n"
        "rule = QuadratureRule(order=4, singular_oversampling=4)\n"
        "rng = np.random.default_rng(7)\n"
        "offsets = np.vstack([np.zeros((1, 3), dtype=int), rng.integers(-5, 6, (40, 3))])\n"
        "h = np.array([0.17, 0.23, 0.31])\n"
        "np.save('OUT_grad.npy', offset_averages(offsets, h, rule, KIND_GRAD_ABS))\n"
        "np.save('OUT_abs.npy', offset_averages(offsets, h, rule, KIND_ABS))\n"
    )
    env = dict(os.environ, CUSPSPEC_NUMBA="0")
    subprocess.run([sys.executable, "-c", script], check=True, env=env,
                   cwd=str(tmp_path))
    for key in ("grad", "abs"):
        other = np.load(tmp_path / f"OUT_{key}.npy")
        assert np.max(np.abs(here[key] - other)) < 1e-13, key


def test_backend_name_reports():
    assert backend_name() in ("numba", "numpy")
