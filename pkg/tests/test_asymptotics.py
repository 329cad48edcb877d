import csv

import numpy as np
import pytest

from cuspspec.asymptotics import (
    InequalityViolation,
    decay_bound_check,
    default_window,
    double_identity_gap,
    export_plateau_csv,
    fit_power_law,
    richardson_plateau,
    tail_functionals,
    validate_blockvec,
    validate_svalue_inequalities,
    weak_quasi_norm,
    weight_functionals,
)
from cuspspec.fields import Box, constant_field, gaussian
from cuspspec.spectra import SpectralSequence


def _seq(values):
    v = np.asarray(values, dtype=float)
    return SpectralSequence(v, np.zeros(v.size))


def _harmonic(c, n, power=1.0):
    k = np.arange(1, n + 1, dtype=float)
    return _seq(c / k ** power)


# ---------------------------------------------------------------------------
# tail functionals
# ---------------------------------------------------------------------------


def test_harmonic_sequence_functionals_exact():
    seq = _harmonic(1.0, 400)
    tf = tail_functionals(seq, p=1.0, window=(10, 300))
    assert tf.quasi_norm == 1.0
    assert abs(tf.G_p - 1.0) < 1e-14
    assert abs(tf.g_p - 1.0) < 1e-14


def test_weak_quasi_norm_scaling():
    seq = _harmonic(3.0, 100)
    assert abs(weak_quasi_norm(seq.values, 1.0) - 3.0) < 1e-13
    # p = 2: sup k^{1/2} / k = at k = 1
    assert abs(weak_quasi_norm(seq.values, 2.0) - 3.0) < 1e-13
    assert weak_quasi_norm(np.array([]), 1.0) == 0.0


def test_functionals_chain_invariant():
    seq = _seq(np.sort(np.random.default_rng(0).uniform(0.1, 1, 50))[::-1])
    tf = tail_functionals(seq, p=1.5, window=(5, 40))
    assert tf.g_p <= tf.G_p <= tf.quasi_norm ** tf.p + 1e-12


def test_window_validation():
    seq = _harmonic(1.0, 30)
    with pytest.raises(ValueError):
        tail_functionals(seq, 1.0, (0, 10))
    with pytest.raises(ValueError):
        tail_functionals(seq, 1.0, (5, 50))
    assert default_window(seq, rank=100) == (16, 25)
    with pytest.raises(ValueError):
        default_window(seq, rank=40)


# ---------------------------------------------------------------------------
# fits and extrapolation
# ---------------------------------------------------------------------------


def test_power_law_fit_recovers_parameters():
    seq = _harmonic(2.0, 500)
    rep = fit_power_law(seq, (20, 400))
    assert abs(rep.exponent - 1.0) < 1e-3
    assert abs(rep.coefficient - 2.0) < 2e-3
    assert abs(rep.plateau - 2.0) < 1e-12
    assert rep.power_law_ok
    assert rep.fit_residual < 1e-10


def test_fit_flags_non_power_law():
    k = np.arange(1, 200, dtype=float)
    seq = _seq(np.exp(-0.2 * k))
    rep = fit_power_law(seq, (10, 150))
    assert not rep.power_law_ok


def test_fit_needs_enough_points():
    with pytest.raises(ValueError):
        fit_power_law(_harmonic(1.0, 30), (10, 25))


def test_richardson_recovers_exact_limit():
    # plateau(h) = 5 + 3 h^2, sampled at three grids
    chain = []
    for h in (1.0 / 8, 1.0 / 12, 1.0 / 16):
        chain.append((h, _harmonic(5.0 + 3.0 * h ** 2, 300)))
    rep = richardson_plateau(chain, (20, 250))
    assert abs(rep.extrapolated - 5.0) < 1e-6
    assert abs(rep.diagnostics["convergence_order"] - 2.0) < 1e-3
    assert len(rep.trend) == 3


def test_richardson_two_levels_linear():
    chain = [(0.2, _harmonic(1.0 + 0.2, 300)), (0.1, _harmonic(1.0 + 0.1, 300))]
    rep = richardson_plateau(chain, (20, 250))
    assert abs(rep.extrapolated - 1.0) < 1e-10


def test_report_json_roundtrip(tmp_path):
    import json

    rep = fit_power_law(_harmonic(1.0, 100), (10, 90))
    path = tmp_path / "rep.json"
    rep.to_json(path)
    payload = json.loads(path.read_text())
    assert payload["exponent"] == rep.exponent
    assert payload["window"] == [10, 90]


# ---------------------------------------------------------------------------
# inequality battery
# ---------------------------------------------------------------------------


def test_inequalities_hold_for_real_matrices(rng):
    for _ in range(25):
        m = rng.integers(10, 40)
        a = rng.standard_normal((m, m))
        b = rng.standard_normal((m, m))
        s1 = _seq(np.linalg.svd(a, compute_uv=False))
        s2 = _seq(np.linalg.svd(b, compute_uv=False))
        ss = _seq(np.linalg.svd(a + b, compute_uv=False))
        out = validate_svalue_inequalities(s1, s2, ss, p=1.0)
        assert out["pairs_checked"] >= 5


def test_inequality_violation_witness():
    s1 = _harmonic(1.0, 50)
    fake = _seq(10.0 / np.arange(1, 50))
    with pytest.raises(InequalityViolation) as exc:
        validate_svalue_inequalities(s1, s1, fake)
    name, k, lhs, rhs = exc.value.witness
    assert lhs > rhs
    assert k >= 1


def test_blockvec_bound(rng):
    mats = [rng.standard_normal((30, 30)) for _ in range(3)]
    seqs = [_seq(np.linalg.svd(m, compute_uv=False)) for m in mats]
    stack = _seq(np.linalg.svd(np.vstack(mats), compute_uv=False))
    lhs, rhs = validate_blockvec(stack, seqs, p=1.0, window=(2, 25))
    assert lhs <= rhs + 1e-12


def test_double_identity_exact():
    s = _harmonic(2.0, 200)
    lam = _seq(s.values ** 2)
    assert double_identity_gap(s, lam, p=1.0, window=(10, 150)) < 1e-14


# ---------------------------------------------------------------------------
# weight functionals and decay bounds
# ---------------------------------------------------------------------------


def test_weight_functionals_monotone_in_kappa():
    box = Box((-2.0,) * 3, (2.0,) * 3)
    a = gaussian(3, support_sigmas=2)
    b = constant_field(3, 1.0, box)
    w1 = weight_functionals(a, b, kappa=0.5)
    w2 = weight_functionals(a, b, kappa=1.0)
    assert w2.R_kappa < w1.R_kappa
    assert w2.M_kappa < w1.M_kappa


def test_weight_functional_single_cell_constant():
    # |a| = 1 on the unit cell at the origin: L3 norm 1, lattice weight 1
    box = Box((0.0,) * 3, (1.0,) * 3)
    one = constant_field(3, 1.0, box)
    w = weight_functionals(one, one, kappa=2.0)
    assert abs(w.R_kappa - 1.0) < 1e-10
    with pytest.raises(ValueError):
        weight_functionals(one, one, kappa=0.0)
    with pytest.raises(ValueError):
        weight_functionals(constant_field(3, 1.0), one, kappa=1.0)


def test_decay_bound_check_reports():
    seq = _harmonic(1.0, 300, power=1.5)
    out = decay_bound_check(seq, l=3, d=3, window=(20, 250))
    assert abs(out["exponent"] - 1.5) < 1e-3
    assert out["required"] == pytest.approx(0.5 + 1.0 - 0.1)
    assert out["satisfied"]
    out = decay_bound_check(seq, l=9, d=3, window=(20, 250))
    assert not out["satisfied"]


try:
    from hypothesis import given, settings
    from hypothesis import strategies as st

    @given(st.lists(st.floats(min_value=1e-6, max_value=1e3), min_size=3, max_size=40),
           st.floats(min_value=0.3, max_value=4.0))
    @settings(max_examples=50, deadline=None)
    def test_quasi_norm_properties(values, p):
        v = np.sort(np.asarray(values))[::-1]
        q = weak_quasi_norm(v, p)
        # dominates every term and scales linearly
        k = np.arange(1, v.size + 1)
        assert q >= np.max(v * k ** (1.0 / p)) - 1e-12 * q
        assert abs(weak_quasi_norm(2.0 * v, p) - 2.0 * q) < 1e-9 * q

    @given(st.integers(min_value=5, max_value=25), st.integers(min_value=0, max_value=2 ** 31))
    @settings(max_examples=30, deadline=None)
    def test_sum_inequalities_random_matrices(n, seed):
        rng = np.random.default_rng(seed)
        a = rng.standard_normal((n, n))
        b = rng.standard_normal((n, n))
        s1 = _seq(np.linalg.svd(a, compute_uv=False))
        s2 = _seq(np.linalg.svd(b, compute_uv=False))
        ss = _seq(np.linalg.svd(a + b, compute_uv=False))
        validate_svalue_inequalities(s1, s2, ss, p=1.0)
except ImportError:  # pragma: no cover
    pass


def test_export_plateau_csv(tmp_path):
    seq = _harmonic(2.0, 30)
    path = tmp_path / "plateau.csv"
    export_plateau_csv(seq, path, window=(5, 20))
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 16
    assert float(rows[0]["k_s_k"]) == pytest.approx(2.0)
