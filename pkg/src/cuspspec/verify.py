"""Verification suites: the property checks behind the acceptance gate.

Each suite returns a JSON-serializable report dict with a boolean "passed".
The test suite and the CLI both call these functions, so a green test run
and `cuspspec verify <suite>` exercise identical code paths.

Suites
------
factorization   lambda_k(V*V) = s_k(V)^2 on every fixture
inequalities    Ky Fan / quasi-norm triangle / block-vector battery on a
                seeded random corpus
model-constant  plateau of the two-particle model operator vs the universal
                constant, plus the torus-symbol cross-check
cusp-B          plateau of the synthetic Gaussian cusp operator vs the
                closed-form coefficient, in both s_k and lambda_k form
decay-orders    order-one and smooth kernels decay strictly faster
weighted-trend  shrinking multiplicative weight drives the G_1 surrogate
                down at least linearly
"""

from __future__ import annotations

import numpy as np

from .asymptotics import (
    InequalityViolation,
    richardson_plateau,
    tail_functionals,
    validate_blockvec,
    validate_svalue_inequalities,
    fit_power_law,
    weight_functionals,
)
from .fields import Box, constant_field, default_profile, gaussian, zero_field
from .grids import GridSpec
from .kernels import (
    BUILTIN_HOMOGENEOUS,
    ModelKernelSpec,
    gradient_kernel,
    separable_pair_expansion,
)
from .operators import DenseOperator, gram, op_stack
from .predict import predict_B, predict_model_G1
from .spectra import eigenvalues_psd, singular_values

__all__ = ["run_suite", "SUITES", "unit_box_model_spec", "gaussian_pair_expansion"]

# shared fixture parameters (chain and window calibrated on the refinement
# study; the window stays well below a quarter of the coarsest rank)
MODEL_CHAIN = (12, 16, 24)
MODEL_WINDOW = (16, 360)
CUSP_BOX_HALFWIDTH = 2.5
COEFFICIENT_RTOL = 0.15
EIGENVALUE_RTOL = 0.30
TORUS_AGREEMENT_RTOL = 0.10
FACTORIZATION_RTOL = 1e-10


def unit_box_model_spec(phi_name="grad_abs"):
    """N=2 model kernel with a = b = beta = 1 on the unit box."""
    box = Box((0.0,) * 3, (1.0,) * 3)
    box6 = Box((0.0,) * 6, (1.0,) * 6)
    return ModelKernelSpec(
        N=2,
        a=constant_field(3, 1.0, box),
        b=((constant_field(3, 1.0, box),),) * 2,
        beta=((constant_field(6, 1.0, box6),),) * 2,
        phi=BUILTIN_HOMOGENEOUS[phi_name],
    )


def gaussian_pair_expansion():
    """xi = 0, eta = exp(-|t|^2) exp(-|x|^2): the closed-form cusp fixture."""
    g = gaussian(3)
    z = zero_field(3)
    return separable_pair_expansion(z, z, g, g)


def _model_operator(n, phi_name="grad_abs"):
    from .assemble import assemble_convolutional

    spec = unit_box_model_spec(phi_name)
    grid = GridSpec(Box((0.0,) * 3, (1.0,) * 3), (n, n, n))
    return assemble_convolutional(spec, grid), spec


def _cusp_operator(n, weight=None):
    from .assemble import assemble_convolutional

    L = CUSP_BOX_HALFWIDTH
    box = Box((-L,) * 3, (L,) * 3)
    pe = gaussian_pair_expansion()
    kernel = gradient_kernel(pe)
    if weight is not None:
        # multiply the x-side of every term by the weight
        from .kernels import ConvolutionTerm, KernelField, SeparableTerm

        def wrap(f):
            return lambda p, f=f: f(p) * weight(np.atleast_2d(p))

        terms = []
        for t in kernel.terms:
            if isinstance(t, SeparableTerm):
                terms.append(SeparableTerm(t.component, t.left, wrap(t.right)))
            else:
                terms.append(ConvolutionTerm(t.component, t.left, t.phi,
                                             t.phi_component, wrap(t.right)))

        def evaluate(t, x, base=kernel.evaluate):
            vals, bad = base(t, x)
            return vals * weight(np.atleast_2d(x))[:, None], bad

        kernel = KernelField(3, 3, 3, evaluate, terms=tuple(terms),
                             t_box=kernel.t_box, x_box=kernel.x_box)
    grid = GridSpec(box, (n, n, n))
    return assemble_convolutional(kernel, grid), pe


# ---------------------------------------------------------------------------
# suites
# ---------------------------------------------------------------------------


def suite_factorization(seed=0):
    """lambda_k(V*V) = s_k(V)^2 with relative error < 1e-10."""
    rng = np.random.default_rng(seed)
    fixtures = []
    for shape in [(40, 60), (60, 40), (30, 30)]:
        fixtures.append(("random" + str(shape), DenseOperator(rng.standard_normal(shape))))
    op, _ = _model_operator(8)
    fixtures.append(("model-8", op))
    worst = 0.0
    details = {}
    for name, op in fixtures:
        kmax = min(op.rows, op.cols)
        k = min(kmax, 40)
        s = singular_values(op, k=k, tol=1e-12)
        lam = eigenvalues_psd(gram(op), k=k, tol=1e-12)
        kk = min(len(s), len(lam))
        top = s.values[0] ** 2
        rel = float(np.max(np.abs(lam.values[:kk] - s.values[:kk] ** 2)) / top)
        details[name] = rel
        worst = max(worst, rel)
    return {"suite": "factorization", "passed": bool(worst < FACTORIZATION_RTOL),
            "worst_relative_error": worst, "tolerance": FACTORIZATION_RTOL,
            "fixtures": details}


def suite_inequalities(instances=200, max_size=60, seed=0):
    """Seeded random corpus: Ky Fan pair bound, quasi-norm triangle with
    exponent p/(p+1), and the block-vector G_p surrogate; zero violations."""
    rng = np.random.default_rng(seed)
    violations = []
    for i in range(instances):
        m = int(rng.integers(10, max_size + 1))
        n = int(rng.integers(10, max_size + 1))
        p = float(rng.uniform(0.5, 3.0))
        a = rng.standard_normal((m, n))
        b = rng.standard_normal((m, n)) * rng.uniform(0.1, 10.0)
        sa = singular_values(DenseOperator(a))
        sb = singular_values(DenseOperator(b))
        ssum = singular_values(DenseOperator(a + b))
        try:
            validate_svalue_inequalities(sa, sb, ssum, p=p)
        except InequalityViolation as exc:
            violations.append((i, str(exc)))
        if i % 10 == 0:
            # stacked instance for the block-vector bound
            c = rng.standard_normal((int(rng.integers(5, 30)), n))
            stack = singular_values(DenseOperator(np.vstack([a, c])))
            sc = singular_values(DenseOperator(c))
            kmax = min(len(sa), len(sc), len(stack))
            window = (1, max(2, int(0.8 * kmax)))
            try:
                validate_blockvec(stack, [sa, sc], p, window)
            except InequalityViolation as exc:
                violations.append((i, str(exc)))
    return {"suite": "inequalities", "passed": not violations,
            "instances": instances, "violations": violations}


def suite_model_constant(chain=MODEL_CHAIN, window=MODEL_WINDOW, tol=1e-8, seed=1):
    """Model-operator plateau vs the universal constant, plus the torus
    oracle cross-check on a shared small lattice."""
    from .oracles import torus_galerkin_matrix, torus_symbol_spectrum
    from scipy.linalg import svd

    spec = unit_box_model_spec()
    predicted = predict_model_G1(spec)
    levels = []
    for n in chain:
        op, _ = _model_operator(n)
        k = min(window[1], n ** 3 // 4)
        sv = singular_values(op, k=k, tol=tol, max_iter=min(op.cols, 2 * k + 60), seed=seed)
        levels.append((1.0 / n, sv))
    report = richardson_plateau(levels, window)
    rel = abs(report.extrapolated - predicted) / predicted

    # torus symbol vs brute-force Galerkin on the same discretization
    phi = BUILTIN_HOMOGENEOUS["grad_abs"]
    ts = torus_symbol_spectrum(phi, 0.25, 8)
    dense = svd(torus_galerkin_matrix(phi, 0.25, 8), compute_uv=False)
    torus_rel = float(np.max(np.abs(dense[:50] - ts.values[:50])) / ts.values[0])

    return {
        "suite": "model-constant",
        "passed": bool(rel <= COEFFICIENT_RTOL and torus_rel <= TORUS_AGREEMENT_RTOL),
        "predicted": predicted,
        "extrapolated": report.extrapolated,
        "relative_error": float(rel),
        "tolerance": COEFFICIENT_RTOL,
        "plateau_trend": [list(t) for t in report.trend],
        "convergence_order": report.diagnostics.get("convergence_order"),
        "torus_vs_galerkin": torus_rel,
        "torus_tolerance": TORUS_AGREEMENT_RTOL,
    }


def suite_cusp_B(chain=MODEL_CHAIN, window=MODEL_WINDOW, tol=1e-8, seed=1):
    """Synthetic Gaussian cusp operator: k*s_k plateau vs the closed-form
    coefficient, and the k^2*lambda_k plateau vs its square."""
    pe = gaussian_pair_expansion()
    predicted = predict_B(pe)
    levels = []
    lam_levels = []
    k_eig = min(window[1], 240)
    for n in chain:
        op, _ = _cusp_operator(n)
        k = min(window[1], n ** 3 // 4)
        sv = singular_values(op, k=k, tol=tol, max_iter=min(op.cols, 2 * k + 60), seed=seed)
        levels.append((1.0 / n, sv))
        # eigenvalue form: lambda_k k^2 ~ B^2.  Reusing the certified
        # singular values through the exact factorization identity is what
        # the factorization suite checks, so here the eigenvalues are
        # recomputed independently from the PSD composition and their
        # plateau is extrapolated over the same chain.
        lam = eigenvalues_psd(gram(op), k=k_eig, tol=tol,
                              max_iter=min(op.cols, 2 * k_eig + 60), seed=seed + 1)
        kk = np.arange(1, len(lam) + 1)
        w = (kk >= window[0]) & (kk <= k_eig)
        lam_levels.append((1.0 / n, float(np.median(kk[w] ** 2 * lam.values[w]))))
    report = richardson_plateau(levels, window)
    rel = abs(report.extrapolated - predicted) / predicted

    # the squared plateau converges too irregularly for a direct power-order
    # fit; extrapolate its square root (the same trend the singular-value
    # side follows) and square the limit
    root, lam_q = _extrapolate_levels([(h, np.sqrt(y)) for h, y in lam_levels])
    lam_extrap = root ** 2
    lam_rel = abs(lam_extrap - predicted ** 2) / predicted ** 2

    return {
        "suite": "cusp-B",
        "passed": bool(rel <= COEFFICIENT_RTOL and lam_rel <= EIGENVALUE_RTOL),
        "predicted_B": predicted,
        "extrapolated_B": report.extrapolated,
        "relative_error": float(rel),
        "tolerance": COEFFICIENT_RTOL,
        "plateau_trend": [list(t) for t in report.trend],
        "lambda_plateau_extrapolated": float(lam_extrap),
        "lambda_plateau_trend": [list(t) for t in lam_levels],
        "lambda_convergence_order": float(lam_q),
        "lambda_relative_error": float(lam_rel),
        "lambda_tolerance": EIGENVALUE_RTOL,
    }


class _SmoothDifferenceKernel:
    """exp(-|y|^2) as a translation-invariant factor for the structured path."""

    components = 1
    name = "gauss_diff"

    def __call__(self, pts):
        pts = np.atleast_2d(pts)
        return np.exp(-np.sum(pts ** 2, axis=1))[:, None]

    @property
    def func(self):
        return self.__call__


def _smooth_operator(n):
    from .assemble import assemble_convolutional
    from .kernels import ConvolutionTerm, KernelField

    box = Box((0.0,) * 3, (1.0,) * 3)
    phi = _SmoothDifferenceKernel()
    one = lambda p: np.ones(np.atleast_2d(p).shape[0])

    def evaluate(t, x):
        t = np.atleast_2d(t)
        x = np.atleast_2d(x)
        return phi(t - x), np.zeros(t.shape[0], dtype=bool)

    kernel = KernelField(3, 3, 1, evaluate,
                         terms=(ConvolutionTerm(0, one, phi, 0, one),),
                         t_box=box, x_box=box, diagonal_singular=False)
    return assemble_convolutional(kernel, GridSpec(box, (n, n, n)))


def _extrapolate_levels(levels, order_bounds=(0.5, 3.0)):
    """Power-order Richardson on scalar (h, y) samples, coarse to fine."""
    levels = sorted(levels, key=lambda t: -t[0])
    (h1, y1), (h2, y2), (h3, y3) = levels[-3:]
    q = 1.0
    if abs(y2 - y3) > 1e-15:
        target = (y1 - y2) / (y2 - y3)
        if target > 0:
            lo, hi = order_bounds
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                r = (h1 ** mid - h2 ** mid) / (h2 ** mid - h3 ** mid)
                if r < target:
                    lo = mid
                else:
                    hi = mid
            q = 0.5 * (lo + hi)
    denom = h2 ** q - h3 ** q
    C = (y2 - y3) / denom if abs(denom) > 1e-300 else 0.0
    return y3 - C * h3 ** q, q


def suite_decay_orders(chain=MODEL_CHAIN, seed=1):
    """Order separation: the order-one kernel decays like k^{-4/3} (chain-
    extrapolated fitted exponent within [1.25, 1.45], k*s_k -> 0) while a
    smooth kernel decays faster than k^{-3} over its certified window.

    The windowed log-log slope at desk scale carries slowly decaying
    corrections from the kernel cutoff, so the exponent is measured per grid
    level and Richardson-extrapolated like the plateau constants.
    """
    k = 320
    window = (32, k)
    levels = []
    sv = None
    for n in chain:
        op, _ = _model_operator(n, phi_name="abs")
        sv = singular_values(op, k=k, tol=1e-8,
                             max_iter=min(op.cols, 2 * k + 60), seed=seed)
        levels.append((1.0 / n, fit_power_law(sv, window).exponent))
    exponent, q = _extrapolate_levels(levels)
    kk = np.arange(1, k + 1)
    ks = kk * sv.values
    trend_down = float(np.median(ks[200:300]) / np.median(ks[32:100]))

    smooth = _smooth_operator(12)
    ssv = singular_values(smooth, k=60, tol=1e-10, max_iter=200, seed=seed)
    floor = 1e-13 * ssv.values[0]
    ncert = int(np.sum(ssv.values > floor))
    srep = fit_power_law(ssv, (5, max(25, ncert)))

    passed = (1.25 <= exponent <= 1.45) and trend_down < 1.0 and srep.exponent > 3.0
    return {
        "suite": "decay-orders",
        "passed": bool(passed),
        "order_one_exponent": float(exponent),
        "order_one_bounds": [1.25, 1.45],
        "exponent_levels": [list(t) for t in levels],
        "exponent_convergence_order": float(q),
        "k_s_k_trend_ratio": trend_down,
        "smooth_exponent": srep.exponent,
        "smooth_requirement": 3.0,
    }


def suite_weighted_trend(epsilons=(0.4, 0.2, 0.1), n=16, seed=1, kappa=1.0):
    """Shrinking weight a_eps(x) = theta(|x|/eps): the windowed G_1 surrogate
    of the weighted cusp operator must decrease at least linearly in eps,
    mirroring the R_kappa bound which is itself ~ eps."""
    profile = default_profile()
    g1 = {}
    rk = {}
    for eps in epsilons:
        def weight(p, eps=eps):
            return profile.theta(np.linalg.norm(np.atleast_2d(p), axis=1) / eps)

        op, _ = _cusp_operator(n, weight=weight)
        k = 200
        sv = singular_values(op, k=k, tol=1e-8, max_iter=min(op.cols, 2 * k + 60), seed=seed)
        g1[eps] = tail_functionals(sv, 1.0, (16, k)).G_p
        # R_kappa of the weight (cell decomposition of the cusp box)
        class _Weight:
            support = Box((-eps,) * 3, (eps,) * 3)

            def __call__(self, pts):
                return weight(pts)

        b_one = constant_field(3, 1.0, Box((-1.0,) * 3, (1.0,) * 3))
        rk[eps] = weight_functionals(_Weight(), b_one, kappa).R_kappa
    eps_sorted = sorted(epsilons, reverse=True)
    ratios = []
    ok = True
    for big, small in zip(eps_sorted, eps_sorted[1:]):
        ratio = g1[small] / max(g1[big], 1e-300)
        ratios.append(ratio)
        if ratio > (small / big) * 1.2:  # at-least-linear with 20% slack
            ok = False
    return {
        "suite": "weighted-trend",
        "passed": bool(ok),
        "G1": {str(e): g1[e] for e in eps_sorted},
        "R_kappa": {str(e): rk[e] for e in eps_sorted},
        "decrease_ratios": ratios,
        "linear_requirement": [small / big * 1.2 for big, small in zip(eps_sorted, eps_sorted[1:])],
    }


SUITES = {
    "factorization": suite_factorization,
    "inequalities": suite_inequalities,
    "model-constant": suite_model_constant,
    "cusp-B": suite_cusp_B,
    "decay-orders": suite_decay_orders,
    "weighted-trend": suite_weighted_trend,
}


def run_suite(name, **kwargs):
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
    return SUITES[name](**kwargs)
