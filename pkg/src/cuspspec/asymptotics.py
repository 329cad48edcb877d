"""Tail functionals, power-law fits, and the singular-value inequality checks.

A SpectralSequence carries a decreasing sequence s_k.  The analysis layer
summarizes its tail three ways: weak quasi-norms sup_k s_k k^{1/p}, windowed
upper/lower surrogates G_p / g_p, and least-squares power-law fits with a
plateau statistic median(k * s_k) that is Richardson-extrapolated across a
grid-refinement chain.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "TailFunctionals",
    "tail_functionals",
    "AsymptoticReport",
    "fit_power_law",
    "richardson_plateau",
    "validate_svalue_inequalities",
    "validate_blockvec",
    "double_identity_gap",
    "InequalityViolation",
    "weak_quasi_norm",
    "WeightFunctionals",
    "weight_functionals",
    "decay_bound_check",
    "default_window",
    "export_plateau_csv",
]

# fraction of the matrix rank above which discretization pollutes the tail
RESOLUTION_CUTOFF_FRACTION = 0.25


def default_window(seq, rank=None, k_min=16, fraction=RESOLUTION_CUTOFF_FRACTION):
    """[k_min, k_max] with k_max capped at fraction * rank and the certified
    prefix length."""
    k_max = seq.count
    if rank is not None:
        k_max = min(k_max, int(fraction * rank))
    if k_max < k_min:
        raise ValueError(f"window [{k_min}, {k_max}] is empty")
    return (k_min, k_max)


def weak_quasi_norm(values, p):
    """sup_k s_k * k^{1/p} over the available prefix."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return 0.0
    k = np.arange(1, v.size + 1)
    return float(np.max(v * k ** (1.0 / p)))


@dataclass(frozen=True)
class TailFunctionals:
    p: float
    quasi_norm: float
    G_p: float
    g_p: float
    window: tuple

    def __post_init__(self):
        tol = 1e-12 * max(self.quasi_norm ** self.p, 1.0)
        if not (self.g_p <= self.G_p + tol and self.G_p <= self.quasi_norm ** self.p + tol):
            raise ValueError("tail functionals must satisfy g_p <= G_p <= quasi_norm^p")


def tail_functionals(seq, p, window):
    """Windowed surrogates for the limsup/liminf tail functionals.

    G_p = (sup over the window of k^{1/p} s_k)^p and g_p the inf analogue;
    quasi_norm is taken over the full certified prefix, so the chain
    g_p <= G_p <= quasi_norm^p holds by construction.
    """
    k_lo, k_hi = window
    if k_lo < 1 or k_hi > seq.count or k_lo > k_hi:
        raise ValueError(f"window {window} not inside certified prefix of length {seq.count}")
    v = seq.values
    k = np.arange(1, v.size + 1)
    mask = (k >= k_lo) & (k <= k_hi)
    scaled = v[mask] * k[mask] ** (1.0 / p)
    return TailFunctionals(
        p=p,
        quasi_norm=weak_quasi_norm(v, p),
        G_p=float(np.max(scaled) ** p),
        g_p=float(np.min(scaled) ** p),
        window=(k_lo, k_hi),
    )


@dataclass(frozen=True)
class AsymptoticReport:
    """Verdict object of a tail fit.

    exponent is the fitted decay rate (s_k ~ C k^{-exponent}); coefficient is
    exp of the fitted intercept; plateau is median(k * s_k) over the window
    (the natural statistic when exponent ~ 1).  extrapolated holds the
    Richardson limit when a refinement chain was supplied.
    """

    exponent: float
    coefficient: float
    plateau: float
    window: tuple
    fit_residual: float
    power_law_ok: bool
    trend: tuple = ()
    extrapolated: float | None = None
    diagnostics: dict = field(default_factory=dict)

    def to_json(self, path):
        payload = {
            "exponent": self.exponent,
            "coefficient": self.coefficient,
            "plateau": self.plateau,
            "window": list(self.window),
            "fit_residual": self.fit_residual,
            "power_law_ok": self.power_law_ok,
            "trend": [list(t) for t in self.trend],
            "extrapolated": self.extrapolated,
            "diagnostics": self.diagnostics,
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2)


def fit_power_law(seq, window, residual_threshold=0.1):
    """Least-squares fit of log s_k against log k over the window.

    Needs at least 20 points.  A large fit residual marks the sequence as
    non-power-law in the report; it is not an error.
    """
    k_lo, k_hi = window
    if k_hi > seq.count:
        raise ValueError(f"window {window} exceeds certified prefix {seq.count}")
    v = seq.values[k_lo - 1:k_hi]
    k = np.arange(k_lo, k_hi + 1, dtype=float)
    pos = v > 0
    if pos.sum() < 20:
        raise ValueError("power-law fit needs at least 20 positive points in the window")
    lk = np.log(k[pos])
    lv = np.log(v[pos])
    A = np.vstack([np.ones_like(lk), lk]).T
    coef, *_ = np.linalg.lstsq(A, lv, rcond=None)
    pred = A @ coef
    resid = float(np.sqrt(np.mean((lv - pred) ** 2)))
    plateau = float(np.median(k * v))
    return AsymptoticReport(
        exponent=float(-coef[1]),
        coefficient=float(np.exp(coef[0])),
        plateau=plateau,
        window=(k_lo, k_hi),
        fit_residual=resid,
        power_law_ok=resid <= residual_threshold,
        diagnostics={"points": int(pos.sum())},
    )


def richardson_plateau(chain, window, order_bounds=(0.5, 3.0)):
    """Extrapolated plateau over a refinement chain [(h, seq), ...].

    Fits plateau(h) = P + C h^q through the three finest levels, solving for
    the observed convergence order q (clamped to order_bounds); with exactly
    two levels assumes q = 1.  Returns an AsymptoticReport whose fit fields
    come from the finest level.
    """
    if len(chain) < 2:
        raise ValueError("refinement chain needs at least two levels")
    chain = sorted(chain, key=lambda t: -t[0])  # coarse -> fine
    trend = []
    for h, seq in chain:
        rep = fit_power_law(seq, window)
        trend.append((float(h), rep.plateau))
    base = fit_power_law(chain[-1][1], window)
    if len(trend) >= 3:
        (h1, y1), (h2, y2), (h3, y3) = trend[-3:]
        # solve (y1-y2)/(y2-y3) = (h1^q - h2^q)/(h2^q - h3^q) for q by bisection
        target = (y1 - y2) / (y2 - y3) if abs(y2 - y3) > 1e-15 else None
        q = 1.0
        if target is not None and target > 0:
            lo, hi = order_bounds
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                r = (h1**mid - h2**mid) / (h2**mid - h3**mid)
                # r increases with q for h1 > h2 > h3
                if r < target:
                    lo = mid
                else:
                    hi = mid
            q = 0.5 * (lo + hi)
        denom = h2**q - h3**q
        C = (y2 - y3) / denom if abs(denom) > 1e-300 else 0.0
        extrap = y3 - C * h3**q
    else:
        (h2, y2), (h3, y3) = trend[-2:]
        C = (y2 - y3) / (h2 - h3)
        extrap = y3 - C * h3
        q = 1.0
    return AsymptoticReport(
        exponent=base.exponent,
        coefficient=base.coefficient,
        plateau=base.plateau,
        window=base.window,
        fit_residual=base.fit_residual,
        power_law_ok=base.power_law_ok,
        trend=tuple(trend),
        extrapolated=float(extrap),
        diagnostics={"convergence_order": float(q)},
    )


class InequalityViolation(AssertionError):
    def __init__(self, name, k, lhs, rhs):
        super().__init__(f"{name} violated at k={k}: {lhs:.16e} > {rhs:.16e}")
        self.witness = (name, k, lhs, rhs)


def validate_svalue_inequalities(seq1, seq2, seq_sum, p=1.0, rtol=1e-10):
    """Ky Fan / weak-norm inequality battery for T1, T2 and T1 + T2.

    Checks, for every k where all terms are certified:
      s_{2k}(T1+T2) <= s_{2k-1}(T1+T2) <= s_k(T1) + s_k(T2)
    and the quasi-norm triangle inequality with exponent r = p/(p+1):
      ||T1+T2||^r <= ||T1||^r + ||T2||^r  (finite-prefix quasi-norms).
    Raises InequalityViolation with a witness on failure; returns a summary
    dict on success.
    """
    s1, s2, ss = seq1.values, seq2.values, seq_sum.values
    kmax = min(s1.size, s2.size, (ss.size + 1) // 2)
    scale = max(ss[0] if ss.size else 0.0, s1[0] if s1.size else 0.0,
                s2[0] if s2.size else 0.0, 1e-300)
    checked = 0
    for k in range(1, kmax + 1):
        odd = ss[2 * k - 2]
        rhs = s1[k - 1] + s2[k - 1]
        if odd > rhs + rtol * scale:
            raise InequalityViolation("s_{2k-1}(T1+T2) <= s_k(T1)+s_k(T2)", k, odd, rhs)
        if 2 * k - 1 < ss.size:
            even = ss[2 * k - 1]
            if even > odd + rtol * scale:
                raise InequalityViolation("s_{2k} <= s_{2k-1}", k, even, odd)
        checked += 1
    r = p / (p + 1.0)
    n1 = weak_quasi_norm(s1, p) ** r
    n2 = weak_quasi_norm(s2, p) ** r
    nsum = weak_quasi_norm(ss, p) ** r
    if nsum > n1 + n2 + rtol * max(n1 + n2, 1e-300):
        raise InequalityViolation("quasi-norm triangle (exponent p/(p+1))", 0, nsum, n1 + n2)
    return {"pairs_checked": checked, "triangle": (nsum, n1 + n2), "p": p}


def validate_blockvec(seq_stack, seqs, p, window, rtol=1e-10):
    """Windowed surrogate of the block-vector bound for a stacked operator:

        G_p(stack)^{2/(p+2)} <= sum_j G_p(T_j)^{2/(p+2)}.

    Raises InequalityViolation on failure; returns (lhs, rhs) on success.
    """
    r = 2.0 / (p + 2.0)
    lhs = tail_functionals(seq_stack, p, window).G_p ** r
    rhs = sum(tail_functionals(s, p, window).G_p ** r for s in seqs)
    if lhs > rhs + rtol * max(rhs, 1e-300):
        raise InequalityViolation("block-vector G_p bound", 0, lhs, rhs)
    return lhs, rhs


def double_identity_gap(s_seq, lam_seq, p, window):
    """Relative gap of the finite-k identity G_p(lambda-seq) = G_{2p}(s-seq),
    which is exact when lambda_k = s_k^2 (the PSD composition)."""
    gp = tail_functionals(lam_seq, p, window).G_p
    g2p = tail_functionals(s_seq, 2.0 * p, window).G_p
    return abs(gp - g2p) / max(gp, 1e-300)


@dataclass(frozen=True)
class WeightFunctionals:
    kappa: float
    R_kappa: float
    M_kappa: float


def weight_functionals(a, b, kappa, cells=8, order=6):
    """Exponentially weighted size functionals of the operator weights.

    R_kappa(a) = [sum_n exp(-kappa |n|_1 / 2) ||a||_{L3(C_n)}^{1/2}]^2 with
    C_n the unit cells of the integer lattice, summed over cells meeting the
    support of a.  M_kappa(b) = [int |b|^2 exp(-2 kappa |xhat|_1)]^{1/2} over
    the support of b.  |.|_1 is the l1 norm throughout.
    """
    from .quadrature import tensor_rule

    if kappa <= 0:
        raise ValueError("kappa must be positive")
    if a.support is None or b.support is None:
        raise ValueError("weights must declare support boxes")

    lo = np.floor(np.asarray(a.support.lo)).astype(int)
    hi = np.ceil(np.asarray(a.support.hi)).astype(int)
    from .fields import Box

    total = 0.0
    for n0 in range(lo[0], hi[0]):
        for n1 in range(lo[1], hi[1]):
            for n2 in range(lo[2], hi[2]):
                cell = Box((float(n0), float(n1), float(n2)),
                           (n0 + 1.0, n1 + 1.0, n2 + 1.0))
                nodes, wts = tensor_rule(cell, cells, order)
                l3 = float(np.dot(wts, np.abs(a(nodes)) ** 3)) ** (1.0 / 3.0)
                total += np.exp(-kappa * (abs(n0) + abs(n1) + abs(n2)) / 2.0) * np.sqrt(l3)
    r_kappa = total ** 2

    nodes, wts = tensor_rule(b.support, cells, order)
    w = np.exp(-2.0 * kappa * np.sum(np.abs(nodes), axis=1))
    m_kappa = float(np.dot(wts, np.abs(b(nodes)) ** 2 * w)) ** 0.5
    return WeightFunctionals(kappa=kappa, R_kappa=float(r_kappa), M_kappa=m_kappa)


def decay_bound_check(seq, l, d, window, slack=0.1):
    """Fitted decay exponent against the smoothness bound 1/2 + l/d - slack.

    Report only: returns the fit plus a boolean; never raises on failure.
    """
    rep = fit_power_law(seq, window)
    bound = 0.5 + l / d - slack
    return {
        "exponent": rep.exponent,
        "required": bound,
        "satisfied": bool(rep.exponent >= bound),
        "window": list(window),
        "fit_residual": rep.fit_residual,
    }


def export_plateau_csv(seq, path, window=None):
    """Write (k, s_k, k*s_k) rows for plotting plateau diagnostics."""
    import csv

    v = seq.values
    k_lo, k_hi = window if window is not None else (1, v.size)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "s_k", "k_s_k"])
        for k in range(k_lo, k_hi + 1):
            w.writerow([k, f"{v[k - 1]:.16e}", f"{k * v[k - 1]:.16e}"])
