"""TOML run configuration: kernels, grids, tolerances.

Example
-------
    [domain]
    box_lo = [-2.0, -2.0, -2.0]
    box_hi = [ 2.0,  2.0,  2.0]

    [pair_expansion]          # cusp kernel psi = xi + |t - x| eta
    xi_t = "exp(-(x1**2 + x2**2 + x3**2))"   # separable factors (preferred:
    xi_x = "0"                                # enables the fast path) ...
    eta_t = "exp(-(x1**2 + x2**2 + x3**2))"
    eta_x = "exp(-(x1**2 + x2**2 + x3**2))"
    # ... or full expressions `xi` / `eta` in t1..t3, x1..x3.

    [cutoffs]                 # optional smooth localizers
    delta = 0.5
    bigR = 4.0
    eps = 0.25

    [model]                   # alternatively: a translation-invariant model kernel
    N = 2
    phi = "grad_abs"          # grad_abs | abs
    a = "1"
    b = ["1"]                 # N-1 entries per outer component (N=2: one)
    beta = ["1"]

    [solver]
    tol = 1e-10
    seed = 0
    k = 256

    [quadrature]
    rel_tol = 1e-6
    order = 4
    oversampling = 4

Expressions use the closed-form vocabulary of fields.parse_expression
(numbers, + - *, integer **, exp).  All tolerances have the defaults shown.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import tomli

from .fields import Box, field_from_expression
from .kernels import (BUILTIN_HOMOGENEOUS, CutoffSet, ModelKernelSpec,
                      gradient_kernel, separable_pair_expansion, PairExpansion)
from .quadrature import QuadratureRule

__all__ = ["RunConfig", "ConfigError", "load_config", "build_kernel", "config_hash"]


class ConfigError(ValueError):
    """Schema violation; message names the offending table/key."""


@dataclass(frozen=True)
class RunConfig:
    raw: dict
    box: Box
    solver_tol: float = 1e-10
    seed: int = 0
    k: int = 256
    quad: QuadratureRule = field(default_factory=QuadratureRule)
    quad_rel_tol: float = 1e-6


def _require(table, key, where):
    if key not in table:
        raise ConfigError(f"missing key {key!r} in [{where}]")
    return table[key]


def load_config(path):
    try:
        with open(path, "rb") as fh:
            raw = tomli.load(fh)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    dom = raw.get("domain", {})
    lo = tuple(float(v) for v in dom.get("box_lo", (0.0, 0.0, 0.0)))
    hi = tuple(float(v) for v in dom.get("box_hi", (1.0, 1.0, 1.0)))
    if len(lo) != 3 or len(hi) != 3:
        raise ConfigError("domain.box_lo / box_hi must have three entries")
    box = Box(lo, hi)
    solver = raw.get("solver", {})
    quad = raw.get("quadrature", {})
    try:
        rule = QuadratureRule(order=int(quad.get("order", 4)),
                              singular_oversampling=int(quad.get("oversampling", 4)))
    except ValueError as exc:
        raise ConfigError(f"[quadrature]: {exc}") from exc
    return RunConfig(
        raw=raw,
        box=box,
        solver_tol=float(solver.get("tol", 1e-10)),
        seed=int(solver.get("seed", 0)),
        k=int(solver.get("k", 256)),
        quad=rule,
        quad_rel_tol=float(quad.get("rel_tol", 1e-6)),
    )


def _field3(src, box, where):
    try:
        return field_from_expression(src, 3, support=box)
    except ValueError as exc:
        raise ConfigError(f"[{where}]: {exc}") from exc


def _build_pair_expansion(cfg):
    pe_tab = cfg.raw["pair_expansion"]
    box = cfg.box
    if "xi_t" in pe_tab or "eta_t" in pe_tab:
        for key in ("xi_t", "xi_x", "eta_t", "eta_x"):
            _require(pe_tab, key, "pair_expansion")
        return separable_pair_expansion(
            _field3(pe_tab["xi_t"], box, "pair_expansion.xi_t"),
            _field3(pe_tab["xi_x"], box, "pair_expansion.xi_x"),
            _field3(pe_tab["eta_t"], box, "pair_expansion.eta_t"),
            _field3(pe_tab["eta_x"], box, "pair_expansion.eta_x"),
        )
    for key in ("xi", "eta"):
        _require(pe_tab, key, "pair_expansion")
    box6 = Box(tuple(box.lo) * 2, tuple(box.hi) * 2)
    try:
        xi = field_from_expression(pe_tab["xi"], 6, support=box6)
        eta = field_from_expression(pe_tab["eta"], 6, support=box6)
    except ValueError as exc:
        raise ConfigError(f"[pair_expansion]: {exc}") from exc
    return PairExpansion(xi=xi, eta=eta)


def _build_cutoffs(cfg):
    tab = cfg.raw.get("cutoffs")
    if tab is None:
        return None
    try:
        return CutoffSet(delta=float(_require(tab, "delta", "cutoffs")),
                         bigR=float(_require(tab, "bigR", "cutoffs")),
                         eps=float(_require(tab, "eps", "cutoffs")))
    except ValueError as exc:
        raise ConfigError(f"[cutoffs]: {exc}") from exc


def _build_model_spec(cfg):
    tab = cfg.raw["model"]
    N = int(tab.get("N", 2))
    phi_name = tab.get("phi", "grad_abs")
    if phi_name not in BUILTIN_HOMOGENEOUS:
        raise ConfigError(f"model.phi must be one of {sorted(BUILTIN_HOMOGENEOUS)}")
    box = cfg.box
    a = _field3(str(_require(tab, "a", "model")), box, "model.a")
    b_rows = tab.get("b")
    beta_rows = tab.get("beta")
    if not isinstance(b_rows, list) or not isinstance(beta_rows, list):
        raise ConfigError("model.b and model.beta must be lists of expressions")

    def norm(rows, n_inner):
        # a flat list is shared across the N outer components
        if rows and not isinstance(rows[0], list):
            rows = [rows] * N
        if len(rows) != N or any(len(r) != n_inner for r in rows):
            raise ConfigError(f"model.b/beta must have {N} rows of {n_inner} entries")
        return rows

    b_rows = norm(b_rows, N - 1)
    beta_rows = norm(beta_rows, N - 1)
    box_t = Box(tuple(box.lo) * (N - 1), tuple(box.hi) * (N - 1))
    box_full = Box(tuple(box_t.lo) + tuple(box.lo), tuple(box_t.hi) + tuple(box.hi))
    b = tuple(tuple(field_from_expression(str(e), 3 * N - 3, support=box_t) for e in row)
              for row in b_rows)
    beta = tuple(tuple(field_from_expression(str(e), 3 * N, support=box_full) for e in row)
                 for row in beta_rows)
    try:
        return ModelKernelSpec(N=N, a=a, b=b, beta=beta,
                               phi=BUILTIN_HOMOGENEOUS[phi_name])
    except ValueError as exc:
        raise ConfigError(f"[model]: {exc}") from exc


def build_kernel(cfg):
    """KernelField (plus the underlying spec object) described by the config.

    Returns (kind, spec_object, kernel_field) with kind in
    {"pair_expansion", "model"}.
    """
    has_pe = "pair_expansion" in cfg.raw
    has_model = "model" in cfg.raw
    if has_pe == has_model:
        raise ConfigError("config must contain exactly one of [pair_expansion] or [model]")
    if has_pe:
        pe = _build_pair_expansion(cfg)
        cuts = _build_cutoffs(cfg)
        return "pair_expansion", pe, gradient_kernel(pe, cuts)
    spec = _build_model_spec(cfg)
    from .kernels import model_kernel

    return "model", spec, model_kernel(spec)


def config_hash(cfg):
    """Stable content hash of the raw config (key-sorted JSON, sha256)."""
    blob = json.dumps(cfg.raw, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]
