"""Command-line pipeline: config -> kernel -> spectrum -> verification report.

    cuspspec synth    --config run.toml --out artifacts/
    cuspspec spectrum --config run.toml --grid 16 --k 200 --tol 1e-10 --out artifacts/
    cuspspec verify   <suite> --out artifacts/

Exit codes: 0 = success, 1 = assertion/verification failure, 2 = bad
configuration or usage.  Every command writes a run manifest next to its
artifacts; identical manifests reproduce identical output bytes.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, build_kernel, config_hash, load_config
from .grids import GridSpec

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2


def _manifest(cfg, args, extra):
    payload = {
        "version": __version__,
        "config_hash": config_hash(cfg) if cfg is not None else None,
        "seed": getattr(args, "seed", None),
        "grids": extra.pop("grids", None),
        "tolerances": {"solver": getattr(args, "tol", None)},
        "artifacts": extra.pop("artifacts", []),
    }
    payload.update(extra)
    return payload


def _write_manifest(out_dir, name, payload):
    path = Path(out_dir) / f"{name}.manifest.json"
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
    return path


def cmd_synth(args):
    cfg = load_config(args.config)
    kind, spec, kernel = build_kernel(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    kid = config_hash(cfg)
    desc = {
        "kernel_id": kid,
        "kind": kind,
        "components": kernel.components,
        "t_dim": kernel.t_dim,
        "x_dim": kernel.x_dim,
        "config": cfg.raw,
    }
    path = out / f"kernel-{kid}.json"
    with open(path, "w") as fh:
        json.dump(desc, fh, indent=2, sort_keys=True)
    _write_manifest(out, f"synth-{kid}", _manifest(cfg, args, {"artifacts": [str(path)]}))
    print(f"kernel {kid} ({kind}, {kernel.components} components) -> {path}")
    return EXIT_OK


def _grid_list(args, cfg):
    if args.refine_chain:
        return [int(v) for v in args.refine_chain.split(",")]
    return [args.grid]


def cmd_spectrum(args):
    from .assemble import assemble_convolutional, assemble_dense
    from .spectra import singular_values

    cfg = load_config(args.config)
    kind, spec, kernel = build_kernel(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    kid = config_hash(cfg)
    tol = args.tol if args.tol is not None else cfg.solver_tol
    k = args.k if args.k is not None else cfg.k
    seed = args.seed if args.seed is not None else cfg.seed
    artifacts = []
    grids = _grid_list(args, cfg)
    for n in grids:
        grid = GridSpec(cfg.box, (n, n, n))
        if kind == "model":
            op = assemble_convolutional(spec, grid, quad=cfg.quad)
        elif kernel.terms is not None:
            op = assemble_convolutional(kernel, grid, quad=cfg.quad)
        else:
            op = assemble_dense(kernel, grid, grid, quad=cfg.quad)
        kk = min(k, min(op.rows, op.cols))
        seq = singular_values(op, k=kk, tol=tol, seed=seed)
        path = out / f"spectrum-{kid}-n{n}.csv"
        seq.to_csv(path)
        artifacts.append(str(path))
        print(f"n={n}: {len(seq)} certified values "
              f"(method {seq.provenance.get('method')}) -> {path}")
        if not seq.provenance.get("converged", True):
            print(f"warning: solver did not certify all {kk} values; "
                  f"partial prefix of length {len(seq)} written", file=sys.stderr)
    _write_manifest(out, f"spectrum-{kid}",
                    _manifest(cfg, args, {"grids": grids, "artifacts": artifacts}))
    return EXIT_OK


def cmd_verify(args):
    from .verify import SUITES, run_suite

    if args.suite not in SUITES:
        print(f"unknown suite {args.suite!r}; choose from {sorted(SUITES)}", file=sys.stderr)
        return EXIT_CONFIG
    report = run_suite(args.suite)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"verify-{args.suite}.json"
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True, default=float)
    status = "PASS" if report["passed"] else "FAIL"
    print(f"{args.suite}: {status} -> {path}")
    return EXIT_OK if report["passed"] else EXIT_FAIL


def build_parser():
    parser = argparse.ArgumentParser(prog="cuspspec",
                                     description="cusp-kernel spectral laboratory")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="parse a config and persist the kernel spec")
    p_synth.add_argument("--config", required=True)
    p_synth.add_argument("--out", default="artifacts")
    p_synth.set_defaults(func=cmd_synth)

    p_spec = sub.add_parser("spectrum", help="assemble and compute a certified spectrum")
    p_spec.add_argument("--config", required=True)
    p_spec.add_argument("--grid", type=int, default=8, help="cells per axis")
    p_spec.add_argument("--refine-chain", default=None,
                        help="comma-separated grid sizes, e.g. 12,16,24")
    p_spec.add_argument("--k", type=int, default=None)
    p_spec.add_argument("--tol", type=float, default=None)
    p_spec.add_argument("--seed", type=int, default=None)
    p_spec.add_argument("--out", default="artifacts")
    p_spec.set_defaults(func=cmd_spectrum)

    p_ver = sub.add_parser("verify", help="run a verification suite")
    p_ver.add_argument("suite")
    p_ver.add_argument("--out", default="artifacts")
    p_ver.set_defaults(func=cmd_verify)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AssertionError as exc:
        print(f"verification failure: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
