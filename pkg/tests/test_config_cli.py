import json

import numpy as np
import pytest

from cuspspec.cli import EXIT_CONFIG, EXIT_OK, main
from cuspspec.config import ConfigError, build_kernel, config_hash, load_config
from cuspspec.spectra import SpectralSequence

GAUSS = "exp(-(x1**2 + x2**2 + x3**2))"

PAIR_CONFIG = f"""
[domain]
box_lo = [-2.0, -2.0, -2.0]
box_hi = [2.0, 2.0, 2.0]

[pair_expansion]
xi_t = "0"
xi_x = "0"
eta_t = "{GAUSS}"
eta_x = "{GAUSS}"

[solver]
k = 40
"""

MODEL_CONFIG = """
[domain]
box_lo = [0.0, 0.0, 0.0]
box_hi = [1.0, 1.0, 1.0]

[model]
N = 2
phi = "grad_abs"
a = "1"
b = ["1"]
beta = ["1"]
"""


def _write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------


def test_load_pair_config(tmp_path):
    cfg = load_config(_write(tmp_path, "run.toml", PAIR_CONFIG))
    assert cfg.box.lo == (-2.0,) * 3
    assert cfg.k == 40
    kind, pe, kernel = build_kernel(cfg)
    assert kind == "pair_expansion"
    assert kernel.components == 3
    assert kernel.terms is not None


def test_load_model_config(tmp_path):
    cfg = load_config(_write(tmp_path, "run.toml", MODEL_CONFIG))
    kind, spec, kernel = build_kernel(cfg)
    assert kind == "model"
    assert spec.N == 2
    assert kernel.components == 6


def test_missing_factor_rejected(tmp_path):
    broken = PAIR_CONFIG.replace('eta_x = "%s"\n' % GAUSS, "")
    cfg = load_config(_write(tmp_path, "run.toml", broken))
    with pytest.raises(ConfigError):
        build_kernel(cfg)


def test_both_kernel_tables_rejected(tmp_path):
    both = PAIR_CONFIG + "\n[model]" + MODEL_CONFIG.split("[model]")[1]
    cfg = load_config(_write(tmp_path, "run.toml", both))
    with pytest.raises(ConfigError):
        build_kernel(cfg)


def test_bad_expression_rejected(tmp_path):
    bad = PAIR_CONFIG.replace(f'eta_t = "{GAUSS}"', 'eta_t = "__import__(1)"')
    cfg = load_config(_write(tmp_path, "run.toml", bad))
    with pytest.raises(ConfigError):
        build_kernel(cfg)


def test_bad_toml_rejected(tmp_path):
    with pytest.raises(ConfigError):
        load_config(_write(tmp_path, "run.toml", "[domain\nbox_lo = ["))


def test_bad_phi_rejected(tmp_path):
    cfg = load_config(_write(tmp_path, "run.toml",
                             MODEL_CONFIG.replace('"grad_abs"', '"cube"')))
    with pytest.raises(ConfigError):
        build_kernel(cfg)


def test_config_hash_stable(tmp_path):
    c1 = load_config(_write(tmp_path, "a.toml", PAIR_CONFIG))
    c2 = load_config(_write(tmp_path, "b.toml", PAIR_CONFIG))
    c3 = load_config(_write(tmp_path, "c.toml", MODEL_CONFIG))
    assert config_hash(c1) == config_hash(c2)
    assert config_hash(c1) != config_hash(c3)
    assert len(config_hash(c1)) == 16


# ---------------------------------------------------------------------------
# CLI exit codes and artifacts
# ---------------------------------------------------------------------------


def test_cli_synth_ok(tmp_path):
    cfg_path = _write(tmp_path, "run.toml", PAIR_CONFIG)
    out = tmp_path / "art"
    assert main(["synth", "--config", cfg_path, "--out", str(out)]) == EXIT_OK
    kernels = list(out.glob("kernel-*.json"))
    manifests = list(out.glob("*.manifest.json"))
    assert len(kernels) == 1 and len(manifests) == 1
    desc = json.loads(kernels[0].read_text())
    assert desc["kind"] == "pair_expansion"


def test_cli_bad_config_exit_2(tmp_path):
    bad = _write(tmp_path, "run.toml", PAIR_CONFIG.replace('xi_x = "0"\n', ""))
    assert main(["synth", "--config", bad, "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["synth", "--config", str(tmp_path / "missing.toml"),
                 "--out", str(tmp_path)]) == EXIT_CONFIG


def test_cli_unknown_suite_exit_2(tmp_path):
    assert main(["verify", "no-such-suite", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_cli_spectrum_writes_csv(tmp_path):
    cfg_path = _write(tmp_path, "run.toml", MODEL_CONFIG)
    out = tmp_path / "art"
    assert main(["spectrum", "--config", cfg_path, "--grid", "6", "--k", "30",
                 "--out", str(out)]) == EXIT_OK
    csvs = list(out.glob("spectrum-*-n6.csv"))
    assert len(csvs) == 1
    seq = SpectralSequence.from_csv(csvs[0])
    assert seq.count == 30
    assert seq[0] > 0


def test_cli_spectrum_deterministic(tmp_path):
    cfg_path = _write(tmp_path, "run.toml", MODEL_CONFIG)
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["spectrum", "--config", cfg_path, "--grid", "5", "--k", "20",
                     "--seed", "3", "--out", str(out)]) == EXIT_OK
        outs.append(next(out.glob("spectrum-*.csv")).read_bytes())
    assert outs[0] == outs[1]


def test_cli_spectrum_zero_kernel(tmp_path):
    zero = PAIR_CONFIG.replace(f'eta_t = "{GAUSS}"', 'eta_t = "0"') \
                      .replace(f'eta_x = "{GAUSS}"', 'eta_x = "0"')
    cfg_path = _write(tmp_path, "run.toml", zero)
    out = tmp_path / "art"
    assert main(["spectrum", "--config", cfg_path, "--grid", "4", "--k", "5",
                 "--out", str(out)]) == EXIT_OK
    seq = SpectralSequence.from_csv(next(out.glob("spectrum-*.csv")))
    assert np.all(seq.values == 0.0)


def test_cli_refine_chain(tmp_path):
    cfg_path = _write(tmp_path, "run.toml", MODEL_CONFIG)
    out = tmp_path / "art"
    assert main(["spectrum", "--config", cfg_path, "--refine-chain", "4,5",
                 "--k", "10", "--out", str(out)]) == EXIT_OK
    assert len(list(out.glob("spectrum-*-n4.csv"))) == 1
    assert len(list(out.glob("spectrum-*-n5.csv"))) == 1
    manifest = json.loads(next(out.glob("spectrum-*.manifest.json")).read_text())
    assert manifest["grids"] == [4, 5]
