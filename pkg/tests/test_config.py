import numpy as np
import pytest
import yaml

from levyspde.config import (
    DEFAULTS,
    ConfigError,
    apply_override,
    build_from_config,
    dump_config,
    initial_state,
    load_config,
    parse_value,
    resolve_config,
    solve_config,
)


def test_defaults_resolve_and_validate():
    cfg = resolve_config()
    assert cfg["preset"] == DEFAULTS["preset"]
    assert solve_config(cfg).n_steps == 400


def test_flags_override_file(tmp_path):
    f = tmp_path / "c.yaml"
    f.write_text("preset: heat-1d\nseed: 4\nsolve: {n_steps: 10}\n")
    cfg = resolve_config(load_config(f), seed=9, paths=None)
    assert cfg["seed"] == 9
    assert cfg["solve"]["n_steps"] == 10
    assert cfg["solve"]["T"] == 1.0


@pytest.mark.parametrize("text", ["bogus: 1\n", "preset: nope\n", "solve: {n_steps: 0}\n",
                                  "preset: heat-1d\nmodel: {triple: {d: 1, K: 4}}\n", "[1, 2]\n",
                                  "solve: {n_steps: [\n"])
def test_invalid_configs_rejected(tmp_path, text):
    f = tmp_path / "c.yaml"
    f.write_text(text)
    with pytest.raises(ConfigError):
        load_config(f)


def test_missing_file():
    with pytest.raises(ConfigError):
        load_config("/nonexistent/cfg.yaml")


def test_apply_override_dotted():
    cfg = apply_override(resolve_config(), "solve.T", 2.0)
    assert cfg["solve"]["T"] == 2.0
    with pytest.raises(ConfigError):
        apply_override(cfg, "seed.x", 1)


def test_dump_roundtrip():
    cfg = resolve_config({"preset": "shell", "overrides": {"nu": 0.5}})
    assert yaml.safe_load(dump_config(cfg)) == cfg


def test_model_block_builds():
    cfg = resolve_config({"model": {"triple": {"d": 1, "K": 6}, "reaction": [0, 1, 0, -1],
                                    "noise": {"sigma": 0.3, "n_channels": 2},
                                    "levy": {"intensities": [1.0], "amplitudes": [0.2]},
                                    "params": {"alpha_F": 0.25, "beta_F": 0.875, "rho_F": 1.0}}})
    assert "preset" not in cfg
    pre = build_from_config(cfg)
    assert pre.model.K == 6
    assert pre.model.noise_dim == 2
    assert pre.model.params.beta_F == 0.875


def test_initial_state_from_coefficients():
    cfg = resolve_config({"preset": "zero", "u0": {"scale": 2.0, "coefficients": [1, 0, 0, 1]}})
    np.testing.assert_array_equal(initial_state(cfg, build_from_config(cfg)), [2.0, 0, 0, 2.0])
    bad = resolve_config({"preset": "zero", "u0": {"coefficients": [1, 0]}})
    with pytest.raises(ConfigError):
        initial_state(bad, build_from_config(bad))


def test_bad_override_is_config_error():
    with pytest.raises(ConfigError):
        build_from_config(resolve_config({"preset": "shell", "overrides": {"bogus": 1}}))


def test_unsigned_exponent_floats_are_numbers(tmp_path):
    f = tmp_path / "c.yaml"
    f.write_text("solve: {blowup_threshold: 1.0e6, T: 2e0}\n")
    cfg = load_config(f)
    assert cfg["solve"]["blowup_threshold"] == 1.0e6
    assert cfg["solve"]["T"] == 2.0


def test_parse_value():
    assert parse_value("1e3") == 1000.0
    assert parse_value("[[1, 2]]") == [[1, 2]]
    with pytest.raises(ConfigError):
        parse_value("[1,")
