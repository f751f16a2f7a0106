import csv

import pytest
import yaml

from levyspde.cli import main
from levyspde.noise import read_noise


def test_check_passes_for_preset(tmp_path, capsys):
    assert main(["check", "--preset", "allen-cahn-1d", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "PASS F-condition: critical (slack 0)" in out
    assert (tmp_path / "check.txt").exists()
    cfg = yaml.safe_load((tmp_path / "resolved_config.yaml").read_text())
    assert cfg["preset"] == "allen-cahn-1d"


def test_check_scientific_failure(tmp_path, capsys):
    code = main(["check", "--preset", "allen-cahn-2d", "--set", "overrides.b=[[1.0, 1.0], [0.5, 0.0]]",
                 "--out", str(tmp_path)])
    assert code == 1
    assert "parabolicity" in capsys.readouterr().out


def test_check_flipped_variant_reports_expected_failure(tmp_path, capsys):
    assert main(["check", "--preset", "allen-cahn-1d", "--set", "overrides.flip=true",
                 "--out", str(tmp_path)]) == 0
    assert "expected to fail" in capsys.readouterr().out


def test_malformed_config_is_usage_error(tmp_path):
    f = tmp_path / "bad.yaml"
    f.write_text("solve: {n_steps: -3}\n")
    assert main(["check", str(f), "--out", str(tmp_path)]) == 2
    assert main(["check", "--preset", "nope", "--out", str(tmp_path)]) == 2
    assert main(["check", "--set", "novalue", "--out", str(tmp_path)]) == 2


def test_simulate_writes_paths_and_noise(tmp_path, capsys):
    code = main(["simulate", "--preset", "burgers-1d", "--paths", "2", "--steps", "20", "--seed", "3",
                 "--out", str(tmp_path), "--set", "dump_noise=true", "--set", "modes=true"])
    assert code == 0
    rows = list(csv.reader((tmp_path / "path_0001.csv").open()))
    assert rows[0][:2] == ["t", "status_flag"]
    assert len(rows[0]) == 6 + 16
    rec = read_noise(tmp_path / "noise_0001.bin")
    assert rec.grid.size >= 21
    assert "summary: 2 completed" in capsys.readouterr().out


def test_simulate_is_deterministic_across_jobs(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    main(["simulate", "--preset", "allen-cahn-1d", "--paths", "3", "--steps", "30", "--out", str(a)])
    main(["simulate", "--preset", "allen-cahn-1d", "--paths", "3", "--steps", "30", "--out", str(b),
          "--jobs", "2"])
    for i in range(3):
        assert (a / f"path_{i:04d}.csv").read_bytes() == (b / f"path_{i:04d}.csv").read_bytes()


def test_simulate_strict_blowup(tmp_path):
    args = ["simulate", "--preset", "allen-cahn-1d", "--set", "overrides.flip=true",
            "--set", "u0.scale=10", "--paths", "2", "--steps", "100", "--out", str(tmp_path)]
    assert main(args) == 0
    assert main(args + ["--strict"]) == 1
    last = (tmp_path / "path_0000.csv").read_text().strip().splitlines()[-1]
    assert last.split(",")[1] == "2"


def test_verify_selected_criteria(tmp_path, capsys):
    assert main(["verify", "--criterion", "1", "--criterion", "6", "--out", str(tmp_path)]) == 0
    text = (tmp_path / "acceptance.txt").read_text()
    assert "criterion  1 PASS" in text and "criterion  6 PASS" in text


def test_verify_single_path_is_usage_error(tmp_path):
    assert main(["verify", "--paths", "1", "--out", str(tmp_path)]) == 2


def test_sweep_grid(tmp_path):
    code = main(["sweep", "--preset", "heat-1d", "--paths", "3", "--steps", "16",
                 "--grid", "overrides.sigma=0.5,1.0", "--out", str(tmp_path)])
    assert code == 0
    rows = list(csv.reader((tmp_path / "sweep.csv").open()))
    assert rows[0][:2] == ["overrides.sigma", "verdict"]
    assert [r[0] for r in rows[1:]] == ["0.5", "1.0"]


def test_sweep_requires_numeric_grid(tmp_path):
    assert main(["sweep", "--preset", "heat-1d", "--out", str(tmp_path)]) == 2
    assert main(["sweep", "--preset", "heat-1d", "--grid", "overrides.sigma=a,b", "--out", str(tmp_path)]) == 2


def test_no_subcommand_exits_2():
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2
