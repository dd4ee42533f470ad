import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from optoent.cli import EXIT_CONFIG, EXIT_CONVERGENCE, EXIT_OK, EXIT_VALIDATION, main
from optoent.config import PRESET_NAMES, ConfigError, RunConfig, load_config, load_preset


def read_csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


def test_run_writes_csv_and_manifest(tmp_path, capsys):
    code = main(["run", "--out", str(tmp_path), "--samples", "30", "--set", "t_max=3"])
    assert code == EXIT_OK
    header, data = read_csv(tmp_path / "run.csv")
    assert header == ["t_kappa", "E_N", "mean_x_c", "mean_p_c", "mean_x_m", "mean_p_m", "n_cav_fluct"]
    assert data.shape == (31, 7)
    man = json.loads((tmp_path / "run_manifest.json").read_text())
    assert man["version"] == "0.1.0"
    assert set(RunConfig().to_dict()) <= set(man["config"])
    params = man["curves"][0]["params"]
    assert {"g", "omega_m", "gamma_m", "delta0", "kappa", "n_m", "n_th", "n_c"} <= set(params)
    assert man["grid"]["dt"] == 5e-3
    assert "v2_rel_change_half_resolution" in man["curves"][0]["diagnostics"]
    assert "final E_N" in capsys.readouterr().out


def test_csv_uses_seventeen_significant_digits(tmp_path):
    main(["run", "--out", str(tmp_path), "--samples", "4", "--set", "t_max=2"])
    line = (tmp_path / "run.csv").read_text().splitlines()[2]
    assert any(len(v.replace(".", "").replace("-", "").lstrip("0").split("e")[0]) >= 15 for v in line.split(","))


def test_identical_config_gives_identical_csv(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        main(["run", "--out", str(out), "--samples", "20", "--seed", "3", "--set", "t_max=4"])
    assert (a / "run.csv").read_bytes() == (b / "run.csv").read_bytes()


def test_zero_drive_gives_zero_entanglement(tmp_path):
    main(["run", "--out", str(tmp_path), "--samples", "20", "--set", "E=0", "--set", "t_max=5"])
    header, data = read_csv(tmp_path / "run.csv")
    assert np.all(data[:, header.index("E_N")] == 0.0)


def test_flags_override_config_file(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text('E = 1e5\nsamples = 7\nt_max = 2.0\nmode = "noise-free"\n')
    loaded = load_config(cfg)
    assert loaded.E == 1e5 and loaded.mode == "noise-free"
    out = tmp_path / "o"
    main(["run", "--config", str(cfg), "--samples", "9", "--out", str(out)])
    man = json.loads((out / "run_manifest.json").read_text())
    assert man["config"]["samples"] == 9
    assert man["config"]["E"] == 1e5
    assert man["config"]["mode"] == "noise-free"


@pytest.mark.parametrize(
    "args, field",
    [
        (["--set", "g=-1"], "g"),
        (["--set", "samples=0"], "samples"),
        (["--set", "bogus=1"], "bogus"),
        (["--set", "drive=laser"], "drive"),
    ],
)
def test_config_errors_name_the_field(tmp_path, capsys, args, field):
    code = main(["run", "--out", str(tmp_path)] + args)
    assert code == EXIT_CONFIG
    assert field in capsys.readouterr().err


def test_sweep_range_must_be_non_empty():
    with pytest.raises(ConfigError) as err:
        RunConfig(sweep="detuning", sweep_start=1.0, sweep_stop=1.0, sweep_steps=5).validate()
    assert err.value.field == "sweep_stop"


def test_sweep_needs_axis(tmp_path):
    assert main(["sweep", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_coarse_grid_run_fails_with_convergence_code(tmp_path, capsys):
    code = main(["run", "--out", str(tmp_path), "--grid-dt", "0.1", "--samples", "5"])
    assert code == EXIT_CONVERGENCE
    assert "smaller grid step" in capsys.readouterr().err


def test_intensity_sweep_with_baseline_columns(tmp_path):
    code = main(["sweep", "--axis", "intensity", "--start", "1e5", "--stop", "5e5", "--steps", "3",
                 "--mode", "compare", "--set", "delta0=1.0", "--set", "t_max=5", "--out", str(tmp_path)])
    assert code == EXIT_OK
    header, data = read_csv(tmp_path / "run_d+1.csv")
    assert header == ["E_over_kappa", "E_N", "n_cav_fluct", "E_N_baseline", "n_cav_fluct_baseline", "s1", "s2", "stable"]
    np.testing.assert_allclose(data[:, 0], [1e5, 3e5, 5e5])


def test_baseline_mode_single_point(tmp_path):
    assert main(["run", "--mode", "baseline", "--set", "delta0=1.0", "--out", str(tmp_path)]) == EXIT_OK
    header, data = read_csv(tmp_path / "run.csv")
    assert data.shape == (7,) or data.shape == (1, 7)
    assert header[-1] == "stable"


def test_figure_fig6_map_and_boundary(tmp_path, capsys):
    assert main(["figure", "fig6", "--out", str(tmp_path)]) == EXIT_OK
    header, data = read_csv(tmp_path / "fig6_map.csv")
    assert data.shape == (2500, len(header))
    _, boundary = read_csv(tmp_path / "fig6_boundary.csv")
    assert boundary.shape[0] > 0
    assert (tmp_path / "fig6_combined.csv").exists()
    assert "eigenvalue agreement=100.000%" in capsys.readouterr().out


@pytest.mark.parametrize("name", PRESET_NAMES)
def test_presets_load_and_validate(name):
    cfg = load_preset(name).validate()
    assert cfg.g == 1e-6 and cfg.omega_m == 2.5 and cfg.q_m == 1e7 and cfg.n_m == 0.0
    assert cfg.t_max == 15.0


def test_fig2a_preset_matches_caption():
    cfg = load_preset("fig2a")
    assert cfg.E == 3e5
    assert sorted(cfg.curves) == [-2.0, -1.5, -1.0, -0.5]
    assert load_preset("fig5a").drive == "pulse" and load_preset("fig5a").pulse_width == 2.5


def test_validate_passes_with_defaults(capsys):
    assert main(["validate"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "FAIL" not in out
    assert "checks passed" in out


def test_validate_fails_on_coarse_grid(capsys):
    assert main(["validate", "--grid-dt", "0.1"]) == EXIT_VALIDATION
    out = capsys.readouterr().out
    assert "FAIL V2 half-resolution convergence" in out
    assert "--grid-dt" in out


def test_validate_report_is_seed_deterministic(capsys):
    main(["validate", "--seed", "5"])
    first = capsys.readouterr().out
    main(["validate", "--seed", "5"])
    assert capsys.readouterr().out == first


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "optoent.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for cmd in ("run", "figure", "sweep", "validate"):
        assert cmd in res.stdout
