import json

import numpy as np
import pytest

import app
from pfde.reports import read_csv

ZERO_REACTION = """
[problem]
n = 1
length = 1.0
mesh_points = 17
delay_steps = 16

[[species]]
diffusion = 0.1
bc = "neumann"

[reaction]
catalog = "linear"

[initial]
values = [0.0]
"""

LINEAR_DECAY = """
[problem]
n = 1
length = 1.0
mesh_points = 17
delay_steps = 64

[[species]]
diffusion = 0.1
bc = "neumann"

[reaction]
catalog = "linear"

[reaction.coefficients]
A = [[-1.0]]
"""

SOURCED = LINEAR_DECAY.replace("A = [[-1.0]]", "source = [1.0]")

EXPLOSIVE = """
[problem]
n = 1
length = 1.0
mesh_points = 17
delay_steps = 16

[[species]]
diffusion = 0.1
bc = "neumann"

[reaction]
catalog = "linear"

[reaction.coefficients]
A = [[400.0]]

[initial]
values = [1.0]
"""

MISSING_DIFFUSION = """
[problem]
n = 1
length = 1.0
mesh_points = 17
delay_steps = 64

[[species]]
bc = "neumann"

[reaction]
catalog = "linear"
"""


@pytest.fixture
def write_config(tmp_path):
    def write(text, name="problem.toml"):
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return str(path)

    return write


def test_simulate_zero_reaction(tmp_path, write_config):
    out = tmp_path / "sim"
    code = app.main(["simulate", write_config(ZERO_REACTION), "--T", "2", "--out", str(out)])
    assert code == app.EXIT_OK
    digest, frame = read_csv(out / "trajectory.csv")
    assert np.all(frame["value"] == 0.0)
    assert sorted(frame["t"].unique()) == [0.0, 1.0, 2.0]
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "simulate"
    assert len(digest) == 64


def test_simulate_logistic_settles_near_carrying_capacity(tmp_path, configs_dir):
    out = tmp_path / "sim"
    code = app.main(["simulate", str(configs_dir / "delayed_logistic.toml"), "--T", "40",
                     "--snapshots", "40", "--out", str(out)])
    assert code == app.EXIT_OK
    _, frame = read_csv(out / "trajectory.csv")
    np.testing.assert_allclose(frame["value"], 1.0, rtol=0.05)


def test_missing_diffusion_is_a_config_error(tmp_path, write_config, capsys):
    code = app.main(["simulate", write_config(MISSING_DIFFUSION), "--T", "1", "--out", str(tmp_path / "x")])
    assert code == app.EXIT_CONFIG
    assert "species.0.diffusion" in capsys.readouterr().err


def test_off_grid_snapshot_is_reported(tmp_path, write_config):
    code = app.main(["simulate", write_config(ZERO_REACTION), "--T", "1", "--snapshots", "0.3",
                     "--out", str(tmp_path / "x")])
    assert code == app.EXIT_CONFIG


def test_blowup_record_names_the_run(tmp_path, write_config):
    out = tmp_path / "sim"
    code = app.main(["simulate", write_config(EXPLOSIVE), "--T", "1", "--out", str(out)])
    assert code == app.EXIT_BLOWUP
    manifest, last_time = (out / "blowup.txt").read_text().splitlines()
    digest, _ = read_csv(out / "trajectory.csv")
    assert manifest == f"manifest={digest}"
    assert 0.0 < float(last_time.removeprefix("last_time=")) < 1.0


def test_analyze_delayed_logistic(tmp_path, configs_dir, capsys):
    out = tmp_path / "analysis"
    code = app.main(["--threads", "1", "analyze", str(configs_dir / "delayed_logistic.toml"), "--out", str(out)])
    assert code == app.EXIT_OK
    report = json.loads((out / "report.json").read_text())
    assert report["blocks"]["k"] == 1
    assert report["blocks"]["I"] == report["blocks"]["J"] == [1]
    assert report["spectra"][0]["lower"] == pytest.approx(1.0, abs=2e-2)
    assert report["verdict"]["uniformly_persistent"] is True
    assert report["verdict"]["strictly_persistent_at_zero"] is True
    assert "uniformly_persistent=True" in capsys.readouterr().out
    for name in ("matrix.csv", "spectrum.csv", "manifest.json"):
        assert (out / name).exists()


def test_analyze_without_zero_solution(tmp_path, write_config):
    code = app.main(["analyze", write_config(SOURCED), "--out", str(tmp_path / "x")])
    assert code == app.EXIT_ZERO_SECTION


def test_check_quasimonotone_on_delayed_logistic(tmp_path, configs_dir):
    out = tmp_path / "check"
    code = app.main(["check", str(configs_dir / "delayed_logistic.toml"), "--suite", "quasimonotone",
                     "--count", "200", "--out", str(out)])
    assert code == app.EXIT_FAILED_PROPERTY
    _, frame = read_csv(out / "check.csv")
    assert not frame["pass"].any()


def test_check_comparison_on_linear_decay(tmp_path, write_config):
    code = app.main(["check", write_config(LINEAR_DECAY), "--suite", "comparison", "--count", "2",
                     "--out", str(tmp_path / "check")])
    assert code == app.EXIT_OK


def test_spectrum_command_validates_species(tmp_path, configs_dir):
    code = app.main(["spectrum", str(configs_dir / "delayed_logistic.toml"), "--species", "2",
                     "--out", str(tmp_path / "x")])
    assert code == app.EXIT_CONFIG


def test_check_runs_replay_exactly(tmp_path, configs_dir):
    out = tmp_path / "check"
    argv = ["check", str(configs_dir / "cooperative.toml"), "--suite", "monotone", "--count", "4",
            "--seed", "7", "--out", str(out)]
    assert app.main(argv) == app.EXIT_OK
    first = (out / "check.csv").read_bytes()
    assert app.main(argv) == app.EXIT_OK
    assert (out / "check.csv").read_bytes() == first


def test_restart_continues_a_straight_run(tmp_path, configs_dir):
    config = str(configs_dir / "cooperative.toml")
    straight, first, second = tmp_path / "straight", tmp_path / "first", tmp_path / "second"
    assert app.main(["simulate", config, "--T", "3", "--snapshots", "3", "--out", str(straight)]) == app.EXIT_OK
    assert app.main(["simulate", config, "--T", "2", "--dump", "--out", str(first)]) == app.EXIT_OK
    assert app.main(["simulate", config, "--T", "1", "--snapshots", "1", "--restart", str(first / "state.bin"),
                     "--out", str(second)]) == app.EXIT_OK

    _, expected = read_csv(straight / "trajectory.csv")
    _, resumed = read_csv(second / "trajectory.csv")
    assert resumed["t"].unique().tolist() == [3.0]
    np.testing.assert_allclose(resumed["value"].to_numpy(), expected["value"].to_numpy(), atol=1e-10)
