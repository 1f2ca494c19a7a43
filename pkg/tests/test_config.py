import os

import pytest

from escapepath.utils.config import (BvpConfig, load_run_config, parse_float_list, parse_vector)
from escapepath.utils.errors import ConfigError


def _write(tmp_path, text):
    path = tmp_path / "run.ini"
    path.write_text(text, encoding="utf-8")
    return str(path)


def test_defaults_without_file():
    config = load_run_config()
    assert config.model == "double_well"
    assert config.bvp == BvpConfig()
    assert config.sweep.mus == [0.001, 0.002, 0.005, 0.01]
    assert config.threads == 1


def test_file_values_override_defaults(tmp_path):
    config = load_run_config(_write(tmp_path, "[run]\nmodel = double_well_symmetric\nthreads = 3\n"
                                              "[bvp]\nT = 30\nmesh = 600\n"
                                              "[sde]\neps = 0.3\nexit_rule = saddle_ball\n"))
    assert config.model == "double_well_symmetric"
    assert config.threads == 3
    assert config.bvp.T == 30.0 and isinstance(config.bvp.T, float)
    assert config.bvp.mesh == 600 and isinstance(config.bvp.mesh, int)
    assert config.bvp.newton_tol == 1e-10
    assert config.sde.eps == 0.3
    assert config.sde.exit_rule == "saddle_ball"


def test_shipped_config_loads():
    config = load_run_config(os.path.join(os.path.dirname(__file__), "..", "config", "double_well.ini"))
    assert config.sde.eps == 0.4
    assert config.out == "results/double_well"


def test_quoted_values_are_unquoted(tmp_path):
    config = load_run_config(_write(tmp_path, "[run]\nmodel = \"double_well\"\nout = 'runs/a'\n"
                                              "[bvp]\nT = \"30\"\n"
                                              "[sde]\nexit_normal = \"1,0\"\nexit_rule = 'hyperplane'\n"))
    assert config.model == "double_well"
    assert config.out == "runs/a"
    assert config.bvp.T == 30.0
    assert config.sde.exit_normal == "1,0"
    assert config.sde.exit_rule == "hyperplane"


def test_unbalanced_quotes_are_kept(tmp_path):
    config = load_run_config(_write(tmp_path, "[run]\nmodel = \"double_well\n"))
    assert config.model == "\"double_well"


def test_keys_are_case_sensitive(tmp_path):
    with pytest.raises(ConfigError, match="Unknown key 't'"):
        load_run_config(_write(tmp_path, "[bvp]\nt = 30\n"))


@pytest.mark.parametrize("text, message", [
    ("[bvp]\nmeshes = 3\n", "Unknown key"),
    ("[plots]\nx = 1\n", "Unknown config section"),
    ("[run]\ncolour = red\n", "Unknown key"),
    ("[bvp]\nmesh = many\n", "Invalid value"),
    ("[run]\nthreads = 1.5\n", "Invalid value"),
    ("no section header\n", "Malformed"),
])
def test_invalid_files(tmp_path, text, message):
    with pytest.raises(ConfigError, match=message):
        load_run_config(_write(tmp_path, text))


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_run_config(str(tmp_path / "absent.ini"))


def test_environment_supplies_path_and_threads(tmp_path, monkeypatch):
    monkeypatch.setenv("ESCAPEPATH_CONFIG", _write(tmp_path, "[bvp]\ndegree = 2\n"))
    monkeypatch.setenv("ESCAPEPATH_THREADS", "6")
    config = load_run_config()
    assert config.bvp.degree == 2
    assert config.threads == 6


def test_resolved_lines_echo_every_value():
    lines = load_run_config().resolved_lines()
    assert lines[0] == "[run]"
    assert "model = double_well" in lines
    assert "[bvp]" in lines and "[melnikov]" in lines and "[sde]" in lines and "[sweep]" in lines
    assert "T = 20.0" in lines
    assert "newton_tol = 1e-10" in lines
    assert "mu_list = 0.001,0.002,0.005,0.01" in lines


def test_float_lists():
    assert parse_float_list("0.1, 0.2,,0.5") == [0.1, 0.2, 0.5]
    assert parse_vector("1,0") == (1.0, 0.0)
    with pytest.raises(ConfigError):
        parse_float_list("0.1,abc")
