import os

import pytest

from engine.errors import ConfigurationError
from experiments.config import DEFAULTS, EXPERIMENTS, build_config, load_config_file, parse_config_text


def test_every_experiment_has_defaults():
    for name in EXPERIMENTS:
        cfg = build_config(name)
        assert cfg.experiment == name
    assert set(DEFAULTS) == set(EXPERIMENTS)


def test_stefan_defaults():
    cfg = build_config("stefan_square")
    assert cfg.n == 201
    assert cfg.dt == pytest.approx(1e-3)
    assert cfg.t_end == pytest.approx(1.0)
    assert cfg.dump_every == 100
    assert cfg.n_steps == 1000
    assert cfg.diffusion == pytest.approx(1.5)


def test_file_overrides_defaults_and_flags_override_file():
    text = """
    # comment line
    n = 51
    dt=0.01   # trailing comment
    t-end = 0.5
    scheme = etd2rk
    """
    file_values = parse_config_text(text)
    assert file_values == {"n": 51, "dt": 0.01, "t_end": 0.5, "scheme": "etd2rk"}
    cfg = build_config("rd_peanut_stability", file_values, {"n": 61, "scheme": None})
    assert cfg.n == 61
    assert cfg.dt == pytest.approx(0.01)
    assert cfg.scheme == "etd2rk"
    assert cfg.n_steps == 50


def test_tuple_values():
    values = parse_config_text("sweep = 51, 91,171\ndts = 0.1;0.01\nschemes = cn,etd2")
    assert values["sweep"] == (51, 91, 171)
    assert values["dts"] == (0.1, 0.01)
    assert values["schemes"] == ("cn", "etd2")


@pytest.mark.parametrize("text", [
    "colour = blue",
    "n = many",
    "just a line",
    "dt = 1e-3e",
])
def test_bad_config_lines(text):
    with pytest.raises(ConfigurationError):
        parse_config_text(text)


@pytest.mark.parametrize("overrides", [
    {"n": 4},
    {"dt": -1.0},
    {"dt": 0.5, "t_end": 0.1},
    {"scheme": "euler"},
    {"krylov_tol": 0.0},
    {"workers": 0},
    {"sweep": "51,6"},
])
def test_invalid_values(overrides):
    with pytest.raises(ConfigurationError):
        build_config("rd_peanut_convergence", overrides=overrides)


def test_unknown_experiment_and_mismatch():
    with pytest.raises(ConfigurationError):
        build_config("heat_equation")
    with pytest.raises(ConfigurationError):
        build_config("poisson_virus", {"experiment": "stefan_square"})


def test_load_config_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("n = 41\nout_dir = results\n")
    assert load_config_file(path) == {"n": 41, "out_dir": "results"}
    with pytest.raises(ConfigurationError):
        load_config_file(tmp_path / "missing.cfg")


def test_ensure_out_dir_and_overrides(tmp_path):
    cfg = build_config("poisson_virus", overrides={"out_dir": str(tmp_path / "a" / "b")})
    assert os.path.isdir(cfg.ensure_out_dir())
    changed = cfg.with_overrides(n=33, dt=None)
    assert changed.n == 33
    assert changed.dt == cfg.dt
