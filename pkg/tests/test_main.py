import pytest

import main
from engine.errors import DomainEscapeError, OutputError, SolutionBlowUp


@pytest.fixture
def captured(monkeypatch):
    seen = []
    monkeypatch.setitem(main.RUNNERS, "rd_peanut_stability", seen.append)
    return seen


def test_flags_reach_the_runner(captured, tmp_path):
    code = main.run(["rd_peanut_stability", "--n", "41", "--dt", "0.01", "--t-end", "0.05",
                     "--scheme", "etd2rk", "--out", str(tmp_path), "--workers", "2"])
    assert code == main.EXIT_OK
    cfg = captured[0]
    assert (cfg.n, cfg.dt, cfg.t_end, cfg.scheme, cfg.workers) == (41, 0.01, 0.05, "etd2rk", 2)
    assert cfg.out_dir == str(tmp_path)
    assert cfg.dts == (1e-4, 1e-3, 1e-2, 0.05, 0.1)


def test_flags_override_config_file(captured, tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("n = 61\ncg_tol = 1e-8\n")
    assert main.run(["rd_peanut_stability", "--config", str(path), "--n", "33"]) == main.EXIT_OK
    assert captured[0].n == 33
    assert captured[0].cg_tol == pytest.approx(1e-8)


@pytest.mark.parametrize("argv", [
    ["rd_peanut_stability", "--n", "4"],
    ["rd_peanut_stability", "--config", "does-not-exist.cfg"],
    ["rd_peanut_stability", "--dt", "0"],
])
def test_configuration_errors(captured, argv):
    assert main.run(argv) == main.EXIT_CONFIG
    assert captured == []


def test_unknown_command_is_rejected():
    with pytest.raises(SystemExit):
        main.run(["heat_equation"])


@pytest.mark.parametrize("error, code", [
    (SolutionBlowUp(0.1, 1e12), main.EXIT_NUMERICAL),
    (DomainEscapeError("front reached the rim"), main.EXIT_NUMERICAL),
    (OutputError("out/x.csv", "permission denied"), main.EXIT_IO),
])
def test_failures_map_to_exit_codes(monkeypatch, error, code):
    def failing(cfg):
        raise error
    monkeypatch.setitem(main.RUNNERS, "stefan_square", failing)
    assert main.run(["stefan_square"]) == code
