import os

import numpy as np
import pytest

from experiments.config import build_config
from experiments.output import read_csv_table, read_field_dump
from experiments.poisson import run_poisson_virus, solve_poisson
from experiments.problems import PEANUT, Problem
from experiments.reaction_diffusion import (_stability_job, run_peanut, run_rd_peanut_convergence,
                                            run_rd_peanut_efficiency, run_rd_peanut_stability)
from experiments.stefan import StefanRun, front_velocities, logistic, run_stefan_square

CIRCLE = Problem(
    name="circle",
    box=(-1.0, 1.0),
    level_set=lambda x, y: x * x + y * y - 0.55 ** 2,
    exact=lambda x, y, t=0.0: np.exp(x) * np.sin(y) + x * x,
    beta=lambda x, y: 1.0,
    source=lambda x, y, t=0.0: np.full(np.shape(x), 2.0),
    exact_gradient=lambda x, y, t=0.0: (np.exp(x) * np.sin(y) + 2.0 * x, np.exp(x) * np.cos(y)),
)


def test_solve_poisson_reports_errors():
    result = solve_poisson(CIRCLE, 41)
    assert result.solution.l_inf < 5e-2
    assert result.gradient.l_inf < 0.5
    assert result.iterations > 0
    assert result.nodal.shape == (41, 41)
    assert np.isnan(result.nodal[0, 0])


def test_poisson_sweep_writes_tables(tmp_path):
    cfg = build_config("poisson_virus", overrides={"sweep": "81,41", "out_dir": str(tmp_path), "workers": 2})
    solution, gradient, slopes = run_poisson_virus(cfg, problem=CIRCLE)
    assert [r.n for r in solution] == [41, 81]
    assert solution[1].order_inf is not None
    assert slopes["u_inf"] > 1.0
    rows = read_csv_table(tmp_path / "poisson_circle_solution.csv")
    assert [r["resolution"] for r in rows] == ["41x41", "81x81"]
    assert rows[0]["order_inf"] == ""
    assert (tmp_path / "poisson_circle_gradient.csv").exists()
    assert (tmp_path / "poisson_circle_slopes.csv").exists()
    _, _, dims, arrays = read_field_dump(tmp_path / "poisson_circle_n41.vtk")
    assert dims == (41, 41)
    assert set(arrays) == {"u", "rho"}


def test_peanut_error_shrinks_with_resolution():
    coarse, _, _ = run_peanut(PEANUT, 41, 0.01, 0.2, "etd2rk")
    fine, state, run = run_peanut(PEANUT, 81, 0.01, 0.2, "etd2rk")
    assert state.t == pytest.approx(0.2)
    assert fine.steps == 20
    assert fine.l_inf < coarse.l_inf
    assert coarse.l_inf < 5e-2
    assert run.operator.n == len(state.U)


@pytest.mark.parametrize("scheme", ["etd2", "cn"])
def test_peanut_schemes_agree(scheme):
    reference, _, _ = run_peanut(PEANUT, 41, 0.01, 0.2, "etd2rk")
    report, _, _ = run_peanut(PEANUT, 41, 0.01, 0.2, scheme)
    assert report.l_inf == pytest.approx(reference.l_inf, rel=0.5)


def test_rk4_diverges_where_etd_does_not():
    diverged = _stability_job(PEANUT, 41, 0.01, 0.2, "rk4", 1e-8, 1e-10)
    assert diverged["outcome"] == "diverged"
    assert diverged["l_inf"] == ""
    stable = _stability_job(PEANUT, 41, 0.01, 0.2, "etd2", 1e-8, 1e-10)
    assert stable["outcome"] == "completed"
    assert float(stable["l_inf"]) < 5e-2


def test_stability_table(tmp_path):
    cfg = build_config("rd_peanut_stability", overrides={
        "n": 41, "t_end": 0.05, "dts": "0.01,0.05", "schemes": "etd2,etd2rk", "out_dir": str(tmp_path)})
    rows = run_rd_peanut_stability(cfg)
    assert [(r["scheme"], r["dt"]) for r in rows] == [
        ("etd2", "0.01"), ("etd2", "0.05"), ("etd2rk", "0.01"), ("etd2rk", "0.05")]
    assert all(r["outcome"] == "completed" for r in rows)
    written = read_csv_table(tmp_path / "rd_peanut_stability.csv")
    assert list(written[0]) == ["scheme", "dt", "steps", "outcome", "l_inf", "l_2"]
    assert written[1]["steps"] == "1"


def test_convergence_table(tmp_path):
    cfg = build_config("rd_peanut_convergence", overrides={
        "sweep": "41,81", "schemes": "etd2", "t_end": 0.1, "out_dir": str(tmp_path)})
    tables = run_rd_peanut_convergence(cfg)
    reports = tables["etd2"]
    assert [r.n for r in reports] == [41, 81]
    assert reports[1].l_inf < reports[0].l_inf
    rows = read_csv_table(tmp_path / "rd_peanut_convergence_etd2.csv")
    assert list(rows[0]) == ["resolution", "l_inf", "order_inf", "l_2", "order_2"]
    assert rows[0]["resolution"] == "41x41x2"
    assert rows[1]["resolution"] == "81x81x4"


def test_efficiency_table(tmp_path):
    cfg = build_config("rd_peanut_efficiency", overrides={
        "n": 41, "dt": 0.01, "t_end": 0.03, "schemes": "cn,etd2", "out_dir": str(tmp_path)})
    rows = run_rd_peanut_efficiency(cfg)
    assert [r["scheme"] for r in rows] == ["cn", "etd2"]
    assert all(float(r["seconds"]) >= 0.0 for r in rows)
    assert rows[0]["steps"] == 3
    assert rows[0]["reference_seconds_1001"] == "304.23"
    assert (tmp_path / "rd_peanut_efficiency.csv").exists()


def test_logistic_reaction():
    f = logistic(2.0, 0.5)
    assert f(np.array([0.0, 1.0, 4.0]), 0.0) == pytest.approx([0.0, 1.5, 0.0])


def stefan_config(tmp_path, **overrides):
    values = {"n": 46, "dt": 1e-3, "t_end": 3e-3, "out_dir": str(tmp_path), "dump_every": 1}
    values.update(overrides)
    return build_config("stefan_square", overrides=values)


def test_stefan_initial_state(tmp_path):
    run = StefanRun(stefan_config(tmp_path))
    s = run.state
    assert s.t == 0.0
    assert s.operator.n > 0
    values = s.u[np.isfinite(s.u)]
    assert values.size == s.operator.n
    assert values.min() >= 0.0
    assert values.max() <= 1.25


def test_stefan_with_fixed_front(tmp_path):
    run = run_stefan_square(stefan_config(tmp_path, mu=0.0))
    assert run.steps == 3
    assert run.state.t == pytest.approx(3e-3)
    rows = read_csv_table(tmp_path / "stefan_metrics.csv")
    assert [r["step"] for r in rows] == ["0", "1", "2", "3"]
    assert len({r["area"] for r in rows}) == 1
    peaks = [float(r["max_u"]) for r in rows]
    assert peaks[-1] < peaks[0]
    for k in range(4):
        assert (tmp_path / f"stefan_{k:05d}.vtk").exists()


def test_stefan_moving_front(tmp_path):
    run = run_stefan_square(stefan_config(tmp_path, mu=1.0, dump_every=0))
    assert run.steps == 3
    assert len(run.metrics) == 4
    assert len(run.state.previous) == 3
    ratio = float(run.metrics[-1]["isoperimetric_ratio"])
    assert 0.6 < ratio <= 1.0
    assert float(run.metrics[-1]["min_u"]) > -1e-3
    assert not list(tmp_path.glob("*.vtk"))
    assert os.path.exists(tmp_path / "stefan_metrics.csv")


def test_stefan_area_grows_every_step(tmp_path):
    run = run_stefan_square(stefan_config(tmp_path, dump_every=0))
    area = [float(r["area"]) for r in run.metrics]
    assert all(b > a for a, b in zip(area, area[1:]))


def test_stefan_front_rests_when_u_vanishes(tmp_path):
    run = StefanRun(stefan_config(tmp_path))
    run.state.u = run.state.u * 1e-20
    ls = run.state.level_set
    assert run.move_front() is ls
    run.advance()
    assert run.state.level_set is ls
    assert run.travel == 0.0


def test_stefan_reinitializes_after_half_a_cell(tmp_path):
    run = StefanRun(stefan_config(tmp_path))
    run.move_front()
    assert 0.0 < run.travel < 0.5 * run.grid.h
    run.travel = 0.5 * run.grid.h
    run.move_front()
    assert run.travel == 0.0


def test_front_velocities_point_outwards(tmp_path):
    run = StefanRun(stefan_config(tmp_path))
    s = run.state
    points, velocities = front_velocities(s.operator.gather(s.u), s.operator, s.level_set, 1.0)
    assert velocities.shape == (len(points), 2)
    normals = s.level_set.gradient_at(points[:, 0], points[:, 1])
    assert np.all(np.sum(velocities * normals, axis=1) >= 0.0)
    assert np.any(velocities)
    # the right edge moves to the right
    right = points[:, 0] > 0.45
    assert np.all(velocities[right, 0] >= 0.0)
    assert velocities[right, 0].max() > 1.0
