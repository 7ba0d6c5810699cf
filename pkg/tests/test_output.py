import threading
import time

import numpy as np
import pytest

from domain.grid import LevelSetField, UniformGrid2D
from engine.errors import OutputError
from experiments.norms import ErrorReport, chain_orders, convergence_rate, fitted_slope, table_rows
from experiments.output import read_csv_table, read_field_dump, write_csv_table, write_field_dump
from experiments.sweeps import SweepRunner, run_sweep


def test_field_dump_round_trip(tmp_path):
    grid = UniformGrid2D(-1.0, -0.5, 0.25, 4, 5)
    ls = LevelSetField.from_function(grid, lambda x, y: x + 2.0 * y)
    u = np.arange(20, dtype=float).reshape(4, 5) / 7.0
    u[0, 0] = np.nan
    path = tmp_path / "field.vtk"
    write_field_dump(u, ls, path, title="test dump")

    lines = path.read_text().splitlines()
    assert lines[:4] == ["# vtk DataFile Version 3.0", "test dump", "ASCII", "DATASET STRUCTURED_POINTS"]
    assert "DIMENSIONS 4 5 1" in lines
    assert "POINT_DATA 20" in lines

    origin, spacing, dims, arrays = read_field_dump(path)
    assert origin == (-1.0, -0.5)
    assert spacing == 0.25
    assert dims == (4, 5)
    expected = np.where(np.isnan(u), 0.0, u)
    assert np.array_equal(arrays["u"], expected)
    assert np.array_equal(arrays["rho"], ls.values)


def test_field_dump_x_runs_fastest(tmp_path):
    grid = UniformGrid2D(0.0, 0.0, 1.0, 4, 4)
    ls = LevelSetField.from_function(grid, lambda x, y: x - 1.5)
    X, _ = grid.mesh()
    path = tmp_path / "x.vtk"
    write_field_dump(X, ls, path)
    lines = path.read_text().splitlines()
    start = lines.index("SCALARS u double 1") + 2
    assert [float(v) for v in lines[start:start + 4]] == [0.0, 1.0, 2.0, 3.0]


def test_field_dump_rejects_bad_shape_and_path(tmp_path):
    grid = UniformGrid2D(0.0, 0.0, 1.0, 4, 4)
    ls = LevelSetField(grid, np.ones(grid.shape))
    with pytest.raises(ValueError):
        write_field_dump(np.zeros((3, 4)), ls, tmp_path / "bad.vtk")
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(OutputError):
        write_field_dump(np.zeros(grid.shape), ls, blocker / "nested.vtk")


def test_csv_table(tmp_path):
    path = tmp_path / "t.csv"
    rows = [{"scheme": "etd2", "l_inf": "1.0e-03"}, {"scheme": "cn", "l_inf": "2.0e-03", "extra": 1}]
    write_csv_table(rows, path, columns=("scheme", "l_inf", "order"))
    raw = path.read_bytes()
    assert b"\r\n" not in raw
    assert raw.splitlines()[0] == b"scheme,l_inf,order"
    back = read_csv_table(path)
    assert back == [{"scheme": "etd2", "l_inf": "1.0e-03", "order": ""},
                    {"scheme": "cn", "l_inf": "2.0e-03", "order": ""}]


def test_csv_header_from_first_row(tmp_path):
    path = tmp_path / "t.csv"
    write_csv_table([{"a": 1, "b": 2}], path)
    assert path.read_text() == "a,b\n1,2\n"
    with pytest.raises(OutputError):
        read_csv_table(tmp_path / "missing.csv")


def test_convergence_rate():
    assert convergence_rate(4e-2, 1e-2, 0.2, 0.1) == pytest.approx(2.0)
    assert convergence_rate(0.0, 1e-2, 0.2, 0.1) is None


def test_error_report_norms():
    report = ErrorReport.from_errors([0.1, -0.3, 0.2], h=0.5, n=9, steps=4)
    assert report.l_inf == pytest.approx(0.3)
    assert report.l_2 == pytest.approx(0.5 * np.sqrt(0.14))
    assert report.resolution_label() == "9x9x4"
    assert ErrorReport.from_errors([1.0], h=1.0, n=5).resolution_label() == "5x5"
    with pytest.raises(ValueError):
        ErrorReport.from_errors([], h=1.0, n=5)


def test_chain_orders_and_table():
    hs = [0.1, 0.05, 0.025]
    reports = chain_orders([ErrorReport(n=int(round(2 / h)) + 1, h=h, l_inf=h ** 2, l_2=h ** 3) for h in hs])
    assert reports[0].order_inf is None
    assert reports[1].order_inf == pytest.approx(2.0)
    assert reports[2].order_2 == pytest.approx(3.0)
    assert fitted_slope(hs, [r.l_inf for r in reports]) == pytest.approx(2.0)
    rows = table_rows(reports, scheme="etd2")
    assert rows[0]["order_inf"] == ""
    assert rows[1]["order_inf"] == "2.0000"
    assert rows[2]["resolution"] == "81x81"
    assert rows[0]["scheme"] == "etd2"
    with pytest.raises(ValueError):
        fitted_slope([0.1], [1.0])


def slow_square(x, delay):
    time.sleep(delay)
    return x * x, threading.current_thread().name


def test_sweep_keeps_submission_order():
    jobs = [(f"job{k}", slow_square, (k, 0.05 * (4 - k))) for k in range(5)]
    results = run_sweep(jobs, workers=3)
    assert [r[0] for r in results] == [0, 1, 4, 9, 16]
    assert all(r[1].startswith("sweep-") for r in results)


def test_single_worker_runs_inline():
    results = run_sweep([("a", slow_square, (3, 0.0))], workers=1)
    assert results[0] == (9, threading.current_thread().name)


def fail_on(x):
    if x in (2, 3):
        raise ValueError(f"bad {x}")
    return x


def test_sweep_reraises_first_failure():
    runner = SweepRunner(workers=2)
    with pytest.raises(ValueError, match="bad 2"):
        runner.run([(str(k), fail_on, (k,)) for k in range(5)])
    assert runner.stats == {"submitted": 5, "finished": 3, "failed": 2}
    assert runner.threads == []


def test_sweep_needs_a_worker():
    with pytest.raises(ValueError):
        SweepRunner(workers=0)
