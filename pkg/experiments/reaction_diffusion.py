"""
Reaction-diffusion runs on the fixed peanut domain:
u_t = div(beta grad u) + f with Dirichlet data from the exact solution.

Three studies share one setup: convergence with dt = h, stability over
a range of dt at fixed h, and wall-time efficiency of cn/etd2/etd2rk.
"""

import logging
import os
import time
from dataclasses import dataclass

from domain import kernels
from domain.ebpoisson import DirichletData, assemble
from domain.grid import LevelSetField, UniformGrid2D
from engine import sparse
from engine.errors import SolutionBlowUp
from engine.steppers import SemiDiscreteSystem, StepperState, integrate, prepare
from experiments.norms import ErrorReport, chain_orders, table_rows
from experiments.output import write_csv_table
from experiments.problems import PEANUT
from experiments.sweeps import run_sweep

log = logging.getLogger(__name__)

# Published wall times (s) at 1001^2, dt = 1e-4, for comparison only
REFERENCE_SECONDS = {"cn": 304.23, "etd2": 136.67, "etd2rk": 275.89}

CONVERGENCE_COLUMNS = ("resolution", "l_inf", "order_inf", "l_2", "order_2")
STABILITY_COLUMNS = ("scheme", "dt", "steps", "outcome", "l_inf", "l_2")
EFFICIENCY_COLUMNS = ("scheme", "resolution", "dt", "steps", "seconds", "reference_seconds_1001")


@dataclass
class FixedDomainRun:
    grid: UniformGrid2D
    level_set: LevelSetField
    operator: object
    system: SemiDiscreteSystem
    initial: StepperState


def setup_fixed_domain(problem, n, krylov_tol=1e-8, cg_tol=1e-10):
    """Operator, semi-discrete system and exact initial state on an n x n grid"""
    grid = UniformGrid2D.square(problem.box[0], problem.box[1], n)
    ls = LevelSetField.from_function(grid, problem.level_set)
    bc = DirichletData(problem.dirichlet, time_dependent=True)
    op = assemble(grid, ls, problem.beta, bc)
    xy = op.dof_coordinates()
    x, y = xy[:, 0], xy[:, 1]

    def forcing(U, t):
        return problem.source(x, y, t) + op.load_at(bc, t)

    system = SemiDiscreteSystem(op.matrix, forcing, op.n, state_dependent=False)
    state = StepperState(problem.exact(x, y, 0.0), 0.0, krylov_tol=krylov_tol, cg_tol=cg_tol)
    return FixedDomainRun(grid, ls, op, system, state)


def final_error(run, state, problem, steps=0):
    xy = run.operator.dof_coordinates()
    exact = problem.exact(xy[:, 0], xy[:, 1], state.t)
    return ErrorReport.from_errors(state.U - exact, run.grid.h, run.grid.nx, steps=steps)


def run_peanut(problem, n, dt, t_end, scheme, krylov_tol=1e-8, cg_tol=1e-10):
    """Integrate to t_end with fixed dt; returns (report, final state, run)"""
    run = setup_fixed_domain(problem, n, krylov_tol, cg_tol)
    steps = max(1, int(round(t_end / dt)))
    state = integrate(run.system, run.initial, dt, steps, scheme)
    report = final_error(run, state, problem, steps)
    log.info("%s n=%d dt=%.3g: l_inf %.4e l_2 %.4e", scheme, n, dt, report.l_inf, report.l_2)
    return report, state, run


def _convergence_job(problem, n, t_end, scheme, krylov_tol, cg_tol):
    h = (problem.box[1] - problem.box[0]) / (n - 1)
    report, _, _ = run_peanut(problem, n, h, t_end, scheme, krylov_tol, cg_tol)
    return report


def run_rd_peanut_convergence(cfg, problem=PEANUT):
    """Error table per scheme with dt = h; one CSV per scheme"""
    out_dir = cfg.ensure_out_dir()
    resolutions = tuple(cfg.sweep) or (cfg.n,)
    schemes = tuple(cfg.schemes) or (cfg.scheme,)
    tables = {}
    for scheme in schemes:
        jobs = [(f"{scheme} n={n}", _convergence_job,
                 (problem, n, cfg.t_end, scheme, cfg.krylov_tol, cfg.cg_tol)) for n in resolutions]
        reports = chain_orders(sorted(run_sweep(jobs, cfg.workers), key=lambda r: r.n))
        tables[scheme] = reports
        write_csv_table(table_rows(reports), os.path.join(out_dir, f"rd_peanut_convergence_{scheme}.csv"),
                        columns=CONVERGENCE_COLUMNS)
    return tables


def _stability_job(problem, n, dt, t_end, scheme, krylov_tol, cg_tol):
    steps = max(1, int(round(t_end / dt)))
    try:
        report, _, _ = run_peanut(problem, n, dt, t_end, scheme, krylov_tol, cg_tol)
    except SolutionBlowUp as exc:
        log.info("%s dt=%.3g diverged at t=%.4g (norm %.3e)", scheme, dt, exc.time, exc.norm)
        return {"scheme": scheme, "dt": f"{dt:g}", "steps": steps, "outcome": "diverged",
                "l_inf": "", "l_2": ""}
    return {"scheme": scheme, "dt": f"{dt:g}", "steps": steps, "outcome": "completed",
            "l_inf": f"{report.l_inf:.6e}", "l_2": f"{report.l_2:.6e}"}


def run_rd_peanut_stability(cfg, problem=PEANUT):
    """One row per (scheme, dt); blow-up is an outcome, not an error"""
    out_dir = cfg.ensure_out_dir()
    schemes = tuple(cfg.schemes) or (cfg.scheme,)
    dts = tuple(cfg.dts) or (cfg.dt,)
    jobs = [(f"{scheme} dt={dt:g}", _stability_job,
             (problem, cfg.n, dt, cfg.t_end, scheme, cfg.krylov_tol, cfg.cg_tol))
            for scheme in schemes for dt in dts]
    rows = run_sweep(jobs, cfg.workers)
    write_csv_table(rows, os.path.join(out_dir, "rd_peanut_stability.csv"), columns=STABILITY_COLUMNS)
    return rows


def time_scheme(problem, n, dt, steps, scheme, krylov_tol=1e-8, cg_tol=1e-10):
    """Wall time of the time loop alone; setup and CN factorization come first"""
    run = setup_fixed_domain(problem, n, krylov_tol, cg_tol)
    prepare(run.system, dt, scheme)
    start = time.perf_counter()
    state = integrate(run.system, run.initial, dt, steps, scheme)
    elapsed = time.perf_counter() - start
    log.info("%s n=%d: %d steps in %.3f s", scheme, n, steps, elapsed)
    return elapsed, state


def run_rd_peanut_efficiency(cfg, problem=PEANUT):
    """Timings run one after another on this thread, never in a pool"""
    out_dir = cfg.ensure_out_dir()
    kernels.warm_up()
    sparse.warm_up()
    schemes = tuple(cfg.schemes) or ("cn", "etd2", "etd2rk")
    steps = cfg.n_steps
    rows = []
    for scheme in schemes:
        seconds, _ = time_scheme(problem, cfg.n, cfg.dt, steps, scheme, cfg.krylov_tol, cfg.cg_tol)
        reference = REFERENCE_SECONDS.get(scheme)
        rows.append({
            "scheme": scheme,
            "resolution": f"{cfg.n}x{cfg.n}",
            "dt": f"{cfg.dt:g}",
            "steps": steps,
            "seconds": f"{seconds:.4f}",
            "reference_seconds_1001": "" if reference is None else f"{reference:.2f}",
        })
    write_csv_table(rows, os.path.join(out_dir, "rd_peanut_efficiency.csv"), columns=EFFICIENCY_COLUMNS)
    return rows
