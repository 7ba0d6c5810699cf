"""
Elliptic convergence study on the virus geometry:
div(beta grad u) = f in the domain, u = exact on the interface.
"""

import logging
import os
from dataclasses import dataclass

import numpy as np

from domain.ebpoisson import DirichletData, assemble, evaluate_gradient
from domain.grid import LevelSetField, UniformGrid2D
from engine.sparse import cg_solve, ic0_factor
from experiments.norms import ErrorReport, chain_orders, fitted_slope, table_rows
from experiments.output import write_csv_table, write_field_dump
from experiments.problems import VIRUS
from experiments.sweeps import run_sweep

log = logging.getLogger(__name__)


@dataclass
class PoissonResult:
    n: int
    h: float
    solution: ErrorReport
    gradient: ErrorReport
    iterations: int
    nodal: np.ndarray
    level_set: LevelSetField


def solve_poisson(problem, n, cg_tol=1e-10):
    """Assemble on an n x n grid, solve with CG + IC(0), measure errors"""
    grid = UniformGrid2D.square(problem.box[0], problem.box[1], n)
    ls = LevelSetField.from_function(grid, problem.level_set)
    bc = DirichletData(problem.dirichlet)
    op = assemble(grid, ls, problem.beta, bc)

    xy = op.dof_coordinates()
    f = problem.source(xy[:, 0], xy[:, 1])
    # A U + load = f  ->  (-A) U = load - f
    K = -op.matrix
    U, iterations = cg_solve(K, op.boundary_load - f, precond=ic0_factor(K), tol=cg_tol)
    log.debug("n=%d: %d dofs, %d CG iterations", n, op.n, iterations)

    exact = problem.exact(xy[:, 0], xy[:, 1])
    solution = ErrorReport.from_errors(U - exact, grid.h, n)
    grad = evaluate_gradient(U, op, ls)
    gx, gy = problem.exact_gradient(xy[:, 0], xy[:, 1])
    grad_err = np.hypot(grad[:, 0] - gx, grad[:, 1] - gy)
    gradient = ErrorReport.from_errors(grad_err, grid.h, n)
    return PoissonResult(n, grid.h, solution, gradient, iterations, op.nodal(U, fill=np.nan), ls)


def run_poisson_virus(cfg, problem=VIRUS):
    """
    Sweep the configured resolutions (cfg.sweep, or just cfg.n), write
    the error tables and one field dump per resolution. Returns
    (solution reports, gradient reports, slopes).
    """
    out_dir = cfg.ensure_out_dir()
    resolutions = tuple(cfg.sweep) or (cfg.n,)
    log.info("Poisson %s sweep over n = %s", problem.name, resolutions)
    jobs = [(f"n={n}", solve_poisson, (problem, n, cfg.cg_tol)) for n in resolutions]
    results = sorted(run_sweep(jobs, cfg.workers), key=lambda r: r.n)

    for r in results:
        log.info("n=%d  u: l_inf %.3e l_2 %.3e  grad: l_inf %.3e l_2 %.3e  (%d CG its)",
                 r.n, r.solution.l_inf, r.solution.l_2, r.gradient.l_inf, r.gradient.l_2, r.iterations)
        write_field_dump(r.nodal, r.level_set, os.path.join(out_dir, f"poisson_{problem.name}_n{r.n}.vtk"))

    solution = chain_orders([r.solution for r in results])
    gradient = chain_orders([r.gradient for r in results])
    write_csv_table(table_rows(solution), os.path.join(out_dir, f"poisson_{problem.name}_solution.csv"))
    write_csv_table(table_rows(gradient), os.path.join(out_dir, f"poisson_{problem.name}_gradient.csv"))

    slopes = {}
    if len(results) > 1:
        hs = [r.h for r in results]
        slopes = {
            "u_inf": fitted_slope(hs, [r.l_inf for r in solution]),
            "u_2": fitted_slope(hs, [r.l_2 for r in solution]),
            "grad_inf": fitted_slope(hs, [r.l_inf for r in gradient]),
            "grad_2": fitted_slope(hs, [r.l_2 for r in gradient]),
        }
        log.info("Fitted slopes: %s", ", ".join(f"{k} {v:.2f}" for k, v in slopes.items()))
        write_csv_table([{k: f"{v:.4f}" for k, v in slopes.items()}],
                        os.path.join(out_dir, f"poisson_{problem.name}_slopes.csv"))
    return solution, gradient, slopes
