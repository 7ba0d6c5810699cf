"""
Stefan-type free boundary run:

    u_t = D lap u + u (a - b u)  in the domain,  u = 0 outside,
    front velocity v = -mu grad u on the boundary.

Each step extends the front velocity off the interface, advects the
level set, extrapolates u onto the new domain, reassembles the operator
there and takes one exponential step. The level set is reinitialized
once the front has travelled half a cell since the last time.
"""

import logging
import os
from dataclasses import dataclass, field
from typing import List

import numpy as np
from scipy.spatial import cKDTree

from domain.ebpoisson import DirichletData, assemble, evaluate_gradient
from domain.geometry import interface_crossings
from domain.grid import LevelSetField, UniformGrid2D
from domain.kernels import COMPUTATIONAL, WENO_PAD
from domain.levelset import (NarrowBand, advect_subcycled, extend_velocity, extrapolate_quadratic,
                             interface_metrics, reinitialize)
from engine.errors import DomainEscapeError
from engine.steppers import MAX_HISTORY, SemiDiscreteSystem, StepperState, step
from experiments.output import write_csv_table, write_field_dump
from experiments.problems import stefan_initial, stefan_level_set

log = logging.getLogger(__name__)

SPEED_NEIGHBOURS = 4
RIM_MARGIN = WENO_PAD + 1  # nodes
POSITIVITY_SLACK = 1e-8
REINIT_DISTANCE = 0.5  # h of front travel between reinitializations
REST_DISPLACEMENT = 1e-8  # h per step below which the front is at rest

METRIC_COLUMNS = ("step", "t", "area", "perimeter", "isoperimetric_ratio", "max_u", "min_u")


@dataclass
class StefanState:
    level_set: LevelSetField
    operator: object
    u: np.ndarray  # nodal, NaN outside the computational nodes
    t: float = 0.0
    previous: List[np.ndarray] = field(default_factory=list)  # nodal, most recent first


def logistic(growth, crowding):
    def reaction(U, t):
        return U * (growth - crowding * U)
    return reaction


def front_velocities(u_dofs, op, ls, mu):
    """
    Interface points (axis crossings) and velocities -mu grad u there,
    with grad u inverse-distance weighted from the nearest computational
    nodes. Samples pointing into the domain are zeroed: u >= 0 inside and
    vanishes on the front, so the front never recedes.
    """
    crossings = interface_crossings(ls)
    points = np.array([c.boundary_point for c in crossings], dtype=float).reshape(-1, 2)
    if len(points) == 0 or op.n == 0:
        return points, np.zeros((len(points), 2))
    grad = evaluate_gradient(u_dofs, op, ls)
    coords = op.dof_coordinates()
    k = min(SPEED_NEIGHBOURS, op.n)
    dist, idx = cKDTree(coords).query(points, k=k)
    dist = np.asarray(dist).reshape(len(points), k)
    idx = np.asarray(idx).reshape(len(points), k)
    weights = 1.0 / np.maximum(dist, 1e-12 * ls.grid.h)
    weights /= weights.sum(axis=1, keepdims=True)
    velocity = -mu * np.einsum("nk,nkd->nd", weights, grad[idx])
    normal = ls.gradient_at(points[:, 0], points[:, 1])
    inward = np.sum(velocity * normal, axis=1) < 0.0
    if np.any(inward):
        log.debug("Zeroed %d inward front velocity samples", int(np.count_nonzero(inward)))
        velocity[inward] = 0.0
    return points, velocity


def check_rim(ls):
    margin = RIM_MARGIN
    inside = ls.values <= 0.0
    interior = np.zeros_like(inside)
    interior[margin:-margin, margin:-margin] = True
    if np.any(inside & ~interior):
        raise DomainEscapeError(
            f"the interface came within {margin} nodes of the computational box; enlarge box_half_width")


def carry_over(nodal, valid, ls, band):
    """Extrapolate onto the new domain; newly covered nodes start non-negative"""
    extended, _ = extrapolate_quadratic(nodal, valid, ls, band)
    fresh = ~valid & np.isfinite(extended)
    negative = fresh & (extended < 0.0)
    if np.any(negative):
        log.debug("Clamped %d extrapolated values below zero", int(np.count_nonzero(negative)))
        extended[negative] = 0.0
    return extended


class StefanRun:
    """Owns the evolving level set, operator and solution for one run"""

    def __init__(self, cfg):
        self.cfg = cfg
        self.grid = UniformGrid2D.square(-cfg.box_half_width, cfg.box_half_width, cfg.n)
        self.bc = DirichletData.constant(0.0)
        self.reaction = logistic(cfg.growth, cfg.crowding)
        self.band = cfg.band_width * self.grid.h

        ls = LevelSetField.from_function(self.grid, stefan_level_set, keep_exact=False)
        ls = reinitialize(ls, cfg.reinit_iterations)
        check_rim(ls)
        op = self._assemble(ls)
        u = op.nodal(op.gather(self.grid.sample(stefan_initial)), fill=np.nan)
        self.state = StefanState(ls, op, u)
        self.steps = 0
        self.metrics = []
        self.travel = 0.0

    def _assemble(self, ls):
        return assemble(self.grid, ls, self.cfg.diffusion, self.bc)

    def _system(self, op):
        return SemiDiscreteSystem(op.matrix, self.reaction, op.n, state_dependent=True)

    def record_metrics(self):
        s = self.state
        area, perimeter, ratio = interface_metrics(s.level_set)
        values = s.u[np.isfinite(s.u)]
        row = {
            "step": self.steps,
            "t": f"{s.t:.6g}",
            "area": f"{area:.10e}",
            "perimeter": f"{perimeter:.10e}",
            "isoperimetric_ratio": f"{ratio:.10f}",
            "max_u": f"{values.max():.10e}",
            "min_u": f"{values.min():.10e}",
        }
        self.metrics.append(row)
        return row

    def move_front(self):
        """New level set for the next step, or the current one when the front is at rest"""
        s = self.state
        cfg = self.cfg
        if cfg.mu == 0.0:
            return s.level_set
        points, velocities = front_velocities(s.operator.gather(s.u), s.operator, s.level_set, cfg.mu)
        if len(points) == 0 or not np.any(velocities):
            return s.level_set
        band = NarrowBand.around(s.level_set, self.band)
        velocity = extend_velocity(points, velocities, s.level_set, band, cfg.extension_iterations)
        travel = velocity.max_speed * cfg.dt
        if travel <= REST_DISPLACEMENT * self.grid.h:
            return s.level_set
        ls, substeps = advect_subcycled(s.level_set, velocity, cfg.dt)
        self.travel += travel
        if self.travel >= REINIT_DISTANCE * self.grid.h:
            ls = reinitialize(ls, cfg.reinit_iterations)
            self.travel = 0.0
        log.debug("Front moved with max speed %.4g in %d substeps", velocity.max_speed, substeps)
        return ls

    def advance(self):
        s = self.state
        cfg = self.cfg
        ls = self.move_front()
        if ls is s.level_set:
            op = s.operator
            u = s.u
            previous = s.previous
        else:
            check_rim(ls)
            valid = s.operator.classes == COMPUTATIONAL
            u = carry_over(s.u, valid, ls, self.band)
            previous = [carry_over(p, valid, ls, self.band) for p in s.previous]
            op = self._assemble(ls)

        system = self._system(op)
        history = tuple(self.reaction(op.gather(p), s.t - (k + 1) * cfg.dt) for k, p in enumerate(previous))
        state = StepperState(op.gather(u), s.t, history=history,
                             krylov_tol=cfg.krylov_tol, cg_tol=cfg.cg_tol)
        state = step(system, state, cfg.dt, cfg.scheme)

        new_u = op.nodal(state.U, fill=np.nan)
        low = float(np.min(state.U)) if op.n else 0.0
        if low < -POSITIVITY_SLACK:
            log.warning("u dropped to %.3e at t=%.6g", low, state.t)
        old = op.nodal(op.gather(u), fill=np.nan)
        self.state = StefanState(ls, op, new_u, state.t, ([old] + list(previous))[:MAX_HISTORY])
        self.steps += 1

    def dump(self):
        path = os.path.join(self.cfg.out_dir, f"stefan_{self.steps:05d}.vtk")
        write_field_dump(self.state.u, self.state.level_set, path)


def run_stefan_square(cfg):
    """Metrics CSV plus a field dump every dump_every steps; returns the run"""
    cfg.ensure_out_dir()
    run = StefanRun(cfg)
    n_steps = cfg.n_steps
    log.info("Stefan run: %d steps of %.3g on a %dx%d grid over [-%g, %g]^2",
             n_steps, cfg.dt, cfg.n, cfg.n, cfg.box_half_width, cfg.box_half_width)
    run.record_metrics()
    if cfg.dump_every:
        run.dump()
    try:
        for _ in range(n_steps):
            run.advance()
            row = run.record_metrics()
            if cfg.dump_every and run.steps % cfg.dump_every == 0:
                run.dump()
                log.info("step %d t=%s area %s ratio %s max u %s", row["step"], row["t"], row["area"],
                         row["isoperimetric_ratio"], row["max_u"])
    finally:
        write_csv_table(run.metrics, os.path.join(cfg.out_dir, "stefan_metrics.csv"), columns=METRIC_COLUMNS)
    return run
