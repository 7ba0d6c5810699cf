"""
Embedded-boundary discretization of div(beta grad u) with Dirichlet data.

Only computational nodes carry unknowns. A row whose five-point stencil
reaches a non-computational node eliminates that value through one of

  lagrange  the ghost borders the interface along the axis; two-point
            line interpolation between the node and the crossing
  rbf       the ghost's next node along the axis is still inside;
            multiquadric RBF interpolation with a linear tail over the
            node and the closest boundary points of node and ghost
  rim       the neighbour is an inside rim node; its value is taken
            from the Dirichlet data at the rim node itself

Every elimination only touches the diagonal and the boundary load, so
the matrix stays symmetric.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Tuple

import numpy as np
import scipy.sparse as sp

from domain.geometry import closest_boundary_point, find_crossing
from domain.grid import classify_points
from domain.kernels import COMPUTATIONAL, INTERIOR_GHOST
from engine.errors import AssemblyError, EmptyDomainError
from engine.sparse import write_triplets

log = logging.getLogger(__name__)

RBF_CONDITION_LIMIT = 1e12
DEGENERATE_DISTANCE = 1e-12  # in units of h
COINCIDENT_CENTERS = 1e-10  # in units of h
DIRECTIONS = ((0, -1), (0, 1), (1, -1), (1, 1))  # (axis, side)


@dataclass(frozen=True)
class DirichletData:
    """u_D(x, y, t); vectorized over x and y"""
    func: Callable
    time_dependent: bool = False

    @classmethod
    def constant(cls, value):
        return cls(lambda x, y, t: np.full(np.shape(x), float(value)))

    def __call__(self, x, y, t=0.0):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        values = np.broadcast_to(np.asarray(self.func(x, y, t), dtype=float), x.shape).copy()
        if not np.all(np.isfinite(values)):
            raise AssemblyError("Dirichlet data is not finite at a queried boundary point")
        return values


@dataclass(frozen=True)
class BetaFaces:
    """beta at face midpoints: x[i, j] between (i, j) and (i+1, j), y[i, j] between (i, j) and (i, j+1)"""
    x: np.ndarray
    y: np.ndarray

    def at(self, node, axis, side):
        i, j = node
        if axis == 0:
            return self.x[i - 1, j] if side < 0 else self.x[i, j]
        return self.y[i, j - 1] if side < 0 else self.y[i, j]


@dataclass(frozen=True)
class GhostElimination:
    """u_ghost = self_weight * u_node + sum_b weights[b] * u_D(points[b])"""
    self_weight: float
    points: Tuple[Tuple[float, float], ...]
    weights: Tuple[float, ...]
    case: str

    def diagonal(self, beta_face, h):
        """Change to the row diagonal beyond the plain -beta/h^2"""
        return beta_face * self.self_weight / (h * h)

    def load_coefficients(self, beta_face, h):
        return [beta_face * w / (h * h) for w in self.weights]


@dataclass(frozen=True)
class GhostRule:
    row: int
    node: Tuple[int, int]
    neighbor: Tuple[int, int]
    axis: int
    side: int
    elimination: GhostElimination
    point_indices: Tuple[int, ...]


@dataclass
class EmbeddedOperator:
    grid: object
    matrix: sp.csr_matrix
    dof_map: np.ndarray
    dof_nodes: np.ndarray
    classes: np.ndarray
    beta_faces: BetaFaces
    boundary_points: np.ndarray
    load_map: sp.csr_matrix
    boundary_values: np.ndarray
    boundary_load: np.ndarray
    ghost_rules: List[GhostRule] = field(default_factory=list, repr=False)

    @property
    def n(self):
        return self.matrix.shape[0]

    def dof_coordinates(self):
        g = self.grid
        return np.column_stack([g.x[self.dof_nodes[:, 0]], g.y[self.dof_nodes[:, 1]]])

    def boundary_data(self, bc, t=0.0):
        if len(self.boundary_points) == 0:
            return np.zeros(0)
        return bc(self.boundary_points[:, 0], self.boundary_points[:, 1], t)

    def load_at(self, bc, t=0.0):
        """Boundary load for Dirichlet data at time t (same geometry)"""
        if len(self.boundary_points) == 0:
            return np.zeros(self.n)
        return self.load_map @ self.boundary_data(bc, t)

    def nodal(self, U, fill=0.0):
        """Scatter dof values onto the grid"""
        out = np.full(self.grid.shape, fill, dtype=float)
        out[self.dof_nodes[:, 0], self.dof_nodes[:, 1]] = U
        return out

    def gather(self, field_values):
        """Dof values from a grid field"""
        return np.asarray(field_values)[self.dof_nodes[:, 0], self.dof_nodes[:, 1]]

    def case_counts(self):
        counts = {"lagrange": 0, "rbf": 0, "rim": 0}
        for rule in self.ghost_rules:
            counts[rule.elimination.case] += 1
        return counts

    def write_triplets(self, path):
        write_triplets(self.matrix, path)


def sample_beta_faces(grid, beta):
    h = grid.h
    X, Y = grid.mesh()
    if callable(beta):
        bx = np.broadcast_to(np.asarray(beta(X[:-1, :] + 0.5 * h, Y[:-1, :]), dtype=float), X[:-1, :].shape)
        by = np.broadcast_to(np.asarray(beta(X[:, :-1], Y[:, :-1] + 0.5 * h), dtype=float), X[:, :-1].shape)
    else:
        bx = np.full(X[:-1, :].shape, float(beta))
        by = np.full(X[:, :-1].shape, float(beta))
    return BetaFaces(np.array(bx), np.array(by))


def stencil_interior(grid, beta_faces, node):
    """Five-point row of a Case-1 node as {node: coefficient}"""
    i, j = node
    h2 = grid.h * grid.h
    west = beta_faces.x[i - 1, j] / h2
    east = beta_faces.x[i, j] / h2
    south = beta_faces.y[i, j - 1] / h2
    north = beta_faces.y[i, j] / h2
    return {
        (i - 1, j): west,
        (i + 1, j): east,
        (i, j - 1): south,
        (i, j + 1): north,
        (i, j): -(west + east + south + north),
    }


def stencil_line_lagrange(grid, node, crossing):
    """
    Eliminate the ghost between node and crossing by the line through
    (node, u_node) and (crossing, u_Gamma):
    u_ghost = g_gamma u_Gamma + g_1 u_node.
    """
    h = grid.h
    axis = crossing.axis
    coord = grid.node(*node)[axis]
    distance = abs(crossing.gamma_coord - coord)
    if distance < DEGENERATE_DISTANCE * h:
        raise AssemblyError("crossing coincides with the computational node", node)
    if distance < h * (1.0 - DEGENERATE_DISTANCE):
        raise AssemblyError("crossing lies between the node and its ghost neighbour", node)
    g_gamma = h / distance
    g_1 = (distance - h) / distance
    return GhostElimination(g_1, (crossing.boundary_point,), (g_gamma,), "lagrange")


def _unique_centers(centers, h):
    unique = []
    for c in centers:
        if all(np.hypot(*(c - u)) > COINCIDENT_CENTERS * h for u in unique):
            unique.append(c)
    return unique


def rbf_weights(centers, target, h):
    """
    Weights w with s(target) = sum_i w_i f(centers_i) for the multiquadric
    interpolant sqrt(r^2 + h^2) plus a linear tail (constant tail when
    only two centers remain). Coordinates are scaled by h about the
    first center.
    """
    origin = centers[0]
    xi = np.array([(c - origin) / h for c in centers])
    eta = (np.asarray(target) - origin) / h
    k = len(xi)
    tail = 3 if k >= 3 else 1
    r = np.linalg.norm(xi[:, None, :] - xi[None, :, :], axis=-1)
    B = np.zeros((k + tail, k + tail))
    B[:k, :k] = np.sqrt(r ** 2 + 1.0)
    poly = np.ones((tail, k))
    if tail == 3:
        poly[1] = xi[:, 0]
        poly[2] = xi[:, 1]
    B[k:, :k] = poly
    B[:k, k:] = poly.T
    rhs = np.zeros(k + tail)
    rhs[:k] = np.sqrt(np.sum((xi - eta) ** 2, axis=1) + 1.0)
    rhs[k] = 1.0
    if tail == 3:
        rhs[k + 1] = eta[0]
        rhs[k + 2] = eta[1]
    condition = np.linalg.cond(B)
    if not np.isfinite(condition) or condition > RBF_CONDITION_LIMIT:
        return None, condition
    return np.linalg.solve(B, rhs)[:k], condition


def stencil_rbf(grid, node, ghost, ls):
    """
    Eliminate a ghost that does not border the interface along the axis,
    from u at the node and u_D at the closest boundary points of the
    ghost and of the node.
    """
    h = grid.h
    p_node = np.array(grid.node(*node))
    p_ghost = np.array(grid.node(*ghost))
    gamma_1 = closest_boundary_point(ls, p_ghost)
    gamma_2 = closest_boundary_point(ls, p_node)
    centers = _unique_centers([p_node, gamma_1, gamma_2], h)
    if len(centers) == 1:
        return GhostElimination(1.0, (), (), "rbf")
    weights, condition = rbf_weights(centers, p_ghost, h)
    if weights is None:
        raise AssemblyError(f"RBF system is singular or ill-conditioned (cond {condition:.3e})", node)
    points = tuple((float(c[0]), float(c[1])) for c in centers[1:])
    return GhostElimination(float(weights[0]), points, tuple(float(w) for w in weights[1:]), "rbf")


def _rim_elimination(grid, neighbor):
    return GhostElimination(0.0, (grid.node(*neighbor),), (1.0,), "rim")


def _eliminate(grid, ls, classes, node, neighbor, axis, side):
    if classes[neighbor] == INTERIOR_GHOST:
        beyond = list(neighbor)
        beyond[axis] += side
        beyond = tuple(beyond)
        if 0 <= beyond[0] < grid.nx and 0 <= beyond[1] < grid.ny:
            if ls.values[beyond] > 0.0:
                return stencil_line_lagrange(grid, node, find_crossing(ls, neighbor, beyond))
            return stencil_rbf(grid, node, neighbor, ls)
    return _rim_elimination(grid, neighbor)


def assemble(grid, ls, beta, bc, t=0.0):
    """
    Matrix and boundary load with matrix @ U + boundary_load
    approximating div(beta grad u) at the computational nodes.
    """
    classes = classify_points(grid, ls)
    comp = classes == COMPUTATIONAL
    n = int(np.count_nonzero(comp))
    if n == 0:
        raise EmptyDomainError()

    dof_map = np.full(grid.shape, -1, dtype=np.int64)
    dof_nodes = np.argwhere(comp)
    dof_map[dof_nodes[:, 0], dof_nodes[:, 1]] = np.arange(n)
    faces = sample_beta_faces(grid, beta)
    h = grid.h
    h2 = h * h

    I, J = dof_nodes[:, 0], dof_nodes[:, 1]
    face_sum = faces.x[I - 1, J] + faces.x[I, J] + faces.y[I, J - 1] + faces.y[I, J]
    if np.any(face_sum <= 0.0) or np.any(~np.isfinite(face_sum)):
        raise AssemblyError("beta must be positive and finite inside the domain")
    diag = -face_sum / h2

    rows, cols, vals = [], [], []
    pair_x = comp[:-1, :] & comp[1:, :]
    pair_y = comp[:, :-1] & comp[:, 1:]
    for pair, lo_map, hi_map, beta_face in (
            (pair_x, dof_map[:-1, :], dof_map[1:, :], faces.x),
            (pair_y, dof_map[:, :-1], dof_map[:, 1:], faces.y)):
        p = lo_map[pair]
        q = hi_map[pair]
        w = beta_face[pair] / h2
        rows += [p, q]
        cols += [q, p]
        vals += [w, w]

    rules = []
    points = []
    load_rows, load_cols, load_vals = [], [], []
    for axis, side in DIRECTIONS:
        di, dj = (side, 0) if axis == 0 else (0, side)
        blocked = ~comp[I + di, J + dj]
        for k in np.flatnonzero(blocked):
            node = (int(I[k]), int(J[k]))
            neighbor = (node[0] + di, node[1] + dj)
            elimination = _eliminate(grid, ls, classes, node, neighbor, axis, side)
            beta_face = faces.at(node, axis, side)
            diag[k] += elimination.diagonal(beta_face, h)
            indices = tuple(range(len(points), len(points) + len(elimination.points)))
            points.extend(elimination.points)
            for index, coeff in zip(indices, elimination.load_coefficients(beta_face, h)):
                load_rows.append(k)
                load_cols.append(index)
                load_vals.append(coeff)
            rules.append(GhostRule(int(k), node, neighbor, axis, side, elimination, indices))

    rows.append(np.arange(n))
    cols.append(np.arange(n))
    vals.append(diag)
    matrix = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    matrix.sort_indices()

    boundary_points = np.array(points, dtype=float).reshape(-1, 2)
    load_map = sp.csr_matrix((load_vals, (load_rows, load_cols)), shape=(n, len(points)))
    if len(points):
        boundary_values = bc(boundary_points[:, 0], boundary_points[:, 1], t)
    else:
        boundary_values = np.zeros(0)
    op = EmbeddedOperator(
        grid=grid,
        matrix=matrix,
        dof_map=dof_map,
        dof_nodes=dof_nodes,
        classes=classes,
        beta_faces=faces,
        boundary_points=boundary_points,
        load_map=load_map,
        boundary_values=boundary_values,
        boundary_load=load_map @ boundary_values if len(points) else np.zeros(n),
        ghost_rules=rules,
    )
    heavy = [r for r in rules if r.elimination.case == "rbf" and r.elimination.self_weight > 1.0]
    if heavy:
        log.warning("%d RBF eliminations put weight above 1 on their node (largest %.3f)",
                    len(heavy), max(r.elimination.self_weight for r in heavy))
    log.debug("Assembled %d dofs, ghost cases %s", n, op.case_counts())
    return op


def evaluate_gradient(u, op, ls=None, boundary_values=None):
    """
    Gradient at computational nodes, shape (n, 2). Central differences
    where both axis neighbours are computational. Next to a crossing the
    axis derivative is one-sided, (u_Gamma - u_node) / d with d the
    distance to the crossing; other ghost neighbours are replaced by the
    same eliminations the rows use.
    """
    if ls is not None and ls.grid != op.grid:
        raise ValueError("level set is defined on a different grid")
    u = np.asarray(u, dtype=float)
    if u.shape != (op.n,):
        raise ValueError(f"expected {op.n} dof values, got {u.shape}")
    ub = op.boundary_values if boundary_values is None else np.asarray(boundary_values, dtype=float)
    h = op.grid.h
    nodal = op.nodal(u, fill=np.nan)
    I, J = op.dof_nodes[:, 0], op.dof_nodes[:, 1]
    neighbors = {
        (0, -1): nodal[I - 1, J].copy(),
        (0, 1): nodal[I + 1, J].copy(),
        (1, -1): nodal[I, J - 1].copy(),
        (1, 1): nodal[I, J + 1].copy(),
    }
    one_sided = (np.full(op.n, np.nan), np.full(op.n, np.nan))
    for rule in op.ghost_rules:
        e = rule.elimination
        if e.case == "lagrange":
            distance = h / e.weights[0]
            slope = rule.side * (ub[rule.point_indices[0]] - u[rule.row]) / distance
            previous = one_sided[rule.axis][rule.row]
            # crossings on both sides: average the two one-sided slopes
            one_sided[rule.axis][rule.row] = slope if np.isnan(previous) else 0.5 * (previous + slope)
            continue
        value = e.self_weight * u[rule.row]
        for index, weight in zip(rule.point_indices, e.weights):
            value += weight * ub[index]
        neighbors[(rule.axis, rule.side)][rule.row] = value
    gx = (neighbors[(0, 1)] - neighbors[(0, -1)]) / (2.0 * h)
    gy = (neighbors[(1, 1)] - neighbors[(1, -1)]) / (2.0 * h)
    gx = np.where(np.isnan(one_sided[0]), gx, one_sided[0])
    gy = np.where(np.isnan(one_sided[1]), gy, one_sided[1])
    return np.column_stack([gx, gy])
