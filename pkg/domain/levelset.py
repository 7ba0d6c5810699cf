"""
Level-set evolution for the free-boundary loop.

  hj_weno_advect        one TVD-RK3 step of rho_t + v . grad rho = 0 (HJ-WENO5)
  advect_subcycled      the same over a longer interval, split to respect CFL
  reinitialize          relax towards a signed distance (Godunov, smoothed sign)
  extend_speed          interface samples -> field constant along normals
  extrapolate_quadratic carry a field across the interface in the normal direction
  interface_metrics     area, perimeter and isoperimetric ratio
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.spatial import cKDTree

from domain.kernels import WENO_PAD, extension_sweep, godunov_reinit_rhs, weno_derivatives
from engine.errors import CFLViolation, ExtensionError, GeometryError

log = logging.getLogger(__name__)

# All lengths in units of h
DEFAULT_BAND = 8.0
SMOOTHING_WIDTH = 1.5
REINIT_PSEUDO_STEP = 0.5
EXTENSION_PSEUDO_STEP = 0.5

CFL_NUMBER = 0.5
REINIT_ITERATIONS = 10
EXTENSION_ITERATIONS = 20
DEGENERATE_GRADIENT = 1e-10
MAX_DEGENERATE_FRACTION = 0.01
FOOT_NEIGHBOURS = 4


def interface_nodes(values):
    """Nodes with an axis neighbour on the other side of rho = 0"""
    inside = values <= 0.0
    mask = np.zeros(values.shape, dtype=bool)
    dx = inside[1:, :] != inside[:-1, :]
    dy = inside[:, 1:] != inside[:, :-1]
    mask[1:, :] |= dx
    mask[:-1, :] |= dx
    mask[:, 1:] |= dy
    mask[:, :-1] |= dy
    return mask


@dataclass(frozen=True)
class NarrowBand:
    mask: np.ndarray
    width: float

    @classmethod
    def around(cls, ls, width=None):
        width = DEFAULT_BAND * ls.grid.h if width is None else float(width)
        mask = (np.abs(ls.values) <= width) | interface_nodes(ls.values)
        return cls(mask, width)

    @property
    def count(self):
        return int(np.count_nonzero(self.mask))


@dataclass
class VelocityExtensionField:
    """
    Velocity on the whole grid. speed holds the scalar normal speed when
    the field came from extend_speed (then v = speed * n).
    """
    grid: object
    vx: np.ndarray
    vy: np.ndarray
    speed: Optional[np.ndarray] = None
    skipped: int = 0

    @classmethod
    def uniform(cls, grid, vx, vy):
        return cls(grid, np.full(grid.shape, float(vx)), np.full(grid.shape, float(vy)))

    @property
    def max_speed(self):
        return float(np.max(np.hypot(self.vx, self.vy)))


def _pad(values):
    """Linear extrapolation past the rim (one-sided stencils there)"""
    return np.pad(values, WENO_PAD, mode="reflect", reflect_type="odd")


def unit_normals(ls):
    """n = grad rho / |grad rho| at nodes; zero where the gradient degenerates"""
    gx, gy = ls.nodal_gradient
    norm = np.hypot(gx, gy)
    degenerate = norm < DEGENERATE_GRADIENT
    safe = np.where(degenerate, 1.0, norm)
    nx = np.where(degenerate, 0.0, gx / safe)
    ny = np.where(degenerate, 0.0, gy / safe)
    return nx, ny, degenerate


def smoothed_sign(values, h):
    return values / np.sqrt(values * values + h * h)


def _tvd_rk3(phi, rhs, dt):
    phi1 = phi + dt * rhs(phi)
    phi2 = 0.75 * phi + 0.25 * (phi1 + dt * rhs(phi1))
    return phi / 3.0 + 2.0 / 3.0 * (phi2 + dt * rhs(phi2))


def hj_weno_advect(ls, velocity, dt_ls):
    """One TVD-RK3 step with upwind HJ-WENO5 derivatives"""
    h = ls.grid.h
    vmax = velocity.max_speed
    if vmax == 0.0:
        return type(ls)(ls.grid, ls.values.copy(), exact=ls.exact)
    limit = CFL_NUMBER * h / vmax
    if dt_ls > limit * (1.0 + 1e-12):
        raise CFLViolation(dt_ls, limit)
    vx, vy = velocity.vx, velocity.vy

    def rhs(phi):
        dxm, dxp, dym, dyp = weno_derivatives(_pad(phi), h)
        phi_x = np.where(vx > 0.0, dxm, dxp)
        phi_y = np.where(vy > 0.0, dym, dyp)
        return -(vx * phi_x + vy * phi_y)

    return ls.with_values(_tvd_rk3(ls.values, rhs, dt_ls))


def advect_subcycled(ls, velocity, dt):
    """Advance by dt in ceil(dt / (CFL h / max|v|)) equal substeps"""
    vmax = velocity.max_speed
    if vmax == 0.0:
        return ls, 0
    substeps = max(1, math.ceil(dt / (CFL_NUMBER * ls.grid.h / vmax)))
    sub_dt = dt / substeps
    for _ in range(substeps):
        ls = hj_weno_advect(ls, velocity, sub_dt)
    return ls, substeps


def reinitialize(ls, n_iter=REINIT_ITERATIONS):
    """n_iter pseudo-time steps of rho_t + S(rho0)(|grad rho| - 1) = 0"""
    if n_iter < 1:
        raise ValueError("reinitialization needs at least one iteration")
    if not ls.has_interface():
        raise GeometryError("reinitialization needs a level set that changes sign")
    h = ls.grid.h
    sign0 = smoothed_sign(ls.values, h)

    def rhs(phi):
        dxm, dxp, dym, dyp = weno_derivatives(_pad(phi), h)
        return godunov_reinit_rhs(dxm, dxp, dym, dyp, sign0)

    phi = ls.values
    dtau = REINIT_PSEUDO_STEP * h
    for _ in range(n_iter):
        phi = _tvd_rk3(phi, rhs, dtau)
    return ls.with_values(phi)


def _foot_values(ls, nodes, points, samples):
    """
    Sample value at the interface foot of each node: one normal projection
    step, then a linear fit along the tangent over the nearest samples.
    """
    grid = ls.grid
    gx, gy = ls.nodal_gradient
    I, J = nodes[:, 0], nodes[:, 1]
    g = np.column_stack([gx[I, J], gy[I, J]])
    g2 = np.maximum(np.sum(g * g, axis=1), DEGENERATE_GRADIENT ** 2)
    rho = ls.values[I, J]
    foot = np.column_stack([grid.x[I], grid.y[J]]) - (rho / g2)[:, None] * g
    k = min(FOOT_NEIGHBOURS, len(points))
    tree = cKDTree(points)
    _, idx = tree.query(foot, k=k)
    idx = np.asarray(idx).reshape(len(foot), k)
    tangent = np.column_stack([-g[:, 1], g[:, 0]]) / np.sqrt(g2)[:, None]
    s = np.einsum("nkd,nd->nk", points[idx] - foot[:, None, :], tangent)
    q = samples[idx]
    s_mean = s.mean(axis=1)
    q_mean = q.mean(axis=1)
    var = np.sum((s - s_mean[:, None]) ** 2, axis=1)
    cov = np.sum((s - s_mean[:, None]) * (q - q_mean[:, None]), axis=1)
    slope = np.where(var > 1e-12 * grid.h ** 2, cov / np.where(var > 0.0, var, 1.0), 0.0)
    return q_mean - slope * s_mean


def _extend_scalar(points, samples, ls, band, iterations):
    grid = ls.grid
    h = grid.h
    X, Y = grid.mesh()
    tree = cKDTree(points)
    _, nearest = tree.query(np.column_stack([X.ravel(), Y.ravel()]))
    q = samples[nearest].reshape(grid.shape)

    seeds = interface_nodes(ls.values)
    seed_nodes = np.argwhere(seeds)
    q[seeds] = _foot_values(ls, seed_nodes, points, samples)

    nx, ny, degenerate = unit_normals(ls)
    skipped = int(np.count_nonzero(degenerate & band.mask & ~seeds))
    if band.count and skipped > MAX_DEGENERATE_FRACTION * band.count:
        raise ExtensionError(f"{skipped} of {band.count} band nodes have no usable normal")
    if skipped:
        log.warning("Speed extension skipped %d band nodes with degenerate normals", skipped)

    sign = smoothed_sign(ls.values, h)
    frozen = seeds | degenerate | ~band.mask
    dtau = EXTENSION_PSEUDO_STEP * h
    ax = sign * nx
    ay = sign * ny
    for _ in range(iterations):
        q = extension_sweep(q, ax, ay, frozen, h, dtau)
    return q, skipped


def _check_samples(points, samples):
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    samples = np.asarray(samples, dtype=float)
    if len(points) == 0:
        raise GeometryError("speed extension needs at least one interface sample")
    if samples.shape[0] != len(points):
        raise ValueError("one sample per interface point expected")
    return points, samples


def extend_speed(points, speeds, ls, band=None, iterations=EXTENSION_ITERATIONS):
    """
    Normal speed samples at interface points -> field with d(speed)/dn ~ 0
    in the band; velocity = speed * n.
    """
    points, speeds = _check_samples(points, speeds)
    band = band if band is not None else NarrowBand.around(ls)
    q, skipped = _extend_scalar(points, speeds, ls, band, iterations)
    nx, ny, _ = unit_normals(ls)
    return VelocityExtensionField(ls.grid, q * nx, q * ny, speed=q, skipped=skipped)


def extend_velocity(points, vectors, ls, band=None, iterations=EXTENSION_ITERATIONS):
    """Vector velocity samples, each component extended like a speed"""
    points, vectors = _check_samples(points, vectors)
    band = band if band is not None else NarrowBand.around(ls)
    vx, skipped = _extend_scalar(points, vectors[:, 0], ls, band, iterations)
    vy, _ = _extend_scalar(points, vectors[:, 1], ls, band, iterations)
    return VelocityExtensionField(ls.grid, vx, vy, skipped=skipped)


def _normal_derivative(f, known, nx, ny, h):
    """n . grad f by central differences where all four neighbours are known"""
    ok = np.zeros(f.shape, dtype=bool)
    ok[1:-1, 1:-1] = (known[1:-1, 1:-1] & known[2:, 1:-1] & known[:-2, 1:-1]
                      & known[1:-1, 2:] & known[1:-1, :-2])
    d = np.full(f.shape, np.nan)
    fx = (f[2:, 1:-1] - f[:-2, 1:-1]) / (2.0 * h)
    fy = (f[1:-1, 2:] - f[1:-1, :-2]) / (2.0 * h)
    inner = nx[1:-1, 1:-1] * fx + ny[1:-1, 1:-1] * fy
    d[1:-1, 1:-1] = np.where(ok[1:-1, 1:-1], inner, np.nan)
    return d, ok


def _steady_extension(f, known, region, nx, ny, h, source=None):
    """
    Solve n . grad g = source on region \\ known with upwind differences
    taken towards -n (second order where two upwind nodes exist), g = f
    on known nodes. Returns (g, unresolved_count, first_order_count).
    """
    shape = f.shape
    unknown = region & ~known
    nodes = np.argwhere(unknown)
    m = len(nodes)
    g = np.where(known, f, np.nan)
    if m == 0:
        return g, 0, 0
    index = np.full(shape, -1, dtype=np.int64)
    index[nodes[:, 0], nodes[:, 1]] = np.arange(m)
    available = known | unknown

    rows, cols, vals = [], [], []
    rhs = np.zeros(m)
    unresolved = np.zeros(m, dtype=bool)
    first_order = 0
    for r, (i, j) in enumerate(nodes):
        diag = 0.0
        used = False
        for comp, (di, dj) in ((nx[i, j], (1, 0)), (ny[i, j], (0, 1))):
            if comp == 0.0:
                continue
            s = 1 if comp > 0.0 else -1
            a = abs(comp) / h
            i1, j1 = i - s * di, j - s * dj
            i2, j2 = i - 2 * s * di, j - 2 * s * dj
            if not (0 <= i1 < shape[0] and 0 <= j1 < shape[1] and available[i1, j1]):
                continue
            used = True
            second = 0 <= i2 < shape[0] and 0 <= j2 < shape[1] and available[i2, j2]
            if second:
                terms = ((i1, j1, -2.0 * a), (i2, j2, 0.5 * a))
                diag += 1.5 * a
            else:
                first_order += 1
                terms = ((i1, j1, -a),)
                diag += a
            for ii, jj, c in terms:
                if known[ii, jj]:
                    rhs[r] -= c * f[ii, jj]
                else:
                    rows.append(r)
                    cols.append(index[ii, jj])
                    vals.append(c)
        if not used:
            unresolved[r] = True
            diag = 1.0
            rhs[r] = 0.0
        elif source is not None:
            rhs[r] += source[i, j]
        rows.append(r)
        cols.append(r)
        vals.append(diag)

    A = sp.csc_matrix((vals, (rows, cols)), shape=(m, m))
    solution = spla.spsolve(A, rhs)
    solution = np.where(unresolved, np.nan, solution)
    g[nodes[:, 0], nodes[:, 1]] = solution
    return g, int(np.count_nonzero(unresolved | ~np.isfinite(solution))), first_order


def extrapolate_quadratic(u, valid, ls, band=None):
    """
    Extend u from the valid nodes to every node with rho <= band:
    u_nn is carried constant along n, then u_n with slope u_nn, then u
    with slope u_n. Exact for quadratics when normals are straight.
    Nodes outside valid and outside the band are NaN.

    Returns (values, clipped); clipped is True when the band reaches the
    grid rim and is cut off there.
    """
    u = np.asarray(u, dtype=float)
    valid = np.asarray(valid, dtype=bool)
    h = ls.grid.h
    width = DEFAULT_BAND * h if band is None else float(band)
    region = (ls.values <= width) | valid
    nx, ny, _ = unit_normals(ls)

    un, un_known = _normal_derivative(u, valid, nx, ny, h)
    unn, unn_known = _normal_derivative(un, un_known, nx, ny, h)

    if np.any(unn_known):
        unn_full, bad_nn, _ = _steady_extension(unn, unn_known, region, nx, ny, h)
    else:
        unn_full, bad_nn = np.zeros(u.shape), 0
    if np.any(un_known):
        un_full, bad_n, _ = _steady_extension(un, un_known, region, nx, ny, h, source=unn_full)
    else:
        un_full, bad_n = np.zeros(u.shape), 0
    result, bad, first_order = _steady_extension(u, valid, region, nx, ny, h, source=un_full)

    missing = region & ~np.isfinite(result)
    if np.any(missing):
        known_nodes = np.argwhere(valid | (region & np.isfinite(result)))
        if len(known_nodes):
            tree = cKDTree(known_nodes)
            _, nearest = tree.query(np.argwhere(missing))
            src = known_nodes[nearest]
            result[missing] = result[src[:, 0], src[:, 1]]
        log.warning("Extrapolation fell back to nearest values at %d nodes", int(np.count_nonzero(missing)))
    if first_order or bad_nn or bad_n:
        log.debug("Extrapolation used first-order stencils at %d node axes (unresolved %d/%d/%d)",
                  first_order, bad_nn, bad_n, bad)
    rim = np.ones(u.shape, dtype=bool)
    rim[1:-1, 1:-1] = False
    clipped = bool(np.any(region & ~valid & rim))
    if clipped:
        log.warning("Extrapolation band of width %.3g reaches the grid rim and is clipped", width)
    return result, clipped


def smoothed_heaviside(phi, eps):
    H = 0.5 * (1.0 + phi / eps + np.sin(np.pi * phi / eps) / np.pi)
    return np.where(phi < -eps, 0.0, np.where(phi > eps, 1.0, H))


def smoothed_delta(phi, eps):
    d = (1.0 + np.cos(np.pi * phi / eps)) / (2.0 * eps)
    return np.where(np.abs(phi) > eps, 0.0, d)


def interface_metrics(ls):
    """(area, perimeter, isoperimetric ratio) by smoothed quadrature"""
    if not ls.has_interface():
        raise GeometryError("interface metrics need a level set that changes sign")
    h = ls.grid.h
    eps = SMOOTHING_WIDTH * h
    phi = ls.values
    gx, gy = ls.nodal_gradient
    area = float(np.sum(1.0 - smoothed_heaviside(phi, eps)) * h * h)
    perimeter = float(np.sum(smoothed_delta(phi, eps) * np.hypot(gx, gy)) * h * h)
    ratio = 4.0 * np.pi * area / perimeter ** 2 if perimeter > 0.0 else 0.0
    return area, perimeter, ratio
