import logging

import numpy as np
from numba import njit

log = logging.getLogger(__name__)

# Point classes
OUTSIDE = 0
INTERIOR_GHOST = 1
COMPUTATIONAL = 2

# WENO smoothness regularization (relative to the largest stencil difference)
WENO_EPSILON = 1e-6
WENO_PAD = 3


@njit
def is_node_outside(values, i, j):
    """
    Check if a node lies outside the domain (rho > 0).
    Indices past the rim do not exist and are never outside.
    """
    nx, ny = values.shape
    if i < 0 or i >= nx or j < 0 or j >= ny:
        return False
    return values[i, j] > 0.0


@njit
def classify_nodes(values):
    """
    Assign OUTSIDE / INTERIOR_GHOST / COMPUTATIONAL to every node.
    rho == 0 counts as inside; inside rim nodes without an outside
    neighbour cannot carry a five-point stencil and stay OUTSIDE.
    """
    nx, ny = values.shape
    classes = np.zeros((nx, ny), dtype=np.int8)
    for i in range(nx):
        for j in range(ny):
            if values[i, j] > 0.0:
                continue
            if (is_node_outside(values, i - 1, j) or is_node_outside(values, i + 1, j)
                    or is_node_outside(values, i, j - 1) or is_node_outside(values, i, j + 1)):
                classes[i, j] = INTERIOR_GHOST
            elif i == 0 or j == 0 or i == nx - 1 or j == ny - 1:
                classes[i, j] = OUTSIDE
            else:
                classes[i, j] = COMPUTATIONAL
    return classes


@njit
def weno5(v1, v2, v3, v4, v5):
    """Fifth-order HJ-WENO combination of five one-sided differences"""
    p1 = v1 / 3.0 - 7.0 * v2 / 6.0 + 11.0 * v3 / 6.0
    p2 = -v2 / 6.0 + 5.0 * v3 / 6.0 + v4 / 3.0
    p3 = v3 / 3.0 + 5.0 * v4 / 6.0 - v5 / 6.0

    s1 = 13.0 / 12.0 * (v1 - 2.0 * v2 + v3) ** 2 + 0.25 * (v1 - 4.0 * v2 + 3.0 * v3) ** 2
    s2 = 13.0 / 12.0 * (v2 - 2.0 * v3 + v4) ** 2 + 0.25 * (v2 - v4) ** 2
    s3 = 13.0 / 12.0 * (v3 - 2.0 * v4 + v5) ** 2 + 0.25 * (3.0 * v3 - 4.0 * v4 + v5) ** 2

    largest = max(max(v1 * v1, v2 * v2), max(max(v3 * v3, v4 * v4), v5 * v5))
    eps = WENO_EPSILON * largest + 1e-99
    a1 = 0.1 / (s1 + eps) ** 2
    a2 = 0.6 / (s2 + eps) ** 2
    a3 = 0.3 / (s3 + eps) ** 2
    return (a1 * p1 + a2 * p2 + a3 * p3) / (a1 + a2 + a3)


@njit
def weno_derivatives(padded, h):
    """
    Left- and right-biased x/y derivatives at every node of an array
    padded by WENO_PAD ghost layers on each side.
    Returns (dx_minus, dx_plus, dy_minus, dy_plus).
    """
    g = WENO_PAD
    nx = padded.shape[0] - 2 * g
    ny = padded.shape[1] - 2 * g
    dxm = np.empty((nx, ny))
    dxp = np.empty((nx, ny))
    dym = np.empty((nx, ny))
    dyp = np.empty((nx, ny))
    for i in range(nx):
        for j in range(ny):
            a = i + g
            b = j + g
            d1 = (padded[a - 2, b] - padded[a - 3, b]) / h
            d2 = (padded[a - 1, b] - padded[a - 2, b]) / h
            d3 = (padded[a, b] - padded[a - 1, b]) / h
            d4 = (padded[a + 1, b] - padded[a, b]) / h
            d5 = (padded[a + 2, b] - padded[a + 1, b]) / h
            d6 = (padded[a + 3, b] - padded[a + 2, b]) / h
            dxm[i, j] = weno5(d1, d2, d3, d4, d5)
            dxp[i, j] = weno5(d6, d5, d4, d3, d2)

            d1 = (padded[a, b - 2] - padded[a, b - 3]) / h
            d2 = (padded[a, b - 1] - padded[a, b - 2]) / h
            d3 = (padded[a, b] - padded[a, b - 1]) / h
            d4 = (padded[a, b + 1] - padded[a, b]) / h
            d5 = (padded[a, b + 2] - padded[a, b + 1]) / h
            d6 = (padded[a, b + 3] - padded[a, b + 2]) / h
            dym[i, j] = weno5(d1, d2, d3, d4, d5)
            dyp[i, j] = weno5(d6, d5, d4, d3, d2)
    return dxm, dxp, dym, dyp


@njit
def godunov_reinit_rhs(dxm, dxp, dym, dyp, sign0):
    """Right-hand side -S(rho0)(|grad rho| - 1) with the Godunov Hamiltonian"""
    nx, ny = sign0.shape
    out = np.zeros((nx, ny))
    for i in range(nx):
        for j in range(ny):
            s = sign0[i, j]
            a = dxm[i, j]
            b = dxp[i, j]
            c = dym[i, j]
            d = dyp[i, j]
            if s > 0.0:
                gx = max(max(a, 0.0) ** 2, min(b, 0.0) ** 2)
                gy = max(max(c, 0.0) ** 2, min(d, 0.0) ** 2)
            elif s < 0.0:
                gx = max(min(a, 0.0) ** 2, max(b, 0.0) ** 2)
                gy = max(min(c, 0.0) ** 2, max(d, 0.0) ** 2)
            else:
                continue
            out[i, j] = -s * (np.sqrt(gx + gy) - 1.0)
    return out


@njit
def extension_sweep(q, ax, ay, frozen, h, dtau):
    """
    One explicit pseudo-time step of q_t + a . grad q = 0 with first-order
    upwinding. Frozen nodes and the rim keep their values; writes a new array.
    """
    nx, ny = q.shape
    out = q.copy()
    for i in range(1, nx - 1):
        for j in range(1, ny - 1):
            if frozen[i, j]:
                continue
            vx = ax[i, j]
            vy = ay[i, j]
            if vx > 0.0:
                qx = (q[i, j] - q[i - 1, j]) / h
            else:
                qx = (q[i + 1, j] - q[i, j]) / h
            if vy > 0.0:
                qy = (q[i, j] - q[i, j - 1]) / h
            else:
                qy = (q[i, j + 1] - q[i, j]) / h
            out[i, j] = q[i, j] - dtau * (vx * qx + vy * qy)
    return out


def warm_up():
    """Compile every kernel on a tiny grid so timed runs exclude JIT cost"""
    log.info("Warming up grid kernels...")
    values = np.linspace(-1.0, 1.0, 64).reshape(8, 8)
    classify_nodes(values)
    padded = np.pad(values, WENO_PAD, mode="reflect", reflect_type="odd")
    dxm, dxp, dym, dyp = weno_derivatives(padded, 0.1)
    godunov_reinit_rhs(dxm, dxp, dym, dyp, np.sign(values))
    extension_sweep(values, values, values, np.zeros((8, 8), dtype=np.bool_), 0.1, 0.05)
    log.info("Grid kernels ready")
