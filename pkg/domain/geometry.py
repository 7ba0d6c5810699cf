"""
Boundary queries on level-set domains: where a grid segment crosses the
interface, and the closest interface point to an arbitrary location.
"""

from dataclasses import dataclass

import numpy as np

from engine.errors import DegenerateCrossingError, DegenerateNormalError, ProjectionError

# Crossing search
CROSSING_TOLERANCE = 1e-12  # in units of h
MAX_SECANT_ITERATIONS = 100

# Closest-point projection
GRADIENT_THRESHOLD = 1e-10
MAX_PROJECTION_ITERATIONS = 50
PROJECTION_TOLERANCE = 1e-12


@dataclass(frozen=True)
class BoundaryCrossing:
    axis: int  # 0 = x, 1 = y
    inside_node: tuple
    outside_node: tuple
    gamma_coord: float
    boundary_point: tuple

    @property
    def direction(self):
        """+1 when the outside node has the larger index along the axis"""
        return self.outside_node[self.axis] - self.inside_node[self.axis]


def _safeguarded_secant(f, lo, hi, f_lo, f_hi, tol):
    """Root of f in [lo, hi] given f(lo) < 0 < f(hi)"""
    prev, f_prev = lo, f_lo
    cur, f_cur = hi, f_hi
    for _ in range(MAX_SECANT_ITERATIONS):
        if f_cur != f_prev:
            s = cur - f_cur * (cur - prev) / (f_cur - f_prev)
        else:
            s = 0.5 * (lo + hi)
        if not lo < s < hi:
            s = 0.5 * (lo + hi)
        fs = f(s)
        if fs == 0.0:
            return s
        if fs < 0.0:
            lo = s
        else:
            hi = s
        prev, f_prev, cur, f_cur = cur, f_cur, s, fs
        if hi - lo <= tol or abs(cur - prev) <= tol:
            return s
    return 0.5 * (lo + hi)


def find_crossing(ls, inside_node, outside_node):
    """
    Locate the interface on the segment between two axis-neighbour nodes.
    Uses the exact level set when the field carries one, otherwise the
    bicubic interpolant of the nodal values.
    """
    i0, j0 = inside_node
    i1, j1 = outside_node
    if abs(i1 - i0) + abs(j1 - j0) != 1:
        raise ValueError(f"nodes {inside_node} and {outside_node} are not axis neighbours")
    axis = 0 if i1 != i0 else 1

    grid = ls.grid
    p0 = np.array(grid.node(i0, j0))
    p1 = np.array(grid.node(i1, j1))
    r0 = ls.values[i0, j0]
    r1 = ls.values[i1, j1]

    if r1 == 0.0:
        s = 1.0
    elif r0 == 0.0:
        s = 0.0
    elif r0 < 0.0 < r1:
        def restricted(t):
            point = p0 + t * (p1 - p0)
            return float(ls.evaluate(point[0], point[1]))

        s = _safeguarded_secant(restricted, 0.0, 1.0, r0, r1, CROSSING_TOLERANCE)
    else:
        raise DegenerateCrossingError(inside_node, outside_node)

    point = p0 + s * (p1 - p0)
    return BoundaryCrossing(
        axis=axis,
        inside_node=(int(i0), int(j0)),
        outside_node=(int(i1), int(j1)),
        gamma_coord=float(point[axis]),
        boundary_point=(float(point[0]), float(point[1])),
    )


def closest_boundary_point(ls, p):
    """Project p onto rho = 0 by repeated steps along the level-set normal"""
    q = np.array(p, dtype=float)
    if not ls.grid.contains(q[0], q[1]):
        raise ValueError(f"point {tuple(q)} lies outside the grid")
    tol = PROJECTION_TOLERANCE * max(1.0, float(np.max(np.abs(ls.values))))

    r = float(ls.evaluate(q[0], q[1]))
    for _ in range(MAX_PROJECTION_ITERATIONS):
        if abs(r) <= tol:
            return q
        g = ls.gradient_at(q[0], q[1])
        g2 = float(g @ g)
        if np.sqrt(g2) < GRADIENT_THRESHOLD:
            raise DegenerateNormalError(q, np.sqrt(g2))
        q = q - r * g / g2
        r = float(ls.evaluate(q[0], q[1]))
    if abs(r) <= tol:
        return q
    raise ProjectionError(p, MAX_PROJECTION_ITERATIONS, abs(r))


def interface_crossings(ls):
    """Every grid segment whose endpoints lie on opposite sides of the interface"""
    inside = ls.values <= 0.0
    crossings = []
    for axis in (0, 1):
        if axis == 0:
            lo, hi = inside[:-1, :], inside[1:, :]
        else:
            lo, hi = inside[:, :-1], inside[:, 1:]
        for i, j in np.argwhere(lo != hi):
            a = (int(i), int(j))
            b = (a[0] + 1, a[1]) if axis == 0 else (a[0], a[1] + 1)
            if inside[a]:
                crossings.append(find_crossing(ls, a, b))
            else:
                crossings.append(find_crossing(ls, b, a))
    return crossings
