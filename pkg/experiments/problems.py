"""
Test problems: geometries, exact solutions and manufactured sources.

Level sets are negative inside. Every function is vectorized over x, y.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

# Virus interface: x = (R0 + AX sin(L t)) cos t, y = (R0 + AY sin(L t)) sin t
VIRUS_RADIUS = 0.6
VIRUS_AMPLITUDE_X = 0.1
VIRUS_AMPLITUDE_Y = 0.05
VIRUS_LOBES = 12
VIRUS_NEWTON_ITERATIONS = 30

PEANUT_WIDTH = 20.0
PEANUT_OFFSET = 0.25

STEFAN_HALF_SIDE = 0.5
STEFAN_PEAK = 1.25


@dataclass(frozen=True)
class Problem:
    """
    Exact data for div(beta grad u) (+ time derivative) problems.
    source(x, y, t) is the right-hand side f the run feeds the solver.
    """
    name: str
    box: tuple
    level_set: Callable
    exact: Callable
    beta: Callable
    source: Callable
    exact_gradient: Optional[Callable] = None

    def dirichlet(self, x, y, t=0.0):
        return self.exact(x, y, t)


def _virus_curve(theta):
    s = np.sin(VIRUS_LOBES * theta)
    c = np.cos(VIRUS_LOBES * theta)
    ax = VIRUS_RADIUS + VIRUS_AMPLITUDE_X * s
    ay = VIRUS_RADIUS + VIRUS_AMPLITUDE_Y * s
    x = ax * np.cos(theta)
    y = ay * np.sin(theta)
    dx = VIRUS_LOBES * VIRUS_AMPLITUDE_X * c * np.cos(theta) - ax * np.sin(theta)
    dy = VIRUS_LOBES * VIRUS_AMPLITUDE_Y * c * np.sin(theta) + ay * np.cos(theta)
    return x, y, dx, dy


def virus_curve_point(theta):
    x, y, _, _ = _virus_curve(np.asarray(theta, dtype=float))
    return x, y


def virus_level_set(x, y):
    """
    |p| - |c(t)| where c(t) is the curve point with the same polar angle
    as p; t is found by Newton's method on the angle.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    alpha = np.arctan2(y, x)
    theta = alpha.copy()
    for _ in range(VIRUS_NEWTON_ITERATIONS):
        cx, cy, dx, dy = _virus_curve(theta)
        residual = np.angle(np.exp(1j * (np.arctan2(cy, cx) - alpha)))
        slope = (cx * dy - cy * dx) / (cx * cx + cy * cy)
        theta = theta - np.clip(residual / slope, -0.5, 0.5)
    cx, cy, _, _ = _virus_curve(theta)
    return np.hypot(x, y) - np.hypot(cx, cy)


def virus_exact(x, y, t=0.0):
    return np.exp(x) * (x * x * np.sin(y) + y * y)


def virus_gradient(x, y, t=0.0):
    e = np.exp(x)
    ux = e * (x * x * np.sin(y) + 2.0 * x * np.sin(y) + y * y)
    uy = e * (x * x * np.cos(y) + 2.0 * y)
    return ux, uy


def virus_beta(x, y):
    return 2.0 + np.sin(x * y)


def virus_source(x, y, t=0.0):
    """div(beta grad u) for the virus problem"""
    e = np.exp(x)
    lap = e * (4.0 * x * np.sin(y) + 2.0 * np.sin(y) + y * y + 2.0)
    ux, uy = virus_gradient(x, y)
    return virus_beta(x, y) * lap + np.cos(x * y) * (y * ux + x * uy)


VIRUS = Problem(
    name="virus",
    box=(-1.0, 1.0),
    level_set=virus_level_set,
    exact=virus_exact,
    beta=virus_beta,
    source=virus_source,
    exact_gradient=virus_gradient,
)


def peanut_level_set(x, y):
    return (0.5 - np.exp(-PEANUT_WIDTH * (x * x + (y - PEANUT_OFFSET) ** 2))
            - np.exp(-PEANUT_WIDTH * (x * x + (y + PEANUT_OFFSET) ** 2)))


def peanut_exact(x, y, t=0.0):
    return np.exp(-t) * (x * x + y * y - 0.25)


def peanut_beta(x, y):
    return 0.25 - x * x - y * y


def peanut_source(x, y, t=0.0):
    """u_t - div(beta grad u)"""
    return np.exp(-t) * (7.0 * (x * x + y * y) - 0.75)


def peanut_gradient(x, y, t=0.0):
    e = np.exp(-t)
    return 2.0 * e * x, 2.0 * e * y


PEANUT = Problem(
    name="peanut",
    box=(-1.0, 1.0),
    level_set=peanut_level_set,
    exact=peanut_exact,
    beta=peanut_beta,
    source=peanut_source,
    exact_gradient=peanut_gradient,
)


def stefan_level_set(x, y):
    """Signed distance-like field of the square [-0.5, 0.5]^2 (exact on the axes)"""
    return np.maximum(np.abs(x), np.abs(y)) - STEFAN_HALF_SIDE


def stefan_initial(x, y):
    """
    Separable C2 profile 1.25 (1 - |2x|^3)(1 - |2y|^3): peak 1.25 at the
    origin, zero on the square's edges, initial mass 0.703.
    """
    sx = np.abs(x) / STEFAN_HALF_SIDE
    sy = np.abs(y) / STEFAN_HALF_SIDE
    inside = (sx <= 1.0) & (sy <= 1.0)
    u = STEFAN_PEAK * (1.0 - sx ** 3) * (1.0 - sy ** 3)
    return np.where(inside, u, 0.0)
