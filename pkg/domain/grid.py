"""
Uniform Cartesian grids and level-set fields.

Arrays are indexed [i, j] with i along x and j along y, so a field on a
grid has shape (nx, ny).
"""

from dataclasses import dataclass, field
from enum import IntEnum
from functools import cached_property
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import RectBivariateSpline, RegularGridInterpolator

from domain.kernels import COMPUTATIONAL, INTERIOR_GHOST, OUTSIDE, classify_nodes

MIN_NODES = 4


class PointClass(IntEnum):
    OUTSIDE = OUTSIDE
    INTERIOR_GHOST = INTERIOR_GHOST
    COMPUTATIONAL = COMPUTATIONAL


@dataclass(frozen=True)
class UniformGrid2D:
    x_lo: float
    y_lo: float
    h: float
    nx: int
    ny: int

    def __post_init__(self):
        if not self.h > 0.0:
            raise ValueError(f"grid spacing must be positive, got {self.h}")
        if self.nx < MIN_NODES or self.ny < MIN_NODES:
            raise ValueError(f"grid needs at least {MIN_NODES} nodes per axis, got {self.nx}x{self.ny}")

    @classmethod
    def square(cls, lo, hi, n):
        """n x n nodes covering [lo, hi]^2"""
        return cls(float(lo), float(lo), (hi - lo) / (n - 1), int(n), int(n))

    @property
    def shape(self):
        return (self.nx, self.ny)

    @property
    def x_hi(self):
        return self.x_lo + (self.nx - 1) * self.h

    @property
    def y_hi(self):
        return self.y_lo + (self.ny - 1) * self.h

    @cached_property
    def x(self):
        return self.x_lo + self.h * np.arange(self.nx)

    @cached_property
    def y(self):
        return self.y_lo + self.h * np.arange(self.ny)

    def node(self, i, j):
        return (self.x_lo + i * self.h, self.y_lo + j * self.h)

    def mesh(self):
        return np.meshgrid(self.x, self.y, indexing="ij")

    def contains(self, x, y):
        return self.x_lo <= x <= self.x_hi and self.y_lo <= y <= self.y_hi

    def sample(self, func):
        """Evaluate func(X, Y) at every node"""
        X, Y = self.mesh()
        return np.asarray(func(X, Y), dtype=float)


@dataclass
class LevelSetField:
    """
    Signed level-set samples; rho < 0 inside the domain.
    An optional exact callable replaces the bicubic interpolant for
    off-node evaluation.
    """
    grid: UniformGrid2D
    values: np.ndarray
    exact: Optional[Callable] = field(default=None, repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValueError(f"level-set shape {self.values.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("level-set values must be finite")

    @classmethod
    def from_function(cls, grid, func, keep_exact=True):
        return cls(grid, grid.sample(func), exact=func if keep_exact else None)

    def with_values(self, values):
        """Same grid, new samples, no analytic form"""
        return LevelSetField(self.grid, values)

    @property
    def inside(self):
        return self.values <= 0.0

    def has_interface(self):
        return bool(np.any(self.values <= 0.0) and np.any(self.values > 0.0))

    @cached_property
    def _spline(self):
        return RectBivariateSpline(self.grid.x, self.grid.y, self.values, kx=3, ky=3, s=0)

    @cached_property
    def nodal_gradient(self):
        gx, gy = np.gradient(self.values, self.grid.h, edge_order=2)
        return gx, gy

    @cached_property
    def _gradient_interpolators(self):
        gx, gy = self.nodal_gradient
        axes = (self.grid.x, self.grid.y)
        return (RegularGridInterpolator(axes, gx, bounds_error=False, fill_value=None),
                RegularGridInterpolator(axes, gy, bounds_error=False, fill_value=None))

    def evaluate(self, x, y):
        """rho at arbitrary points"""
        if self.exact is not None:
            return np.asarray(self.exact(np.asarray(x, dtype=float), np.asarray(y, dtype=float)), dtype=float)
        return self._spline.ev(x, y)

    def gradient_at(self, x, y):
        """Central-difference gradient, bilinearly interpolated"""
        points = np.column_stack([np.atleast_1d(x), np.atleast_1d(y)])
        ix, iy = self._gradient_interpolators
        gx, gy = ix(points), iy(points)
        if np.ndim(x) == 0:
            return np.array([gx[0], gy[0]])
        return np.stack([gx, gy], axis=-1)


def classify_points(grid, ls):
    """PointClass codes (int8 array of shape (nx, ny)) for every node"""
    if ls.grid != grid:
        raise ValueError("level set is defined on a different grid")
    return classify_nodes(ls.values)
