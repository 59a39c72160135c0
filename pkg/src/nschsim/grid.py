"""Uniform cell-centered grid on a rectangle.

Scalar fields are stored as (nx, ny) arrays, one value per cell center,
with axis 0 running along x.  Phase fields stack N components along a
leading axis, shape (N, nx, ny).  Velocities are pairs (u, v) of (nx, ny)
arrays.  Boundary conditions never appear as stored ghost layers; the
stencil routines in :mod:`nschsim.operators` apply the reflection
appropriate to each field type on the fly.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class Grid:
    """Geometry of the computational rectangle [0, lx] x [0, ly]."""

    nx: int
    ny: int
    lx: float = 1.0
    ly: float = 1.0

    def __post_init__(self):
        if self.nx < 4 or self.ny < 4:
            raise ConfigError(f"grid must be at least 4x4, got {self.nx}x{self.ny}")
        if not (self.lx > 0.0 and self.ly > 0.0):
            raise ConfigError("domain side lengths must be positive")

    @property
    def dx(self) -> float:
        return self.lx / self.nx

    @property
    def dy(self) -> float:
        return self.ly / self.ny

    @property
    def ncells(self) -> int:
        return self.nx * self.ny

    @property
    def cell_area(self) -> float:
        return self.dx * self.dy

    @property
    def area(self) -> float:
        return self.lx * self.ly

    def cell_centers(self):
        """Coordinate arrays (x, y), each of shape (nx, ny)."""
        x = (np.arange(self.nx) + 0.5) * self.dx
        y = (np.arange(self.ny) + 0.5) * self.dy
        return np.meshgrid(x, y, indexing="ij")

    # --- quadrature -----------------------------------------------------
    # Cell-centered data makes every integral a midpoint rule.

    def integrate(self, f) -> float:
        """Midpoint-rule integral of a cell field over the rectangle."""
        return float(np.sum(f) * self.cell_area)

    def mean(self, f) -> float:
        """Spatial average of a cell field."""
        return float(np.mean(f))

    def norm_l2(self, f) -> float:
        """L2 norm sqrt(integral of f^2); f may have leading component axes."""
        return float(np.sqrt(np.sum(np.asarray(f) ** 2) * self.cell_area))

    def norm_rms(self, f) -> float:
        """Root-mean-square over all entries (component axes included)."""
        f = np.asarray(f)
        return float(np.sqrt(np.mean(f**2)))

    def inner(self, f, g) -> float:
        """Discrete L2 inner product, component axes summed."""
        return float(np.sum(np.asarray(f) * np.asarray(g)) * self.cell_area)
