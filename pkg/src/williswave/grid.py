"""Uniform 3-D grids and finite-difference operators.

Fields live on nodes with any number of trailing component axes; derivative
operators act along one of the three leading axes.  Periodic grids identify
the two ends of each axis; box grids carry both face planes and use biased
one-sided stencils of the interior order next to them.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

PERIODIC = "periodic"
BOX = "box"


@dataclass(frozen=True)
class Grid:
    """Axis-aligned uniform grid on [lo, hi]^3."""

    cells: tuple[int, int, int]
    lo: tuple[float, float, float] = (-1.0, -1.0, -1.0)
    hi: tuple[float, float, float] = (1.0, 1.0, 1.0)
    mode: str = PERIODIC

    def __post_init__(self):
        if self.mode not in (PERIODIC, BOX):
            raise ValueError(f"mode must be {PERIODIC!r} or {BOX!r}, got {self.mode!r}")
        cells = tuple(int(n) for n in self.cells)
        if len(cells) != 3 or any(n < 8 for n in cells):
            raise ValueError(f"need at least 8 cells per axis, got {self.cells}")
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "lo", tuple(float(v) for v in self.lo))
        object.__setattr__(self, "hi", tuple(float(v) for v in self.hi))
        for lo, hi in zip(self.lo, self.hi):
            if hi <= lo:
                raise ValueError(f"empty extent [{lo}, {hi}]")

    @property
    def spacing(self) -> tuple[float, float, float]:
        if self.mode == PERIODIC:
            return tuple(
                (hi - lo) / n for lo, hi, n in zip(self.lo, self.hi, self.cells)
            )
        return tuple(
            (hi - lo) / (n - 1) for lo, hi, n in zip(self.lo, self.hi, self.cells)
        )

    @property
    def min_spacing(self) -> float:
        return min(self.spacing)

    @property
    def cell_volume(self) -> float:
        h1, h2, h3 = self.spacing
        return h1 * h2 * h3

    def axis_coords(self, axis: int) -> np.ndarray:
        n = self.cells[axis]
        h = self.spacing[axis]
        return self.lo[axis] + h * np.arange(n)

    def meshgrid(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return tuple(
            np.meshgrid(
                self.axis_coords(0),
                self.axis_coords(1),
                self.axis_coords(2),
                indexing="ij",
            )
        )

    def refine(self, factor: int = 2) -> "Grid":
        """Grid with `factor` times the resolution on the same extents."""
        if self.mode == PERIODIC:
            cells = tuple(n * factor for n in self.cells)
        else:
            cells = tuple((n - 1) * factor + 1 for n in self.cells)
        return Grid(cells=cells, lo=self.lo, hi=self.hi, mode=self.mode)

    def boundary_faces(self):
        """Yield (axis, side, slicer, outward_normal) for the six box faces."""
        if self.mode != BOX:
            return
        for axis in range(3):
            for side in (0, 1):
                index = 0 if side == 0 else self.cells[axis] - 1
                slicer = tuple(
                    index if a == axis else slice(None) for a in range(3)
                )
                normal = np.zeros(3)
                normal[axis] = -1.0 if side == 0 else 1.0
                yield axis, side, slicer, normal


@lru_cache(maxsize=8)
def radius_field(grid: Grid) -> np.ndarray:
    """Distance of every node from the coordinate origin."""
    x1, x2, x3 = grid.meshgrid()
    return np.sqrt(x1**2 + x2**2 + x3**2)


def l2_norm(field: np.ndarray, grid: Grid) -> float:
    """Volume-weighted L2 norm over nodes (all component axes included)."""
    return float(np.sqrt(np.sum(np.asarray(field) ** 2) * grid.cell_volume))


# ---------------------------------------------------------------------------
# Difference operators
# ---------------------------------------------------------------------------


def _roll(f: np.ndarray, shift: int, axis: int) -> np.ndarray:
    return np.roll(f, -shift, axis=axis)  # shift>0 means f[i+shift]


def derivative(field: np.ndarray, grid: Grid, axis: int, order: int = 2) -> np.ndarray:
    """Central-difference d/dx_{axis+1} of the leading grid axes of `field`."""
    f = np.asarray(field)
    h = grid.spacing[axis]
    if order == 2:
        if grid.mode == PERIODIC:
            return (_roll(f, 1, axis) - _roll(f, -1, axis)) / (2 * h)
        return _box_derivative2(f, h, axis)
    if order == 4:
        if grid.mode == PERIODIC:
            return (
                -_roll(f, 2, axis)
                + 8 * _roll(f, 1, axis)
                - 8 * _roll(f, -1, axis)
                + _roll(f, -2, axis)
            ) / (12 * h)
        return _box_derivative4(f, h, axis)
    raise ValueError(f"spatial order must be 2 or 4, got {order}")


def _box_derivative2(f: np.ndarray, h: float, axis: int) -> np.ndarray:
    g = np.moveaxis(f, axis, 0)
    out = np.empty_like(g)
    out[1:-1] = (g[2:] - g[:-2]) / (2 * h)
    out[0] = (-3 * g[0] + 4 * g[1] - g[2]) / (2 * h)
    out[-1] = (3 * g[-1] - 4 * g[-2] + g[-3]) / (2 * h)
    return np.moveaxis(out, 0, axis)


def _box_derivative4(f: np.ndarray, h: float, axis: int) -> np.ndarray:
    g = np.moveaxis(f, axis, 0)
    out = np.empty_like(g)
    out[2:-2] = (-g[4:] + 8 * g[3:-1] - 8 * g[1:-3] + g[:-4]) / (12 * h)
    out[0] = (-25 * g[0] + 48 * g[1] - 36 * g[2] + 16 * g[3] - 3 * g[4]) / (12 * h)
    out[1] = (-3 * g[0] - 10 * g[1] + 18 * g[2] - 6 * g[3] + g[4]) / (12 * h)
    out[-1] = (25 * g[-1] - 48 * g[-2] + 36 * g[-3] - 16 * g[-4] + 3 * g[-5]) / (12 * h)
    out[-2] = (3 * g[-1] + 10 * g[-2] - 18 * g[-3] + 6 * g[-4] - g[-5]) / (12 * h)
    return np.moveaxis(out, 0, axis)


def gradient(field: np.ndarray, grid: Grid, order: int = 2) -> np.ndarray:
    """Stack of the three spatial derivatives.

    For a field of shape grid + (c,) returns grid + (3, c) with
    g[..., j, a] = d field_a / d x_{j+1}; for a scalar field (grid shape
    only) returns grid + (3,).
    """
    field = np.asarray(field)
    parts = [derivative(field, grid, axis, order) for axis in range(3)]
    return np.stack(parts, axis=-2) if field.ndim > 3 else np.stack(parts, axis=-1)


def dissipation(field: np.ndarray, grid: Grid, axis: int, order: int = 2) -> np.ndarray:
    """Kreiss-Oliger damping term along one axis (negative semidefinite symbol).

    Returns the unscaled operator value; callers multiply by
    (coefficient * reference_speed / h).  Box grids apply it only where the
    stencil fits, leaving a band of untouched nodes at the faces.
    """
    f = np.asarray(field)
    if grid.mode == PERIODIC:
        d2 = _roll(f, 1, axis) - 2 * f + _roll(f, -1, axis)
        if order == 2:
            d4 = _roll(d2, 1, axis) - 2 * d2 + _roll(d2, -1, axis)
            return -d4 / 16.0
        d4 = _roll(d2, 1, axis) - 2 * d2 + _roll(d2, -1, axis)
        d6 = _roll(d4, 1, axis) - 2 * d4 + _roll(d4, -1, axis)
        return d6 / 64.0
    g = np.moveaxis(f, axis, 0)
    out = np.zeros_like(g)
    if order == 2 and g.shape[0] >= 5:
        out[2:-2] = -(g[4:] - 4 * g[3:-1] + 6 * g[2:-2] - 4 * g[1:-3] + g[:-4]) / 16.0
    elif order == 4 and g.shape[0] >= 7:
        out[3:-3] = (
            g[6:] - 6 * g[5:-1] + 15 * g[4:-2] - 20 * g[3:-3] + 15 * g[2:-4] - 6 * g[1:-5] + g[:-6]
        ) / 64.0
    return np.moveaxis(out, 0, axis)
