from dataclasses import dataclass

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from src.island_resonances.utils.grid import GridSpec
from src.island_resonances.utils.smooth_step import smooth_step

FILL_SPACING = 0.01


@dataclass(frozen=True)
class SeaFill:
    """Multiplication potential W filling the sea above E'.

    `margin` is the derived m with m = 2 / constant; W and the constants live on the fill lattice.
    """

    grid: GridSpec
    W: np.ndarray
    constant: float
    min_margin: float
    radius: float
    eps: float
    energy: float
    energy_prime: float
    margin: float = 0.0

    def on_grid(self, grid):
        return resample(self.W, self.grid, grid)


@dataclass(frozen=True)
class WellFill:
    """Phase-space fill beta(x) e^{-xi^2 / 2 beta(x)} of the well, with the cutoff chi_U."""

    grid: GridSpec
    beta: np.ndarray
    chi_u: np.ndarray
    beta_floor: float
    min_margin: float
    pointwise_margin: float
    radius: float
    eps: float
    energy: float
    energy_prime: float
    margin: float = 0.0

    def chi_on_grid(self, grid):
        return resample(self.chi_u, self.grid, grid)

    def beta_on_grid(self, grid):
        return resample(self.beta, self.grid, grid)


def fill_lattice(grid, spacing=FILL_SPACING):
    """Reference lattice of the fills: same box as `grid`, node spacing fixed by `spacing` alone."""
    points = 2 * max(2, int(round(grid.half_width / spacing)))
    return GridSpec(grid.dimension, grid.half_width, points, h=grid.h, max_side=points**grid.dimension)


def restrict_to(field, fine, grid):
    """Values of a field given on `fine` at the nodes of `grid` (fine must refine grid by an integer factor)."""
    if fine.half_width != grid.half_width or fine.points % grid.points:
        raise ValueError(f"field grid with {fine.points} points does not refine a grid with {grid.points} points")
    step = fine.points // grid.points
    return field[(slice(None, None, step),) * grid.dimension]


def resample(field, source, grid):
    """Field on `source` evaluated at the nodes of `grid`; exact when source refines grid, periodic-linear otherwise."""
    if source.dimension != grid.dimension or not np.isclose(source.half_width, grid.half_width):
        raise ValueError(f"cannot resample a field on a box of half-width {source.half_width} onto {grid.half_width}")
    if source.points % grid.points == 0:
        return restrict_to(field, source, grid)
    axis = np.append(source.axis(), source.half_width)
    padded = np.pad(np.asarray(field, dtype=float), [(0, 1)] * source.dimension, mode="wrap")
    interpolator = RegularGridInterpolator((axis,) * source.dimension, padded)
    return interpolator(grid.nodes()).reshape(grid.shape)


def smooth_plus(u, width):
    """Smooth upper bound of max(0, u), within `width`·ln 2 of it."""
    return width * np.logaddexp(0.0, u / width)


def plateau_cutoff(scaled_distance, inner, outer):
    """1 where scaled_distance <= inner, 0 where >= outer, smooth and nonincreasing in between."""
    s = 0.5 + 0.5 * (scaled_distance - inner) / (outer - inner)
    return smooth_step(s)


def phase_fill_margin(beta, xi):
    """beta e^{-xi^2 / 2 beta} + xi^2 / 2 - beta, which is >= 0 for every beta >= 0 and real xi."""
    beta = np.asarray(beta, dtype=float)
    xi = np.asarray(xi, dtype=float)
    safe = np.where(beta > 0, beta, 1.0)
    fill = np.where(beta > 0, beta * np.exp(-(xi**2) / (2.0 * safe)), 0.0)
    return fill + xi**2 / 2.0 - beta


def empty_fills(grid):
    """Zero fills on the half-step grid of `grid`; the degenerate family uses them."""
    fine = grid.half_step()
    zeros = np.zeros(fine.shape)
    sea = SeaFill(fine, zeros, np.inf, np.inf, 0.0, 0.0, 0.0, 0.0)
    well = WellFill(fine, zeros, zeros, 0.0, np.inf, np.inf, 0.0, 0.0, 0.0, 0.0)
    return sea, well
