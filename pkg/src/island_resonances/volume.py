import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.special import gamma

from src.island_resonances.potential import DEFAULT_ALPHA, bump_value, eval_potential, frame_of
from src.island_resonances.utils.errors import ConfigValidationError, RegionUndefined
from src.island_resonances.utils.helper import progress, timer_func
from src.island_resonances.utils.sublevel import edge_labels, label_components

logger = logging.getLogger(__name__)

MC_BATCH = 1 << 16


def volume_constant(n):
    """C_n = vol(B(0,1)) in R^n."""
    return np.pi ** (n / 2) / gamma(n / 2 + 1)


def sphere_constant(n):
    """pi^{n/2} / Gamma(n/2), the prefactor of omega'."""
    return np.pi ** (n / 2) / gamma(n / 2)


def bump_center(spec):
    if spec.saddle is not None:
        return np.asarray(spec.saddle, dtype=float)
    return np.zeros(spec.dimension)


def well_side_region(spec, E, grid, eps=None):
    """Mask of the well-side component of {V < E}; for E > 0 the sea half of the neck is cut away.

    The cut removes nodes with frame x_n > 0 within 3 sqrt(eps) of the saddle (3 sqrt(E) plus two
    cells when eps is not given). Returns the mask and V on the grid.
    """
    mesh = grid.mesh()
    values = np.real(eval_potential(spec, mesh).value)
    mask = values < E
    if spec.saddle is not None:
        frame = frame_of(spec)
        radius = 3.0 * np.sqrt(eps) if eps else 3.0 * np.sqrt(max(E, 0.0)) + 2.0 * grid.spacing
        offset = mesh - frame.saddle
        near = np.sum(offset**2, axis=-1) <= radius**2
        mask &= ~(near & (offset @ frame.basis[:, -1] > 0))
    if not mask.any():
        return mask, values
    count, components = label_components(mask)
    if spec.well_point is not None:
        well = int(components.flat[grid.nearest_index(spec.well_point)])
    else:
        interior = [k for k in range(1, count) if k not in edge_labels(components)]
        well = min(interior, key=lambda k: values[components == k].min()) if interior else 0
    if well == 0:
        return np.zeros_like(mask), values
    if well in edge_labels(components):
        raise RegionUndefined(f"the well-side region at E = {E:.6g} reaches the grid boundary")
    return components == well, values


def _integrate(spec, E, grid, eps, power, weight=0.0):
    mask, values = well_side_region(spec, E, grid, eps)
    excess = np.where(mask, E - values - weight, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        integrand = np.where(excess > 0, np.abs(excess) ** power, 0.0)
    return float(integrand.sum() * grid.cell_volume)


def omega(spec, E, grid, eps=None, refine=False):
    """omega(E) = C_n int_{well side} (E - V)_+^{n/2} dx by the midpoint rule (on the half-step grid if refine)."""
    grid = grid.half_step() if refine else grid
    return volume_constant(spec.dimension) * _integrate(spec, E, grid, eps, spec.dimension / 2)


def omega_with_error(spec, E, grid, eps=None):
    """(refined omega, |refined - coarse|) from one grid refinement."""
    coarse = omega(spec, E, grid, eps)
    fine = omega(spec, E, grid, eps, refine=True)
    return fine, abs(fine - coarse)


def omega_prime(spec, E, grid, eps=None, refine=False):
    grid = grid.half_step() if refine else grid
    n = spec.dimension
    if n == 2:
        mask, _ = well_side_region(spec, E, grid, eps)
        return sphere_constant(2) * float(np.count_nonzero(mask) * grid.cell_volume)
    return sphere_constant(n) * _integrate(spec, E, grid, eps, n / 2 - 1)


def _bump_on_grid(spec, eps, alpha, grid):
    return bump_value(eps, alpha, np.sum((grid.mesh() - bump_center(spec)) ** 2, axis=-1))


def omega_eps_bounds(spec, eps, E, grid, alpha=DEFAULT_ALPHA):
    """(lower, upper): lower integrates (E - V - chi_eps(x, 0))_+^{n/2}, upper is omega(E)."""
    upper = omega(spec, E, grid, eps or None)
    if eps == 0:
        return upper, upper
    n = spec.dimension
    lower = volume_constant(n) * _integrate(spec, E, grid, eps, n / 2, weight=_bump_on_grid(spec, eps, alpha, grid))
    return min(lower, upper), upper


def omega_eps_gap_bound(spec, eps, E, grid, alpha=DEFAULT_ALPHA):
    """(pi^{n/2}/Gamma(n/2)) int (E - V)_+^{n/2-1} chi_eps(x, 0) dx, the convexity bound on omega - lower."""
    mask, values = well_side_region(spec, E, grid, eps or None)
    n = spec.dimension
    inside = mask & (values < E)
    excess = np.where(inside, E - values, 1.0) ** (n / 2 - 1)
    bump = _bump_on_grid(spec, eps, alpha, grid)
    return sphere_constant(n) * float(np.sum(np.where(inside, excess * bump, 0.0)) * grid.cell_volume)


def _philox(seed, batch_index):
    return np.random.Generator(np.random.Philox(key=seed, counter=[0, batch_index, 0, 0]))


@timer_func
def omega_eps_mc(spec, eps, E, samples, seed, grid, alpha=DEFAULT_ALPHA):
    """Monte-Carlo volume of {p_eps <= E, x on the well side}; returns (estimate, stderr).

    Batch k draws from Philox(key=seed, counter=(0, k, 0, 0)), so any split of the batches over
    workers reproduces the serial stream.
    """
    if samples < 10_000:
        raise ConfigValidationError(f"samples must be >= 1e4, got {samples}")
    mask, values = well_side_region(spec, E, grid, eps or None)
    if not mask.any():
        return 0.0, 0.0
    n = spec.dimension
    xi_max = np.sqrt(max(E - values.min(), 0.0) + 1.0)
    half_width = grid.half_width
    box = (2.0 * half_width) ** n * (2.0 * xi_max) ** n
    center = bump_center(spec)
    hits = 0
    starts = range(0, samples, MC_BATCH)
    for k, start in enumerate(progress(starts, "omega_eps_mc", total=len(starts))):
        size = min(MC_BATCH, samples - start)
        u = _philox(seed, k).random((size, 2 * n))
        x = -half_width + 2.0 * half_width * u[:, :n]
        xi = xi_max * (2.0 * u[:, n:] - 1.0)
        rho2 = np.sum((x - center) ** 2, axis=-1) + np.sum(xi**2, axis=-1)
        p = np.sum(xi**2, axis=-1) + np.real(eval_potential(spec, x).value) + bump_value(eps, alpha, rho2)
        hits += int(np.count_nonzero((p <= E) & mask.flat[grid.nearest_index(x)]))
    fraction = hits / samples
    return box * fraction, box * np.sqrt(fraction * (1.0 - fraction) / samples)


@dataclass(frozen=True)
class VolumeCurve:
    energies: np.ndarray
    omega_values: np.ndarray
    omega_prime_values: np.ndarray
    err_estimates: np.ndarray

    def to_frame(self):
        return pd.DataFrame(
            {
                "E": self.energies,
                "omega": self.omega_values,
                "omega_prime": self.omega_prime_values,
                "err_estimate": self.err_estimates,
            }
        )


@timer_func
def volume_curve(spec, energies, grid, eps=None):
    energies = np.sort(np.asarray(energies, dtype=float))
    values, primes, errors = [], [], []
    for E in progress(energies, "volume curve"):
        value, err = omega_with_error(spec, E, grid, eps)
        values.append(value)
        errors.append(err)
        primes.append(omega_prime(spec, E, grid, eps, refine=True))
    return VolumeCurve(energies, np.array(values), np.array(primes), np.array(errors))


def weyl_count(spec, a, b, h, grid, eps=None):
    """(2 pi h)^{-n} (omega(b) - omega(a))."""
    n = spec.dimension
    return (omega(spec, b, grid, eps, refine=True) - omega(spec, a, grid, eps, refine=True)) / (2.0 * np.pi * h) ** n


if __name__ == "__main__":
    pass
