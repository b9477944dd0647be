import logging
import struct
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
from scipy.linalg import eigh, svdvals

from src.island_resonances.potential import (
    DEFAULT_ALPHA,
    build_sea_fill,
    build_well_fill,
    eval_potential,
    fill_energies,
)
from src.island_resonances.utils.errors import GridTooCoarse
from src.island_resonances.utils.fills import resample
from src.island_resonances.utils.grid import GridSpec, wrapped_offsets
from src.island_resonances.utils.helper import timer_func

logger = logging.getLogger(__name__)

MATRIX_HEADER = struct.Struct("<8sii3d16s?")
MATRIX_MAGIC = b"IRMATRIX"


class Provenance(str, Enum):
    P = "P"
    P_EPS = "P_eps"
    P_INT = "P_int"
    P_EXT = "P_ext"
    P_SURGERY = "P_surgery"
    TERM = "term"


@dataclass(frozen=True)
class OperatorMatrix:
    data: np.ndarray
    hermitian_flag: bool
    provenance: Provenance
    grid: GridSpec
    theta: float = 0.0

    @property
    def side(self):
        return self.data.shape[0]

    def hermitian_defect(self):
        return float(np.max(np.abs(self.data - self.data.conj().T))) if self.data.size else 0.0

    def plus(self, other, provenance, hermitian=None):
        other = other.data if isinstance(other, OperatorMatrix) else other
        if hermitian is None:
            hermitian = self.hermitian_flag
        return OperatorMatrix(self.data + other, hermitian, Provenance(provenance), self.grid, self.theta)

    def save(self, path):
        grid = self.grid
        header = MATRIX_HEADER.pack(
            MATRIX_MAGIC,
            grid.dimension,
            grid.points,
            grid.half_width,
            grid.h,
            self.theta,
            self.provenance.value.encode().ljust(16, b"\0"),
            self.hermitian_flag,
        )
        with open(path, "wb") as handle:
            handle.write(header)
            handle.write(np.ascontiguousarray(self.data, dtype="<c16").tobytes())

    @classmethod
    def load(cls, path):
        raw = Path(path).read_bytes()
        magic, n, points, half_width, h, theta, provenance, hermitian = MATRIX_HEADER.unpack_from(raw)
        if magic != MATRIX_MAGIC:
            raise ValueError(f"{path} is not an operator matrix file")
        side = points**n
        data = np.frombuffer(raw, dtype="<c16", offset=MATRIX_HEADER.size)
        if data.size != side * side:
            raise ValueError(f"{path}: expected {side * side} entries, found {data.size}")
        grid = GridSpec(dimension=n, half_width=half_width, points=points, h=h, theta=min(abs(theta), 0.15))
        provenance = Provenance(provenance.rstrip(b"\0").decode())
        return cls(data.reshape(side, side).astype(complex), bool(hermitian), provenance, grid, theta)


def kinetic_matrix(grid):
    """Fourier-collocation matrix of -Delta on the periodic box, exact closed form (Nyquist mode included)."""
    N = grid.points
    d = np.subtract.outer(np.arange(N), np.arange(N))
    with np.errstate(divide="ignore"):
        off_diagonal = (-1.0) ** d / (2.0 * np.sin(np.pi * d / N) ** 2)
    T1 = np.where(d == 0, N**2 / 12.0 + 1.0 / 6.0, off_diagonal) * (np.pi / grid.half_width) ** 2
    T1 = 0.5 * (T1 + T1.T)
    if grid.dimension == 1:
        return T1
    identity = np.eye(N)
    return np.kron(T1, identity) + np.kron(identity, T1)


@timer_func
def assemble_schrodinger(spec, grid, theta=None):
    """-h^2 Delta + V after x -> e^{i theta} x: kinetic part e^{-2i theta} h^2 T, potential V(e^{i theta} x)."""
    theta = grid.theta if theta is None else theta
    grid.check_matrix_size()
    if spec.narrowest_length() < 2.0 * grid.spacing:
        raise GridTooCoarse(
            f"narrowest potential length {spec.narrowest_length():.4g} is below two cells ({2.0 * grid.spacing:.4g})"
        )
    nodes = grid.nodes()
    rotation = np.exp(1j * theta)
    potential = eval_potential(spec, rotation * nodes if theta else nodes).value
    data = (rotation**-2 * grid.h**2) * kinetic_matrix(grid).astype(complex)
    data[np.diag_indices_from(data)] += potential
    return OperatorMatrix(data, theta == 0, Provenance.P, grid, theta)


def _axis_pairs(grid):
    """Per-axis minimal-image offsets (in cells) and left indices for every (row, column) pair of flat indices."""
    N = grid.points
    flat = np.indices(grid.shape).reshape(grid.dimension, -1)
    offsets = wrapped_offsets(N)
    return [(offsets[idx[:, None], idx[None, :]], idx) for idx in flat]


@timer_func
def assemble_gaussian_weyl(eps, alpha, grid, center=None, theta=None):
    """Nystrom matrix of the Weyl quantization of eps e^{-alpha^2 (|x - c|^2 + |xi|^2) / eps}.

    K(x, y) = (2 pi h)^{-n} eps (pi eps / alpha^2)^{n/2} e^{-alpha^2 |m - c|^2 / eps} e^{-eps |x - y|^2 / (4 alpha^2 h^2)}
    with m = (x + y)/2; the dilated matrix is e^{i n theta} K(e^{i theta} x, e^{i theta} y).
    """
    theta = grid.theta if theta is None else theta
    grid.check_matrix_size()
    n, side = grid.dimension, grid.side
    if eps == 0:
        return OperatorMatrix(np.zeros((side, side), dtype=complex), True, Provenance.TERM, grid, theta)
    if np.sqrt(eps) / alpha < 2.0 * grid.spacing:
        raise GridTooCoarse(f"bump width sqrt(eps)/alpha = {np.sqrt(eps) / alpha:.4g} is below two cells")
    center = np.zeros(n) if center is None else np.asarray(center, dtype=float)
    rotation = np.exp(1j * theta)
    axis = grid.axis()
    h = grid.h
    kernel = np.ones((1, 1), dtype=complex)
    N = grid.points
    offsets = wrapped_offsets(N)
    columns = np.arange(N)[None, :]
    for a in range(n):
        difference = rotation * offsets * grid.spacing
        midpoint = rotation * (axis[columns] + 0.5 * offsets * grid.spacing)
        factor = np.exp(-(alpha**2) * (midpoint - center[a]) ** 2 / eps - eps * difference**2 / (4.0 * alpha**2 * h**2))
        kernel = np.kron(kernel, factor)
    prefactor = (2.0 * np.pi * h) ** -n * eps * (np.pi * eps / alpha**2) ** (n / 2)
    data = prefactor * rotation**n * grid.cell_volume * kernel
    data = 0.5 * (data + data.T)
    if theta == 0:
        data = data.real.astype(complex)
    return OperatorMatrix(data, theta == 0, Provenance.TERM, grid, theta)


@timer_func
def assemble_well_fill_op(beta, chi_u, grid):
    """chi_U Op_h(beta e^{-xi^2 / 2 beta}) chi_U with the closed-form kernel
    (2 pi h)^{-n} beta(m) (2 pi beta(m))^{n/2} e^{-beta(m) |x - y|^2 / (2 h^2)}.

    beta lives on the half-step grid so that every midpoint m = (x + y)/2 is one of its nodes.
    """
    grid.check_matrix_size()
    fine = grid.half_step()
    beta = np.asarray(beta, dtype=float)
    if beta.shape != fine.shape:
        raise ValueError(f"beta must be given on the half-step grid {fine.shape}, got {beta.shape}")
    chi_u = np.asarray(chi_u, dtype=float)
    if chi_u.shape == fine.shape:
        chi_u = resample(chi_u, fine, grid)
    chi = chi_u.ravel()
    side = grid.side
    if not chi.any() or not beta.any():
        return OperatorMatrix(np.zeros((side, side), dtype=complex), True, Provenance.TERM, grid, grid.theta)
    h, n = grid.h, grid.dimension
    if h / np.sqrt(beta.max()) < 0.25 * grid.spacing:
        raise GridTooCoarse(f"fill kernel width h/sqrt(beta) = {h / np.sqrt(beta.max()):.4g} is unresolved")
    squared = np.zeros((side, side))
    midpoint = []
    for offsets, idx in _axis_pairs(grid):
        squared += (offsets * grid.spacing) ** 2
        midpoint.append((2 * idx[None, :] + offsets) % fine.points)
    b = beta[tuple(midpoint)]
    kernel = (2.0 * np.pi * h) ** -n * b * (2.0 * np.pi * b) ** (n / 2) * np.exp(-b * squared / (2.0 * h**2))
    data = chi[:, None] * kernel * grid.cell_volume * chi[None, :]
    data = 0.5 * (data + data.T)
    return OperatorMatrix(data.astype(complex), True, Provenance.TERM, grid, grid.theta)


def assemble_spectral_fill(P_int, chi_u, energy):
    """chi_U-sandwiched rank update raising every P_int eigenvalue below `energy` up to `energy`."""
    values, vectors = eigh(P_int.data)
    below = values < energy
    chi = np.asarray(chi_u, dtype=float).ravel()
    f = chi[:, None] * vectors[:, below]
    data = (f * (energy - values[below])) @ f.conj().T
    data = 0.5 * (data + data.conj().T)
    return OperatorMatrix(data, True, Provenance.TERM, P_int.grid, P_int.theta)


@timer_func
def build_family_fills(spec, eps, F, F_prime, radius, grid, alpha=DEFAULT_ALPHA, margin=0.1):
    """Sea and well fills on the fill lattice of the operator box; `margin` is the well-fill floor."""
    E, E_prime = fill_energies(eps, F, F_prime)
    sea = build_sea_fill(spec, eps, E, E_prime, radius, grid, alpha=alpha)
    well = build_well_fill(spec, eps, E, E_prime, radius, grid, alpha=alpha, margin=margin)
    return sea, well


@dataclass(frozen=True)
class OperatorFamily:
    P: OperatorMatrix
    P_eps: OperatorMatrix
    P_int: OperatorMatrix
    P_ext: OperatorMatrix
    bump: OperatorMatrix
    fill: OperatorMatrix
    sea_fill: object
    well_fill: object
    dilated: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)


@timer_func
def assemble_family(
    spec,
    eps,
    delta,
    A,
    B,
    grid,
    fills=None,
    alpha=DEFAULT_ALPHA,
    F=1.0,
    F_prime=0.8,
    radius=0.15,
    margin=0.1,
    fill_mode="phase",
):
    """P, P_eps = P + bump, P_int = P_eps + W, P_ext = P_eps + well fill at theta = 0, plus dilated P, P_eps, P_ext.

    The well fill is supported where the escape deformation is trivial and is carried undeformed
    into the dilated P_ext.
    """
    base = grid.with_theta(0.0)
    if fills is None:
        fills = build_family_fills(spec, eps, F, F_prime, radius, grid, alpha=alpha, margin=margin)
    sea, well = fills
    P = assemble_schrodinger(spec, base)
    bump = assemble_gaussian_weyl(eps, alpha, base, center=spec.saddle)
    chi_u = well.chi_on_grid(base)
    if fill_mode == "spectral":
        P_int = P.plus(bump, Provenance.P_EPS).plus(_sea_matrix(sea, base), Provenance.P_INT)
        fill = assemble_spectral_fill(P_int, chi_u, well.energy)
    elif fill_mode == "phase":
        fill = assemble_well_fill_op(well.beta_on_grid(base.half_step()), chi_u, base)
    else:
        raise ValueError(f"unknown fill mode {fill_mode!r}")
    metadata = {"eps": eps, "delta": delta, "A": A, "B": B, "alpha": alpha, "F": F, "F_prime": F_prime, "radius": radius}
    family = family_from_parts(P, bump, fill, sea, well, metadata)
    if grid.theta:
        family.dilated.update(dilated_family(spec, grid, eps, alpha, fill))
    return family


def _sea_matrix(sea, grid):
    return np.diag(sea.on_grid(grid).ravel()).astype(complex)


def family_from_parts(P, bump, fill, sea, well, metadata=None):
    """Rebuild P_eps, P_int and P_ext at theta = 0 from the assembled pieces."""
    P_eps = P.plus(bump, Provenance.P_EPS)
    P_int = P_eps.plus(_sea_matrix(sea, P.grid), Provenance.P_INT, hermitian=True)
    P_ext = P_eps.plus(fill, Provenance.P_EXT)
    return OperatorFamily(P, P_eps, P_int, P_ext, bump, fill, sea, well, {}, dict(metadata or {}))


def dilated_family(spec, grid, eps, alpha, fill=None):
    """P, P_eps and (when a fill is given) P_ext at the grid's dilation angle; the fill enters undeformed."""
    P = assemble_schrodinger(spec, grid)
    bump = assemble_gaussian_weyl(eps, alpha, grid, center=spec.saddle)
    P_eps = P.plus(bump, Provenance.P_EPS, hermitian=grid.theta == 0)
    dilated = {"P": P, "P_eps": P_eps}
    if fill is not None:
        data = fill.data if isinstance(fill, OperatorMatrix) else fill
        dilated["P_ext"] = P_eps.plus(data, Provenance.P_EXT, hermitian=grid.theta == 0)
    return dilated


def ext_symbol(spec, eps, alpha, well, x, xi_norm):
    """p_eps^ext(x, xi) = |xi|^2 + V(x) + chi_eps(x, xi) + chi_U(x)^2 beta(x) e^{-|xi|^2 / 2 beta(x)} on fill-grid nodes."""
    x0 = np.zeros(spec.dimension) if spec.saddle is None else np.asarray(spec.saddle)
    s2 = xi_norm[None, :] ** 2
    v = np.real(eval_potential(spec, x).value)[:, None]
    rho2 = np.sum((x - x0) ** 2, axis=-1)[:, None] + s2
    bump = eps * np.exp(-(alpha**2) * rho2 / eps) if eps else 0.0
    beta = well.beta.ravel()[:, None]
    chi2 = well.chi_u.ravel()[:, None] ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        fill = np.where(beta > 0, beta * np.exp(-s2 / (2.0 * np.where(beta > 0, beta, 1.0))), 0.0)
    return s2 + v + bump + chi2 * fill


def ellipticity_margin(spec, eps, alpha, well, z_values, exclude=None, xi_max=2.0, xi_points=41):
    """min over fill-grid nodes (outside `exclude`) and |xi| <= xi_max of |p_eps^ext - z| / eps, over all z."""
    nodes = well.grid.nodes()
    keep = np.ones(len(nodes), dtype=bool) if exclude is None else ~np.asarray(exclude, dtype=bool).ravel()
    symbol = ext_symbol(spec, eps, alpha, well, nodes, np.linspace(0.0, xi_max, xi_points))[keep]
    distances = [np.min(np.abs(symbol - z)) for z in np.atleast_1d(z_values)]
    return float(np.min(distances)) / eps


def smallest_singular_value(matrix, z_values):
    """min_z sigma_min(A - z I) together with the per-z values."""
    data = matrix.data if isinstance(matrix, OperatorMatrix) else np.asarray(matrix)
    identity = np.eye(data.shape[0])
    values = np.array([svdvals(data - z * identity)[-1] for z in np.atleast_1d(z_values)])
    return float(values.min()), values


if __name__ == "__main__":
    pass
