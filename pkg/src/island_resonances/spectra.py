import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd
from scipy.linalg import LinAlgError, eig, eigh

from src.island_resonances.potential import DEFAULT_ALPHA, QuadraticTerm
from src.island_resonances.quantize import OperatorMatrix, Provenance, assemble_schrodinger, dilated_family
from src.island_resonances.utils.errors import (
    ConfigValidationError,
    NoConvergence,
    NotHermitian,
    UpperHalfPlaneResonance,
    WindowUncovered,
)
from src.island_resonances.utils.helper import timer_func

logger = logging.getLogger(__name__)

HERMITIAN_TOL = 1e-12
RESIDUAL_TOL = 1e-8
UPPER_HALF_PLANE_TOL = 1e-8


@dataclass(frozen=True)
class SpectrumResult:
    eigenvalues: np.ndarray
    residual_norms: np.ndarray
    matrix_side: int
    provenance: str
    theta: float
    eigenvectors: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def to_frame(self):
        values = np.asarray(self.eigenvalues)
        return pd.DataFrame(
            {"re": values.real, "im": np.imag(values), "residual": self.residual_norms, "stability": np.nan}
        )


def _unpack(matrix):
    if isinstance(matrix, OperatorMatrix):
        return matrix.data, matrix.provenance.value, matrix.theta, matrix.hermitian_flag
    data = np.asarray(matrix)
    defect = float(np.max(np.abs(data - data.conj().T))) if data.size else 0.0
    return data, "array", 0.0, defect < HERMITIAN_TOL


def _residuals(data, values, vectors):
    return np.linalg.norm(data @ vectors - vectors * values, axis=0) / np.linalg.norm(vectors, axis=0)


@timer_func
def eig_hermitian(matrix, vectors=True):
    """Real ascending spectrum of a Hermitian matrix with residual check."""
    data, provenance, theta, flag = _unpack(matrix)
    if not flag or (data.size and np.max(np.abs(data - data.conj().T)) >= HERMITIAN_TOL):
        raise NotHermitian(f"matrix with provenance {provenance} is not Hermitian")
    values, vecs = eigh(data)
    residuals = _residuals(data, values, vecs)
    if residuals.size and residuals.max() > RESIDUAL_TOL:
        logger.warning(f"Hermitian residual {residuals.max():.2e} exceeds {RESIDUAL_TOL:.0e}")
    return SpectrumResult(values, residuals, data.shape[0], provenance, theta, vecs if vectors else None)


@timer_func
def eig_general(matrix, seed=0, sample_fraction=0.1, vectors=False):
    """Full complex spectrum (LAPACK Hessenberg + shifted QR), residuals on a random sample of eigenpairs."""
    data, provenance, theta, _ = _unpack(matrix)
    try:
        values, vecs = eig(data)
    except LinAlgError as err:
        raise NoConvergence(f"QR iteration failed for {provenance}: {err}") from err
    order = np.lexsort((values.imag, values.real))
    values, vecs = values[order], vecs[:, order]
    side = data.shape[0]
    residuals = np.full(side, np.nan)
    if side:
        rng = np.random.default_rng(seed)
        sample = rng.choice(side, size=max(1, int(np.ceil(sample_fraction * side))), replace=False)
        residuals[sample] = _residuals(data, values[sample], vecs[:, sample])
        if np.nanmax(residuals) > RESIDUAL_TOL * max(1.0, np.abs(values).max()):
            logger.warning(f"general eigen residual {np.nanmax(residuals):.2e} on {provenance}")
    return SpectrumResult(values, residuals, side, provenance, theta, vecs if vectors else None)


@dataclass(frozen=True)
class WindowSpec:
    """Half-open rectangle [re_min, re_max) + i[im_min, im_max), optionally joined with extra rectangles."""

    re_min: float
    re_max: float
    im_min: float
    im_max: float
    role: str = "R"
    extra: tuple = ()

    def __post_init__(self):
        for a, b, c, d in self.rectangles():
            if not (a < b and c < d):
                raise ConfigValidationError(f"degenerate window rectangle {(a, b, c, d)}")

    def rectangles(self):
        return [(self.re_min, self.re_max, self.im_min, self.im_max)] + [tuple(r) for r in self.extra]

    def contains(self, z):
        z = np.asarray(z, dtype=complex)
        inside = np.zeros(z.shape, dtype=bool)
        for a, b, c, d in self.rectangles():
            inside |= (z.real >= a) & (z.real < b) & (z.imag >= c) & (z.imag < d)
        return inside

    def intersect(self, other):
        a, b = max(self.re_min, other.re_min), min(self.re_max, other.re_max)
        c, d = max(self.im_min, other.im_min), min(self.im_max, other.im_max)
        if a >= b or c >= d:
            return None
        return WindowSpec(a, b, c, d, role=self.role)

    def tile(self, nx, ny):
        re = np.linspace(self.re_min, self.re_max, nx + 1)
        im = np.linspace(self.im_min, self.im_max, ny + 1)
        return [WindowSpec(re[i], re[i + 1], im[j], im[j + 1], role=self.role) for i in range(nx) for j in range(ny)]

    def grid(self, nx, ny):
        """Interior sample points (cell centers of an nx x ny subdivision)."""
        re = self.re_min + (np.arange(nx) + 0.5) * (self.re_max - self.re_min) / nx
        im = self.im_min + (np.arange(ny) + 0.5) * (self.im_max - self.im_min) / ny
        return (re[:, None] + 1j * im[None, :]).ravel()

    def to_dict(self):
        return {
            "re_min": self.re_min,
            "re_max": self.re_max,
            "im_min": self.im_min,
            "im_max": self.im_max,
            "role": self.role,
            "extra": [list(r) for r in self.extra],
        }

    @classmethod
    def r_window(cls, eps, C0=1.0):
        return cls(-C0 * eps, C0 * eps, -C0 * eps, C0 * eps, role="R")

    @classmethod
    def r_delta(cls, eps, delta, C0=1.0):
        return cls(-C0 * eps, C0 * eps, -C0 * eps, -delta * eps, role="R_delta")

    @classmethod
    def r_eps_delta(cls, eps, delta, A, B, C0=1.0):
        """R_delta joined with the gap columns A eps, B eps + ]-delta eps/4, delta eps/4[ reaching up to the top of R."""
        columns = tuple(
            (level * eps - delta * eps / 4, level * eps + delta * eps / 4, -delta * eps, C0 * eps) for level in (A, B)
        )
        return cls(-C0 * eps, C0 * eps, -C0 * eps, -delta * eps, role="R_eps_delta", extra=columns)

    @classmethod
    def theorem_a(cls, eps, delta, C0=1.0):
        return cls(-C0 * eps, eps, -eps, -delta * eps, role="theorem-A")

    @classmethod
    def theorem_b(cls, a, b, eps, delta):
        return cls(a, b, -delta * eps, UPPER_HALF_PLANE_TOL, role="theorem-B")


def count_in_box(values, window):
    """Count with multiplicity, half-open convention."""
    values = np.asarray(values, dtype=complex).ravel()
    if values.size == 0:
        return 0
    return int(np.count_nonzero(window.contains(values)))


def merge_clusters(values, tol=1e-8):
    """Representatives of eigenvalue clusters within tol, with their multiplicities."""
    values = np.sort_complex(np.asarray(values, dtype=complex).ravel())
    representatives, multiplicities = [], []
    for z in values:
        if representatives and abs(z - representatives[-1]) <= tol:
            multiplicities[-1] += 1
        else:
            representatives.append(z)
            multiplicities.append(1)
    return np.array(representatives), np.array(multiplicities, dtype=int)


@dataclass(frozen=True)
class ResonanceSet:
    resonances: np.ndarray
    stability: np.ndarray
    thetas: tuple
    window: WindowSpec
    threshold: float

    def to_frame(self):
        return pd.DataFrame(
            {
                "re": self.resonances.real,
                "im": self.resonances.imag,
                "residual": np.nan,
                "stability": self.stability,
            }
        )


def continuum_threshold(spec):
    """Limit of V at infinity, or None when V is confining."""
    if any(isinstance(term, QuadraticTerm) and np.any(term.matrix) for term in spec.terms):
        return None
    return spec.energy_shift - spec.asymptotic_depth


def check_window_covered(spec, window, theta, grid=None):
    """Raise WindowUncovered if part of the window lies below the rotated continuum.

    The continuum rotates into the ray tail + e^{-2i theta} R_+; with a grid it only reaches the
    depth h^2 N^2 sin 2 theta, so every window must also keep Im z > -h^2 N^2 sin 2 theta.
    Confining potentials have no continuum and pass unchecked.
    """
    tail = continuum_threshold(spec)
    if tail is None:
        return
    if grid is not None:
        depth = grid.h**2 * grid.points**2 * np.sin(2.0 * theta)
        lowest = min(c for _, _, c, _ in window.rectangles())
        if lowest <= -depth:
            raise WindowUncovered(
                f"window reaches Im z = {lowest:.4g}, below the resolved continuum depth {-depth:.4g}"
            )
    for a, b, c, _ in window.rectangles():
        for corner in (a + 1j * c, b + 1j * c):
            if corner.real > tail and np.angle(corner - tail) < -2.0 * theta:
                raise WindowUncovered(
                    f"window corner {corner:.4g} lies below the continuum rotated by 2 theta = {2 * theta:.3g}"
                )


def dilated_operator(spec, grid, theta, eps=0.0, alpha=DEFAULT_ALPHA):
    """P (eps = 0) or P_eps after x -> e^{i theta} x."""
    if eps == 0:
        return assemble_schrodinger(spec, grid, theta=theta)
    return dilated_family(spec, grid.with_theta(theta), eps, alpha)["P_eps"]


@timer_func
def extract_resonances(
    spec, grid, thetas, window, threshold=None, eps=0.0, alpha=DEFAULT_ALPHA, builder=None, workers=1
):
    """Eigenvalues of the dilated operator in the window that move less than `threshold` across the theta list.

    `builder(theta)` returns the dilated matrix; by default P (or P_eps when eps > 0).
    """
    thetas = sorted(float(theta) for theta in thetas)
    if len(thetas) < 2:
        raise ConfigValidationError("resonance extraction needs at least two dilation angles")
    if threshold is None:
        threshold = 1e-2 * (eps if eps > 0 else grid.h)
    check_window_covered(spec, window, thetas[0], grid)
    if builder is None:

        def builder(theta):
            return dilated_operator(spec, grid, theta, eps, alpha)

    def solve(theta):
        return eig_general(builder(theta)).eigenvalues

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        spectra = list(pool.map(solve, thetas))
    first = spectra[0]
    mirrored = (first.imag > UPPER_HALF_PLANE_TOL) & window.contains(first.conj())
    candidates = first[window.contains(first) | mirrored]
    kept, stability = [], []
    for z in candidates:
        current, displacement = z, 0.0
        for values in spectra[1:]:
            nearest = values[np.argmin(np.abs(values - current))]
            displacement = max(displacement, abs(nearest - current))
            current = nearest
        if displacement < threshold:
            kept.append(z)
            stability.append(displacement)
    kept, stability = np.array(kept, dtype=complex), np.array(stability)
    upper = kept.imag > UPPER_HALF_PLANE_TOL
    if upper.any():
        raise UpperHalfPlaneResonance(kept[upper])
    logger.info(f"{kept.size} of {candidates.size} window eigenvalues are dilation-stable")
    return ResonanceSet(kept, stability, tuple(thetas), window, threshold)


@dataclass(frozen=True)
class MatchReport:
    pairs: list
    distances: np.ndarray
    max_distance: float
    mean_distance: float
    eps: float
    unmatched_interior: int
    unmatched_resonances: int
    ambiguous: int
    dropped: int

    @property
    def cardinality_mismatch(self):
        return self.unmatched_interior > 0 or self.unmatched_resonances > 0

    def to_dict(self):
        return {
            "pairs": [[float(np.real(m)), float(np.real(b)), float(np.imag(b))] for m, b in self.pairs],
            "max_distance": self.max_distance,
            "mean_distance": self.mean_distance,
            "max_distance_eps": self.max_distance / self.eps if self.eps else None,
            "unmatched_interior": self.unmatched_interior,
            "unmatched_resonances": self.unmatched_resonances,
            "ambiguous": self.ambiguous,
            "dropped": self.dropped,
            "cardinality_mismatch": self.cardinality_mismatch,
        }


def match_spectra(interior, resonances, window, eps, resonance_window=None):
    """Greedy minimal-distance pairing of interior eigenvalues with resonances on the common window.

    Items within eps/10 of an edge of the common window are dropped before pairing; a top edge on or
    above the real axis is kept, since real eigenvalues and near-real resonances sit on it. A pair is
    ambiguous when a still unmatched alternative lies within 3x its distance.
    """
    mu = np.asarray(getattr(interior, "eigenvalues", interior), dtype=complex).ravel()
    res = np.asarray(getattr(resonances, "resonances", resonances), dtype=complex).ravel()
    resonance_window = resonance_window or window
    common = window.intersect(resonance_window)
    margin = eps / 10.0

    def restrict(values, own):
        values = values[own.contains(values)]
        if common is None:
            return values, np.zeros(values.size, dtype=bool), 0
        edge = (np.abs(values.real - common.re_min) < margin) | (np.abs(values.real - common.re_max) < margin)
        edge |= np.abs(values.imag - common.im_min) < margin
        if common.im_max < 0:
            edge |= np.abs(values.imag - common.im_max) < margin
        shared = common.contains(values) & ~edge
        return values, shared, int(np.count_nonzero(edge & common.contains(values)))

    mu, mu_shared, mu_dropped = restrict(mu, window)
    res, res_shared, res_dropped = restrict(res, resonance_window)
    a, b = mu[mu_shared], res[res_shared]
    distances = np.abs(a[:, None] - b[None, :]) if a.size and b.size else np.zeros((a.size, b.size))
    work = distances.copy()
    pairs, pair_distances, ambiguous = [], [], 0
    for _ in range(min(a.size, b.size)):
        i, j = np.unravel_index(np.argmin(work), work.shape)
        d = distances[i, j]
        alternatives = np.concatenate([np.delete(work[i], j), np.delete(work[:, j], i)])
        alternatives = alternatives[np.isfinite(alternatives)]
        if alternatives.size and d > 0 and alternatives.min() < 3.0 * d:
            ambiguous += 1
        pairs.append((a[i], b[j]))
        pair_distances.append(d)
        work[i, :] = np.inf
        work[:, j] = np.inf
    pair_distances = np.array(pair_distances)
    return MatchReport(
        pairs=pairs,
        distances=pair_distances,
        max_distance=float(pair_distances.max()) if pair_distances.size else 0.0,
        mean_distance=float(pair_distances.mean()) if pair_distances.size else 0.0,
        eps=eps,
        unmatched_interior=int(mu.size - mu_dropped - len(pairs)),
        unmatched_resonances=int(res.size - res_dropped - len(pairs)),
        ambiguous=ambiguous,
        dropped=mu_dropped + res_dropped,
    )


def surgery_targets(values, eps, delta, levels):
    """Indices of eigenvalues inside A eps + ]-delta eps/2, delta eps/2[ and their moved values."""
    values = np.real(np.asarray(values))
    levels = sorted(levels)
    for low, high in zip(levels, levels[1:]):
        if high - low < delta:
            raise ConfigValidationError(f"surgery windows around {low} and {high} overlap for delta = {delta}")
    indices, moved = [], []
    for level in levels:
        center, half = level * eps, delta * eps / 2.0
        inside = np.flatnonzero(np.abs(values - center) < half)
        indices.extend(inside.tolist())
        moved.extend(np.where(values[inside] <= center, center - half, center + half).tolist())
    return np.array(indices, dtype=int), np.array(moved)


@dataclass(frozen=True)
class SurgeryResult:
    matrix: OperatorMatrix
    moved: np.ndarray
    old_values: np.ndarray
    new_values: np.ndarray
    levels: tuple
    empty_window: bool


@timer_func
def apply_surgery(eigendata, target, chi_u, eps, delta, levels):
    """target + chi_U sum_j (mu~_j - mu_j) (chi_U . | e_j) e_j over P_int eigenpairs in the delta-windows."""
    if eigendata.eigenvectors is None:
        raise ValueError("surgery needs P_int eigenvectors; call eig_hermitian(..., vectors=True)")
    levels = tuple(levels)
    indices, new_values = surgery_targets(eigendata.eigenvalues, eps, delta, levels) if delta > 0 else ([], [])
    indices, new_values = np.asarray(indices, dtype=int), np.asarray(new_values, dtype=float)
    if indices.size == 0:
        logger.info(f"surgery windows at levels {levels} are empty")
        return SurgeryResult(target, indices, np.array([]), np.array([]), levels, True)
    old_values = np.real(eigendata.eigenvalues[indices])
    chi = np.asarray(chi_u, dtype=float).ravel()
    f = chi[:, None] * eigendata.eigenvectors[:, indices]
    update = (f * (new_values - old_values)) @ f.conj().T
    update = 0.5 * (update + update.conj().T)
    matrix = target.plus(update, Provenance.P_SURGERY)
    logger.info(f"surgery moved {indices.size} eigenvalues at levels {levels}")
    return SurgeryResult(matrix, indices, old_values, new_values, levels, False)


def gap_violations(values, eps, delta, levels, fraction=1.0 / 3.0):
    """Eigenvalues left in A eps + [-fraction delta eps, fraction delta eps] for each level."""
    values = np.real(np.asarray(values))
    hits = [values[np.abs(values - level * eps) <= fraction * delta * eps] for level in levels]
    return np.concatenate(hits) if hits else np.array([])


@dataclass(frozen=True)
class CountReport:
    label: str
    window: WindowSpec
    observed: int
    predicted: float
    h: float
    dimension: int
    config_hash: str = ""

    @property
    def discrepancy(self):
        return self.observed - self.predicted

    @property
    def relative_error(self):
        return abs(self.discrepancy) / max(self.observed, 1)

    def to_dict(self):
        return {
            "label": self.label,
            "window": self.window.to_dict(),
            "observed": self.observed,
            "predicted": self.predicted,
            "discrepancy": self.discrepancy,
            "relative_error": self.relative_error,
            "h": self.h,
            "dimension": self.dimension,
            "config_hash": self.config_hash,
        }


if __name__ == "__main__":
    pass
