import hashlib
import logging
from dataclasses import dataclass
from enum import IntEnum
from typing import Annotated, Literal, NamedTuple, Optional, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.optimize import brentq

from src.island_resonances.utils.errors import (
    FillInfeasible,
    NoConvergence,
    NoRoot,
    SingleComponent,
    WrongSignature,
)
from src.island_resonances.utils.fills import (
    FILL_SPACING,
    SeaFill,
    WellFill,
    fill_lattice,
    phase_fill_margin,
    plateau_cutoff,
    smooth_plus,
)
from src.island_resonances.utils.grid import GridSpec
from src.island_resonances.utils.helper import timer_func
from src.island_resonances.utils.sublevel import distance_to, edge_labels, label_components

logger = logging.getLogger(__name__)

DEFAULT_ALPHA = 0.5


class PotentialValue(NamedTuple):
    value: np.ndarray
    gradient: Optional[np.ndarray]
    hessian: Optional[np.ndarray]


class GaussianTerm(BaseModel):
    """A e^{-u/w}, with u = |x-c|^2 (radial), (x_axis - c_axis)^2 (axis term) or (|x-c| - radius)^2 (ring)."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["gaussian"] = "gaussian"
    amplitude: float
    center: tuple[float, ...]
    width: float = Field(gt=0)
    radial_flag: bool = True
    radius: float = Field(default=0.0, ge=0)
    axis: int = Field(default=0, ge=0)

    def _exponent(self, d):
        n = d.shape[-1]
        eye = np.eye(n)
        if not self.radial_flag:
            unit = eye[self.axis]
            dk = d[..., self.axis]
            return dk**2, 2.0 * dk[..., None] * unit, 2.0 * np.outer(unit, unit)
        if self.radius == 0.0:
            return np.sum(d**2, axis=-1), 2.0 * d, 2.0 * eye
        r = np.sqrt(np.sum(d**2, axis=-1))
        at_center = r == 0
        safe = np.where(at_center, 1.0, r)
        offset = r - self.radius
        outer = d[..., :, None] * d[..., None, :]
        grad = np.where(at_center[..., None], 0.0, 2.0 * (offset / safe)[..., None] * d)
        hess = 2.0 * outer / safe[..., None, None] ** 2 + 2.0 * offset[..., None, None] * (
            eye / safe[..., None, None] - outer / safe[..., None, None] ** 3
        )
        hess = np.where(at_center[..., None, None], 0.0, hess)
        return offset**2, grad, hess

    def evaluate(self, x, order):
        d = x - np.asarray(self.center)
        u, gu, hu = self._exponent(d)
        value = self.amplitude * np.exp(-u / self.width)
        grad = hess = None
        if order >= 1:
            grad = -value[..., None] * gu / self.width
        if order >= 2:
            hess = value[..., None, None] * (gu[..., :, None] * gu[..., None, :] / self.width**2 - hu / self.width)
        return value, grad, hess

    def narrowest_length(self):
        return float(np.sqrt(self.width))


class QuadraticTerm(BaseModel):
    """(x-c)^T M (x-c) / 2 + offset; used for the harmonic, pure-saddle and radial toy models."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["quadratic"] = "quadratic"
    matrix: tuple[tuple[float, ...], ...]
    center: tuple[float, ...]
    offset: float = 0.0

    @model_validator(mode="after")
    def _symmetric(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (len(self.center), len(self.center)) or not np.allclose(m, m.T):
            raise ValueError("quadratic term needs a symmetric matrix matching the center dimension")
        return self

    def evaluate(self, x, order):
        m = np.asarray(self.matrix, dtype=float)
        d = x - np.asarray(self.center)
        md = d @ m.T
        value = 0.5 * np.sum(d * md, axis=-1) + self.offset
        grad = md if order >= 1 else None
        hess = np.broadcast_to(m, x.shape + (x.shape[-1],)) if order >= 2 else None
        return value, grad, hess

    def narrowest_length(self):
        return np.inf


Term = Annotated[Union[GaussianTerm, QuadraticTerm], Field(discriminator="kind")]


class PotentialSpec(BaseModel):
    """V(x) = sum of terms - asymptotic_depth + energy_shift.

    After normalization V(saddle) = 0 and, for decaying terms, V -> -asymptotic_depth = -E_0 at infinity
    with energy_shift = 0. `saddle` is filled in by find_saddle_and_normalize; `well_point` marks a point of
    the well and fixes the x_n orientation of the saddle frame and the well component of sublevel sets.
    """

    model_config = ConfigDict(frozen=True)

    terms: tuple[Term, ...]
    asymptotic_depth: float = Field(ge=0)
    dimension: Literal[1, 2]
    energy_shift: float = 0.0
    saddle: Optional[tuple[float, ...]] = None
    well_point: Optional[tuple[float, ...]] = None

    @model_validator(mode="after")
    def _check_dimensions(self):
        for term in self.terms:
            if len(term.center) != self.dimension:
                raise ValueError(f"term center {term.center} does not have dimension {self.dimension}")
            if isinstance(term, GaussianTerm) and term.axis >= self.dimension:
                raise ValueError(f"axis {term.axis} out of range for dimension {self.dimension}")
        for point in (self.saddle, self.well_point):
            if point is not None and len(point) != self.dimension:
                raise ValueError(f"point {point} does not have dimension {self.dimension}")
        return self

    @property
    def normalized(self):
        return self.saddle is not None

    def narrowest_length(self):
        return min((term.narrowest_length() for term in self.terms), default=np.inf)

    def to_json(self):
        return self.model_dump_json(indent=2)

    @classmethod
    def from_json(cls, text):
        return cls.model_validate_json(text)

    def fingerprint(self):
        return hashlib.sha256(self.model_dump_json().encode()).hexdigest()


def _as_points(point, dimension):
    x = np.asarray(point)
    if x.shape[-1:] != (dimension,):
        raise ValueError(f"points must have trailing dimension {dimension}, got shape {x.shape}")
    if not np.iscomplexobj(x):
        x = x.astype(float)
    return x


def eval_potential(spec, point, order=0):
    """Exact value (and gradient/Hessian for order 1/2) of V at real or complex points of shape (..., n)."""
    if order not in (0, 1, 2):
        raise ValueError(f"order must be 0, 1 or 2, got {order}")
    x = _as_points(point, spec.dimension)
    n = spec.dimension
    value = np.full(x.shape[:-1], spec.energy_shift - spec.asymptotic_depth, dtype=x.dtype)
    grad = np.zeros(x.shape, dtype=x.dtype) if order >= 1 else None
    hess = np.zeros(x.shape + (n,), dtype=x.dtype) if order >= 2 else None
    for term in spec.terms:
        v, g, H = term.evaluate(x, order)
        value = value + v
        if order >= 1:
            grad = grad + g
        if order >= 2:
            hess = hess + H
    if value.ndim == 0:
        value = value[()]
    return PotentialValue(value, grad, hess)


def bump_value(eps, alpha, squared_distance):
    """eps * chi(alpha * rho / sqrt(eps)) for the Gaussian profile chi(rho) = e^{-|rho|^2}."""
    if eps == 0:
        return np.zeros_like(squared_distance)
    return eps * np.exp(-(alpha**2) * squared_distance / eps)


def _saddle_of(spec):
    if spec.saddle is None:
        raise ValueError("potential spec is not normalized; call find_saddle_and_normalize first")
    return np.asarray(spec.saddle, dtype=float)


def v_eps(spec, eps, alpha, point):
    """V_eps(x) = V(x) + eps chi(alpha (x - x0) / sqrt(eps), 0)."""
    x = _as_points(point, spec.dimension)
    x0 = _saddle_of(spec)
    return eval_potential(spec, x).value + bump_value(eps, alpha, np.sum((x - x0) ** 2, axis=-1))


@dataclass(frozen=True)
class SaddleFrame:
    """Saddle x0, Hessian eigenbasis (tangential columns first, x_n last) and the x_n dilation.

    In frame coordinates x = x0 + Q D y, xi = Q D^{-1} eta with D = diag(1, ..., 1, scale) the symbol
    divided by kappa reads 1/2 (eta_n^2 - y_n^2) + 1/2 q(y', eta') + O(|y|^3).
    """

    saddle: np.ndarray
    basis: np.ndarray
    scale: float
    hessian_eigenvalues: np.ndarray
    kappa: float

    @property
    def dimension(self):
        return self.saddle.shape[0]

    @property
    def stretch(self):
        d = np.ones(self.dimension)
        d[-1] = self.scale
        return d

    @property
    def signature(self):
        negative = int(np.sum(self.hessian_eigenvalues < 0))
        return self.dimension - negative, negative

    def to_original(self, y):
        return self.saddle + (np.asarray(y) * self.stretch) @ self.basis.T

    def to_frame(self, x):
        return ((np.asarray(x) - self.saddle) @ self.basis) / self.stretch

    def momentum_to_original(self, eta):
        return (np.asarray(eta) / self.stretch) @ self.basis.T

    def momentum_to_frame(self, xi):
        return (np.asarray(xi) @ self.basis) * self.stretch

    def normal_coordinate(self, x):
        """Coordinate along e_n in which V = -x_n^2 + O(|x|^3)."""
        u = (np.asarray(x) - self.saddle) @ self.basis[:, -1]
        return u * np.sqrt(abs(self.hessian_eigenvalues[-1]) / 2.0)

    def tangential_form(self):
        """Matrix of q(y', eta') on (y', eta'), positive definite by the signature condition."""
        tangential = self.hessian_eigenvalues[:-1]
        return np.diag(np.concatenate([tangential, 2.0 * np.ones_like(tangential)]) / self.kappa)

    def to_dict(self):
        return {
            "saddle": self.saddle.tolist(),
            "basis": self.basis.tolist(),
            "scale": self.scale,
            "hessian_eigenvalues": self.hessian_eigenvalues.tolist(),
            "kappa": self.kappa,
        }


def saddle_frame(spec, point, hessian=None, well_hint=None):
    """Frame at a critical point; raises WrongSignature unless the Hessian has signature (n-1, 1)."""
    point = np.asarray(point, dtype=float)
    if hessian is None:
        hessian = eval_potential(spec, point, order=2).hessian
    eigenvalues, vectors = np.linalg.eigh(np.real(hessian))
    negative = eigenvalues < 0
    degenerate = np.abs(eigenvalues) < 1e-12
    if negative.sum() != 1 or degenerate.any():
        raise WrongSignature(
            f"Hessian signature at {point.tolist()} is ({int((~negative).sum())}, {int(negative.sum())}), "
            f"expected ({spec.dimension - 1}, 1)"
        )
    order = np.concatenate([np.flatnonzero(~negative), np.flatnonzero(negative)])
    eigenvalues = eigenvalues[order]
    basis = vectors[:, order].copy()
    for j in range(basis.shape[1]):
        if basis[np.argmax(np.abs(basis[:, j])), j] < 0:
            basis[:, j] *= -1
    hint = well_hint if well_hint is not None else spec.well_point
    if hint is not None and np.dot(np.asarray(hint, dtype=float) - point, basis[:, -1]) > 0:
        basis[:, -1] *= -1
    curvature = abs(eigenvalues[-1])
    return SaddleFrame(
        saddle=point,
        basis=basis,
        scale=float((2.0 / curvature) ** 0.25),
        hessian_eigenvalues=eigenvalues,
        kappa=float(np.sqrt(2.0 * curvature)),
    )


@timer_func
def find_saddle_and_normalize(spec, guess, well_hint=None, tol=1e-10, max_iter=100):
    """Newton search for the signature-(n-1,1) critical point; returns the shifted spec and its frame."""
    x = np.asarray(guess, dtype=float).copy()
    for iteration in range(max_iter + 1):
        pv = eval_potential(spec, x, order=2)
        residual = float(np.linalg.norm(pv.gradient))
        if residual <= tol:
            break
        if iteration == max_iter:
            raise NoConvergence(f"Newton residual {residual:.3e} > {tol:.0e} after {max_iter} iterations")
        try:
            x = x - np.linalg.solve(pv.hessian, pv.gradient)
        except np.linalg.LinAlgError as err:
            raise NoConvergence(f"singular Hessian at {x.tolist()}") from err
    logger.debug(f"saddle at {x.tolist()} after {iteration} Newton steps, residual {residual:.2e}")
    frame = saddle_frame(spec, x, pv.hessian, well_hint)
    barrier = float(pv.value) - (spec.energy_shift - spec.asymptotic_depth)
    if barrier < 0:
        logger.warning(f"saddle lies {-barrier:.3e} below the far field; keeping the offset in energy_shift")
        update = {"asymptotic_depth": 0.0, "energy_shift": -barrier}
    else:
        update = {"asymptotic_depth": barrier, "energy_shift": 0.0}
    normalized = spec.model_copy(update={**update, "saddle": tuple(x.tolist())})
    return normalized, frame


def frame_of(spec, well_hint=None):
    return saddle_frame(spec, _saddle_of(spec), well_hint=well_hint)


class Region(IntEnum):
    ISLAND = 0
    WELL = 1
    SEA = 2
    BOUNDARY = 3


@dataclass(frozen=True)
class RegionLabels:
    """Labels of the grid nodes at a given energy; BOUNDARY marks stray sublevel pockets that are neither well nor sea."""

    grid: GridSpec
    energy: float
    labels: np.ndarray
    potential: np.ndarray

    def mask(self, region):
        return self.labels == region

    @property
    def well_mask(self):
        return self.mask(Region.WELL)

    @property
    def sea_mask(self):
        return self.mask(Region.SEA)

    @property
    def sea_empty(self):
        return not self.sea_mask.any()

    @property
    def well_empty(self):
        return not self.well_mask.any()

    def to_frame(self):
        nodes = self.grid.nodes()
        y = nodes[:, 1] if self.grid.dimension == 2 else np.zeros(len(nodes))
        names = np.array([region.name.lower() for region in Region])
        return pd.DataFrame({"x": nodes[:, 0], "y": y, "label": names[self.labels.ravel()]})


def classify_sublevel(spec, E, grid, eps=0.0, alpha=DEFAULT_ALPHA, well_point=None):
    """Split {V_eps < E} on the grid into well, sea (edge-touching) and stray pockets; {V_eps >= E} is island."""
    mesh = grid.mesh()
    values = np.real(eval_potential(spec, mesh).value)
    if eps > 0:
        values = values + bump_value(eps, alpha, np.sum((mesh - _saddle_of(spec)) ** 2, axis=-1))
    labels = np.full(grid.shape, int(Region.ISLAND))
    mask = values < E
    if not mask.any():
        return RegionLabels(grid, E, labels, values)
    count, components = label_components(mask)
    sea = edge_labels(components)
    interior = [k for k in range(1, count) if k not in sea]
    well_point = well_point if well_point is not None else spec.well_point
    well = None
    if well_point is not None:
        well = int(components.flat[grid.nearest_index(well_point)])
        if well in sea:
            raise SingleComponent(f"well and sea form a single component at E = {E:.6g} on this grid")
        well = well or None
    elif interior:
        well = min(interior, key=lambda k: values[components == k].min())
    labels[np.isin(components, list(sea))] = Region.SEA
    labels[np.isin(components, [k for k in interior if k != well])] = Region.BOUNDARY
    if well is not None:
        labels[components == well] = Region.WELL
    return RegionLabels(grid, E, labels, values)


@dataclass(frozen=True)
class ScaleFunctions:
    """r_eps, R_eps and the phase-space r~_eps measured from `origin` (the saddle)."""

    eps: float
    origin: Optional[tuple[float, ...]] = None

    def _squared(self, x):
        x = np.asarray(x, dtype=float)
        if self.origin is not None:
            x = x - np.asarray(self.origin)
        return np.sum(x**2, axis=-1)

    def big_r(self, x):
        return np.sqrt(self.eps + self._squared(x))

    def small_r(self, x):
        sq = self._squared(x)
        return np.sqrt((self.eps + sq) / (1.0 + sq))

    def phase_r(self, x, xi):
        return np.sqrt(self.small_r(x) ** 2 + np.sum(np.asarray(xi, dtype=float) ** 2, axis=-1))


def scale_functions(eps, origin=None):
    return ScaleFunctions(eps, None if origin is None else tuple(origin))


def fill_geometry(spec, eps, alpha, E, grid):
    """Region labels, r_eps^2 and the R_eps-scaled distances to the well and to the sea on `grid`."""
    try:
        labels = classify_sublevel(spec, E, grid, eps=eps, alpha=alpha)
    except SingleComponent as err:
        raise FillInfeasible(f"no well/sea separation at E = {E:.6g}: {err}") from err
    if labels.well_empty:
        raise FillInfeasible(f"empty well at E = {E:.6g}")
    mesh = grid.mesh()
    scales = ScaleFunctions(eps, spec.saddle)
    big_r = scales.big_r(mesh)
    to_well = distance_to(labels.well_mask, grid.spacing) / big_r
    to_sea = distance_to(labels.sea_mask, grid.spacing) / big_r
    return labels, scales.small_r(mesh) ** 2, to_well, to_sea


SEA_MARGIN_LADDER = np.geomspace(1e-3, 4.0, 41)


def _sea_profile(geometry, eps, E_prime, r, margin):
    labels, r2, to_well, to_sea = geometry
    v = labels.potential
    W = plateau_cutoff(to_sea / r, 0.5, 1.0) * smooth_plus(E_prime + margin * r2 - v, 0.1 * margin * max(eps, 1e-3))
    checked = to_well > r
    ratios = (v + W - E_prime)[checked] / r2[checked]
    return W, float(ratios.min()) if ratios.size else np.inf


def _derive_sea_margin(geometry, eps, E_prime, r):
    """Largest m on the ladder (refined by brentq) with min (V_eps + W_m - E') / r_eps^2 >= m / 2.

    The minimum is nondecreasing in m, so at the root C = 1 / min = 2 / m.
    """
    ratios = np.array([_sea_profile(geometry, eps, E_prime, r, m)[1] for m in SEA_MARGIN_LADDER])
    if ratios[-1] <= 0:
        raise FillInfeasible(
            f"V_eps + W - E' reaches {ratios[-1]:.3e} r_eps^2 outside the well neighbourhood; r = {r} is too small"
        )
    feasible = np.flatnonzero(ratios - SEA_MARGIN_LADDER / 2.0 >= 0)
    if feasible.size == 0:
        logger.warning(f"sea fill margin below {SEA_MARGIN_LADDER[0]:.0e}; C exceeds 2 / m")
        return float(SEA_MARGIN_LADDER[0])
    k = int(feasible[-1])
    if k == len(SEA_MARGIN_LADDER) - 1:
        return float(SEA_MARGIN_LADDER[-1])
    return brentq(
        lambda m: _sea_profile(geometry, eps, E_prime, r, m)[1] - m / 2.0,
        SEA_MARGIN_LADDER[k],
        SEA_MARGIN_LADDER[k + 1],
        xtol=1e-12,
    )


@timer_func
def build_sea_fill(spec, eps, E, E_prime, r, grid, alpha=DEFAULT_ALPHA, spacing=FILL_SPACING):
    """W = cutoff(sea side) * smooth max(0, E' + m r_eps^2 - V_eps), supported in B(S_eps(E), r).

    Built on the fill lattice of `grid`'s box; the margin m is derived so that m = 2 / C.
    """
    lattice = fill_lattice(grid, spacing)
    geometry = fill_geometry(spec, eps, alpha, E, lattice)
    labels = geometry[0]
    margin = _derive_sea_margin(geometry, eps, E_prime, r)
    W, min_ratio = _sea_profile(geometry, eps, E_prime, r, margin)
    if np.any((W > 0) & labels.well_mask):
        raise FillInfeasible(f"sea fill of radius {r} reaches the well; the neck is narrower than the neighbourhood")
    constant = 1.0 / min_ratio
    logger.info(f"sea fill: C = {constant:.4g}, m = {margin:.4g} at eps = {eps}, r = {r}")
    return SeaFill(lattice, W, constant, min_ratio, r, eps, E, E_prime, margin)


@timer_func
def build_well_fill(
    spec, eps, E, E_prime, r, grid, alpha=DEFAULT_ALPHA, margin=0.1, xi_samples=61, spacing=FILL_SPACING
):
    """beta supported in B(U_eps(E), r), with beta >= margin r_eps^2 on B(U, 3r/4); chi_U = 1 on B(U, r/2)."""
    lattice = fill_lattice(grid, spacing)
    labels, r2, to_well, to_sea = fill_geometry(spec, eps, alpha, E, lattice)
    v = labels.potential
    body = smooth_plus(E_prime - v, 0.1 * margin * max(eps, 1e-3)) + margin * r2
    beta = plateau_cutoff(to_well / r, 0.75, 1.0) * body
    chi_u = plateau_cutoff(to_well / r, 0.5, 0.75)
    if np.any((beta > 0) & labels.sea_mask):
        raise FillInfeasible(f"well fill of radius {r} reaches the sea")
    off_sea = to_sea > r
    slack = (v + beta - E_prime)[off_sea]
    min_margin = float(slack.min()) if slack.size else np.inf
    if min_margin < 0:
        raise FillInfeasible(f"V_eps + beta - E' reaches {min_margin:.3e} off the sea neighbourhood")
    filled = off_sea & (beta > 0)
    xi = np.linspace(0.0, 3.0, xi_samples)
    b = beta[filled][:, None]
    pointwise = phase_fill_margin(b, xi[None, :]) + b + (v[filled] - E_prime)[:, None]
    pointwise_margin = min(float(pointwise.min()) if pointwise.size else np.inf, min_margin)
    beta_floor = float(np.min(beta[labels.well_mask] / r2[labels.well_mask]))
    logger.info(f"well fill: min beta/r_eps^2 = {beta_floor:.4g}, pointwise margin = {pointwise_margin:.3e}")
    return WellFill(lattice, beta, chi_u, beta_floor, min_margin, pointwise_margin, r, eps, E, E_prime, margin)


def fill_energies(eps, F, F_prime, alpha=DEFAULT_ALPHA):
    """(E, E') = (E_eps - eps F, E_eps - eps F') with E_eps = eps chi(0) = eps."""
    if F <= F_prime:
        raise ValueError(f"fills need F > F' (E < E'), got F = {F}, F' = {F_prime}")
    return eps - eps * F, eps - eps * F_prime


def neck_gap(spec, eps, F, alpha=DEFAULT_ALPHA, with_bump=True, reach=2.0):
    """Distance in x_n between the local sea and well boundaries at E = E_eps - eps F along the frame x_n axis.

    Measured in the coordinate where V = -x_n^2 + O(|x|^3), so the pure quadratic model gives 2 (eps F)^{1/2}.
    """
    frame = frame_of(spec)
    stretch = np.sqrt(abs(frame.hessian_eigenvalues[-1]) / 2.0)
    direction = frame.basis[:, -1]
    eps_bump = eps if with_bump else 0.0
    level = eps_bump - eps * F

    def offset(s):
        point = frame.saddle + (s / stretch) * direction
        return float(np.real(v_eps(spec, eps_bump, alpha, point))) - level

    if abs(offset(0.0)) <= 1e-14:
        return 0.0
    if offset(0.0) < 0:
        raise NoRoot(f"E = {level:.6g} lies above the local barrier top")
    step = max(np.sqrt(eps * max(F, 0.0)), 1e-6) / 16.0
    roots = []
    for sign in (1.0, -1.0):
        a, b = 0.0, sign * step
        while offset(b) > 0:
            a, b = b, b + sign * step
            if abs(b) > reach:
                raise NoRoot(f"no boundary crossing within {reach} of the saddle in direction {sign:+.0f}")
        roots.append(brentq(offset, min(a, b), max(a, b), xtol=1e-13))
    return roots[0] - roots[1]


def canonical_island_spec(
    radius=1.0,
    barrier_width=0.05,
    barrier_height=1.0,
    well_depth=0.3,
    well_width=0.3,
    sea_depth=1.0,
    sea_width=4.0,
    notch_width=0.05,
    notch_depth=None,
):
    """Ring barrier + central depression + notch in the ring at (0, radius); unnormalized.

    Without an explicit notch_depth the notch is calibrated so that a signature-(1,1) saddle exists
    near the notch center.
    """
    candidates = [notch_depth] if notch_depth is not None else [0.5, 0.4, 0.6, 0.3, 0.7]
    for fraction in candidates:
        depth = fraction if notch_depth is not None else fraction * barrier_height
        spec = PotentialSpec(
            terms=(
                GaussianTerm(amplitude=barrier_height, center=(0.0, 0.0), width=barrier_width, radius=radius),
                GaussianTerm(amplitude=-well_depth, center=(0.0, 0.0), width=well_width),
                GaussianTerm(amplitude=sea_depth, center=(0.0, 0.0), width=sea_width),
                GaussianTerm(amplitude=-depth, center=(0.0, radius), width=notch_width),
            ),
            asymptotic_depth=sea_depth,
            dimension=2,
            well_point=(0.0, 0.0),
        )
        try:
            find_saddle_and_normalize(spec, (0.0, radius))
        except (NoConvergence, WrongSignature) as err:
            logger.warning(f"notch depth {depth:.3g} rejected: {err}")
            continue
        return spec
    raise WrongSignature("no notch depth gives a signature-(1,1) saddle near the notch")


def canonical_normalized(**kwargs):
    spec = canonical_island_spec(**kwargs)
    return find_saddle_and_normalize(spec, (0.0, spec.terms[-1].center[1]))


def island_1d_spec():
    """1D analogue: sea background, barrier maximum near 0, well around -0.75 closed by a wall at -1.5."""
    return PotentialSpec(
        terms=(
            GaussianTerm(amplitude=1.0, center=(0.0,), width=4.0),
            GaussianTerm(amplitude=0.8, center=(0.0,), width=0.05),
            GaussianTerm(amplitude=-0.3, center=(-0.75,), width=0.1),
            GaussianTerm(amplitude=2.0, center=(-1.5,), width=0.05),
        ),
        asymptotic_depth=1.0,
        dimension=1,
        well_point=(-0.75,),
    )


def _diagonal(values):
    n = len(values)
    return tuple(tuple(float(values[i]) if i == j else 0.0 for j in range(n)) for i in range(n))


def harmonic_spec(dimension=1):
    """V = |x|^2, the discretization oracle."""
    return PotentialSpec(
        terms=(QuadraticTerm(matrix=_diagonal([2.0] * dimension), center=(0.0,) * dimension),),
        asymptotic_depth=0.0,
        dimension=dimension,
    )


def quadratic_saddle_spec(tangential=(1.0,)):
    """V = sum_j tangential_j x_j^2 - x_n^2, the exact model saddle."""
    n = len(tangential) + 1
    return PotentialSpec(
        terms=(QuadraticTerm(matrix=_diagonal([2.0 * t for t in tangential] + [-2.0]), center=(0.0,) * n),),
        asymptotic_depth=0.0,
        dimension=n,
        well_point=(0.0,) * (n - 1) + (-1.0,),
    )


def radial_toy_spec(dimension=2):
    """V = |x|^2 - 1: a single well without a sea."""
    return PotentialSpec(
        terms=(QuadraticTerm(matrix=_diagonal([2.0] * dimension), center=(0.0,) * dimension, offset=-1.0),),
        asymptotic_depth=0.0,
        dimension=dimension,
    )


if __name__ == "__main__":
    pass
