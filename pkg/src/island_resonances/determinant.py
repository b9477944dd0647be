import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.linalg import lu_factor, svdvals

from src.island_resonances.quantize import OperatorMatrix
from src.island_resonances.spectra import eig_general
from src.island_resonances.utils.errors import RefinementCapExceeded, SingularDenominator
from src.island_resonances.utils.helper import timer_func

logger = logging.getLogger(__name__)

PIVOT_TOL = 1e-14
INITIAL_SAMPLES = 64
MAX_ARG_STEP = np.pi / 2


def _data(matrix):
    return matrix.data if isinstance(matrix, OperatorMatrix) else np.asarray(matrix, dtype=complex)


def _logdet(data, z):
    """log det(data - z) from the pivots of an LU factorization, plus the smallest relative pivot."""
    shifted = data - z * np.eye(data.shape[0])
    lu, piv = lu_factor(shifted, check_finite=False)
    pivots = np.diag(lu).astype(complex)
    swaps = int(np.count_nonzero(piv != np.arange(piv.size)))
    magnitudes = np.abs(pivots)
    relative = magnitudes.min() / magnitudes.max() if magnitudes.max() > 0 else 0.0
    with np.errstate(divide="ignore"):
        value = np.sum(np.log(pivots)) + 1j * np.pi * swaps
    return value, relative


def rel_logdet(numerator, denominator, z):
    """log det(A_num - z) - log det(A_den - z); the real part is ln|det ratio|, the imaginary part is mod 2 pi."""
    num, den = _data(numerator), _data(denominator)
    den_value, den_pivot = _logdet(den, z)
    if den_pivot < PIVOT_TOL:
        raise SingularDenominator(f"z = {z:.6g} is (numerically) an eigenvalue of the denominator")
    num_value, _ = _logdet(num, z)
    return complex(num_value - den_value)


def log_abs_ratio(numerator, denominator, z_values, workers=1):
    """D(z) = ln|det (A_num - z)(A_den - z)^{-1}| over a list of energies."""
    z_values = np.atleast_1d(z_values)
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        values = list(pool.map(lambda z: rel_logdet(numerator, denominator, z).real, z_values))
    return np.array(values)


def trace_norm(matrix):
    return float(np.sum(svdvals(_data(matrix))))


def fitted_constant(values, scale):
    """Smallest C with values <= C * scale over the samples."""
    values, scale = np.asarray(values, dtype=float), np.asarray(scale, dtype=float)
    return float(np.max(values / scale))


@dataclass(frozen=True)
class DetSample:
    z: complex
    logabs: float
    arg_increment: float


@dataclass(frozen=True)
class ContourTrace:
    samples: list
    winding: int
    refinements: int

    def to_frame(self):
        z = np.array([s.z for s in self.samples])
        return pd.DataFrame(
            {
                "re_z": z.real,
                "im_z": z.imag,
                "logabs": [s.logabs for s in self.samples],
                "arg": np.cumsum([s.arg_increment for s in self.samples]),
            }
        )


def circle_contour(center, radius):
    def point(s):
        return center + radius * np.exp(2j * np.pi * np.asarray(s))

    return point


def rectangle_contour(re_min, re_max, im_min, im_max):
    """Counter-clockwise perimeter parametrized by arclength fraction s in [0, 1)."""
    corners = np.array(
        [re_min + 1j * im_min, re_max + 1j * im_min, re_max + 1j * im_max, re_min + 1j * im_max, re_min + 1j * im_min]
    )
    lengths = np.abs(np.diff(corners))
    cumulative = np.concatenate([[0.0], np.cumsum(lengths)]) / lengths.sum()

    def point(s):
        s = np.asarray(s) % 1.0
        side = np.clip(np.searchsorted(cumulative, s, side="right") - 1, 0, 3)
        local = (s - cumulative[side]) / (cumulative[side + 1] - cumulative[side])
        return corners[side] + local * (corners[side + 1] - corners[side])

    return point


def _wrap(angle):
    return (angle + np.pi) % (2.0 * np.pi) - np.pi


@timer_func
def trace_contour(numerator, denominator, contour, max_refine=12, initial=INITIAL_SAMPLES, workers=1):
    """Argument principle for f(z) = det(A_num - z)/det(A_den - z) along a closed contour.

    Samples start uniform in the contour parameter and are bisected locally wherever the argument
    increment reaches pi/2; more than `max_refine` bisection passes raise RefinementCapExceeded.
    """
    params = np.linspace(0.0, 1.0, initial, endpoint=False)
    cache = {}

    def evaluate(batch):
        missing = [s for s in batch if s not in cache]
        with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
            for s, value in zip(missing, pool.map(lambda s: rel_logdet(numerator, denominator, contour(s)), missing)):
                cache[s] = value

    for refinement in range(max_refine + 1):
        evaluate(params)
        values = np.array([cache[s] for s in params])
        increments = _wrap(np.diff(np.append(values.imag, values[0].imag)))
        coarse = np.flatnonzero(np.abs(increments) >= MAX_ARG_STEP)
        if coarse.size == 0:
            break
        if refinement == max_refine:
            raise RefinementCapExceeded(
                f"argument increments still >= pi/2 after {max_refine} refinements; an eigenvalue is near the contour"
            )
        following = np.append(params[1:], 1.0)
        params = np.sort(np.concatenate([params, 0.5 * (params[coarse] + following[coarse])]))
    winding = int(np.rint(increments.sum() / (2.0 * np.pi)))
    samples = [DetSample(complex(contour(s)), float(v.real), float(d)) for s, v, d in zip(params, values, increments)]
    logger.debug(f"winding {winding} from {params.size} contour samples after {refinement} refinements")
    return ContourTrace(samples, winding, refinement)


def winding_count(numerator, denominator, center, radius, max_refine=12):
    """(#eigenvalues of A_num inside the circle) - (#eigenvalues of A_den inside)."""
    return trace_contour(numerator, denominator, circle_contour(center, radius), max_refine=max_refine).winding


def winding_in_window(numerator, denominator, window, max_refine=12):
    """Winding around the main rectangle of a WindowSpec."""
    contour = rectangle_contour(window.re_min, window.re_max, window.im_min, window.im_max)
    return trace_contour(numerator, denominator, contour, max_refine=max_refine).winding


def direct_count_difference(numerator, denominator, inside):
    """Eigenvalue-count difference by enumeration; `inside` maps an array of energies to a boolean mask."""
    num = eig_general(_data(numerator)).eigenvalues
    den = eig_general(_data(denominator)).eigenvalues
    return int(np.count_nonzero(inside(num))) - int(np.count_nonzero(inside(den)))


def inside_circle(center, radius):
    def inside(z):
        return np.abs(np.asarray(z) - center) < radius

    return inside


if __name__ == "__main__":
    pass
