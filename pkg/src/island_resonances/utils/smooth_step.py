import numpy as np
from scipy.special import expit


def _transition(t):
    # sigma(t) = e^{-1/t} / (e^{-1/t} + e^{-1/(1-t)}), written as a logistic for stability
    t = np.clip(t, 1e-300, 1.0 - 1e-16)
    return expit(1.0 / (1.0 - t) - 1.0 / t)


def smooth_step(s):
    """Smooth cutoff equal to 1 on ]-inf, 1/2], 0 on [1, +inf[, nonincreasing in between."""
    s = np.asarray(s, dtype=float)
    t = 2.0 * (1.0 - s)
    inside = (s > 0.5) & (s < 1.0)
    out = np.where(s <= 0.5, 1.0, 0.0)
    if np.any(inside):
        out = np.where(inside, _transition(np.where(inside, t, 0.5)), out)
    return out[()] if out.ndim == 0 else out


def smooth_step_derivative(s):
    s = np.asarray(s, dtype=float)
    inside = (s > 0.5) & (s < 1.0)
    t = np.where(inside, 2.0 * (1.0 - s), 0.5)
    sigma = _transition(t)
    dsigma = sigma * (1.0 - sigma) * (1.0 / (1.0 - t) ** 2 + 1.0 / t**2)
    out = np.where(inside, -2.0 * dsigma, 0.0)
    return out[()] if out.ndim == 0 else out


if __name__ == "__main__":
    pass
