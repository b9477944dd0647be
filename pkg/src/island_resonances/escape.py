import json
import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import qmc

from src.island_resonances.potential import DEFAULT_ALPHA, bump_value, eval_potential
from src.island_resonances.utils.errors import ConfigValidationError, NoHypothesisSamples
from src.island_resonances.utils.helper import timer_func
from src.island_resonances.utils.smooth_step import smooth_step, smooth_step_derivative

logger = logging.getLogger(__name__)

T_MAX = 0.2
PROPOSITIONS = ("esc1", "bp1", "ltg1", "ltg2")


@dataclass(frozen=True)
class EscapeConfig:
    """Constants of the local escape construction in saddle-frame units.

    C is the comparability constant of p >= -eps/C + rho^2/C on the cutoff region, C_quadratic the
    lower bound constant of the tangential form; the cutoff steepness must satisfy lam^2 > 4 C_quadratic.
    """

    eps: float
    lam: float
    alpha: float = DEFAULT_ALPHA
    t: float = 0.1
    C: float = 4.0
    C_tilde: float = 4.0
    C_quadratic: float = 1.0
    a: float = 0.5
    r0: float = 2.0
    rho_max: float = 0.5
    samples: int = 100_000
    ratio_bound: float = 50.0
    seed: int = 0

    def __post_init__(self):
        if self.eps <= 0:
            raise ConfigValidationError(f"eps must be positive, got {self.eps}")
        if self.lam < 1:
            raise ConfigValidationError(f"lambda must be >= 1, got {self.lam}")
        if self.lam**2 <= 4.0 * self.C_quadratic:
            raise ConfigValidationError(f"1/lambda^2 < 1/(4C) fails: lambda = {self.lam}, C = {self.C_quadratic}")
        if not 0 <= self.t <= T_MAX:
            raise ConfigValidationError(f"t must lie in [0, {T_MAX}], got {self.t}")
        if self.C < 1 or self.C_tilde < self.C:
            raise ConfigValidationError(f"need C_tilde >= C >= 1, got C = {self.C}, C_tilde = {self.C_tilde}")
        if self.a <= 0 or self.a / self.r0**2 > 1.0 / (2.0 * self.C) + 1e-12:
            raise ConfigValidationError(f"a = {self.a} must satisfy 0 < a/r0^2 <= 1/(2C)")

    @property
    def b(self):
        return self.a / 2.0

    @property
    def c(self):
        return 1.0 / (2.0 * self.C)

    @property
    def eps_tilde(self):
        return self.C * self.eps / self.C_tilde

    def to_dict(self):
        return {
            "eps": self.eps,
            "eps_tilde": self.eps_tilde,
            "lambda": self.lam,
            "alpha": self.alpha,
            "t": self.t,
            "C": self.C,
            "C_tilde": self.C_tilde,
            "C_quadratic": self.C_quadratic,
            "a": self.a,
            "b": self.b,
            "c": self.c,
            "r0": self.r0,
            "rho_max": self.rho_max,
            "samples": self.samples,
            "ratio_bound": self.ratio_bound,
        }

    @classmethod
    def calibrated(cls, frame, eps, alpha=DEFAULT_ALPHA, t=0.1, **kwargs):
        """Constants chosen from the saddle frame: C_q from the tangential form, lambda = 2.1 sqrt(C_q), C = 4 C_q."""
        form = frame.tangential_form()
        C_quadratic = max(1.0, 1.0 / np.linalg.eigvalsh(form).min()) if form.size else 1.0
        C = 4.0 * C_quadratic
        stretch = max(frame.scale, 1.0 / frame.scale)
        r0 = 1.0 / (alpha * stretch)
        a = min(1.0 / frame.kappa, r0**2 / (2.0 * C))
        return cls(
            eps=eps,
            lam=2.1 * np.sqrt(C_quadratic),
            alpha=alpha,
            t=t,
            C=C,
            C_tilde=max(C, 2.0 / a),
            C_quadratic=C_quadratic,
            a=a,
            r0=r0,
            **kwargs,
        )


def _split(rho):
    rho = np.asarray(rho)
    n = rho.shape[-1] // 2
    return rho[..., :n], rho[..., n:]


class QuadraticSymbol:
    """p(rho) = rho^T M rho / 2 (bilinear, so it extends holomorphically)."""

    def __init__(self, matrix):
        self.matrix = np.asarray(matrix, dtype=float)

    def value(self, rho):
        rho = np.asarray(rho)
        return 0.5 * np.sum(rho * (rho @ self.matrix.T), axis=-1)

    def gradient(self, rho):
        return np.asarray(rho) @ self.matrix.T


def model_symbol(dimension, tangential_form=None):
    """1/2 (xi_n^2 - x_n^2) + 1/2 q(x', xi') in (x, xi) ordering."""
    n = dimension
    matrix = np.zeros((2 * n, 2 * n))
    matrix[n - 1, n - 1] = -1.0
    matrix[2 * n - 1, 2 * n - 1] = 1.0
    if n > 1:
        form = np.eye(2 * (n - 1)) if tangential_form is None else np.asarray(tangential_form)
        index = np.r_[0 : n - 1, n : 2 * n - 1]
        matrix[np.ix_(index, index)] = form
    return QuadraticSymbol(matrix)


class FrameSymbol:
    """p/kappa (or p_eps/kappa) pulled back to saddle-frame coordinates, exact at real and complex points."""

    def __init__(self, spec, frame, eps=0.0, alpha=DEFAULT_ALPHA):
        self.spec = spec
        self.frame = frame
        self.eps = eps
        self.alpha = alpha

    def _original(self, rho):
        y, eta = _split(rho)
        return self.frame.to_original(y), self.frame.momentum_to_original(eta)

    def _bump(self, x, xi):
        squared = np.sum((x - self.frame.saddle) ** 2, axis=-1) + np.sum(xi**2, axis=-1)
        return bump_value(self.eps, self.alpha, squared)

    def value(self, rho):
        x, xi = self._original(rho)
        p = np.sum(xi**2, axis=-1) + eval_potential(self.spec, x).value + self._bump(x, xi)
        return p / self.frame.kappa

    def gradient(self, rho):
        x, xi = self._original(rho)
        bump = self._bump(x, xi)[..., None]
        weight = -2.0 * self.alpha**2 / self.eps if self.eps else 0.0
        gx = eval_potential(self.spec, x, order=1).gradient + weight * bump * (x - self.frame.saddle)
        gxi = 2.0 * xi + weight * bump * xi
        basis, stretch = self.frame.basis, self.frame.stretch
        return np.concatenate([(gx @ basis) * stretch, (gxi @ basis) / stretch], axis=-1) / self.frame.kappa

    def without_bump(self):
        return FrameSymbol(self.spec, self.frame, 0.0, self.alpha)


class EscapeFunction:
    """G = (1 - Psi(lam x_n / sqrt(eps + x'^2 + xi^2))) x_n xi_n in frame coordinates."""

    def __init__(self, eps, lam):
        self.eps = eps
        self.lam = lam

    def _parts(self, rho):
        y, eta = _split(np.asarray(rho, dtype=float))
        S = self.eps + np.sum(y[..., :-1] ** 2, axis=-1) + np.sum(eta**2, axis=-1)
        u = self.lam * y[..., -1] / np.sqrt(S)
        return y, eta, S, u

    def prefactor(self, rho):
        return 1.0 - smooth_step(self._parts(rho)[3])

    def value(self, rho):
        y, eta, _, u = self._parts(rho)
        return (1.0 - smooth_step(u)) * y[..., -1] * eta[..., -1]

    def gradient(self, rho):
        y, eta, S, u = self._parts(rho)
        xn, xin = y[..., -1], eta[..., -1]
        G0 = xn * xin
        phi = 1.0 - smooth_step(u)
        dpsi = smooth_step_derivative(u)
        root = np.sqrt(S)
        du_y = -(self.lam * xn / root**3)[..., None] * y
        du_y[..., -1] = self.lam / root
        du_eta = -(self.lam * xn / root**3)[..., None] * eta
        gy = -(dpsi * G0)[..., None] * du_y
        geta = -(dpsi * G0)[..., None] * du_eta
        gy[..., -1] += phi * xin
        geta[..., -1] += phi * xn
        return np.concatenate([gy, geta], axis=-1)


def escape_value(cfg, rho, order=0):
    """G^{eps~} at rho, and its gradient when order = 1."""
    escape = EscapeFunction(cfg.eps_tilde, cfg.lam)
    if order == 0:
        return escape.value(rho)
    if order == 1:
        return escape.value(rho), escape.gradient(rho)
    raise ValueError(f"order must be 0 or 1, got {order}")


def hamilton_bracket(symbol, escape, rho):
    """H_p G = d_xi p . d_x G - d_x p . d_xi G."""
    gp_x, gp_xi = _split(symbol.gradient(rho))
    gG_x, gG_xi = _split(escape.gradient(rho))
    return np.sum(gp_xi * gG_x, axis=-1) - np.sum(gp_x * gG_xi, axis=-1)


def hamilton_field(escape, rho):
    gG_x, gG_xi = _split(escape.gradient(rho))
    return np.concatenate([gG_xi, -gG_x], axis=-1)


def deformed_symbol(symbol, escape, rho, t):
    """p(rho + i t H_G(rho)) by direct complex evaluation."""
    rho = np.asarray(rho, dtype=float)
    if t == 0:
        return np.asarray(symbol.value(rho), dtype=complex)
    return symbol.value(rho + 1j * t * hamilton_field(escape, rho))


def halton_half_ball(count, dimension, rho_max, seed=0):
    """Scrambled Halton points in {|rho| <= rho_max, x_n >= 0} of R^{2 dimension} by rejection."""
    sampler = qmc.Halton(d=2 * dimension, scramble=True, seed=seed)
    kept, total = [], 0
    while total < count:
        cube = 2.0 * sampler.random(max(1024, 4 * (count - total))) - 1.0
        cube = cube[np.sum(cube**2, axis=-1) <= 1.0]
        cube[:, dimension - 1] = np.abs(cube[:, dimension - 1])
        kept.append(cube)
        total += len(cube)
    return rho_max * np.concatenate(kept)[:count]


@dataclass(frozen=True)
class ConstantsReport:
    which: str
    samples: int
    hypothesis_count: int
    ratio_min: float
    ratio_max: float
    ratio_bound: float
    violations: int
    violating_samples: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    @property
    def spread(self):
        return self.ratio_max / self.ratio_min if self.ratio_min > 0 else np.inf

    @property
    def passed(self):
        return self.ratio_min > 0 and self.spread <= self.ratio_bound and self.violations == 0

    def to_dict(self):
        return {
            "which": self.which,
            "samples": self.samples,
            "hypothesis_count": self.hypothesis_count,
            "ratio_min": self.ratio_min,
            "ratio_max": self.ratio_max,
            "spread": self.spread,
            "ratio_bound": self.ratio_bound,
            "violations": self.violations,
            "violating_samples": self.violating_samples,
            "passed": self.passed,
            "config": self.config,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)


def _proposition(cfg, which, symbol, rho):
    """(hypothesis slack <= 0 means the hypothesis holds, conclusion ratio) for one proposition."""
    escape = EscapeFunction(cfg.eps_tilde, cfg.lam)
    p = symbol.without_bump() if hasattr(symbol, "without_bump") else symbol
    rho2 = np.sum(rho**2, axis=-1)
    weight = cfg.eps + rho2
    if which == "esc1":
        slack = p.value(rho).real - (-cfg.eps / cfg.C_tilde + rho2 / cfg.C)
        return slack, hamilton_bracket(p, escape, rho) / weight
    if which == "bp1":
        slack = symbol.value(rho).real - (cfg.b * cfg.eps + cfg.c * rho2)
        return slack, hamilton_bracket(symbol, escape, rho) / weight
    if which == "ltg1":
        deformed = deformed_symbol(p, escape, rho, cfg.t)
        slack = deformed.real - (-cfg.eps / cfg.C_tilde + rho2 / (2.0 * cfg.C))
        return slack, -deformed.imag / (cfg.t * weight)
    if which == "ltg2":
        deformed = deformed_symbol(symbol, escape, rho, cfg.t)
        slack = deformed.real - (cfg.b * cfg.eps + cfg.c * rho2 / 2.0)
        return slack, -deformed.imag / (cfg.t * weight)
    raise ValueError(f"unknown proposition {which!r}; expected one of {PROPOSITIONS}")


@timer_func
def check_comparability(cfg, which, symbol, sampler=None, oversample=0.1):
    """Sample the half-ball, keep the points satisfying the hypothesis of `which` and bound the conclusion ratio.

    `symbol` carries the bump (FrameSymbol with eps > 0) for bp1/ltg2; esc1/ltg1 use it without the bump.
    The points closest to the hypothesis boundary are jittered to add `oversample` * samples extra points.
    """
    if which not in PROPOSITIONS:
        raise ValueError(f"unknown proposition {which!r}; expected one of {PROPOSITIONS}")
    if which in ("ltg1", "ltg2") and cfg.t <= 0:
        raise ConfigValidationError(f"{which} needs a deformation t > 0")
    dimension = _dimension_of(symbol)
    sampler = sampler or halton_half_ball
    rho = sampler(cfg.samples, dimension, cfg.rho_max, cfg.seed)
    slack, _ = _proposition(cfg, which, symbol, rho)
    extra = int(oversample * cfg.samples)
    if extra:
        nearest = rho[np.argsort(np.abs(slack))[:extra]]
        rng = np.random.default_rng(cfg.seed)
        jittered = nearest + rng.normal(scale=1e-2 * cfg.rho_max, size=nearest.shape)
        jittered[:, dimension - 1] = np.abs(jittered[:, dimension - 1])
        jittered = jittered[np.sum(jittered**2, axis=-1) <= cfg.rho_max**2]
        rho = np.concatenate([rho, jittered])
    slack, ratio = _proposition(cfg, which, symbol, rho)
    hypothesis = slack <= 0
    if not hypothesis.any():
        raise NoHypothesisSamples(f"no sample satisfies the {which} hypothesis; the constants are miscalibrated")
    ratio = ratio[hypothesis]
    bad = ratio <= 0
    report = ConstantsReport(
        which=which,
        samples=len(rho),
        hypothesis_count=int(hypothesis.sum()),
        ratio_min=float(ratio.min()),
        ratio_max=float(ratio.max()),
        ratio_bound=cfg.ratio_bound,
        violations=int(bad.sum()),
        violating_samples=rho[hypothesis][bad][:20].tolist(),
        config=cfg.to_dict(),
    )
    logger.info(
        f"{which}: {report.hypothesis_count} hypothesis samples, ratio in [{report.ratio_min:.3g}, "
        f"{report.ratio_max:.3g}], {'PASS' if report.passed else 'FAIL'}"
    )
    return report


def _dimension_of(symbol):
    if isinstance(symbol, FrameSymbol):
        return symbol.frame.dimension
    return symbol.matrix.shape[0] // 2


def bump_alpha_threshold(spec, frame, cfg, max_doublings=8):
    """Double alpha (keeping a, b, c, C fixed) until bp1 fails; returns the first failing alpha or None."""
    alpha = cfg.alpha
    for _ in range(max_doublings):
        alpha *= 2.0
        trial = replace(cfg, alpha=alpha)
        try:
            report = check_comparability(trial, "bp1", FrameSymbol(spec, frame, cfg.eps, alpha))
        except NoHypothesisSamples:
            return alpha
        if not report.passed:
            return alpha
    return None


def _hessian_norm(escape, rho, step=1e-6):
    dimension = rho.shape[-1]
    columns = []
    for k in range(dimension):
        shift = np.zeros(dimension)
        shift[k] = step
        columns.append((escape.gradient(rho + shift) - escape.gradient(rho - shift)) / (2.0 * step))
    return np.linalg.norm(np.stack(columns, axis=-1), axis=(-2, -1))


def escape_invariants(cfg, symbol, sampler=None):
    """Measured constants of the derivative scaling, the cutoff-region lower bound, the bump minorant and
    the bump bracket perturbation; every entry is a maximum (or a violation count) over the samples."""
    dimension = _dimension_of(symbol)
    sampler = sampler or halton_half_ball
    rho = sampler(min(cfg.samples, 20_000), dimension, cfg.rho_max, cfg.seed)
    escape = EscapeFunction(cfg.eps_tilde, cfg.lam)
    p = symbol.without_bump() if hasattr(symbol, "without_bump") else symbol
    rho2 = np.sum(rho**2, axis=-1)
    weight = cfg.eps_tilde + rho2
    G, grad = escape.value(rho), escape.gradient(rho)
    cutoff = escape.prefactor(rho) < 1.0
    lower = p.value(rho).real - (-cfg.eps_tilde / cfg.C + rho2 / cfg.C)
    result = {
        "derivative_scaling": [
            float(np.max(np.abs(G) / weight)),
            float(np.max(np.linalg.norm(grad, axis=-1) / np.sqrt(weight))),
            float(np.max(_hessian_norm(escape, rho))),
        ],
        "cutoff_lower_bound_violations": int(np.count_nonzero(lower[cutoff] < -1e-12)),
    }
    if isinstance(symbol, FrameSymbol) and symbol.eps:
        bump = symbol.value(rho).real - p.value(rho).real
        minorant = cfg.a * (cfg.eps - rho2 / cfg.r0**2)
        perturbation = np.abs(hamilton_bracket(symbol, escape, rho) - hamilton_bracket(p, escape, rho))
        result["bump_minorant_violations"] = int(np.count_nonzero(bump < minorant - 1e-12))
        result["bracket_perturbation"] = float(np.max(perturbation / (cfg.alpha * (cfg.eps + rho2))))
    return result


UNIFORMITY_EPS = (0.1, 0.05, 0.025)


@dataclass(frozen=True)
class UniformityReport:
    """Per-eps comparability reports and derivative-scaling maxima, judged against one shared constant."""

    eps_values: tuple
    reports: dict
    derivative_scaling: list
    ratio_bound: float

    def spread(self, which):
        """max over eps of ratio_max divided by min over eps of ratio_min."""
        reports = self.reports[which]
        low = min(report.ratio_min for report in reports)
        high = max(report.ratio_max for report in reports)
        return high / low if low > 0 else np.inf

    def scaling_spread(self):
        values = np.asarray(self.derivative_scaling, dtype=float)
        low, high = values.min(axis=0), values.max(axis=0)
        return float(np.max(np.where(low > 0, high / np.where(low > 0, low, 1.0), np.inf)))

    @property
    def passed(self):
        uniform = all(self.spread(which) <= self.ratio_bound for which in self.reports)
        clean = all(report.violations == 0 for reports in self.reports.values() for report in reports)
        return uniform and clean and self.scaling_spread() <= self.ratio_bound

    def to_dict(self):
        return {
            "eps_values": list(self.eps_values),
            "spreads": {which: self.spread(which) for which in self.reports},
            "derivative_scaling": self.derivative_scaling,
            "scaling_spread": self.scaling_spread(),
            "ratio_bound": self.ratio_bound,
            "passed": self.passed,
        }


@timer_func
def eps_uniformity(spec, frame, eps_values=UNIFORMITY_EPS, alpha=DEFAULT_ALPHA, t=0.1, which=PROPOSITIONS, **kwargs):
    """Recalibrate at every eps and check that one constant covers all of them."""
    reports = {name: [] for name in which}
    scaling = []
    ratio_bound = None
    for eps in eps_values:
        cfg = EscapeConfig.calibrated(frame, eps, alpha, t=t, **kwargs)
        symbol = FrameSymbol(spec, frame, eps, alpha)
        for name in which:
            reports[name].append(check_comparability(cfg, name, symbol))
        scaling.append(escape_invariants(cfg, symbol)["derivative_scaling"])
        ratio_bound = cfg.ratio_bound
    report = UniformityReport(tuple(eps_values), reports, scaling, ratio_bound)
    logger.info(f"eps uniformity over {list(eps_values)}: {'PASS' if report.passed else 'FAIL'}")
    return report


if __name__ == "__main__":
    pass
