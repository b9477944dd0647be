from dataclasses import dataclass, replace

import numpy as np

from src.island_resonances.utils.errors import ConfigValidationError

DESK_MAX_SIDE = 2304
MAX_THETA = 0.15


@dataclass(frozen=True)
class GridSpec:
    """Periodic collocation grid on the box [-L, L)^n together with the semiclassical h and the dilation angle."""

    dimension: int
    half_width: float
    points: int
    h: float = 0.05
    theta: float = 0.0
    max_side: int = DESK_MAX_SIDE

    def __post_init__(self):
        if self.dimension not in (1, 2):
            raise ConfigValidationError(f"dimension must be 1 or 2, got {self.dimension}")
        if self.points < 4 or self.points % 2:
            raise ConfigValidationError(f"points must be an even integer >= 4, got {self.points}")
        if self.half_width <= 0:
            raise ConfigValidationError("half_width must be positive")
        if self.h <= 0:
            raise ConfigValidationError("h must be positive")
        if not 0.0 <= self.theta <= MAX_THETA:
            raise ConfigValidationError(f"theta must lie in [0, 0.15], got {self.theta}")

    @property
    def spacing(self):
        return 2.0 * self.half_width / self.points

    @property
    def shape(self):
        return (self.points,) * self.dimension

    @property
    def side(self):
        return self.points**self.dimension

    @property
    def cell_volume(self):
        return self.spacing**self.dimension

    def axis(self):
        return -self.half_width + self.spacing * np.arange(self.points)

    def mesh(self):
        axes = [self.axis()] * self.dimension
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def nodes(self):
        """Node coordinates as an (N^n, n) array in row-major order."""
        return self.mesh().reshape(-1, self.dimension)

    def wavenumbers(self):
        return 2.0 * np.pi * np.fft.fftfreq(self.points, d=self.spacing)

    def half_step(self):
        """Grid on the same box with twice the resolution; node 2i coincides with node i of self."""
        return replace(self, points=2 * self.points, max_side=max(self.max_side, (2 * self.points) ** self.dimension))

    def with_theta(self, theta):
        return replace(self, theta=theta)

    def with_h(self, h):
        return replace(self, h=h)

    def check_matrix_size(self):
        if self.side > self.max_side:
            raise ConfigValidationError(
                f"matrix side {self.side} exceeds the configured cap {self.max_side}; lower points or raise max_side"
            )

    def nearest_index(self, x):
        """Flat index of the node nearest to each point of x (shape (..., n)), with periodic wrap."""
        x = np.asarray(x, dtype=float)
        idx = np.rint((x + self.half_width) / self.spacing).astype(int) % self.points
        return np.ravel_multi_index(tuple(np.moveaxis(idx, -1, 0)), self.shape)

    def to_dict(self):
        return {
            "dimension": self.dimension,
            "half_width": self.half_width,
            "points": self.points,
            "h": self.h,
            "theta": self.theta,
        }


def wrapped_offsets(points):
    """Minimal-image index offsets i - j on a periodic axis of `points` nodes, as a (points, points) array."""
    i = np.arange(points)
    return (i[:, None] - i[None, :] + points // 2) % points - points // 2
