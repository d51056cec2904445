"""Random-phase uniform lattice quantization.

The lattice is ``{eps * (theta + j) : j in Z^d}``. It is an axis-aligned
product of 1-D grids, so the nearest vertex is found coordinate by
coordinate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def sample_phase(d: int, rng: np.random.Generator) -> np.ndarray:
    """``d`` independent phases, uniform on [-1/2, 1/2)."""
    if d < 1:
        raise ValueError("d must be >= 1")
    return rng.uniform(-0.5, 0.5, size=d)


def lattice_index(x, epsilon: float, theta) -> np.ndarray:
    """Integer coordinates of the nearest vertex; halves round toward +inf."""
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("cannot quantize non-finite values")
    return np.floor(x / epsilon - theta + 0.5)


def quantize(x, epsilon: float, theta) -> np.ndarray:
    """Nearest vertex of the ``epsilon``-lattice shifted by ``theta``.

    Works on a single point or on an array of points (last axis = d).
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    theta = np.asarray(theta, dtype=np.float64)
    return epsilon * (theta + lattice_index(x, epsilon, theta))


def boundary_margin(x, epsilon: float, theta) -> np.ndarray:
    """Distance, in lattice units, from ``x`` to the nearest rounding boundary.

    0 means ``x`` sits exactly on a cell face; 0.5 means it is a vertex.
    """
    t = np.asarray(x, dtype=np.float64) / epsilon - np.asarray(theta)
    return np.abs(t - np.floor(t) - 0.5)


@dataclass
class LatticeQuantizer:
    epsilon: float
    theta: np.ndarray

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=np.float64)
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if np.any(np.abs(self.theta) > 0.5):
            raise ValueError("phase components must lie in [-1/2, 1/2]")

    @classmethod
    def random(cls, epsilon: float, d: int, rng: np.random.Generator) -> LatticeQuantizer:
        return cls(epsilon, sample_phase(d, rng))

    def __call__(self, x) -> np.ndarray:
        return quantize(x, self.epsilon, self.theta)
