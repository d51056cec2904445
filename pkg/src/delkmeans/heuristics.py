"""Data-size rules of thumb for the quantization granularity and tree width."""

from __future__ import annotations

import math


def nearest_power_of_two(x: float) -> int:
    """Closest power of two to ``x`` (linear distance, ties go up)."""
    if x <= 1:
        return 1
    lo = 2 ** math.floor(math.log2(x))
    hi = 2 * lo
    return hi if hi - x <= x - lo else lo


def heuristic_width(n: int) -> int:
    """Leaves for a depth-1 tree: ``n**0.3`` rounded to the nearest power of two."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return nearest_power_of_two(n**0.3)


def heuristic_epsilon(n: int, k: int, d: int) -> float:
    """Lattice granularity ``2 ** round(-log10(n / (k d^1.5)) - 3)``.

    The exponent is rounded half to even.
    """
    if n < 1 or k < 1 or d < 1:
        raise ValueError("n, k and d must be >= 1")
    exponent = round(-math.log10(n / (k * d**1.5)) - 3)
    return 2.0**exponent
