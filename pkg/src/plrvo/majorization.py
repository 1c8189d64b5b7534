"""The majorization set that dominates every l2-clipped gradient.

The set x_i = C * (sqrt(i) - sqrt(i-1)) weakly majorizes the absolute
coordinates of any vector with l2 norm at most C: its partial sums telescope
to exactly C * sqrt(i), while the AM-QM inequality bounds the gradient's
partial sums by the same quantity. Coordinates are evaluated lazily by index
so the set is usable at model scale (1e8 coordinates) without materializing
anything.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class MajorizationSet:
    clip_C: float
    dim_n: int

    def __post_init__(self):
        if not self.clip_C > 0:
            raise ValueError(f"clip_C must be > 0, got {self.clip_C}")
        if not (isinstance(self.dim_n, int) and self.dim_n >= 1):
            raise ValueError(f"dim_n must be a positive integer, got {self.dim_n}")

    def coordinate(self, i: int) -> float:
        """x_i = C (sqrt(i) - sqrt(i-1)), via the cancellation-free form
        C / (sqrt(i) + sqrt(i-1)) (algebraically identical, accurate at any i)."""
        if not 1 <= i <= self.dim_n:
            raise IndexError(f"index {i} outside [1, {self.dim_n}]")
        return self.clip_C / (np.sqrt(i) + np.sqrt(i - 1.0))

    def coordinates(self, lo: int, hi: int) -> np.ndarray:
        """Vector of x_i for i in [lo, hi], inclusive. Streaming-friendly."""
        if not (1 <= lo <= hi <= self.dim_n):
            raise IndexError(f"range [{lo}, {hi}] outside [1, {self.dim_n}]")
        i = np.arange(lo, hi + 1, dtype=np.float64)
        return self.clip_C / (np.sqrt(i) + np.sqrt(i - 1.0))

    def weakly_majorizes(self, g: np.ndarray) -> bool:
        """True iff the sorted |g| is weakly majorized from below by the set,
        i.e. every descending partial sum of |g| stays under C * sqrt(i)."""
        g = np.asarray(g, dtype=np.float64)
        if g.shape != (self.dim_n,):
            raise ValueError(f"expected a vector of length {self.dim_n}, got shape {g.shape}")
        partial = np.cumsum(np.sort(np.abs(g))[::-1])
        bound = self.clip_C * np.sqrt(np.arange(1, self.dim_n + 1, dtype=np.float64))
        return bool(np.all(partial <= bound + 1e-12))
