"""Latin hypercube designs over box-bounded design spaces."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["BoxBounds", "lhs"]


@dataclass(frozen=True)
class BoxBounds:
    """Axis-aligned box: lower_i < upper_i for every dimension."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if lo.ndim != 1 or lo.shape != hi.shape or lo.size < 1:
            raise ValueError("lower and upper must be 1-D arrays of equal length")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("bounds must be finite")
        if not np.all(lo < hi):
            raise ValueError("every lower bound must be strictly below its upper bound")

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def widths(self) -> np.ndarray:
        return self.upper - self.lower

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float).reshape(-1)
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))


def lhs(n_points: int, bounds: BoxBounds, rng: np.random.Generator | None = None) -> np.ndarray:
    """Jittered Latin hypercube sample, shape (n_points, d).

    Per dimension the box is split into ``n_points`` equal strata; each
    stratum receives exactly one point, placed uniformly at random inside
    it, with stratum permutations independent across dimensions.
    """
    n = int(n_points)
    if n < 1:
        raise ValueError("n_points must be >= 1")
    if rng is None:
        rng = np.random.default_rng()
    out = np.empty((n, bounds.dim))
    for k in range(bounds.dim):
        strata = rng.permutation(n)
        jitter = rng.random(n)
        out[:, k] = bounds.lower[k] + bounds.widths[k] * (strata + jitter) / n
    return out
