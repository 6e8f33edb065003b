"""Epistemic uncertainty about the optimum's location and value.

Pushes posterior uncertainty (function draws per hyperparameter particle)
through the min and argmin operators on a finite grid, giving sampled
optimal values and optimizer locations.  Empirical quantiles of the sampled
optimal values yield predictive bounds on the optimal objective (PBOO).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .design import BoxBounds
from .gp import Dataset, PosteriorGp, _as_points, gp_fit, sample_functions
from .hyper import ParticleSet

__all__ = [
    "GRID_CAP",
    "QDistribution",
    "q_distribution",
    "q_distribution_from_fits",
    "pboo",
    "argmin_histogram",
]

# Joint sampling factorizes the grid covariance (O(grid^3)); refuse grids
# beyond this size.
GRID_CAP = 2000


@dataclass(frozen=True)
class QDistribution:
    """Sampled optimal values and locations over a fixed evaluation grid."""

    min_samples: np.ndarray
    argmin_samples: np.ndarray
    grid: np.ndarray

    def __post_init__(self):
        grid = _as_points(self.grid)
        mins = np.atleast_1d(np.asarray(self.min_samples, dtype=float))
        args = np.asarray(self.argmin_samples, dtype=float)
        if args.size == 0:
            args = args.reshape(0, grid.shape[1])
        else:
            args = _as_points(args)
        object.__setattr__(self, "min_samples", mins)
        object.__setattr__(self, "argmin_samples", args)
        object.__setattr__(self, "grid", grid)
        if args.shape[0] != mins.shape[0]:
            raise ValueError("min_samples and argmin_samples must have equal length")


def q_distribution_from_fits(
    fits: list[PosteriorGp],
    grid,
    m: int = 100,
    rng: np.random.Generator | None = None,
) -> QDistribution:
    """Q-operator samples from already-fitted per-particle surrogates.

    For each fit, draws ``m`` joint function samples on ``grid`` and records
    the grid-restricted minimum and its location, in fit order.
    """
    pts = _as_points(grid)
    if pts.shape[0] < 1:
        raise ValueError("grid must be nonempty")
    if pts.shape[0] > GRID_CAP:
        raise ValueError(
            f"grid of {pts.shape[0]} points exceeds the joint-sampling cap ({GRID_CAP})"
        )
    if int(m) < 1:
        raise ValueError("m must be >= 1")
    if not fits:
        raise ValueError("fits must be nonempty")
    if rng is None:
        rng = np.random.default_rng()
    mins = []
    arg_idx = []
    for fit in fits:
        F = sample_functions(fit, pts, m, rng)
        j = np.argmin(F, axis=1)
        mins.append(F[np.arange(F.shape[0]), j])
        arg_idx.append(j)
    idx = np.concatenate(arg_idx)
    return QDistribution(np.concatenate(mins), pts[idx], pts)


def q_distribution(
    particles: ParticleSet,
    data: Dataset,
    grid,
    m: int = 100,
    rng: np.random.Generator | None = None,
) -> QDistribution:
    """Fit one surrogate per particle and sample min/argmin on the grid."""
    fits = [gp_fit(data, theta) for theta in particles]
    return q_distribution_from_fits(fits, grid, m=m, rng=rng)


def pboo(q: QDistribution, level: float = 0.95) -> tuple[float, float]:
    """Central empirical quantile interval of the sampled optimal values.

    Quantiles use linear interpolation between order statistics so traces
    are bit-reproducible.
    """
    if q.min_samples.size == 0:
        raise ValueError("cannot compute bounds from an empty sample set")
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie strictly inside (0, 1)")
    lo = float(np.quantile(q.min_samples, (1.0 - level) / 2.0, method="linear"))
    hi = float(np.quantile(q.min_samples, (1.0 + level) / 2.0, method="linear"))
    return lo, hi


def argmin_histogram(
    q: QDistribution, bins: int, bounds: BoxBounds | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Histogram masses of the sampled optimizer locations.

    Bin edges are uniform over the box (``bounds`` if given, else the grid's
    per-dimension span).  For d = 1 returns (masses, edges) with shapes
    (bins,) and (bins+1,); for d > 1 each dimension is marginalized
    separately and the shapes gain a leading d axis.
    """
    if int(bins) < 1:
        raise ValueError("bins must be >= 1")
    samples = q.argmin_samples
    if samples.shape[0] == 0:
        raise ValueError("cannot histogram an empty sample set")
    d = samples.shape[1]
    if bounds is not None:
        lo, hi = bounds.lower, bounds.upper
        if bounds.dim != d:
            raise ValueError("bounds dimension does not match the samples")
    else:
        lo, hi = q.grid.min(axis=0), q.grid.max(axis=0)
    masses = np.empty((d, int(bins)))
    edges = np.empty((d, int(bins) + 1))
    for k in range(d):
        counts, e = np.histogram(samples[:, k], bins=int(bins), range=(lo[k], hi[k]))
        masses[k] = counts / samples.shape[0]
        edges[k] = e
    if d == 1:
        return masses[0], edges[0]
    return masses, edges
