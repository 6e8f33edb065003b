"""Squared-exponential Gaussian-process regression.

Kernel evaluation, fitting (Cholesky factorization of the noisy kernel
matrix), posterior mean/covariance prediction, and joint sampling of the
posterior process on finite grids.  The prior mean is identically zero and
observation noise is homoscedastic Gaussian with standard deviation
``theta.noise``.

Everything here is raw-space: values are used exactly as given.  Callers
with large objective offsets should standardize before fitting (the
optimization driver in :mod:`bgopt.optimize` does this automatically).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular

__all__ = [
    "Dataset",
    "Hyperparameters",
    "PosteriorGp",
    "NumericalError",
    "se_cov",
    "cov_matrix",
    "cross_cov",
    "gp_fit",
    "posterior_mean",
    "posterior_mean_many",
    "posterior_cov",
    "posterior_var_many",
    "point_predict",
    "sample_functions",
]

logger = logging.getLogger(__name__)

# Relative jitter ladder: eta * signal**2 is added to the diagonal before
# factorization, escalating x10 on failure up to JITTER_MAX.
JITTER_START = 1e-10
JITTER_MAX = 1e-4

# Predicted variances below -NEG_VAR_TOL * signal**2 are clamped to zero.
NEG_VAR_TOL = 1e-8


class NumericalError(RuntimeError):
    """Cholesky factorization failed even at the maximum jitter level."""

    def __init__(self, message: str, jitter: float):
        super().__init__(f"{message} (last jitter tried: {jitter:g})")
        self.jitter = jitter


def _as_points(x) -> np.ndarray:
    """Coerce to an (n, d) float array; a 1-D array is read as n points in d=1."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ValueError(f"points must be a 2-D array, got shape {arr.shape}")
    return arr


def _as_single_point(x, dim: int) -> np.ndarray:
    arr = np.asarray(x, dtype=float).reshape(-1)
    if arr.size != dim:
        raise ValueError(f"point has dimension {arr.size}, expected {dim}")
    return arr


@dataclass(frozen=True)
class Hyperparameters:
    """Signal strength, per-dimension lengthscales, and noise scale.

    Signal and lengthscales must be strictly positive; the noise standard
    deviation may be zero (the fitting jitter keeps factorizations viable).
    """

    signal: float
    lengthscales: np.ndarray
    noise: float

    def __post_init__(self):
        ells = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        object.__setattr__(self, "signal", float(self.signal))
        object.__setattr__(self, "lengthscales", ells)
        object.__setattr__(self, "noise", float(self.noise))
        if ells.ndim != 1 or ells.size < 1:
            raise ValueError("lengthscales must be 1-D with at least one entry")
        if not (np.isfinite(self.signal) and self.signal > 0.0):
            raise ValueError("signal must be strictly positive and finite")
        if not (np.all(np.isfinite(ells)) and np.all(ells > 0.0)):
            raise ValueError("lengthscales must be strictly positive and finite")
        if not (np.isfinite(self.noise) and self.noise >= 0.0):
            raise ValueError("noise must be nonnegative and finite")

    @property
    def dim(self) -> int:
        return self.lengthscales.size


@dataclass(frozen=True)
class Dataset:
    """Observed design points (n, d) and the noisy objective values (n,).

    An empty dataset (n = 0) is accepted and represents the prior state; the
    points array must still carry the problem dimension in its second axis.
    """

    points: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        pts = _as_points(self.points)
        vals = np.atleast_1d(np.asarray(self.values, dtype=float))
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "values", vals)
        if pts.shape[1] < 1:
            raise ValueError("points must have dimension d >= 1")
        if vals.ndim != 1 or vals.shape[0] != pts.shape[0]:
            raise ValueError("points and values must have equal length")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points must be finite")
        if not np.all(np.isfinite(vals)):
            raise ValueError("values must be finite")

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def append(self, x, y: float) -> "Dataset":
        """Return a new dataset with one extra observation."""
        x = _as_single_point(x, self.dim)
        return Dataset(
            np.vstack([self.points, x[None, :]]),
            np.append(self.values, float(y)),
        )


def se_cov(x, x2, psi: Hyperparameters) -> float:
    """Squared-exponential covariance s^2 exp(-1/2 sum_i (x_i-x2_i)^2/l_i^2)."""
    a = _as_single_point(x, psi.dim)
    b = _as_single_point(x2, psi.dim)
    z = (a - b) / psi.lengthscales
    return psi.signal**2 * float(np.exp(-0.5 * np.dot(z, z)))


def _scaled_sqdist(a: np.ndarray, b: np.ndarray, ells: np.ndarray) -> np.ndarray:
    """Sum over dimensions of squared distances scaled by lengthscales."""
    acc = np.zeros((a.shape[0], b.shape[0]))
    for k in range(a.shape[1]):
        diff = (a[:, k, None] - b[None, :, k]) / ells[k]
        acc += diff * diff
    return acc


def cov_matrix(points, psi: Hyperparameters) -> np.ndarray:
    """Kernel matrix over a point set; symmetric with diagonal signal^2."""
    pts = _as_points(points)
    if pts.shape[1] != psi.dim:
        raise ValueError(f"points have dimension {pts.shape[1]}, expected {psi.dim}")
    return psi.signal**2 * np.exp(-0.5 * _scaled_sqdist(pts, pts, psi.lengthscales))


def cross_cov(a, b, psi: Hyperparameters) -> np.ndarray:
    """Kernel matrix between two point sets, shape (len(a), len(b))."""
    pa, pb = _as_points(a), _as_points(b)
    if pa.shape[1] != psi.dim or pb.shape[1] != psi.dim:
        raise ValueError("point dimension does not match the hyperparameters")
    return psi.signal**2 * np.exp(-0.5 * _scaled_sqdist(pa, pb, psi.lengthscales))


@dataclass(frozen=True)
class PosteriorGp:
    """Fitted surrogate for one hyperparameter setting.

    ``chol`` is the lower Cholesky factor of
    K_n + (noise^2 + jitter*signal^2) I and ``alpha`` solves that matrix
    against the observed values.  Instances are immutable after
    construction and safe to share across concurrent readers.
    """

    dataset: Dataset
    theta: Hyperparameters
    chol: np.ndarray
    alpha: np.ndarray
    jitter: float

    @property
    def n(self) -> int:
        return self.dataset.n


def _factorize_spd(K: np.ndarray, signal: float) -> tuple[np.ndarray, float]:
    """Lower-Cholesky factor of K + eta*signal^2*I, escalating eta on failure.

    The input matrix is modified in place (its diagonal is bumped); pass a
    copy if the original is still needed.
    """
    n = K.shape[0]
    eta = JITTER_START
    prev = 0.0
    while True:
        K.flat[:: n + 1] += (eta - prev) * signal**2
        try:
            return cholesky(K, lower=True, check_finite=False), eta
        except np.linalg.LinAlgError:
            if eta >= JITTER_MAX:
                raise NumericalError("covariance factorization failed", eta) from None
            prev = eta
            eta *= 10.0


def gp_fit(data: Dataset, theta: Hyperparameters) -> PosteriorGp:
    """Factorize the noisy kernel matrix and precompute prediction weights.

    Raises :class:`NumericalError` if the factorization fails even after
    the jitter ladder is exhausted.
    """
    if data.dim != theta.dim:
        raise ValueError(
            f"data dimension {data.dim} does not match hyperparameters ({theta.dim})"
        )
    if data.n == 0:
        return PosteriorGp(
            data, theta, np.zeros((0, 0)), np.zeros(0), JITTER_START
        )
    K = cov_matrix(data.points, theta)
    K.flat[:: data.n + 1] += theta.noise**2
    L, eta = _factorize_spd(K, theta.signal)
    alpha = cho_solve((L, True), data.values, check_finite=False)
    return PosteriorGp(data, theta, L, alpha, eta)


def posterior_mean_many(gp: PosteriorGp, points) -> np.ndarray:
    """Posterior mean at each row of ``points``."""
    pts = _as_points(points)
    if pts.shape[1] != gp.theta.dim:
        raise ValueError("query dimension does not match the fitted model")
    if gp.n == 0:
        return np.zeros(pts.shape[0])
    return cross_cov(pts, gp.dataset.points, gp.theta) @ gp.alpha


def posterior_mean(gp: PosteriorGp, x) -> float:
    """Posterior mean k_n(x)^T (K_n + sigma^2 I)^-1 y at a single point."""
    return float(posterior_mean_many(gp, _as_single_point(x, gp.theta.dim)[None, :])[0])


def posterior_var_many(gp: PosteriorGp, points) -> np.ndarray:
    """Posterior marginal variance at each row of ``points``.

    Values in [-NEG_VAR_TOL*signal^2, 0) are returned as-is (floating-point
    dust); anything more negative is clamped to zero with a warning.
    """
    pts = _as_points(points)
    s2 = gp.theta.signal**2
    if gp.n == 0:
        return np.full(pts.shape[0], s2)
    k = cross_cov(gp.dataset.points, pts, gp.theta)
    v = solve_triangular(gp.chol, k, lower=True, check_finite=False)
    var = s2 - np.einsum("ij,ij->j", v, v)
    bad = var < -NEG_VAR_TOL * s2
    if np.any(bad):
        logger.warning(
            "clamping %d negative predicted variances (min %.3e) to zero",
            int(bad.sum()),
            float(var.min()),
        )
        var[bad] = 0.0
    return var


def posterior_cov(gp: PosteriorGp, x, x2) -> float:
    """Posterior covariance k(x,x2) - k_n(x)^T (K_n + sigma^2 I)^-1 k_n(x2)."""
    a = _as_single_point(x, gp.theta.dim)
    b = _as_single_point(x2, gp.theta.dim)
    val = se_cov(a, b, gp.theta)
    if gp.n > 0:
        ka = cross_cov(gp.dataset.points, a[None, :], gp.theta)[:, 0]
        kb = cross_cov(gp.dataset.points, b[None, :], gp.theta)[:, 0]
        va = solve_triangular(gp.chol, ka, lower=True, check_finite=False)
        vb = solve_triangular(gp.chol, kb, lower=True, check_finite=False)
        val -= float(va @ vb)
    if np.array_equal(a, b) and val < -NEG_VAR_TOL * gp.theta.signal**2:
        logger.warning("clamping negative predicted variance %.3e to zero", val)
        return 0.0
    return val


def point_predict(gp: PosteriorGp, x) -> tuple[float, float]:
    """Gaussian point-predictive parameters (mean, variance) at ``x``."""
    mean = posterior_mean(gp, x)
    var = max(0.0, posterior_cov(gp, x, x))
    return mean, var


def sample_functions(
    gp: PosteriorGp, grid, m: int, rng: np.random.Generator
) -> np.ndarray:
    """Draw ``m`` joint samples of the posterior process on ``grid``.

    Returns an (m, len(grid)) array; row j is one sampled function
    evaluated at every grid point.  The grid covariance is jitter-stabilized
    before factorization.
    """
    pts = _as_points(grid)
    if pts.shape[0] < 1:
        raise ValueError("grid must be nonempty")
    if int(m) < 1:
        raise ValueError("m must be >= 1")
    mean = posterior_mean_many(gp, pts)
    C = cov_matrix(pts, gp.theta)
    if gp.n > 0:
        k = cross_cov(gp.dataset.points, pts, gp.theta)
        v = solve_triangular(gp.chol, k, lower=True, check_finite=False)
        C -= v.T @ v
        C = 0.5 * (C + C.T)
    L, _ = _factorize_spd(C, gp.theta.signal)
    z = rng.standard_normal((pts.shape[0], int(m)))
    return (mean[:, None] + L @ z).T
