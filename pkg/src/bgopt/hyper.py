"""Hyperparameter inference for the zero-mean SE Gaussian process.

Priors, marginal likelihood, MAP estimation, and an adaptive random-walk
Metropolis sampler that returns a particle approximation of the
hyperparameter posterior.

The chain runs in log-parameter space (all components are positive scales),
with the change-of-variables Jacobian added to the target.  Log-components
are confined to [-LOG_BOUND, LOG_BOUND]: the scale priors are improper, and
the hard bounds guarantee a proper target even for degenerate data.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import cho_solve, cholesky
from scipy.optimize import minimize

from .gp import JITTER_MAX, JITTER_START, Dataset, Hyperparameters, NumericalError

__all__ = [
    "LOG_BOUND",
    "McmcConfig",
    "McmcDiagnostics",
    "ParticleSet",
    "log_prior",
    "log_marginal_likelihood",
    "log_posterior",
    "map_estimate",
    "sample_particles",
]

logger = logging.getLogger(__name__)

LOG_BOUND = 10.0

_LOG_2PI = math.log(2.0 * math.pi)

# Haario-style adaptive Metropolis constants: proposal covariance is
# 2.38^2/dim * (running covariance + ADAPT_REG * I), adapted from step
# ADAPT_START onward during burn-in and frozen afterwards.
ADAPT_START = 100
ADAPT_REG = 1e-6
INITIAL_PROPOSAL_SCALE = 0.1


@dataclass(frozen=True)
class McmcConfig:
    """Chain budget: burn-in, post-burn steps, thinning, particle count."""

    n_particles: int = 90
    burn_in: int = 10_000
    post_burn_steps: int = 90_000
    thin: int = 1_000
    seed: int = 0

    def __post_init__(self):
        if self.n_particles < 1:
            raise ValueError("n_particles must be >= 1")
        if self.burn_in < 0 or self.post_burn_steps < 1 or self.thin < 1:
            raise ValueError("chain lengths must be positive")
        if self.post_burn_steps // self.thin < self.n_particles:
            raise ValueError(
                "post_burn_steps/thin must record at least n_particles states"
            )


@dataclass(frozen=True)
class McmcDiagnostics:
    acceptance_rate: float
    chain_length: int
    thin: int
    warnings: tuple[str, ...] = ()


@dataclass(frozen=True)
class ParticleSet:
    """Posterior hyperparameter samples plus chain diagnostics."""

    particles: tuple[Hyperparameters, ...]
    diagnostics: McmcDiagnostics

    def __post_init__(self):
        if len(self.particles) < 1:
            raise ValueError("a particle set needs at least one particle")
        d = self.particles[0].dim
        if any(p.dim != d for p in self.particles):
            raise ValueError("all particles must share the same dimension")

    def __len__(self) -> int:
        return len(self.particles)

    def __iter__(self):
        return iter(self.particles)

    @property
    def dim(self) -> int:
        return self.particles[0].dim

    def to_array(self) -> np.ndarray:
        """(N, d+2) array with columns signal, lengthscales..., noise."""
        return np.array(
            [[p.signal, *p.lengthscales, p.noise] for p in self.particles]
        )

    def save(self, path) -> None:
        """One particle per line: signal, lengthscales..., noise."""
        d = self.dim
        header = "signal " + " ".join(f"ell_{i+1}" for i in range(d)) + " noise"
        np.savetxt(Path(path), self.to_array(), header=header)

    @classmethod
    def load(cls, path) -> "ParticleSet":
        arr = np.atleast_2d(np.loadtxt(Path(path)))
        particles = tuple(
            Hyperparameters(row[0], row[1:-1], row[-1]) for row in arr
        )
        diag = McmcDiagnostics(
            acceptance_rate=float("nan"), chain_length=0, thin=0,
            warnings=("loaded from file; no chain diagnostics",),
        )
        return cls(particles, diag)


def _log_prior_parts(signal: float, ells: np.ndarray, noise: float) -> float:
    return -math.log(signal) - math.log(noise) - float(np.sum(np.log1p(ells * ells)))


def log_prior(theta: Hyperparameters) -> float:
    """Unnormalized log prior: Jeffreys on the scales, 1/(1+l^2) lengthscales.

    log p = -log s - log sigma - sum_i log(1 + l_i^2), constant zero.
    """
    if theta.noise <= 0.0:
        raise ValueError("log_prior requires strictly positive noise")
    return _log_prior_parts(theta.signal, theta.lengthscales, theta.noise)


class _PosteriorDensity:
    """Repeated-evaluation engine for the hyperparameter posterior.

    Precomputes the per-dimension squared-distance tensor of the data once
    so each evaluation is one kernel build plus one Cholesky.
    """

    def __init__(self, data: Dataset):
        self.data = data
        self.n = data.n
        self.d = data.dim
        self.y = data.values
        pts = data.points
        sqd = np.empty((self.d, self.n, self.n))
        for k in range(self.d):
            diff = pts[:, k, None] - pts[None, :, k]
            sqd[k] = diff * diff
        self.sqd = sqd

    def log_marginal(self, signal: float, ells: np.ndarray, noise: float) -> float:
        """log N(y | 0, K + sigma^2 I), jittered exactly like gp_fit."""
        n = self.n
        if n == 0:
            return 0.0
        Q = np.tensordot(0.5 / (ells * ells), self.sqd, axes=1)
        np.exp(np.negative(Q, out=Q), out=Q)
        Q *= signal**2
        eta = JITTER_START
        prev = 0.0
        while True:
            Q.flat[:: n + 1] += noise**2 + (eta - prev) * signal**2
            try:
                L = cholesky(Q, lower=True, check_finite=False)
                break
            except np.linalg.LinAlgError:
                if eta >= JITTER_MAX:
                    raise NumericalError(
                        "marginal-likelihood factorization failed", eta
                    ) from None
                # the noise term was already added; only escalate the jitter
                Q.flat[:: n + 1] -= noise**2
                prev = eta
                eta *= 10.0
        alpha = cho_solve((L, True), self.y, check_finite=False)
        return float(
            -0.5 * (self.y @ alpha)
            - np.sum(np.log(L.diagonal()))
            - 0.5 * n * _LOG_2PI
        )

    def log_posterior(self, signal: float, ells: np.ndarray, noise: float) -> float:
        return self.log_marginal(signal, ells, noise) + _log_prior_parts(
            signal, ells, noise
        )

    def neg_log_posterior_z(self, z: np.ndarray) -> float:
        """Objective for MAP search in log space (no Jacobian)."""
        theta = np.exp(z)
        try:
            return -self.log_posterior(theta[0], theta[1:-1], theta[-1])
        except NumericalError:
            return 1e25

    def log_target_z(self, z: np.ndarray) -> float:
        """MCMC target in log space: posterior plus the exp-Jacobian."""
        if np.any(np.abs(z) > LOG_BOUND):
            return -np.inf
        theta = np.exp(z)
        try:
            lp = self.log_posterior(theta[0], theta[1:-1], theta[-1])
        except NumericalError:
            return -np.inf
        return lp + float(z.sum())


def log_marginal_likelihood(data: Dataset, theta: Hyperparameters) -> float:
    """Log evidence of the data under one hyperparameter setting.

    This is the f-marginalized likelihood log N(y | 0, K_n + sigma^2 I_n),
    the quantity the hyperparameter posterior is proportional to.
    """
    if data.n == 0:
        raise ValueError("log_marginal_likelihood requires a nonempty dataset")
    if data.dim != theta.dim:
        raise ValueError("data dimension does not match the hyperparameters")
    return _PosteriorDensity(data).log_marginal(
        theta.signal, theta.lengthscales, theta.noise
    )


def log_posterior(data: Dataset, theta: Hyperparameters) -> float:
    """Unnormalized log posterior: marginal likelihood plus log prior."""
    return log_marginal_likelihood(data, theta) + log_prior(theta)


def _prior_draw_z(rng: np.random.Generator, d: int) -> np.ndarray:
    """Draw log-hyperparameters from the prior truncated to the hard bounds."""
    z = np.empty(d + 2)
    # Jeffreys scales are flat in log space once truncated.
    z[0] = rng.uniform(-LOG_BOUND, LOG_BOUND)
    z[-1] = rng.uniform(-LOG_BOUND, LOG_BOUND)
    lo, hi = math.atan(math.exp(-LOG_BOUND)), math.atan(math.exp(LOG_BOUND))
    for k in range(1, d + 1):
        z[k] = math.log(math.tan(lo + rng.uniform() * (hi - lo)))
    return z


def _heuristic_start_z(data: Dataset, box_widths: np.ndarray) -> np.ndarray:
    s = float(np.std(data.values))
    if s <= 0.0:
        s = 1.0
    z = np.concatenate(([math.log(s)], np.log(box_widths / 4.0), [math.log(0.1 * s)]))
    return np.clip(z, -LOG_BOUND, LOG_BOUND)


def _default_box_widths(data: Dataset) -> np.ndarray:
    span = data.points.max(axis=0) - data.points.min(axis=0)
    span[span <= 0.0] = 1.0
    return span


def map_estimate(
    data: Dataset,
    restarts: int = 5,
    rng: np.random.Generator | None = None,
    box_widths: np.ndarray | None = None,
    extra_starts: tuple[Hyperparameters, ...] = (),
) -> Hyperparameters:
    """Best of ``restarts`` local maximizations of the log posterior.

    Runs L-BFGS-B (finite-difference gradients) in log-parameter space.
    The first start is a data-driven heuristic (lengthscales a quarter of
    the box width, signal the value spread, noise a tenth of that); the
    remaining starts are prior draws.  ``extra_starts`` (e.g. a previous
    MAP) are tried first and count against the restart budget.
    """
    if data.n == 0:
        raise ValueError("map_estimate requires a nonempty dataset")
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    if rng is None:
        rng = np.random.default_rng()
    if box_widths is None:
        box_widths = _default_box_widths(data)
    else:
        box_widths = np.asarray(box_widths, dtype=float).reshape(-1)
        if box_widths.size != data.dim:
            raise ValueError("box_widths length must equal the data dimension")

    post = _PosteriorDensity(data)
    dim = data.dim + 2
    starts: list[np.ndarray] = [
        np.clip(np.log([t.signal, *t.lengthscales, max(t.noise, 1e-8)]), -LOG_BOUND, LOG_BOUND)
        for t in extra_starts
    ]
    if len(starts) < restarts:
        starts.append(_heuristic_start_z(data, box_widths))
    while len(starts) < restarts:
        starts.append(_prior_draw_z(rng, data.dim))

    bounds = [(-LOG_BOUND, LOG_BOUND)] * dim
    best_val = np.inf
    best_z = None
    for z0 in starts[:max(restarts, len(extra_starts))]:
        try:
            res = minimize(
                post.neg_log_posterior_z,
                z0,
                method="L-BFGS-B",
                bounds=bounds,
                options={"maxiter": 200},
            )
        except FloatingPointError:  # pragma: no cover - scipy internals
            continue
        if not res.success:
            logger.debug("MAP restart capped: %s", res.message)
        if np.isfinite(res.fun) and res.fun < best_val:
            best_val = res.fun
            best_z = res.x
    if best_z is None or best_val >= 1e25:
        raise NumericalError("every MAP restart failed numerically", JITTER_MAX)
    theta = np.exp(best_z)
    return Hyperparameters(theta[0], theta[1:-1], theta[-1])


def sample_particles(
    data: Dataset,
    cfg: McmcConfig,
    rng: np.random.Generator | None = None,
    start: Hyperparameters | None = None,
    box_widths: np.ndarray | None = None,
) -> ParticleSet:
    """Adaptive random-walk Metropolis approximation of the posterior.

    The chain starts at the MAP estimate (or ``start`` if given).  During
    burn-in the proposal covariance tracks the running chain covariance
    scaled by 2.38^2/dim plus a small regularization; after burn-in the
    proposal is frozen, every ``cfg.thin``-th state is recorded, and the
    last ``cfg.n_particles`` recorded states are returned.  An empty
    dataset is allowed and targets the (bounded) prior alone.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    post = _PosteriorDensity(data)
    dim = data.dim + 2

    if start is not None:
        z = np.clip(
            np.log([start.signal, *start.lengthscales, max(start.noise, 1e-8)]),
            -LOG_BOUND,
            LOG_BOUND,
        )
    elif data.n > 0:
        m = map_estimate(data, rng=rng, box_widths=box_widths)
        z = np.clip(
            np.log([m.signal, *m.lengthscales, m.noise]), -LOG_BOUND, LOG_BOUND
        )
    else:
        z = np.zeros(dim)

    log_target = post.log_target_z
    lp = log_target(z)
    scale = 2.38**2 / dim
    prop_chol = INITIAL_PROPOSAL_SCALE * np.eye(dim)

    # running moments of the burn-in chain
    count = 1
    mean = z.copy()
    m2 = np.zeros((dim, dim))

    if cfg.burn_in > 0:
        normals = rng.standard_normal((cfg.burn_in, dim))
        logu = np.log(rng.random(cfg.burn_in))
        for i in range(cfg.burn_in):
            zp = z + prop_chol @ normals[i]
            lpp = log_target(zp)
            if logu[i] < lpp - lp:
                z, lp = zp, lpp
            count += 1
            delta = z - mean
            mean += delta / count
            m2 += np.outer(delta, z - mean)
            if count > ADAPT_START:
                C = scale * (m2 / (count - 1))
                C.flat[:: dim + 1] += scale * ADAPT_REG
                prop_chol = np.linalg.cholesky(C)

    normals = rng.standard_normal((cfg.post_burn_steps, dim))
    logu = np.log(rng.random(cfg.post_burn_steps))
    accepted = 0
    recorded: list[np.ndarray] = []
    thin = cfg.thin
    for i in range(cfg.post_burn_steps):
        zp = z + prop_chol @ normals[i]
        lpp = log_target(zp)
        if logu[i] < lpp - lp:
            z, lp = zp, lpp
            accepted += 1
        if (i + 1) % thin == 0:
            recorded.append(z.copy())

    acc_rate = accepted / cfg.post_burn_steps
    warnings: tuple[str, ...] = ()
    if acc_rate < 0.01:
        warnings = (
            f"degenerate chain: post-burn acceptance rate {acc_rate:.4f} < 0.01",
        )
        logger.warning(warnings[0])

    kept = recorded[-cfg.n_particles :]
    particles = tuple(
        Hyperparameters(t[0], t[1:-1], t[-1]) for t in (np.exp(zz) for zz in kept)
    )
    diag = McmcDiagnostics(
        acceptance_rate=acc_rate,
        chain_length=cfg.burn_in + cfg.post_burn_steps,
        thin=thin,
        warnings=warnings,
    )
    return ParticleSet(particles, diag)
