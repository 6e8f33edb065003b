"""Sequential optimization driver.

Each iteration rebuilds the hyperparameter particle approximation on the
data gathered so far, draws a fresh Latin-hypercube candidate set, scores
the candidates by particle-averaged expected improvement, and either stops
(best score below tolerance) or evaluates the objective at the best
candidate and appends the observation.

Objective values are standardized internally (shifted by the empirical
mean, scaled by the empirical standard deviation) before any fitting, and
all reported quantities - improvement scores, predictive bounds, sampled
optima - are mapped back to raw objective units.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, IO

import numpy as np

from .acquisition import eei
from .design import BoxBounds, lhs
from .gp import Dataset, gp_fit, posterior_mean_many
from .hyper import Hyperparameters, McmcConfig, ParticleSet, map_estimate, sample_particles
from .uq import QDistribution, pboo, q_distribution_from_fits

__all__ = [
    "BgoConfig",
    "IterationRecord",
    "RunTrace",
    "ObjectiveError",
    "ObjectiveFn",
    "run",
    "recommend",
]

logger = logging.getLogger(__name__)

# Grid size for realizing min/argmin of sampled posterior functions.
UQ_GRID_SIZE = 1000

PBOO_LEVEL = 0.95

#: Objective contract: one noisy evaluation y = V(x; xi) with xi drawn
#: internally from the supplied stream (or from external randomness).
ObjectiveFn = Callable[[np.ndarray, np.random.Generator], float]


class ObjectiveError(RuntimeError):
    """A single objective evaluation failed (crash, timeout, bad output)."""


@dataclass(frozen=True)
class BgoConfig:
    """Driver settings: budget, stopping tolerance, candidate and UQ sizes.

    ``uq_every = k`` computes predictive bounds on iterations 0, k, 2k, ...;
    0 disables in-loop bounds (the terminal summary is always computed).
    """

    max_iters: int
    eei_tolerance: float
    n_candidates: int = 1000
    mcmc: McmcConfig = McmcConfig()
    uq_m: int = 100
    uq_every: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.eei_tolerance > 0.0:
            raise ValueError("eei_tolerance must be > 0")
        if self.n_candidates < 1:
            raise ValueError("n_candidates must be >= 1")
        if self.uq_m < 1:
            raise ValueError("uq_m must be >= 1")
        if self.uq_every < 0:
            raise ValueError("uq_every must be >= 0")


@dataclass
class IterationRecord:
    """One loop pass: the chosen point, what was observed, and diagnostics.

    ``y`` is None when the iteration stopped before evaluating (tolerance
    hit or objective failure).  PBOO fields are None on iterations where
    bounds were not computed.
    """

    iteration: int
    x: np.ndarray
    y: float | None
    max_eei: float
    pboo_lo: float | None
    pboo_hi: float | None
    pboo_median: float | None
    wall_time: float
    warnings: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "x": [float(v) for v in np.asarray(self.x).reshape(-1)],
            "y": self.y,
            "max_eei": self.max_eei,
            "pboo_lo": self.pboo_lo,
            "pboo_hi": self.pboo_hi,
            "pboo_median": self.pboo_median,
            "wall_time": self.wall_time,
            "warnings": list(self.warnings),
        }


@dataclass
class RunTrace:
    """Full run record: per-iteration entries plus the terminal summary."""

    records: list[IterationRecord]
    status: str  # tolerance-hit | budget-exhausted | objective-error
    dataset: Dataset
    x_best: np.ndarray | None = None
    final_pboo: tuple[float, float] | None = None
    final_pboo_median: float | None = None
    value_distribution: QDistribution | None = None
    error: str | None = None

    @property
    def n_evaluations(self) -> int:
        return sum(1 for r in self.records if r.y is not None)


@dataclass(frozen=True)
class _YStandardizer:
    """Affine map to zero-mean unit-spread values and back."""

    shift: float
    scale: float

    @classmethod
    def fit(cls, values: np.ndarray) -> "_YStandardizer":
        sd = float(np.std(values))
        return cls(float(np.mean(values)), sd if sd > 1e-12 else 1.0)

    def forward(self, y: np.ndarray) -> np.ndarray:
        return (y - self.shift) / self.scale

    def inverse(self, u: np.ndarray) -> np.ndarray:
        return self.shift + self.scale * u


def _iteration_streams(cfg: BgoConfig) -> dict[str, list]:
    """Independent per-iteration seed children for each subsystem.

    Index ``cfg.max_iters`` of every stream is reserved for the terminal
    summary.  The split lets any subsystem of any iteration be re-run in
    isolation.
    """
    root = np.random.SeedSequence(cfg.seed)
    mcmc_ss, lhs_ss, sample_ss, objective_ss = root.spawn(4)
    rounds = cfg.max_iters + 1
    return {
        "mcmc": mcmc_ss.spawn(rounds),
        "lhs": lhs_ss.spawn(rounds),
        "sample": sample_ss.spawn(rounds),
        "objective": objective_ss.spawn(rounds),
    }


class _TraceWriter:
    """Line-delimited JSON trace, flushed per record so crashes keep data."""

    def __init__(self, path):
        self.path = Path(path)
        self._fh: IO[str] = open(self.path, "w")

    def write(self, record: IterationRecord) -> None:
        self._fh.write(json.dumps(record.to_dict()) + "\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()


def _fit_posterior_state(
    data: Dataset,
    bounds: BoxBounds,
    mcmc: McmcConfig,
    rng: np.random.Generator,
    warm_start: Hyperparameters | None,
):
    """Standardize, infer particles, and fit one surrogate per particle."""
    std = _YStandardizer.fit(data.values)
    sdata = Dataset(data.points, std.forward(data.values))
    extra = (warm_start,) if warm_start is not None else ()
    theta_map = map_estimate(
        sdata, restarts=5, rng=rng, box_widths=bounds.widths, extra_starts=extra
    )
    particles = sample_particles(sdata, mcmc, rng=rng, start=theta_map)
    fits = [gp_fit(sdata, theta) for theta in particles]
    return std, sdata, theta_map, particles, fits


def run(
    objective: ObjectiveFn,
    initial: Dataset,
    bounds: BoxBounds,
    cfg: BgoConfig,
    trace_path=None,
) -> RunTrace:
    """Run the optimization loop from an initial dataset.

    Stops when the best candidate's expected improvement (in raw objective
    units) falls below ``cfg.eei_tolerance`` or after ``cfg.max_iters``
    iterations; a failed objective evaluation aborts with the partial trace
    and an error status.  The terminal summary (recommendation plus
    predictive bounds for the optimal value) is rebuilt from the complete
    final dataset.
    """
    if initial.n < 1:
        raise ValueError("the initial dataset must be nonempty")
    if initial.dim != bounds.dim:
        raise ValueError("initial data dimension does not match the bounds")
    streams = _iteration_streams(cfg)
    writer = _TraceWriter(trace_path) if trace_path is not None else None

    data = initial
    records: list[IterationRecord] = []
    status = "budget-exhausted"
    error = None
    warm: Hyperparameters | None = None

    try:
        for s in range(cfg.max_iters):
            t0 = time.perf_counter()
            rng_mcmc = np.random.default_rng(streams["mcmc"][s])
            rng_lhs = np.random.default_rng(streams["lhs"][s])
            rng_sample = np.random.default_rng(streams["sample"][s])
            rng_obj = np.random.default_rng(streams["objective"][s])

            std, sdata, warm, particles, fits = _fit_posterior_state(
                data, bounds, cfg.mcmc, rng_mcmc, warm
            )
            warns = particles.diagnostics.warnings

            candidates = lhs(cfg.n_candidates, bounds, rng_lhs)
            scores = eei(candidates, fits)
            x_next = scores.best_point
            max_eei = std.scale * scores.best_score

            lo = hi = med = None
            if cfg.uq_every > 0 and s % cfg.uq_every == 0:
                grid = lhs(UQ_GRID_SIZE, bounds, rng_sample)
                qd = q_distribution_from_fits(fits, grid, cfg.uq_m, rng_sample)
                mins = std.inverse(qd.min_samples)
                qd_raw = QDistribution(mins, qd.argmin_samples, qd.grid)
                lo, hi = pboo(qd_raw, PBOO_LEVEL)
                med = float(np.median(mins))

            if max_eei < cfg.eei_tolerance:
                status = "tolerance-hit"
                rec = IterationRecord(
                    s, x_next, None, max_eei, lo, hi, med,
                    time.perf_counter() - t0, warns,
                )
                records.append(rec)
                if writer:
                    writer.write(rec)
                break

            try:
                y = float(objective(x_next, rng_obj))
                if not np.isfinite(y):
                    raise ObjectiveError(f"objective returned non-finite value {y!r}")
            except ObjectiveError as exc:
                status = "objective-error"
                error = str(exc)
                logger.error("objective evaluation failed at %s: %s", x_next, exc)
                rec = IterationRecord(
                    s, x_next, None, max_eei, lo, hi, med,
                    time.perf_counter() - t0, warns + (f"objective-failure: {exc}",),
                )
                records.append(rec)
                if writer:
                    writer.write(rec)
                break

            data = data.append(x_next, y)
            rec = IterationRecord(
                s, x_next, y, max_eei, lo, hi, med,
                time.perf_counter() - t0, warns,
            )
            records.append(rec)
            if writer:
                writer.write(rec)
    finally:
        if writer:
            writer.close()

    trace = RunTrace(records, status, data, error=error)
    if status != "objective-error":
        _finalize(trace, bounds, cfg, streams, warm)
    return trace


def _finalize(trace, bounds, cfg, streams, warm) -> None:
    """Terminal state of knowledge from the complete final dataset."""
    s = cfg.max_iters
    rng_mcmc = np.random.default_rng(streams["mcmc"][s])
    rng_sample = np.random.default_rng(streams["sample"][s])
    std, sdata, _, particles, fits = _fit_posterior_state(
        trace.dataset, bounds, cfg.mcmc, rng_mcmc, warm
    )
    grid = lhs(UQ_GRID_SIZE, bounds, rng_sample)
    avg_mean = np.zeros(grid.shape[0])
    for fit in fits:
        avg_mean += posterior_mean_many(fit, grid)
    trace.x_best = grid[int(np.argmin(avg_mean))]
    qd = q_distribution_from_fits(fits, grid, cfg.uq_m, rng_sample)
    mins = std.inverse(qd.min_samples)
    trace.value_distribution = QDistribution(mins, qd.argmin_samples, qd.grid)
    trace.final_pboo = pboo(trace.value_distribution, PBOO_LEVEL)
    trace.final_pboo_median = float(np.median(mins))


def recommend(
    data: Dataset,
    particles: ParticleSet,
    grid,
    m: int = 100,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, QDistribution]:
    """Best design under current knowledge plus the optimal-value distribution.

    Returns the grid point minimizing the particle-averaged posterior mean,
    and the sampled min/argmin distribution on the same grid.  Operates on
    the data as given (no internal standardization).
    """
    grid = np.asarray(grid, dtype=float)
    fits = [gp_fit(data, theta) for theta in particles]
    if grid.ndim == 1:
        grid = grid.reshape(-1, 1)
    avg = np.zeros(grid.shape[0])
    for fit in fits:
        avg += posterior_mean_many(fit, grid)
    x_best = grid[int(np.argmin(avg))]
    qd = q_distribution_from_fits(fits, grid, m, rng)
    return x_best, qd
