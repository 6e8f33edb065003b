"""Noise-filtered expected improvement, averaged over hyperparameter particles.

With noisy observations the raw best value min y_i is a poor incumbent; the
filtered minimum replaces it with the minimum of the posterior mean over the
observed inputs.  The per-model expected improvement has the usual closed
form, and the acquisition score of a candidate is its average across the
posterior hyperparameter particles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .gp import PosteriorGp, _as_points, posterior_mean_many, posterior_var_many

__all__ = ["AcquisitionScores", "filtered_min", "ei_closed_form", "eei"]

# Below this spread the improvement is treated as deterministic.
SD_FLOOR = 1e-12

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class AcquisitionScores:
    """Scores for a candidate set; ``best_index`` is the argmax, first on ties."""

    candidates: np.ndarray
    scores: np.ndarray
    best_index: int

    @property
    def best_point(self) -> np.ndarray:
        return self.candidates[self.best_index]

    @property
    def best_score(self) -> float:
        return float(self.scores[self.best_index])


def filtered_min(gp: PosteriorGp) -> float:
    """Minimum of the posterior mean over the observed inputs."""
    if gp.n < 1:
        raise ValueError("filtered_min requires at least one observation")
    return float(posterior_mean_many(gp, gp.dataset.points).min())


def _npdf(z: np.ndarray) -> np.ndarray:
    return _INV_SQRT_2PI * np.exp(-0.5 * z * z)


def _ei_vec(improvement: np.ndarray, sd: np.ndarray) -> np.ndarray:
    """E[max(0, improvement + sd*Z)] for standard normal Z, elementwise."""
    out = np.maximum(improvement, 0.0)
    live = sd >= SD_FLOOR
    if np.any(live):
        imp = improvement[live]
        s = sd[live]
        z = imp / s
        out[live] = s * _npdf(z) + imp * ndtr(z)
    return out


def ei_closed_form(incumbent: float, mean: float, sd: float) -> float:
    """Closed-form E[max(0, incumbent - f)] for f ~ N(mean, sd^2).

    Equals sd*phi(z) + (incumbent-mean)*Phi(z) with z = (incumbent-mean)/sd;
    for sd below SD_FLOOR the deterministic limit max(0, incumbent-mean)
    is returned.
    """
    if sd < 0.0:
        raise ValueError("sd must be nonnegative")
    return float(
        _ei_vec(np.array([incumbent - mean]), np.array([float(sd)]))[0]
    )


def eei(candidates, fits: list[PosteriorGp]) -> AcquisitionScores:
    """Particle-averaged expected improvement over a candidate set.

    Each fitted model contributes its own filtered minimum and predictive
    spread; scores are reduced in fit order so results are deterministic.
    All fits must be built on the same dataset snapshot.
    """
    cands = _as_points(candidates)
    if cands.shape[0] < 1:
        raise ValueError("candidate list must be nonempty")
    if not fits:
        raise ValueError("fits must be nonempty")
    ref = fits[0].dataset
    for fit in fits[1:]:
        if fit.dataset is ref:
            continue
        if not (
            np.array_equal(fit.dataset.points, ref.points)
            and np.array_equal(fit.dataset.values, ref.values)
        ):
            raise ValueError("all fits must share the same dataset snapshot")

    total = np.zeros(cands.shape[0])
    for fit in fits:
        incumbent = filtered_min(fit)
        mu = posterior_mean_many(fit, cands)
        sd = np.sqrt(np.maximum(0.0, posterior_var_many(fit, cands)))
        total += _ei_vec(incumbent - mu, sd)
    scores = total / len(fits)
    return AcquisitionScores(cands, scores, int(np.argmax(scores)))
