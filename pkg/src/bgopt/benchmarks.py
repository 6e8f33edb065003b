"""Synthetic stochastic benchmark objectives with known optima.

Two test problems, each observed through zero-mean Gaussian noise whose
standard deviation is either constant or input-dependent:

* ``synth1d`` on [0, 1]:  4*(1 - sin(6x + 8*exp(6x - 7))) + s(x)*xi
* ``synth2d`` on [0, 5]^2:  2 + (x2 - x1^2)^2/100 + (1 - x1)^2
  + 2*(2 - x2)^2 + 7*sin(0.5*x2)*sin(0.7*x1*x2) + s(x)*xi

The noiseless parts are the exact expected objectives (the noise is
zero-mean), so true optima are available through a brute-force oracle and
pinned here as fixtures.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from .design import BoxBounds

__all__ = [
    "NoiseModel",
    "BENCHMARKS",
    "benchmark_bounds",
    "synth1d",
    "synth2d",
    "synth1d_mean",
    "synth2d_mean",
    "true_mean",
    "oracle_optimum",
    "make_objective",
]

BENCHMARKS = ("synth1d", "synth2d")

_BOUNDS = {
    "synth1d": (np.array([0.0]), np.array([1.0])),
    "synth2d": (np.array([0.0, 0.0]), np.array([5.0, 5.0])),
}

# Oracle fixtures (dense grid scan plus local refinement, see
# oracle_optimum): global minimizers and minimal expected value, pinned to
# full double precision.  synth1d has two global minimizers of equal value;
# synth2d has three local minima of which one is global.
SYNTH1D_MINIMIZERS = (0.25614568079614203, 0.9486192219976771)
SYNTH1D_MIN_VALUE = 0.0
SYNTH2D_MINIMIZER = (2.3172360008544666, 2.7713233022185935)
SYNTH2D_MIN_VALUE = -1.726339763540948


@dataclass(frozen=True)
class NoiseModel:
    """Observation-noise standard deviation as a function of the input.

    Kinds: ``constant`` (scale ``s >= 0``), ``heteroscedastic-1d`` with
    s(x) = ((x - 3)/3)^2, and ``heteroscedastic-2d`` with
    s(x) = ((x2 - x1)/3)^2.
    """

    kind: str
    scale: float = 0.0

    KINDS = ("constant", "heteroscedastic-1d", "heteroscedastic-2d")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}; expected {self.KINDS}")
        if self.kind == "constant" and not self.scale >= 0.0:
            raise ValueError("constant noise scale must be >= 0")

    @classmethod
    def constant(cls, scale: float) -> "NoiseModel":
        return cls("constant", float(scale))

    @classmethod
    def heteroscedastic_1d(cls) -> "NoiseModel":
        return cls("heteroscedastic-1d")

    @classmethod
    def heteroscedastic_2d(cls) -> "NoiseModel":
        return cls("heteroscedastic-2d")

    def std(self, x) -> float:
        x = np.asarray(x, dtype=float).reshape(-1)
        if self.kind == "constant":
            return self.scale
        if self.kind == "heteroscedastic-1d":
            return float(((x[0] - 3.0) / 3.0) ** 2)
        return float(((x[1] - x[0]) / 3.0) ** 2)


def benchmark_bounds(benchmark: str) -> BoxBounds:
    """Design box of a named benchmark."""
    try:
        lo, hi = _BOUNDS[benchmark]
    except KeyError:
        raise ValueError(f"unknown benchmark {benchmark!r}; expected {BENCHMARKS}") from None
    return BoxBounds(lo, hi)


def synth1d_mean(x):
    """Noiseless 1-D objective, vectorized."""
    x = np.asarray(x, dtype=float)
    return 4.0 * (1.0 - np.sin(6.0 * x + 8.0 * np.exp(6.0 * x - 7.0)))


def synth2d_mean(x1, x2):
    """Noiseless 2-D objective, vectorized."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    return (
        2.0
        + (x2 - x1**2) ** 2 / 100.0
        + (1.0 - x1) ** 2
        + 2.0 * (2.0 - x2) ** 2
        + 7.0 * np.sin(0.5 * x2) * np.sin(0.7 * x1 * x2)
    )


def synth1d(x: float, noise: NoiseModel, rng: np.random.Generator) -> float:
    """One noisy draw of the 1-D objective at x in [0, 1]."""
    xv = np.asarray(x, dtype=float).reshape(-1)
    if xv.size != 1:
        raise ValueError("synth1d expects a scalar design point")
    if not 0.0 <= xv[0] <= 1.0:
        raise ValueError(f"x={xv[0]} outside the design box [0, 1]")
    return float(synth1d_mean(xv[0]) + noise.std(xv) * rng.standard_normal())


def synth2d(x, noise: NoiseModel, rng: np.random.Generator) -> float:
    """One noisy draw of the 2-D objective at x in [0, 5]^2."""
    xv = np.asarray(x, dtype=float).reshape(-1)
    if xv.size != 2:
        raise ValueError("synth2d expects a 2-D design point")
    if not (np.all(xv >= 0.0) and np.all(xv <= 5.0)):
        raise ValueError(f"x={tuple(xv)} outside the design box [0, 5]^2")
    return float(synth2d_mean(xv[0], xv[1]) + noise.std(xv) * rng.standard_normal())


def true_mean(benchmark: str, x) -> float:
    """Exact expected objective of a named benchmark at x."""
    xv = np.asarray(x, dtype=float).reshape(-1)
    if benchmark == "synth1d":
        return float(synth1d_mean(xv[0]))
    if benchmark == "synth2d":
        return float(synth2d_mean(xv[0], xv[1]))
    raise ValueError(f"unknown benchmark {benchmark!r}; expected {BENCHMARKS}")


def _oracle_1d() -> tuple[np.ndarray, float]:
    xs = np.linspace(0.0, 1.0, 1_000_001)
    v = synth1d_mean(xs)
    interior = np.where((v[1:-1] < v[:-2]) & (v[1:-1] <= v[2:]))[0] + 1
    found = [(0.0, float(v[0])), (1.0, float(v[-1]))]
    for i in interior:
        res = minimize_scalar(
            synth1d_mean,
            bounds=(xs[i - 1], xs[i + 1]),
            method="bounded",
            options={"xatol": 1e-14},
        )
        found.append((float(res.x), float(res.fun)))
    vstar = min(fv for _, fv in found)
    xs_star = sorted(x for x, fv in found if fv <= vstar + 1e-6)
    return np.array(xs_star).reshape(-1, 1), vstar


def _oracle_2d() -> tuple[np.ndarray, float]:
    g = np.linspace(0.0, 5.0, 1001)
    X1, X2 = np.meshgrid(g, g, indexing="ij")
    V = synth2d_mean(X1, X2)
    inner = V[1:-1, 1:-1]
    is_min = np.ones_like(inner, dtype=bool)
    n = V.shape[0] - 1
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == 0 and dj == 0:
                continue
            is_min &= inner <= V[1 + di : n + di, 1 + dj : n + dj]
    found = []
    for i, j in zip(*np.where(is_min)):
        res = minimize(
            lambda p: float(synth2d_mean(p[0], p[1])),
            [g[i + 1], g[j + 1]],
            method="L-BFGS-B",
            bounds=[(0.0, 5.0), (0.0, 5.0)],
            options={"ftol": 1e-16, "gtol": 1e-12},
        )
        found.append((res.x.copy(), float(res.fun)))
    vstar = min(fv for _, fv in found)
    xs_star = [x for x, fv in found if fv <= vstar + 1e-6]
    return np.array(xs_star), vstar


def oracle_optimum(benchmark: str) -> tuple[np.ndarray, float]:
    """Brute-force optimum of the expected objective.

    Dense grid scan plus deterministic local refinement; returns all global
    minimizers (within 1e-6 of the best value) as rows and the minimal
    value.  Validation-only: slow compared to the pinned fixtures above.
    """
    if benchmark == "synth1d":
        return _oracle_1d()
    if benchmark == "synth2d":
        return _oracle_2d()
    raise ValueError(f"unknown benchmark {benchmark!r}; expected {BENCHMARKS}")


def make_objective(
    benchmark: str, noise: NoiseModel
) -> Callable[[np.ndarray, np.random.Generator], float]:
    """Wrap a named benchmark as an objective callable (x, rng) -> y."""
    if benchmark == "synth1d":
        return lambda x, rng: synth1d(x, noise, rng)
    if benchmark == "synth2d":
        return lambda x, rng: synth2d(x, noise, rng)
    raise ValueError(f"unknown benchmark {benchmark!r}; expected {BENCHMARKS}")
