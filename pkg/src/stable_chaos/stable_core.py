"""One-sided strictly stable laws, subordinator increments and random sums.

The stable law ``nu`` used everywhere in this package is the positive
stable law of index ``alpha`` in (0, 1) normalised by

    E exp(-lam * Y) = exp(-lam ** alpha),   lam >= 0.

Draws use Kanter's representation (one uniform, one unit exponential),
evaluated in log-space.
"""
from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy.special import gamma

# Uniforms are clamped to [EPS, 1 - EPS] before the sine ratios are taken.
UNIFORM_EPS = 2.0 ** -40


@dataclass(frozen=True)
class StableParams:
    alpha: float
    q: float

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not 0.0 < self.q:
            raise ValueError(f"q must be positive, got {self.q}")
        if not self.q < self.alpha:
            raise ValueError(f"requires q < alpha (q={self.q}, alpha={self.alpha})")

    @property
    def inv_alpha(self) -> float:
        return 1.0 / self.alpha

    def fractional_moment(self, order: float | None = None) -> float:
        """Closed form E[Y^r] = Gamma(1 - r/alpha) / Gamma(1 - r), r < alpha."""
        r = self.q if order is None else order
        if r >= self.alpha:
            return math.inf
        return float(gamma(1.0 - r / self.alpha) / gamma(1.0 - r))


def _key(k) -> int:
    if isinstance(k, (int, np.integer)):
        return int(k) & 0xFFFFFFFFFFFFFFFF
    return zlib.crc32(str(k).encode())


@dataclass(frozen=True)
class RngStream:
    """Reproducible substream keyed by ``(seed, stream_id, *path)``.

    Generators are Philox (counter based) seeded through ``SeedSequence``
    spawn keys, so distinct keys give independent streams and the same key
    always replays the same sequence.
    """

    seed: int
    stream_id: int = 0
    path: tuple = field(default=())

    def substream(self, *keys) -> "RngStream":
        return RngStream(self.seed, self.stream_id, self.path + tuple(_key(k) for k in keys))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(
            entropy=_key(self.seed), spawn_key=(_key(self.stream_id),) + self.path
        )
        return np.random.Generator(np.random.Philox(ss))


RngLike = Union[RngStream, np.random.Generator]


def as_generator(rng: RngLike) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    return rng


@dataclass
class IncrementPath:
    grid: np.ndarray
    increments: np.ndarray

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.increments = np.asarray(self.increments, dtype=float)
        if len(self.increments) != len(self.grid) - 1:
            raise ValueError("need one increment per grid interval")
        if np.any(self.increments < 0.0):
            raise ValueError("subordinator increments must be nonnegative")

    @property
    def values(self) -> np.ndarray:
        """S at the grid points, S(0) = 0."""
        return np.concatenate(([0.0], np.cumsum(self.increments)))


def _kanter(alpha: float, u: np.ndarray, e: np.ndarray) -> np.ndarray:
    u = np.clip(u, UNIFORM_EPS, 1.0 - UNIFORM_EPS) * np.pi
    log_a = (
        alpha / (1.0 - alpha) * np.log(np.sin(alpha * u))
        + np.log(np.sin((1.0 - alpha) * u))
        - np.log(np.sin(u)) / (1.0 - alpha)
    )
    return np.exp((1.0 - alpha) / alpha * (log_a - np.log(e)))


def sample_stable(params: StableParams, rng: RngLike, size=None):
    """Exact draws from nu. Returns a float when ``size`` is None."""
    g = as_generator(rng)
    u = g.random(size)
    e = g.standard_exponential(size)
    y = _kanter(params.alpha, np.asarray(u), np.asarray(e))
    if size is None:
        return float(y)
    return y


def sample_subordinator(params: StableParams, grid, rng: RngLike) -> IncrementPath:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or len(grid) < 2:
        raise ValueError("degenerate grid")
    if grid[0] != 0.0 or np.any(np.diff(grid) <= 0.0):
        raise ValueError("degenerate grid: must start at 0 and increase strictly")
    h = np.diff(grid)
    y = sample_stable(params, rng, size=len(h))
    return IncrementPath(grid, h ** params.inv_alpha * y)


@dataclass(frozen=True)
class CountLaw:
    """Law of the number of summands: ``Poisson(mean)`` or a fixed count."""

    kind: str
    value: float

    @classmethod
    def poisson(cls, mean: float) -> "CountLaw":
        return cls("poisson", float(mean))

    @classmethod
    def fixed(cls, n: int) -> "CountLaw":
        return cls("fixed", int(n))

    def draw(self, g: np.random.Generator, size=None):
        if self.kind == "poisson":
            return g.poisson(self.value, size)
        if self.kind == "fixed":
            return np.full(size, int(self.value), dtype=np.int64) if size is not None else int(self.value)
        raise ValueError(f"unknown count law {self.kind!r}")


def random_sum_scaled(params: StableParams, count_law: CountLaw, rng: RngLike, size=None):
    """Draw ``(P, Z_P, Y_tilde)`` with ``Z_P = P**(1/alpha) * Y_tilde``.

    ``Y_tilde = P**(-1/alpha) * Z_P`` when ``P != 0``, otherwise an
    independent draw from nu. With ``size`` the three entries are arrays.
    """
    g = as_generator(rng)
    scalar = size is None
    n = 1 if scalar else int(size)
    p = np.atleast_1d(np.asarray(count_law.draw(g, n), dtype=np.int64))
    y = sample_stable(params, g, size=int(p.sum()))
    owner = np.repeat(np.arange(n), p)
    z = np.bincount(owner, weights=y, minlength=n)
    fresh = sample_stable(params, g, size=n)
    nz = p > 0
    y_tilde = fresh.copy()
    y_tilde[nz] = p[nz].astype(float) ** (-params.inv_alpha) * z[nz]
    if scalar:
        return int(p[0]), float(z[0]), float(y_tilde[0])
    return p, z, y_tilde


def jump_measure_tail(params: StableParams, x0: float) -> float:
    """Mass ``m([x0, inf))`` of the subordinator's Levy measure."""
    if not x0 > 0.0:
        raise ValueError("tail mass diverges at 0")
    return float(x0 ** (-params.alpha) / gamma(1.0 - params.alpha))


def laplace_band(n: int, sigmas: float = 3.0) -> float:
    """CLT half-width for a mean of n values in [0, 1] (variance <= 1/4)."""
    return sigmas / (2.0 * math.sqrt(n))


def laplace_deviation(samples: np.ndarray, alpha: float, lam: float) -> float:
    return float(np.mean(np.exp(-lam * samples)) - math.exp(-lam ** alpha))
