"""Photon-number and intensity distributions.

Two kinds of object live here: truncated photon-number distributions
(:class:`PhotonPMF`) and continuous distributions of the dimensionless
integrated intensity W (:class:`IntensityModel` subclasses).  The discrete
modulator is a :class:`LevelTable`, a set of geometrically spaced intensity
levels with occupation probabilities.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import gammaln, ndtr, xlogy

__all__ = [
    "DomainError",
    "RangeCoverageWarning",
    "PhotonPMF",
    "IntensityModel",
    "NegativeExponential",
    "LogNormal",
    "Normal",
    "PointMass",
    "Mixture",
    "LevelTable",
    "N_LEVELS",
    "STEP_DB",
    "level_grid",
    "bose_einstein_pmf",
    "poisson_pmf",
    "uniform_truncated_pmf",
    "eval_density",
    "discretize",
]

N_LEVELS = 128
STEP_DB = 0.25

_NORM_TOL = 1e-12
_TABLE_NORM_TOL = 1e-10
_NORMAL_TRUNCATION_LIMIT = 1e-6


class DomainError(ValueError):
    """Raised when a distribution parameter lies outside its domain."""


class RangeCoverageWarning(UserWarning):
    """Most of an intensity model's mass falls outside the modulator range."""


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


# ---------------------------------------------------------------------------
# photon-number distributions


@dataclass(frozen=True)
class PhotonPMF:
    """Photon-number distribution p_0..p_nmax plus the mass beyond n_max."""

    probs: np.ndarray
    tail_mass: float = 0.0

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        if probs.ndim != 1 or probs.size == 0:
            raise DomainError("probs must be a non-empty 1-d sequence")
        # round-off from 1 - sum(p) can leave a tail of -1e-17
        tail = float(self.tail_mass)
        if -_NORM_TOL < tail < 0.0:
            tail = 0.0
        if np.any(probs < 0.0) or tail < 0.0:
            raise DomainError("probabilities must be non-negative")
        total = math.fsum(probs) + tail
        if abs(total - 1.0) > _NORM_TOL:
            raise DomainError(f"distribution sums to {total!r}, not 1")
        object.__setattr__(self, "probs", _frozen(probs))
        object.__setattr__(self, "tail_mass", tail)

    @classmethod
    def from_probs(cls, probs: Sequence[float], tail_mass: float | None = None) -> "PhotonPMF":
        """Build from p_0..p_N; a missing tail mass is taken as ``1 - sum(p)``."""
        probs = np.asarray(probs, dtype=float)
        if tail_mass is None:
            tail_mass = 1.0 - math.fsum(probs)
        return cls(probs, tail_mass)

    @classmethod
    def from_counts(cls, counts: Sequence[int]) -> "PhotonPMF":
        counts = np.asarray(counts, dtype=float)
        total = counts.sum()
        if total <= 0:
            raise DomainError("no counts")
        probs = counts / total
        return cls(probs, max(0.0, 1.0 - math.fsum(probs)))

    @property
    def n_max(self) -> int:
        return self.probs.size - 1

    def truncate(self, n_max: int) -> "PhotonPMF":
        """Keep p_0..p_nmax and fold everything above into the tail."""
        if n_max < 0:
            raise DomainError("n_max must be non-negative")
        if n_max >= self.n_max:
            return self
        kept = self.probs[: n_max + 1]
        return PhotonPMF(kept, self.tail_mass + math.fsum(self.probs[n_max + 1 :]))

    def padded(self, size: int) -> np.ndarray:
        """Probabilities zero-padded (never truncated) to at least ``size`` entries."""
        out = np.zeros(max(size, self.probs.size))
        out[: self.probs.size] = self.probs
        return out

    def mean(self) -> float:
        n = np.arange(self.probs.size)
        return float(np.dot(n, self.probs))


def bose_einstein_pmf(mean: float, n_max: int) -> PhotonPMF:
    """Geometric photon statistics of single-mode thermal light.

    ``p_n = mean**n / (mean + 1)**(n + 1)``; the tail beyond ``n_max`` is the
    closed-form geometric remainder ``(mean / (mean + 1))**(n_max + 1)``.
    """
    if not mean > 0:
        raise DomainError(f"Bose-Einstein mean must be positive, got {mean}")
    if n_max < 0:
        raise DomainError("n_max must be non-negative")
    n = np.arange(n_max + 1)
    log_ratio = math.log(mean) - math.log1p(mean)
    probs = np.exp(n * log_ratio - math.log1p(mean))
    tail = math.exp((n_max + 1) * log_ratio)
    return PhotonPMF(probs, tail)


def poisson_pmf(mean: float, n_max: int) -> PhotonPMF:
    if mean < 0:
        raise DomainError(f"Poisson mean must be non-negative, got {mean}")
    n = np.arange(n_max + 1)
    probs = np.exp(xlogy(n, mean) - mean - gammaln(n + 1))
    return PhotonPMF.from_probs(probs)


def uniform_truncated_pmf(n_lo: int, n_hi: int) -> PhotonPMF:
    if not 0 <= n_lo <= n_hi:
        raise DomainError(f"need 0 <= n_lo <= n_hi, got ({n_lo}, {n_hi})")
    probs = np.zeros(n_hi + 1)
    probs[n_lo:] = 1.0 / (n_hi - n_lo + 1)
    return PhotonPMF(probs, 0.0)


# ---------------------------------------------------------------------------
# intensity models


class IntensityModel:
    """Base class for a probability distribution of the integrated intensity W.

    Subclasses provide a vectorised density, CDF and survival function plus
    the first two moments.  Point masses report an infinite density at their
    location.
    """

    def pdf(self, w):
        raise NotImplementedError

    def cdf(self, w):
        raise NotImplementedError

    def sf(self, w):
        return 1.0 - self.cdf(w)

    def mean(self) -> float:
        raise NotImplementedError

    def variance(self) -> float:
        raise NotImplementedError

    def components(self):
        """Yield ``(weight, model)`` pairs of the flattened mixture."""
        yield 1.0, self

    def mass_between(self, lo, hi):
        """Probability of the half-open interval ``(lo, hi]`` (vectorised)."""
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        c_lo = self.cdf(lo)
        # difference of survival functions keeps precision in the upper tail
        return np.where(c_lo > 0.5, self.sf(lo) - self.sf(hi), self.cdf(hi) - c_lo)


@dataclass(frozen=True)
class NegativeExponential(IntensityModel):
    """``P(W) = exp(-W/mean) / mean``; yields Bose-Einstein photon statistics."""

    mean_w: float

    def __post_init__(self):
        if not self.mean_w > 0:
            raise DomainError("negative-exponential mean must be positive")

    def pdf(self, w):
        w = np.asarray(w, dtype=float)
        return np.where(w >= 0, np.exp(-np.maximum(w, 0) / self.mean_w) / self.mean_w, 0.0)

    def cdf(self, w):
        w = np.maximum(np.asarray(w, dtype=float), 0.0)
        return -np.expm1(-w / self.mean_w)

    def sf(self, w):
        w = np.maximum(np.asarray(w, dtype=float), 0.0)
        return np.exp(-w / self.mean_w)

    def mean(self):
        return self.mean_w

    def variance(self):
        return self.mean_w**2


@dataclass(frozen=True)
class LogNormal(IntensityModel):
    """ln W normally distributed with mean ``omega`` and standard deviation ``sigma``."""

    omega: float
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise DomainError("log-normal sigma must be positive")

    def _z(self, w):
        w = np.maximum(np.asarray(w, dtype=float), 0.0)
        with np.errstate(divide="ignore"):
            return (np.log(w) - self.omega) / self.sigma

    def pdf(self, w):
        w = np.asarray(w, dtype=float)
        pos = w > 0
        ws = np.where(pos, w, 1.0)
        z = (np.log(ws) - self.omega) / self.sigma
        val = np.exp(-0.5 * z * z) / (math.sqrt(2 * math.pi) * self.sigma * ws)
        return np.where(pos, val, 0.0)

    def cdf(self, w):
        return ndtr(self._z(w))

    def sf(self, w):
        return ndtr(-self._z(w))

    def mean(self):
        return math.exp(self.omega + 0.5 * self.sigma**2)

    def variance(self):
        s2 = self.sigma**2
        return math.expm1(s2) * math.exp(2 * self.omega + s2)


@dataclass(frozen=True)
class Normal(IntensityModel):
    """Normal intensity, truncated at zero and renormalised.

    Only parameters whose truncated mass ``Phi(-mean/sigma)`` is below 1e-6
    are accepted.
    """

    mean_w: float
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise DomainError("normal sigma must be positive")
        cut = float(ndtr(-self.mean_w / self.sigma))
        if cut >= _NORMAL_TRUNCATION_LIMIT:
            raise DomainError(
                f"normal model N({self.mean_w}, {self.sigma}^2) puts {cut:.3g} "
                "of its mass below zero"
            )
        object.__setattr__(self, "_keep", 1.0 - cut)
        object.__setattr__(self, "_cut", cut)

    def pdf(self, w):
        w = np.asarray(w, dtype=float)
        z = (w - self.mean_w) / self.sigma
        val = np.exp(-0.5 * z * z) / (math.sqrt(2 * math.pi) * self.sigma * self._keep)
        return np.where(w >= 0, val, 0.0)

    def cdf(self, w):
        w = np.maximum(np.asarray(w, dtype=float), 0.0)
        return (ndtr((w - self.mean_w) / self.sigma) - self._cut) / self._keep

    def sf(self, w):
        w = np.maximum(np.asarray(w, dtype=float), 0.0)
        return ndtr((self.mean_w - w) / self.sigma) / self._keep

    def _trunc(self):
        alpha = -self.mean_w / self.sigma
        lam = math.exp(-0.5 * alpha * alpha) / math.sqrt(2 * math.pi) / self._keep
        return alpha, lam

    def mean(self):
        _, lam = self._trunc()
        return self.mean_w + self.sigma * lam

    def variance(self):
        alpha, lam = self._trunc()
        return self.sigma**2 * (1.0 + alpha * lam - lam * lam)


@dataclass(frozen=True)
class PointMass(IntensityModel):
    """Constant intensity ``w``; gives Poisson photon statistics."""

    w: float

    def __post_init__(self):
        if not self.w >= 0:
            raise DomainError("point-mass intensity must be non-negative")

    def pdf(self, w):
        w = np.asarray(w, dtype=float)
        return np.where(w == self.w, np.inf, 0.0)

    def cdf(self, w):
        return np.where(np.asarray(w, dtype=float) >= self.w, 1.0, 0.0)

    def sf(self, w):
        return np.where(np.asarray(w, dtype=float) >= self.w, 0.0, 1.0)

    def mean(self):
        return self.w

    def variance(self):
        return 0.0


@dataclass(frozen=True)
class Mixture(IntensityModel):
    weights: tuple
    parts: tuple = field(default=())

    def __post_init__(self):
        weights = tuple(float(x) for x in self.weights)
        parts = tuple(self.parts)
        if len(weights) != len(parts) or not parts:
            raise DomainError("mixture needs one weight per component")
        if any(x < 0 for x in weights):
            raise DomainError("mixture weights must be non-negative")
        if abs(math.fsum(weights) - 1.0) > _NORM_TOL:
            raise DomainError(f"mixture weights sum to {math.fsum(weights)!r}")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "parts", parts)

    def components(self):
        for wt, part in zip(self.weights, self.parts):
            for sub_wt, sub in part.components():
                yield wt * sub_wt, sub

    def _sum(self, method, w):
        return sum(wt * getattr(part, method)(w) for wt, part in zip(self.weights, self.parts) if wt > 0)

    def pdf(self, w):
        return self._sum("pdf", w)

    def cdf(self, w):
        return self._sum("cdf", w)

    def sf(self, w):
        return self._sum("sf", w)

    def mass_between(self, lo, hi):
        return sum(wt * part.mass_between(lo, hi) for wt, part in zip(self.weights, self.parts) if wt > 0)

    def mean(self):
        return math.fsum(wt * p.mean() for wt, p in zip(self.weights, self.parts))

    def variance(self):
        m = self.mean()
        second = math.fsum(wt * (p.variance() + p.mean() ** 2) for wt, p in zip(self.weights, self.parts))
        return second - m * m


def eval_density(model: IntensityModel, w: float) -> float:
    """Density of ``model`` at ``w`` (0 outside the support)."""
    if w < 0:
        raise DomainError("intensity must be non-negative")
    return float(model.pdf(w))


# ---------------------------------------------------------------------------
# modulator levels


def level_grid(w_max: float, n_levels: int = N_LEVELS, step_db: float = STEP_DB) -> np.ndarray:
    """Intensities ``w_max * 10**(-step_db * i / 10)`` for i = 0..n_levels-1."""
    if not w_max > 0:
        raise DomainError("w_max must be positive")
    return w_max * 10.0 ** (-step_db * np.arange(n_levels) / 10.0)


@dataclass(frozen=True)
class LevelTable:
    """Modulator program: level intensities and their probabilities.

    ``levels[0] == w_max`` and each further level is ``step_db`` weaker.  The
    hardware grid is 128 levels at 0.25 dB; other grids are allowed for
    numerical work.
    """

    w_max: float
    probs: np.ndarray
    step_db: float = STEP_DB

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        if probs.ndim != 1 or probs.size < 1:
            raise DomainError("level table needs a 1-d probability vector")
        if np.any(probs < 0):
            raise DomainError("level probabilities must be non-negative")
        if abs(math.fsum(probs) - 1.0) > _TABLE_NORM_TOL:
            raise DomainError(f"level probabilities sum to {math.fsum(probs)!r}")
        if not self.step_db > 0:
            raise DomainError("step_db must be positive")
        object.__setattr__(self, "w_max", float(self.w_max))
        object.__setattr__(self, "probs", _frozen(probs))
        object.__setattr__(self, "levels", _frozen(level_grid(self.w_max, probs.size, self.step_db)))

    @classmethod
    def single(cls, w_max: float, index: int = 0, n_levels: int = N_LEVELS) -> "LevelTable":
        probs = np.zeros(n_levels)
        probs[index] = 1.0
        return cls(w_max, probs)

    @property
    def n_levels(self) -> int:
        return self.probs.size

    @property
    def w_min(self) -> float:
        return float(self.levels[-1])

    @property
    def dynamic_range_db(self) -> float:
        return self.step_db * (self.n_levels - 1)

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.probs > 0)

    def mean(self) -> float:
        return float(np.dot(self.probs, self.levels))

    def variance(self) -> float:
        m = self.mean()
        return float(np.dot(self.probs, (self.levels - m) ** 2))

    def to_dict(self) -> dict:
        return {
            "w_max": self.w_max,
            "step_db": self.step_db,
            "levels": self.levels.tolist(),
            "probs": self.probs.tolist(),
        }


def discretize(
    model: IntensityModel,
    w_max: float,
    n_levels: int = N_LEVELS,
    step_db: float = STEP_DB,
) -> LevelTable:
    """Assign the model's probability mass to the nearest level in log space.

    Bin edges are the geometric midpoints between adjacent levels; the mass
    above the top edge goes to level 0 and the mass below the bottom edge to
    the weakest level.
    """
    levels = level_grid(w_max, n_levels, step_db)
    mids = np.sqrt(levels[:-1] * levels[1:])
    upper = np.concatenate(([np.inf], mids))
    lower = np.concatenate((mids, [0.0]))
    # (0, mids[-1]] must also catch an atom exactly at zero
    lower[-1] = -1.0
    mass = np.clip(model.mass_between(lower, upper), 0.0, None)

    # closed range, widened by round-off so atoms sitting on the end levels count
    inside = float(model.mass_between(levels[-1] * (1 - 1e-12), levels[0] * (1 + 1e-12)))
    if inside < 0.5:
        warnings.warn(
            f"only {inside:.3g} of the intensity mass lies inside "
            f"[{levels[-1]:.4g}, {levels[0]:.4g}]",
            RangeCoverageWarning,
            stacklevel=2,
        )
    total = math.fsum(mass)
    if total <= 0:
        raise DomainError("model puts no mass on the level grid")
    return LevelTable(w_max, mass / total, step_db)
