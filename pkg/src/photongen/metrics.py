"""Figures of merit: total-variation distance, g2 and photon-number correlation."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .distributions import DomainError, PhotonPMF

__all__ = [
    "ComparisonReport",
    "total_variation",
    "g2_zero_from_pmf",
    "g2_zero_from_intensity",
    "max_g2",
    "correlation_param",
    "confidence_band",
]

_G2_TAIL_LIMIT = 1e-6


@dataclass(frozen=True)
class ComparisonReport:
    """Differences ``p - q`` per photon number, with the tail as its own bin."""

    tvd: float
    per_n_delta: np.ndarray
    tail_delta: float
    worst_set_mass: float

    def to_dict(self) -> dict:
        return {
            "tvd": self.tvd,
            "worst_set_mass": self.worst_set_mass,
            "tail_delta": self.tail_delta,
            "per_n_delta": [float(x) for x in self.per_n_delta],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def total_variation(p: PhotonPMF, q: PhotonPMF) -> ComparisonReport:
    """Half the L1 distance between two pmfs.

    The shorter pmf is zero-padded.  Because the padded region of one pmf
    overlaps the tail of the other, each tail is spread onto nothing: the
    two tail masses are compared as a single extra bin.
    """
    size = max(p.probs.size, q.probs.size)
    delta = p.padded(size) - q.padded(size)
    tail = p.tail_mass - q.tail_mass
    tvd = 0.5 * (math.fsum(np.abs(delta)) + abs(tail))
    positive = math.fsum(delta[delta > 0]) + max(tail, 0.0)
    return ComparisonReport(min(tvd, 1.0), delta, tail, positive)


def g2_zero_from_pmf(p: PhotonPMF) -> float:
    """Zero-delay autocorrelation ``<n(n-1)> / <n>**2`` of a photon pmf."""
    if p.tail_mass >= _G2_TAIL_LIMIT:
        raise DomainError(
            f"tail mass {p.tail_mass:.3g} beyond n_max makes the moments unreliable"
        )
    n = np.arange(p.probs.size)
    mean = float(np.dot(n, p.probs))
    if mean <= 0:
        raise DomainError("g2 undefined for the vacuum")
    return float(np.dot(n * (n - 1.0), p.probs)) / mean**2


def g2_zero_from_intensity(mu: float, sigma2: float) -> float:
    if not mu > 0 or sigma2 < 0:
        raise DomainError("need mu > 0 and sigma2 >= 0")
    return 1.0 + sigma2 / mu**2


def max_g2(dynamic_range_db: float) -> float:
    """Largest g2(0) reachable by mixing two intensities ``d`` apart.

    With ``d = 10**(db/10)`` the optimum mixture gives ``(1 + d)**2 / (4 d)``.
    """
    if dynamic_range_db < 0:
        raise DomainError("dynamic range must be non-negative")
    # 1 + (d - 1)**2 / (4 d) is the same quantity without cancellation near d = 1
    dm1 = math.expm1(dynamic_range_db * math.log(10.0) / 10.0)
    return 1.0 + dm1 * dm1 / (4.0 * (1.0 + dm1))


def correlation_param(mu: float, sigma2: float) -> float:
    """Photon-number correlation between the two outputs of a balanced splitter."""
    if not mu > 0 or sigma2 < 0:
        raise DomainError("need mu > 0 and sigma2 >= 0")
    if sigma2 == 0:
        return 0.0
    return 1.0 / (1.0 + 2.0 * mu / sigma2)


def confidence_band(p_model: PhotonPMF, window_count: int, k_sigma: float = 2.0):
    """Per-n band ``p_n +/- k sqrt(p_n (1 - p_n) / N)``, clipped to [0, 1]."""
    if window_count < 1:
        raise DomainError("window_count must be at least 1")
    p = p_model.probs
    half = k_sigma * np.sqrt(p * (1.0 - p) / window_count)
    return np.clip(p - half, 0.0, 1.0), np.clip(p + half, 0.0, 1.0)
