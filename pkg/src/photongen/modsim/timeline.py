"""Timing and detector parameters of a simulated measurement."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "TimingHierarchyWarning",
    "TimelineConfig",
    "DetectorParams",
    "ExponentialDelay",
    "HistogramDelay",
    "make_rng",
]


class TimingHierarchyWarning(UserWarning):
    """dead time << window << modulation period << total time is violated."""


# RNG stream tags; the tuple (seed, tag, index...) keys every random stream
LEVELS, ARRIVALS, SPLIT, DETECTOR = 0, 1, 2, 3


def make_rng(seed: int, *key: int) -> np.random.Generator:
    """Counter-based generator for the stream identified by ``(seed, *key)``."""
    ss = np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class TimelineConfig:
    """Detection window, modulation period and measurement time, in seconds."""

    total_time: float
    window_tau: float = 10e-6
    mod_period: float = 1e-3
    coincidence_window: float = 10e-9

    def __post_init__(self):
        for name in ("window_tau", "mod_period", "coincidence_window"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.total_time >= 0:
            raise ValueError("total_time must be non-negative")
        ratio = self.mod_period / self.window_tau
        if abs(ratio - round(ratio)) > 1e-9 * ratio:
            raise ValueError("mod_period must be an integer multiple of window_tau")

    @property
    def windows_per_period(self) -> int:
        return int(round(self.mod_period / self.window_tau))

    @property
    def n_periods(self) -> int:
        return int(math.floor(self.total_time / self.mod_period + 1e-9))

    @property
    def n_windows(self) -> int:
        return self.n_periods * self.windows_per_period

    @property
    def duration(self) -> float:
        return self.n_periods * self.mod_period

    def check_hierarchy(self, dead_time: float = 0.0) -> list[str]:
        """Warn about every adjacent timing pair closer than a factor of 10."""
        pairs = [
            ("dead_time", dead_time, "window_tau", self.window_tau),
            ("window_tau", self.window_tau, "mod_period", self.mod_period),
            ("mod_period", self.mod_period, "total_time", self.total_time),
        ]
        problems = []
        for lo_name, lo, hi_name, hi in pairs:
            if lo > 0 and hi / lo < 10:
                problems.append(f"{hi_name}/{lo_name} = {hi / lo:.3g} < 10")
        for msg in problems:
            warnings.warn(msg, TimingHierarchyWarning, stacklevel=2)
        return problems


@dataclass(frozen=True)
class ExponentialDelay:
    """Afterpulse delay after recovery, exponential with the given mean.

    The default 100 ns mean is an assumption, not a measured value.
    """

    mean: float = 100e-9

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.exponential(self.mean, size)

    def to_dict(self):
        return {"model": "exponential", "mean": self.mean}


@dataclass(frozen=True)
class HistogramDelay:
    """Afterpulse delays drawn from a binned histogram (uniform within a bin)."""

    edges: tuple
    weights: tuple

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if edges.size != weights.size + 1 or np.any(np.diff(edges) <= 0) or edges[0] < 0:
            raise ValueError("histogram needs increasing non-negative edges, one more than weights")
        if np.any(weights < 0) or weights.sum() <= 0:
            raise ValueError("histogram weights must be non-negative and not all zero")
        object.__setattr__(self, "edges", tuple(edges))
        object.__setattr__(self, "weights", tuple(weights))

    @classmethod
    def from_file(cls, path) -> "HistogramDelay":
        """Load ``lo,hi,weight`` rows (seconds); '#' lines and a header are skipped."""
        rows = []
        for line in Path(path).read_text().splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                rows.append([float(v) for v in line.split(",")])
            except ValueError:
                continue
        arr = np.array(rows)
        edges = np.concatenate((arr[:, 0], arr[-1:, 1]))
        return cls(tuple(edges), tuple(arr[:, 2]))

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        edges = np.asarray(self.edges)
        p = np.asarray(self.weights) / math.fsum(self.weights)
        idx = rng.choice(p.size, size=size, p=p)
        return edges[idx] + rng.random(size) * (edges[idx + 1] - edges[idx])

    def to_dict(self):
        return {"model": "histogram", "edges": list(self.edges), "weights": list(self.weights)}


@dataclass(frozen=True)
class DetectorParams:
    """SPAD model: non-paralyzable dead time, afterpulsing, twilight pulses, dark counts.

    Defaults describe the silicon SPAD of the reference setup; use
    :meth:`ideal` for a transparent detector.
    """

    dead_time: float = 23e-9
    afterpulse_prob: float = 0.0235
    afterpulse_delay: object = field(default_factory=ExponentialDelay)
    twilight_constant: float = 2e-9
    dark_rate: float = 0.0

    def __post_init__(self):
        for name in ("dead_time", "afterpulse_prob", "twilight_constant", "dark_rate"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be non-negative")
        if not self.afterpulse_prob < 1:
            raise ValueError("afterpulse_prob must be below 1")
        # back-to-back twilight pulses push the running rate towards 1/dead_time
        if self.twilight_constant > 0 and self.twilight_constant >= self.dead_time:
            raise ValueError("twilight_constant must be below dead_time or twilight chains never stop")

    @classmethod
    def ideal(cls) -> "DetectorParams":
        return cls(dead_time=0.0, afterpulse_prob=0.0, twilight_constant=0.0, dark_rate=0.0)

    @property
    def is_ideal(self) -> bool:
        return (
            self.dead_time == 0
            and self.afterpulse_prob == 0
            and self.twilight_constant == 0
            and self.dark_rate == 0
        )
