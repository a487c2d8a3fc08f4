"""Click records, windowed photon counting, beam splitting and g2."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from ..distributions import PhotonPMF
from .timeline import SPLIT, TimelineConfig, make_rng

__all__ = [
    "ClickStream",
    "CountHistogram",
    "G2Trace",
    "CountMoments",
    "count_windows",
    "window_counts",
    "split_balanced",
    "g2_estimate",
    "triangular_g2",
]


@dataclass(frozen=True)
class ClickStream:
    """Sorted detector click times (s) over a record of ``duration`` seconds.

    Consecutive clicks are at least ``dead_time`` apart, where the gap is
    checked the way the detector applies it: ``t[k+1] >= t[k] + dead_time``.
    """

    timestamps: np.ndarray
    duration: float
    dead_time: float = 0.0

    def __post_init__(self):
        t = np.asarray(self.timestamps, dtype=float)
        if t.ndim != 1:
            raise ValueError("timestamps must be 1-d")
        if t.size > 1 and not np.all(t[1:] >= t[:-1] + self.dead_time):
            raise ValueError("click gaps violate the dead time")
        if t.size and (t[0] < 0 or t[-1] >= self.duration):
            raise ValueError("clicks outside [0, duration)")
        t.setflags(write=False)
        object.__setattr__(self, "timestamps", t)

    def __len__(self):
        return self.timestamps.size

    @property
    def rate(self) -> float:
        return self.timestamps.size / self.duration if self.duration > 0 else 0.0


@dataclass
class CountHistogram:
    """How many detection windows registered n clicks, for each n."""

    counts_per_n: np.ndarray
    window_count: int

    def __post_init__(self):
        self.counts_per_n = np.asarray(self.counts_per_n, dtype=np.int64)
        if int(self.counts_per_n.sum()) != int(self.window_count):
            raise ValueError("histogram counts do not add up to the window count")

    @classmethod
    def empty(cls) -> "CountHistogram":
        return cls(np.zeros(1, dtype=np.int64), 0)

    @classmethod
    def from_window_counts(cls, counts: np.ndarray) -> "CountHistogram":
        counts = np.asarray(counts, dtype=np.int64)
        if counts.size == 0:
            return cls.empty()
        return cls(np.bincount(counts), counts.size)

    def merge(self, other: "CountHistogram") -> "CountHistogram":
        size = max(self.counts_per_n.size, other.counts_per_n.size)
        out = np.zeros(size, dtype=np.int64)
        out[: self.counts_per_n.size] += self.counts_per_n
        out[: other.counts_per_n.size] += other.counts_per_n
        return CountHistogram(out, self.window_count + other.window_count)

    __add__ = merge

    def to_pmf(self) -> PhotonPMF:
        return PhotonPMF.from_counts(self.counts_per_n)

    def as_dict(self) -> dict:
        return {int(n): int(c) for n, c in enumerate(self.counts_per_n) if c}


def window_counts(clicks, cfg: TimelineConfig, n_windows: int | None = None, first_window: int = 0) -> np.ndarray:
    """Number of clicks in each detection window."""
    t = clicks.timestamps if isinstance(clicks, ClickStream) else np.asarray(clicks, dtype=float)
    if n_windows is None:
        duration = clicks.duration if isinstance(clicks, ClickStream) else cfg.duration
        n_windows = int(round(duration / cfg.window_tau))
    idx = np.floor(t / cfg.window_tau).astype(np.int64) - first_window
    # float rounding can push a click sitting on the last edge one bin out
    np.clip(idx, 0, max(n_windows - 1, 0), out=idx)
    return np.bincount(idx, minlength=n_windows)[:n_windows] if n_windows else np.zeros(0, np.int64)


def count_windows(clicks: ClickStream, cfg: TimelineConfig) -> CountHistogram:
    """Tally clicks per ``window_tau`` bin over the whole record."""
    return CountHistogram.from_window_counts(window_counts(clicks, cfg))


def split_balanced(events, seed: int, block: int = 0):
    """Route every event independently to output A or B with probability 1/2.

    Accepts an array of times or a :class:`ClickStream`; returns the same
    kind.
    """
    is_stream = isinstance(events, ClickStream)
    t = events.timestamps if is_stream else np.asarray(events, dtype=float)
    to_a = make_rng(seed, SPLIT, block).random(t.size) < 0.5
    a, b = t[to_a], t[~to_a]
    if is_stream:
        return (
            ClickStream(a, events.duration, events.dead_time),
            ClickStream(b, events.duration, events.dead_time),
        )
    return a, b


@dataclass
class CountMoments:
    """Running sums for the Pearson correlation of paired window counts.

    Kept as Python integers, so merging chunks is exact and order-free.
    """

    n: int = 0
    sa: int = 0
    sb: int = 0
    saa: int = 0
    sbb: int = 0
    sab: int = 0

    def add(self, ca: np.ndarray, cb: np.ndarray) -> None:
        ca = np.asarray(ca, dtype=np.int64)
        cb = np.asarray(cb, dtype=np.int64)
        self.n += int(ca.size)
        self.sa += int(ca.sum())
        self.sb += int(cb.sum())
        self.saa += int(np.dot(ca, ca))
        self.sbb += int(np.dot(cb, cb))
        self.sab += int(np.dot(ca, cb))

    def correlation(self) -> float:
        if self.n < 2:
            return float("nan")
        cov = self.n * self.sab - self.sa * self.sb
        va = self.n * self.saa - self.sa**2
        vb = self.n * self.sbb - self.sb**2
        if va == 0 or vb == 0:
            return float("nan")
        return cov / math.sqrt(va * vb)


@njit(cache=True, nogil=True)
def _count_pairs(ta, tb, lo_off, hi_off):
    """Number of pairs with ``lo_off <= tb - ta < hi_off``; both inputs sorted."""
    lo = 0
    hi = 0
    nb = tb.size
    total = 0
    for t in ta:
        while lo < nb and tb[lo] < t + lo_off:
            lo += 1
        if hi < lo:
            hi = lo
        while hi < nb and tb[hi] < t + hi_off:
            hi += 1
        total += hi - lo
    return total


@dataclass(frozen=True)
class G2Trace:
    delays: np.ndarray
    g2: np.ndarray
    stderr: np.ndarray
    coincidences: np.ndarray


def g2_estimate(a: ClickStream, b: ClickStream, cfg: TimelineConfig, delays) -> G2Trace:
    """Cross-correlation of two click streams at the given delays (s).

    A coincidence is a pair with ``t_b - t_a`` inside the coincidence window
    centred on the delay.  The count is normalised by the accidental rate
    expected from the singles, ``N_a N_b w (T - |d|) / T**2``; the error bar
    is the Poisson error of the coincidence count.
    """
    if abs(a.duration - b.duration) > 1e-12 * max(a.duration, 1.0):
        raise ValueError("streams must have the same duration")
    delays = np.asarray(delays, dtype=float)
    ta, tb = a.timestamps, b.timestamps
    T = a.duration
    half = 0.5 * cfg.coincidence_window
    coinc = np.zeros(delays.size, dtype=np.int64)
    for k, d in enumerate(delays):
        coinc[k] = _count_pairs(ta, tb, d - half, d + half)
    overlap = np.clip(T - np.abs(delays), 0.0, None)
    expected = ta.size * tb.size * cfg.coincidence_window * overlap / T**2 if T > 0 else np.zeros_like(delays)
    with np.errstate(divide="ignore", invalid="ignore"):
        g2 = coinc / expected
        err = np.sqrt(coinc) / expected
    return G2Trace(delays, g2, err, coinc)


def triangular_g2(delays, g2_zero: float, mod_period: float) -> np.ndarray:
    """Delay dependence of g2 for stepwise i.i.d. modulation."""
    d = np.abs(np.asarray(delays, dtype=float))
    return 1.0 + (g2_zero - 1.0) * np.clip(1.0 - d / mod_period, 0.0, None)
