"""Random modulation sequences and Poisson photon arrivals."""
from __future__ import annotations

import numpy as np

from ..distributions import LevelTable
from .timeline import ARRIVALS, LEVELS, TimelineConfig, make_rng

__all__ = [
    "AliasTable",
    "generate_level_sequence",
    "simulate_arrivals",
    "block_arrivals",
    "StreamingRequired",
    "BLOCK_PERIODS",
    "MAX_EVENTS_IN_MEMORY",
]

# periods per RNG block; fixed so that results never depend on worker count
BLOCK_PERIODS = 256
MAX_EVENTS_IN_MEMORY = 60_000_000


class StreamingRequired(MemoryError):
    """The requested record is too large to materialise; use the streaming pipeline."""


class AliasTable:
    """Vose's alias method for O(1) draws from a finite distribution."""

    def __init__(self, probs):
        p = np.asarray(probs, dtype=float)
        if p.ndim != 1 or p.size == 0 or np.any(p < 0) or p.sum() <= 0:
            raise ValueError("alias table needs non-negative weights with positive sum")
        k = p.size
        scaled = p * (k / p.sum())
        prob = np.ones(k)
        alias = np.arange(k)
        small = [i for i in range(k) if scaled[i] < 1.0]
        large = [i for i in range(k) if scaled[i] >= 1.0]
        while small and large:
            s = small.pop()
            g = large.pop()
            prob[s] = scaled[s]
            alias[s] = g
            scaled[g] -= 1.0 - scaled[s]
            (small if scaled[g] < 1.0 else large).append(g)
        # leftovers are 1 up to round-off
        for i in small + large:
            prob[i] = 1.0
            alias[i] = i
        self.prob = prob
        self.alias = alias

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        col = rng.integers(0, self.prob.size, size)
        keep = rng.random(size) < self.prob[col]
        return np.where(keep, col, self.alias[col])


def generate_level_sequence(table: LevelTable, n_periods: int, seed: int) -> np.ndarray:
    """I.i.d. level indices, one per modulation period."""
    if n_periods < 1:
        raise ValueError("n_periods must be at least 1")
    return AliasTable(table.probs).sample(make_rng(seed, LEVELS), n_periods)


def block_arrivals(
    sequence: np.ndarray,
    first_period: int,
    table: LevelTable,
    cfg: TimelineConfig,
    seed: int,
) -> np.ndarray:
    """Photon times for the periods ``first_period + arange(len(sequence))``.

    ``first_period`` must be a multiple of :data:`BLOCK_PERIODS`; the block's
    random stream is keyed by its index.
    """
    rng = make_rng(seed, ARRIVALS, first_period // BLOCK_PERIODS)
    expected = table.levels[sequence] * cfg.windows_per_period
    counts = rng.poisson(expected)
    period = np.repeat(np.arange(first_period, first_period + len(sequence)), counts)
    times = period * cfg.mod_period + rng.random(period.size) * cfg.mod_period
    # offsets stay inside their own period, so a global sort is a per-period sort
    times.sort()
    return times


def simulate_arrivals(
    sequence,
    table: LevelTable,
    cfg: TimelineConfig,
    seed: int,
) -> np.ndarray:
    """Sorted photon arrival times for a whole level sequence.

    Within a period holding level i the arrivals are a homogeneous Poisson
    process with W_i expected photons per detection window.  Level switching
    is instantaneous.
    """
    sequence = np.asarray(sequence)
    expected = float(np.sum(table.levels[sequence])) * cfg.windows_per_period
    if expected > MAX_EVENTS_IN_MEMORY:
        raise StreamingRequired(
            f"about {expected:.3g} photons expected; use photongen.modsim.run_simulation"
        )
    parts = [
        block_arrivals(sequence[s : s + BLOCK_PERIODS], s, table, cfg, seed)
        for s in range(0, len(sequence), BLOCK_PERIODS)
    ]
    return np.concatenate(parts) if parts else np.zeros(0)
