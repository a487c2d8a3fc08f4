"""Streaming end-to-end simulation.

Periods are processed in fixed blocks of :data:`BLOCK_PERIODS`.  Photon
generation and beam splitting for a block use random streams keyed by the
block index and may run on worker threads; detectors and counting consume
the blocks strictly in order.  Results are therefore identical for any
number of threads.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..distributions import LevelTable
from .counting import ClickStream, CountHistogram, CountMoments, window_counts
from .detector import Detector
from .sampling import BLOCK_PERIODS, block_arrivals, generate_level_sequence
from .timeline import SPLIT, DetectorParams, TimelineConfig, make_rng

__all__ = ["SimulationResult", "run_simulation"]

log = logging.getLogger(__name__)


@dataclass
class SimulationResult:
    """Histograms (and optionally raw clicks) of one simulated run.

    Without splitting only channel A is populated.
    """

    histogram: CountHistogram
    histogram_b: CountHistogram | None = None
    moments: CountMoments | None = None
    clicks: ClickStream | None = None
    clicks_b: ClickStream | None = None
    photons: int = 0
    sequence: np.ndarray | None = field(default=None, repr=False)

    @property
    def correlation(self) -> float:
        return self.moments.correlation() if self.moments is not None else float("nan")


def _make_block(args):
    start, seq, table, cfg, seed, split = args
    photons = block_arrivals(seq, start, table, cfg, seed)
    if not split:
        return start, photons, None
    to_a = make_rng(seed, SPLIT, start // BLOCK_PERIODS).random(photons.size) < 0.5
    return start, photons[to_a], photons[~to_a]


def run_simulation(
    table: LevelTable,
    cfg: TimelineConfig,
    detector: DetectorParams,
    seed: int,
    *,
    split: bool = False,
    detector_b: DetectorParams | None = None,
    keep_clicks: bool = False,
    threads: int = 1,
) -> SimulationResult:
    """Simulate modulation, photon arrivals, detection and windowed counting.

    Parameters
    ----------
    split : bool
        Send the light through a balanced beam splitter onto two detectors
        (``detector`` and ``detector_b``, the latter defaulting to the same
        parameters) and accumulate paired-count moments.
    keep_clicks : bool
        Also return the full click records (needed for g2).
    threads : int
        Worker threads for photon generation; never changes the result.
    """
    n_periods = cfg.n_periods
    if n_periods == 0:
        return SimulationResult(CountHistogram.empty(), CountHistogram.empty() if split else None,
                                CountMoments() if split else None)
    cfg.check_hierarchy(detector.dead_time)
    sequence = generate_level_sequence(table, n_periods, seed)
    wpp = cfg.windows_per_period

    det_a = Detector(detector, seed, channel=0)
    det_b = Detector(detector_b or detector, seed, channel=1) if split else None
    hist_a = CountHistogram.empty()
    hist_b = CountHistogram.empty() if split else None
    moments = CountMoments() if split else None
    kept_a, kept_b = [], []
    photons = 0

    jobs = (
        (s, sequence[s : s + BLOCK_PERIODS], table, cfg, seed, split)
        for s in range(0, n_periods, BLOCK_PERIODS)
    )
    threads = max(1, int(threads))
    with ThreadPoolExecutor(max_workers=threads) as pool:
        blocks = pool.map(_make_block, jobs) if threads > 1 else map(_make_block, jobs)
        for start, ph_a, ph_b in blocks:
            n_per = min(BLOCK_PERIODS, n_periods - start)
            t0 = start * cfg.mod_period
            t1 = (start + n_per) * cfg.mod_period
            if start + n_per == n_periods:
                t1 = cfg.duration
            n_win = n_per * wpp
            first_win = start * wpp

            photons += ph_a.size + (0 if ph_b is None else ph_b.size)
            clicks_a = det_a.process(ph_a, t0, t1)
            ca = window_counts(clicks_a, cfg, n_win, first_win)
            hist_a = hist_a + CountHistogram.from_window_counts(ca)
            if keep_clicks:
                kept_a.append(clicks_a)
            if split:
                clicks_b = det_b.process(ph_b, t0, t1)
                cb = window_counts(clicks_b, cfg, n_win, first_win)
                hist_b = hist_b + CountHistogram.from_window_counts(cb)
                moments.add(ca, cb)
                if keep_clicks:
                    kept_b.append(clicks_b)

    log.debug("simulated %d periods, %d photons", n_periods, photons)
    res = SimulationResult(hist_a, hist_b, moments, photons=photons, sequence=sequence)
    if keep_clicks:
        res.clicks = ClickStream(np.concatenate(kept_a), cfg.duration, detector.dead_time)
        if split:
            res.clicks_b = ClickStream(np.concatenate(kept_b), cfg.duration, (detector_b or detector).dead_time)
    return res
