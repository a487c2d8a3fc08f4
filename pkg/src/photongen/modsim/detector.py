"""SPAD response: dead time, afterpulses, twilight pulses and dark counts.

The detector state depends only on the most recent registered click.  After
a click at t the detector is blind until t + dead_time.  At that instant a
twilight pulse fires with probability ``twilight_constant * mean click
rate``; otherwise an afterpulse is scheduled with ``afterpulse_prob`` at
t + dead_time + delay.  A later photon click supersedes any pending pulse.
"""
from __future__ import annotations

import numpy as np
from numba import njit

from .counting import ClickStream
from .timeline import DETECTOR, DetectorParams, make_rng

__all__ = ["Detector", "apply_detector"]


@njit(cache=True, nogil=True)
def _detector_kernel(events, start, t_end, dead, p_ap, tw_const, state, u_tw, u_ap, delays, out):
    n = events.shape[0]
    pool = u_tw.shape[0]
    last = state[0]
    n_clicks = state[1]
    pending = state[2]
    i = start
    k = 0
    used = 0
    exhausted = False
    while True:
        blind_until = last + dead
        while i < n and events[i] < blind_until:
            i += 1
        t_ev = events[i] if i < n else np.inf
        if pending < t_ev and pending < t_end:
            from_pending = True
            t = pending
        elif i < n:
            from_pending = False
            t = t_ev
        else:
            break
        if used >= pool:
            exhausted = True
            break
        if not from_pending:
            i += 1
        out[k] = t
        k += 1
        n_clicks += 1.0
        last = t
        pending = np.inf
        p_tw = 0.0
        if tw_const > 0.0 and t > 0.0:
            p_tw = min(1.0, tw_const * n_clicks / t)
        if u_tw[used] < p_tw:
            pending = t + dead
        elif u_ap[used] < p_ap:
            pending = t + dead + delays[used]
        used += 1
    state[0] = last
    state[1] = n_clicks
    state[2] = pending
    return i, k, exhausted


class Detector:
    """Stateful detector that consumes photon times chunk by chunk.

    Chunks must be passed in time order; pending afterpulses carry over
    from one chunk to the next.
    """

    def __init__(self, params: DetectorParams, seed: int, channel: int = 0):
        self.params = params
        self.rng = make_rng(seed, DETECTOR, channel)
        # last click, clicks so far, pending pulse time
        self.state = np.array([-np.inf, 0.0, np.inf])

    def _pools(self, size):
        p = self.params
        ones = np.ones(size)
        u_tw = self.rng.random(size) if p.twilight_constant > 0 else ones
        if p.afterpulse_prob > 0:
            u_ap = self.rng.random(size)
            delays = p.afterpulse_delay.sample(self.rng, size)
        else:
            u_ap, delays = ones, np.zeros(size)
        return u_tw, u_ap, delays

    def process(self, events: np.ndarray, t_start: float, t_end: float) -> np.ndarray:
        """Clicks in ``[t_start, t_end)`` produced by the sorted photon times ``events``."""
        p = self.params
        events = np.asarray(events, dtype=float)
        if p.dark_rate > 0:
            n_dark = self.rng.poisson(p.dark_rate * (t_end - t_start))
            dark = t_start + self.rng.random(n_dark) * (t_end - t_start)
            events = np.sort(np.concatenate((events, dark)))
        if p.dead_time == 0 and p.afterpulse_prob == 0 and p.twilight_constant == 0:
            self.state[1] += events.size
            if events.size:
                self.state[0] = events[-1]
            return events.copy()

        chunks = []
        i = 0
        while True:
            size = max(256, events.size - i + 64)
            u_tw, u_ap, delays = self._pools(size)
            out = np.empty(size)
            i, k, exhausted = _detector_kernel(
                events, i, t_end, p.dead_time, p.afterpulse_prob,
                p.twilight_constant, self.state, u_tw, u_ap, delays, out,
            )
            chunks.append(out[:k])
            if not exhausted:
                break
        return np.concatenate(chunks)

    @property
    def click_count(self) -> int:
        return int(self.state[1])


def apply_detector(events, params: DetectorParams, duration: float, seed: int, channel: int = 0) -> ClickStream:
    """Pass a whole photon record through the detector model."""
    events = np.asarray(events, dtype=float)
    if events.size and np.any(np.diff(events) < 0):
        raise ValueError("photon events must be sorted")
    clicks = Detector(params, seed, channel).process(events, 0.0, duration)
    return ClickStream(clicks, duration, params.dead_time)
