"""File formats for click records, histograms and g2 traces.

Click files are little-endian: an 8-byte magic, the record duration as a
u64 in picoseconds, then one u64 picosecond timestamp per click.
"""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .counting import ClickStream, CountHistogram, G2Trace

CLICK_MAGIC = b"PGCLICK1"
PS = 1e12


def write_clicks(path, stream: ClickStream) -> None:
    ps = np.rint(stream.timestamps * PS).astype("<u8")
    with open(path, "wb") as fh:
        fh.write(CLICK_MAGIC)
        fh.write(np.array([round(stream.duration * PS)], dtype="<u8").tobytes())
        fh.write(ps.tobytes())


def read_clicks(path, dead_time: float = 0.0) -> ClickStream:
    """Load a click file.  Timestamps come back quantised to 1 ps.

    The dead-time invariant is not re-checked against ``dead_time`` beyond
    what 1 ps quantisation preserves, so pass 0 unless you need the check.
    """
    raw = Path(path).read_bytes()
    if raw[:8] != CLICK_MAGIC:
        raise ValueError(f"{path}: not a click file")
    duration = int(np.frombuffer(raw[8:16], dtype="<u8")[0]) / PS
    ts = np.frombuffer(raw[16:], dtype="<u8").astype(float) / PS
    return ClickStream(ts, duration, dead_time)


def fmt(x: float) -> str:
    """17 significant digits, so CSV output round-trips and is reproducible."""
    return format(float(x), ".17g")


def write_histogram_csv(path, hist: CountHistogram) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "count", "probability"])
        total = hist.window_count
        for n, c in enumerate(hist.counts_per_n):
            w.writerow([n, int(c), fmt(c / total if total else 0.0)])


def write_g2_csv(path, trace: G2Trace) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["delay_s", "g2", "stderr", "coincidences"])
        for d, g, e, c in zip(trace.delays, trace.g2, trace.stderr, trace.coincidences):
            w.writerow([fmt(d), fmt(g), fmt(e), int(c)])
