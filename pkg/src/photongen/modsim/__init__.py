"""Monte Carlo model of the modulated source and the photon-counting detector."""
from .counting import (
    ClickStream,
    CountHistogram,
    CountMoments,
    G2Trace,
    count_windows,
    g2_estimate,
    split_balanced,
    triangular_g2,
    window_counts,
)
from .detector import Detector, apply_detector
from .pipeline import SimulationResult, run_simulation
from .sampling import (
    BLOCK_PERIODS,
    AliasTable,
    StreamingRequired,
    generate_level_sequence,
    simulate_arrivals,
)
from .timeline import (
    DetectorParams,
    ExponentialDelay,
    HistogramDelay,
    TimelineConfig,
    TimingHierarchyWarning,
)

__all__ = [
    "AliasTable",
    "BLOCK_PERIODS",
    "ClickStream",
    "CountHistogram",
    "CountMoments",
    "Detector",
    "DetectorParams",
    "ExponentialDelay",
    "G2Trace",
    "HistogramDelay",
    "SimulationResult",
    "StreamingRequired",
    "TimelineConfig",
    "TimingHierarchyWarning",
    "apply_detector",
    "count_windows",
    "g2_estimate",
    "generate_level_sequence",
    "run_simulation",
    "simulate_arrivals",
    "split_balanced",
    "triangular_g2",
    "window_counts",
]
