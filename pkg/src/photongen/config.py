"""JSON experiment configuration.

A config names exactly one target, either photon statistics to be
inverted or an intensity distribution to be discretised::

    {
      "name": "be1",
      "target": {"photon": {"family": "bose_einstein", "mean": 1.0}},
      "n_max": 10,
      "w_max": 15.0,
      "timeline": {"total_time": 10.0},
      "detector": "ideal",
      "seed": 1,
      "outputs": "out/be1"
    }

Unknown keys are rejected everywhere.  See README.md for the full schema.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .distributions import (
    IntensityModel,
    LogNormal,
    Mixture,
    NegativeExponential,
    Normal,
    PhotonPMF,
    PointMass,
    bose_einstein_pmf,
    poisson_pmf,
    uniform_truncated_pmf,
)
from .mandel import forward_continuous
from .modsim.timeline import DetectorParams, ExponentialDelay, HistogramDelay, TimelineConfig

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "parse_intensity",
    "parse_photon",
    "load_config",
]


class ConfigError(ValueError):
    pass


def _check_keys(d: dict, required: set, optional: set = frozenset(), where: str = "") -> None:
    if not isinstance(d, dict):
        raise ConfigError(f"{where or 'config'}: expected an object, got {type(d).__name__}")
    keys = set(d)
    unknown = keys - required - set(optional)
    if unknown:
        raise ConfigError(f"{where or 'config'}: unknown key(s) {sorted(unknown)}")
    missing = required - keys
    if missing:
        raise ConfigError(f"{where or 'config'}: missing key(s) {sorted(missing)}")


def parse_intensity(node: dict, where: str = "intensity") -> IntensityModel:
    family = node.get("family") if isinstance(node, dict) else None
    if family == "negexp":
        _check_keys(node, {"family", "mean"}, where=where)
        return NegativeExponential(float(node["mean"]))
    if family == "lognormal":
        _check_keys(node, {"family", "omega", "sigma"}, where=where)
        return LogNormal(float(node["omega"]), float(node["sigma"]))
    if family == "normal":
        _check_keys(node, {"family", "mean", "sigma"}, where=where)
        return Normal(float(node["mean"]), float(node["sigma"]))
    if family == "point":
        _check_keys(node, {"family", "w"}, where=where)
        return PointMass(float(node["w"]))
    if family == "mixture":
        _check_keys(node, {"family", "components"}, where=where)
        weights, parts = [], []
        for k, comp in enumerate(node["components"]):
            _check_keys(comp, {"weight", "model"}, where=f"{where}.components[{k}]")
            weights.append(_number(comp["weight"]))
            parts.append(parse_intensity(comp["model"], f"{where}.components[{k}].model"))
        return Mixture(tuple(weights), tuple(parts))
    raise ConfigError(f"{where}: unknown intensity family {family!r}")


def _number(v) -> float:
    """Numbers, or fractions written as strings such as "1/3"."""
    if isinstance(v, str) and "/" in v:
        num, den = v.split("/")
        return float(num) / float(den)
    return float(v)


def parse_photon(node: dict, n_max: int, where: str = "photon") -> PhotonPMF:
    """Photon-number target truncated to ``n_max``."""
    family = node.get("family") if isinstance(node, dict) else None
    if family == "bose_einstein":
        _check_keys(node, {"family", "mean"}, where=where)
        return bose_einstein_pmf(float(node["mean"]), n_max)
    if family == "poisson":
        _check_keys(node, {"family", "mean"}, where=where)
        return poisson_pmf(float(node["mean"]), n_max)
    if family == "uniform":
        _check_keys(node, {"family", "n_lo", "n_hi"}, where=where)
        return uniform_truncated_pmf(int(node["n_lo"]), int(node["n_hi"])).truncate(n_max)
    if family == "mandel":
        _check_keys(node, {"family", "model"}, where=where)
        return forward_continuous(parse_intensity(node["model"], f"{where}.model"), n_max)
    if family == "explicit":
        _check_keys(node, {"family", "probs"}, where=where)
        return PhotonPMF.from_probs(node["probs"]).truncate(n_max)
    raise ConfigError(f"{where}: unknown photon family {family!r}")


def parse_detector(node) -> DetectorParams:
    if node == "ideal":
        return DetectorParams.ideal()
    if node is None or node == "default":
        return DetectorParams()
    fields = {"dead_time", "afterpulse_prob", "afterpulse_delay", "twilight_constant", "dark_rate"}
    _check_keys(node, set(), fields, where="detector")
    kwargs = {k: float(v) for k, v in node.items() if k != "afterpulse_delay"}
    delay = node.get("afterpulse_delay")
    if delay is not None:
        model = delay.get("model") if isinstance(delay, dict) else None
        if model == "exponential":
            _check_keys(delay, {"model"}, {"mean"}, where="detector.afterpulse_delay")
            kwargs["afterpulse_delay"] = ExponentialDelay(float(delay.get("mean", 100e-9)))
        elif model == "histogram":
            _check_keys(delay, {"model"}, {"file", "edges", "weights"}, where="detector.afterpulse_delay")
            if "file" in delay:
                kwargs["afterpulse_delay"] = HistogramDelay.from_file(delay["file"])
            else:
                kwargs["afterpulse_delay"] = HistogramDelay(tuple(delay["edges"]), tuple(delay["weights"]))
        else:
            raise ConfigError(f"detector.afterpulse_delay: unknown model {model!r}")
    return DetectorParams(**kwargs)


def parse_timeline(node: dict) -> TimelineConfig:
    _check_keys(node, {"total_time"}, {"window_tau", "mod_period", "coincidence_window"}, where="timeline")
    return TimelineConfig(**{k: float(v) for k, v in node.items()})


@dataclass
class ExperimentConfig:
    name: str
    n_max: int
    seed: int
    timeline: TimelineConfig
    detector: DetectorParams
    photon_target: PhotonPMF | None = None
    intensity_target: IntensityModel | None = None
    w_max: float | None = None
    w_scan: tuple | None = None
    outputs: str | None = None
    n_plot: int | None = None
    g2_delays: np.ndarray | None = None
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def is_photon_target(self) -> bool:
        return self.photon_target is not None


_TOP_KEYS = {
    "name", "target", "n_max", "w_max", "w_scan", "timeline", "detector",
    "seed", "outputs", "n_plot", "g2",
}


def _parse_g2(node) -> np.ndarray:
    if isinstance(node, dict) and "delays" in node:
        _check_keys(node, {"delays"}, where="g2")
        return np.asarray(node["delays"], dtype=float)
    _check_keys(node, {"max_delay", "step"}, where="g2")
    step = float(node["step"])
    n = int(math.floor(float(node["max_delay"]) / step + 1e-9))
    return np.arange(-n, n + 1) * step


def parse_config(data: dict) -> ExperimentConfig:
    _check_keys(data, {"target", "n_max", "timeline"}, _TOP_KEYS - {"target", "n_max", "timeline"})
    target = data["target"]
    if not isinstance(target, dict) or len(target) != 1 or next(iter(target)) not in ("photon", "intensity"):
        raise ConfigError('target: need exactly one of "photon" or "intensity"')
    n_max = int(data["n_max"])
    if n_max < 0:
        raise ConfigError("n_max must be non-negative")
    cfg = ExperimentConfig(
        name=str(data.get("name", "experiment")),
        n_max=n_max,
        seed=int(data.get("seed", 0)),
        timeline=parse_timeline(data["timeline"]),
        detector=parse_detector(data.get("detector")),
        outputs=data.get("outputs"),
        n_plot=int(data["n_plot"]) if "n_plot" in data else None,
        raw=data,
    )
    if "photon" in target:
        cfg.photon_target = parse_photon(target["photon"], n_max)
    else:
        cfg.intensity_target = parse_intensity(target["intensity"])
    if "w_max" in data and "w_scan" in data:
        raise ConfigError("give either w_max or w_scan, not both")
    if "w_max" in data:
        cfg.w_max = float(data["w_max"])
    elif "w_scan" in data:
        scan = data["w_scan"]
        _check_keys(scan, {"lo", "hi", "steps"}, where="w_scan")
        cfg.w_scan = (float(scan["lo"]), float(scan["hi"]), int(scan["steps"]))
    elif cfg.intensity_target is not None:
        raise ConfigError("intensity targets need w_max")
    else:
        raise ConfigError("need w_max or w_scan")
    if "g2" in data:
        cfg.g2_delays = _parse_g2(data["g2"])
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parse_config(data)
