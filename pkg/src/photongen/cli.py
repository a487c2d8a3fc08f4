"""Command-line front end: invert, run, g2, forward, compare.

Exit codes: 0 success, 1 inexact inversion or degenerate run, 2 bad input.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig, load_config
from .distributions import DomainError, LevelTable, PhotonPMF, discretize
from .inversion import InversionResult, invert_statistics, load_program, scan_wmax
from .mandel import NumericalFailure, forward_continuous, forward_discrete
from .metrics import confidence_band, g2_zero_from_pmf, total_variation
from .modsim import DetectorParams, g2_estimate, run_simulation
from .modsim.io import fmt, write_clicks, write_g2_csv, write_histogram_csv

log = logging.getLogger("photongen")

OUTPUT_ENV = "PHOTONGEN_OUTPUT_DIR"
DEFAULT_G2_DELAYS = np.arange(-20, 21) * 1e-4


class CliError(Exception):
    """Raised for failures that map onto a non-zero exit code."""

    def __init__(self, message: str, code: int = 2):
        super().__init__(message)
        self.code = code


def _output_dir(args, cfg: ExperimentConfig | None) -> Path:
    if getattr(args, "out", None):
        out = Path(args.out)
    elif cfg is not None and cfg.outputs:
        out = Path(cfg.outputs)
    else:
        out = Path(os.environ.get(OUTPUT_ENV, "."))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    return cfg


def _invert(cfg: ExperimentConfig) -> InversionResult:
    if not cfg.is_photon_target:
        raise CliError("inversion needs a photon target")
    if cfg.w_scan is not None:
        res, w_max = scan_wmax(cfg.photon_target, *cfg.w_scan)
        log.info("w_max scan picked %.6g", w_max)
        return res
    return invert_statistics(cfg.photon_target, cfg.w_max)


def _level_table(args, cfg: ExperimentConfig) -> tuple[LevelTable, dict]:
    """Level table from --program, from inversion, or by discretising the intensity target."""
    if getattr(args, "program", None):
        return load_program(args.program), {"source": "program"}
    if cfg.is_photon_target:
        res = _invert(cfg)
        if not res.exact:
            print(f"warning: inversion not exact (residual {res.residual_norm:.3e})", file=sys.stderr)
        return res.table, {"source": "inversion", "exact": res.exact, "residual_norm": res.residual_norm}
    return discretize(cfg.intensity_target, cfg.w_max), {"source": "discretized"}


def _model_pmf(cfg: ExperimentConfig, n_max: int) -> PhotonPMF:
    if cfg.is_photon_target:
        return cfg.photon_target.truncate(n_max)
    return forward_continuous(cfg.intensity_target, n_max)


def _write_pmf_csv(path: Path, pmf: PhotonPMF) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "p_n"])
        for n, p in enumerate(pmf.probs):
            w.writerow([n, fmt(p)])


def read_pmf_csv(path) -> PhotonPMF:
    """Read ``n,p_n`` (or a histogram CSV with a ``probability`` column)."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise CliError(f"{path}: no rows")
    col = "p_n" if "p_n" in rows[0] else "probability"
    if col not in rows[0] or "n" not in rows[0]:
        raise CliError(f"{path}: need columns n and p_n")
    n = np.array([int(r["n"]) for r in rows])
    probs = np.zeros(n.max() + 1)
    probs[n] = [float(r[col]) for r in rows]
    tail = max(0.0, 1.0 - math.fsum(probs))
    return PhotonPMF(probs, tail)


def _write_plot_csv(path: Path, data: PhotonPMF, model: PhotonPMF, window_count: int) -> None:
    lo, hi = confidence_band(model, window_count)
    size = model.probs.size
    p_data = data.padded(size)[:size]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "p_data", "p_model", "delta", "band_lo", "band_hi",
                    "p_data_disp", "p_model_disp", "delta_disp"])
        for n in range(size):
            d = p_data[n] - model.probs[n]
            w.writerow([n, fmt(p_data[n]), fmt(model.probs[n]), fmt(d), fmt(lo[n]), fmt(hi[n]),
                        f"{p_data[n]:.6g}", f"{model.probs[n]:.6g}", f"{d:.3e}"])


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# subcommands


def cmd_invert(args) -> int:
    cfg = _load(args)
    res = _invert(cfg)
    out = _output_dir(args, cfg)
    res.dump(out / "program.json")
    print(f"w_max         {res.table.w_max:.6g}")
    print(f"residual_norm {res.residual_norm:.3e}")
    print(f"support_size  {res.support_size}")
    print(f"exact         {str(res.exact).lower()}")
    return 0 if res.exact else 1


def _simulate_and_report(cfg, table, detector, out: Path, suffix: str, threads: int, n_plot: int, meta):
    sim = run_simulation(table, cfg.timeline, detector, cfg.seed, threads=threads)
    hist = sim.histogram
    write_histogram_csv(out / f"histogram{suffix}.csv", hist)
    model = _model_pmf(cfg, n_plot)
    data = hist.to_pmf().truncate(n_plot)
    report = total_variation(data, model)
    body = report.to_dict()
    body.update(meta)
    body.update({"windows": hist.window_count, "seed": cfg.seed, "n_max": n_plot,
                 "ideal_detector": detector.is_ideal})
    _write_json(out / f"report{suffix}.json", body)
    _write_plot_csv(out / f"pmf_plot{suffix}.csv", data, model, hist.window_count)
    print(f"{'ideal' if suffix else 'detector'}: windows {hist.window_count}  TVD {report.tvd:.4e}")


def cmd_run(args) -> int:
    cfg = _load(args)
    out = _output_dir(args, cfg)
    if cfg.timeline.n_periods == 0:
        from .modsim import CountHistogram

        write_histogram_csv(out / "histogram.csv", CountHistogram.empty())
        print("error: total_time is shorter than one modulation period; no windows to count",
              file=sys.stderr)
        return 1
    table, meta = _level_table(args, cfg)
    n_plot = cfg.n_plot if cfg.n_plot is not None else cfg.n_max
    _simulate_and_report(cfg, table, cfg.detector, out, "", args.threads, n_plot, meta)
    if args.ideal:
        _simulate_and_report(cfg, table, DetectorParams.ideal(), out, "_ideal", args.threads, n_plot, meta)
    return 0


def _parse_delays(text: str) -> np.ndarray:
    """``max:step`` gives a symmetric grid; otherwise a comma list."""
    if ":" in text:
        hi, step = (float(x) for x in text.split(":"))
        n = int(math.floor(hi / step + 1e-9))
        return np.arange(-n, n + 1) * step
    return np.array([float(x) for x in text.split(",")])


def _g2_once(cfg, table, detector, out: Path, suffix: str, delays, threads: int, save_clicks: bool):
    if cfg.timeline.n_periods == 0:
        raise CliError("total_time is shorter than one modulation period", 1)
    sim = run_simulation(table, cfg.timeline, detector, cfg.seed, split=True,
                         keep_clicks=True, threads=threads)
    trace = g2_estimate(sim.clicks, sim.clicks_b, cfg.timeline, delays)
    write_g2_csv(out / f"g2{suffix}.csv", trace)
    if save_clicks:
        write_clicks(out / f"clicks_a{suffix}.bin", sim.clicks)
        write_clicks(out / f"clicks_b{suffix}.bin", sim.clicks_b)
    zero = int(np.argmin(np.abs(trace.delays)))
    print(f"{'ideal' if suffix else 'detector'}: g2({trace.delays[zero]:.3g} s) = "
          f"{trace.g2[zero]:.4f} +- {trace.stderr[zero]:.4f}  correlation {sim.correlation:.4f}")


def cmd_g2(args) -> int:
    cfg = _load(args)
    out = _output_dir(args, cfg)
    if args.delays:
        delays = _parse_delays(args.delays)
    elif cfg.g2_delays is not None:
        delays = cfg.g2_delays
    else:
        delays = DEFAULT_G2_DELAYS
    table, _ = _level_table(args, cfg)
    _g2_once(cfg, table, cfg.detector, out, "", delays, args.threads, args.save_clicks)
    if args.ideal:
        _g2_once(cfg, table, DetectorParams.ideal(), out, "_ideal", delays, args.threads, args.save_clicks)
    return 0


def cmd_forward(args) -> int:
    cfg = _load(args)
    out = _output_dir(args, cfg)
    if args.program:
        pmf = forward_discrete(load_program(args.program), cfg.n_max)
    elif cfg.is_photon_target:
        pmf = forward_discrete(_invert(cfg).table, cfg.n_max)
    else:
        pmf = forward_continuous(cfg.intensity_target, cfg.n_max)
    _write_pmf_csv(out / "forward.csv", pmf)
    print(f"mean {pmf.mean():.6g}  tail beyond n={pmf.n_max}: {pmf.tail_mass:.3e}")
    try:
        print(f"g2(0) {g2_zero_from_pmf(pmf):.6g}")
    except DomainError:
        pass
    return 0


def cmd_compare(args) -> int:
    p = read_pmf_csv(args.a)
    q = read_pmf_csv(args.b)
    report = total_variation(p, q)
    text = report.to_json()
    print(text)
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="photongen", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, simulate=False):
        p.add_argument("config", help="experiment JSON file")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help=f"output directory (default: config 'outputs', then ${OUTPUT_ENV}, then .)")
        if simulate:
            p.add_argument("--program", help="use this modulation-program JSON instead of inverting")
            p.add_argument("--ideal", action="store_true", help="also run with an ideal detector")
            p.add_argument("--threads", type=int, default=1, help="worker threads (never changes results)")

    p = sub.add_parser("invert", help="solve for a modulation program")
    common(p)
    p.set_defaults(func=cmd_invert)

    p = sub.add_parser("run", help="simulate and compare counting statistics")
    common(p, simulate=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("g2", help="simulate a split measurement and estimate g2")
    common(p, simulate=True)
    p.add_argument("--delays", help="'max:step' for a symmetric grid, or a comma list (seconds)")
    p.add_argument("--save-clicks", action="store_true", help="also write both click records")
    p.set_defaults(func=cmd_g2)

    p = sub.add_parser("forward", help="photon-number pmf of the target intensity")
    common(p)
    p.add_argument("--program", help="evaluate this modulation program instead")
    p.set_defaults(func=cmd_forward)

    p = sub.add_parser("compare", help="total-variation distance between two pmf CSVs")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--out", help="also write the JSON report here")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (ConfigError, DomainError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
