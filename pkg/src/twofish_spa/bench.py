"""Monte Carlo accuracy/runtime sweeps over (sigma, tau, key size) grids."""

from __future__ import annotations

import csv
import io
import os
import struct
import time
from dataclasses import dataclass, field

import numpy as np

from .attack import MaskOrder, attack_multi, attack_noisy, warmup
from .schedule import KEY_SIZES, SecretKey
from .tracesim import NoiseModel, multi_trace, simulate_trace

__all__ = ["BenchConfig", "CellResult", "BenchResult", "run_grid", "emit_report",
           "parse_sigmas", "parse_taus", "cell_seed"]

CSV_COLUMNS = ("key_size", "sigma", "tau", "accuracy", "mean_runtime_s", "readings_used")


@dataclass(frozen=True)
class BenchConfig:
    sigmas: tuple = (0.0,)
    taus: tuple = (0,)
    key_sizes: tuple = (128,)
    runs: int = 200
    base_seed: int = 0
    multi: bool = False
    max_readings: int = 5

    def __post_init__(self):
        for name in ("sigmas", "taus", "key_sizes"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
            if not getattr(self, name):
                raise ValueError(f"{name} grid is empty")
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if any(not s >= 0 for s in self.sigmas):
            raise ValueError("sigmas must be non-negative")
        for t in self.taus:
            MaskOrder.prefix_size(t)
        for b in self.key_sizes:
            if b not in KEY_SIZES:
                raise ValueError(f"unsupported key size {b}")
        if self.max_readings < 1:
            raise ValueError("max_readings must be >= 1")


@dataclass(frozen=True)
class CellResult:
    key_size: int
    sigma: float
    tau: int
    runs: int
    successes: int
    mean_runtime: float
    readings_used: float = 1.0

    @property
    def accuracy(self) -> float:
        return self.successes / self.runs


@dataclass(frozen=True)
class BenchResult:
    config: BenchConfig
    cells: tuple = field(default_factory=tuple)

    def cell(self, key_size, sigma, tau) -> CellResult:
        for c in self.cells:
            if c.key_size == key_size and c.sigma == sigma and c.tau == tau:
                return c
        raise KeyError((key_size, sigma, tau))

    def outcomes(self):
        """Everything except wall-clock timings; reproducible from the config."""
        return tuple((c.key_size, c.sigma, c.tau, c.runs, c.successes, c.readings_used)
                     for c in self.cells)


def _sigma_bits(sigma: float) -> int:
    return struct.unpack("<Q", struct.pack("<d", float(sigma)))[0]


def cell_seed(base_seed, key_size, sigma, tau, run) -> np.random.SeedSequence:
    """Seed of one run, a hash of the run's grid coordinates."""
    return np.random.SeedSequence([int(base_seed), int(key_size), _sigma_bits(sigma), int(tau), int(run)])


def _run_cell(config: BenchConfig, key_size: int, sigma: float, tau: int) -> CellResult:
    successes = 0
    elapsed = 0.0
    readings = 0
    for run in range(config.runs):
        rng = np.random.default_rng(cell_seed(config.base_seed, key_size, sigma, tau, run))
        key = SecretKey.random(rng, key_size)
        trace_seed = int(rng.integers(0, 2**63))
        if config.multi:
            traces = multi_trace(key, sigma, config.max_readings, trace_seed)
            t0 = time.perf_counter()
            report = attack_multi(traces, tau, config.max_readings)
        else:
            trace = simulate_trace(key, NoiseModel(sigma, trace_seed))
            t0 = time.perf_counter()
            report = attack_noisy(trace, tau)
        elapsed += time.perf_counter() - t0
        readings += report.readings_used
        successes += report.key_estimate == key
    return CellResult(key_size=key_size, sigma=sigma, tau=tau, runs=config.runs, successes=successes,
                      mean_runtime=elapsed / config.runs, readings_used=readings / config.runs)


def run_grid(config: BenchConfig, progress=None) -> BenchResult:
    """Run every (key size, sigma, tau) cell; ``progress`` is called with each finished cell."""
    warmup()
    cells = []
    for key_size in config.key_sizes:
        for sigma in config.sigmas:
            for tau in config.taus:
                cell = _run_cell(config, key_size, sigma, tau)
                cells.append(cell)
                if progress is not None:
                    progress(cell)
    return BenchResult(config=config, cells=tuple(cells))


def _csv_text(result: BenchResult) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for c in result.cells:
        writer.writerow([c.key_size, repr(float(c.sigma)), c.tau, repr(c.accuracy),
                         f"{c.mean_runtime:.9f}", repr(c.readings_used)])
    return buf.getvalue()


def _markdown_text(result: BenchResult) -> str:
    cfg = result.config
    sigmas = sorted(set(cfg.sigmas))
    taus = sorted(set(cfg.taus))
    out = []
    for key_size in cfg.key_sizes:
        title = f"## {key_size}-bit key" + (f" (up to {cfg.max_readings} readings)" if cfg.multi else "")
        out += [title, "", "| σ \\ τ | " + " | ".join(str(t) for t in taus) + " |",
                "|---:|" + "---:|" * len(taus)]
        for s in sigmas:
            row = [f"{100 * result.cell(key_size, s, t).accuracy:.1f}" for t in taus]
            out.append(f"| {s:.1f} | " + " | ".join(row) + " |")
        times = [np.mean([result.cell(key_size, s, t).mean_runtime for s in sigmas]) * 1e3 for t in taus]
        out.append("| t(ms) | " + " | ".join(f"{x:.2f}" for x in times) + " |")
        out.append("")
    return "\n".join(out)


def emit_report(result: BenchResult, fmt: str, destination) -> None:
    """Write ``result`` as ``"csv"`` or ``"markdown"`` to a path or text stream."""
    if fmt == "csv":
        text = _csv_text(result)
    elif fmt == "markdown":
        text = _markdown_text(result)
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    if isinstance(destination, (str, os.PathLike)):
        with open(destination, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        destination.write(text)


def parse_sigmas(text: str) -> tuple:
    """``"0:2:0.2"`` (inclusive range) or a comma list."""
    if ":" in text:
        start, stop, step = (float(x) for x in text.split(":"))
        if step <= 0:
            raise ValueError("range step must be positive")
        n = int(np.floor((stop - start) / step + 1e-9)) + 1
        return tuple(round(start + i * step, 10) for i in range(n))
    return tuple(float(x) for x in text.split(","))


def parse_taus(text: str) -> tuple:
    """``"0..8"`` (inclusive) or a comma list."""
    if ".." in text:
        lo, hi = (int(x) for x in text.split(".."))
        return tuple(range(lo, hi + 1))
    return tuple(int(x) for x in text.split(","))
