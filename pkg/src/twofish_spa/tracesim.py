"""Simulated Hamming-weight traces of the key schedule and their file format.

A trace holds one noisy reading of ``H(v[i, j, k])`` and ``H(w[i, j, k])`` for
every subkey ``i``, row ``j`` and stage ``k = 0 .. R-1``.  Stage ``R`` is left
out since its values are public.

File layout (text, C locale, one value per line)::

    TFSPA1 key_bits=128 R=2 sigma=0.8 seed=42
    V:
    <40*4*R values, row-major over (i, j, k)>
    W:
    <40*4*R values>

Floats are written with 17 significant digits, which round-trips exactly.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .schedule import KEY_SIZES, N_SUBKEYS, SecretKey, compute_intermediates, hamming

__all__ = [
    "MAGIC",
    "NoiseModel",
    "HammingTrace",
    "TraceFormatError",
    "simulate_trace",
    "multi_trace",
    "reading_seed",
    "write_trace",
    "read_trace",
]

MAGIC = "TFSPA1"
_U64 = 1 << 64


class TraceFormatError(ValueError):
    """Raised when a trace file cannot be parsed; ``field`` names the culprit."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class NoiseModel:
    sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        if not 0 <= self.seed < _U64:
            raise ValueError(f"seed must fit in 64 bits, got {self.seed}")


@dataclass(frozen=True, eq=False)
class HammingTrace:
    key_bits: int
    hv: np.ndarray
    hw: np.ndarray
    noise: NoiseModel = field(default_factory=NoiseModel)

    def __post_init__(self):
        if self.key_bits not in KEY_SIZES:
            raise ValueError(f"unsupported key size: {self.key_bits}")
        shape = (N_SUBKEYS, 4, self.rounds)
        for name in ("hv", "hw"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != shape:
                raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite values")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def rounds(self) -> int:
        return self.key_bits // 64

    def __eq__(self, other):
        if not isinstance(other, HammingTrace):
            return NotImplemented
        return (
            self.key_bits == other.key_bits
            and self.noise == other.noise
            and np.array_equal(self.hv, other.hv)
            and np.array_equal(self.hw, other.hw)
        )


def simulate_trace(key: SecretKey, noise: NoiseModel) -> HammingTrace:
    """Exact Hamming weights of the schedule plus independent N(0, sigma^2) draws."""
    inter = compute_intermediates(key)
    R = key.rounds
    hv = hamming(inter.v[:, :, :R]).astype(np.float64)
    hw = hamming(inter.w[:, :, :R]).astype(np.float64)
    if noise.sigma > 0:
        rng = np.random.default_rng(noise.seed)
        eps = rng.normal(0.0, noise.sigma, size=(2,) + hv.shape)
        hv += eps[0]
        hw += eps[1]
    return HammingTrace(key_bits=key.key_bits, hv=hv, hw=hw, noise=noise)


def reading_seed(base_seed: int, index: int) -> int:
    """Seed of reading ``index`` in a multi-reading capture: ``base_seed + index`` mod 2**64."""
    return (base_seed + index) % _U64


def multi_trace(key: SecretKey, sigma: float, n: int, base_seed: int) -> list[HammingTrace]:
    if n < 1:
        raise ValueError("n must be >= 1")
    return [simulate_trace(key, NoiseModel(sigma, reading_seed(base_seed, r))) for r in range(n)]


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_trace(trace: HammingTrace, destination) -> None:
    """Write ``trace`` to a path or text stream."""
    lines = [
        f"{MAGIC} key_bits={trace.key_bits} R={trace.rounds} "
        f"sigma={_fmt(trace.noise.sigma)} seed={trace.noise.seed}",
        "V:",
    ]
    lines.extend(_fmt(x) for x in trace.hv.ravel())
    lines.append("W:")
    lines.extend(_fmt(x) for x in trace.hw.ravel())
    text = "\n".join(lines) + "\n"
    if isinstance(destination, (str, os.PathLike)):
        with open(destination, "w", encoding="ascii", newline="\n") as fh:
            fh.write(text)
    else:
        destination.write(text)


def _parse_header(line: str) -> dict:
    parts = line.split(" ")
    magic = parts[0]
    if not magic.startswith("TFSPA"):
        raise TraceFormatError("magic", f"malformed header, expected {MAGIC!r}")
    if magic != MAGIC:
        raise TraceFormatError("version", f"unsupported format version {magic[5:]!r}")
    fields = {}
    for part in parts[1:]:
        name, sep, value = part.partition("=")
        if not sep:
            raise TraceFormatError("header", f"malformed header field {part!r}")
        fields[name] = value
    for name in ("key_bits", "R", "sigma", "seed"):
        if name not in fields:
            raise TraceFormatError(name, "missing from header")

    def number(name, conv):
        try:
            return conv(fields[name])
        except ValueError:
            raise TraceFormatError(name, f"malformed value {fields[name]!r}") from None

    key_bits = number("key_bits", int)
    if key_bits not in KEY_SIZES:
        raise TraceFormatError("key_bits", f"unsupported key size {key_bits}")
    rounds = number("R", int)
    if rounds != key_bits // 64:
        raise TraceFormatError("R", f"R={rounds} inconsistent with key_bits={key_bits}")
    sigma = number("sigma", float)
    seed = number("seed", int)
    try:
        noise = NoiseModel(sigma, seed)
    except ValueError as exc:
        raise TraceFormatError("sigma" if "sigma" in str(exc) else "seed", str(exc)) from None
    return {"key_bits": key_bits, "rounds": rounds, "noise": noise}


def _parse_section(lines, pos, label, count, shape):
    if pos >= len(lines) or lines[pos] != f"{label}:":
        raise TraceFormatError(label, f"expected section marker '{label}:'")
    values = []
    pos += 1
    while pos < len(lines) and not lines[pos].endswith(":"):
        try:
            values.append(float(lines[pos]))
        except ValueError:
            raise TraceFormatError(label, f"malformed value {lines[pos]!r}") from None
        pos += 1
    if len(values) < count:
        raise TraceFormatError(label, f"truncated payload: {len(values)} of {count} values")
    if len(values) > count:
        raise TraceFormatError(label, f"index range mismatch: {len(values)} values, expected {count}")
    arr = np.array(values, dtype=np.float64).reshape(shape)
    if not np.all(np.isfinite(arr)):
        raise TraceFormatError(label, "non-finite value")
    return arr, pos


def read_trace(source) -> HammingTrace:
    """Parse a trace from a path or text stream."""
    if isinstance(source, (str, os.PathLike)):
        with open(source, encoding="ascii") as fh:
            text = fh.read()
    else:
        text = source.read()
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise TraceFormatError("magic", "empty file")
    head = _parse_header(lines[0])
    shape = (N_SUBKEYS, 4, head["rounds"])
    count = N_SUBKEYS * 4 * head["rounds"]
    hv, pos = _parse_section(lines, 1, "V", count, shape)
    hw, pos = _parse_section(lines, pos, "W", count, shape)
    if pos != len(lines):
        raise TraceFormatError("W", f"unexpected trailing line {lines[pos]!r}")
    return HammingTrace(key_bits=head["key_bits"], hv=hv, hw=hw, noise=head["noise"])
