"""Key recovery from Hamming traces of the key schedule.

Each stage ``k`` (from ``R`` down to 1) yields eight key bytes: for every row
``j`` and subkey parity there is a system of 20 equations

    H(v[i, j, k-1]) = H(w[i, j, k] ^ m_l),   i = parity, parity + 2, ..., 38 + parity

with ``w[., ., k]`` known from the public stage-``R`` inputs or from the bytes
already recovered.  Three solvers are provided:

* ``exact``: exhaustive search over the 256 candidates (noiseless traces);
* ``lms``: the XOR system rewritten as a linear one in the key bits and solved
  by least squares, followed by rounding of the bits;
* ``lms+mask``: the LMS byte refined by trying low-weight XOR masks and keeping
  the one minimising the Hamming mismatch at the S-box input and output.

The systems of one stage are solved as a batch of eight; stages run in order
because each one needs the bytes recovered before it.
"""

from __future__ import annotations

import logging
import time
from collections import Counter
from dataclasses import dataclass, field
from math import comb

import numpy as np

from . import kernels
from ._tables import HW8
from .schedule import N_SUBKEYS, Q_TABLES, SecretKey
from .tracesim import HammingTrace

__all__ = [
    "MeasuredSystem",
    "MaskOrder",
    "MASK_ORDER",
    "ByteDiagnostics",
    "AttackReport",
    "ExactAttackError",
    "round_measurement",
    "build_system",
    "break_key_byte_exact",
    "attack_exact",
    "lms_estimate",
    "mask_candidates",
    "mask_correct",
    "attack_noisy",
    "cluster_estimates",
    "calibrate_radius",
    "attack_multi",
    "warmup",
]

log = logging.getLogger(__name__)

RIDGE = 1e-9
_BITS = np.arange(8, dtype=np.uint8)
_ROWS = N_SUBKEYS // 2


def round_measurement(x):
    """Nearest integer (halves away from zero), clamped to the byte weight range 0..8."""
    x = np.asarray(x, dtype=np.float64)
    r = np.sign(x) * np.floor(np.abs(x) + 0.5)
    return np.clip(r, 0, 8).astype(np.int64)


def _bits(x):
    return (x[..., None] >> _BITS) & 1


@dataclass(frozen=True, eq=False)
class MeasuredSystem:
    """The 20 equations linking one key byte to the trace.

    ``d`` holds the bits of the known S-box outputs ``w[i, j, k]`` (rows by
    ascending ``i``), ``a = 1 - 2d`` the signs of the linearised system and
    ``rhs`` the rounded readings of ``H(v[i, j, k-1])``.
    """

    j: int
    k: int
    parity: int
    known_w: np.ndarray
    d: np.ndarray
    a: np.ndarray
    rhs: np.ndarray
    rhs_raw: np.ndarray

    @property
    def key_index(self) -> int:
        return 8 * (self.k - 1) + self.j + 4 * self.parity

    @classmethod
    def from_arrays(cls, known_w, rhs_raw, j=0, k=1, parity=0):
        known_w = np.asarray(known_w, dtype=np.uint8)
        rhs_raw = np.asarray(rhs_raw, dtype=np.float64)
        d = _bits(known_w)
        return cls(j=j, k=k, parity=parity, known_w=known_w, d=d,
                   a=(1 - 2 * d.astype(np.int8)), rhs=round_measurement(rhs_raw), rhs_raw=rhs_raw)


def build_system(trace: HammingTrace, known_w, j: int, k: int, parity: int) -> MeasuredSystem:
    """Assemble the system for row ``j``, stage ``k`` from the known ``w[., j, k]`` bytes.

    ``known_w`` holds the 20 bytes of the given parity, ordered by ascending ``i``.
    """
    if not 1 <= k <= trace.rounds:
        raise ValueError(f"stage k={k} out of range 1..{trace.rounds}")
    known_w = np.asarray(known_w, dtype=np.uint8)
    if known_w.shape != (_ROWS,):
        raise ValueError(f"known_w must hold {_ROWS} bytes")
    return MeasuredSystem.from_arrays(known_w, trace.hv[parity::2, j, k - 1], j, k, parity)


def break_key_byte_exact(system: MeasuredSystem) -> tuple[int, bool]:
    """Smallest byte consistent with every equation, and whether one exists."""
    m, found = kernels.exact_search(system.known_w[None, :], system.rhs[None, :].astype(np.int64))
    return int(m[0]), bool(found[0])


def _lms_batch(known_w, rhs):
    """Least-squares key bytes for a batch of systems.

    Returns (bytes, L2 distance between the real solution and its rounding).
    """
    m, dist, deficient = kernels.lms_solve(known_w, rhs, RIDGE)
    if deficient.any():
        log.debug("rank-deficient normal equations in %d system(s); ridge %.0e", deficient.sum(), RIDGE)
    return m, dist


def lms_estimate(system: MeasuredSystem) -> tuple[int, float]:
    m, dist = _lms_batch(system.known_w[None, :], system.rhs[None, :].astype(np.float64))
    return int(m[0]), float(dist[0])


@dataclass(frozen=True)
class MaskOrder:
    """All 256 masks ordered by (Hamming weight, value)."""

    masks: np.ndarray = field(default_factory=lambda: np.array(
        sorted(range(256), key=lambda x: (bin(x).count("1"), x)), dtype=np.uint8))

    @staticmethod
    def prefix_size(tau: int) -> int:
        if not 0 <= tau <= 8:
            raise ValueError(f"tau={tau} out of range 0..8")
        return sum(comb(8, n) for n in range(tau + 1))

    def prefix(self, tau: int) -> np.ndarray:
        return self.masks[:self.prefix_size(tau)]


MASK_ORDER = MaskOrder()
MASK_ORDER.masks.setflags(write=False)


def mask_candidates(m_l: int, tau: int) -> np.ndarray:
    """``m_l ^ h`` for every mask ``h`` of weight <= ``tau``, in mask order."""
    return np.uint8(m_l) ^ MASK_ORDER.prefix(tau)


def mask_correct(m_l: int, j: int, k: int, parity: int, known_w, trace: HammingTrace,
                 tau: int) -> tuple[int, int, int]:
    """Refine ``m_l`` against both the S-box input and output readings of stage ``k-1``.

    Returns (byte, objective, weight of the applied mask).  Ties go to the
    earliest candidate in mask order.
    """
    known_w = np.asarray(known_w, dtype=np.uint8)[None, :]
    hv_r = round_measurement(trace.hv[parity::2, j, k - 1])[None, :]
    hw_r = round_measurement(trace.hw[parity::2, j, k - 1])[None, :]
    best, obj, _ = kernels.objective_scan(
        np.array([m_l], dtype=np.uint8), MASK_ORDER.prefix(tau), known_w, hv_r, hw_r,
        np.ascontiguousarray(Q_TABLES[j, k - 1][None, :]))
    best = int(best[0])
    return best, int(obj[0]), int(HW8[best ^ (m_l & 0xFF)])


@dataclass(frozen=True)
class ByteDiagnostics:
    index: int
    value: int
    lms_rounding_distance: float
    mask_weight_used: int
    objective_value: int
    solver_tier: str

    def rank(self):
        """Confidence ordering used to break voting ties (smaller is better)."""
        return (self.objective_value, self.mask_weight_used, self.lms_rounding_distance)


@dataclass(frozen=True)
class AttackReport:
    key_estimate: SecretKey
    per_byte: tuple[ByteDiagnostics, ...]
    elapsed: float
    tau: int = 0
    readings_used: int = 1

    def to_text(self) -> str:
        lines = [
            f"key: {self.key_estimate.hex()}",
            f"key_bits: {self.key_estimate.key_bits}",
            f"tau: {self.tau}",
            f"readings_used: {self.readings_used}",
            f"elapsed_s: {self.elapsed:.6f}",
            "",
            "byte  value  tier      lms_dist  mask_w  objective",
        ]
        for b in self.per_byte:
            lines.append(f"{b.index:4d}  0x{b.value:02x}   {b.solver_tier:<8s}  "
                         f"{b.lms_rounding_distance:8.4f}  {b.mask_weight_used:6d}  {b.objective_value:9d}")
        return "\n".join(lines) + "\n"


class ExactAttackError(RuntimeError):
    """No key byte satisfies the equations of one system; the trace is inconsistent."""

    def __init__(self, j: int, k: int, parity: int):
        super().__init__(f"no consistent key byte for j={j}, k={k}, parity={'odd' if parity else 'even'}")
        self.j = j
        self.k = k
        self.parity = parity


def _by_system(x):
    """``(40, 4)`` array indexed (i, j) -> ``(8, 20)`` with system s = 4*parity + j."""
    return np.ascontiguousarray(x.reshape(_ROWS, 2, 4).transpose(1, 2, 0).reshape(8, _ROWS))


_SYS_J = np.tile(np.arange(4), 2)
_SYS_P = np.repeat(np.arange(2), 4)


def _run(trace: HammingTrace, tau: int, exact: bool) -> AttackReport:
    start = time.perf_counter()
    R = trace.rounds
    hv_r = round_measurement(trace.hv)
    hw_r = round_measurement(trace.hw)
    masks = MASK_ORDER.prefix(tau)
    tier = "exact" if exact else ("lms+mask" if tau > 0 else "lms")
    key = np.zeros(8 * R, dtype=np.uint8)
    diag = [None] * (8 * R)
    subkey = np.arange(N_SUBKEYS)
    w = np.stack([Q_TABLES[j, R][subkey] for j in range(4)], axis=1)
    for k in range(R, 0, -1):
        known = _by_system(w)
        rhs = _by_system(hv_r[:, :, k - 1])
        if exact:
            est, found = kernels.exact_search(known, rhs)
            if not found.all():
                s = int(np.argmin(found))
                raise ExactAttackError(int(_SYS_J[s]), k, int(_SYS_P[s]))
            est = est.astype(np.uint8)
            dist = np.zeros(8)
        else:
            est, dist = _lms_batch(known, rhs.astype(np.float64))
        q_next = Q_TABLES[_SYS_J, k - 1]
        best, obj, pos = kernels.objective_scan(
            est, masks if not exact else masks[:1], known, rhs, _by_system(hw_r[:, :, k - 1]), q_next)
        lidx = 8 * (k - 1) + _SYS_J + 4 * _SYS_P
        key[lidx] = best
        for s in range(8):
            diag[lidx[s]] = ByteDiagnostics(
                index=int(lidx[s]), value=int(best[s]), lms_rounding_distance=float(dist[s]),
                mask_weight_used=int(HW8[masks[pos[s]]]), objective_value=int(obj[s]), solver_tier=tier)
        # forward to stage k-1
        m_used = key[8 * (k - 1) + np.arange(4)[None, :] + 4 * (subkey % 2)[:, None]]
        v = w ^ m_used
        w = np.stack([Q_TABLES[j, k - 1][v[:, j]] for j in range(4)], axis=1)
    return AttackReport(key_estimate=SecretKey(key.tobytes()), per_byte=tuple(diag),
                        elapsed=time.perf_counter() - start, tau=tau)


def attack_exact(trace: HammingTrace) -> AttackReport:
    """Recover the key from a noiseless trace; raises :class:`ExactAttackError` otherwise."""
    return _run(trace, 0, exact=True)


def attack_noisy(trace: HammingTrace, tau: int = 3) -> AttackReport:
    """LMS estimate per byte, corrected with masks of weight <= ``tau`` (none when 0)."""
    MaskOrder.prefix_size(tau)
    return _run(trace, tau, exact=False)


def cluster_estimates(estimates, radius: float) -> list[list[int]]:
    """Single-linkage groups (as index lists) of estimates within ``radius`` of each other."""
    estimates = list(estimates)
    if not estimates:
        return []
    if len({e.key_bits for e in estimates}) != 1:
        raise ValueError("estimates must share one key size")
    x = np.stack([e.as_array().astype(np.float64) for e in estimates])
    dist = np.sqrt(((x[:, None, :] - x[None, :, :]) ** 2).sum(axis=-1))
    parent = list(range(len(estimates)))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in zip(*np.nonzero(np.triu(dist <= radius, k=1))):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    groups: dict[int, list[int]] = {}
    for n in range(len(estimates)):
        groups.setdefault(find(n), []).append(n)
    return list(groups.values())


def calibrate_radius(key_bits: int = 128, n_pairs: int = 10_000, quantile: float = 0.001,
                     seed: int = 0) -> float:
    """Empirical ``quantile`` of the distance between two uniformly random keys."""
    rng = np.random.default_rng(seed)
    n = key_bits // 8
    a = rng.integers(0, 256, size=(n_pairs, n)).astype(np.float64)
    b = rng.integers(0, 256, size=(n_pairs, n)).astype(np.float64)
    return float(np.quantile(np.sqrt(((a - b) ** 2).sum(axis=1)), quantile))


def _vote(reports, final):
    n = len(reports[0].per_byte)
    chosen = []
    for l in range(n):
        counts = Counter(r.per_byte[l].value for r in reports)
        top = max(counts.values())
        leaders = sorted(v for v, c in counts.items() if c == top)
        if len(leaders) == 1:
            value = leaders[0]
        elif not final:
            return None
        else:
            value = min(leaders, key=lambda v: (min(r.per_byte[l].rank() for r in reports
                                                    if r.per_byte[l].value == v), v))
        chosen.append(min((r.per_byte[l] for r in reports if r.per_byte[l].value == value),
                          key=ByteDiagnostics.rank))
    return chosen


def attack_multi(readings, tau: int = 3, max_readings: int = 5) -> AttackReport:
    """Attack several readings of one key and take a per-byte plurality vote.

    Readings are consumed one at a time; from the second one on, the attack
    stops as soon as every byte has a unique most common value.  If the limit
    is reached first, tied bytes go to the value whose best reading has the
    smallest (objective, mask weight, LMS rounding distance).
    """
    readings = list(readings)
    if not readings:
        raise ValueError("attack_multi needs at least one reading")
    if max_readings < 1:
        raise ValueError("max_readings must be >= 1")
    limit = min(max_readings, len(readings))
    reports = []
    chosen = None
    for trace in readings[:limit]:
        reports.append(attack_noisy(trace, tau))
        if len(reports) >= 2 or limit == 1:
            chosen = _vote(reports, final=len(reports) == limit)
            if chosen is not None:
                break
    key = SecretKey(bytes(b.value for b in chosen))
    return AttackReport(key_estimate=key, per_byte=tuple(chosen),
                        elapsed=sum(r.elapsed for r in reports), tau=tau, readings_used=len(reports))


def warmup() -> None:
    """Run every solver once so JIT compilation stays out of later timings."""
    from .tracesim import NoiseModel, simulate_trace

    trace = simulate_trace(SecretKey(bytes(16)), NoiseModel())
    attack_exact(trace)
    attack_noisy(trace, 1)
