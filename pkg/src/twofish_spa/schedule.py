"""Byte-level model of the Twofish key-schedule h-function chain.

Indexing follows the attack's notation: ``i`` is the subkey index (0..39),
``j`` the byte row (0..3) and ``k`` the stage, counted from the right so that
``k = R`` is the entry stage (``v[i, j, R] == i``) and ``k = 0`` is the last
S-box before the MDS step.  Key bytes ``m_0 .. m_{8R-1}`` are numbered so that
row ``j`` at stage ``k`` of subkey ``i`` consumes ``m[8(k-1) + j + 4(i % 2)]``.

That numbering is the standard Twofish key byte order with the bytes of every
32-bit word reversed; :meth:`SecretKey.from_twofish_bytes` and
:meth:`SecretKey.to_twofish_bytes` convert between the two.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._tables import HW8, MDS, MDS_POLY, P, Q0, Q1

__all__ = [
    "KEY_SIZES",
    "N_SUBKEYS",
    "SecretKey",
    "ScheduleIntermediates",
    "q_select",
    "key_byte_index",
    "compute_intermediates",
    "hamming",
    "derive_subkeys",
    "pad_key",
    "dump_tables",
    "Q_TABLES",
]

KEY_SIZES = (128, 192, 256)
N_SUBKEYS = 40

for _t in (Q0, Q1, P, MDS, HW8):
    _t.setflags(write=False)

# Q_TABLES[j, k] is the permutation applied at row j, stage k.
Q_TABLES = np.stack([np.stack([Q1 if P[j, k] else Q0 for k in range(5)]) for j in range(4)])
Q_TABLES.setflags(write=False)


@dataclass(frozen=True)
class SecretKey:
    """Key bytes ``m_0 .. m_{8R-1}`` in attack order."""

    data: bytes

    def __post_init__(self):
        data = bytes(self.data)
        if len(data) * 8 not in KEY_SIZES:
            raise ValueError(
                f"unsupported key size: {len(data) * 8} bits (expected one of {KEY_SIZES})"
            )
        object.__setattr__(self, "data", data)

    @property
    def key_bits(self) -> int:
        return len(self.data) * 8

    @property
    def rounds(self) -> int:
        return len(self.data) // 8

    def __len__(self):
        return len(self.data)

    def __getitem__(self, l):
        return self.data[l]

    def as_array(self) -> np.ndarray:
        return np.frombuffer(self.data, dtype=np.uint8)

    def hex(self) -> str:
        return self.data.hex()

    @classmethod
    def from_hex(cls, text: str) -> "SecretKey":
        return cls(bytes.fromhex(text.strip()))

    @classmethod
    def random(cls, rng: np.random.Generator, key_bits: int = 128) -> "SecretKey":
        if key_bits not in KEY_SIZES:
            raise ValueError(f"unsupported key size: {key_bits}")
        return cls(rng.integers(0, 256, size=key_bits // 8, dtype=np.uint8).tobytes())

    @classmethod
    def from_twofish_bytes(cls, raw: bytes) -> "SecretKey":
        """Build from a key in the byte order used by Twofish test vectors."""
        return cls(_swap_words(bytes(raw)))

    def to_twofish_bytes(self) -> bytes:
        return _swap_words(self.data)


def _swap_words(raw: bytes) -> bytes:
    if len(raw) % 4:
        raise ValueError("key length must be a multiple of 4 bytes")
    return b"".join(raw[n:n + 4][::-1] for n in range(0, len(raw), 4))


def pad_key(raw: bytes) -> bytes:
    """Zero-pad a short key (Twofish byte order) to the next supported length."""
    for size in KEY_SIZES:
        if len(raw) * 8 <= size:
            return bytes(raw) + bytes(size // 8 - len(raw))
    raise ValueError(f"key longer than {KEY_SIZES[-1]} bits")


@dataclass(frozen=True)
class ScheduleIntermediates:
    """S-box inputs ``v`` and outputs ``w``, both shaped ``(40, 4, R + 1)``."""

    v: np.ndarray
    w: np.ndarray

    @property
    def rounds(self) -> int:
        return self.v.shape[2] - 1


def q_select(j: int, k: int) -> np.ndarray:
    """Return the permutation (q0 or q1) used at row ``j``, stage ``k``."""
    if not 0 <= j < 4:
        raise ValueError(f"row index j={j} out of range 0..3")
    if not 0 <= k < 5:
        raise ValueError(f"stage index k={k} out of range 0..4")
    return Q1 if P[j, k] else Q0


def key_byte_index(i: int, j: int, k: int, rounds: int = 4) -> int:
    """Index ``l`` of the key byte mixed in after stage ``k`` of row ``j``."""
    if not 0 <= i < N_SUBKEYS:
        raise ValueError(f"subkey index i={i} out of range 0..39")
    if not 0 <= j < 4:
        raise ValueError(f"row index j={j} out of range 0..3")
    if not 1 <= k <= rounds:
        raise ValueError(f"stage index k={k} out of range 1..{rounds}")
    return 8 * (k - 1) + j + 4 * (i % 2)


def key_index_table(rounds: int) -> np.ndarray:
    """``(2, 4, R + 1)`` array of ``l`` by (parity, row, stage); stage 0 unused."""
    k = np.arange(rounds + 1)
    tab = 8 * (k[None, None, :] - 1) + np.arange(4)[None, :, None] + 4 * np.arange(2)[:, None, None]
    tab[:, :, 0] = -1
    return tab


def compute_intermediates(key: SecretKey) -> ScheduleIntermediates:
    R = key.rounds
    m = key.as_array()
    v = np.empty((N_SUBKEYS, 4, R + 1), dtype=np.uint8)
    w = np.empty_like(v)
    lidx = key_index_table(R)
    v[:, :, R] = np.arange(N_SUBKEYS, dtype=np.uint8)[:, None]
    parity = np.arange(N_SUBKEYS) % 2
    for k in range(R, -1, -1):
        for j in range(4):
            w[:, j, k] = Q_TABLES[j, k][v[:, j, k]]
        if k > 0:
            v[:, :, k - 1] = w[:, :, k] ^ m[lidx[parity, :, k]]
    v.setflags(write=False)
    w.setflags(write=False)
    return ScheduleIntermediates(v=v, w=w)


def hamming(x):
    """Population count of a byte (or array of bytes)."""
    if isinstance(x, np.ndarray):
        return HW8[x.astype(np.uint8)]
    return int(HW8[x & 0xFF])


def _gf_mul(a: int, b: int) -> int:
    r = 0
    while b:
        if b & 1:
            r ^= a
        a <<= 1
        if a & 0x100:
            a ^= MDS_POLY
        b >>= 1
    return r


def _rol32(x: int, n: int) -> int:
    return ((x << n) | (x >> (32 - n))) & 0xFFFFFFFF


def _mds_word(lanes) -> int:
    out = 0
    for r in range(4):
        z = 0
        for c in range(4):
            z ^= _gf_mul(int(MDS[r, c]), int(lanes[c]))
        out |= z << (8 * r)
    return out


def derive_subkeys(key: SecretKey) -> list[int]:
    """Expand ``key`` into the 40 round-key words ``K_0 .. K_39``.

    Validation only. Row ``j`` of the intermediates is byte lane ``3 - j`` of
    the h-function output word.
    """
    w0 = compute_intermediates(key).w[:, :, 0]
    h = [_mds_word(w0[i, ::-1]) for i in range(N_SUBKEYS)]
    out = []
    for n in range(0, N_SUBKEYS, 2):
        a = h[n]
        b = _rol32(h[n + 1], 8)
        out.append((a + b) & 0xFFFFFFFF)
        out.append(_rol32((a + 2 * b) & 0xFFFFFFFF, 9))
    return out


def dump_tables() -> str:
    """Deterministic text listing of q0, q1 and P for auditing."""
    lines = []
    for name, tab in (("q0", Q0), ("q1", Q1)):
        lines.append(f"{name}:")
        for r in range(0, 256, 16):
            lines.append(" ".join(f"{x:02x}" for x in tab[r:r + 16]))
    lines.append("P (rows j=0..3, columns k=0..4, k=0 is the final stage):")
    for j in range(4):
        lines.append(" ".join(str(int(x)) for x in P[j]))
    return "\n".join(lines) + "\n"
