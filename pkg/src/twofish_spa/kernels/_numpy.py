"""Vectorised numpy versions of the search kernels.

Every kernel works on a batch of ``S`` independent systems of 20 rows.
"""

import numpy as np

from .._tables import HW8

_CANDIDATES = np.arange(256, dtype=np.uint8)


def exact_search(known_w, rhs):
    """Smallest byte ``m`` with ``H(known_w ^ m) == rhs`` on every row."""
    pred = HW8[known_w[:, None, :] ^ _CANDIDATES[None, :, None]]
    ok = (pred == rhs[:, None, :]).all(axis=2)
    found = ok.any(axis=1)
    m = np.where(found, ok.argmax(axis=1), 0)
    return m.astype(np.int64), found


def objective_scan(est, masks, known_w, hv_r, hw_r, q_next):
    """First minimiser of the two-sided Hamming objective over ``est ^ masks``.

    Returns (best byte, objective, position of the winning mask).
    """
    cand = est[:, None] ^ masks[None, :]
    v = known_w[:, None, :] ^ cand[:, :, None]
    w = q_next[np.arange(len(est))[:, None, None], v]
    obj = (np.abs(HW8[v].astype(np.int64) - hv_r[:, None, :]).sum(axis=2)
           + np.abs(HW8[w].astype(np.int64) - hw_r[:, None, :]).sum(axis=2))
    pos = obj.argmin(axis=1)
    rows = np.arange(len(est))
    return cand[rows, pos], obj[rows, pos], pos.astype(np.int64)


_BITS = np.arange(8, dtype=np.uint8)
_POW2 = (1 << np.arange(8)).astype(np.int64)


def lms_solve(known_w, rhs, ridge):
    """Least squares on ``H(v) - H(w) = sum_n (1 - 2 d_n) x_n``, bits rounded to {0, 1}.

    Rank-deficient normal equations get ``ridge`` added to the diagonal.
    Returns (bytes, distance from the real solution to its rounding, deficient flags).
    """
    a = 1.0 - 2.0 * ((known_w[..., None] >> _BITS) & 1)
    b = rhs - HW8[known_w]
    ata = np.einsum("srn,srm->snm", a, a)
    atb = np.einsum("srn,sr->sn", a, b)
    deficient = np.linalg.matrix_rank(ata) < 8
    if deficient.any():
        ata[deficient] += ridge * np.eye(8)
    x = np.linalg.solve(ata, atb[..., None])[..., 0]
    xr = np.clip(np.sign(x) * np.floor(np.abs(x) + 0.5), 0, 1)
    m = (xr.astype(np.int64) * _POW2).sum(axis=-1)
    return m.astype(np.uint8), np.sqrt(((x - xr) ** 2).sum(axis=-1)), deficient
