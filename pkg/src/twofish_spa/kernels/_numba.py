"""numba versions of the search kernels; same contracts as ``_numpy``."""

import numpy as np
from numba import njit

from .._tables import HW8


@njit(cache=True)
def _exact_search(known_w, rhs, hw8):
    S, n = known_w.shape
    m_out = np.zeros(S, dtype=np.int64)
    found = np.zeros(S, dtype=np.bool_)
    for s in range(S):
        for m in range(256):
            ok = True
            for r in range(n):
                if hw8[known_w[s, r] ^ m] != rhs[s, r]:
                    ok = False
                    break
            if ok:
                m_out[s] = m
                found[s] = True
                break
    return m_out, found


@njit(cache=True)
def _objective_scan(est, masks, known_w, hv_r, hw_r, q_next, hw8):
    S, n = known_w.shape
    best = np.zeros(S, dtype=np.uint8)
    best_obj = np.zeros(S, dtype=np.int64)
    best_pos = np.zeros(S, dtype=np.int64)
    for s in range(S):
        lo = np.int64(1) << 62
        for c in range(masks.shape[0]):
            m = est[s] ^ masks[c]
            total = np.int64(0)
            for r in range(n):
                v = known_w[s, r] ^ m
                total += abs(np.int64(hw8[v]) - hv_r[s, r])
                total += abs(np.int64(hw8[q_next[s, v]]) - hw_r[s, r])
                if total >= lo:
                    break
            if total < lo:
                lo = total
                best[s] = m
                best_pos[s] = c
        best_obj[s] = lo
    return best, best_obj, best_pos


def exact_search(known_w, rhs):
    return _exact_search(known_w, rhs, HW8)


def objective_scan(est, masks, known_w, hv_r, hw_r, q_next):
    return _objective_scan(est, masks, known_w, hv_r, hw_r, q_next, HW8)


@njit(cache=True)
def _eliminate(a, b, tol):
    """Solve ``a x = b`` in place (result in ``b``); False if a pivot is at or below ``tol``."""
    n = b.shape[0]
    for c in range(n):
        p = c
        for r in range(c + 1, n):
            if abs(a[r, c]) > abs(a[p, c]):
                p = r
        if abs(a[p, c]) <= tol:
            return False
        if p != c:
            for q in range(n):
                a[c, q], a[p, q] = a[p, q], a[c, q]
            b[c], b[p] = b[p], b[c]
        for r in range(c + 1, n):
            f = a[r, c] / a[c, c]
            for q in range(c, n):
                a[r, q] -= f * a[c, q]
            b[r] -= f * b[c]
    for c in range(n - 1, -1, -1):
        acc = b[c]
        for q in range(c + 1, n):
            acc -= a[c, q] * b[q]
        b[c] = acc / a[c, c]
    return True


@njit(cache=True)
def _lms_solve(known_w, rhs, hw8, ridge):
    S, n = known_w.shape
    m_out = np.zeros(S, dtype=np.uint8)
    dist = np.zeros(S)
    deficient = np.zeros(S, dtype=np.bool_)
    ata = np.empty((8, 8))
    atb = np.empty(8)
    sign = np.empty(8)
    for s in range(S):
        ata[:, :] = 0.0
        atb[:] = 0.0
        for r in range(n):
            wv = known_w[s, r]
            b = rhs[s, r] - hw8[wv]
            for q in range(8):
                sign[q] = 1.0 - 2.0 * ((wv >> q) & 1)
            for q in range(8):
                atb[q] += sign[q] * b
                for u in range(8):
                    ata[q, u] += sign[q] * sign[u]
        a = ata.copy()
        x = atb.copy()
        if not _eliminate(a, x, 1e-9):
            deficient[s] = True
            a = ata.copy()
            for q in range(8):
                a[q, q] += ridge
            x = atb.copy()
            _eliminate(a, x, 0.0)
        m = 0
        d2 = 0.0
        for q in range(8):
            xv = x[q]
            rq = np.floor(abs(xv) + 0.5) * (1.0 if xv > 0 else (-1.0 if xv < 0 else 0.0))
            rq = min(1.0, max(0.0, rq))
            d2 += (xv - rq) ** 2
            if rq == 1.0:
                m |= 1 << q
        m_out[s] = m
        dist[s] = np.sqrt(d2)
    return m_out, dist, deficient


def lms_solve(known_w, rhs, ridge):
    return _lms_solve(known_w, np.asarray(rhs, dtype=np.float64), HW8, ridge)
