"""Inner loops that dominate runtime.

Each kernel has a numba implementation (``*_jit``) and a pure-numpy one
(``*_numpy``).  The public names dispatch on :data:`earsym._accel.USE_NUMBA`.
Both paths return identical results for the chord search (integer
arithmetic); pair cosines agree to rounding.
"""

import numpy as np

from . import _accel
from ._accel import njit

# Pairs evaluated per block in the numpy chord search; bounds peak memory.
_CHORD_BLOCK_PAIRS = 2_000_000
_SCORE_CHUNK = 262_144


# -- longest chords -----------------------------------------------------------

@njit
def _top_chords_jit(rows, cols, k):
    n_pts = rows.shape[0]
    best_i = np.empty(k, np.int64)
    best_j = np.empty(k, np.int64)
    best_d = np.empty(k, np.int64)
    n = 0
    for i in range(n_pts):
        ri = rows[i]
        ci = cols[i]
        for j in range(i + 1, n_pts):
            dr = rows[j] - ri
            dc = cols[j] - ci
            d2 = dr * dr + dc * dc
            if n == k and d2 <= best_d[k - 1]:
                continue
            if n < k:
                n += 1
            pos = n - 1
            # equal lengths stay ahead: earlier (i, j) is lexicographically smaller
            while pos > 0 and best_d[pos - 1] < d2:
                best_d[pos] = best_d[pos - 1]
                best_i[pos] = best_i[pos - 1]
                best_j[pos] = best_j[pos - 1]
                pos -= 1
            best_d[pos] = d2
            best_i[pos] = i
            best_j[pos] = j
    return best_i[:n], best_j[:n], best_d[:n]


def _select_top(i, j, d2, k):
    if d2.size > k:
        kth = np.partition(d2, d2.size - k)[d2.size - k]
        keep = np.flatnonzero(d2 >= kth)
        i, j, d2 = i[keep], j[keep], d2[keep]
    order = np.lexsort((j, i, -d2))[:k]
    return i[order], j[order], d2[order]


def _top_chords_numpy(rows, cols, k):
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    n_pts = rows.size
    empty = np.empty(0, np.int64)
    best = (empty, empty, empty)
    start = 0
    while start < n_pts - 1:
        # grow the block of anchor rows until it holds enough pairs
        stop = start + 1
        count = n_pts - 1 - start
        while stop < n_pts - 1 and count + (n_pts - 1 - stop) <= _CHORD_BLOCK_PAIRS:
            count += n_pts - 1 - stop
            stop += 1
        anchors = np.arange(start, stop, dtype=np.int64)
        lens = n_pts - 1 - anchors
        i = np.repeat(anchors, lens)
        offsets = np.arange(i.size, dtype=np.int64) - np.repeat(np.cumsum(lens) - lens, lens)
        j = i + 1 + offsets
        dr = rows[j] - rows[i]
        dc = cols[j] - cols[i]
        d2 = dr * dr + dc * dc
        best = _select_top(
            np.concatenate([best[0], i]),
            np.concatenate([best[1], j]),
            np.concatenate([best[2], d2]),
            k,
        )
        start = stop
    return best


def top_chords(rows, cols, k):
    """Indices ``(i, j)`` with ``i < j`` and squared lengths of the ``k`` longest
    point pairs, longest first, ties ordered by ``(i, j)``.

    ``rows``/``cols`` must already be in row-major order so that index order is
    coordinate order.
    """
    rows = np.ascontiguousarray(rows, dtype=np.int64)
    cols = np.ascontiguousarray(cols, dtype=np.int64)
    if _accel.USE_NUMBA:
        return _top_chords_jit(rows, cols, int(k))
    return _top_chords_numpy(rows, cols, int(k))


# -- pair cosines -------------------------------------------------------------

@njit
def _pair_cosines_jit(x, a, b):
    n, d = x.shape
    norms = np.empty(n)
    for r in range(n):
        s = 0.0
        for c in range(d):
            s += x[r, c] * x[r, c]
        norms[r] = np.sqrt(s)
    out = np.empty(a.shape[0])
    for p in range(a.shape[0]):
        ia = a[p]
        ib = b[p]
        s = 0.0
        for c in range(d):
            s += x[ia, c] * x[ib, c]
        v = s / (norms[ia] * norms[ib])
        if v > 1.0:
            v = 1.0
        elif v < -1.0:
            v = -1.0
        out[p] = v
    return out


def _pair_cosines_numpy(x, a, b):
    x = np.asarray(x, dtype=np.float64)
    norms = np.sqrt(np.einsum("ij,ij->i", x, x))
    out = np.empty(len(a))
    for lo in range(0, len(a), _SCORE_CHUNK):
        ia = a[lo:lo + _SCORE_CHUNK]
        ib = b[lo:lo + _SCORE_CHUNK]
        dots = np.einsum("ij,ij->i", x[ia], x[ib])
        out[lo:lo + _SCORE_CHUNK] = dots / (norms[ia] * norms[ib])
    return np.clip(out, -1.0, 1.0, out=out)


def pair_cosines(x, a, b):
    """Cosine similarity of rows ``x[a[p]]`` and ``x[b[p]]`` for every ``p``,
    clamped to [-1, 1]."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    a = np.ascontiguousarray(a, dtype=np.int64)
    b = np.ascontiguousarray(b, dtype=np.int64)
    if _accel.USE_NUMBA:
        return _pair_cosines_jit(x, a, b)
    return _pair_cosines_numpy(x, a, b)
