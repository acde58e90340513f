"""Compiled edit-distance kernels.

Two implementations of unit-cost Levenshtein distance over integer symbol
arrays live here:

* ``dp_distance``: the textbook two-row dynamic programme, kept as the
  reference the fast path is tested against.
* ``_myers``: Myers' bit-vector algorithm in Hyyro's block form, which
  processes 64 pattern positions per machine word.

The bulk drivers take a flattened corpus (``flat`` symbols, ``offsets`` with
``len(items) + 1`` entries) and a list of index pairs. Every output element is
computed independently of the others, so the serial and threaded drivers
produce bitwise-identical results.
"""

import os

import numba
import numpy as np
from numba import njit, prange

if "NUMBA_THREADING_LAYER" not in os.environ:
    numba.config.THREADING_LAYER = "workqueue"

_ONE = np.uint64(1)
_ZERO = np.uint64(0)
_ALL = np.uint64(0xFFFFFFFFFFFFFFFF)
_HIGH = np.uint64(1) << np.uint64(63)


@njit(cache=True, nogil=True)
def dp_distance(a, b):
    n = a.shape[0]
    m = b.shape[0]
    if n < m:
        a, b = b, a
        n, m = m, n
    row = np.empty(m + 1, np.int64)
    for j in range(m + 1):
        row[j] = j
    for i in range(1, n + 1):
        diag = row[0]
        row[0] = i
        ai = a[i - 1]
        for j in range(1, m + 1):
            up = row[j]
            best = diag + (1 if ai != b[j - 1] else 0)
            if row[j - 1] + 1 < best:
                best = row[j - 1] + 1
            if up + 1 < best:
                best = up + 1
            row[j] = best
            diag = up
    return row[m]


@njit(cache=True, nogil=True)
def _load_pattern(p, peq):
    for i in range(p.shape[0]):
        peq[p[i], i >> 6] |= _ONE << np.uint64(i & 63)


@njit(cache=True, nogil=True)
def _clear_pattern(p, peq):
    for i in range(p.shape[0]):
        peq[p[i], i >> 6] = _ZERO


@njit(cache=True, nogil=True)
def _myers(m, t, peq, pv, mv):
    """Distance between the pattern loaded in ``peq`` (length m) and ``t``."""
    n = t.shape[0]
    if m == 0:
        return n
    if n == 0:
        return m
    n_words = (m + 63) >> 6
    for w in range(n_words):
        pv[w] = _ALL
        mv[w] = _ZERO
    last_high = _ONE << np.uint64((m - 1) & 63)
    score = m
    for j in range(n):
        c = t[j]
        # row 0 of the DP grows by one per text symbol
        hin = 1
        for w in range(n_words):
            eq = peq[c, w]
            p_v = pv[w]
            m_v = mv[w]
            xv = eq | m_v
            if hin < 0:
                eq |= _ONE
            xh = (((eq & p_v) + p_v) ^ p_v) | eq
            ph = m_v | ~(xh | p_v)
            mh = p_v & xh
            high = last_high if w == n_words - 1 else _HIGH
            hout = 0
            if ph & high:
                hout = 1
            elif mh & high:
                hout = -1
            ph = ph << _ONE
            mh = mh << _ONE
            if hin < 0:
                mh |= _ONE
            elif hin > 0:
                ph |= _ONE
            pv[w] = mh | ~(xv | ph)
            mv[w] = ph & xv
            hin = hout
        score += hin
    return score


@njit(cache=True, nogil=True)
def _run_pairs(flat, offsets, ii, jj, out, alphabet, max_words, lo, hi):
    peq = np.zeros((alphabet, max_words), np.uint64)
    pv = np.empty(max_words, np.uint64)
    mv = np.empty(max_words, np.uint64)
    current = -1
    for k in range(lo, hi):
        i = ii[k]
        if i != current:
            if current >= 0:
                _clear_pattern(flat[offsets[current]:offsets[current + 1]], peq)
            _load_pattern(flat[offsets[i]:offsets[i + 1]], peq)
            current = i
        m = offsets[i + 1] - offsets[i]
        j = jj[k]
        out[k] = _myers(m, flat[offsets[j]:offsets[j + 1]], peq, pv, mv)


@njit(cache=True)
def bulk_serial(flat, offsets, ii, jj, alphabet, max_words):
    out = np.empty(ii.shape[0], np.int64)
    _run_pairs(flat, offsets, ii, jj, out, alphabet, max_words, 0, ii.shape[0])
    return out


@njit(cache=True, parallel=True)
def bulk_parallel(flat, offsets, ii, jj, alphabet, max_words, n_chunks):
    out = np.empty(ii.shape[0], np.int64)
    n = ii.shape[0]
    step = (n + n_chunks - 1) // n_chunks
    for c in prange(n_chunks):
        lo = c * step
        hi = min(n, lo + step)
        if lo < hi:
            _run_pairs(flat, offsets, ii, jj, out, alphabet, max_words, lo, hi)
    return out


@njit(cache=True)
def bulk_dp(flat, offsets, ii, jj):
    out = np.empty(ii.shape[0], np.int64)
    for k in range(ii.shape[0]):
        a = flat[offsets[ii[k]]:offsets[ii[k] + 1]]
        b = flat[offsets[jj[k]]:offsets[jj[k] + 1]]
        out[k] = dp_distance(a, b)
    return out
