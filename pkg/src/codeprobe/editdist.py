"""Edit distances between symbol strings.

Symbol strings are sequences of non-negative integers (code indices) or of
hashable tokens such as phoneme labels. Token strings are interned to dense
integers before they reach the compiled kernels; distances depend only on
symbol equality, so interning never changes a result.
"""

from dataclasses import dataclass
from typing import Hashable, Optional, Sequence

import numba
import numpy as np

from . import _kernels

# beyond this the per-pattern match table gets large, so remap to a dense alphabet
_MAX_DIRECT_ALPHABET = 1 << 16


class DegeneratePairError(ValueError):
    pass


def collapse_repeats(s):
    """Remove adjacent duplicate symbols, keeping the first of each run.

    >>> collapse_repeats([5, 5, 7, 7, 7, 5])
    [5, 7, 5]
    """
    if isinstance(s, np.ndarray):
        if s.size == 0:
            return s.copy()
        keep = np.empty(s.shape[0], dtype=bool)
        keep[0] = True
        np.not_equal(s[1:], s[:-1], out=keep[1:])
        return s[keep]
    out = []
    for sym in s:
        if not out or out[-1] != sym:
            out.append(sym)
    if isinstance(s, tuple):
        return tuple(out)
    if isinstance(s, str):
        return "".join(out)
    return out


def _is_integer_array(s) -> bool:
    return isinstance(s, np.ndarray) and np.issubdtype(s.dtype, np.integer)


def pack(items: Sequence[Sequence[Hashable]]):
    """Flatten strings into ``(flat, offsets, alphabet_size, max_len)``.

    Integer strings keep their values when they are small and non-negative;
    anything else is interned in order of first appearance.
    """
    lengths = np.fromiter((len(s) for s in items), dtype=np.int64, count=len(items))
    offsets = np.zeros(len(items) + 1, dtype=np.int64)
    np.cumsum(lengths, out=offsets[1:])
    max_len = int(lengths.max()) if len(items) else 0

    integer_input = all(
        _is_integer_array(s) or (not isinstance(s, str) and all(
            isinstance(v, (int, np.integer)) and not isinstance(v, bool) for v in s))
        for s in items
    )
    if integer_input:
        flat = np.concatenate(
            [np.asarray(s, dtype=np.int64).reshape(-1) for s in items]
        ) if len(items) else np.zeros(0, np.int64)
        if flat.size and (flat.min() < 0 or flat.max() >= _MAX_DIRECT_ALPHABET):
            _, flat = np.unique(flat, return_inverse=True)
            flat = flat.astype(np.int64)
    else:
        table = {}
        flat = np.empty(int(offsets[-1]), dtype=np.int64)
        k = 0
        for s in items:
            for sym in s:
                code = table.get(sym)
                if code is None:
                    code = table[sym] = len(table)
                flat[k] = code
                k += 1
    alphabet = int(flat.max()) + 1 if flat.size else 1
    return flat, offsets, alphabet, max_len


def _bulk_levenshtein(items, ii, jj, jobs: int = 1) -> np.ndarray:
    ii = np.ascontiguousarray(ii, dtype=np.int64)
    jj = np.ascontiguousarray(jj, dtype=np.int64)
    if ii.size == 0:
        return np.zeros(0, dtype=np.int64)
    flat, offsets, alphabet, max_len = pack(items)
    max_words = max(1, (max_len + 63) // 64)
    if jobs <= 1:
        return _kernels.bulk_serial(flat, offsets, ii, jj, alphabet, max_words)
    previous = numba.get_num_threads()
    numba.set_num_threads(min(jobs, numba.config.NUMBA_NUM_THREADS))
    try:
        n_chunks = max(1, min(ii.size, 16 * jobs))
        return _kernels.bulk_parallel(flat, offsets, ii, jj, alphabet, max_words, n_chunks)
    finally:
        numba.set_num_threads(previous)


def levenshtein(a: Sequence[Hashable], b: Sequence[Hashable]) -> int:
    """Unit-cost Levenshtein distance between two symbol strings."""
    return int(_bulk_levenshtein([a, b], [0], [1])[0])


def normalized_distance(a, b, collapse: bool = False) -> float:
    """Levenshtein distance divided by the length of the longer string.

    With ``collapse`` both strings have adjacent repeats removed first, and
    the denominator uses the collapsed lengths.
    """
    if collapse:
        a, b = collapse_repeats(a), collapse_repeats(b)
    longest = max(len(a), len(b))
    if longest == 0:
        raise DegeneratePairError("degenerate pair: both strings are empty")
    return levenshtein(a, b) / longest


def normalized_distances(items, ii, jj, jobs: int = 1) -> np.ndarray:
    """Normalized distances for many ``(items[ii[k]], items[jj[k]])`` pairs.

    Strings are used as given; collapse them beforehand if needed.
    """
    ii = np.asarray(ii, dtype=np.int64)
    jj = np.asarray(jj, dtype=np.int64)
    lengths = np.fromiter((len(s) for s in items), dtype=np.int64, count=len(items))
    longest = np.maximum(lengths[ii], lengths[jj])
    if np.any(longest == 0):
        k = int(np.flatnonzero(longest == 0)[0])
        raise DegeneratePairError(
            f"degenerate pair: items {ii[k]} and {jj[k]} are both empty"
        )
    return _bulk_levenshtein(items, ii, jj, jobs) / longest


@dataclass(frozen=True)
class PairSampler:
    """Chooses which unordered index pairs ``i < j`` get compared.

    ``max_pairs=None`` (or a budget at least ``n(n-1)/2``) selects every pair.
    Otherwise ``max_pairs`` pairs are drawn uniformly without replacement
    using ``seed``. Pairs always come back in lexicographic order.
    """

    max_pairs: Optional[int] = None
    seed: int = 0

    def select(self, n: int) -> np.ndarray:
        if n < 2:
            raise ValueError(f"need at least 2 items to form pairs, got {n}")
        total = n * (n - 1) // 2
        if self.max_pairs is None or self.max_pairs >= total:
            i, j = np.triu_indices(n, k=1)
            return np.stack([i, j], axis=1).astype(np.int64)
        if self.max_pairs < 1:
            raise ValueError("max_pairs must be positive")
        rng = np.random.default_rng(self.seed)
        linear = np.sort(rng.choice(total, size=self.max_pairs, replace=False))
        return _unrank_pairs(linear.astype(np.int64), n)


def _unrank_pairs(linear: np.ndarray, n: int) -> np.ndarray:
    # row i of the upper triangle starts at i*n - i*(i+1)/2
    rows = np.arange(n - 1, dtype=np.int64)
    starts = rows * n - rows * (rows + 1) // 2
    i = np.searchsorted(starts, linear, side="right") - 1
    j = linear - starts[i] + i + 1
    return np.stack([i, j], axis=1)


@dataclass
class DistancePairs:
    """Pairwise distances between the same stimuli in two spaces."""

    pair_indices: np.ndarray
    distances_a: np.ndarray
    distances_b: np.ndarray

    def __post_init__(self):
        if not (len(self.pair_indices) == len(self.distances_a) == len(self.distances_b)):
            raise ValueError("pair_indices, distances_a and distances_b differ in length")

    def __len__(self):
        return len(self.pair_indices)


def pairwise_distances(items_a, items_b, sampler: Optional[PairSampler] = None,
                       jobs: int = 1) -> DistancePairs:
    """Normalized edit distances for the sampled stimulus pairs in both spaces.

    ``items_a[k]`` and ``items_b[k]`` must describe the same stimulus.
    """
    if len(items_a) != len(items_b):
        raise ValueError(
            f"stimulus lists differ in length: {len(items_a)} vs {len(items_b)}"
        )
    sampler = sampler or PairSampler()
    pairs = sampler.select(len(items_a))
    ii, jj = pairs[:, 0], pairs[:, 1]
    return DistancePairs(
        pair_indices=pairs,
        distances_a=normalized_distances(items_a, ii, jj, jobs),
        distances_b=normalized_distances(items_b, ii, jj, jobs),
    )
