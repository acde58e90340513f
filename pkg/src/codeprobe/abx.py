"""Minimal-pair ABX discrimination on phoneme-trigram segments.

A triple (A, B, X) takes A and X from two distinct segments of one trigram
and B from a trigram with the same outer phonemes but a different centre. It
is charged 1 when X is closer to B than to A, 1/2 on a tie and 0 otherwise,
with distances computed on repeat-collapsed code strings.
"""

import logging
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .corpus import SILENCE, AlignedUtterance, CodeSequence, CorpusFormatError, _read_lines
from .editdist import collapse_repeats, normalized_distance, normalized_distances

logger = logging.getLogger(__name__)

Trigram = Tuple[str, str, str]


@dataclass(eq=False)
class Segment:
    utterance_id: str
    speaker_id: str
    trigram: Trigram
    code_slice: np.ndarray
    start: int
    end: int

    @property
    def key(self):
        return (self.utterance_id, self.start, self.end)


@dataclass(eq=False)
class TripleSet:
    """Triples stored as index arrays into ``segments``.

    ``contrast[k]`` indexes ``contrasts``, the list of ordered
    ``(trigram_A, trigram_B)`` category pairs.
    """

    segments: List[Segment]
    a: np.ndarray
    b: np.ndarray
    x: np.ndarray
    contrast: np.ndarray
    contrasts: List[Tuple[Trigram, Trigram]]

    def __len__(self):
        return int(self.a.shape[0])


@dataclass(frozen=True)
class AbxResult:
    error: float
    accuracy: float
    micro_error: float
    n_triples: int
    n_contrasts: int


def extract_segments(corpus: Sequence[AlignedUtterance],
                     silence_label: str = SILENCE) -> List[Segment]:
    """Cut each utterance into non-overlapping trigram segments.

    Runs of contiguous non-silence intervals are chunked greedily from their
    start into groups of three; a shorter trailing group is dropped. Silence
    intervals and unaligned gaps end a run.
    """
    segments = []
    for u in corpus:
        runs, run = [], []
        for iv in u.intervals:
            if iv.label == silence_label or (run and iv.start != run[-1].end):
                if run:
                    runs.append(run)
                run = [] if iv.label == silence_label else [iv]
            else:
                run.append(iv)
        if run:
            runs.append(run)
        for run in runs:
            for k in range(0, len(run) - 2, 3):
                first, mid, last = run[k:k + 3]
                segments.append(Segment(
                    u.utterance_id, u.speaker_id, (first.label, mid.label, last.label),
                    u.codes[first.start:last.end], first.start, last.end,
                ))
    return segments


def _unrank_block(r, n_a, n_b):
    """Decode triple rank r within a block into (a position, x position, b position)."""
    b_pos = r % n_b
    rest = r // n_b
    x_rank = rest % (n_a - 1)
    a_pos = rest // (n_a - 1)
    x_pos = x_rank + (x_rank >= a_pos)
    return a_pos, x_pos, b_pos


def build_triples(segments: Sequence[Segment], max_per_contrast: Optional[int] = 500,
                  seed: int = 0, within_speaker: bool = False) -> TripleSet:
    """Enumerate minimal-pair triples, capping each contrast by seeded sampling.

    For each ordered contrast (T_A, T_B) every (A, X) ordered pair of distinct
    T_A segments is combined with every T_B segment. Contrasts are visited in
    sorted order and a single generator seeded with ``seed`` draws the capped
    subsets, so the result is a pure function of its arguments.
    """
    if not segments:
        raise ValueError("no segments to build triples from")
    if max_per_contrast is not None and max_per_contrast < 1:
        raise ValueError("max_per_contrast must be positive")
    segments = list(segments)
    by_trigram = defaultdict(list)
    for idx, seg in enumerate(segments):
        by_trigram[seg.trigram].append(idx)
    by_context = defaultdict(list)
    for tri in by_trigram:
        by_context[(tri[0], tri[2])].append(tri)

    rng = np.random.default_rng(seed)
    out_a, out_b, out_x, out_c = [], [], [], []
    contrasts = []
    for context in sorted(by_context):
        cats = sorted(by_context[context])
        for cat_a in cats:
            for cat_b in cats:
                if cat_a == cat_b:
                    continue
                blocks = _contrast_blocks(segments, by_trigram[cat_a], by_trigram[cat_b],
                                          within_speaker)
                sizes = np.array([len(a) * (len(a) - 1) * len(b) for a, b in blocks],
                                 dtype=np.int64)
                total = int(sizes.sum())
                if total == 0:
                    continue
                if max_per_contrast is not None and total > max_per_contrast:
                    ranks = np.sort(rng.choice(total, size=max_per_contrast, replace=False))
                else:
                    ranks = np.arange(total, dtype=np.int64)
                starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
                which = np.searchsorted(starts, ranks, side="right") - 1
                c_id = len(contrasts)
                contrasts.append((cat_a, cat_b))
                for blk in np.unique(which):
                    a_idx, b_idx = blocks[blk]
                    r = ranks[which == blk] - starts[blk]
                    ap, xp, bp = _unrank_block(r, len(a_idx), len(b_idx))
                    a_arr, b_arr = np.asarray(a_idx), np.asarray(b_idx)
                    out_a.append(a_arr[ap])
                    out_x.append(a_arr[xp])
                    out_b.append(b_arr[bp])
                    out_c.append(np.full(r.shape[0], c_id, dtype=np.int64))
    if not contrasts:
        raise ValueError("no minimal pairs: no two trigram categories differ only in the centre "
                         "phoneme with at least two tokens of the first")
    cat = lambda parts: np.concatenate(parts).astype(np.int64)
    return TripleSet(segments, cat(out_a), cat(out_b), cat(out_x), cat(out_c), contrasts)


def _contrast_blocks(segments, idx_a, idx_b, within_speaker):
    if not within_speaker:
        return [(idx_a, idx_b)]
    by_spk_a, by_spk_b = defaultdict(list), defaultdict(list)
    for i in idx_a:
        by_spk_a[segments[i].speaker_id].append(i)
    for i in idx_b:
        by_spk_b[segments[i].speaker_id].append(i)
    return [(by_spk_a[s], by_spk_b[s]) for s in sorted(by_spk_a) if s in by_spk_b]


def abx_error_one(a, b, x) -> float:
    d_ax = normalized_distance(a, x, collapse=True)
    d_bx = normalized_distance(b, x, collapse=True)
    if d_ax > d_bx:
        return 1.0
    if d_ax == d_bx:
        return 0.5
    return 0.0


def triple_errors(triples: TripleSet, jobs: int = 1) -> np.ndarray:
    """Per-triple errors in {0, 0.5, 1}."""
    strings = [collapse_repeats(np.asarray(s.code_slice)) for s in triples.segments]
    d_ax = normalized_distances(strings, triples.x, triples.a, jobs)
    d_bx = normalized_distances(strings, triples.x, triples.b, jobs)
    return np.where(d_ax > d_bx, 1.0, np.where(d_ax == d_bx, 0.5, 0.0))


def abx_score(triples: TripleSet, jobs: int = 1) -> AbxResult:
    """Mean error per contrast, averaged over contrasts; micro average too."""
    if len(triples) == 0:
        raise ValueError("ABX score needs at least one triple")
    errors = triple_errors(triples, jobs)
    n_contrasts = len(triples.contrasts)
    sums = np.bincount(triples.contrast, weights=errors, minlength=n_contrasts)
    counts = np.bincount(triples.contrast, minlength=n_contrasts)
    present = counts > 0
    # fsum is order-independent, so the average does not depend on contrast order
    macro = math.fsum((sums[present] / counts[present]).tolist()) / int(present.sum())
    micro = float(errors.sum() / errors.shape[0])
    return AbxResult(macro, 1.0 - macro, micro, len(triples), int(present.sum()))


# triples file: contrast_id, role, utterance_id, start, end, trigram (space-joined)

def write_triples(path, triples: TripleSet) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for k in range(len(triples)):
            c = int(triples.contrast[k])
            for role, idx in (("A", triples.a[k]), ("B", triples.b[k]), ("X", triples.x[k])):
                seg = triples.segments[idx]
                f.write(f"{c}\t{role}\t{seg.utterance_id}\t{seg.start}\t{seg.end}\t"
                        f"{' '.join(seg.trigram)}\n")


def read_triples(path, sequences: Sequence[CodeSequence], regime: str = "slice") -> TripleSet:
    """Load a triples file and attach code strings to its segments.

    ``regime="slice"`` cuts ``[start, end)`` out of the utterance's codes.
    ``regime="segment"`` expects a separately encoded segment per line of the
    codes file, with utterance id ``"{utterance_id}:{start}-{end}"``.
    """
    if regime not in ("slice", "segment"):
        raise ValueError(f"unknown ABX regime {regime!r}")
    by_id = {s.utterance_id: s for s in sequences}
    rows = []
    for lineno, line in _read_lines(path):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 6:
            raise CorpusFormatError(path, lineno, f"expected 6 tab-separated fields, got {len(parts)}")
        try:
            cid, role, utt, start, end = int(parts[0]), parts[1], parts[2], int(parts[3]), int(parts[4])
        except ValueError:
            raise CorpusFormatError(path, lineno, "non-integer field") from None
        trigram = tuple(parts[5].split(" "))
        if len(trigram) != 3:
            raise CorpusFormatError(path, lineno, "trigram must have 3 labels")
        rows.append((lineno, cid, role, utt, start, end, trigram))
    if len(rows) % 3:
        raise CorpusFormatError(path, len(rows), "triples file must contain A, B, X line groups")

    seg_index: Dict[tuple, int] = {}
    segments: List[Segment] = []
    contrast_ids: Dict[int, int] = {}
    contrasts = []
    a, b, x, c = [], [], [], []
    for g in range(0, len(rows), 3):
        group = rows[g:g + 3]
        if [r[2] for r in group] != ["A", "B", "X"] or len({r[1] for r in group}) != 1:
            raise CorpusFormatError(path, group[0][0], "expected lines with roles A, B, X of one contrast")
        ids = []
        for lineno, _, _, utt, start, end, trigram in group:
            key = (utt, start, end)
            if key not in seg_index:
                if regime == "slice":
                    seq = by_id.get(utt)
                    if seq is None or not 0 <= start < end <= len(seq):
                        raise CorpusFormatError(path, lineno, f"no codes for {utt}[{start}:{end}]")
                    codes = seq.codes[start:end]
                    spk = seq.speaker_id
                else:
                    seq = by_id.get(f"{utt}:{start}-{end}")
                    if seq is None:
                        raise CorpusFormatError(path, lineno, f"no segment codes for {utt}:{start}-{end}")
                    codes, spk = seq.codes, seq.speaker_id
                seg_index[key] = len(segments)
                segments.append(Segment(utt, spk, trigram, codes, start, end))
            ids.append(seg_index[key])
        cid = group[0][1]
        if cid not in contrast_ids:
            contrast_ids[cid] = len(contrasts)
            contrasts.append((group[0][6], group[1][6]))
        a.append(ids[0]); b.append(ids[1]); x.append(ids[2])
        c.append(contrast_ids[cid])
    arr = lambda v: np.asarray(v, dtype=np.int64)
    return TripleSet(segments, arr(a), arr(b), arr(x), arr(c), contrasts)
