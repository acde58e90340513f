"""Code sequences, phoneme alignments, and the frame-labelled utterances built
from them.

File formats (UTF-8, LF or CRLF line endings)::

    codes:      utterance_id <TAB> speaker_id <TAB> c0 c1 c2 ...
    alignment:  utterance_id <TAB> label <TAB> start_frame <TAB> end_frame

Alignment intervals are half-open and expressed in code frames.
"""

import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Hashable, List, Optional, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)

SILENCE = "SIL"


class CorpusFormatError(ValueError):
    """A codes or alignment file violates its format."""

    def __init__(self, path, lineno, message):
        self.path = str(path)
        self.lineno = lineno
        super().__init__(f"{path}:{lineno}: {message}")


@dataclass(eq=False)
class CodeSequence:
    utterance_id: str
    speaker_id: str
    codes: np.ndarray
    codebook_size: int

    def __post_init__(self):
        codes = np.asarray(self.codes, dtype=np.int64)
        if codes.ndim != 1 or codes.size == 0:
            raise ValueError(f"{self.utterance_id}: empty code sequence")
        if self.codebook_size < 1:
            raise ValueError("codebook_size must be positive")
        if codes.min() < 0 or codes.max() >= self.codebook_size:
            raise ValueError(
                f"{self.utterance_id}: code out of range [0, {self.codebook_size})"
            )
        codes.setflags(write=False)
        self.codes = codes

    def __len__(self):
        return self.codes.shape[0]


@dataclass(frozen=True)
class PhonemeInterval:
    label: str
    start: int
    end: int

    def __post_init__(self):
        if not self.start < self.end:
            raise ValueError(f"interval {self.label!r} has start >= end")
        if self.start < 0:
            raise ValueError(f"interval {self.label!r} starts before frame 0")


@dataclass(eq=False)
class AlignedUtterance:
    code_sequence: CodeSequence
    intervals: List[PhonemeInterval] = field(default_factory=list)

    def __post_init__(self):
        n = len(self.code_sequence)
        prev_end = 0
        for iv in self.intervals:
            if iv.start < prev_end:
                raise ValueError(
                    f"{self.utterance_id}: intervals overlap or are unsorted at "
                    f"{iv.label!r} [{iv.start}, {iv.end})"
                )
            if iv.end > n:
                raise ValueError(
                    f"{self.utterance_id}: interval {iv.label!r} ends at {iv.end}, "
                    f"past the {n} code frames"
                )
            prev_end = iv.end

    @property
    def utterance_id(self):
        return self.code_sequence.utterance_id

    @property
    def speaker_id(self):
        return self.code_sequence.speaker_id

    @property
    def codes(self):
        return self.code_sequence.codes


def _read_lines(path):
    """Yield ``(lineno, text)`` with line terminators stripped."""
    data = Path(path).read_bytes()
    text = data.decode("utf-8")
    if "\r" in text.replace("\r\n", ""):
        raise CorpusFormatError(path, text[:text.find("\r")].count("\n") + 1,
                                "CR-only line ending")
    for lineno, line in enumerate(text.split("\n"), start=1):
        yield lineno, line.rstrip("\r")


def load_codes(path, codebook_size: Optional[int] = None,
               skip_bad: bool = False) -> List[CodeSequence]:
    """Read a codes file, one :class:`CodeSequence` per non-empty line.

    When ``codebook_size`` is None it is inferred as the largest code + 1.
    ``skip_bad`` logs and drops malformed lines instead of raising.
    """
    rows = []
    seen = set()
    for lineno, line in _read_lines(path):
        if not line.strip():
            continue
        try:
            parts = line.split("\t")
            if len(parts) != 3:
                raise CorpusFormatError(path, lineno, f"expected 3 tab-separated fields, got {len(parts)}")
            utt, spk, body = parts
            if not utt:
                raise CorpusFormatError(path, lineno, "empty utterance id")
            if utt in seen:
                raise CorpusFormatError(path, lineno, f"duplicate utterance id {utt!r}")
            tokens = body.split()
            if not tokens:
                raise CorpusFormatError(path, lineno, f"empty code list for {utt!r}")
            try:
                codes = [int(tok) for tok in tokens]
            except ValueError:
                bad = next(t for t in tokens if not t.lstrip("-").isdigit())
                raise CorpusFormatError(path, lineno, f"non-integer code {bad!r}") from None
            if min(codes) < 0:
                raise CorpusFormatError(path, lineno, "code out of range (negative)")
            if codebook_size is not None and max(codes) >= codebook_size:
                raise CorpusFormatError(
                    path, lineno, f"code out of range: {max(codes)} >= K={codebook_size}")
        except CorpusFormatError as err:
            if not skip_bad:
                raise
            logger.warning("skipping %s", err)
            continue
        seen.add(utt)
        rows.append((utt, spk, codes))
    if codebook_size is None:
        codebook_size = max((max(c) for _, _, c in rows), default=0) + 1
    return [CodeSequence(u, s, np.asarray(c, dtype=np.int64), codebook_size) for u, s, c in rows]


def write_codes(path, sequences: Sequence[CodeSequence]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for seq in sequences:
            f.write(f"{seq.utterance_id}\t{seq.speaker_id}\t{' '.join(map(str, seq.codes.tolist()))}\n")


def _rescale(intervals, factor):
    """Map raw-feature frames to code frames: floor on start, ceil on end.

    Neighbouring intervals can then share a frame; the earlier interval keeps
    it and intervals left empty are dropped.
    """
    out = []
    prev_end = 0
    for label, start, end in intervals:
        start, end = start // factor, -(-end // factor)
        start = max(start, prev_end)
        if start >= end:
            logger.warning("interval %r vanished after rescaling by %d", label, factor)
            continue
        out.append((label, start, end))
        prev_end = end
    return out


def load_alignments(path, frame_factor: int = 1) -> Dict[str, List[PhonemeInterval]]:
    """Read an alignment file into ``{utterance_id: sorted intervals}``."""
    if frame_factor < 1:
        raise ValueError("frame_factor must be >= 1")
    raw = defaultdict(list)
    for lineno, line in _read_lines(path):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            raise CorpusFormatError(path, lineno, f"expected 4 tab-separated fields, got {len(parts)}")
        utt, label, start, end = parts
        try:
            start, end = int(start), int(end)
        except ValueError:
            raise CorpusFormatError(path, lineno, "non-integer frame index") from None
        if not 0 <= start < end:
            raise CorpusFormatError(path, lineno, f"invalid interval [{start}, {end})")
        if not label:
            raise CorpusFormatError(path, lineno, "empty phoneme label")
        raw[utt].append((label, start, end, lineno))

    alignments = {}
    for utt, items in raw.items():
        items.sort(key=lambda t: (t[1], t[2]))
        for prev, cur in zip(items, items[1:]):
            if cur[1] < prev[2]:
                raise CorpusFormatError(path, cur[3], f"{utt}: overlapping intervals")
        triples = [(label, s, e) for label, s, e, _ in items]
        if frame_factor > 1:
            triples = _rescale(triples, frame_factor)
        alignments[utt] = [PhonemeInterval(label, s, e) for label, s, e in triples]
    return alignments


def write_alignments(path, corpus: Sequence[AlignedUtterance]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for u in corpus:
            for iv in u.intervals:
                f.write(f"{u.utterance_id}\t{iv.label}\t{iv.start}\t{iv.end}\n")


def join_corpus(sequences: Sequence[CodeSequence],
                alignments: Dict[str, List[PhonemeInterval]],
                skip_bad: bool = False) -> List[AlignedUtterance]:
    """Pair each code sequence with its alignment, in code-file order."""
    corpus = []
    for seq in sequences:
        intervals = alignments.get(seq.utterance_id)
        try:
            if intervals is None:
                raise ValueError(f"{seq.utterance_id}: no alignment")
            corpus.append(AlignedUtterance(seq, intervals))
        except ValueError as err:
            if not skip_bad:
                raise
            logger.warning("dropping utterance: %s", err)
    extra = set(alignments) - {s.utterance_id for s in sequences}
    if extra:
        logger.warning("%d aligned utterances have no codes and are ignored", len(extra))
    return corpus


def frame_labels(u: AlignedUtterance, silence_label: str = SILENCE) -> List[str]:
    labels = [silence_label] * len(u.code_sequence)
    for iv in u.intervals:
        labels[iv.start:iv.end] = [iv.label] * (iv.end - iv.start)
    return labels


def corpus_frames(corpus: Sequence[AlignedUtterance], silence_label: str = SILENCE,
                  keep_silence: bool = False) -> Tuple[np.ndarray, List[str]]:
    """Concatenate frame-wise ``(codes, labels)`` across utterances.

    Silence frames are dropped unless ``keep_silence``.
    """
    codes, labels = [], []
    for u in corpus:
        lab = frame_labels(u, silence_label)
        if keep_silence:
            codes.append(u.codes)
            labels.extend(lab)
        else:
            mask = np.fromiter((x != silence_label for x in lab), dtype=bool, count=len(lab))
            codes.append(u.codes[mask])
            labels.extend(x for x in lab if x != silence_label)
    flat = np.concatenate(codes) if codes else np.zeros(0, np.int64)
    return flat, labels


def phoneme_string(u: AlignedUtterance, silence_label: str = SILENCE) -> List[str]:
    """The utterance's transcription: interval labels in order, silence removed."""
    return [iv.label for iv in u.intervals if iv.label != silence_label]


def split_halves(corpus: Sequence, seed: int,
                 stratify: Optional[Callable[[object], Hashable]] = None) -> Tuple[list, list]:
    """Utterance-level random split into two halves of sizes ceil(n/2), floor(n/2).

    With ``stratify`` each group (e.g. speaker) is split separately and odd
    leftovers alternate between the halves, so every group with at least two
    members lands in both halves. Original order is preserved within halves.
    """
    n = len(corpus)
    if n < 2:
        raise ValueError(f"cannot split a corpus of {n} utterance(s)")
    rng = np.random.default_rng(seed)
    in_train = np.zeros(n, dtype=bool)
    if stratify is None:
        perm = rng.permutation(n)
        in_train[perm[:math.ceil(n / 2)]] = True
    else:
        groups = defaultdict(list)
        for idx, item in enumerate(corpus):
            groups[stratify(item)].append(idx)
        odd_to_train = True
        for key in sorted(groups, key=str):
            members = np.asarray(groups[key])
            members = members[rng.permutation(len(members))]
            half = len(members) // 2
            if len(members) % 2:
                half += int(odd_to_train)
                odd_to_train = not odd_to_train
            in_train[members[:half]] = True
    train = [corpus[i] for i in range(n) if in_train[i]]
    held = [corpus[i] for i in range(n) if not in_train[i]]
    return train, held
