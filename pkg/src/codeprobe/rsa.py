"""Representational similarity analysis over symbol strings.

Stimuli are compared pairwise by normalized edit distance, once on their
code sequences and once on their reference transcriptions; the RSA score is
the correlation between the two lists of distances.
"""

from dataclasses import dataclass
from typing import Optional, Sequence

from . import stats
from .editdist import DistancePairs, PairSampler, collapse_repeats, pairwise_distances

DEFAULT_PAIR_BUDGET = 5_000_000


@dataclass(frozen=True)
class RsaResult:
    correlation: float
    n_pairs: int
    input_kind: str = "complete"
    correlation_kind: str = "pearson"

    def __post_init__(self):
        if self.n_pairs < 2:
            raise ValueError("RSA needs at least 2 pairs")


def rsa_score(pairs: DistancePairs, kind: str = "pearson",
              input_kind: str = "complete") -> RsaResult:
    if len(pairs) < 2:
        raise ValueError(f"RSA needs at least 2 pairs, got {len(pairs)}")
    r = stats.correlation(pairs.distances_a, pairs.distances_b, kind)
    return RsaResult(r, len(pairs), input_kind, kind)


def rsa_on_corpus(codes: Sequence, references: Sequence,
                  sampler: Optional[PairSampler] = None, kind: str = "pearson",
                  input_kind: str = "complete", jobs: int = 1) -> RsaResult:
    """RSA between code strings (repeats collapsed) and reference strings.

    ``codes`` may hold :class:`~codeprobe.corpus.CodeSequence` objects or raw
    symbol sequences; references are compared as given.
    """
    if len(codes) != len(references):
        raise ValueError(
            f"{len(codes)} code strings but {len(references)} reference strings"
        )
    collapsed = [collapse_repeats(getattr(c, "codes", c)) for c in codes]
    sampler = sampler or PairSampler(DEFAULT_PAIR_BUDGET)
    pairs = pairwise_distances(collapsed, references, sampler, jobs=jobs)
    return rsa_score(pairs, kind, input_kind)
