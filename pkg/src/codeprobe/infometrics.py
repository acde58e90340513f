"""Plug-in entropy, mutual information and NMI over frame-wise (code, label)
pairs. All quantities are in nats; NMI is unit-free."""

from dataclasses import dataclass
from typing import Hashable, List, Sequence

import numpy as np


@dataclass(eq=False)
class JointHistogram:
    """Co-occurrence counts; rows are code values, columns are labels."""

    counts: np.ndarray
    code_values: List[Hashable]
    label_values: List[Hashable]

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.ndim != 2:
            raise ValueError("counts must be a 2-D table")
        if self.counts.shape != (len(self.code_values), len(self.label_values)):
            raise ValueError("counts shape does not match code/label values")
        if np.any(self.counts < 0):
            raise ValueError("counts must be non-negative")
        if self.total == 0:
            raise ValueError("histogram is empty")

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @classmethod
    def from_counts(cls, counts) -> "JointHistogram":
        counts = np.asarray(counts)
        return cls(counts, list(range(counts.shape[0])), list(range(counts.shape[1])))

    def transpose(self) -> "JointHistogram":
        return JointHistogram(self.counts.T.copy(), list(self.label_values), list(self.code_values))

    def __add__(self, other: "JointHistogram") -> "JointHistogram":
        codes = sorted(set(self.code_values) | set(other.code_values), key=_sort_key)
        labels = sorted(set(self.label_values) | set(other.label_values), key=_sort_key)
        ci = {c: i for i, c in enumerate(codes)}
        li = {y: i for i, y in enumerate(labels)}
        out = np.zeros((len(codes), len(labels)), dtype=np.int64)
        for h in (self, other):
            rows = [ci[c] for c in h.code_values]
            cols = [li[y] for y in h.label_values]
            out[np.ix_(rows, cols)] += h.counts
        return JointHistogram(out, codes, labels)


def _sort_key(v):
    return (type(v).__name__, v)


def build_histogram(codes: Sequence[Hashable], labels: Sequence[Hashable]) -> JointHistogram:
    if len(codes) != len(labels):
        raise ValueError(f"length mismatch: {len(codes)} codes vs {len(labels)} labels")
    if len(codes) == 0:
        raise ValueError("cannot build a histogram from zero frames")
    code_values, code_idx = np.unique(np.asarray(codes), return_inverse=True)
    label_values, label_idx = np.unique(np.asarray(labels), return_inverse=True)
    flat = code_idx.ravel() * len(label_values) + label_idx.ravel()
    counts = np.bincount(flat, minlength=len(code_values) * len(label_values))
    return JointHistogram(
        counts.reshape(len(code_values), len(label_values)),
        code_values.tolist(),
        label_values.tolist(),
    )


def _entropy_of_counts(c: np.ndarray) -> float:
    c = c[c > 0].astype(np.float64)
    n = c.sum()
    return float(-np.sum((c / n) * np.log(c / n)))


def entropy(h: JointHistogram, axis: str = "label") -> float:
    """Entropy of the code (``axis="code"``) or label marginal."""
    if axis == "code":
        return _entropy_of_counts(h.counts.sum(axis=1))
    if axis == "label":
        return _entropy_of_counts(h.counts.sum(axis=0))
    raise ValueError(f"axis must be 'code' or 'label', not {axis!r}")


def conditional_entropy(h: JointHistogram) -> float:
    """H(label | code), the plug-in estimate."""
    n = h.total
    c = h.counts.astype(np.float64)
    row = c.sum(axis=1, keepdims=True)
    nz = c > 0
    cond = np.where(nz, c, 1.0) / np.where(row > 0, row, 1.0)
    return float(-np.sum(np.where(nz, (c / n) * np.log(cond), 0.0)))


def mutual_information(h: JointHistogram) -> float:
    n = h.total
    c = h.counts.astype(np.float64)
    px = c.sum(axis=1, keepdims=True) / n
    py = c.sum(axis=0, keepdims=True) / n
    nz = c > 0
    pxy = c / n
    ratio = np.where(nz, pxy, 1.0) / np.where(nz, px * py, 1.0)
    return max(0.0, float(np.sum(np.where(nz, pxy * np.log(ratio), 0.0))))


def nmi(h: JointHistogram) -> float:
    """Mutual information over the arithmetic mean of the two entropies."""
    denom = entropy(h, "code") + entropy(h, "label")
    if denom <= 0.0:
        raise ValueError("NMI undefined: both marginals are point masses")
    return min(1.0, 2.0 * mutual_information(h) / denom)
