"""Nearest-prototype vector quantization against a fixed codebook.

Codebook file: a header line ``K d`` followed by K lines of d numbers.
Feature file: per utterance a header ``utterance_id <TAB> speaker_id`` then
one frame of d numbers per line; utterances are separated by blank lines.
"""

import logging
import warnings
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from .corpus import CodeSequence, CorpusFormatError, _read_lines

logger = logging.getLogger(__name__)

_CHUNK = 2048


@dataclass(eq=False)
class Codebook:
    prototypes: np.ndarray

    def __post_init__(self):
        protos = np.asarray(self.prototypes, dtype=np.float64)
        if protos.ndim != 2 or protos.shape[0] < 1 or protos.shape[1] < 1:
            raise ValueError("codebook must be a non-empty (K, d) array")
        if np.unique(protos, axis=0).shape[0] < protos.shape[0]:
            warnings.warn("codebook has identical prototypes; ties go to the lowest index",
                          RuntimeWarning, stacklevel=2)
        self.prototypes = protos

    @property
    def size(self) -> int:
        return self.prototypes.shape[0]

    @property
    def dim(self) -> int:
        return self.prototypes.shape[1]


def quantize(features, codebook: Codebook) -> np.ndarray:
    """Index of the nearest prototype (squared Euclidean) for every frame.

    Distances are summed from explicit coordinate differences rather than the
    expanded dot-product form, which would add rounding error; exact ties
    resolve to the lowest index.
    """
    f = np.asarray(features, dtype=np.float64)
    if f.ndim != 2 or f.shape[1] != codebook.dim:
        raise ValueError(
            f"feature dimension {f.shape[-1] if f.ndim else None} does not match codebook dimension {codebook.dim}"
        )
    out = np.empty(f.shape[0], dtype=np.int64)
    e = codebook.prototypes
    step = max(1, _CHUNK * 64 // max(1, e.shape[0]))
    for lo in range(0, f.shape[0], step):
        diff = f[lo:lo + step, None, :] - e[None, :, :]
        out[lo:lo + step] = np.argmin(np.einsum("tkd,tkd->tk", diff, diff), axis=1)
    return out


def load_codebook(path) -> Codebook:
    lines = [(n, l) for n, l in _read_lines(path) if l.strip()]
    if not lines:
        raise CorpusFormatError(path, 1, "empty codebook file")
    try:
        k, d = (int(v) for v in lines[0][1].split())
    except ValueError:
        raise CorpusFormatError(path, lines[0][0], "header must be 'K d'") from None
    if len(lines) - 1 != k:
        raise CorpusFormatError(path, lines[-1][0], f"expected {k} prototypes, found {len(lines) - 1}")
    rows = []
    for lineno, line in lines[1:]:
        vals = line.split()
        if len(vals) != d:
            raise CorpusFormatError(path, lineno, f"expected {d} values, got {len(vals)}")
        try:
            rows.append([float(v) for v in vals])
        except ValueError:
            raise CorpusFormatError(path, lineno, "non-numeric value") from None
    return Codebook(np.asarray(rows))


def write_codebook(path, codebook: Codebook) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(f"{codebook.size} {codebook.dim}\n")
        for row in codebook.prototypes:
            f.write(" ".join(repr(float(v)) for v in row) + "\n")


def load_features(path) -> List[Tuple[str, str, np.ndarray]]:
    out = []
    header, frames, dim = None, [], None

    def flush(lineno):
        if header is None:
            return
        if not frames:
            raise CorpusFormatError(path, lineno, f"utterance {header[0]!r} has no frames")
        out.append((header[0], header[1], np.asarray(frames, dtype=np.float64)))

    for lineno, line in _read_lines(path):
        if not line.strip():
            flush(lineno)
            header, frames = None, []
            continue
        if header is None:
            parts = line.split("\t")
            if len(parts) != 2:
                raise CorpusFormatError(path, lineno, "expected 'utterance_id<TAB>speaker_id'")
            header = (parts[0], parts[1])
            continue
        try:
            vals = [float(v) for v in line.split()]
        except ValueError:
            raise CorpusFormatError(path, lineno, "non-numeric feature value") from None
        if dim is None:
            dim = len(vals)
        elif len(vals) != dim:
            raise CorpusFormatError(path, lineno, f"expected {dim} values, got {len(vals)}")
        frames.append(vals)
    flush(lineno if header else 0)
    return out


def quantize_features(utterances, codebook: Codebook) -> List[CodeSequence]:
    return [CodeSequence(utt, spk, quantize(x, codebook), codebook.size)
            for utt, spk, x in utterances]
