"""Synthetic aligned corpora with a tunable phoneme-to-code channel.

Every frame of a phoneme emits one code. With probability ``purity`` the
code is drawn uniformly from the phoneme's own block of the codebook; with
probability ``leakage * (1 - purity)`` from the speaker's block; otherwise
uniformly from the whole codebook. Blocks split ``[0, K)`` as evenly as
possible; when there are more groups than codes, neighbouring groups share a
single code.
"""

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, List, Tuple

import numpy as np

from .corpus import AlignedUtterance, CodeSequence, PhonemeInterval, write_alignments, write_codes

# 39-phone ARPAbet inventory (stress removed)
ARPABET = (
    "aa ae ah ao aw ay b ch d dh eh er ey f g hh ih iy jh k l m n ng "
    "ow oy p r s sh t th uh uw v w y z zh"
).split()


@dataclass(frozen=True)
class ChannelConfig:
    codebook_size: int = 256
    n_phonemes: int = 39
    n_speakers: int = 32
    purity: float = 0.8
    speaker_leakage: float = 0.0
    frames_per_phoneme: Tuple[int, int] = (2, 8)
    utterance_length: Tuple[int, int] = (8, 30)
    n_utterances: int = 1000
    seed: int = 0

    def validate(self) -> None:
        if self.codebook_size < 1 or self.n_phonemes < 2 or self.n_speakers < 1:
            raise ValueError("codebook_size >= 1, n_phonemes >= 2 and n_speakers >= 1 required")
        if self.n_utterances < 1:
            raise ValueError("n_utterances must be positive")
        if not (0.0 <= self.purity <= 1.0 and 0.0 <= self.speaker_leakage <= 1.0):
            raise ValueError("purity and speaker_leakage must lie in [0, 1]")
        for name in ("frames_per_phoneme", "utterance_length"):
            lo, hi = getattr(self, name)
            if not 1 <= lo <= hi:
                raise ValueError(f"{name} must satisfy 1 <= min <= max, got {(lo, hi)}")
        if self.purity == 1.0 and self.speaker_leakage == 0.0 and self.codebook_size < self.n_phonemes:
            raise ValueError("a pure channel needs codebook_size >= n_phonemes")

    @property
    def phonemes(self) -> List[str]:
        if self.n_phonemes <= len(ARPABET):
            return ARPABET[:self.n_phonemes]
        return [f"ph{i}" for i in range(self.n_phonemes)]


def code_blocks(n_groups: int, codebook_size: int) -> np.ndarray:
    """(n_groups, 2) array of half-open ``[start, end)`` code ranges."""
    g = np.arange(n_groups, dtype=np.int64)
    start = g * codebook_size // n_groups
    end = np.maximum((g + 1) * codebook_size // n_groups, start + 1)
    return np.stack([start, end], axis=1)


def _utterance(config: ChannelConfig, index: int, phone_blocks, speaker_blocks):
    rng = np.random.default_rng([config.seed, index])
    speaker = int(rng.integers(config.n_speakers))
    n_ph = int(rng.integers(config.utterance_length[0], config.utterance_length[1] + 1))
    # uniform over the inventory, never repeating the previous phoneme
    steps = 1 + rng.integers(config.n_phonemes - 1, size=n_ph - 1)
    first = rng.integers(config.n_phonemes)
    phones = (first + np.concatenate([[0], np.cumsum(steps)])) % config.n_phonemes
    durations = rng.integers(config.frames_per_phoneme[0], config.frames_per_phoneme[1] + 1,
                             size=n_ph)
    frame_phone = np.repeat(phones, durations)
    n_frames = frame_phone.shape[0]

    u = rng.random(n_frames)
    lo, hi = phone_blocks[frame_phone, 0], phone_blocks[frame_phone, 1]
    from_phone = rng.integers(lo, hi)
    s_lo, s_hi = speaker_blocks[speaker]
    from_speaker = rng.integers(s_lo, s_hi, size=n_frames)
    from_anywhere = rng.integers(config.codebook_size, size=n_frames)
    p = config.purity
    q = p + config.speaker_leakage * (1.0 - p)
    codes = np.where(u < p, from_phone, np.where(u < q, from_speaker, from_anywhere))

    ends = np.cumsum(durations)
    starts = ends - durations
    names = config.phonemes
    intervals = [PhonemeInterval(names[ph], int(s), int(e))
                 for ph, s, e in zip(phones, starts, ends)]
    seq = CodeSequence(f"utt{index:06d}", f"spk{speaker:03d}", codes, config.codebook_size)
    return AlignedUtterance(seq, intervals)


def generate(config: ChannelConfig) -> Tuple[List[AlignedUtterance], Dict]:
    """Generate ``config.n_utterances`` utterances plus the channel tables.

    Utterance i draws from its own generator seeded by ``(seed, i)``.
    """
    config.validate()
    phone_blocks = code_blocks(config.n_phonemes, config.codebook_size)
    speaker_blocks = code_blocks(config.n_speakers, config.codebook_size)
    corpus = [_utterance(config, i, phone_blocks, speaker_blocks)
              for i in range(config.n_utterances)]
    tables = {
        "config": asdict(config),
        "phoneme_blocks": {ph: blk.tolist() for ph, blk in zip(config.phonemes, phone_blocks)},
        "speaker_blocks": {f"spk{s:03d}": blk.tolist() for s, blk in enumerate(speaker_blocks)},
    }
    return corpus, tables


def write_corpus(prefix, corpus: List[AlignedUtterance], tables: Dict) -> Dict[str, Path]:
    """Write ``<prefix>.codes``, ``<prefix>.align`` and ``<prefix>.channel.json``."""
    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    paths = {
        "codes": prefix.with_name(prefix.name + ".codes"),
        "alignments": prefix.with_name(prefix.name + ".align"),
        "channel": prefix.with_name(prefix.name + ".channel.json"),
    }
    write_codes(paths["codes"], [u.code_sequence for u in corpus])
    write_alignments(paths["alignments"], corpus)
    paths["channel"].write_text(json.dumps(tables, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return paths
