import sys

import numpy as np
import pytest

from codeprobe.corpus import AlignedUtterance, CodeSequence, PhonemeInterval
from codeprobe.synth import ChannelConfig, generate


def make_utt(utt, spk, codes, labels, codebook_size=None):
    """Aligned utterance with one interval per entry of ``labels``.

    ``labels`` is a list of ``(label, n_frames)``; runs tile the code frames
    from 0 and may leave trailing frames unlabelled.
    """
    codes = np.asarray(codes, dtype=np.int64)
    k = codebook_size or int(codes.max()) + 1
    intervals, t = [], 0
    for label, n in labels:
        intervals.append(PhonemeInterval(label, t, t + n))
        t += n
    return AlignedUtterance(CodeSequence(utt, spk, codes, k), intervals)


def random_histogram(rng, n_codes, n_labels, n_frames=50_000, concentration=0.3):
    """Random joint counts with a skewed label distribution per code."""
    p_code = rng.dirichlet(np.full(n_codes, 1.0))
    cond = rng.dirichlet(np.full(n_labels, concentration), size=n_codes)
    joint = (p_code[:, None] * cond).ravel()
    return rng.multinomial(n_frames, joint / joint.sum()).reshape(n_codes, n_labels)


@pytest.fixture(scope="session")
def small_corpus():
    corpus, _ = generate(ChannelConfig(codebook_size=32, n_phonemes=8, n_speakers=4, purity=0.7,
                                       n_utterances=60, utterance_length=(5, 12), seed=3))
    return corpus


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
