import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from codeprobe.infometrics import (
    JointHistogram,
    build_histogram,
    conditional_entropy,
    entropy,
    mutual_information,
    nmi,
)

from conftest import random_histogram


def v_measure_oracle(counts):
    """Harmonic mean of homogeneity and completeness, from pure-Python sums."""
    n = sum(map(sum, counts))
    rows = [sum(r) for r in counts]
    cols = [sum(c) for c in zip(*counts)]

    def h(marg):
        return -math.fsum(m / n * math.log(m / n) for m in marg if m)

    h_label_given_code = -math.fsum(c / n * math.log(c / rows[i])
                                    for i, r in enumerate(counts) for c in r if c)
    h_code_given_label = -math.fsum(c / n * math.log(c / cols[j])
                                    for r in counts for j, c in enumerate(r) if c)
    hom = 1.0 - h_label_given_code / h(cols)
    com = 1.0 - h_code_given_label / h(rows)
    return 2 * hom * com / (hom + com)


count_tables = arrays(np.int64, st.tuples(st.integers(1, 8), st.integers(1, 8)),
                      elements=st.integers(0, 50)).filter(lambda c: c.sum() > 0)


class TestBuildHistogram:
    def test_counts(self):
        h = build_histogram([1, 1, 2, 5], ["a", "b", "b", "b"])
        assert h.code_values == [1, 2, 5]
        assert h.label_values == ["a", "b"]
        np.testing.assert_array_equal(h.counts, [[1, 1], [0, 1], [0, 1]])
        assert h.total == 4

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="length mismatch"):
            build_histogram([1, 2], ["a"])

    def test_merge(self):
        a = build_histogram([0, 1], ["x", "y"])
        b = build_histogram([1, 2], ["y", "z"])
        m = a + b
        assert m.code_values == [0, 1, 2] and m.label_values == ["x", "y", "z"]
        np.testing.assert_array_equal(m.counts, [[1, 0, 0], [0, 2, 0], [0, 0, 1]])


class TestEntropies:
    def test_uniform(self):
        h = JointHistogram.from_counts(np.ones((4, 2), dtype=int))
        assert entropy(h, "code") == pytest.approx(math.log(4), abs=1e-15)
        assert entropy(h, "label") == pytest.approx(math.log(2), abs=1e-15)
        assert mutual_information(h) == 0.0

    def test_perfect_code(self):
        h = JointHistogram.from_counts(np.diag([3, 5, 2]))
        assert conditional_entropy(h) == 0.0
        assert nmi(h) == pytest.approx(1.0, abs=1e-15)

    def test_nmi_undefined(self):
        with pytest.raises(ValueError, match="NMI undefined"):
            nmi(JointHistogram.from_counts([[7]]))

    @given(count_tables)
    @settings(max_examples=200)
    def test_bounds(self, c):
        h = JointHistogram.from_counts(c)
        i = mutual_information(h)
        assert -1e-12 <= i <= min(entropy(h, "code"), entropy(h, "label")) + 1e-12
        if entropy(h, "code") + entropy(h, "label") > 0:
            assert 0.0 <= nmi(h) <= 1.0

    @given(count_tables)
    @settings(max_examples=200)
    def test_chain_rule(self, c):
        h = JointHistogram.from_counts(c)
        assert mutual_information(h) == pytest.approx(
            max(0.0, entropy(h, "label") - conditional_entropy(h)), abs=1e-12)

    @given(count_tables, st.randoms())
    @settings(max_examples=100)
    def test_symmetry_and_relabeling(self, c, rnd):
        h = JointHistogram.from_counts(c)
        if entropy(h, "code") + entropy(h, "label") == 0:
            return
        base = nmi(h)
        assert nmi(h.transpose()) == pytest.approx(base, abs=1e-12)
        rows = list(range(c.shape[0]))
        cols = list(range(c.shape[1]))
        rnd.shuffle(rows)
        rnd.shuffle(cols)
        assert nmi(JointHistogram.from_counts(c[np.ix_(rows, cols)])) == pytest.approx(base, abs=1e-12)

    @given(count_tables.filter(lambda c: c.shape[0] >= 2), st.data())
    @settings(max_examples=100)
    def test_merging_codes_never_increases_mi(self, c, data):
        i, j = data.draw(st.lists(st.integers(0, c.shape[0] - 1), min_size=2, max_size=2, unique=True))
        merged = np.delete(c, j, axis=0)
        merged[i if i < j else i - 1] += c[j]
        before = mutual_information(JointHistogram.from_counts(c))
        after = mutual_information(JointHistogram.from_counts(merged))
        assert after <= before + 1e-12


class TestVMeasure:
    def test_matches_oracles(self):
        sklearn = pytest.importorskip("sklearn.metrics")
        rng = np.random.default_rng(11)
        for _ in range(10):
            c = random_histogram(rng, int(rng.integers(2, 40)), int(rng.integers(2, 12)), 5000)
            h = JointHistogram.from_counts(c)
            assert abs(nmi(h) - v_measure_oracle(c.tolist())) <= 1e-12
            codes, labels = np.nonzero(c)
            reps = c[codes, labels]
            v = sklearn.v_measure_score(np.repeat(labels, reps), np.repeat(codes, reps))
            assert abs(nmi(h) - v) <= 1e-10
