import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cdpg.metrics import bleu4_lite, distinct2, lcs_length, nstd_z, precision_source, recall_target, rouge_l, zipf_table
from cdpg.tasks import entity_vocab

A, B, C, D = 0, 1, 2, 3


class TestDistinct2:
    def test_all_distinct(self):
        assert distinct2([A, B, C, D]) == 1.0

    def test_repeated(self):
        assert distinct2([A, A, A, A]) == pytest.approx(1 / 3)

    def test_short_is_one(self):
        assert distinct2([A]) == 1.0
        assert distinct2([]) == 1.0

    def test_terminator_ignored(self):
        assert distinct2([A, A, 9], eos=9) == 1.0


class TestOverlap:
    @given(st.lists(st.integers(0, 5), min_size=1, max_size=12))
    def test_identical(self, x):
        assert bleu4_lite(x, x) == pytest.approx(1.0, abs=1e-12)
        assert rouge_l(x, x) == 1.0

    def test_disjoint(self):
        assert rouge_l([A, B], [C, D]) == 0.0

    def test_rouge_hand_case(self):
        assert rouge_l([A, B, C], [A, C]) == pytest.approx(0.8, abs=1e-15)

    def test_bleu_brevity_penalty(self):
        # unigram 2/2, bigram 1/1, higher orders absent; penalty exp(1 - 4/2)
        assert bleu4_lite([A, B], [A, B, C, D]) == pytest.approx(math.exp(-1), abs=1e-15)

    def test_bleu_smoothing_keeps_score_positive(self):
        assert 0 < bleu4_lite([A, B, C, D], [D, C, B, A]) < 1

    def test_empty_hypothesis(self):
        assert bleu4_lite([], [A]) == 0.0
        assert rouge_l([], [A]) == 0.0

    def test_empty_reference(self):
        with pytest.raises(ValueError):
            bleu4_lite([A], [])
        with pytest.raises(ValueError):
            rouge_l([A], [9], eos=9)

    @given(st.lists(st.integers(0, 3), max_size=8), st.lists(st.integers(0, 3), max_size=8))
    def test_lcs_symmetric_and_bounded(self, a, b):
        n = lcs_length(a, b)
        assert n == lcs_length(b, a) <= min(len(a), len(b))


class TestEntities:
    @pytest.fixture
    def ev(self):
        return entity_vocab(4, 1)

    def test_precision_subset(self, ev):
        assert precision_source(ev, ev.encode("E1 E2"), ev.encode("E1 E2 E3")) == 1.0

    def test_precision_disjoint(self, ev):
        assert precision_source(ev, ev.encode("E4"), ev.encode("E1 E2")) == 0.0

    def test_precision_without_entities(self, ev):
        assert precision_source(ev, ev.encode("W1"), ev.encode("E1")) == 1.0

    def test_recall_half(self, ev):
        assert recall_target(ev, ev.encode("E1"), ev.encode("E1 E2")) == 0.5

    def test_recall_empty_target(self, ev):
        assert recall_target(ev, ev.encode("E1"), ev.encode("W1")) == 1.0


class TestNstd:
    def test_equal(self):
        assert nstd_z([0.3, 0.3, 0.3]) == 0.0

    def test_two_values(self):
        assert nstd_z([1.0, 3.0]) == 0.5

    def test_singleton(self):
        assert nstd_z([0.7]) == 0.0

    def test_zero_mean(self):
        with pytest.raises(ZeroDivisionError):
            nstd_z([0.0, 0.0])

    @given(st.lists(st.floats(1e-3, 10), min_size=1, max_size=10), st.sampled_from([0.125, 0.5, 2.0, 1024.0]))
    def test_scale_invariant(self, z, k):
        assert nstd_z(np.array(z) * k) == pytest.approx(nstd_z(z), rel=1e-12, abs=1e-15)


class TestZipf:
    def test_single_token(self):
        assert zipf_table([[A, A], [A]]) == [(A, 3, 1)]

    def test_two_ranks(self):
        assert zipf_table([[B, A, A, A]]) == [(A, 3, 1), (B, 1, 2)]

    def test_tie_follows_vocab_order(self):
        ev = entity_vocab(2, 1)
        e2, e1 = ev.id("E2"), ev.id("E1")
        rows = zipf_table([[e2, e1, ev.eos_id]], vocab=ev)
        assert [r[0] for r in rows] == sorted([e1, e2], key=ev.order)
        assert [r[2] for r in rows] == [1, 2]

    def test_terminator_excluded(self):
        assert zipf_table([[A, 9]], eos=9) == [(A, 1, 1)]
