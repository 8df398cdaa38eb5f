import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cdpg.scorers import (
    ConstantScorer,
    DigitizeScorer,
    EntityConsistencyScorer,
    Feature,
    GrammarCompilableScorer,
    LintCleanScorer,
    digitize_score,
    entity_consistency_score,
    grammar_compilable_score,
    lint_clean_score,
    lint_violation_count,
    make_scorer,
)
from cdpg.seq import SequenceSpace, Vocab
from cdpg.tasks import digitize_vocab, entity_vocab, grammar_vocab


@pytest.fixture
def dv():
    return digitize_vocab(3, 2)


@pytest.fixture
def ev():
    return entity_vocab(6, 2)


@pytest.fixture
def gv():
    return grammar_vocab()


def enc(v, text):
    return v.encode(text)


class TestDigitize:
    def test_numeral_rendered_as_digit(self, dv):
        assert digitize_score(dv, enc(dv, "N2 W1"), enc(dv, "D2 W2 <eos>")) == 1

    def test_vacuous(self, dv):
        assert digitize_score(dv, enc(dv, "W1 W2"), enc(dv, "<eos>")) == 1

    def test_failed_conjunct(self, dv):
        assert digitize_score(dv, enc(dv, "N2 N3"), enc(dv, "D2 <eos>")) == 0

    def test_numeral_copied_is_not_enough(self, dv):
        assert digitize_score(dv, enc(dv, "N1"), enc(dv, "N1 <eos>")) == 0


class TestEntity:
    def test_four_in_source(self, ev):
        c = enc(ev, "E1 E2 E3 E4 E5")
        assert entity_consistency_score(ev, c, enc(ev, "E1 E2 E3 E4 <eos>")) == 1

    def test_empty(self, ev):
        assert entity_consistency_score(ev, enc(ev, "E1 E2 E3 E4"), enc(ev, "<eos>")) == 0

    def test_hallucinated(self, ev):
        c = enc(ev, "E1 E2 E3 E4")
        assert entity_consistency_score(ev, c, enc(ev, "E1 E2 E3 E4 E5 <eos>")) == 0


class TestGrammar:
    def test_complete_statement(self, gv):
        assert grammar_compilable_score(gv, enc(gv, "ID ="), enc(gv, "NUM ; <eos>")) == 1

    def test_missing_term(self, gv):
        assert grammar_compilable_score(gv, enc(gv, "ID ="), enc(gv, "+ ; <eos>")) == 0

    def test_empty_continuation(self, gv):
        assert grammar_compilable_score(gv, enc(gv, "ID ="), enc(gv, "<eos>")) == 0

    def test_unknown_grammar(self, gv):
        with pytest.raises(ValueError):
            grammar_compilable_score(gv, enc(gv, "ID ="), enc(gv, "<eos>"), "python3")


class TestLint:
    def test_clean(self, gv):
        assert lint_violation_count(gv, enc(gv, "ID ="), enc(gv, "NUM ; <eos>")) == 0
        assert lint_clean_score(gv, enc(gv, "ID ="), enc(gv, "NUM ; <eos>")) == 1

    def test_repeat(self, gv):
        x = enc(gv, "ID ID = NUM ; <eos>")
        assert lint_violation_count(gv, enc(gv, "NUM ;"), x) >= 1
        assert lint_clean_score(gv, enc(gv, "NUM ;"), x) == 0

    def test_cap_is_inclusive(self, gv):
        x = enc(gv, "ID = NUM + ID * NUM ;")
        assert len(x) == 8
        assert lint_violation_count(gv, enc(gv, "("), x, style_cap=8) == 0
        assert lint_violation_count(gv, enc(gv, "("), x, style_cap=7) == 1

    def test_repeat_across_boundary(self, gv):
        assert lint_violation_count(gv, enc(gv, "ID ="), enc(gv, "= NUM ;")) == 1

    @given(st.lists(st.sampled_from(["ID", "NUM", "+", "*", "(", ")", "=", ";"]), max_size=10), st.sampled_from(["ID", "NUM", ";"]))
    def test_appending_never_removes_hits(self, toks, extra):
        gv = grammar_vocab()
        c = enc(gv, "ID =")
        x = enc(gv, toks)
        assert lint_violation_count(gv, c, x + (gv.id(extra),)) >= lint_violation_count(gv, c, x)


class TestFeature:
    def test_entity_count_with_multiplicity(self, ev):
        assert Feature(ev, "EntityCount")(None, enc(ev, "E1 E1 E2 <eos>")) == 3

    def test_empty(self, ev):
        assert Feature(ev, "EntityCount")(None, enc(ev, "<eos>")) == 0

    def test_token_count(self):
        v = Vocab(["A", "B", "<eos>"])
        assert Feature(v, "TokenCount", "A")(None, v.encode("A B A <eos>")) == 2

    def test_bad_kind(self, ev):
        with pytest.raises(ValueError):
            Feature(ev, "Length")
        with pytest.raises(ValueError):
            Feature(ev, "TokenCount")


class TestBatch:
    @pytest.mark.parametrize("which", ["digitize", "entity", "grammar", "lint", "feature", "constant"])
    def test_batch_equals_scalar(self, which):
        rng = np.random.default_rng(3)
        if which == "digitize":
            v = digitize_vocab(3, 1)
            s, c = DigitizeScorer(v), enc(v, "N1 N3 W1")
        elif which in ("entity", "feature"):
            v = entity_vocab(5, 1)
            s = EntityConsistencyScorer(v, k=2) if which == "entity" else Feature(v, "EntityCount")
            c = enc(v, "E1 E2 E3")
        elif which == "constant":
            v = digitize_vocab(1, 1)
            s, c = ConstantScorer(v, 0), enc(v, "N1")
        else:
            v = grammar_vocab()
            s = GrammarCompilableScorer(v) if which == "grammar" else LintCleanScorer(v, 3)
            c = enc(v, "ID =")
        space = SequenceSpace(v, 5 if len(v) < 8 else 4)
        tokens, nlen = space.all_arrays()
        if len(nlen) > 3000:
            pick = rng.choice(len(nlen), 3000, replace=False)
            tokens, nlen = tokens[pick], nlen[pick]
        seqs = space.from_arrays(tokens, nlen)
        np.testing.assert_array_equal(s.batch(c, tokens, nlen), [s(c, x) for x in seqs])

    def test_pure(self, gv):
        s = GrammarCompilableScorer(gv)
        c, x = enc(gv, "ID ="), enc(gv, "NUM ; <eos>")
        assert {s(c, x) for _ in range(5)} == {1}

    def test_make_scorer(self, gv):
        assert isinstance(make_scorer("lint", gv, style_cap=4), LintCleanScorer)
        with pytest.raises(ValueError):
            make_scorer("toxicity", gv)
