import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cdpg.grammar import TERMINALS, ll1_parses, parses


class TestRecogniser:
    @pytest.mark.parametrize(
        "text, ok",
        [
            ("ID = NUM ;", True),
            ("ID = + ;", False),
            ("ID =", False),
            ("", False),
            ("ID = ( ID + NUM ) * ID ;", True),
            ("ID = NUM ; ID = ID ;", True),
            ("ID = NUM", False),
            ("ID = ( NUM ;", False),
            ("ID = NUM ) ;", False),
            ("NUM = ID ;", False),
            ("ID = NUM + ;", False),
            ("ID = NUM ; ;", False),
        ],
    )
    def test_hand_traced(self, text, ok):
        toks = text.split()
        assert parses(toks) is ok
        assert ll1_parses(toks) is ok

    def test_agrees_with_ll1_on_random_strings(self):
        """Uniform random strings plus single-token mutations of valid programs."""
        rng = np.random.default_rng(0)
        terms = list(TERMINALS)
        seeds = [s.split() for s in ("ID = NUM ;", "ID = ( ID + NUM ) * ID ;", "ID = ID ; ID = NUM * NUM ;")]
        accepted = 0
        for i in range(10_000):
            if i % 2:
                toks = [terms[j] for j in rng.integers(0, len(terms), size=rng.integers(0, 12))]
            else:
                toks = list(seeds[rng.integers(len(seeds))])
                if rng.random() < 0.7:
                    pos = rng.integers(len(toks))
                    op = rng.integers(3)
                    if op == 0:
                        toks[pos] = terms[rng.integers(len(terms))]
                    elif op == 1:
                        del toks[pos]
                    else:
                        toks.insert(pos, terms[rng.integers(len(terms))])
            a = parses(toks)
            assert a == ll1_parses(toks), toks
            accepted += a
        assert 0 < accepted < 10_000

    @given(st.lists(st.sampled_from(TERMINALS), max_size=16))
    def test_agrees_with_ll1(self, toks):
        assert parses(toks) == ll1_parses(toks)

    @given(st.recursive(st.sampled_from([["NUM"], ["ID"]]), lambda inner: st.one_of(
        st.tuples(inner, st.sampled_from(["+", "*"]), inner).map(lambda t: t[0] + [t[1]] + t[2]),
        inner.map(lambda e: ["("] + e + [")"]),
    ), max_leaves=8))
    def test_generated_statements_parse(self, expr):
        assert parses(["ID", "="] + expr + [";"])
