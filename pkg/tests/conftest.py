from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from cdpg.config import load_config
from cdpg.ebm import PointwiseEBM
from cdpg.scorers import Scorer
from cdpg.seq import BigramPolicy, Context, ContextFeaturizer, PrefixTreePolicy, SequenceSpace, Vocab

FIXTURES = Path(__file__).parent / "fixtures"

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@dataclass
class ContainsScorer(Scorer):
    """b(x, c) = 1 iff ``token`` occurs in x."""

    vocab: Vocab
    token: str = "A"
    kind = "contains"

    def __call__(self, c, x):
        return int(self.vocab.id(self.token) in x[:-1])


def fixture_config(name):
    return load_config(FIXTURES / f"{name}.ini")


@pytest.fixture
def ab_vocab():
    return Vocab(["A", "B", "<eos>"])


@pytest.fixture
def ctx():
    return Context((0,), 0)


def uniform_policy(vocab, max_len, min_len=0, family="bigram", n_contexts=1):
    space = SequenceSpace(vocab, max_len, min_len)
    contexts = [Context((0,), i) for i in range(n_contexts)]
    feat = ContextFeaturizer.build("by-id", vocab, contexts)
    cls = BigramPolicy if family == "bigram" else PrefixTreePolicy
    return cls(space, feat), contexts


def random_policy(vocab, max_len, family, rng, n_contexts=2, min_len=0, scale=1.0):
    pol, contexts = uniform_policy(vocab, max_len, min_len, family, n_contexts)
    pol.apply_update(scale * rng.normal(size=pol.params.size))
    return pol, contexts


@pytest.fixture
def contains_a(ab_vocab):
    """Four equiprobable length-2 strings over {A, B}; b = "contains A" (Z = 3/4)."""
    pol, (c,) = uniform_policy(ab_vocab, 3, min_len=2, family="prefix-tree")
    ebm = PointwiseEBM(pol, ContainsScorer(ab_vocab))
    return ebm, pol, c


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance summary: tests call ``criterion(n, label, ok, detail)``; one line per criterion is
# printed at the end of the run (PASS only when every recorded part passed)
_ACCEPTANCE: dict[int, list[tuple[str, bool, str]]] = {}


@pytest.fixture
def criterion():
    def record(number, label, ok, detail):
        ok = bool(ok)
        _ACCEPTANCE.setdefault(number, []).append((label, ok, detail))
        print(f"criterion {number} [{label}]: {'PASS' if ok else 'FAIL'} ({detail})")
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        parts = _ACCEPTANCE[n]
        verdict = "PASS" if all(ok for _, ok, _ in parts) else "FAIL"
        detail = "; ".join(f"{label} {'ok' if ok else 'FAILED'}: {d}" for label, ok, d in parts)
        terminalreporter.write_line(f"criterion {n:2d}: {verdict} | {detail}")
