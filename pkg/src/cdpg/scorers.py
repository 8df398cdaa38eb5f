"""Binary constraint scorers b(x, c) and scalar features phi(x, c).

All functions take token-id sequences (``Context`` objects are accepted for
``c``); a trailing terminator on ``x`` is ignored.  Scorer objects also
provide ``batch(c, tokens, nlen)`` over the padded arrays used by the
policies, which is what the EBM uses when tabulating a whole space.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import grammar
from .seq import Context, Vocab

DEFAULT_MIN_ENTITIES = 4
DEFAULT_STYLE_CAP = 8


def _items(c) -> tuple[int, ...]:
    return c.items if isinstance(c, Context) else tuple(c)


def _content(vocab: Vocab, x) -> tuple[int, ...]:
    return tuple(i for i in x if i != vocab.eos_id)


def entities(vocab: Vocab, seq) -> set[int]:
    ents = vocab.entity_ids
    return {i for i in seq if i in ents}


def digitize_score(vocab: Vocab, c, x) -> int:
    """1 iff every numeral token of ``c`` has its digit somewhere in ``x``."""
    pairs = vocab.numeral_id_pairs
    xs = set(_content(vocab, x))
    return int(all(pairs[n] in xs for n in _items(c) if n in pairs))


def entity_consistency_score(vocab: Vocab, c, x, k: int = DEFAULT_MIN_ENTITIES) -> int:
    ex = entities(vocab, _content(vocab, x))
    return int(len(ex) >= k and ex <= entities(vocab, _items(c)))


def concat_names(vocab: Vocab, c, x) -> list[str]:
    return vocab.decode(_items(c) + _content(vocab, x))


def grammar_compilable_score(vocab: Vocab, c, x, grammar_id: str = "toy-infix") -> int:
    if grammar_id not in grammar.GRAMMARS:
        raise ValueError(f"unknown grammar {grammar_id!r}")
    return int(grammar.parses(concat_names(vocab, c, x)))


def lint_violation_count(vocab: Vocab, c, x, style_cap: int = DEFAULT_STYLE_CAP) -> int:
    """Rule hits: adjacent repeats and ``; ;`` over ``[c, x]``, plus one per token of ``x`` past the cap."""
    body = _content(vocab, x)
    full = concat_names(vocab, c, body)
    hits = max(0, len(body) - style_cap)
    for a, b in zip(full, full[1:]):
        hits += a == b
        hits += a == ";" and b == ";"
    return hits


def lint_clean_score(vocab: Vocab, c, x, style_cap: int = DEFAULT_STYLE_CAP) -> int:
    return int(lint_violation_count(vocab, c, x, style_cap) == 0)


def _mask(tokens, nlen):
    return np.arange(tokens.shape[1])[None, :] < nlen[:, None]


class Scorer:
    kind = ""

    def __call__(self, c, x) -> int:
        raise NotImplementedError

    def batch(self, c, tokens: np.ndarray, nlen: np.ndarray) -> np.ndarray:
        eos = self.vocab.eos_id
        return np.array(
            [self(c, tuple(int(t) for t in tokens[b, : nlen[b]]) + (eos,)) for b in range(len(nlen))],
            dtype=np.float64,
        )


@dataclass
class DigitizeScorer(Scorer):
    vocab: Vocab
    kind = "digitize"

    def __call__(self, c, x):
        return digitize_score(self.vocab, c, x)

    def batch(self, c, tokens, nlen):
        pairs = self.vocab.numeral_id_pairs
        live = _mask(tokens, nlen)
        ok = np.ones(len(nlen), dtype=bool)
        for d in {pairs[n] for n in _items(c) if n in pairs}:
            ok &= ((tokens == d) & live).any(axis=1)
        return ok.astype(np.float64)


@dataclass
class EntityConsistencyScorer(Scorer):
    vocab: Vocab
    k: int = DEFAULT_MIN_ENTITIES
    kind = "entity"

    def __call__(self, c, x):
        return entity_consistency_score(self.vocab, c, x, self.k)

    def batch(self, c, tokens, nlen):
        live = _mask(tokens, nlen)
        allowed = entities(self.vocab, _items(c))
        n_in = np.zeros(len(nlen), dtype=np.int64)
        bad = np.zeros(len(nlen), dtype=bool)
        for e in self.vocab.entity_ids:
            present = ((tokens == e) & live).any(axis=1)
            if e in allowed:
                n_in += present
            else:
                bad |= present
        return ((n_in >= self.k) & ~bad).astype(np.float64)


@dataclass
class GrammarCompilableScorer(Scorer):
    vocab: Vocab
    grammar_id: str = "toy-infix"
    kind = "grammar"

    def __call__(self, c, x):
        return grammar_compilable_score(self.vocab, c, x, self.grammar_id)


@dataclass
class LintCleanScorer(Scorer):
    vocab: Vocab
    style_cap: int = DEFAULT_STYLE_CAP
    kind = "lint"

    def __call__(self, c, x):
        return lint_clean_score(self.vocab, c, x, self.style_cap)

    def count(self, c, x) -> int:
        return lint_violation_count(self.vocab, c, x, self.style_cap)


@dataclass
class ConstantScorer(Scorer):
    """b(x, c) = value everywhere; used to build trivial EBMs."""

    vocab: Vocab
    value: int = 1
    kind = "constant"

    def __call__(self, c, x):
        return self.value

    def batch(self, c, tokens, nlen):
        return np.full(len(nlen), float(self.value))


@dataclass
class Feature:
    """phi(x, c): entity occurrences (``EntityCount``) or one token's count (``TokenCount``)."""

    vocab: Vocab
    kind: str
    token: str | None = None
    ids: frozenset = field(init=False)

    def __post_init__(self):
        if self.kind == "EntityCount":
            self.ids = self.vocab.entity_ids
        elif self.kind == "TokenCount":
            if self.token is None:
                raise ValueError("TokenCount needs a token")
            self.ids = frozenset({self.vocab.id(self.token)})
        else:
            raise ValueError(f"unknown feature kind {self.kind!r}")

    def __call__(self, c, x) -> float:
        return float(sum(1 for i in _content(self.vocab, x) if i in self.ids))

    def batch(self, c, tokens, nlen):
        live = _mask(tokens, nlen)
        hit = np.isin(tokens, list(self.ids)) & live
        return hit.sum(axis=1).astype(np.float64)


def feature_value(feature: Feature, c, x) -> float:
    return feature(c, x)


def make_scorer(kind: str, vocab: Vocab, **kw) -> Scorer:
    kinds = {
        "digitize": DigitizeScorer,
        "entity": EntityConsistencyScorer,
        "grammar": GrammarCompilableScorer,
        "lint": LintCleanScorer,
        "constant": ConstantScorer,
    }
    if kind not in kinds:
        raise ValueError(f"unknown scorer kind {kind!r}")
    return kinds[kind](vocab, **kw)


def names(vocab: Vocab, seq: Sequence[int]) -> str:
    return " ".join(vocab.decode(seq))
