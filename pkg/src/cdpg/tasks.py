"""Synthetic tasks: contexts, reference outputs and a fitted base policy.

Each builder draws contexts from a seeded generator, writes a corpus of
"pretraining" outputs that mostly violate the task's constraint and fits the
base policy ``a`` to it by maximum likelihood.

* ``digitize``         contexts contain numeral tokens ``N*``; the constraint
                       asks for the matching digit tokens ``D*`` in the output,
                       which the corpus almost never uses.
* ``entity-summ``      contexts carry 4+ entity tokens ``E*``; outputs must name
                       at least ``min_entities`` of them and nothing else.
* ``grammar-compile``  contexts are statement prefixes such as ``ID =``; the
                       concatenation must parse under the toy grammar.
* ``lint-style``       same contexts; the concatenation must be lint-clean.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .config import ExperimentConfig
from .ebm import ConditionalEBM, ExponentialEBM, PointwiseEBM, exact_Z
from .errors import ConfigError, InfeasibleTaskError
from .scorers import Feature, Scorer, make_scorer
from .seq import (
    BigramPolicy,
    Context,
    ContextFeaturizer,
    PrefixTreePolicy,
    SequenceSpace,
    SoftmaxPolicy,
    Vocab,
)

log = logging.getLogger(__name__)

GRAMMAR_TOKENS = ("ID", "NUM", "+", "*", "(", ")", "=", ";")


@dataclass
class Task:
    name: str
    vocab: Vocab
    space: SequenceSpace
    featurizer: ContextFeaturizer
    base: SoftmaxPolicy
    ebm: ConditionalEBM
    scorer: Scorer | None
    feature: Feature | None
    train: list[Context]
    test: list[Context]
    references: dict[int, tuple[int, ...]] = field(default_factory=dict)

    @property
    def contexts(self) -> list[Context]:
        return self.train + self.test


def _unique_contexts(gen, n_total: int, rng, attempts: int = 200) -> list[tuple[int, ...]]:
    seen: dict[tuple[int, ...], None] = {}
    tries = 0
    while len(seen) < n_total:
        items = gen(rng)
        tries = tries + 1 if items in seen else 0
        if tries > attempts * n_total:
            raise ConfigError(f"generator only produced {len(seen)} distinct contexts, {n_total} requested")
        seen.setdefault(items, None)
    return list(seen)


def _finish(x: list[int], space: SequenceSpace, filler, rng) -> tuple[int, ...]:
    x = x[: space.max_len - 1]
    while len(x) < space.min_len:
        x.append(filler(rng))
    return tuple(x) + (space.vocab.eos_id,)


# digitize


def digitize_vocab(n_numerals: int, n_words: int) -> Vocab:
    nums = [f"N{i}" for i in range(1, n_numerals + 1)]
    digs = [f"D{i}" for i in range(1, n_numerals + 1)]
    words = [f"W{i}" for i in range(1, n_words + 1)]
    return Vocab(nums + digs + words + ["<eos>"], numeral_pairs=dict(zip(nums, digs)))


def _digitize(cfg: ExperimentConfig, rng):
    t = cfg.task
    vocab = digitize_vocab(t.n_numerals, t.n_words)
    nums = [vocab.id(f"N{i}") for i in range(1, t.n_numerals + 1)]
    words = [vocab.id(f"W{i}") for i in range(1, t.n_words + 1)]
    pairs = vocab.numeral_id_pairs

    def context(rng, vacuous=False):
        length = int(rng.integers(t.ctx_len_min, t.ctx_len_max + 1))
        k = 0 if vacuous else int(rng.integers(1, min(t.max_numerals, length, len(nums)) + 1))
        chosen = list(rng.choice(nums, size=k, replace=False)) if k else []
        items = chosen + [int(rng.choice(words)) for _ in range(length - k)]
        rng.shuffle(items)
        return tuple(int(i) for i in items)

    def reference(items):
        return list(items)

    def corpus_item(items, rng, space):
        out = []
        for tok in items:
            if rng.random() < t.drop_rate:
                continue
            out.append(pairs[tok] if tok in pairs and rng.random() < t.digit_rate else tok)
            if rng.random() < t.insert_rate:
                out.append(int(rng.choice(words)))
        return _finish(out, space, lambda r: int(r.choice(words)), rng)

    n_vac = t.vacuous_contexts
    return vocab, context, reference, corpus_item, n_vac


# entity-summ


def entity_vocab(n_entities: int, n_words: int) -> Vocab:
    ents = [f"E{i}" for i in range(1, n_entities + 1)]
    words = [f"W{i}" for i in range(1, n_words + 1)]
    return Vocab(ents + words + ["<eos>"], entity_subset=ents)


def _entity(cfg: ExperimentConfig, rng):
    t = cfg.task
    vocab = entity_vocab(t.n_entities, t.n_words)
    ents = sorted(vocab.entity_ids)
    words = [vocab.id(f"W{i}") for i in range(1, t.n_words + 1)]
    lo = min(4, len(ents))

    def context(rng, vacuous=False):
        k = int(rng.integers(lo, len(ents) + 1))
        length = max(k, int(rng.integers(t.ctx_len_min, t.ctx_len_max + 1)))
        items = list(rng.choice(ents, size=k, replace=False)) + [int(rng.choice(words)) for _ in range(length - k)]
        rng.shuffle(items)
        return tuple(int(i) for i in items)

    def reference(items):
        seen = [i for i in dict.fromkeys(items) if i in vocab.entity_ids]
        return seen[:3] + [words[0]]

    def corpus_item(items, rng, space):
        present = [i for i in dict.fromkeys(items) if i in vocab.entity_ids]
        absent = [e for e in ents if e not in present]
        j = int(rng.integers(1, min(3, len(present)) + 1))
        picked = [int(e) for e in rng.choice(present, size=j, replace=False)]
        picked = [int(rng.choice(absent)) if absent and rng.random() < t.hallucination_rate else e for e in picked]
        out = []
        for e in picked:
            out.append(e)
            if rng.random() < 0.5:
                out.append(int(rng.choice(words)))
        return _finish(out, space, lambda r: int(r.choice(words)), rng)

    return vocab, context, reference, corpus_item, 0


# grammar-compile / lint-style


def grammar_vocab() -> Vocab:
    return Vocab(list(GRAMMAR_TOKENS) + ["<eos>"])


def _complete(vocab: Vocab, state: tuple[bool, int], rng, budget: int) -> list[int]:
    """Random tokens that finish a statement from ``(expect_term, depth)``."""
    expect_term, depth = state
    out: list[int] = []
    while True:
        room = budget - len(out)
        if expect_term:
            if room > depth + 3 and rng.random() < 0.2:
                out.append(vocab.id("("))
                depth += 1
            else:
                out.append(vocab.id("NUM" if rng.random() < 0.5 else "ID"))
                expect_term = False
        elif room > depth + 2 and rng.random() < 0.35:
            out.append(vocab.id("+" if rng.random() < 0.5 else "*"))
            expect_term = True
        elif depth > 0:
            out.append(vocab.id(")"))
            depth -= 1
        else:
            out.append(vocab.id(";"))
            return out


def _state(names: list[str]) -> tuple[bool, int]:
    """Parser state after the last ``=`` of a statement prefix."""
    expect_term, depth = True, 0
    start = len(names) - names[::-1].index("=") if "=" in names else 0
    for tok in names[start:]:
        if tok == "(":
            depth += 1
        elif tok == ")":
            depth -= 1
        elif tok in ("NUM", "ID"):
            expect_term = False
        elif tok in ("+", "*"):
            expect_term = True
    return expect_term, depth


def _code(cfg: ExperimentConfig, rng, lint: bool):
    t = cfg.task
    vocab = grammar_vocab()
    all_ids = list(range(vocab.K))
    budget = max(cfg.space.max_len - 1, 1)

    def context(rng, vacuous=False):
        head = [vocab.id("ID"), vocab.id("=")]
        lead = head + _complete(vocab, (True, 0), rng, 4) if rng.random() < 0.5 else []
        body = _complete(vocab, (True, 0), rng, t.ctx_len_max + 4)[:-1]
        cut = int(rng.integers(0, min(len(body), t.ctx_len_max) + 1))
        items = tuple(lead + head + body[:cut])
        if lint and any(u == v for u, v in zip(items, items[1:])):
            return context(rng)  # a repeat inside the prompt cannot be repaired by x
        return items

    def reference(items):
        return _complete(vocab, _state(vocab.decode(items)), np.random.default_rng(list(items)), budget)

    def corpus_item(items, rng, space):
        out = _complete(vocab, _state(vocab.decode(items)), rng, budget)
        if lint:
            if rng.random() < t.repeat_rate and out:
                k = int(rng.integers(0, len(out)))
                out.insert(k, out[k])
        elif rng.random() > t.valid_rate:
            k = int(rng.integers(0, len(out)))
            move = rng.random()
            if move < 0.4:
                out[k] = int(rng.choice(all_ids))
            elif move < 0.7:
                del out[k]
            else:
                out.insert(k, int(rng.choice(all_ids)))
        return _finish(out, space, lambda r: int(r.choice(all_ids)), rng)

    return vocab, context, reference, corpus_item, 0


def _scorer(cfg: ExperimentConfig, vocab: Vocab) -> Scorer:
    e = cfg.ebm
    if e.scorer == "constant":
        return make_scorer("constant", vocab, value=e.constant)
    if e.scorer != "task":
        raise ConfigError(f"ebm.scorer must be 'task' or 'constant', got {e.scorer!r}")
    task = cfg.run.task
    if task == "digitize":
        return make_scorer("digitize", vocab)
    if task == "entity-summ":
        return make_scorer("entity", vocab, k=cfg.task.min_entities)
    if task == "grammar-compile":
        return make_scorer("grammar", vocab)
    return make_scorer("lint", vocab, style_cap=cfg.task.style_cap)


def build_task(cfg: ExperimentConfig, check_feasible: bool = True) -> Task:
    """Deterministically build the task described by ``cfg`` (a function of the config and seed)."""
    cfg.validate()
    rng = np.random.default_rng(np.random.SeedSequence([cfg.run.seed, 0x7A5C]))
    name = cfg.run.task
    if name == "digitize":
        vocab, gen, reference, corpus_item, n_vac = _digitize(cfg, rng)
    elif name == "entity-summ":
        vocab, gen, reference, corpus_item, n_vac = _entity(cfg, rng)
    else:
        vocab, gen, reference, corpus_item, n_vac = _code(cfg, rng, lint=name == "lint-style")
    space = SequenceSpace(vocab, cfg.space.max_len, cfg.space.min_len)

    n_train, n_test = cfg.n_train, cfg.n_test
    if n_vac > n_train:
        raise ConfigError("more vacuous contexts than training contexts")
    items = _unique_contexts(gen, n_train + n_test - n_vac, rng)
    if n_vac:
        vac = _unique_contexts(lambda r: gen(r, vacuous=True), n_vac, rng)
        items = vac + [i for i in items if i not in vac]
    contexts = [Context(it, i) for i, it in enumerate(items[: n_train + n_test])]
    train, test = contexts[:n_train], contexts[n_train:]

    featurizer = ContextFeaturizer.build(cfg.policy.featurizer, vocab, contexts)
    corpus = [(c, corpus_item(c.items, rng, space)) for c in contexts for _ in range(cfg.task.corpus_per_context)]
    policy_cls = PrefixTreePolicy if cfg.policy.family == "prefix-tree" else BigramPolicy
    base = policy_cls.fit(space, featurizer, corpus, cfg.task.smoothing)
    references = {c.id: _finish(list(reference(c.items)), space, lambda r: 0, rng) for c in contexts}

    scorer = feature = None
    if cfg.ebm.form == "pointwise":
        scorer = _scorer(cfg, vocab)
        ebm: ConditionalEBM = PointwiseEBM(base, scorer)
    else:
        feature = Feature(vocab, cfg.ebm.feature, cfg.ebm.feature_token or None)
        ebm = ExponentialEBM(base, feature, cfg.ebm.target)
        scorer = _scorer(cfg, vocab)

    task = Task(name, vocab, space, featurizer, base, ebm, scorer, feature, train, test, references)
    if check_feasible and cfg.ebm.form == "pointwise" and space.enumerable():
        bad = [c.id for c in contexts if exact_Z(ebm, c).z_hat == 0.0]
        if bad:
            raise InfeasibleTaskError(f"contexts {bad} admit no satisfying sequence")
    return task
