"""Vocabularies, bounded sequence spaces and tabular softmax policies.

Sequences are tuples of integer token ids.  Content tokens get ids
``0 .. K-1`` in vocabulary order and the terminator gets id ``K``, so the last
logit column of every policy table is the terminator.  A terminated sequence
ends with the terminator and contains it nowhere else.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping, Sequence as Seq

import numpy as np

from . import kernels
from .errors import EnumerationCapError, SequenceError, UnknownContextError

DEFAULT_ENUMERATION_CAP = 2_000_000
DEFAULT_PREFIX_TREE_CAP = 200_000
# logit assigned to zero-probability continuations by PrefixTreePolicy.from_targets
LOGIT_FLOOR = -60.0


class Vocab:
    """Token alphabet with a terminator and optional task annotations."""

    def __init__(
        self,
        tokens: Seq[str],
        eos: str = "<eos>",
        entity_subset: Iterable[str] = (),
        numeral_pairs: Mapping[str, str] | None = None,
    ):
        tokens = tuple(tokens)
        if len(set(tokens)) != len(tokens):
            raise ValueError("vocabulary tokens must be unique")
        if tokens.count(eos) != 1:
            raise ValueError(f"terminator {eos!r} must appear exactly once in the vocabulary")
        self.tokens = tokens
        self.eos = eos
        self.content = tuple(t for t in tokens if t != eos)
        self._ids = {t: i for i, t in enumerate(self.content)}
        self._ids[eos] = len(self.content)
        self._order = {t: i for i, t in enumerate(tokens)}
        self.entity_subset = frozenset(entity_subset)
        self.numeral_pairs = dict(numeral_pairs or {})
        unknown = (self.entity_subset | set(self.numeral_pairs) | set(self.numeral_pairs.values())) - set(tokens)
        if unknown:
            raise ValueError(f"annotations reference tokens outside the vocabulary: {sorted(unknown)}")

    def __len__(self):
        return len(self.tokens)

    def __eq__(self, other):
        return (
            isinstance(other, Vocab)
            and self.tokens == other.tokens
            and self.eos == other.eos
            and self.entity_subset == other.entity_subset
            and self.numeral_pairs == other.numeral_pairs
        )

    def __repr__(self):
        return f"Vocab({list(self.tokens)!r}, eos={self.eos!r})"

    @property
    def K(self) -> int:
        """Number of content (non-terminator) tokens."""
        return len(self.content)

    @property
    def eos_id(self) -> int:
        return len(self.content)

    def id(self, token: str) -> int:
        try:
            return self._ids[token]
        except KeyError:
            raise KeyError(f"token {token!r} not in vocabulary") from None

    def token(self, i: int) -> str:
        return self.eos if i == self.eos_id else self.content[i]

    def order(self, i: int) -> int:
        """Position of token id ``i`` in the user-supplied token list."""
        return self._order[self.token(i)]

    def encode(self, text: str | Seq[str]) -> tuple[int, ...]:
        parts = text.split() if isinstance(text, str) else list(text)
        return tuple(self.id(t) for t in parts)

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.token(int(i)) for i in ids]

    @cached_property
    def entity_ids(self) -> frozenset[int]:
        return frozenset(self.id(t) for t in self.entity_subset)

    @cached_property
    def numeral_id_pairs(self) -> dict[int, int]:
        return {self.id(k): self.id(v) for k, v in self.numeral_pairs.items()}

    def to_dict(self) -> dict:
        return {
            "tokens": list(self.tokens),
            "eos": self.eos,
            "entity_subset": sorted(self.entity_subset, key=self._order.__getitem__),
            "numeral_pairs": dict(self.numeral_pairs),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Vocab":
        return cls(d["tokens"], d["eos"], d.get("entity_subset", ()), d.get("numeral_pairs"))


@dataclass(frozen=True)
class Context:
    items: tuple[int, ...]
    id: int

    def __post_init__(self):
        if not self.items:
            raise ValueError("context must be nonempty")


def strip_eos(x: Seq[int], eos_id: int) -> tuple[int, ...]:
    x = tuple(x)
    return x[:-1] if x and x[-1] == eos_id else x


class SequenceSpace:
    """All terminated sequences with ``min_len <= #content tokens <= max_len - 1``.

    ``max_len`` counts the terminator; the terminator is forced at position
    ``max_len - 1`` and masked before position ``min_len``.
    """

    def __init__(self, vocab: Vocab, max_len: int, min_len: int = 0):
        if max_len < 1:
            raise ValueError("max_len must be positive")
        if not 0 <= min_len <= max_len - 1:
            raise ValueError("min_len must lie in [0, max_len - 1]")
        if vocab.K == 0 and min_len > 0:
            raise ValueError("min_len > 0 needs at least one content token")
        self.vocab = vocab
        self.max_len = max_len
        self.min_len = min_len

    def __repr__(self):
        return f"SequenceSpace(K={self.K}, max_len={self.max_len}, min_len={self.min_len})"

    @property
    def K(self) -> int:
        return self.vocab.K

    @cached_property
    def size(self) -> int:
        return sum(self.K**t for t in range(self.min_len, self.max_len))

    @cached_property
    def level_offsets(self) -> np.ndarray:
        """Index of the first sequence with ``t`` content tokens, for every ``t``."""
        offs = np.zeros(self.max_len + 1, dtype=np.int64)
        acc = 0
        for t in range(self.max_len):
            offs[t] = acc
            if t >= self.min_len:
                acc += self.K**t
        offs[self.max_len] = acc
        return offs

    @cached_property
    def n_prefixes(self) -> int:
        """Number of decision prefixes (content lengths ``0 .. max_len - 2``)."""
        return sum(self.K**t for t in range(self.max_len - 1))

    def enumerable(self, cap: int = DEFAULT_ENUMERATION_CAP) -> bool:
        return self.size <= cap

    def check(self, x: Seq[int]) -> tuple[int, ...]:
        x = tuple(int(i) for i in x)
        eos = self.vocab.eos_id
        if not x or x[-1] != eos or eos in x[:-1]:
            raise SequenceError(f"sequence {x} is not terminated")
        if len(x) > self.max_len:
            raise SequenceError(f"sequence of length {len(x)} exceeds max_len {self.max_len}")
        if len(x) - 1 < self.min_len:
            raise SequenceError(f"sequence shorter than min_len {self.min_len}")
        if any(i < 0 or i > eos for i in x):
            raise SequenceError(f"sequence {x} has ids outside the vocabulary")
        return x

    def to_arrays(self, seqs: Iterable[Seq[int]]) -> tuple[np.ndarray, np.ndarray]:
        seqs = [self.check(x) for x in seqs]
        tokens = np.full((len(seqs), self.max_len), self.K, dtype=np.int32)
        nlen = np.zeros(len(seqs), dtype=np.int32)
        for b, x in enumerate(seqs):
            tokens[b, : len(x) - 1] = x[:-1]
            nlen[b] = len(x) - 1
        return tokens, nlen

    def from_arrays(self, tokens: np.ndarray, nlen: np.ndarray) -> list[tuple[int, ...]]:
        eos = self.K
        return [tuple(int(i) for i in tokens[b, : nlen[b]]) + (eos,) for b in range(len(nlen))]

    def index_of(self, tokens: np.ndarray, nlen: np.ndarray) -> np.ndarray:
        """Canonical enumeration index (by length, then base-K code)."""
        code = np.zeros(len(nlen), dtype=np.int64)
        for t in range(self.max_len - 1):
            live = nlen > t
            code[live] = code[live] * self.K + tokens[live, t]
        return self.level_offsets[nlen] + code

    @cached_property
    def _all_arrays(self):
        blocks_tok, blocks_len = [], []
        K = self.K
        for t in range(self.min_len, self.max_len):
            n = K**t
            tok = np.full((n, self.max_len), K, dtype=np.int32)
            codes = np.arange(n, dtype=np.int64)
            for pos in range(t - 1, -1, -1):
                tok[:, pos] = codes % K
                codes //= K
            blocks_tok.append(tok)
            blocks_len.append(np.full(n, t, dtype=np.int32))
        tokens = np.concatenate(blocks_tok) if blocks_tok else np.zeros((0, self.max_len), np.int32)
        nlen = np.concatenate(blocks_len) if blocks_len else np.zeros(0, np.int32)
        tokens.setflags(write=False)
        nlen.setflags(write=False)
        return tokens, nlen

    def all_arrays(self, cap: int = DEFAULT_ENUMERATION_CAP) -> tuple[np.ndarray, np.ndarray]:
        """Token and length arrays for every sequence in canonical order."""
        if not self.enumerable(cap):
            raise EnumerationCapError(f"|X| = {self.size} exceeds the enumeration cap {cap}")
        return self._all_arrays

    def all_sequences(self, cap: int = DEFAULT_ENUMERATION_CAP) -> list[tuple[int, ...]]:
        return self.from_arrays(*self.all_arrays(cap))


class ContextFeaturizer:
    """Deterministic map from a context to a policy row.

    Modes: ``by-id`` (one row per context id), ``by-numeral-set`` (one row per
    set of numeral tokens in the context) and ``by-entity-set`` (one row per
    set of entity tokens).  Row order follows the sorted keys, so the table
    depends only on the set of contexts it was built from.
    """

    MODES = ("by-id", "by-numeral-set", "by-entity-set")

    def __init__(self, mode: str, vocab: Vocab, keys: Iterable):
        if mode not in self.MODES:
            raise ValueError(f"unknown featurizer mode {mode!r}")
        self.mode = mode
        self.vocab = vocab
        self.keys = sorted(set(keys))
        self._index = {k: i for i, k in enumerate(self.keys)}

    @classmethod
    def build(cls, mode: str, vocab: Vocab, contexts: Iterable[Context]) -> "ContextFeaturizer":
        f = cls(mode, vocab, ())
        return cls(mode, vocab, (f.key(c) for c in contexts))

    def key(self, c: Context):
        if self.mode == "by-id":
            return c.id
        wanted = self.vocab.numeral_id_pairs if self.mode == "by-numeral-set" else self.vocab.entity_ids
        return tuple(sorted({i for i in c.items if i in wanted}))

    def __len__(self):
        return len(self.keys)

    def row_for_key(self, key) -> int:
        try:
            return self._index[key]
        except KeyError:
            raise UnknownContextError(f"no featurizer row for key {key!r}") from None

    def __call__(self, c: Context) -> int:
        return self.row_for_key(self.key(c))

    def to_dict(self) -> dict:
        return {"mode": self.mode, "keys": [k if isinstance(k, int) else list(k) for k in self.keys]}

    @classmethod
    def from_dict(cls, d: Mapping, vocab: Vocab) -> "ContextFeaturizer":
        keys = [k if isinstance(k, int) else tuple(k) for k in d["keys"]]
        return cls(d["mode"], vocab, keys)


class SoftmaxPolicy:
    """Autoregressive policy whose next-token logits are looked up in a table.

    ``logits`` has shape ``(rows, slots_per_row, K + 1)``; the row comes from the
    featurizer and the slot from the decoding state.  Log-probabilities,
    sampling and gradients are exact.
    """

    family = ""
    kernel_family = -1

    def __init__(self, space: SequenceSpace, featurizer: ContextFeaturizer, logits: np.ndarray | None = None):
        self.space = space
        self.featurizer = featurizer
        shape = (len(featurizer), self.slots_per_row, space.K + 1)
        if logits is None:
            logits = np.zeros(shape)
        logits = np.ascontiguousarray(logits, dtype=np.float64).reshape(shape)
        if not np.all(np.isfinite(logits)):
            raise ValueError("policy parameters must be finite")
        self.logits = logits

    @property
    def slots_per_row(self) -> int:
        raise NotImplementedError

    @property
    def params(self) -> np.ndarray:
        """Flat view of the parameter vector."""
        return self.logits.reshape(-1)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.logits.shape

    @property
    def _table(self) -> np.ndarray:
        return self.logits.reshape(-1, self.space.K + 1)

    def copy(self) -> "SoftmaxPolicy":
        return type(self)(self.space, self.featurizer, self.logits.copy())

    def with_params(self, flat: np.ndarray) -> "SoftmaxPolicy":
        return type(self)(self.space, self.featurizer, np.array(flat, dtype=np.float64))

    def apply_update(self, delta: np.ndarray) -> None:
        """In-place ``params += delta``; the only mutating operation."""
        self.params[:] += np.asarray(delta).reshape(-1)

    def row(self, c: Context) -> int:
        return self.featurizer(c)

    def bases(self, contexts: Seq[Context] | Context, repeat: int = 1) -> np.ndarray:
        if isinstance(contexts, Context):
            contexts = [contexts]
        rows = np.array([self.row(c) for c in contexts], dtype=np.int64)
        return np.repeat(rows * self.slots_per_row, repeat)

    # kernel entry points over explicit arrays

    def _args(self):
        sp = self.space
        return self._table, self.kernel_family, sp.K, sp.max_len, sp.min_len

    def logprob_arrays(self, bases, tokens, nlen) -> np.ndarray:
        table, fam, K, L, m = self._args()
        return kernels.backend.logprob(table, bases, fam, K, L, m, tokens, nlen)

    def accumulate_grad(self, bases, tokens, nlen, weights, out: np.ndarray) -> np.ndarray:
        """``out += sum_b weights[b] * grad log pi(x_b)``; ``out`` is flat or table-shaped."""
        table, fam, K, L, m = self._args()
        out2d = out.reshape(-1, K + 1)
        kernels.backend.accumulate_grad(
            table, bases, fam, K, L, m, tokens, nlen, np.ascontiguousarray(weights, dtype=np.float64), out2d
        )
        return out

    def sample_arrays(self, bases, rng: np.random.Generator):
        table, fam, K, L, m = self._args()
        uniforms = rng.random((len(bases), max(L - 1, 0)))
        return kernels.backend.sample(table, bases, fam, K, L, m, uniforms)

    # per-sequence conveniences

    def logprob(self, c: Context, x: Seq[int]) -> float:
        tokens, nlen = self.space.to_arrays([x])
        return float(self.logprob_arrays(self.bases(c), tokens, nlen)[0])

    def grad_logprob(self, c: Context, x: Seq[int]) -> np.ndarray:
        tokens, nlen = self.space.to_arrays([x])
        out = np.zeros(self.params.size)
        return self.accumulate_grad(self.bases(c), tokens, nlen, np.ones(1), out)

    def sample(self, c: Context, rng: np.random.Generator) -> tuple[int, ...]:
        tokens, nlen, _ = self.sample_arrays(self.bases(c), rng)
        return self.space.from_arrays(tokens, nlen)[0]

    def sample_batch(self, c: Context, m: int, rng: np.random.Generator):
        """``m`` ancestral samples for one context: ``(tokens, nlen, logp)``."""
        return self.sample_arrays(self.bases(c, m), rng)

    # exact distribution

    def _level_logits(self, row: int, t: int) -> np.ndarray:
        """Logit rows for every length-``t`` prefix, in code order."""
        raise NotImplementedError

    def log_probs_over_space(self, c: Context, cap: int = DEFAULT_ENUMERATION_CAP) -> np.ndarray:
        """Exact log pi(x|c) for every x in canonical enumeration order."""
        sp = self.space
        if not sp.enumerable(cap):
            raise EnumerationCapError(f"|X| = {sp.size} exceeds the enumeration cap {cap}")
        K, row = sp.K, self.row(c)
        prefix_lp = np.zeros(1)
        out = []
        for t in range(sp.max_len):
            if t == sp.max_len - 1:
                if t >= sp.min_len:
                    out.append(prefix_lp)
                break
            rows = self._level_logits(row, t)
            cols = K if t < sp.min_len else K + 1
            rows = rows[:, :cols]
            mx = rows.max(axis=1, keepdims=True)
            lsm = rows - mx - np.log(np.exp(rows - mx).sum(axis=1, keepdims=True))
            if t >= sp.min_len:
                out.append(prefix_lp + lsm[:, K])
            prefix_lp = (prefix_lp[:, None] + lsm[:, :K]).reshape(-1)
        return np.concatenate(out) if out else np.zeros(0)


class BigramPolicy(SoftmaxPolicy):
    """Logits indexed by (context feature, previous token)."""

    family = "bigram"
    kernel_family = kernels.BIGRAM

    @property
    def slots_per_row(self) -> int:
        return self.space.K + 1

    def _level_logits(self, row, t):
        K = self.space.K
        if t == 0:
            return self.logits[row, :1]
        prev = np.tile(np.arange(K), K ** (t - 1)) + 1
        return self.logits[row, prev]

    @classmethod
    def fit(cls, space, featurizer, corpus, smoothing: float = 0.1) -> "BigramPolicy":
        """Maximum-likelihood fit with additive smoothing.

        ``corpus`` is an iterable of ``(context, sequence)`` pairs.
        """
        K = space.K
        counts = np.zeros((len(featurizer), K + 1, K + 1))
        for c, x in corpus:
            x = space.check(x)
            r, prev = featurizer(c), 0
            for t, tok in enumerate(x):
                if t == space.max_len - 1:
                    break
                counts[r, prev, tok] += 1
                prev = tok + 1
        return cls(space, featurizer, np.log(counts + smoothing))


class PrefixTreePolicy(SoftmaxPolicy):
    """Logits indexed by (context id, exact prefix); can represent any distribution on X."""

    family = "prefix-tree"
    kernel_family = kernels.PREFIX

    def __init__(self, space, featurizer, logits=None, cap: int = DEFAULT_PREFIX_TREE_CAP):
        if space.size > cap:
            raise EnumerationCapError(f"prefix-tree policy needs |X| <= {cap}, got {space.size}")
        if featurizer.mode != "by-id":
            raise ValueError("prefix-tree policies are indexed by context id")
        super().__init__(space, featurizer, logits)

    @property
    def slots_per_row(self) -> int:
        return self.space.n_prefixes

    def _level_logits(self, row, t):
        K = self.space.K
        start = sum(K**s for s in range(t))
        return self.logits[row, start : start + K**t]

    @classmethod
    def fit(cls, space, featurizer, corpus, smoothing: float = 0.1) -> "PrefixTreePolicy":
        """Per-context maximum-likelihood prefix counts with additive smoothing."""
        K = space.K
        counts = np.zeros((len(featurizer), space.n_prefixes, K + 1))
        for c, x in corpus:
            x = space.check(x)
            r, code, off, p = featurizer(c), 0, 0, 1
            for t, tok in enumerate(x):
                if t == space.max_len - 1:
                    break
                counts[r, off + code, tok] += 1
                code = code * K + tok
                off += p
                p *= K
        return cls(space, featurizer, np.log(counts + smoothing))

    @classmethod
    def from_targets(cls, space, featurizer, targets: Mapping[int, np.ndarray], base=None) -> "PrefixTreePolicy":
        """Policy whose conditional next-token distributions reproduce ``targets``.

        ``targets`` maps context id to a probability vector over X in canonical
        order.  Each prefix's logits are set to the log conditional
        probabilities (floored at ``LOGIT_FLOOR``); rows for contexts not in
        ``targets`` are copied from ``base`` or left uniform.
        """
        pol = base.copy() if base is not None else cls(space, featurizer)
        K, L, mn = space.K, space.max_len, space.min_len
        offs = space.level_offsets
        for cid, q in targets.items():
            q = np.asarray(q, dtype=np.float64)
            row = featurizer.row_for_key(cid)
            term = [q[offs[t] : offs[t] + K**t] if t >= mn else np.zeros(K**t) for t in range(L)]
            mass = term[L - 1].copy()
            levels = {L - 1: mass}
            for t in range(L - 2, -1, -1):
                mass = term[t] + mass.reshape(K**t, K).sum(axis=1)
                levels[t] = mass
            start = 0
            for t in range(L - 1):
                n = K**t
                m = levels[t]
                cond = np.zeros((n, K + 1))
                cond[:, :K] = levels[t + 1].reshape(n, K)
                cond[:, K] = term[t]
                with np.errstate(divide="ignore", invalid="ignore"):
                    cond = np.where(m[:, None] > 0, cond / m[:, None], 1.0 / (K + 1))
                    lg = np.maximum(np.log(cond), LOGIT_FLOOR)
                if t < mn:
                    lg[:, K] = 0.0
                pol.logits[row, start : start + n] = lg
                start += n
        return pol


def make_policy(family: str, space, featurizer, logits=None) -> SoftmaxPolicy:
    if family == "bigram":
        return BigramPolicy(space, featurizer, logits)
    if family == "prefix-tree":
        return PrefixTreePolicy(space, featurizer, logits)
    raise ValueError(f"unknown policy family {family!r}")


def enumerate_space(policy: SoftmaxPolicy, c: Context, cap: int = DEFAULT_ENUMERATION_CAP):
    """Every sequence of the policy's space with its probability under ``policy(.|c)``."""
    lp = policy.log_probs_over_space(c, cap)
    return list(zip(policy.space.all_sequences(cap), np.exp(lp).tolist()))
