"""Sample-level text metrics, partition-function dispersion and Zipf tables."""

from __future__ import annotations

import math
from collections import Counter
from typing import Iterable, Sequence

import numpy as np

from .scorers import entities
from .seq import Vocab


def _strip(x: Sequence[int], eos: int | None) -> list[int]:
    return [i for i in x if i != eos] if eos is not None else list(x)


def distinct2(x: Sequence[int], eos: int | None = None) -> float:
    """Unique adjacent bigrams / bigrams; 1 when there are fewer than two tokens."""
    toks = _strip(x, eos)
    grams = list(zip(toks, toks[1:]))
    if not grams:
        return 1.0
    return len(set(grams)) / len(grams)


def _ngrams(toks, n):
    return Counter(tuple(toks[i : i + n]) for i in range(len(toks) - n + 1))


def bleu4_lite(hypothesis: Sequence[int], reference: Sequence[int], eos: int | None = None) -> float:
    """Sentence BLEU-4 with brevity penalty and add-one smoothing of zero matches.

    Orders longer than the hypothesis are left out of the geometric mean.
    """
    hyp, ref = _strip(hypothesis, eos), _strip(reference, eos)
    if not ref:
        raise ValueError("empty reference")
    if not hyp:
        return 0.0
    logs = []
    for n in range(1, 5):
        h = _ngrams(hyp, n)
        total = sum(h.values())
        if total == 0:
            continue
        r = _ngrams(ref, n)
        match = sum(min(cnt, r[g]) for g, cnt in h.items())
        logs.append(math.log(match / total) if match else math.log(1.0 / (total + 1)))
    bp = 1.0 if len(hyp) >= len(ref) else math.exp(1.0 - len(ref) / len(hyp))
    return bp * math.exp(sum(logs) / len(logs))


def lcs_length(a: Sequence, b: Sequence) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge_l(hypothesis: Sequence[int], reference: Sequence[int], eos: int | None = None) -> float:
    """F1 of longest-common-subsequence precision and recall."""
    hyp, ref = _strip(hypothesis, eos), _strip(reference, eos)
    if not ref:
        raise ValueError("empty reference")
    lcs = lcs_length(hyp, ref)
    if lcs == 0:
        return 0.0
    p, r = lcs / len(hyp), lcs / len(ref)
    return 2 * p * r / (p + r)


def precision_source(vocab: Vocab, x, c) -> float:
    """Share of entities in ``x`` that also occur in the source; 1 when ``x`` has none."""
    ex = entities(vocab, x)
    if not ex:
        return 1.0
    items = c.items if hasattr(c, "items") else c
    return len(ex & entities(vocab, items)) / len(ex)


def recall_target(vocab: Vocab, x, t) -> float:
    """Share of the target's entities recovered by ``x``; 1 when the target has none."""
    et = entities(vocab, t)
    if not et:
        return 1.0
    return len(entities(vocab, x) & et) / len(et)


def nstd_z(z_values: Iterable[float]) -> float:
    """Population standard deviation of the partition functions over their mean."""
    z = np.asarray(list(z_values), dtype=np.float64)
    mean = z.mean()
    if mean == 0:
        raise ZeroDivisionError("mean partition function is zero")
    return float(np.sqrt(np.mean((z - mean) ** 2)) / mean)


def zipf_table(samples: Iterable[Sequence[int]], vocab: Vocab | None = None, eos: int | None = None):
    """``(token, frequency, rank)`` rows by descending frequency.

    Ties are broken by position in the vocabulary (or by token id without one).
    """
    if vocab is not None and eos is None:
        eos = vocab.eos_id
    counts = Counter(i for x in samples for i in _strip(x, eos))
    order = vocab.order if vocab is not None else (lambda i: i)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], order(kv[0])))
    return [(tok, freq, rank) for rank, (tok, freq) in enumerate(ranked, start=1)]
