"""Pure numpy implementation of the policy kernels.

Same contract and summation order as the compiled ``_kernels`` module, vectorised
over the batch and looping over sequence positions only.
"""

import numpy as np

BIGRAM = 0
PREFIX = 1


def _prefix_offsets(K, max_len):
    offs = np.zeros(max(max_len, 1), dtype=np.int64)
    acc, p = 0, 1
    for t in range(max_len):
        offs[t] = acc
        acc += p
        p *= K
    return offs


def _slots(family, bases, t, prev, code, offsets):
    if family == BIGRAM:
        return bases + prev
    return bases + offsets[t] + code


def _softmax_rows(rows):
    m = rows.max(axis=1)
    e = np.exp(rows - m[:, None])
    cum = np.cumsum(e, axis=1)
    return m, e, cum


def sample(logits, bases, family, K, max_len, min_len, uniforms):
    B = bases.shape[0]
    tokens = np.full((B, max_len), K, dtype=np.int32)
    nlen = np.full(B, max_len - 1, dtype=np.int32)
    logp = np.zeros(B, dtype=np.float64)
    prev = np.zeros(B, dtype=np.int64)
    code = np.zeros(B, dtype=np.int64)
    alive = np.ones(B, dtype=bool)
    offsets = _prefix_offsets(K, max_len)
    for t in range(max_len - 1):
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        ncol = K if t < min_len else K + 1
        slots = _slots(family, bases[idx], t, prev[idx], code[idx], offsets)
        rows = logits[slots, :ncol]
        m, _, cum = _softmax_rows(rows)
        s = cum[:, -1]
        target = uniforms[idx, t] * s
        chosen = np.minimum((cum <= target[:, None]).sum(axis=1), ncol - 1)
        logp[idx] += rows[np.arange(idx.size), chosen] - m - np.log(s)
        stop = chosen == K
        nlen[idx[stop]] = t
        alive[idx[stop]] = False
        go = idx[~stop]
        ch = chosen[~stop]
        tokens[go, t] = ch
        prev[go] = ch + 1
        code[go] = code[go] * K + ch
    return tokens, nlen, logp


def _walk(logits, bases, family, K, max_len, min_len, tokens, nlen):
    """Yield ``(t, idx, slots, tok, ncol)`` for every scored decision."""
    B = bases.shape[0]
    prev = np.zeros(B, dtype=np.int64)
    code = np.zeros(B, dtype=np.int64)
    offsets = _prefix_offsets(K, max_len)
    for t in range(max_len - 1):
        idx = np.flatnonzero(nlen >= t)
        if idx.size == 0:
            break
        tok = np.where(nlen[idx] > t, tokens[idx, t], K).astype(np.int64)
        ncol = K if t < min_len else K + 1
        slots = _slots(family, bases[idx], t, prev[idx], code[idx], offsets)
        yield t, idx, slots, tok, ncol
        prev[idx] = tok + 1
        code[idx] = code[idx] * K + tok


def logprob(logits, bases, family, K, max_len, min_len, tokens, nlen):
    out = np.zeros(bases.shape[0], dtype=np.float64)
    for _, idx, slots, tok, ncol in _walk(logits, bases, family, K, max_len, min_len, tokens, nlen):
        rows = logits[slots, :ncol]
        m, _, cum = _softmax_rows(rows)
        out[idx] += rows[np.arange(idx.size), tok] - m - np.log(cum[:, -1])
    return out


def accumulate_grad(logits, bases, family, K, max_len, min_len, tokens, nlen, weights, out):
    for _, idx, slots, tok, ncol in _walk(logits, bases, family, K, max_len, min_len, tokens, nlen):
        w = weights[idx]
        keep = w != 0.0
        if not keep.any():
            continue
        slots, tok, w = slots[keep], tok[keep], w[keep]
        rows = logits[slots, :ncol]
        _, e, cum = _softmax_rows(rows)
        probs = e / cum[:, -1:]
        np.add.at(out, (slots[:, None], np.arange(ncol)[None, :]), -w[:, None] * probs)
        np.add.at(out, (slots, tok), w)
