# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops for tabular softmax sequence policies.

Token layout: content tokens are ``0 .. K-1`` and the terminator is ``K``.
``logits`` is a 2-D ``(n_slots, K + 1)`` table.  The slot used at step ``t``
is ``bases[b] + prev`` for the bigram family (``prev`` is 0 at the first step
and ``token + 1`` afterwards) and ``bases[b] + offset_t + code`` for the
prefix-tree family, where ``code`` is the base-K integer of the prefix.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log

cnp.import_array()

cdef enum:
    BIGRAM = 0
    PREFIX = 1


cdef inline Py_ssize_t _slot(int family, Py_ssize_t base, int t, long long prev,
                             long long code, int K) noexcept nogil:
    cdef long long off = 0
    cdef long long p = 1
    cdef int s
    if family == BIGRAM:
        return base + prev
    for s in range(t):
        off += p
        p *= K
    return base + off + code


cdef inline double _row_logz(const double[:, ::1] logits, Py_ssize_t slot, int ncol,
                             double* mx) noexcept nogil:
    cdef double m = logits[slot, 0]
    cdef double s = 0.0
    cdef int j
    for j in range(1, ncol):
        if logits[slot, j] > m:
            m = logits[slot, j]
    for j in range(ncol):
        s += exp(logits[slot, j] - m)
    mx[0] = m
    return s


def sample(const double[:, ::1] logits, const long long[::1] bases, int family,
           int K, int max_len, int min_len, const double[:, ::1] uniforms):
    """Ancestral sampling of ``len(bases)`` sequences.

    Returns ``(tokens, nlen, logp)``; ``tokens`` is padded with the terminator.
    """
    cdef Py_ssize_t B = bases.shape[0]
    tokens_arr = np.full((B, max_len), K, dtype=np.int32)
    nlen_arr = np.zeros(B, dtype=np.int32)
    logp_arr = np.zeros(B, dtype=np.float64)
    cdef int[:, ::1] tokens = tokens_arr
    cdef int[::1] nlen = nlen_arr
    cdef double[::1] logp = logp_arr
    cdef Py_ssize_t b, slot
    cdef int t, j, ncol, chosen, n
    cdef long long prev, code
    cdef double m, s, target, acc, lp
    with nogil:
        for b in range(B):
            prev = 0
            code = 0
            lp = 0.0
            n = max_len - 1
            for t in range(max_len - 1):
                slot = _slot(family, bases[b], t, prev, code, K)
                ncol = K if t < min_len else K + 1
                s = _row_logz(logits, slot, ncol, &m)
                target = uniforms[b, t] * s
                acc = 0.0
                chosen = ncol - 1
                for j in range(ncol):
                    acc = acc + exp(logits[slot, j] - m)
                    if target < acc:
                        chosen = j
                        break
                lp += logits[slot, chosen] - m - log(s)
                if chosen == K:
                    n = t
                    break
                tokens[b, t] = chosen
                prev = chosen + 1
                code = code * K + chosen
            nlen[b] = n
            logp[b] = lp
    return tokens_arr, nlen_arr, logp_arr


def logprob(const double[:, ::1] logits, const long long[::1] bases, int family,
            int K, int max_len, int min_len, const int[:, ::1] tokens,
            const int[::1] nlen):
    cdef Py_ssize_t B = bases.shape[0]
    out_arr = np.zeros(B, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t b, slot
    cdef int t, ncol, n, tok
    cdef long long prev, code
    cdef double m, s, lp
    with nogil:
        for b in range(B):
            prev = 0
            code = 0
            lp = 0.0
            n = nlen[b]
            for t in range(n + 1):
                if t == max_len - 1:
                    break
                tok = tokens[b, t] if t < n else K
                slot = _slot(family, bases[b], t, prev, code, K)
                ncol = K if t < min_len else K + 1
                s = _row_logz(logits, slot, ncol, &m)
                lp += logits[slot, tok] - m - log(s)
                prev = tok + 1
                code = code * K + tok
            out[b] = lp
    return out_arr


def accumulate_grad(const double[:, ::1] logits, const long long[::1] bases, int family,
                    int K, int max_len, int min_len, const int[:, ::1] tokens,
                    const int[::1] nlen, const double[::1] weights, double[:, ::1] out):
    """``out += sum_b weights[b] * grad log pi(tokens[b])`` in logit space."""
    cdef Py_ssize_t B = bases.shape[0]
    cdef Py_ssize_t b, slot
    cdef int t, j, ncol, n, tok
    cdef long long prev, code
    cdef double m, s, w
    with nogil:
        for b in range(B):
            w = weights[b]
            if w == 0.0:
                continue
            prev = 0
            code = 0
            n = nlen[b]
            for t in range(n + 1):
                if t == max_len - 1:
                    break
                tok = tokens[b, t] if t < n else K
                slot = _slot(family, bases[b], t, prev, code, K)
                ncol = K if t < min_len else K + 1
                s = _row_logz(logits, slot, ncol, &m)
                for j in range(ncol):
                    out[slot, j] -= w * exp(logits[slot, j] - m) / s
                out[slot, tok] += w
                prev = tok + 1
                code = code * K + tok
