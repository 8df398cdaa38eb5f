"""Exact enumeration oracles and Monte-Carlo estimators of the training targets.

Everything prefixed ``exact_`` enumerates the whole sequence space and is
only available below the enumeration cap; the ``estimate_`` functions use
ancestral samples from the policy and report standard errors.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import Sequence

import numpy as np

from .ebm import ConditionalEBM, ExponentialEBM, PointwiseEBM
from .errors import DegenerateEstimateError, EmptyTargetError
from .seq import Context, SoftmaxPolicy


@dataclass
class ExactTarget:
    context_id: int
    probs: np.ndarray  # p_c over X in canonical order
    z_exact: float

    def table(self, space) -> list[tuple[tuple[int, ...], float]]:
        """``(sequence, p_c(x))`` for the support of p_c."""
        seqs = space.all_sequences()
        return [(seqs[i], float(self.probs[i])) for i in np.flatnonzero(self.probs)]


def exact_target(ebm: ConditionalEBM, c: Context) -> ExactTarget:
    scores = np.exp(ebm.log_score_table(c))
    z = float(scores.sum())
    if z == 0.0:
        raise EmptyTargetError(f"context {c.id}: the constraint is unsatisfiable on this space")
    return ExactTarget(c.id, scores / z, z)


def _log_pi(policy: SoftmaxPolicy, c: Context) -> np.ndarray:
    return policy.log_probs_over_space(c)


def _xlogy_ratio(p: np.ndarray, log_p: np.ndarray, log_q: np.ndarray) -> float:
    live = p > 0
    return float(np.sum(p[live] * (log_p[live] - log_q[live])))


def exact_kl_p_pi(ebm: ConditionalEBM, policy: SoftmaxPolicy, contexts: Sequence[Context]) -> float:
    """Mean over ``contexts`` of KL(p_c || pi(.|c))."""
    total = 0.0
    for c in contexts:
        t = exact_target(ebm, c)
        with np.errstate(divide="ignore"):
            total += _xlogy_ratio(t.probs, np.log(t.probs), _log_pi(policy, c))
    return total / len(contexts)


def exact_kl_pi_a(policy: SoftmaxPolicy, base: SoftmaxPolicy, contexts: Sequence[Context]) -> float:
    """Mean over ``contexts`` of KL(pi(.|c) || a(.|c))."""
    total = 0.0
    for c in contexts:
        lp = _log_pi(policy, c)
        total += _xlogy_ratio(np.exp(lp), lp, base.log_probs_over_space(c))
    return total / len(contexts)


def exact_ce_loss(ebm: ConditionalEBM, policy: SoftmaxPolicy, contexts: Sequence[Context]) -> float:
    """Mean over ``contexts`` of the cross-entropy CE(p_c, pi(.|c))."""
    total = 0.0
    for c in contexts:
        t = exact_target(ebm, c)
        live = t.probs > 0
        total -= float(np.dot(t.probs[live], _log_pi(policy, c)[live]))
    return total / len(contexts)


def exact_loss_grad(ebm: ConditionalEBM, policy: SoftmaxPolicy, contexts: Sequence[Context]) -> np.ndarray:
    """Gradient of ``exact_ce_loss`` in parameter space (flat vector)."""
    tokens, nlen = policy.space.all_arrays()
    out = np.zeros(policy.params.size)
    for c in contexts:
        t = exact_target(ebm, c)
        policy.accumulate_grad(policy.bases(c, len(nlen)), tokens, nlen, -t.probs / len(contexts), out)
    return out


def exact_satisfaction(ebm: PointwiseEBM, policy: SoftmaxPolicy, contexts: Sequence[Context]) -> float:
    tokens, nlen = policy.space.all_arrays()
    total = 0.0
    for c in contexts:
        b = ebm.b_arrays(c, tokens, nlen)
        total += float(np.dot(np.exp(_log_pi(policy, c)), b))
    return total / len(contexts)


def exact_feature_mean(ebm: ExponentialEBM, policy: SoftmaxPolicy, contexts: Sequence[Context]) -> float:
    total = 0.0
    for c in contexts:
        _, phi = ebm.base_table(c)
        total += float(np.dot(np.exp(_log_pi(policy, c)), phi))
    return total / len(contexts)


def exact_z_values(ebm: ConditionalEBM, contexts: Sequence[Context]) -> np.ndarray:
    return np.array([float(np.exp(ebm.log_score_table(c)).sum()) for c in contexts])


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float
    n_skipped: int = 0

    def __float__(self):
        return self.value


def _pick(contexts, n, rng):
    if n is None:
        return list(contexts)
    idx = rng.integers(0, len(contexts), size=n)
    return [contexts[i] for i in idx]


def _stderr(values) -> float:
    values = np.asarray(values, dtype=np.float64)
    if values.size < 2:
        return math.nan
    return float(values.std(ddof=1) / math.sqrt(values.size))


def estimate_kl_p_pi(
    ebm: ConditionalEBM,
    policy: SoftmaxPolicy,
    contexts: Sequence[Context],
    n: int | None,
    m: int,
    rng: np.random.Generator,
    epsilon: float = 1e-6,
) -> Estimate:
    """Plug-in importance-sampling estimate of the expected KL(p_c || pi).

    Draws ``n`` contexts uniformly with replacement (``n=None`` uses each
    context once) and ``m`` samples per context.  Each sample contributes
    ``w / (Z + eps) * (log w - log Z)`` with ``w = P_c(x) / pi(x|c)`` and
    ``Z`` the mean weight of its context.  Contexts whose estimated ``Z`` is 0
    carry no information and are skipped; their count is returned.
    """
    per_context, skipped = [], 0
    for c in _pick(contexts, n, rng):
        batch = ebm.draw(c, policy, m, rng)
        w = batch.weights
        z = float(w.mean())
        if z == 0.0:
            skipped += 1
            continue
        live = w > 0
        terms = np.zeros_like(w)
        terms[live] = w[live] / (z + epsilon) * (np.log(w[live]) - math.log(z))
        per_context.append(float(terms.mean()))
    if not per_context:
        raise DegenerateEstimateError("every sampled context had zero estimated partition function")
    return Estimate(float(np.mean(per_context)), _stderr(per_context), skipped)


def estimate_kl_pi_a(
    policy: SoftmaxPolicy,
    base: SoftmaxPolicy,
    contexts: Sequence[Context],
    n: int | None,
    m: int,
    rng: np.random.Generator,
) -> Estimate:
    """Mean of ``log pi(x|c) - log a(x|c)`` over ancestral samples from pi."""
    diffs = []
    for c in _pick(contexts, n, rng):
        tokens, nlen, logp = policy.sample_batch(c, m, rng)
        diffs.append(logp - base.logprob_arrays(base.bases(c, m), tokens, nlen))
    d = np.concatenate(diffs)
    return Estimate(float(d.mean()), _stderr(d))


def satisfaction_rate(scorer, policy: SoftmaxPolicy, contexts: Sequence[Context], m: int, rng) -> float:
    """Fraction of ``m`` samples per context with b(x, c) = 1."""
    hits = []
    for c in contexts:
        tokens, nlen, _ = policy.sample_batch(c, m, rng)
        hits.append(scorer.batch(c, tokens, nlen))
    return float(np.concatenate(hits).mean())


@dataclass
class MetricsReport:
    iteration: int
    kl_p_pi_est: float | None = None
    kl_p_pi_exact: float | None = None
    kl_pi_a_est: float | None = None
    kl_pi_a_exact: float | None = None
    satisfaction: float | None = None
    distinct2: float | None = None
    bleu4: float | None = None
    rougeL: float | None = None
    precision_source: float | None = None
    recall_target: float | None = None
    mean_entities: float | None = None
    nstd_z: float | None = None

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def as_dict(self) -> dict:
        return asdict(self)
