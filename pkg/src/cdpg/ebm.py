"""Conditional energy-based models over a policy's sequence space.

``PointwiseEBM`` scores ``P_c(x) = a(x|c) b(x, c)`` with a binary scorer and
``ExponentialEBM`` scores ``P_c(x) = a(x|c) exp(lambda_c phi(x, c))`` with one
scalar feature and a per-context multiplier.  Scores are handled in log space;
``-inf`` marks zero mass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EnumerationCapError, MissingLambdaError, UnattainableMomentError
from .seq import DEFAULT_ENUMERATION_CAP, Context, SoftmaxPolicy

# spaces up to this size get per-context score tables
DEFAULT_TABLE_CAP = 20_000
LAMBDA_BRACKET = 50.0
LAMBDA_BRACKET_MAX = 1e4


@dataclass(frozen=True)
class PartitionEstimate:
    context_id: int
    z_hat: float
    m: int
    method: str  # "importance-sampled" | "exact"


@dataclass
class SampleBatch:
    """M draws for one context with their proposal and EBM log-scores."""

    context: Context
    tokens: np.ndarray
    nlen: np.ndarray
    logp: np.ndarray  # log proposal(x|c) at sampling time
    log_score: np.ndarray  # log P_c(x)

    @property
    def weights(self) -> np.ndarray:
        """Importance weights ``P_c(x) / proposal(x|c)``."""
        return np.exp(self.log_score - self.logp)

    @property
    def z_hat(self) -> float:
        return float(self.weights.mean()) if len(self.logp) else 0.0


class ConditionalEBM:
    form = ""

    def __init__(self, base: SoftmaxPolicy, table_cap: int = DEFAULT_TABLE_CAP):
        self.base = base
        self.space = base.space
        self.table_cap = table_cap
        self._tables: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    @property
    def tabulated(self) -> bool:
        return self.space.size <= self.table_cap

    def _term(self, c, tokens, nlen) -> np.ndarray:
        """Per-sequence second factor (log b or phi) for the given arrays."""
        raise NotImplementedError

    def _tables_for(self, c: Context):
        hit = self._tables.get(c.id)
        if hit is None:
            tokens, nlen = self.space.all_arrays()
            hit = (self.base.log_probs_over_space(c), self._term(c, tokens, nlen))
            self._tables[c.id] = hit
        return hit

    def _parts(self, c, tokens, nlen):
        if self.tabulated:
            idx = self.space.index_of(tokens, nlen)
            log_a, term = self._tables_for(c)
            return log_a[idx], term[idx]
        log_a = self.base.logprob_arrays(self.base.bases(c, len(nlen)), tokens, nlen)
        return log_a, self._term(c, tokens, nlen)

    def _combine(self, c, log_a, term) -> np.ndarray:
        raise NotImplementedError

    def log_score_arrays(self, c: Context, tokens, nlen) -> np.ndarray:
        return self._combine(c, *self._parts(c, tokens, nlen))

    def log_score_table(self, c: Context, cap: int = DEFAULT_ENUMERATION_CAP) -> np.ndarray:
        """log P_c(x) for every x in canonical order."""
        if not self.space.enumerable(cap):
            raise EnumerationCapError(f"|X| = {self.space.size} exceeds the enumeration cap {cap}")
        if self.tabulated:
            return self._combine(c, *self._tables_for(c))
        tokens, nlen = self.space.all_arrays(cap)
        return self._combine(c, self.base.log_probs_over_space(c, cap), self._term(c, tokens, nlen))

    def score(self, c: Context, x) -> float:
        tokens, nlen = self.space.to_arrays([x])
        return float(np.exp(self.log_score_arrays(c, tokens, nlen)[0]))

    def draw(self, c: Context, proposal: SoftmaxPolicy, m: int, rng: np.random.Generator) -> SampleBatch:
        tokens, nlen, logp = proposal.sample_batch(c, m, rng)
        return SampleBatch(c, tokens, nlen, logp, self.log_score_arrays(c, tokens, nlen))


class PointwiseEBM(ConditionalEBM):
    form = "pointwise"

    def __init__(self, base, scorer, table_cap: int = DEFAULT_TABLE_CAP):
        super().__init__(base, table_cap)
        self.scorer = scorer

    def _term(self, c, tokens, nlen):
        b = self.scorer.batch(c, tokens, nlen)
        with np.errstate(divide="ignore"):
            return np.log(b)

    def _combine(self, c, log_a, log_b):
        return log_a + log_b

    def b_arrays(self, c, tokens, nlen) -> np.ndarray:
        return np.exp(self._parts(c, tokens, nlen)[1])


class ExponentialEBM(ConditionalEBM):
    form = "distributional"

    def __init__(self, base, feature, target: float, table_cap: int = DEFAULT_TABLE_CAP):
        super().__init__(base, table_cap)
        self.feature = feature
        self.target = float(target)
        self.lambdas: dict[int, float] = {}

    def _term(self, c, tokens, nlen):
        return self.feature.batch(c, tokens, nlen)

    def lam(self, c: Context) -> float:
        try:
            return self.lambdas[c.id]
        except KeyError:
            raise MissingLambdaError(f"no multiplier stored for context {c.id}") from None

    def _combine(self, c, log_a, phi):
        return log_a + self.lam(c) * phi

    def phi_arrays(self, c, tokens, nlen) -> np.ndarray:
        return self._parts(c, tokens, nlen)[1]

    def base_parts(self, c, tokens, nlen):
        """``(log a(x|c), phi(x, c))`` for the given arrays."""
        return self._parts(c, tokens, nlen)

    def base_table(self, c):
        """``(log a, phi)`` over the whole space in canonical order."""
        if self.tabulated:
            return self._tables_for(c)
        tokens, nlen = self.space.all_arrays()
        return self.base.log_probs_over_space(c), self._term(c, tokens, nlen)


def ebm_score(ebm: ConditionalEBM, c: Context, x) -> float:
    return ebm.score(c, x)


def estimate_Z(ebm, c, proposal, m: int, rng) -> PartitionEstimate:
    """Importance-sampled ``(1/M) sum_j P_c(x_j) / proposal(x_j|c)``."""
    if m < 1:
        raise ValueError("M must be at least 1")
    batch = ebm.draw(c, proposal, m, rng)
    return PartitionEstimate(c.id, batch.z_hat, m, "importance-sampled")


def exact_Z(ebm, c, cap: int = DEFAULT_ENUMERATION_CAP) -> PartitionEstimate:
    ls = ebm.log_score_table(c, cap)
    return PartitionEstimate(c.id, float(np.exp(ls).sum()), len(ls), "exact")


def snis_moment(lam: float, phi: np.ndarray, log_w0: np.ndarray) -> float:
    """Self-normalised estimate of E[phi] under weights ``exp(log_w0 + lam * phi)``."""
    lw = log_w0 + lam * phi
    lw = lw - lw.max()
    w = np.exp(lw)
    return float(np.dot(w, phi) / w.sum())


def snis_lambda(phi, log_w0, target: float, tol: float = 1e-9) -> float:
    """Solve ``snis_moment(lam) = target`` by bisection.

    ``snis_moment`` is nondecreasing in ``lam`` (its derivative is a weighted
    variance), so the root is bracketed by expanding ``[-50, 50]`` outward.
    """
    phi = np.asarray(phi, dtype=np.float64)
    log_w0 = np.asarray(log_w0, dtype=np.float64)
    live = np.isfinite(log_w0)
    phi, log_w0 = phi[live], log_w0[live]
    if phi.size == 0:
        raise UnattainableMomentError("no sample carries positive base weight")
    lo_phi, hi_phi = phi.min(), phi.max()
    if lo_phi == hi_phi == target:
        return 0.0
    if not lo_phi < target < hi_phi:
        raise UnattainableMomentError(
            f"target moment {target} outside the open range ({lo_phi}, {hi_phi}) reachable on the sample"
        )
    lo, hi = -LAMBDA_BRACKET, LAMBDA_BRACKET
    while snis_moment(lo, phi, log_w0) > target or snis_moment(hi, phi, log_w0) < target:
        if hi >= LAMBDA_BRACKET_MAX:
            raise UnattainableMomentError(f"no bracket for target {target} within +-{LAMBDA_BRACKET_MAX}")
        lo, hi = 2 * lo, 2 * hi
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        g = snis_moment(mid, phi, log_w0)
        if abs(g - target) <= tol:
            return mid
        if g < target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 4 * math.ulp(max(abs(lo), abs(hi), 1.0)):
            break
    return 0.5 * (lo + hi)


def estimate_lambda_snis(ebm: ExponentialEBM, c, proposal, m: int, rng) -> float:
    if m < 2:
        raise ValueError("M must be at least 2")
    tokens, nlen, logp = proposal.sample_batch(c, m, rng)
    log_a, phi = ebm.base_parts(c, tokens, nlen)
    return snis_lambda(phi, log_a - logp, ebm.target)


def exact_lambda(ebm: ExponentialEBM, c) -> float:
    """Multiplier matching the target moment exactly, using the whole space as the sample."""
    log_a, phi = ebm.base_table(c)
    return snis_lambda(phi, log_a, ebm.target)
