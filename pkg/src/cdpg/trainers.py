"""Conditional DPG and the three baseline fine-tuning loops.

One iteration samples ``N`` contexts uniformly (with replacement) from the
training set, draws ``M`` sequences per context from the current policy, fills
a buffer, shuffles it and applies one SGD step per minibatch:

    theta += alpha * mean_minibatch(weight(x, c) * grad log pi_theta(x|c))

The algorithms differ only in ``weight``:

* CDPG       ``P_c(x) / ((Z_c + eps) pi_old(x|c))`` with ``Z_c`` estimated from
             the same ``M`` samples
* DPG        as CDPG with one running mean ``Z`` shared by all contexts
* Reinforce  ``b(x, c)``
* Ziegler    clipped-ratio policy gradient on ``b - beta (log pi_old - log a)``

``pi_old`` is the sampling-time probability cached in the buffer.  Every
random draw comes from a stream keyed by ``(seed, iteration[, slot])``, so
results do not depend on the order in which contexts are processed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .ebm import ConditionalEBM, ExponentialEBM, PointwiseEBM, snis_lambda
from .errors import ConfigError, NonFiniteUpdateError, UnattainableMomentError
from .seq import Context, SoftmaxPolicy

log = logging.getLogger(__name__)

ALGORITHMS = ("cdpg", "dpg", "reinforce", "ziegler")
BETA_FLOOR = 1e-6


def stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, *key]))


@dataclass
class ZieglerConfig:
    beta_init: float = 0.2
    kl_target: float = 6.0
    k_beta: float = 0.1
    clip_range: float = 0.2


@dataclass
class TrainerConfig:
    algorithm: str = "cdpg"
    n_contexts: int = 32
    m_samples: int = 64
    alpha: float = 0.1
    epsilon: float = 1e-6
    iterations: int = 2000
    minibatch: int = 32
    seed: int = 0
    dpg_mean: str = "cumulative"
    dpg_decay: float = 0.99
    dpg_mean_of: str = "weight"
    ziegler: ZieglerConfig = field(default_factory=ZieglerConfig)

    def validate(self) -> "TrainerConfig":
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}")
        if self.n_contexts < 1 or self.m_samples < 1 or self.minibatch < 1:
            raise ConfigError("N, M and minibatch size must be positive")
        if not self.alpha > 0 or not self.epsilon > 0:
            raise ConfigError("alpha and epsilon must be positive")
        if self.iterations < 0:
            raise ConfigError("iterations must be nonnegative")
        if self.dpg_mean not in ("cumulative", "ema"):
            raise ConfigError("dpg_mean must be 'cumulative' or 'ema'")
        if self.dpg_mean_of not in ("weight", "score"):
            raise ConfigError("dpg_mean_of must be 'weight' or 'score'")
        return self


@dataclass(frozen=True)
class BufferEntry:
    context_id: int
    x: tuple[int, ...]
    z_hat: float
    lambda_c: float | None = None


class Buffer:
    """Sampled sequences of one iteration, stored column-wise."""

    def __init__(self, contexts, tokens, nlen, logp, log_score, z_hat, lambdas=None):
        self.contexts: list[Context] = contexts  # one per entry
        self.tokens = tokens
        self.nlen = nlen
        self.logp = logp
        self.log_score = log_score
        self.z_hat = z_hat
        self.lambdas = lambdas
        self.aux: dict[str, np.ndarray] = {}

    def __len__(self):
        return len(self.nlen)

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_score - self.logp)

    def entries(self, space) -> list[BufferEntry]:
        seqs = space.from_arrays(self.tokens, self.nlen)
        lam = self.lambdas if self.lambdas is not None else [None] * len(self)
        return [
            BufferEntry(c.id, x, float(z), None if lm is None else float(lm))
            for c, x, z, lm in zip(self.contexts, seqs, self.z_hat, lam)
        ]


@dataclass
class AdaptiveBetaState:
    beta: float = 0.2
    kl_target: float = 6.0
    k_beta: float = 0.1
    clip: float = 0.2

    def update(self, kl: float) -> "AdaptiveBetaState":
        """Proportional controller: ``beta *= 1 + k_beta * clip((kl - target) / target)``."""
        err = float(np.clip((kl - self.kl_target) / self.kl_target, -self.clip, self.clip))
        self.beta = max(self.beta * (1.0 + self.k_beta * err), BETA_FLOOR)
        return self


class RunningMean:
    """Cumulative mean, or an exponential moving average seeded by the first batch."""

    def __init__(self, mode: str = "cumulative", decay: float = 0.99):
        self.mode = mode
        self.decay = decay
        self.total = 0.0
        self.count = 0
        self.value: float | None = None

    def update(self, values) -> float:
        values = np.asarray(values, dtype=np.float64).reshape(-1)
        if values.size == 0:
            return self.value if self.value is not None else 0.0
        if self.mode == "cumulative" or self.value is None:
            self.total += float(values.sum())
            self.count += values.size
            self.value = self.total / self.count
        else:
            self.value = self.decay * self.value + (1 - self.decay) * float(values.mean())
        return self.value


def shuffle_and_minibatch(n: int, minibatch: int, rng: np.random.Generator) -> Iterator[np.ndarray]:
    """Index blocks of a uniformly shuffled ``range(n)``; the last block may be short."""
    if n < 1:
        raise ValueError("buffer is empty")
    order = rng.permutation(n)
    for start in range(0, n, minibatch):
        yield order[start : start + minibatch]


@dataclass
class IterationStats:
    iteration: int
    mean_z: float
    frac_zero_z: float
    mean_pseudoreward: float
    mean_b: float | None = None
    z_bar: float | None = None
    beta: float | None = None
    kl_hat: float | None = None
    lambda_fallbacks: int = 0


class Trainer:
    """Holds the mutable training state (policy, DPG running mean, Ziegler beta)."""

    def __init__(
        self,
        policy: SoftmaxPolicy,
        ebm: ConditionalEBM,
        contexts: Sequence[Context],
        cfg: TrainerConfig,
        base: SoftmaxPolicy | None = None,
    ):
        self.cfg = cfg.validate()
        self.policy = policy
        self.ebm = ebm
        self.contexts = list(contexts)
        if not self.contexts:
            raise ConfigError("no training contexts")
        self.base = base if base is not None else ebm.base
        if cfg.algorithm in ("reinforce", "ziegler") and not isinstance(ebm, PointwiseEBM):
            raise ConfigError(f"{cfg.algorithm} needs a pointwise constraint")
        self.z_bar = RunningMean(cfg.dpg_mean, cfg.dpg_decay)
        z = cfg.ziegler
        self.beta_state = AdaptiveBetaState(z.beta_init, z.kl_target, z.k_beta, z.clip_range)
        self._scratch = np.zeros(policy.params.size)

    # sampling phase

    def sample_contexts(self, rng) -> list[Context]:
        idx = rng.integers(0, len(self.contexts), size=self.cfg.n_contexts)
        return [self.contexts[i] for i in idx]

    def _collect_slot(self, c: Context, rng) -> tuple:
        tokens, nlen, logp = self.policy.sample_batch(c, self.cfg.m_samples, rng)
        lam, fallback = None, False
        if isinstance(self.ebm, ExponentialEBM):
            log_a, phi = self.ebm.base_parts(c, tokens, nlen)
            try:
                lam = snis_lambda(phi, log_a - logp, self.ebm.target)
                self.ebm.lambdas[c.id] = lam
            except UnattainableMomentError:
                fallback = True
                lam = self.ebm.lambdas.get(c.id)
            log_score = log_a + lam * phi if lam is not None else np.full(len(nlen), -np.inf)
        else:
            log_score = self.ebm.log_score_arrays(c, tokens, nlen)
        return tokens, nlen, logp, log_score, lam, fallback

    def collect(self, iteration: int) -> tuple[Buffer, np.random.Generator, int]:
        """Sample the iteration's buffer; returns it with the shuffle stream."""
        cfg = self.cfg
        rng = stream(cfg.seed, iteration)
        chosen = self.sample_contexts(rng)
        parts = [self._collect_slot(c, stream(cfg.seed, iteration, slot + 1)) for slot, c in enumerate(chosen)]
        m = cfg.m_samples
        tokens = np.concatenate([p[0] for p in parts])
        nlen = np.concatenate([p[1] for p in parts])
        logp = np.concatenate([p[2] for p in parts])
        log_score = np.concatenate([p[3] for p in parts])
        z = np.array([float(np.exp(p[3] - p[2]).mean()) for p in parts])
        lambdas = None
        if isinstance(self.ebm, ExponentialEBM):
            lambdas = np.repeat([np.nan if p[4] is None else p[4] for p in parts], m)
        buf = Buffer(
            [c for c in chosen for _ in range(m)], tokens, nlen, logp, log_score, np.repeat(z, m), lambdas
        )
        buf.aux["slot_z"] = z
        buf.aux["bases"] = self.policy.bases(chosen, m)
        fallbacks = sum(1 for p in parts if p[5])
        return buf, rng, fallbacks

    # update phase

    def _b(self, buf: Buffer) -> np.ndarray:
        if "b" not in buf.aux:
            c_rows = buf.contexts
            m = self.cfg.m_samples
            out = np.empty(len(buf))
            for s in range(0, len(buf), m):
                out[s : s + m] = self.ebm.b_arrays(c_rows[s], buf.tokens[s : s + m], buf.nlen[s : s + m])
            buf.aux["b"] = out
        return buf.aux["b"]

    def fixed_weights(self, buf: Buffer, z_override=None) -> np.ndarray:
        """Per-entry weights for CDPG, DPG and Reinforce (independent of the current theta)."""
        algo, eps = self.cfg.algorithm, self.cfg.epsilon
        if algo == "reinforce":
            return self._b(buf)
        w = buf.weights
        if algo == "cdpg":
            if z_override is not None:
                z = np.array([z_override[c.id] for c in buf.contexts])
                return w / z
            return w / (buf.z_hat + eps)
        if algo == "dpg":
            observed = w if self.cfg.dpg_mean_of == "weight" else np.exp(buf.log_score)
            z_bar = self.z_bar.update(observed)
            buf.aux["z_bar"] = z_bar
            return w / (z_bar + eps)
        raise ConfigError(f"{algo} has theta-dependent weights")

    def _ziegler_weights(self, buf: Buffer, idx: np.ndarray) -> np.ndarray:
        adv = buf.aux["reward"][idx]
        logp_now = self.policy.logprob_arrays(buf.aux["bases"][idx], buf.tokens[idx], buf.nlen[idx])
        ratio = np.exp(logp_now - buf.logp[idx])
        clip = self.cfg.ziegler.clip_range
        clipped = ((adv >= 0) & (ratio > 1 + clip)) | ((adv < 0) & (ratio < 1 - clip))
        return np.where(clipped, 0.0, adv * ratio)

    def _step(self, buf: Buffer, idx: np.ndarray, weights: np.ndarray, iteration: int) -> None:
        g = self._scratch
        g[:] = 0.0
        self.policy.accumulate_grad(buf.aux["bases"][idx], buf.tokens[idx], buf.nlen[idx], weights / len(idx), g)
        if not np.all(np.isfinite(g)):
            raise NonFiniteUpdateError(
                f"iteration {iteration}: non-finite gradient (max |weight| {np.max(np.abs(weights))})"
            )
        self.policy.apply_update(self.cfg.alpha * g)

    def iteration(self, iteration: int) -> IterationStats:
        cfg = self.cfg
        buf, rng, fallbacks = self.collect(iteration)
        slot_z = buf.aux["slot_z"]
        stats = IterationStats(
            iteration,
            float(slot_z.mean()),
            float((slot_z == 0).mean()),
            0.0,
            lambda_fallbacks=fallbacks,
        )
        if isinstance(self.ebm, PointwiseEBM):
            stats.mean_b = float(self._b(buf).mean())
        if cfg.algorithm == "ziegler":
            log_a = self.base.logprob_arrays(buf.aux["bases"], buf.tokens, buf.nlen)
            kl_terms = buf.logp - log_a
            buf.aux["reward"] = self._b(buf) - self.beta_state.beta * kl_terms
            stats.beta = self.beta_state.beta
            pseudo = []
            for idx in shuffle_and_minibatch(len(buf), cfg.minibatch, rng):
                w = self._ziegler_weights(buf, idx)
                pseudo.append(w)
                self._step(buf, idx, w, iteration)
            stats.mean_pseudoreward = float(np.concatenate(pseudo).mean())
            stats.kl_hat = float(kl_terms.mean())
            self.beta_state.update(stats.kl_hat)
            return stats
        w = self.fixed_weights(buf)
        stats.mean_pseudoreward = float(w.mean())
        stats.z_bar = buf.aux.get("z_bar")
        for idx in shuffle_and_minibatch(len(buf), cfg.minibatch, rng):
            self._step(buf, idx, w[idx], iteration)
        return stats

    def update_direction(self, iteration: int, z_override=None) -> np.ndarray:
        """``mean_B weight * grad log pi`` at the current theta, without applying it.

        ``z_override`` (context id -> Z_c) replaces the plug-in estimate and
        drops epsilon, for CDPG only.
        """
        buf, _, _ = self.collect(iteration)
        w = self.fixed_weights(buf, z_override)
        out = np.zeros(self.policy.params.size)
        return self.policy.accumulate_grad(buf.aux["bases"], buf.tokens, buf.nlen, w / len(buf), out)

    def train(self, iterations: int | None = None, start: int = 0, callback=None) -> list[IterationStats]:
        n = self.cfg.iterations if iterations is None else iterations
        out = []
        for it in range(start, start + n):
            s = self.iteration(it)
            out.append(s)
            if callback is not None:
                callback(it + 1, s)
        return out


def _run_one(algorithm, policy, ebm, contexts, cfg, iteration, **kw):
    cfg = TrainerConfig(**{**cfg.__dict__, "algorithm": algorithm})
    tr = Trainer(policy, ebm, contexts, cfg, **kw)
    return tr, tr.iteration(iteration)


def cdpg_iteration(policy, ebm, contexts, cfg: TrainerConfig, iteration: int = 0):
    """One CDPG iteration; updates ``policy`` in place and returns its stats."""
    return _run_one("cdpg", policy, ebm, contexts, cfg, iteration)[1]


def dpg_iteration(policy, ebm, contexts, cfg: TrainerConfig, iteration: int = 0, z_bar: RunningMean | None = None):
    tr = Trainer(policy, ebm, contexts, TrainerConfig(**{**cfg.__dict__, "algorithm": "dpg"}))
    if z_bar is not None:
        tr.z_bar = z_bar
    return tr.iteration(iteration)


def reinforce_iteration(policy, ebm: PointwiseEBM, contexts, cfg: TrainerConfig, iteration: int = 0):
    return _run_one("reinforce", policy, ebm, contexts, cfg, iteration)[1]


def ziegler_iteration(
    policy, ebm: PointwiseEBM, base, contexts, cfg: TrainerConfig, beta_state: AdaptiveBetaState, iteration: int = 0
):
    """One Ziegler iteration; returns ``(stats, beta_state)`` with beta updated in place."""
    tr = Trainer(policy, ebm, contexts, TrainerConfig(**{**cfg.__dict__, "algorithm": "ziegler"}), base=base)
    tr.beta_state = beta_state
    return tr.iteration(iteration), beta_state
