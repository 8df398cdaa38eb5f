"""Deterministic experiment runs and their on-disk record.

``run_experiment`` builds the task, trains for ``cfg.iterations`` iterations and
evaluates a :class:`MetricsReport` at iteration 0 and then every
``metric_every`` iterations (always including the last one).  ``emit`` writes

* ``metrics.csv``  the 13 report columns, one row per evaluation
* ``stats.csv``    one row per training iteration
* ``zipf.csv``     token frequencies of the final evaluation samples
* ``config.echo``  the resolved configuration (re-runnable as is)
* ``report.json``  final summary
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import checkpoint, kernels, metrics, oracle
from .config import ExperimentConfig
from .ebm import ExponentialEBM, estimate_lambda_snis, exact_lambda
from .errors import DegenerateEstimateError, UnattainableMomentError
from .oracle import MetricsReport
from .seq import DEFAULT_ENUMERATION_CAP, Context, SoftmaxPolicy
from .tasks import Task, build_task
from .trainers import IterationStats, Trainer, stream

log = logging.getLogger(__name__)

METRICS_STREAM = 0x3E7A1
STATS_COLUMNS = [f.name for f in dataclasses.fields(IterationStats)]


@dataclass
class RunLedger:
    config_echo: str
    config_hash: str
    algorithm: str
    stats: list[IterationStats] = field(default_factory=list)
    reports: list[MetricsReport] = field(default_factory=list)
    checkpoints: list[str] = field(default_factory=list)
    zipf: list[tuple[str, int, int]] = field(default_factory=list)

    @property
    def final(self) -> MetricsReport | None:
        return self.reports[-1] if self.reports else None


class Evaluator:
    """Computes a :class:`MetricsReport` for a policy on a fixed context split."""

    def __init__(self, task: Task, cfg: ExperimentConfig, contexts: list[Context]):
        self.task = task
        self.cfg = cfg
        self.contexts = contexts
        size = task.space.size
        self.exact = task.space.enumerable(DEFAULT_ENUMERATION_CAP) and size * len(contexts) <= cfg.run.exact_budget
        self.ebm = task.ebm
        if isinstance(task.ebm, ExponentialEBM):
            # evaluation uses its own multipliers so training's SNIS updates do not leak in
            self.ebm = ExponentialEBM(task.base, task.feature, task.ebm.target)
            self._solve_lambdas()
        self._z_exact = oracle.exact_z_values(self.ebm, contexts) if self.exact else None
        self.last_samples: list[tuple[int, ...]] = []

    def _solve_lambdas(self) -> None:
        rng = stream(self.cfg.run.seed, METRICS_STREAM, 0)
        for c in self.contexts:
            try:
                if self.exact:
                    self.ebm.lambdas[c.id] = exact_lambda(self.ebm, c)
                else:
                    self.ebm.lambdas[c.id] = estimate_lambda_snis(self.ebm, c, self.task.base, 10 * self.cfg.run.m_eval, rng)
            except UnattainableMomentError as exc:
                log.warning("context %d: %s; left out of the KL(p, pi) metrics", c.id, exc)
        self.contexts_with_target = [c for c in self.contexts if c.id in self.ebm.lambdas]

    def _target_contexts(self) -> list[Context]:
        return getattr(self, "contexts_with_target", self.contexts)

    def report(self, policy: SoftmaxPolicy, iteration: int) -> MetricsReport:
        task, m = self.task, self.cfg.run.m_eval
        rng = stream(self.cfg.run.seed, METRICS_STREAM, iteration + 1)
        vocab, eos = task.vocab, task.vocab.eos_id
        rep = MetricsReport(iteration)
        targets = self._target_contexts()

        if targets:
            try:
                rep.kl_p_pi_est = oracle.estimate_kl_p_pi(self.ebm, policy, targets, None, m, rng).value
            except DegenerateEstimateError:
                rep.kl_p_pi_est = None
        rep.kl_pi_a_est = oracle.estimate_kl_pi_a(policy, task.base, self.contexts, None, m, rng).value
        if self.exact:
            if targets:
                rep.kl_p_pi_exact = oracle.exact_kl_p_pi(self.ebm, policy, targets)
            rep.kl_pi_a_exact = oracle.exact_kl_pi_a(policy, task.base, self.contexts)

        hits, d2, bleu, rouge, prec, rec, ents = [], [], [], [], [], [], []
        samples = []
        for c in self.contexts:
            tokens, nlen, _ = policy.sample_batch(c, m, rng)
            if task.scorer is not None:
                hits.append(task.scorer.batch(c, tokens, nlen))
            ref = task.references.get(c.id)
            for x in task.space.from_arrays(tokens, nlen):
                samples.append(x)
                d2.append(metrics.distinct2(x, eos))
                if ref is not None and len(ref) > 1:
                    bleu.append(metrics.bleu4_lite(x, ref, eos))
                    rouge.append(metrics.rouge_l(x, ref, eos))
                if vocab.entity_ids:
                    body = x[:-1]
                    prec.append(metrics.precision_source(vocab, body, c))
                    ents.append(len(metrics.entities(vocab, body)))
                    if ref is not None:
                        rec.append(metrics.recall_target(vocab, body, ref[:-1]))
        self.last_samples = samples
        rep.satisfaction = _mean(np.concatenate(hits)) if hits else None
        rep.distinct2 = _mean(d2)
        rep.bleu4 = _mean(bleu)
        rep.rougeL = _mean(rouge)
        rep.precision_source = _mean(prec)
        rep.recall_target = _mean(rec)
        rep.mean_entities = _mean(ents)
        rep.nstd_z = self._nstd(policy, targets, rng)
        return rep

    def _nstd(self, policy, targets, rng) -> float | None:
        if self._z_exact is not None:
            z = self._z_exact
        elif targets:
            z = [self.ebm.draw(c, policy, self.cfg.run.m_eval, rng).z_hat for c in targets]
        else:
            return None
        try:
            return metrics.nstd_z(z)
        except ZeroDivisionError:
            return None


def _mean(values) -> float | None:
    if len(values) == 0:
        return None
    return float(np.mean(values))


def eval_contexts(task: Task, cfg: ExperimentConfig) -> list[Context]:
    return task.test if cfg.run.eval_split == "test" else task.train


def run_experiment(cfg: ExperimentConfig, out_dir: str | Path | None = None, task: Task | None = None) -> RunLedger:
    """Train and evaluate as configured; checkpoints go under ``out_dir`` when given."""
    cfg.validate()
    tcfg = cfg.trainer_config()
    task = task or build_task(cfg)
    echo = cfg.echo()
    ledger = RunLedger(echo, hashlib.sha256(echo.encode()).hexdigest(), tcfg.algorithm)
    policy = task.base.copy()
    trainer = Trainer(policy, task.ebm, task.train, tcfg, base=task.base)
    evaluator = Evaluator(task, cfg, eval_contexts(task, cfg))
    ckpt_dir = Path(out_dir) / "checkpoints" if out_dir is not None else None
    n, every, ck_every = tcfg.iterations, cfg.run.metric_every, cfg.run.checkpoint_every
    log.info("%s on %s: %d iterations, %s kernels", tcfg.algorithm, task.name, n, kernels.BACKEND)

    ledger.reports.append(evaluator.report(policy, 0))
    for it in range(n):
        ledger.stats.append(trainer.iteration(it))
        done = it + 1
        if done % every == 0 or done == n:
            ledger.reports.append(evaluator.report(policy, done))
            log.info("iteration %d: %s", done, _brief(ledger.reports[-1]))
        if ckpt_dir is not None and ck_every and done % ck_every == 0:
            ledger.checkpoints.append(_save(ckpt_dir / f"policy_{done:06d}.cdpg", trainer))
    if ckpt_dir is not None:
        ledger.checkpoints.append(_save(Path(out_dir) / "policy.cdpg", trainer))
    ledger.zipf = [(task.vocab.token(t), f, r) for t, f, r in metrics.zipf_table(evaluator.last_samples, task.vocab)]
    return ledger


def _save(path: Path, trainer: Trainer) -> str:
    path.parent.mkdir(parents=True, exist_ok=True)
    checkpoint.save_policy(path, trainer.policy)
    if isinstance(trainer.ebm, ExponentialEBM) and trainer.ebm.lambdas:
        checkpoint.save_lambdas(path.with_suffix(".lambda"), trainer.ebm.lambdas)
    return str(path)


def _brief(rep: MetricsReport) -> str:
    keys = ("kl_p_pi_exact", "kl_p_pi_est", "kl_pi_a_exact", "satisfaction")
    return " ".join(f"{k}={getattr(rep, k):.4g}" for k in keys if getattr(rep, k) is not None)


# serialization


def fmt(v) -> str:
    """Shortest round-trip decimal for reals; empty for missing values."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    return repr(v)


def metrics_csv(reports: list[MetricsReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = MetricsReport.columns()
    w.writerow(cols)
    for r in reports:
        w.writerow([fmt(getattr(r, k)) for k in cols])
    return buf.getvalue()


def parse_metrics_csv(text: str) -> list[MetricsReport]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != MetricsReport.columns():
        raise ValueError("not a metrics.csv: header mismatch")
    out = []
    for row in rows[1:]:
        vals = {k: (None if v == "" else float(v)) for k, v in zip(rows[0], row)}
        vals["iteration"] = int(vals["iteration"])
        out.append(MetricsReport(**vals))
    return out


def _table(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if not isinstance(v, str) else v for v in row])
    return buf.getvalue()


def emit(ledger: RunLedger, out_dir: str | Path) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "metrics.csv": metrics_csv(ledger.reports),
        "stats.csv": _table(STATS_COLUMNS, ([getattr(s, k) for k in STATS_COLUMNS] for s in ledger.stats)),
        "zipf.csv": _table(["token", "frequency", "rank"], ledger.zipf),
        "config.echo": ledger.config_echo,
    }
    final = ledger.final
    summary = {
        "algorithm": ledger.algorithm,
        "config_sha256": ledger.config_hash,
        "iterations": ledger.stats[-1].iteration + 1 if ledger.stats else 0,
        "final": final.as_dict() if final is not None else None,
        "initial": ledger.reports[0].as_dict() if ledger.reports else None,
        "checkpoints": [Path(p).name for p in ledger.checkpoints],
    }
    files["report.json"] = json.dumps(summary, indent=2, sort_keys=True, allow_nan=True) + "\n"
    paths = {}
    for name, text in files.items():
        p = out / name
        p.write_text(text)
        paths[name] = p
    return paths
