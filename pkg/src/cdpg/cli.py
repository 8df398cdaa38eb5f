"""Command line entry point: ``cdpg {train,eval,oracle,sweep,compare}``.

Exit status is 0 on success, 2 for configuration errors (including bad
flags) and 3 for failures while running.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import logging
import sys
from pathlib import Path

from . import checkpoint, harness, oracle
from .config import ExperimentConfig, load_config, resolve_out_dir
from .errors import CDPGError, ConfigError
from .oracle import MetricsReport
from .tasks import build_task
from .trainers import ALGORITHMS

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3
log = logging.getLogger("cdpg")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="PATH", help="experiment config (INI); defaults apply when omitted")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", metavar="DIR", help="output directory (else $CDPG_OUT_DIR, else run.out)")
    p.add_argument("--scale", type=float, help="multiplies context counts and iterations")
    p.add_argument("--algo", choices=ALGORITHMS)
    p.add_argument("--iterations", type=int)
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cdpg", description="Conditional distributional policy gradients on toy sequence spaces.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one policy and write metrics")
    _common(p)

    p = sub.add_parser("eval", help="recompute metrics for a checkpoint on the test contexts")
    _common(p)
    p.add_argument("--checkpoint", metavar="PATH", help="policy checkpoint (default <out>/policy.cdpg)")

    p = sub.add_parser("oracle", help="print exact Z_c and divergences (enumerable spaces only)")
    _common(p)
    p.add_argument("--checkpoint", metavar="PATH", help="policy to compare against p_c (default: the base model)")
    p.add_argument("--split", choices=("train", "test"), default="train")
    p.add_argument("--top", type=int, default=0, help="also print the top-k sequences of each p_c")

    p = sub.add_parser("sweep", help="train over a cartesian grid of overrides")
    _common(p)
    p.add_argument("--grid", action="append", default=[], metavar="SECTION.KEY=V1,V2,...")

    p = sub.add_parser("compare", help="train all four algorithms with shared seeds")
    _common(p)
    return parser


def _resolve(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    for item in args.overrides:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects SECTION.KEY=VALUE, got {item!r}")
        cfg.set(key.strip(), value)
    if args.seed is not None:
        cfg.run.seed = args.seed
    if args.scale is not None:
        cfg.run.scale = args.scale
    if args.algo is not None:
        cfg.trainer.algorithm = args.algo
    if args.iterations is not None:
        cfg.run.iterations = args.iterations
    return cfg.validate()


def _train(cfg: ExperimentConfig, out: Path) -> harness.RunLedger:
    ledger = harness.run_experiment(cfg, out)
    harness.emit(ledger, out)
    return ledger


def cmd_train(args) -> int:
    cfg = _resolve(args)
    out = Path(resolve_out_dir(cfg, args.out))
    ledger = _train(cfg, out)
    final = ledger.final
    print(f"{ledger.algorithm}: {len(ledger.stats)} iterations -> {out}")
    if final is not None:
        print(harness._brief(final))
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _resolve(args)
    out = Path(resolve_out_dir(cfg, args.out))
    path = Path(args.checkpoint) if args.checkpoint else out / "policy.cdpg"
    task = build_task(cfg)
    policy = checkpoint.load_policy(path)
    if policy.logits.shape != task.base.logits.shape:
        raise ConfigError(f"{path} does not match the configured task (shape {policy.logits.shape})")
    evaluator = harness.Evaluator(task, cfg, task.test)
    rep = evaluator.report(policy, int(cfg.iterations))
    out.mkdir(parents=True, exist_ok=True)
    (out / "eval.csv").write_text(harness.metrics_csv([rep]))
    print(json.dumps(rep.as_dict(), indent=2))
    return EXIT_OK


def cmd_oracle(args) -> int:
    cfg = _resolve(args)
    task = build_task(cfg, check_feasible=False)
    if not task.space.enumerable():
        raise ConfigError(f"|X| = {task.space.size} is too large to enumerate")
    policy = checkpoint.load_policy(args.checkpoint) if args.checkpoint else task.base
    contexts = task.train if args.split == "train" else task.test
    ebm = harness.Evaluator(task, cfg, contexts).ebm
    z = oracle.exact_z_values(ebm, contexts)
    vocab = task.vocab
    print(f"task {task.name}: |X| = {task.space.size}, {len(contexts)} {args.split} contexts")
    for c, zc in zip(contexts, z.tolist()):
        print(f"context {c.id} [{' '.join(vocab.decode(c.items))}]: Z_c = {zc:.12g}")
        if args.top and zc > 0:
            table = oracle.exact_target(ebm, c).table(task.space)
            for x, p in sorted(table, key=lambda t: -t[1])[: args.top]:
                print(f"    {p:.6f}  {' '.join(vocab.decode(x))}")
    live = [c for c, zc in zip(contexts, z) if zc > 0]
    if len(live) < len(contexts):
        print(f"{len(contexts) - len(live)} contexts have Z_c = 0 (no target distribution)")
    if live:
        print(f"E_c KL(p_c, pi) = {oracle.exact_kl_p_pi(ebm, policy, live):.12g}")
    print(f"E_c KL(pi, a) = {oracle.exact_kl_pi_a(policy, task.base, contexts):.12g}")
    return EXIT_OK


def _grid(specs: list[str]) -> list[list[tuple[str, str]]]:
    axes = []
    for spec in specs:
        key, sep, values = spec.partition("=")
        if not sep or not values:
            raise ConfigError(f"--grid expects SECTION.KEY=V1,V2,..., got {spec!r}")
        axes.append([(key.strip(), v.strip()) for v in values.split(",")])
    return [list(combo) for combo in itertools.product(*axes)] if axes else [[]]


def _joined(rows: list[tuple[dict, MetricsReport]], keys: list[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = MetricsReport.columns()
    w.writerow(keys + cols)
    for tags, rep in rows:
        w.writerow([tags[k] for k in keys] + [harness.fmt(getattr(rep, c)) for c in cols])
    return buf.getvalue()


def cmd_sweep(args) -> int:
    base = _resolve(args)
    out = Path(resolve_out_dir(base, args.out))
    combos = _grid(args.grid)
    keys = [k for k, _ in combos[0]]
    rows = []
    for combo in combos:
        cfg = _resolve(args)
        for key, value in combo:
            cfg.set(key, value)
        cfg.validate()
        name = "_".join(f"{k.split('.')[-1]}-{v}" for k, v in combo) or "base"
        ledger = _train(cfg, out / name)
        print(f"{name}: {harness._brief(ledger.final)}")
        rows.append(({"run": name, **dict(combo)}, ledger.final))
    (out / "sweep.csv").write_text(_joined(rows, ["run"] + keys))
    return EXIT_OK


def cmd_compare(args) -> int:
    if args.algo is not None:
        raise ConfigError("compare runs every algorithm; drop --algo")
    base = _resolve(args)
    out = Path(resolve_out_dir(base, args.out))
    rows = []
    for algo in ALGORITHMS:
        cfg = _resolve(args)
        cfg.trainer.algorithm = algo
        ledger = _train(cfg, out / algo)
        print(f"{algo}: {harness._brief(ledger.final)}")
        rows.extend(({"algorithm": algo}, rep) for rep in ledger.reports)
    (out / "compare.csv").write_text(_joined(rows, ["algorithm"]))
    return EXIT_OK


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "oracle": cmd_oracle, "sweep": cmd_sweep, "compare": cmd_compare}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"cdpg: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CDPGError, checkpoint.CheckpointError, OSError, FloatingPointError, ValueError, KeyError) as exc:
        print(f"cdpg: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
