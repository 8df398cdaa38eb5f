"""Experiment configuration: typed sections in an INI-style file.

Example::

    [run]
    task = digitize
    seed = 7
    iterations = 2000

    [trainer]
    algorithm = cdpg
    alpha = 0.1

Every key is optional; unknown sections or keys are errors.  ``echo()``
renders the fully-resolved configuration, which loads back to an equal object.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import os
from dataclasses import dataclass, field
from typing import Any

from .errors import ConfigError
from .trainers import TrainerConfig, ZieglerConfig

TASKS = ("digitize", "entity-summ", "grammar-compile", "lint-style")
OUT_DIR_ENV = "CDPG_OUT_DIR"


@dataclass
class RunSection:
    task: str = "digitize"
    seed: int = 0
    iterations: int = 2000
    scale: float = 1.0
    n_train: int = 64
    n_test: int = 64
    metric_every: int = 50
    checkpoint_every: int = 0
    eval_split: str = "test"
    m_eval: int = 64
    exact_budget: int = 5_000_000
    out: str = "runs/default"


@dataclass
class SpaceSection:
    max_len: int = 5
    min_len: int = 0


@dataclass
class PolicySection:
    family: str = "bigram"
    featurizer: str = "by-numeral-set"


@dataclass
class TaskSection:
    """Generator knobs; each task reads the subset it understands."""

    n_numerals: int = 3
    n_words: int = 3
    n_entities: int = 5
    ctx_len_min: int = 2
    ctx_len_max: int = 4
    corpus_per_context: int = 100
    smoothing: float = 0.1
    digit_rate: float = 0.02
    drop_rate: float = 0.1
    insert_rate: float = 0.1
    min_entities: int = 4
    hallucination_rate: float = 0.1
    valid_rate: float = 0.4
    repeat_rate: float = 0.3
    style_cap: int = 4
    vacuous_contexts: int = 0
    max_numerals: int = 2


@dataclass
class EbmSection:
    form: str = "pointwise"
    scorer: str = "task"
    constant: int = 1
    feature: str = "EntityCount"
    feature_token: str = ""
    target: float = 1.5


@dataclass
class ExperimentConfig:
    run: RunSection = field(default_factory=RunSection)
    space: SpaceSection = field(default_factory=SpaceSection)
    policy: PolicySection = field(default_factory=PolicySection)
    task: TaskSection = field(default_factory=TaskSection)
    ebm: EbmSection = field(default_factory=EbmSection)
    trainer: TrainerConfig = field(default_factory=TrainerConfig)

    SECTIONS = ("run", "space", "policy", "task", "ebm", "trainer", "ziegler")

    def _section(self, name: str):
        if name == "ziegler":
            return self.trainer.ziegler
        if name not in self.SECTIONS:
            raise ConfigError(f"unknown config section [{name}]")
        return getattr(self, name)

    def set(self, dotted: str, raw: str) -> None:
        """Apply one ``section.key=value`` override, converting to the field's type."""
        if "." not in dotted:
            raise ConfigError(f"override {dotted!r} must look like section.key")
        sec_name, key = dotted.split(".", 1)
        sec = self._section(sec_name)
        types = {f.name: f for f in dataclasses.fields(sec) if f.name != "ziegler"}
        if sec_name == "trainer" and key in ("seed", "iterations"):
            raise ConfigError(f"set {key} in [run], not [trainer]")
        if key not in types:
            raise ConfigError(f"unknown key {key!r} in section [{sec_name}]")
        setattr(sec, key, _convert(type(getattr(sec, key)), raw, dotted))

    @property
    def iterations(self) -> int:
        return max(0, round(self.run.iterations * self.run.scale))

    @property
    def n_train(self) -> int:
        return max(1, round(self.run.n_train * self.run.scale))

    @property
    def n_test(self) -> int:
        return max(1, round(self.run.n_test * self.run.scale))

    def trainer_config(self) -> TrainerConfig:
        t = dataclasses.replace(self.trainer, seed=self.run.seed, iterations=self.iterations)
        return t.validate()

    def validate(self) -> "ExperimentConfig":
        r = self.run
        if r.task not in TASKS:
            raise ConfigError(f"unknown task {r.task!r}; choose from {TASKS}")
        if r.scale <= 0:
            raise ConfigError("scale must be positive")
        if r.n_train < 1 or r.n_test < 1 or r.m_eval < 1 or r.metric_every < 1:
            raise ConfigError("context counts, m_eval and metric_every must be positive")
        if r.eval_split not in ("test", "train"):
            raise ConfigError("eval_split must be 'test' or 'train'")
        if self.policy.family not in ("bigram", "prefix-tree"):
            raise ConfigError(f"unknown policy family {self.policy.family!r}")
        if self.ebm.form not in ("pointwise", "distributional"):
            raise ConfigError(f"unknown EBM form {self.ebm.form!r}")
        if self.space.max_len < 1 or not 0 <= self.space.min_len < self.space.max_len:
            raise ConfigError("need max_len >= 1 and 0 <= min_len < max_len")
        self.trainer.validate()
        return self

    def echo(self) -> str:
        lines = []
        for name in self.SECTIONS:
            sec = self._section(name)
            lines.append(f"[{name}]")
            for f in dataclasses.fields(sec):
                if f.name == "ziegler" or (name == "trainer" and f.name in ("seed", "iterations")):
                    continue
                lines.append(f"{f.name} = {_render(getattr(sec, f.name))}")
            lines.append("")
        return "\n".join(lines)

    def digest(self) -> str:
        return hashlib.sha256(self.echo().encode()).hexdigest()


def _render(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _convert(kind: type, raw: str, where: str):
    raw = raw.strip()
    try:
        if kind is bool:
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
    except ValueError:
        raise ConfigError(f"{where}: cannot read {raw!r} as {kind.__name__}") from None
    return raw


def parse_config(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    cfg = ExperimentConfig()
    for sec in parser.sections():
        for key, raw in parser.items(sec):
            cfg.set(f"{sec}.{key}", raw)
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)


def resolve_out_dir(cfg: ExperimentConfig, override: str | None = None) -> str:
    """CLI flag, then the ``CDPG_OUT_DIR`` environment variable, then the config."""
    return override or os.environ.get(OUT_DIR_ENV) or cfg.run.out
