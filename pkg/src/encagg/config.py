"""Experiment configuration and its flat ``key = value`` text format.

One setting per line, ``#`` starts a comment, values are JSON literals
(numbers, true/false, quoted strings) or bare words for strings::

    # fidelity run
    aggregator = encagg
    attack = none
    rounds = 300
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, fields
from pathlib import Path

from .attacks import ATTACK_KINDS, DEFAULT_PARAMS, AttackSpec
from .errors import ConfigError

AGGREGATORS = ("encagg", "mean", "krum", "median", "trimmed_mean", "fltrust")
TASKS = ("logistic_classification", "linear_regression")


@dataclass
class ExperimentConfig:
    # task
    task: str = "logistic_classification"
    d: int = 20
    samples_per_client: int = 200
    noise_std: float = 0.5
    heterogeneity: float = 1.0
    # federation
    n: int = 20
    k: int = 4
    malicious_ratio: float = 0.0
    poison_prob: float = 0.9
    rounds: int = 300
    epochs: int = 1
    learning_rate: float = 0.5
    batch_size: int = 4
    # aggregation
    aggregator: str = "encagg"
    min_samples: int = 5
    r: float = 0.2
    gamma: float = 3.0
    n_gen: int = 100
    use_generator: bool = True
    generator_lr: float = 1e-3
    krum_f: int = -1  # -1: use the number of malicious clients
    trim_fraction: float = 0.2
    # attack
    attack: str = "none"
    attack_scale: float = 10.0
    attack_std: float = 1.0
    attack_z: float = 1.5
    attack_search_iters: int = 50
    attack_inplane_frac: float = 0.5
    attack_ortho_max: float = 5.0
    attack_adaptive_iters: int = 8
    collusion: bool = True
    seed: int = 0

    @property
    def total_rounds(self) -> int:
        return self.rounds * self.epochs

    @property
    def n_malicious(self) -> int:
        return int(math.floor(self.malicious_ratio * self.n + 1e-9))

    def attack_spec(self) -> AttackSpec:
        names = {
            "scale": "attack_scale",
            "std": "attack_std",
            "z": "attack_z",
            "search_iters": "attack_search_iters",
            "inplane_frac": "attack_inplane_frac",
            "ortho_max": "attack_ortho_max",
        }
        if self.attack == "adaptive_subspace":
            names["search_iters"] = "attack_adaptive_iters"
        params = {key: getattr(self, names[key]) for key in DEFAULT_PARAMS[self.attack]}
        return AttackSpec(self.attack, params, self.collusion)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes).validate()

    def validate(self) -> "ExperimentConfig":
        def bad(key, msg):
            raise ConfigError(msg, key=key)

        if self.task not in TASKS:
            bad("task", f"must be one of {TASKS}")
        if self.aggregator not in AGGREGATORS:
            bad("aggregator", f"must be one of {AGGREGATORS}")
        if self.attack not in ATTACK_KINDS:
            bad("attack", f"must be one of {ATTACK_KINDS}")
        if self.d < 2:
            bad("d", "must be >= 2")
        if self.noise_std < 0:
            bad("noise_std", "must be >= 0")
        if self.heterogeneity < 0:
            bad("heterogeneity", "must be >= 0")
        if self.samples_per_client < 5:
            bad("samples_per_client", "must be >= 5")
        if self.n < 2:
            bad("n", "must be >= 2")
        if not 0.0 <= self.malicious_ratio <= 1.0:
            bad("malicious_ratio", "must be in [0,1]")
        if not 0.0 <= self.poison_prob <= 1.0:
            bad("poison_prob", "must be in [0,1]")
        benign = self.n - self.n_malicious
        if self.aggregator == "encagg" and not 2 <= self.k <= benign / 2:
            bad("k", f"must satisfy 2 <= k <= b/2 with b={benign} benign clients")
        if self.k < 0 or self.k > benign:
            bad("k", "cannot exceed the number of benign clients")
        if self.rounds < 1 or self.epochs < 1:
            bad("rounds", "rounds and epochs must be >= 1")
        if not self.learning_rate > 0:
            bad("learning_rate", "must be positive")
        if self.batch_size < 1:
            bad("batch_size", "must be >= 1")
        if self.min_samples < 1:
            bad("min_samples", "must be >= 1")
        if not 0.0 < self.r < 1.0:
            bad("r", "r must be in (0,1)")
        if not self.gamma > 0:
            bad("gamma", "must be positive")
        if self.n_gen < 0:
            bad("n_gen", "must be >= 0")
        if not self.generator_lr > 0:
            bad("generator_lr", "must be positive")
        if not 0.0 <= self.trim_fraction < 0.5:
            bad("trim_fraction", "must be in [0, 0.5)")
        for key in ("attack_scale", "attack_std", "attack_z", "attack_inplane_frac", "attack_ortho_max"):
            if not getattr(self, key) >= 0:
                bad(key, "must be >= 0")
        return self


_FIELDS = {f.name: f for f in fields(ExperimentConfig)}
_DEFAULTS = ExperimentConfig()


def _coerce(key, raw, line=None):
    expected = type(getattr(_DEFAULTS, key))
    if expected is bool:
        if isinstance(raw, bool):
            return raw
        raise ConfigError(f"expected true/false, got {raw!r}", key, line)
    if expected is int:
        if isinstance(raw, bool) or not isinstance(raw, (int, float)) or float(raw) != int(raw):
            raise ConfigError(f"expected an integer, got {raw!r}", key, line)
        return int(raw)
    if expected is float:
        if isinstance(raw, bool) or not isinstance(raw, (int, float)):
            raise ConfigError(f"expected a number, got {raw!r}", key, line)
        return float(raw)
    if not isinstance(raw, str):
        raise ConfigError(f"expected a string, got {raw!r}", key, line)
    return raw


def parse_text(text: str) -> ExperimentConfig:
    values = {}
    for lineno, raw_line in enumerate(text.splitlines(), 1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", line=lineno)
        key, _, value = (part.strip() for part in line.partition("="))
        if key not in _FIELDS:
            raise ConfigError("unknown key", key, lineno)
        if key in values:
            raise ConfigError("duplicate key", key, lineno)
        try:
            parsed = json.loads(value)
        except json.JSONDecodeError:
            parsed = value
        values[key] = _coerce(key, parsed, lineno)
    try:
        return ExperimentConfig(**values).validate()
    except ConfigError as exc:
        if exc.key is not None and exc.line is None:
            for lineno, raw_line in enumerate(text.splitlines(), 1):
                if raw_line.split("#", 1)[0].partition("=")[0].strip() == exc.key:
                    raise ConfigError(exc.message, exc.key, lineno) from None
        raise


def parse_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    return parse_text(path.read_text(encoding="utf-8"))


def dump_config(config: ExperimentConfig) -> str:
    """Canonical text form: every field, in declaration order."""
    lines = []
    for f in fields(ExperimentConfig):
        v = getattr(config, f.name)
        lines.append(f"{f.name} = {json.dumps(v)}")
    return "\n".join(lines) + "\n"


def config_hash(config: ExperimentConfig) -> str:
    return hashlib.sha256(dump_config(config).encode("utf-8")).hexdigest()
