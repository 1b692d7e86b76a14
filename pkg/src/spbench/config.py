"""Experiment configuration, read from an INI file (``configparser``).

Sections and keys, with defaults::

    [data]
    path = synthetic          ; a CSV path, or "synthetic" for the [synth] generator
    delimiter = ,
    header = true
    user_col = user_id
    item_col = item_id
    timestamp_col = timestamp
    rating_col = rating       ; empty = no rating column
    rating_threshold = 5      ; empty = keep every row
    sample_users = 0          ; 0 = keep all users

    [split]
    mode = boundaries         ; or equal_counts
    t0_end = 2013-01-01       ; end of the pre-training period (empty = none)
    t1_end = 2014-01-01       ; end of the pre-shift period (boundaries mode)
    min_per_period = 2
    pretrain = true           ; false = drop D0 from both training sets

    [shift]
    fraction = 0.5
    seed =                    ; empty = derived from the master seed

    [experiment]
    seed = 42
    algorithms = uknn, bprmf, neumf
    metrics = hit_ratio, ndcg, coverage
    k = 20                    ; comma-separated list allowed
    seed_mode = independent   ; or shared
    out = spbench-out
    jobs = 1

    [uknn] / [bprmf] / [neumf]   ; hyperparameters, see the model classes
    [synth]                      ; generator settings, see SynthConfig

Relative data paths are resolved against ``$SPBENCH_DATA_DIR`` when set,
otherwise against the config file's directory.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import asdict, dataclass, field
from typing import Any

from .data import ColumnSpec, parse_timestamp
from .errors import ConfigError
from .metrics import METRICS
from .models import ALGORITHMS
from .models.bpr import BprConfig
from .models.neumf import NeuMfConfig
from .synth import SynthConfig

SYNTHETIC = "synthetic"

_MODEL_DEFAULTS = {
    "uknn": {"k_neighbors": 50},
    "bprmf": {k: v for k, v in asdict(BprConfig()).items() if k != "seed"},
    "neumf": {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(NeuMfConfig()).items() if k != "seed"},
}


@dataclass
class ExperimentConfig:
    data_path: str = SYNTHETIC
    delimiter: str = ","
    header: bool = True
    user_col: str = "user_id"
    item_col: str = "item_id"
    timestamp_col: str = "timestamp"
    rating_col: str | None = "rating"
    rating_threshold: float | None = 5.0
    sample_users: int = 0

    split_mode: str = "boundaries"
    t0_end: int | None = parse_timestamp("2013-01-01")
    t1_end: int | None = parse_timestamp("2014-01-01")
    min_per_period: int = 2
    pretrain: bool = True

    shift_fraction: float = 0.5
    shift_seed: int | None = None

    seed: int = 42
    algorithms: list[str] = field(default_factory=lambda: ["uknn", "bprmf", "neumf"])
    metrics: list[str] = field(default_factory=lambda: ["hit_ratio", "ndcg", "coverage"])
    k: list[int] = field(default_factory=lambda: [20])
    seed_mode: str = "independent"
    out: str = "spbench-out"
    jobs: int = 1

    hyperparameters: dict[str, dict[str, Any]] = field(
        default_factory=lambda: {a: dict(v) for a, v in _MODEL_DEFAULTS.items()}
    )
    synth: dict[str, Any] = field(default_factory=lambda: SynthConfig().as_dict())

    @property
    def columns(self) -> ColumnSpec:
        return ColumnSpec(self.user_col, self.item_col, self.timestamp_col, self.rating_col)

    @property
    def is_synthetic(self) -> bool:
        return self.data_path == SYNTHETIC

    def synth_config(self) -> SynthConfig:
        return SynthConfig(**self.synth)

    def validate(self, check_paths: bool = True) -> "ExperimentConfig":
        """Raise :class:`ConfigError` listing every violation found."""
        errors = []
        if check_paths and not self.is_synthetic and not os.path.isfile(self.data_path):
            errors.append(f"data.path: file not found: {self.data_path}")
        if self.sample_users < 0:
            errors.append("data.sample_users must be >= 0")
        if self.split_mode not in ("boundaries", "equal_counts"):
            errors.append(f"split.mode must be 'boundaries' or 'equal_counts', not {self.split_mode!r}")
        if self.split_mode == "boundaries":
            if self.t1_end is None:
                errors.append("split.t1_end is required in boundaries mode")
            elif self.t0_end is not None and self.t0_end >= self.t1_end:
                errors.append("split.t0_end must precede split.t1_end")
        if self.min_per_period < 1:
            errors.append("split.min_per_period must be positive")
        if not 0.0 <= self.shift_fraction <= 1.0:
            errors.append(f"shift.fraction must lie in [0, 1], got {self.shift_fraction}")
        if not self.algorithms:
            errors.append("experiment.algorithms must name at least one algorithm")
        for a in self.algorithms:
            if a not in ALGORITHMS:
                errors.append(f"experiment.algorithms: unknown algorithm {a!r}")
        for m in self.metrics:
            if m not in METRICS:
                errors.append(f"experiment.metrics: unknown metric {m!r}")
        if not self.k or min(self.k) < 1:
            errors.append("experiment.k values must be positive")
        if self.seed_mode not in ("independent", "shared"):
            errors.append("experiment.seed_mode must be 'independent' or 'shared'")
        if self.jobs < 1:
            errors.append("experiment.jobs must be positive")
        for algo, hp in self.hyperparameters.items():
            try:
                ALGORITHMS[algo](**hp)
            except (TypeError, ValueError) as exc:
                errors.append(f"[{algo}]: {exc}")
        try:
            self.synth_config()
        except (TypeError, ValueError) as exc:
            errors.append(f"[synth]: {exc}")
        if errors:
            raise ConfigError(errors)
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    def echo(self) -> dict:
        """Resolved settings that determine results; output location and
        worker count are left out since they cannot change them."""
        doc = self.to_dict()
        del doc["out"], doc["jobs"]
        if not self.is_synthetic:
            doc["data_path"] = os.path.basename(self.data_path)
        return doc


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _list(text: str) -> list[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


def _optional(conv):
    def inner(text):
        return None if not text.strip() else conv(text)

    return inner


def _coerce(value: str, like):
    if isinstance(like, bool):
        return _bool(value)
    if isinstance(like, int):
        return int(value)
    if isinstance(like, float):
        return float(value)
    if isinstance(like, (list, tuple)):
        return [int(v) for v in _list(value)]
    return value


_KEYS = {
    ("data", "path"): ("data_path", str),
    ("data", "delimiter"): ("delimiter", str),
    ("data", "header"): ("header", _bool),
    ("data", "user_col"): ("user_col", str),
    ("data", "item_col"): ("item_col", str),
    ("data", "timestamp_col"): ("timestamp_col", str),
    ("data", "rating_col"): ("rating_col", _optional(str)),
    ("data", "rating_threshold"): ("rating_threshold", _optional(float)),
    ("data", "sample_users"): ("sample_users", int),
    ("split", "mode"): ("split_mode", str),
    ("split", "t0_end"): ("t0_end", _optional(parse_timestamp)),
    ("split", "t1_end"): ("t1_end", _optional(parse_timestamp)),
    ("split", "min_per_period"): ("min_per_period", int),
    ("split", "pretrain"): ("pretrain", _bool),
    ("shift", "fraction"): ("shift_fraction", float),
    ("shift", "seed"): ("shift_seed", _optional(int)),
    ("experiment", "seed"): ("seed", int),
    ("experiment", "algorithms"): ("algorithms", _list),
    ("experiment", "metrics"): ("metrics", _list),
    ("experiment", "k"): ("k", lambda t: [int(v) for v in _list(t)]),
    ("experiment", "seed_mode"): ("seed_mode", str),
    ("experiment", "out"): ("out", str),
    ("experiment", "jobs"): ("jobs", int),
}


def load_config(path: str | None = None, text: str | None = None) -> ExperimentConfig:
    """Parse a config file (or string) into an :class:`ExperimentConfig`.

    Unknown sections or keys and unparseable values are collected and
    reported together.
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    if path is not None:
        try:
            with open(path, encoding="utf-8") as f:
                parser.read_file(f)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    elif text is not None:
        parser.read_string(text)

    cfg = ExperimentConfig()
    errors = []
    for section in parser.sections():
        for key, raw in parser.items(section):
            if section in _MODEL_DEFAULTS:
                defaults = _MODEL_DEFAULTS[section]
                if key not in defaults:
                    errors.append(f"[{section}] unknown key {key!r}")
                    continue
                try:
                    cfg.hyperparameters[section][key] = _coerce(raw, defaults[key])
                except ValueError as exc:
                    errors.append(f"[{section}] {key}: {exc}")
            elif section == "synth":
                defaults = SynthConfig().as_dict()
                if key not in defaults:
                    errors.append(f"[synth] unknown key {key!r}")
                    continue
                try:
                    cfg.synth[key] = _coerce(raw, defaults[key])
                except ValueError as exc:
                    errors.append(f"[synth] {key}: {exc}")
            elif (section, key) in _KEYS:
                attr, conv = _KEYS[section, key]
                try:
                    setattr(cfg, attr, conv(raw))
                except ValueError as exc:
                    errors.append(f"[{section}] {key}: {exc}")
            else:
                errors.append(f"[{section}] unknown key {key!r}")
    if errors:
        try:
            cfg.validate(check_paths=False)
        except ConfigError as exc:
            errors.extend(exc.violations)
        raise ConfigError(errors)

    if not cfg.is_synthetic and not os.path.isabs(cfg.data_path):
        base = os.environ.get("SPBENCH_DATA_DIR") or (os.path.dirname(os.path.abspath(path)) if path else os.getcwd())
        cfg.data_path = os.path.join(base, cfg.data_path)
    return cfg
