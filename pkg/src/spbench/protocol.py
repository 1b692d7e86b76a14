"""The stability/plasticity experiment.

For each algorithm two models are fitted: a legacy model ``M1`` on the
pre-shift training data and a retrained model ``M2`` on pre- and post-shift
training data. Both are scored on both holdouts, giving four scores per
metric::

                D1 holdout   D2 holdout
    M1          S11          S12
    M2          S21          S22

    stability  = 1 - (S11 - S21)    in [0, 2], not clipped
    plasticity = S22 - S12          in [-1, 1]
"""

from __future__ import annotations

import csv
import json
import logging
import os
from dataclasses import dataclass, field
from typing import Sequence

from . import __version__
from .errors import DataError, SpbenchError
from .metrics import EvalOutcome, evaluate_holdouts, metric_key
from .models import make_model
from .models.base import build_candidate_catalog
from .rng import derive_seed
from .split import ExperimentSplits

_log = logging.getLogger(__name__)

SCHEMA = 1
TABLE_HEADER = ("algorithm", "metric", "k", "S11", "S12", "S21", "S22", "stability", "plasticity")
MODELS = ("M1", "M2")
HOLDOUTS = ("D1", "D2")


@dataclass(frozen=True)
class ScoreQuad:
    s11: float
    s12: float
    s21: float
    s22: float
    metric: str = "hit_ratio"
    k: int = 20

    def __post_init__(self):
        for name in ("s11", "s12", "s21", "s22"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name}={value} outside [0, 1]")

    def score(self, model: str, holdout: str) -> float:
        return getattr(self, f"s{model[-1]}{holdout[-1]}")


def stability(quad: ScoreQuad) -> float:
    return 1 - (quad.s11 - quad.s21)


def plasticity(quad: ScoreQuad) -> float:
    return quad.s22 - quad.s12


@dataclass(frozen=True)
class AlgorithmSpec:
    """One report row: a display name, an algorithm id and its settings."""

    name: str
    algorithm_id: str
    hyperparameters: dict = field(default_factory=dict)


@dataclass
class AlgorithmResult:
    name: str
    algorithm_id: str
    hyperparameters: dict
    seeds: dict[str, int]
    quads: list[ScoreQuad] = field(default_factory=list)
    error: str | None = None
    epoch_losses: dict[str, list[float]] = field(default_factory=dict)
    outcomes: dict[tuple[str, str], EvalOutcome] = field(default_factory=dict, repr=False)

    @property
    def ok(self) -> bool:
        return self.error is None

    def to_json(self) -> dict:
        return {
            "algorithm": self.name,
            "algorithm_id": self.algorithm_id,
            "hyperparameters": self.hyperparameters,
            "seeds": self.seeds,
            "status": "ok" if self.ok else "failed",
            "error": self.error,
            "scores": [
                {
                    "metric": q.metric,
                    "k": q.k,
                    "S11": q.s11,
                    "S12": q.s12,
                    "S21": q.s21,
                    "S22": q.s22,
                    "stability": stability(q),
                    "plasticity": plasticity(q),
                }
                for q in self.quads
            ],
        }


@dataclass
class SpReport:
    results: list[AlgorithmResult]
    manifest: dict = field(default_factory=dict)

    def result(self, name: str) -> AlgorithmResult:
        for r in self.results:
            if r.name == name:
                return r
        raise KeyError(name)

    def direction_checks(self) -> list[dict]:
        """Whether both latent-factor models beat UKNN on plasticity."""
        by_id = {r.algorithm_id: r for r in self.results if r.ok}
        if "uknn" not in by_id:
            return []
        checks = []
        for q in by_id["uknn"].quads:
            entry = {"metric": q.metric, "k": q.k, "uknn_plasticity": plasticity(q)}
            verdicts = []
            for other in ("bprmf", "neumf"):
                if other not in by_id:
                    continue
                match = [o for o in by_id[other].quads if (o.metric, o.k) == (q.metric, q.k)]
                if match:
                    holds = plasticity(match[0]) > plasticity(q)
                    entry[f"{other}_plasticity"] = plasticity(match[0])
                    entry[f"{other}_gt_uknn"] = holds
                    verdicts.append(holds)
            if verdicts:
                entry["holds"] = all(verdicts)
                checks.append(entry)
        return checks

    def to_json(self) -> dict:
        return {
            "schema": SCHEMA,
            "manifest": self.manifest,
            "results": [r.to_json() for r in self.results],
            "direction_check": self.direction_checks(),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, doc: dict) -> "SpReport":
        if doc.get("schema") != SCHEMA:
            raise DataError(f"unsupported report schema {doc.get('schema')!r}")
        results = []
        for row in doc["results"]:
            quads = [
                ScoreQuad(s["S11"], s["S12"], s["S21"], s["S22"], s["metric"], s["k"]) for s in row["scores"]
            ]
            results.append(
                AlgorithmResult(
                    row["algorithm"], row["algorithm_id"], row["hyperparameters"], row["seeds"], quads, row["error"]
                )
            )
        return cls(results, doc["manifest"])

    @classmethod
    def read(cls, path) -> "SpReport":
        with open(path, encoding="utf-8") as f:
            return cls.from_json(json.load(f))


def model_seeds(master_seed: int, name: str, seed_mode: str = "independent") -> dict[str, int]:
    """Per-model seeds. ``independent`` gives M1 and M2 separate streams (a
    genuinely fresh retraining run); ``shared`` gives both the same seed, so
    identical training sets yield identical models."""
    if seed_mode == "independent":
        return {m: derive_seed(master_seed, "model", name, m) for m in MODELS}
    if seed_mode == "shared":
        seed = derive_seed(master_seed, "model", name)
        return {m: seed for m in MODELS}
    raise ValueError(f"seed_mode must be 'independent' or 'shared', not {seed_mode!r}")


def run_experiment(
    splits: ExperimentSplits,
    algorithms: Sequence[AlgorithmSpec],
    metrics: Sequence[str] = ("hit_ratio",),
    k: int | Sequence[int] = 20,
    seed: int = 0,
    *,
    seed_mode: str = "independent",
    jobs: int = 1,
    manifest: dict | None = None,
) -> SpReport:
    """Fit M1/M2 per algorithm, score both on both holdouts, and collect the
    score quads. A failing algorithm gets its error recorded; the others
    still run."""
    if not algorithms:
        raise ValueError("at least one algorithm is required")
    names = [a.name for a in algorithms]
    if len(set(names)) != len(names):
        raise ValueError(f"algorithm names must be unique: {names}")
    ks = [k] if isinstance(k, int) else sorted(set(k))
    catalog = build_candidate_catalog(splits)
    holdouts = {"D1": splits.d1_test, "D2": splits.d2_test}
    train = {"M1": splits.m1_train, "M2": splits.m2_train}

    results = []
    for spec in algorithms:
        seeds = model_seeds(seed, spec.name, seed_mode)
        result = AlgorithmResult(spec.name, spec.algorithm_id, dict(spec.hyperparameters), seeds)
        try:
            for m in MODELS:
                _log.info("fitting %s %s on %d interactions", spec.name, m, len(train[m]))
                hp = {k_: v for k_, v in spec.hyperparameters.items() if k_ != "seed"}
                model = make_model(spec.algorithm_id, **hp, seed=seeds[m]).fit(train[m])
                result.hyperparameters = {k_: v for k_, v in model.hyperparameters.items() if k_ != "seed"}
                result.epoch_losses[m] = list(model.epoch_losses)
                for h, oc in evaluate_holdouts(model, holdouts, catalog, metrics, ks, jobs).items():
                    result.outcomes[(m, h)] = oc
            for kk in ks:
                for name in metrics:
                    key = metric_key(name, kk)
                    s = {(m, h): result.outcomes[(m, h)].aggregate[key] for m in MODELS for h in HOLDOUTS}
                    result.quads.append(
                        ScoreQuad(s["M1", "D1"], s["M1", "D2"], s["M2", "D1"], s["M2", "D2"], name, kk)
                    )
        except (SpbenchError, ValueError, FloatingPointError) as exc:
            _log.error("%s failed: %s", spec.name, exc)
            result.error = f"{type(exc).__name__}: {exc}"
            result.quads = []
        results.append(result)

    full_manifest = {
        "tool": "spbench",
        "version": __version__,
        "master_seed": seed,
        "seed_mode": seed_mode,
        "metrics": list(metrics),
        "k": ks,
        "catalog_size": int(len(catalog)),
        "counts": {name: len(getattr(splits, name)) for name in
                   ("d0", "d1_train", "d1_test", "d2_train", "d2_test", "m1_train", "m2_train")},
    }
    full_manifest.update(manifest or {})
    return SpReport(results, full_manifest)


def _fmt(x: float) -> str:
    return repr(float(x))


def write_report(report: SpReport, out_dir) -> list[str]:
    """Write the JSON report, the stability/plasticity table (CSV), one
    model-by-holdout score grid per algorithm (CSV) and a plain-text
    summary. Returns the written paths."""
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise SpbenchError(f"cannot create report directory {out_dir}: {exc}") from exc
    written = []

    path = os.path.join(out_dir, "report.json")
    with open(path, "w", encoding="utf-8") as f:
        f.write(report.dumps())
    written.append(path)

    path = os.path.join(out_dir, "table.csv")
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(TABLE_HEADER)
        for r in report.results:
            for q in r.quads:
                w.writerow((r.name, q.metric, q.k, *map(_fmt, (q.s11, q.s12, q.s21, q.s22)),
                            _fmt(stability(q)), _fmt(plasticity(q))))
    written.append(path)

    for r in report.results:
        if not r.ok:
            continue
        path = os.path.join(out_dir, f"heatmap_{r.name}.csv")
        with open(path, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(("model", "holdout", "metric", "k", "score"))
            for q in r.quads:
                for m in MODELS:
                    for h in HOLDOUTS:
                        w.writerow((m, h, q.metric, q.k, _fmt(q.score(m, h))))
        written.append(path)

    path = os.path.join(out_dir, "report.txt")
    with open(path, "w", encoding="utf-8") as f:
        f.write(format_report(report))
    written.append(path)
    return written


def format_report(report: SpReport) -> str:
    lines = []
    for r in report.results:
        if not r.ok:
            lines.append(f"{r.name}: FAILED ({r.error})")
            lines.append("")
            continue
        for q in r.quads:
            lines.append(f"{r.name}  {q.metric}@{q.k}")
            lines.append(f"          {'D1 test':>9} {'D2 test':>9}")
            lines.append(f"    M1    {q.s11:9.4f} {q.s12:9.4f}")
            lines.append(f"    M2    {q.s21:9.4f} {q.s22:9.4f}")
            lines.append(f"    stability {stability(q):.4f}   plasticity {plasticity(q):.4f}")
            lines.append("")
    header = f"{'algorithm':<12} {'metric':<14} {'stability':>10} {'plasticity':>10}"
    lines.append(header)
    lines.append("-" * len(header))
    for r in report.results:
        for q in r.quads:
            lines.append(f"{r.name:<12} {q.metric + '@' + str(q.k):<14} {stability(q):10.4f} {plasticity(q):10.4f}")
    for check in report.direction_checks():
        verdict = "holds" if check["holds"] else "does NOT hold"
        lines.append(
            f"plasticity direction (latent-factor models > uknn) on {check['metric']}@{check['k']}: {verdict}"
        )
    return "\n".join(lines) + "\n"


def write_ranks(report: SpReport, out_dir) -> list[str]:
    """Per-user truth ranks, one CSV per (algorithm, model, holdout)."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for r in report.results:
        for (m, h), oc in sorted(r.outcomes.items()):
            path = os.path.join(out_dir, f"{r.name}_{m}_{h}.csv")
            oc.write_ranks(path)
            written.append(path)
    return written


def write_losses(report: SpReport, out_dir) -> list[str]:
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for r in report.results:
        for m, losses in sorted(r.epoch_losses.items()):
            if not losses:
                continue
            path = os.path.join(out_dir, f"{r.name}_{m}.csv")
            with open(path, "w", newline="", encoding="utf-8") as f:
                w = csv.writer(f, lineterminator="\n")
                w.writerow(("epoch", "mean_loss"))
                w.writerows((e + 1, _fmt(v)) for e, v in enumerate(losses))
            written.append(path)
    return written
