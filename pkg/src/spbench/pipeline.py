"""Pipeline stages with on-disk artifacts.

Layout under the output directory::

    raw/synthetic.csv                 (only when data.path = synthetic)
    prepared/interactions.csv users.csv items.csv manifest.json
    shifted/interactions.csv users.csv items.csv relabel.csv manifest.json
    splits/d0.csv d1_train.csv d1_test.csv d2_train.csv d2_test.csv manifest.json
    run/report.json ranks/*.csv losses/*.csv
    report/report.json table.csv heatmap_<algorithm>.csv report.txt

Each stage reads only the previous stage's artifacts, so running the stages
one by one gives the same files as running them all at once.
"""

from __future__ import annotations

import json
import logging
import os

from . import __version__
from .config import ExperimentConfig
from .data import IdMap, InteractionLog, filter_min_per_period, parse_interactions, read_log, reindex_ids, sample_users, write_log
from .errors import ArtifactError, DataError
from .protocol import AlgorithmSpec, SpReport, run_experiment, write_losses, write_ranks, write_report
from .rng import derive_seed
from .shift import ShiftConfig, apply_relabel, build_relabel_map, extend_idmap
from .split import ByBoundaries, EqualCounts, ExperimentSplits, TemporalSplit, make_splits, split_temporal
from .synth import generate, to_csv

_log = logging.getLogger(__name__)

STAGES = ("prepare", "shift", "split", "run", "report")


def _dump(path, doc) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


def _load(path) -> dict:
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def _require(directory, stage, *names) -> None:
    missing = [n for n in names if not os.path.exists(os.path.join(directory, n))]
    if missing:
        raise ArtifactError(
            f"missing artifacts from stage '{stage}' in {directory} ({', '.join(missing)}); run `spbench {stage}` first"
        )


def shift_seed(config: ExperimentConfig) -> int:
    return config.shift_seed if config.shift_seed is not None else derive_seed(config.seed, "shift")


def prepare(config: ExperimentConfig, out: str) -> dict:
    """Read raw data, keep positive rows, sample users, drop users with too
    few interactions in either period, and re-index densely."""
    if config.is_synthetic:
        path = os.path.join(out, "raw", "synthetic.csv")
        os.makedirs(os.path.dirname(path), exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as f:
            to_csv(generate(config.synth_config()), f)
    else:
        path = config.data_path
    with open(path, newline="", encoding="utf-8") as f:
        log, idmap = parse_interactions(
            f, config.columns, config.rating_threshold, delimiter=config.delimiter, header=config.header
        )
    n_parsed = len(log)
    if config.sample_users:
        log = sample_users(log, config.sample_users, derive_seed(config.seed, "sample_users"))

    if config.split_mode == "equal_counts":
        t0_end, t1_end = split_temporal(log, EqualCounts(config.t0_end)).boundaries
    else:
        t0_end, t1_end = config.t0_end, config.t1_end
    log = filter_min_per_period(log, [(t0_end, t1_end), (t1_end, None)], config.min_per_period)
    if not len(log):
        raise DataError("no users left after the per-period minimum filter")
    log, idmap = reindex_ids(log, idmap)

    target = os.path.join(out, "prepared")
    os.makedirs(target, exist_ok=True)
    write_log(os.path.join(target, "interactions.csv"), log)
    idmap.write(target)
    manifest = {
        "stage": "prepare",
        "version": __version__,
        "source": "synthetic" if config.is_synthetic else os.path.basename(path),
        "parsed_interactions": n_parsed,
        "interactions": len(log),
        "users": idmap.n_users,
        "items": idmap.n_items,
        "boundaries": [t0_end, t1_end],
        "fingerprint": log.fingerprint(),
        "config": config.echo(),
    }
    _dump(os.path.join(target, "manifest.json"), manifest)
    return manifest


def shift(config: ExperimentConfig, out: str) -> dict:
    """Relabel a fraction of the post-shift period's items to fresh ids."""
    src = os.path.join(out, "prepared")
    _require(src, "prepare", "interactions.csv", "users.csv", "items.csv", "manifest.json")
    prep = _load(os.path.join(src, "manifest.json"))
    log, idmap = read_log(os.path.join(src, "interactions.csv")), IdMap.read(src)
    t0_end, t1_end = prep["boundaries"]
    parts = split_temporal(log, ByBoundaries(t0_end, t1_end))
    shift_cfg = ShiftConfig(config.shift_fraction, shift_seed(config))
    relabel = build_relabel_map(parts.d2.items, shift_cfg, idmap)
    d2 = apply_relabel(parts.d2, relabel)
    shifted = InteractionLog.union(parts.d0, parts.d1, d2)

    target = os.path.join(out, "shifted")
    os.makedirs(target, exist_ok=True)
    write_log(os.path.join(target, "interactions.csv"), shifted)
    extend_idmap(idmap, relabel).write(target)
    relabel.write(os.path.join(target, "relabel.csv"))
    manifest = {
        "stage": "shift",
        "boundaries": [t0_end, t1_end],
        "shift": {"fraction": shift_cfg.fraction, "seed": shift_cfg.seed},
        "relabeled_items": len(relabel),
        "d2_items": int(len(parts.d2.item_set())),
        "fresh_range": list(relabel.fresh_range) if relabel.fresh_range else None,
        "fingerprint": shifted.fingerprint(),
        "prepared_fingerprint": prep["fingerprint"],
    }
    _dump(os.path.join(target, "manifest.json"), manifest)
    return manifest


def split(config: ExperimentConfig, out: str) -> dict:
    """Temporal periods, leave-one-out holdouts, and persisted splits."""
    src = os.path.join(out, "shifted")
    _require(src, "shift", "interactions.csv", "manifest.json")
    sh = _load(os.path.join(src, "manifest.json"))
    log = read_log(os.path.join(src, "interactions.csv"))
    t0_end, t1_end = sh["boundaries"]
    periods = split_temporal(log, ByBoundaries(t0_end, t1_end))
    splits = make_splits(TemporalSplit(periods.d0, periods.d1, periods.d2, periods.boundaries))
    manifest = {
        "stage": "split",
        "boundaries": [t0_end, t1_end],
        "counts": {name: len(getattr(splits, name)) for name in
                   ("d0", "d1_train", "d1_test", "d2_train", "d2_test")},
        "shift": sh["shift"],
        "shifted_fingerprint": sh["fingerprint"],
        "prepared_fingerprint": sh["prepared_fingerprint"],
    }
    splits.write(os.path.join(out, "splits"), manifest)
    return manifest


def algorithm_specs(config: ExperimentConfig) -> list[AlgorithmSpec]:
    return [AlgorithmSpec(a, a, dict(config.hyperparameters.get(a, {}))) for a in config.algorithms]


def run(config: ExperimentConfig, out: str, jobs: int | None = None) -> SpReport:
    src = os.path.join(out, "splits")
    _require(src, "split", "d0.csv", "d1_train.csv", "d1_test.csv", "d2_train.csv", "d2_test.csv", "manifest.json")
    split_manifest = _load(os.path.join(src, "manifest.json"))
    splits = ExperimentSplits.read(src, pretrain=config.pretrain)
    manifest = {
        "dataset_fingerprint": split_manifest["prepared_fingerprint"],
        "shifted_fingerprint": split_manifest["shifted_fingerprint"],
        "shift": split_manifest["shift"],
        "split": {"boundaries": split_manifest["boundaries"], "pretrain": config.pretrain},
        "config": config.echo(),
    }
    report = run_experiment(
        splits,
        algorithm_specs(config),
        config.metrics,
        config.k,
        config.seed,
        seed_mode=config.seed_mode,
        jobs=jobs or config.jobs,
        manifest=manifest,
    )
    target = os.path.join(out, "run")
    os.makedirs(target, exist_ok=True)
    with open(os.path.join(target, "report.json"), "w", encoding="utf-8") as f:
        f.write(report.dumps())
    write_ranks(report, os.path.join(target, "ranks"))
    write_losses(report, os.path.join(target, "losses"))
    return report


def report(config: ExperimentConfig, out: str) -> list[str]:
    src = os.path.join(out, "run")
    _require(src, "run", "report.json")
    return write_report(SpReport.read(os.path.join(src, "report.json")), os.path.join(out, "report"))


def run_pipeline(config: ExperimentConfig, stage: str = "all", out: str | None = None, jobs: int | None = None):
    """Run one stage, or every stage in order for ``stage="all"``."""
    out = out or config.out
    os.makedirs(out, exist_ok=True)
    todo = STAGES if stage == "all" else (stage,)
    result = None
    for name in todo:
        _log.info("stage %s", name)
        if name == "prepare":
            result = prepare(config, out)
        elif name == "shift":
            result = shift(config, out)
        elif name == "split":
            result = split(config, out)
        elif name == "run":
            result = run(config, out, jobs)
        elif name == "report":
            result = report(config, out)
        else:
            raise ValueError(f"unknown stage {name!r}")
    return result
