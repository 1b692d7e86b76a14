"""Temporal periods, leave-one-out holdouts and the two training sets.

Periods are half-open: an interaction at exactly ``t0_end`` belongs to D1,
one at ``t1_end`` to D2.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .data import InteractionLog, read_log, write_log
from .errors import ArtifactError, DataError

SPLIT_FILES = ("d0", "d1_train", "d1_test", "d2_train", "d2_test")


@dataclass(frozen=True)
class ByBoundaries:
    """D0 = ``[.., t0_end)``, D1 = ``[t0_end, t1_end)``, D2 = ``[t1_end, ..]``.
    With ``t0_end=None`` there is no pre-training period."""

    t0_end: int | None
    t1_end: int


@dataclass(frozen=True)
class EqualCounts:
    """Halve everything after ``t0_end`` by position; D1 gets the odd one,
    and also any rows sharing its last timestamp. With ``t0_end=None``
    there is no pre-training period."""

    t0_end: int | None = None


@dataclass(frozen=True)
class TemporalSplit:
    d0: InteractionLog
    d1: InteractionLog
    d2: InteractionLog
    boundaries: tuple[int | None, int]


@dataclass(frozen=True)
class ExperimentSplits:
    d0: InteractionLog
    d1_train: InteractionLog
    d1_test: InteractionLog
    d2_train: InteractionLog
    d2_test: InteractionLog
    m1_train: InteractionLog
    m2_train: InteractionLog

    @classmethod
    def build(cls, d0, d1_train, d1_test, d2_train, d2_test, *, pretrain: bool = True):
        base = d0 if pretrain else InteractionLog.empty()
        m1, m2 = assemble_training_sets(base, d1_train, d2_train)
        return cls(d0, d1_train, d1_test, d2_train, d2_test, m1, m2)

    def write(self, directory, manifest: dict | None = None) -> None:
        os.makedirs(directory, exist_ok=True)
        for name in SPLIT_FILES:
            write_log(os.path.join(directory, f"{name}.csv"), getattr(self, name))
        if manifest is not None:
            with open(os.path.join(directory, "manifest.json"), "w", encoding="utf-8") as f:
                json.dump(manifest, f, indent=2, sort_keys=True)
                f.write("\n")

    @classmethod
    def read(cls, directory, *, pretrain: bool = True) -> "ExperimentSplits":
        missing = [n for n in SPLIT_FILES if not os.path.exists(os.path.join(directory, f"{n}.csv"))]
        if missing:
            raise ArtifactError(f"split artifacts missing in {directory}: {', '.join(missing)}")
        logs = [read_log(os.path.join(directory, f"{n}.csv")) for n in SPLIT_FILES]
        return cls.build(*logs, pretrain=pretrain)


def split_temporal(log: InteractionLog, mode) -> TemporalSplit:
    """Cut a sorted log into D0 (pre-training), D1 and D2."""
    if isinstance(mode, ByBoundaries):
        if mode.t0_end is not None and mode.t0_end >= mode.t1_end:
            raise ValueError("t0_end must precede t1_end")
        if mode.t0_end is None:
            d0 = InteractionLog.empty()
        else:
            d0 = log.select(log.in_interval(None, mode.t0_end))
        d1 = log.select(log.in_interval(mode.t0_end, mode.t1_end))
        d2 = log.select(log.in_interval(mode.t1_end, None))
        boundaries = (mode.t0_end, mode.t1_end)
    elif isinstance(mode, EqualCounts):
        pre = log.in_interval(None, mode.t0_end) if mode.t0_end is not None else np.zeros(len(log), bool)
        d0 = log.select(pre)
        rest = log.select(~pre)
        half = (len(rest) + 1) // 2
        if not half:
            raise DataError("temporal split produced an empty D1")
        # rows tied with the last D1 timestamp stay in D1, so the cut is a
        # plain time boundary and re-splitting by it gives the same periods
        t1_end = int(rest.timestamps[half - 1]) + 1
        d1 = rest.select(rest.in_interval(None, t1_end))
        d2 = rest.select(rest.in_interval(t1_end, None))
        boundaries = (mode.t0_end, t1_end)
    else:
        raise TypeError(f"unknown split mode {mode!r}")
    if not len(d1):
        raise DataError("temporal split produced an empty D1")
    if not len(d2):
        raise DataError("temporal split produced an empty D2")
    return TemporalSplit(d0, d1, d2, boundaries)


def leave_one_out(period: InteractionLog) -> tuple[InteractionLog, InteractionLog]:
    """Hold out each user's last interaction (latest timestamp; on ties the
    later one in log order)."""
    if not len(period):
        return period, period
    n = len(period)
    # the log is time-sorted, so the last row per user is its holdout
    reversed_users = period.users[::-1]
    uniq, first_rev, counts = np.unique(reversed_users, return_index=True, return_counts=True)
    if np.any(counts < 2):
        bad = uniq[counts < 2][:5].tolist()
        raise DataError(f"users with a single interaction in period (filter upstream): {bad}")
    test_pos = n - 1 - first_rev
    is_test = np.zeros(n, dtype=bool)
    is_test[test_pos] = True
    return period.select(~is_test), period.select(is_test)


def assemble_training_sets(
    d0: InteractionLog, d1_train: InteractionLog, d2_train: InteractionLog
) -> tuple[InteractionLog, InteractionLog]:
    """Legacy set ``d0 + d1_train`` and retraining set ``d0 + d1_train + d2_train``."""
    return InteractionLog.union(d0, d1_train), InteractionLog.union(d0, d1_train, d2_train)


def make_splits(split: TemporalSplit, *, pretrain: bool = True) -> ExperimentSplits:
    d1_train, d1_test = leave_one_out(split.d1)
    d2_train, d2_test = leave_one_out(split.d2)
    return ExperimentSplits.build(split.d0, d1_train, d1_test, d2_train, d2_test, pretrain=pretrain)
