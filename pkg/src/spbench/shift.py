"""Artificial concept shift: relabel a random fraction of the post-shift
period's items to brand-new item indices.

Every occurrence of a selected item is rewritten to the same fresh index, so
to a training algorithm the relabeled items look like new items with the
original items' interaction patterns.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from typing import Iterable

import numpy as np

from .data import IdMap, InteractionLog
from .errors import DataError
from .rng import make_rng

SHIFTED_SUFFIX = "#shifted"


def round_half_up(fraction: float, n: int) -> int:
    """``fraction * n`` rounded half-up, computed on the decimal form of
    ``fraction`` so binary representation error cannot flip a tie.

    >>> round_half_up(0.5, 7), round_half_up(0.5, 10), round_half_up(0.25, 2)
    (4, 5, 1)
    """
    value = Decimal(repr(float(fraction))) * n
    return int(value.quantize(Decimal(1), rounding=ROUND_HALF_UP))


@dataclass(frozen=True)
class ShiftConfig:
    fraction: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.fraction <= 1.0:
            raise ValueError(f"shift fraction must lie in [0, 1], got {self.fraction}")


@dataclass(frozen=True)
class RelabelMap:
    """Original item index -> fresh item index, ordered by original index."""

    entries: dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        fresh = list(self.entries.values())
        if len(set(fresh)) != len(fresh):
            raise DataError("relabel map is not injective")

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def fresh_range(self) -> tuple[int, int] | None:
        if not self.entries:
            return None
        fresh = self.entries.values()
        return min(fresh), max(fresh)

    def fresh_items(self) -> np.ndarray:
        return np.array(sorted(self.entries.values()), dtype=np.int64)

    def write(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(("original_index", "fresh_index"))
            w.writerows(sorted(self.entries.items()))

    @classmethod
    def read(cls, path) -> "RelabelMap":
        with open(path, newline="", encoding="utf-8") as f:
            rows = list(csv.reader(f))
        if not rows or rows[0] != ["original_index", "fresh_index"]:
            raise DataError(f"{path}: not a relabel map file")
        return cls({int(a): int(b) for a, b in rows[1:]})


def build_relabel_map(d2_items: Iterable[int], config: ShiftConfig, id_map: IdMap) -> RelabelMap:
    """Pick ``round_half_up(fraction * |d2_items|)`` distinct items uniformly
    at random and give them consecutive fresh indices starting at
    ``id_map.next_item_index``, in ascending order of the original index."""
    items = np.unique(np.fromiter(d2_items, dtype=np.int64))
    if not len(items):
        raise DataError("cannot build a relabel map from an empty item set")
    if items[-1] >= id_map.next_item_index:
        raise DataError(
            f"item {items[-1]} is not registered in the IdMap (next index {id_map.next_item_index})"
        )
    count = round_half_up(config.fraction, len(items))
    chosen = np.sort(make_rng(config.seed).choice(items, size=count, replace=False))
    start = id_map.next_item_index
    return RelabelMap({int(orig): start + k for k, orig in enumerate(chosen.tolist())})


def apply_relabel(d2: InteractionLog, relabel: RelabelMap) -> InteractionLog:
    """Rewrite every occurrence of a mapped item; nothing else changes."""
    if not relabel.entries:
        return d2
    present = set(np.unique(d2.items).tolist())
    missing = sorted(set(relabel.entries) - present)
    if missing:
        raise DataError(f"relabel map does not belong to this log: items {missing[:5]} absent")
    lookup = np.arange(int(d2.items.max()) + 1, dtype=np.int64)
    for orig, fresh in relabel.entries.items():
        lookup[orig] = fresh
    return d2.with_items(lookup[d2.items])


def extend_idmap(id_map: IdMap, relabel: RelabelMap) -> IdMap:
    """Copy of ``id_map`` with ``<original_key>#shifted`` registered for
    every fresh index."""
    out = id_map.copy()
    for orig, fresh in sorted(relabel.entries.items(), key=lambda kv: kv[1]):
        if out.add_item(id_map.item_keys[orig] + SHIFTED_SUFFIX) != fresh:
            raise DataError("relabel map fresh indices do not follow the IdMap")
    return out
