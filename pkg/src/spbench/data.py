"""Interaction logs: ingestion, user sampling, per-period filtering and dense
re-indexing.

An :class:`InteractionLog` is three parallel int64 arrays (user, item,
timestamp), stable-sorted by timestamp and free of duplicate
``(user, item, timestamp)`` rows. Logs are immutable; every operation
returns a new one.
"""

from __future__ import annotations

import csv
import hashlib
import io
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Iterable, Iterator, NamedTuple, Sequence, TextIO, Union

import numpy as np

from .errors import DataError, EmptyResultError
from .rng import make_rng

LOG_HEADER = ("user", "item", "timestamp")
IDMAP_HEADER = ("external_key", "dense_index")


class Interaction(NamedTuple):
    user: int
    item: int
    timestamp: int


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=np.int64).reshape(-1)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class InteractionLog:
    users: np.ndarray
    items: np.ndarray
    timestamps: np.ndarray

    def __post_init__(self):
        for name in ("users", "items", "timestamps"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        if not (len(self.users) == len(self.items) == len(self.timestamps)):
            raise ValueError("users, items and timestamps must have equal length")

    @classmethod
    def from_arrays(cls, users, items, timestamps) -> "InteractionLog":
        """Build a canonical log: stable sort by timestamp, then drop repeated
        ``(user, item, timestamp)`` rows keeping the first."""
        users = np.asarray(users, dtype=np.int64).reshape(-1)
        items = np.asarray(items, dtype=np.int64).reshape(-1)
        ts = np.asarray(timestamps, dtype=np.int64).reshape(-1)
        order = np.argsort(ts, kind="stable")
        users, items, ts = users[order], items[order], ts[order]
        if len(ts):
            triples = np.stack([users, items, ts], axis=1)
            _, first = np.unique(triples, axis=0, return_index=True)
            keep = np.sort(first)
            users, items, ts = users[keep], items[keep], ts[keep]
        return cls(users, items, ts)

    @classmethod
    def from_records(cls, records: Iterable[Sequence[int]]) -> "InteractionLog":
        rows = list(records)
        if not rows:
            return cls.empty()
        arr = np.array(rows, dtype=np.int64).reshape(-1, 3)
        return cls.from_arrays(arr[:, 0], arr[:, 1], arr[:, 2])

    @classmethod
    def empty(cls) -> "InteractionLog":
        return cls(np.empty(0), np.empty(0), np.empty(0))

    @classmethod
    def union(cls, *logs: "InteractionLog") -> "InteractionLog":
        """Concatenate logs (in argument order) and re-sort stably."""
        logs = [log for log in logs if len(log)]
        if not logs:
            return cls.empty()
        return cls.from_arrays(
            np.concatenate([log.users for log in logs]),
            np.concatenate([log.items for log in logs]),
            np.concatenate([log.timestamps for log in logs]),
        )

    def __len__(self) -> int:
        return len(self.users)

    def __iter__(self) -> Iterator[Interaction]:
        for row in zip(self.users.tolist(), self.items.tolist(), self.timestamps.tolist()):
            yield Interaction(*row)

    def __getitem__(self, index) -> Interaction:
        return Interaction(int(self.users[index]), int(self.items[index]), int(self.timestamps[index]))

    def __eq__(self, other) -> bool:
        if not isinstance(other, InteractionLog):
            return NotImplemented
        return (
            np.array_equal(self.users, other.users)
            and np.array_equal(self.items, other.items)
            and np.array_equal(self.timestamps, other.timestamps)
        )

    def __repr__(self) -> str:
        return f"InteractionLog(n={len(self)}, users={self.n_users}, items={self.n_items})"

    def select(self, which) -> "InteractionLog":
        """Subset by boolean mask or index array. Order is preserved."""
        return InteractionLog(self.users[which], self.items[which], self.timestamps[which])

    def with_items(self, items) -> "InteractionLog":
        return InteractionLog(self.users, items, self.timestamps)

    def in_interval(self, start: int | None, end: int | None) -> np.ndarray:
        """Mask of rows with ``start <= timestamp < end`` (``None`` = unbounded)."""
        mask = np.ones(len(self), dtype=bool)
        if start is not None:
            mask &= self.timestamps >= start
        if end is not None:
            mask &= self.timestamps < end
        return mask

    def user_set(self) -> np.ndarray:
        return np.unique(self.users)

    def item_set(self) -> np.ndarray:
        return np.unique(self.items)

    @property
    def n_users(self) -> int:
        return len(np.unique(self.users))

    @property
    def n_items(self) -> int:
        return len(np.unique(self.items))

    def tuples(self) -> set[tuple[int, int, int]]:
        return set(map(tuple, self))

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for arr in (self.users, self.items, self.timestamps):
            h.update(np.ascontiguousarray(arr, dtype="<i8").tobytes())
        return h.hexdigest()


@dataclass
class IdMap:
    """Bidirectional map between external keys and dense indices."""

    user_keys: list[str] = field(default_factory=list)
    item_keys: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.user_index = {k: i for i, k in enumerate(self.user_keys)}
        self.item_index = {k: i for i, k in enumerate(self.item_keys)}
        if len(self.user_index) != len(self.user_keys) or len(self.item_index) != len(self.item_keys):
            raise DataError("IdMap keys must be unique")

    @property
    def n_users(self) -> int:
        return len(self.user_keys)

    @property
    def n_items(self) -> int:
        return len(self.item_keys)

    @property
    def next_item_index(self) -> int:
        return len(self.item_keys)

    def add_user(self, key: str) -> int:
        idx = self.user_index.get(key)
        if idx is None:
            idx = self.user_index[key] = len(self.user_keys)
            self.user_keys.append(key)
        return idx

    def add_item(self, key: str) -> int:
        idx = self.item_index.get(key)
        if idx is None:
            idx = self.item_index[key] = len(self.item_keys)
            self.item_keys.append(key)
        return idx

    def copy(self) -> "IdMap":
        return IdMap(list(self.user_keys), list(self.item_keys))

    def write(self, directory) -> None:
        os.makedirs(directory, exist_ok=True)
        for name, keys in (("users.csv", self.user_keys), ("items.csv", self.item_keys)):
            with open(os.path.join(directory, name), "w", newline="", encoding="utf-8") as f:
                w = csv.writer(f, lineterminator="\n")
                w.writerow(IDMAP_HEADER)
                w.writerows((k, i) for i, k in enumerate(keys))

    @classmethod
    def read(cls, directory) -> "IdMap":
        def load(name):
            with open(os.path.join(directory, name), newline="", encoding="utf-8") as f:
                rows = list(csv.reader(f))
            if not rows or tuple(rows[0]) != IDMAP_HEADER:
                raise DataError(f"{name}: expected header {','.join(IDMAP_HEADER)}")
            keys = [None] * (len(rows) - 1)
            for key, idx in rows[1:]:
                keys[int(idx)] = key
            return keys

        return cls(load("users.csv"), load("items.csv"))


def write_log(path, log: InteractionLog) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(LOG_HEADER)
        w.writerows(zip(log.users.tolist(), log.items.tolist(), log.timestamps.tolist()))


def read_log(path) -> InteractionLog:
    """Read a canonical ``user,item,timestamp`` file written by :func:`write_log`."""
    with open(path, encoding="utf-8") as f:
        header = f.readline().strip()
        if header != ",".join(LOG_HEADER):
            raise DataError(f"{path}: expected header {','.join(LOG_HEADER)}, got {header!r}")
        body = f.read()
    if not body.strip():
        return InteractionLog.empty()
    arr = np.loadtxt(io.StringIO(body), delimiter=",", dtype=np.int64, ndmin=2)
    return InteractionLog(arr[:, 0], arr[:, 1], arr[:, 2])


# ---------------------------------------------------------------------------
# ingestion

Column = Union[str, int]


@dataclass(frozen=True)
class ColumnSpec:
    """Which input columns hold what. Names need a header row; integer
    positions work either way."""

    user: Column = "user"
    item: Column = "item"
    timestamp: Column = "timestamp"
    rating: Column | None = None


_DATE_FORMATS = ("%a %b %d %H:%M:%S %z %Y",)


def parse_timestamp(text: str) -> int:
    """Integer epoch seconds, or an ISO-8601 date/datetime (naive = UTC).

    >>> parse_timestamp("2013-01-01")
    1356998400
    >>> parse_timestamp("1356998400")
    1356998400
    """
    text = text.strip()
    try:
        value = int(text)
    except ValueError:
        pass
    else:
        if value < 0:
            raise ValueError(f"negative timestamp {value}")
        return value
    try:
        dt = datetime.fromisoformat(text.replace("Z", "+00:00"))
    except ValueError:
        for fmt in _DATE_FORMATS:
            try:
                dt = datetime.strptime(text, fmt)
                break
            except ValueError:
                continue
        else:
            raise ValueError(f"unparseable timestamp {text!r}") from None
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    value = int(dt.timestamp())
    if value < 0:
        raise ValueError(f"timestamp before epoch: {text!r}")
    return value


def parse_interactions(
    source: TextIO,
    columns: ColumnSpec = ColumnSpec(),
    rating_threshold: float | None = None,
    *,
    delimiter: str = ",",
    header: bool = True,
) -> tuple[InteractionLog, IdMap]:
    """Read delimiter-separated interactions into a canonical log.

    Rows rated below ``rating_threshold`` are dropped (not kept as
    negatives). External keys are registered in a fresh :class:`IdMap` in
    order of first appearance in the input.

    Raises :class:`DataError` on a malformed row (with its line number) or a
    missing column, and :class:`EmptyResultError` if nothing survives.
    """
    reader = csv.reader(source, delimiter=delimiter)
    names = None
    if header:
        names = next(reader, None)
        if names is None:
            raise EmptyResultError("empty result: input has no rows")
        names = [n.strip() for n in names]

    def position(col, what):
        if col is None:
            return None
        if isinstance(col, int) or (isinstance(col, str) and col.isdigit() and not header):
            return int(col)
        if names is None:
            raise DataError(f"column {col!r} given by name but input has no header")
        if col not in names:
            raise DataError(f"missing required {what} column {col!r} (have: {', '.join(names)})")
        return names.index(col)

    u_pos = position(columns.user, "user")
    i_pos = position(columns.item, "item")
    t_pos = position(columns.timestamp, "timestamp")
    r_pos = position(columns.rating, "rating") if rating_threshold is not None else None
    width = max(p for p in (u_pos, i_pos, t_pos, r_pos) if p is not None) + 1

    idmap = IdMap()
    users, items, stamps = [], [], []
    for row in reader:
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        line = reader.line_num
        if len(row) < width:
            raise DataError(f"line {line}: expected at least {width} fields, got {len(row)}")
        try:
            if r_pos is not None and float(row[r_pos]) < rating_threshold:
                continue
            ts = parse_timestamp(row[t_pos])
        except ValueError as exc:
            raise DataError(f"line {line}: {exc}") from None
        ukey, ikey = row[u_pos].strip(), row[i_pos].strip()
        if not ukey or not ikey:
            raise DataError(f"line {line}: empty user or item key")
        users.append(idmap.add_user(ukey))
        items.append(idmap.add_item(ikey))
        stamps.append(ts)

    if not users:
        raise EmptyResultError("empty result: no interactions left after parsing/filtering")
    return InteractionLog.from_arrays(users, items, stamps), idmap


# ---------------------------------------------------------------------------
# transformations


def sample_users(log: InteractionLog, n: int, seed: int) -> InteractionLog:
    """Keep every interaction of ``n`` users drawn uniformly without
    replacement (Philox generator seeded with ``seed``)."""
    if n <= 0:
        raise ValueError("n must be positive")
    pool = log.user_set()
    if n > len(pool):
        raise DataError(f"cannot sample {n} users from a log with {len(pool)} distinct users")
    chosen = make_rng(seed).choice(pool, size=n, replace=False)
    return log.select(np.isin(log.users, chosen))


def filter_min_per_period(
    log: InteractionLog, period_boundaries: Sequence[tuple[int, int]], min_count: int = 2
) -> InteractionLog:
    """Keep only users with at least ``min_count`` interactions inside every
    ``[start, end)`` interval.

    Removing a user never changes another user's counts, so one pass already
    reaches the fixed point.
    """
    if not period_boundaries:
        raise ValueError("period_boundaries must not be empty")
    if min_count < 1:
        raise ValueError("min_count must be positive")
    prev_end = None
    for start, end in period_boundaries:
        if start is not None and end is not None and start >= end:
            raise ValueError(f"empty interval [{start}, {end})")
        if prev_end is not None and start is not None and start < prev_end:
            raise ValueError("intervals must be disjoint and ordered")
        prev_end = end

    n = int(log.users.max()) + 1 if len(log) else 0
    keep = np.ones(n, dtype=bool)
    for start, end in period_boundaries:
        counts = np.bincount(log.users[log.in_interval(start, end)], minlength=n)
        keep &= counts >= min_count
    return log.select(keep[log.users]) if n else log


def reindex_ids(log: InteractionLog, idmap: IdMap | None = None) -> tuple[InteractionLog, IdMap]:
    """Renumber users and items densely in order of first appearance.

    If ``idmap`` is given, the returned map carries its external keys over;
    otherwise the old indices (as strings) become the keys.
    """

    def dense(values):
        uniq, first, inverse = np.unique(values, return_index=True, return_inverse=True)
        order = np.argsort(first, kind="stable")
        rank = np.empty_like(order)
        rank[order] = np.arange(len(order))
        return rank[inverse.reshape(-1)], uniq[order]

    if not len(log):
        return log, IdMap()
    new_users, old_users = dense(log.users)
    new_items, old_items = dense(log.items)
    if idmap is None:
        ukeys = [str(u) for u in old_users.tolist()]
        ikeys = [str(i) for i in old_items.tolist()]
    else:
        ukeys = [idmap.user_keys[u] for u in old_users.tolist()]
        ikeys = [idmap.item_keys[i] for i in old_items.tolist()]
    return InteractionLog(new_users, new_items, log.timestamps), IdMap(ukeys, ikeys)
