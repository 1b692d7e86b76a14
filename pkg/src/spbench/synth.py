"""Seeded synthetic interaction data, so the whole pipeline runs without
external datasets.

Items belong to taste clusters and have Zipf-like popularity. Each user
prefers one cluster and, as time passes, drifts towards a second one with
probability growing linearly up to ``drift``. A share of rows gets a rating
below 5 so the rating filter has something to remove.
"""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass

import numpy as np

from .data import parse_timestamp
from .rng import make_rng


@dataclass(frozen=True)
class SynthConfig:
    n_users: int = 2000
    n_items: int = 10000
    n_interactions: int = 100_000
    n_clusters: int = 25
    popularity_exponent: float = 0.8
    in_cluster: float = 0.8
    drift: float = 0.3
    low_rating_share: float = 0.1
    start: str = "2012-07-01"
    end: str = "2015-01-02"
    seed: int = 0

    def __post_init__(self):
        if min(self.n_users, self.n_items, self.n_interactions, self.n_clusters) < 1:
            raise ValueError("synthetic sizes must be positive")
        for name in ("in_cluster", "drift", "low_rating_share"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")

    def as_dict(self) -> dict:
        return asdict(self)


def _weighted_pick(rng, cum: np.ndarray, n: int) -> np.ndarray:
    return np.searchsorted(cum, rng.random(n) * cum[-1], side="right")


def generate(config: SynthConfig = SynthConfig()) -> list[tuple[str, str, int, int]]:
    """Rows ``(user_key, item_key, rating, timestamp)`` in random order."""
    rng = make_rng(config.seed)
    t0, t1 = parse_timestamp(config.start), parse_timestamp(config.end)

    n_users, n_items, n_cl = config.n_users, config.n_items, config.n_clusters
    item_cluster = rng.integers(0, n_cl, size=n_items)
    popularity = (1.0 + rng.permutation(n_items)) ** -config.popularity_exponent
    global_cum = np.cumsum(popularity)
    members = [np.flatnonzero(item_cluster == c) for c in range(n_cl)]
    members = [m if len(m) else np.arange(n_items) for m in members]
    cluster_cum = [np.cumsum(popularity[m]) for m in members]

    activity = rng.lognormal(0.0, 0.7, size=n_users)
    counts = np.maximum(4, np.round(activity / activity.sum() * config.n_interactions)).astype(np.int64)
    counts = np.minimum(counts, n_items // 2 if n_items >= 8 else n_items)
    home = rng.integers(0, n_cl, size=n_users)
    away = (home + rng.integers(1, n_cl, size=n_users)) % n_cl if n_cl > 1 else home

    rows = []
    for u in range(n_users):
        n = int(counts[u])
        stamps = np.sort(rng.integers(t0, t1, size=n))
        frac = (stamps - t0) / max(t1 - t0, 1)
        cluster = np.where(rng.random(n) < config.drift * frac, away[u], home[u])
        in_cl = rng.random(n) < config.in_cluster
        picked = np.empty(n, dtype=np.int64)
        seen: set[int] = set()
        for k in range(n):
            for _ in range(50):
                if in_cl[k]:
                    c = cluster[k]
                    item = int(members[c][_weighted_pick(rng, cluster_cum[c], 1)[0]])
                else:
                    item = int(_weighted_pick(rng, global_cum, 1)[0])
                if item not in seen:
                    break
            seen.add(item)
            picked[k] = item
        ratings = np.where(rng.random(n) < config.low_rating_share, rng.integers(1, 5, size=n), 5)
        rows.extend(
            (f"u{u}", f"i{i}", int(r), int(t)) for i, r, t in zip(picked.tolist(), ratings.tolist(), stamps.tolist())
        )
    order = rng.permutation(len(rows))
    return [rows[k] for k in order]


def to_csv(rows, stream=None) -> str | None:
    """Write rows with header ``user_id,item_id,rating,timestamp``."""
    own = stream is None
    stream = io.StringIO() if own else stream
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(("user_id", "item_id", "rating", "timestamp"))
    w.writerows(rows)
    return stream.getvalue() if own else None
