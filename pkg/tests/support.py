"""Shared builders for the test suite."""

import io

import numpy as np

from spbench.data import ColumnSpec, InteractionLog, filter_min_per_period, parse_interactions, reindex_ids
from spbench.data import parse_timestamp
from spbench.shift import ShiftConfig, apply_relabel, build_relabel_map
from spbench.split import ByBoundaries, make_splits, split_temporal
from spbench.synth import SynthConfig, generate, to_csv

T0 = parse_timestamp("2013-01-01")
T1 = parse_timestamp("2014-01-01")
SYNTH_COLUMNS = ColumnSpec("user_id", "item_id", "timestamp", "rating")

# 4 users, 6 items, 12 interactions
TINY = InteractionLog.from_records(
    [
        (0, 0, 1), (0, 1, 2), (0, 2, 3),
        (1, 0, 4), (1, 1, 5), (1, 3, 6),
        (2, 3, 7), (2, 4, 8), (2, 5, 9),
        (3, 2, 10), (3, 4, 11), (3, 5, 12),
    ]
)

def synthetic_log(n_users=200, n_items=800, n_interactions=8000, seed=0):
    """Parsed, 5-star-filtered synthetic log plus its IdMap."""
    rows = generate(SynthConfig(n_users=n_users, n_items=n_items, n_interactions=n_interactions, seed=seed))
    return parse_interactions(io.StringIO(to_csv(rows)), SYNTH_COLUMNS, 5)

def prepared_log(seed=0, **sizes):
    log, idmap = synthetic_log(seed=seed, **sizes)
    log = filter_min_per_period(log, [(T0, T1), (T1, None)], 2)
    return reindex_ids(log, idmap)

def synthetic_splits(fraction=0.5, seed=0, shift_seed=1, **sizes):
    """In-memory equivalent of prepare -> shift -> split."""
    log, idmap = prepared_log(seed=seed, **sizes)
    parts = split_temporal(log, ByBoundaries(T0, T1))
    relabel = build_relabel_map(parts.d2.items, ShiftConfig(fraction, shift_seed), idmap)
    d2 = apply_relabel(parts.d2, relabel)
    shifted = InteractionLog.union(parts.d0, parts.d1, d2)
    periods = split_temporal(shifted, ByBoundaries(T0, T1))
    return make_splits(periods), relabel

def random_log(rng, n_users, n_items, n, t_max=10_000):
    return InteractionLog.from_arrays(
        rng.integers(0, n_users, n), rng.integers(0, n_items, n), rng.integers(0, t_max, n)
    )

def brute_rank(scores: dict, truth):
    """1-based rank of ``truth`` under score desc, index asc."""
    order = sorted(scores, key=lambda it: (-scores[it], it))
    return order.index(truth) + 1 if truth in scores else None

def as_pairs(log):
    return set(zip(log.users.tolist(), log.items.tolist()))

def as_rows(log):
    return sorted(zip(log.users.tolist(), log.items.tolist(), log.timestamps.tolist()))
