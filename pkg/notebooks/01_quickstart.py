"""
===========================================
Stability and plasticity in a few seconds
===========================================

Generate a small synthetic interaction log, inject an item relabeling
shift into its last period, and measure how three recommenders cope. The
whole pipeline runs in memory here; ``spbench all`` does the same with
artifacts on disk.
"""

# %%
# Setup
# -----
# A small generator config keeps the run short. The generator writes the
# same CSV layout a real review dump would have.
import io

from spbench.data import ColumnSpec, InteractionLog, filter_min_per_period, parse_interactions, parse_timestamp
from spbench.data import reindex_ids
from spbench.protocol import AlgorithmSpec, format_report, run_experiment
from spbench.shift import ShiftConfig, apply_relabel, build_relabel_map
from spbench.split import ByBoundaries, make_splits, split_temporal
from spbench.synth import SynthConfig, generate, to_csv

rows = generate(SynthConfig(n_users=300, n_items=1200, n_interactions=12000, seed=1))
log, idmap = parse_interactions(
    io.StringIO(to_csv(rows)), ColumnSpec("user_id", "item_id", "timestamp", "rating"), rating_threshold=5
)
print(log)

# %%
# Periods
# -------
# 2012 is pre-training data, 2013 the pre-shift period and 2014 the
# post-shift period. Users need two interactions in both of the latter.
t0, t1 = parse_timestamp("2013-01-01"), parse_timestamp("2014-01-01")
log = filter_min_per_period(log, [(t0, t1), (t1, None)], 2)
log, idmap = reindex_ids(log, idmap)
parts = split_temporal(log, ByBoundaries(t0, t1))
print(len(parts.d0), len(parts.d1), len(parts.d2))

# %%
# Shift
# -----
# Half of the items seen in 2014 get brand-new ids. To a model trained on
# earlier data they are unknown items.
relabel = build_relabel_map(parts.d2.items, ShiftConfig(0.5, seed=7), idmap)
shifted = InteractionLog.union(parts.d0, parts.d1, apply_relabel(parts.d2, relabel))
print(f"{len(relabel)} of {parts.d2.n_items} items relabeled")

# %%
# Experiment
# ----------
# Each algorithm is trained twice: M1 on data up to 2013, M2 on everything.
# Both are scored on the last interaction of each user in each period.
splits = make_splits(split_temporal(shifted, ByBoundaries(t0, t1)))
algorithms = [
    AlgorithmSpec("uknn", "uknn", {"k_neighbors": 50}),
    AlgorithmSpec("bprmf", "bprmf", {"d": 32, "epochs": 30}),
    AlgorithmSpec("neumf", "neumf", {"epochs": 5}),
]
report = run_experiment(splits, algorithms, ["hit_ratio", "ndcg"], 20, seed=42)
print(format_report(report))

# %%
# Reading the numbers
# -------------------
# Stability above 1 means retraining improved the old holdout; below 1
# means it was forgotten. Plasticity is how much the retrained model gained
# on the new period. With a 50% relabeling the old model cannot recommend
# half of the new period's items at all.
