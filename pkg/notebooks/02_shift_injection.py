"""
=============================
What the relabeling shift does
=============================

A concept shift is simulated by giving a random share of the post-shift
period's items new ids. The interaction patterns stay intact, only the
labels change, so a model has to learn the "new" items from scratch.
"""

# %%
# A toy post-shift log
# --------------------
import numpy as np

from spbench.data import IdMap, InteractionLog
from spbench.shift import ShiftConfig, apply_relabel, build_relabel_map, extend_idmap, round_half_up

idmap = IdMap([f"u{k}" for k in range(4)], ["dune", "emma", "ulysses", "beloved", "kindred"])
d2 = InteractionLog.from_records(
    [(0, 0, 1), (1, 0, 2), (2, 1, 3), (3, 2, 4), (0, 3, 5), (1, 4, 6), (2, 0, 7)]
)

# %%
# Selection
# ---------
# The number of relabeled items is ``fraction * n`` rounded half up, so 5
# items at 50% gives 3. Fresh ids follow the id map.
print(round_half_up(0.5, 5))
relabel = build_relabel_map(d2.items, ShiftConfig(0.5, seed=3), idmap)
print(relabel.entries)

# %%
# Rewriting
# ---------
# Every occurrence of a selected item moves to its fresh id; counts per item
# are unchanged.
shifted = apply_relabel(d2, relabel)
names = extend_idmap(idmap, relabel).item_keys
for before, after in zip(d2, shifted):
    print(f"user {before.user}: {idmap.item_keys[before.item]:>8} -> {names[after.item]}")
print(np.bincount(d2.items), np.bincount(shifted.items))

# %%
# Determinism
# -----------
# The selection only depends on the seed.
again = build_relabel_map(d2.items, ShiftConfig(0.5, seed=3), idmap)
assert again == relabel
