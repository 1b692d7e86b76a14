"""Top-K ranking metrics over leave-one-out holdouts.

Every holdout user has exactly one ground-truth item. For each user the
model ranks the whole candidate catalog (minus the user's training items)
and we keep two things: the top-K list and the truth item's position in the
full ranking (``None`` if the truth is not a candidate at all). All metrics
derive from these, so recomputing them from persisted ranks is exact.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .data import InteractionLog
from .errors import DataError
from .models.base import RankedList, Recommender, _candidates_sorted, _top_k, truth_rank

METRICS = ("hit_ratio", "ndcg", "coverage")


def _truth_map(truth: InteractionLog) -> dict[int, int]:
    users = truth.users.tolist()
    if len(set(users)) != len(users):
        raise DataError("holdout must hold exactly one interaction per user")
    return dict(zip(users, truth.items.tolist()))


def hit_ratio_at_k(ranked: Mapping[int, RankedList], truth: InteractionLog, k: int = 20) -> float:
    """Share of holdout users whose truth item is in their top ``k``."""
    gt = _truth_map(truth)
    if not gt:
        raise DataError("empty holdout")
    hits = 0
    for user, item in gt.items():
        if user not in ranked:
            raise DataError(f"no ranking for holdout user {user}")
        hits += int(item in ranked[user].items[:k].tolist())
    return hits / len(gt)


def _gain(rank: int | None, k: int) -> float:
    return 1.0 / math.log2(rank + 1) if rank is not None and rank <= k else 0.0


def ndcg_at_k(ranked: Mapping[int, RankedList], truth: InteractionLog, k: int = 20) -> float:
    """Mean of ``1/log2(rank + 1)`` for truths ranked within ``k``, else 0.

    With a single relevant item the ideal DCG is 1, so this is already
    normalised.
    """
    gt = _truth_map(truth)
    if not gt:
        raise DataError("empty holdout")
    gains = []
    for user, item in gt.items():
        if user not in ranked:
            raise DataError(f"no ranking for holdout user {user}")
        top = ranked[user].items[:k].tolist()
        gains.append(_gain(top.index(item) + 1 if item in top else None, k))
    return math.fsum(gains) / len(gt)


def coverage_at_k(ranked: Mapping[int, RankedList] | Sequence[RankedList], catalog, k: int = 20) -> float:
    """Share of the catalog that shows up in at least one top-``k`` list."""
    catalog = np.unique(np.asarray(catalog, dtype=np.int64))
    if not len(catalog):
        raise ValueError("coverage needs a non-empty catalog")
    lists = ranked.values() if isinstance(ranked, Mapping) else ranked
    seen = set()
    for rl in lists:
        seen.update(rl.items[:k].tolist())
    return len(seen & set(catalog.tolist())) / len(catalog)


def hit_ratio_from_ranks(ranks: Mapping[int, int | None], k: int) -> float:
    return sum(1 for r in ranks.values() if r is not None and r <= k) / len(ranks)


def ndcg_from_ranks(ranks: Mapping[int, int | None], k: int) -> float:
    return math.fsum(_gain(r, k) for r in ranks.values()) / len(ranks)


@dataclass
class EvalOutcome:
    per_user_rank: dict[int, int | None]
    truth: dict[int, int]
    aggregate: dict[str, float] = field(default_factory=dict)
    top: dict[int, RankedList] = field(default_factory=dict)

    def write_ranks(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(("user", "truth_item", "rank"))
            for user in sorted(self.per_user_rank):
                rank = self.per_user_rank[user]
                w.writerow((user, self.truth[user], "absent" if rank is None else rank))


def read_ranks(path) -> tuple[dict[int, int | None], dict[int, int]]:
    ranks, truth = {}, {}
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        if next(reader, None) != ["user", "truth_item", "rank"]:
            raise DataError(f"{path}: not a rank file")
        for user, item, rank in reader:
            ranks[int(user)] = None if rank == "absent" else int(rank)
            truth[int(user)] = int(item)
    return ranks, truth


def metric_key(name: str, k: int) -> str:
    return f"{name}@{k}"


def _aggregate(outcome: EvalOutcome, metrics, ks, catalog) -> None:
    for k in ks:
        for name in metrics:
            if name == "hit_ratio":
                value = hit_ratio_from_ranks(outcome.per_user_rank, k)
            elif name == "ndcg":
                value = ndcg_from_ranks(outcome.per_user_rank, k)
            elif name == "coverage":
                value = coverage_at_k(outcome.top, catalog, k)
            else:
                raise ValueError(f"unknown metric {name!r}; choose from {', '.join(METRICS)}")
            outcome.aggregate[metric_key(name, k)] = value


def evaluate_holdouts(
    model: Recommender,
    holdouts: Mapping[str, InteractionLog],
    catalog,
    metrics: Sequence[str] = ("hit_ratio",),
    k: int | Sequence[int] = 20,
    jobs: int = 1,
) -> dict[str, EvalOutcome]:
    """Evaluate one model on several holdouts, scoring each user once.

    Users are processed in chunks (optionally on ``jobs`` threads); results
    are assembled in ascending user order, so the outcome does not depend
    on scheduling.
    """
    ks = sorted({k} if isinstance(k, int) else set(k))
    if not ks or ks[0] < 1:
        raise ValueError("k must be at least 1")
    for name in metrics:
        if name not in METRICS:
            raise ValueError(f"unknown metric {name!r}; choose from {', '.join(METRICS)}")
    catalog = np.unique(np.asarray(catalog, dtype=np.int64))
    truths = {name: _truth_map(log) for name, log in holdouts.items()}
    users = sorted(set().union(*truths.values()))
    kmax = ks[-1]

    def work(chunk):
        out = []
        for user in chunk:
            try:
                cands = _candidates_sorted(model, user, catalog)
                scores = model.score_items(user, cands)
            except KeyError as exc:
                raise DataError(f"cannot rank holdout user {user}: {exc}") from exc
            top = _top_k(user, cands, scores, kmax)
            ranks = {
                name: truth_rank(cands, scores, gt[user]) for name, gt in truths.items() if user in gt
            }
            out.append((user, top, ranks))
        return out

    chunks = [users[i : i + 64] for i in range(0, len(users), 64)]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = [r for part in pool.map(work, chunks) for r in part]
    else:
        results = [r for chunk in chunks for r in work(chunk)]

    outcomes = {}
    for name, gt in truths.items():
        oc = EvalOutcome(per_user_rank={}, truth=dict(sorted(gt.items())))
        for user, top, ranks in results:
            if name in ranks:
                oc.per_user_rank[user] = ranks[name]
                oc.top[user] = top
        if oc.per_user_rank:
            _aggregate(oc, metrics, ks, catalog)
        outcomes[name] = oc
    return outcomes


def evaluate_model(model, holdout: InteractionLog, catalog, metrics=("hit_ratio",), k=20, jobs=1) -> EvalOutcome:
    return evaluate_holdouts(model, {"holdout": holdout}, catalog, metrics, k, jobs)["holdout"]
