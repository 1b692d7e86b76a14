"""Common recommender contract and full-catalog top-K ranking.

A fitted model knows a set of users and items (those in its training log).
It scores known items with finite values; unknown items get ``-inf`` and
therefore rank after every known item. Rankings are a strict total order:
score descending, then item index ascending.
"""

from __future__ import annotations

import io
import json
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import ClassVar

import numpy as np

from ..data import InteractionLog
from ..errors import DataError

FORMAT_VERSION = 1
SENTINEL = -np.inf


class UnknownUserError(KeyError):
    pass


@dataclass(frozen=True)
class RankedList:
    user: int
    items: np.ndarray
    scores: np.ndarray

    def __len__(self) -> int:
        return len(self.items)


class TrainingData:
    """Training log re-indexed to local (model-internal) user/item indices,
    plus each user's positive items as a CSR structure."""

    def __init__(self, log: InteractionLog):
        if not len(log):
            raise DataError("cannot fit a model on an empty training log")
        self.users = np.unique(log.users)
        self.items = np.unique(log.items)
        self.u = np.searchsorted(self.users, log.users)
        self.i = np.searchsorted(self.items, log.items)
        pairs = np.unique(self.u * len(self.items) + self.i)
        pu, pi = np.divmod(pairs, len(self.items))
        self.indptr = np.zeros(len(self.users) + 1, dtype=np.int64)
        np.cumsum(np.bincount(pu, minlength=len(self.users)), out=self.indptr[1:])
        self.indices = pi.astype(np.int64)

    @property
    def n_users(self) -> int:
        return len(self.users)

    @property
    def n_items(self) -> int:
        return len(self.items)

    def positives(self, local_user: int) -> np.ndarray:
        return self.indices[self.indptr[local_user] : self.indptr[local_user + 1]]


class Recommender(ABC):
    """A fitted model. Subclasses implement :meth:`_fit`, :meth:`_score`
    and the parameter (de)serialization hooks."""

    algorithm_id: ClassVar[str]

    def __init__(self, **hyperparameters):
        self.hyperparameters = hyperparameters
        self.known_users = np.empty(0, dtype=np.int64)
        self.known_items = np.empty(0, dtype=np.int64)
        self._indptr = np.zeros(1, dtype=np.int64)
        self._indices = np.empty(0, dtype=np.int64)
        self.epoch_losses: list[float] = []
        self.fitted = False

    # -- fitting -----------------------------------------------------------

    def fit(self, train: InteractionLog) -> "Recommender":
        data = TrainingData(train)
        self.known_users, self.known_items = data.users, data.items
        self._indptr, self._indices = data.indptr, data.indices
        self._fit(data)
        self.fitted = True
        return self

    @abstractmethod
    def _fit(self, data: TrainingData) -> None: ...

    @abstractmethod
    def _score(self, local_user: int, local_items: np.ndarray) -> np.ndarray: ...

    # -- lookups -----------------------------------------------------------

    def local_user(self, user: int) -> int:
        pos = int(np.searchsorted(self.known_users, user))
        if pos >= len(self.known_users) or self.known_users[pos] != user:
            raise UnknownUserError(f"user {user} was not seen by {self.algorithm_id} in training")
        return pos

    def training_items(self, user: int) -> np.ndarray:
        """Global indices of the items ``user`` interacted with in training."""
        lu = self.local_user(user)
        return self.known_items[self._indices[self._indptr[lu] : self._indptr[lu + 1]]]

    # -- scoring -----------------------------------------------------------

    def score_items(self, user: int, items) -> np.ndarray:
        """Scores for global item indices; ``-inf`` for unknown items."""
        items = np.asarray(items, dtype=np.int64)
        lu = self.local_user(user)
        pos = np.searchsorted(self.known_items, items)
        pos_c = np.minimum(pos, len(self.known_items) - 1)
        known = (pos < len(self.known_items)) & (self.known_items[pos_c] == items)
        out = np.full(len(items), SENTINEL)
        if known.any():
            out[known] = self._score(lu, pos_c[known])
        return out

    def score(self, user: int, item: int) -> float:
        return float(self.score_items(user, [item])[0])

    # -- persistence -------------------------------------------------------

    def _state(self) -> dict[str, np.ndarray]:
        return {}

    def _load_state(self, arrays: dict[str, np.ndarray]) -> None:
        pass

    def to_bytes(self) -> bytes:
        meta = {
            "format": FORMAT_VERSION,
            "algorithm_id": self.algorithm_id,
            "hyperparameters": self.hyperparameters,
            "epoch_losses": self.epoch_losses,
        }
        arrays = {
            "known_users": self.known_users,
            "known_items": self.known_items,
            "indptr": self._indptr,
            "indices": self._indices,
            **{f"state_{k}": v for k, v in self._state().items()},
        }
        buf = io.BytesIO()
        np.savez(buf, meta=np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8), **arrays)
        return buf.getvalue()

    def save(self, path) -> None:
        with open(path, "wb") as f:
            f.write(self.to_bytes())

    @staticmethod
    def from_bytes(blob: bytes) -> "Recommender":
        from . import ALGORITHMS

        with np.load(io.BytesIO(blob), allow_pickle=False) as npz:
            arrays = {k: npz[k] for k in npz.files}
        meta = json.loads(arrays.pop("meta").tobytes().decode())
        if meta["format"] != FORMAT_VERSION:
            raise DataError(f"unsupported model format {meta['format']}")
        model = ALGORITHMS[meta["algorithm_id"]](**meta["hyperparameters"])
        model.known_users = arrays["known_users"]
        model.known_items = arrays["known_items"]
        model._indptr = arrays["indptr"]
        model._indices = arrays["indices"]
        model.epoch_losses = list(meta["epoch_losses"])
        model._load_state({k[6:]: v for k, v in arrays.items() if k.startswith("state_")})
        model.fitted = True
        return model

    @staticmethod
    def load(path) -> "Recommender":
        with open(path, "rb") as f:
            return Recommender.from_bytes(f.read())


# ---------------------------------------------------------------------------
# ranking


def build_candidate_catalog(splits) -> np.ndarray:
    """Items of ``m2_train``, ``d1_test`` and ``d2_test``; one catalog serves
    both models so their scores are comparable."""
    parts = [splits.m2_train.items, splits.d1_test.items, splits.d2_test.items]
    return np.unique(np.concatenate(parts))


def _candidates_sorted(model: Recommender, user: int, catalog: np.ndarray) -> np.ndarray:
    # catalog must already be sorted and unique
    seen = model.training_items(user)
    return catalog[~np.isin(catalog, seen, assume_unique=True)]


def _candidates(model: Recommender, user: int, catalog) -> np.ndarray:
    return _candidates_sorted(model, user, np.unique(np.asarray(catalog, dtype=np.int64)))


def _order(items: np.ndarray, scores: np.ndarray) -> np.ndarray:
    return np.lexsort((items, -scores))


def rank_top_k(model: Recommender, user: int, catalog, k: int = 20) -> RankedList:
    """Best ``k`` catalog items for ``user``, excluding their training items."""
    if k < 1:
        raise ValueError("k must be at least 1")
    cands = _candidates(model, user, catalog)
    scores = model.score_items(user, cands)
    return _top_k(user, cands, scores, k)


def _top_k(user, cands, scores, k) -> RankedList:
    if len(cands) > k:
        neg = -scores
        kth = np.partition(neg, k - 1)[k - 1]
        pool = np.flatnonzero(neg <= kth)
        cands, scores = cands[pool], scores[pool]
    order = _order(cands, scores)[:k]
    return RankedList(user, cands[order], scores[order])


def truth_rank(cands: np.ndarray, scores: np.ndarray, truth: int) -> int | None:
    """1-based position of ``truth`` in the full ranking of ``cands``, or
    ``None`` when it is not a candidate."""
    hit = np.flatnonzero(cands == truth)
    if not len(hit):
        return None
    s = scores[hit[0]]
    ahead = np.count_nonzero(scores > s) + np.count_nonzero((scores == s) & (cands < truth))
    return int(ahead) + 1


def rank_user(model: Recommender, user: int, catalog, truth: int, k: int) -> tuple[RankedList, int | None]:
    """Top-``k`` list and the truth item's full-ranking position, from one
    scoring pass."""
    cands = _candidates(model, user, catalog)
    scores = model.score_items(user, cands)
    return _top_k(user, cands, scores, k), truth_rank(cands, scores, truth)
