"""User-based k-nearest-neighbour recommender over binary profiles."""

from __future__ import annotations

import math

import numpy as np

from ..errors import DataError
from .base import Recommender, TrainingData


def cosine_similarity(a, b) -> float:
    """Cosine similarity of two binary profiles given as item collections.

    >>> cosine_similarity({1, 2}, {2, 3})
    0.5
    """
    a, b = set(a), set(b)
    if not a or not b:
        raise ValueError("cosine similarity of an empty profile is undefined")
    # one sqrt of an exact integer product: identical profiles give exactly 1
    return len(a & b) / math.sqrt(len(a) * len(b))


class UserKNN(Recommender):
    """Score = similarity-weighted share of the user's ``k_neighbors`` most
    similar users who hold the item; always in ``[0, 1]``.

    Neighbours are the users with positive cosine similarity, best first,
    ties to the lower user index; the user itself is excluded. The fit is
    deterministic, and ``seed`` is accepted only so every algorithm takes
    the same arguments.
    """

    algorithm_id = "uknn"

    def __init__(self, k_neighbors: int = 50, seed: int = 0):
        if k_neighbors < 1:
            raise ValueError("k_neighbors must be positive")
        super().__init__(k_neighbors=int(k_neighbors), seed=int(seed))
        self.k_neighbors = int(k_neighbors)
        self._cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    def _fit(self, data: TrainingData) -> None:
        self._finish()

    def _finish(self):
        sizes = np.diff(self._indptr)
        if np.any(sizes == 0):
            raise DataError("every user profile must be non-empty")
        # squared norms of the binary profiles, kept exact
        self.sizes = sizes.astype(np.int64)
        # item -> users (CSC) for intersection counts
        n_items = len(self.known_items)
        owner = np.repeat(np.arange(len(sizes)), sizes)
        order = np.argsort(self._indices, kind="stable")
        self._col_users = owner[order]
        self._col_ptr = np.zeros(n_items + 1, dtype=np.int64)
        np.cumsum(np.bincount(self._indices, minlength=n_items), out=self._col_ptr[1:])
        self._cache = {}

    def _load_state(self, arrays) -> None:
        self._finish()

    def profile(self, local_user: int) -> np.ndarray:
        return self._indices[self._indptr[local_user] : self._indptr[local_user + 1]]

    def similarities(self, local_user: int) -> np.ndarray:
        """Cosine similarity of ``local_user`` to every known user."""
        items = self.profile(local_user)
        owners = [self._col_users[self._col_ptr[i] : self._col_ptr[i + 1]] for i in items.tolist()]
        inter = np.bincount(np.concatenate(owners), minlength=len(self.known_users))
        return inter / np.sqrt((self.sizes[local_user] * self.sizes).astype(np.float64))

    def neighbors(self, local_user: int) -> tuple[np.ndarray, np.ndarray]:
        """Neighbour local indices (ascending) and their similarities."""
        hit = self._cache.get(local_user)
        if hit is None:
            sims = self.similarities(local_user)
            sims[local_user] = 0.0
            cand = np.flatnonzero(sims > 0)
            top = cand[np.lexsort((cand, -sims[cand]))][: self.k_neighbors]
            top.sort()
            hit = self._cache[local_user] = (top, sims[top])
        return hit

    def _score(self, local_user: int, local_items: np.ndarray) -> np.ndarray:
        nbrs, sims = self.neighbors(local_user)
        if not len(nbrs):
            return np.zeros(len(local_items))
        # accumulate in ascending neighbour order so sums are reproducible
        acc = np.zeros(len(self.known_items))
        total = 0.0
        for v, s in zip(nbrs.tolist(), sims.tolist()):
            acc[self.profile(v)] += s
            total += s
        return acc[local_items] / total
