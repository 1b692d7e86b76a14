"""Recommenders sharing the :class:`~spbench.models.base.Recommender` contract."""

from .base import RankedList, Recommender, UnknownUserError, build_candidate_catalog, rank_top_k, rank_user
from .bpr import BPRMF, BprConfig, bpr_gradients, bpr_pair_loss
from .knn import UserKNN, cosine_similarity
from .neumf import NeuMF, NeuMfConfig, NeuMfParams, neumf_forward, neumf_gradients, neumf_loss

ALGORITHMS = {cls.algorithm_id: cls for cls in (UserKNN, BPRMF, NeuMF)}


def make_model(algorithm_id: str, **hyperparameters) -> Recommender:
    try:
        cls = ALGORITHMS[algorithm_id]
    except KeyError:
        raise ValueError(f"unknown algorithm {algorithm_id!r}; choose from {', '.join(ALGORITHMS)}") from None
    return cls(**hyperparameters)
