"""Matrix factorization trained with the BPR pairwise ranking loss.

Plain single-sample SGD: each epoch visits every training interaction once
in a shuffled order and pairs it with one uniformly drawn item the user has
not interacted with. Scores are dot products of user and item factors, no
bias terms.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np
from numba import njit

from ..errors import TrainingError
from ..rng import make_rng
from .base import Recommender, TrainingData

_log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BprConfig:
    d: int = 64
    learning_rate: float = 0.01
    l2_reg: float = 0.01
    epochs: int = 50
    seed: int = 0
    init_std: float = 0.1

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.l2_reg < 0:
            raise ValueError("l2_reg must be non-negative")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")


@njit(cache=True)
def softplus(x):
    if x > 0:
        return x + np.log1p(np.exp(-x))
    return np.log1p(np.exp(x))


@njit(cache=True)
def sigmoid(x):
    if x >= 0:
        return 1.0 / (1.0 + np.exp(-x))
    z = np.exp(x)
    return z / (1.0 + z)


@njit(cache=True)
def bpr_pair_loss(x_ui, x_uj):
    """``-log(sigmoid(x_ui - x_uj))`` without overflow."""
    return softplus(x_uj - x_ui)


@njit(cache=True)
def _bpr_step_grads(pu, qi, qj, reg):
    d = pu.shape[0]
    x = 0.0
    for f in range(d):
        x += pu[f] * (qi[f] - qj[f])
    e = sigmoid(-x)
    gp = np.empty(d)
    gi = np.empty(d)
    gj = np.empty(d)
    for f in range(d):
        gp[f] = -e * (qi[f] - qj[f]) + reg * pu[f]
        gi[f] = -e * pu[f] + reg * qi[f]
        gj[f] = e * pu[f] + reg * qj[f]
    return gp, gi, gj, softplus(-x)


def bpr_gradients(P, Q, triple, l2_reg):
    """Gradients of ``-log sigmoid(x_ui - x_uj) + l2_reg/2 * (|P_u|^2 + |Q_i|^2 + |Q_j|^2)``.

    Returns ``(grad_P_u, grad_Q_i, grad_Q_j)``. When ``i == j`` the item
    gradients are two contributions to the same row and should be summed.
    """
    u, i, j = triple
    gp, gi, gj, _ = _bpr_step_grads(
        np.ascontiguousarray(P[u], dtype=np.float64),
        np.ascontiguousarray(Q[i], dtype=np.float64),
        np.ascontiguousarray(Q[j], dtype=np.float64),
        float(l2_reg),
    )
    return gp, gi, gj


@njit(cache=True)
def _nth_negative(pos, r):
    # r-th (0-based) item index not in the sorted array pos
    j = r
    for p in pos:
        if p <= j:
            j += 1
        else:
            break
    return j


@njit(cache=True)
def _bpr_epoch(P, Q, u_arr, i_arr, order, draws, indptr, indices, lr, reg):
    n_items = Q.shape[0]
    total = 0.0
    used = 0
    for t in range(order.shape[0]):
        idx = order[t]
        u = u_arr[idx]
        i = i_arr[idx]
        pos = indices[indptr[u] : indptr[u + 1]]
        m = n_items - pos.shape[0]
        if m == 0:
            continue
        r = int(draws[t] * m)
        if r >= m:
            r = m - 1
        j = _nth_negative(pos, r)
        gp, gi, gj, loss = _bpr_step_grads(P[u].copy(), Q[i].copy(), Q[j].copy(), reg)
        for f in range(P.shape[1]):
            P[u, f] -= lr * gp[f]
            Q[i, f] -= lr * gi[f]
            Q[j, f] -= lr * gj[f]
        total += loss
        used += 1
    return total, used


class BPRMF(Recommender):
    algorithm_id = "bprmf"

    def __init__(self, d=64, learning_rate=0.01, l2_reg=0.01, epochs=50, seed=0, init_std=0.1):
        self.config = BprConfig(d, learning_rate, l2_reg, epochs, seed, init_std)
        super().__init__(**asdict(self.config))
        self.P = np.zeros((0, d))
        self.Q = np.zeros((0, d))

    def _fit(self, data: TrainingData) -> None:
        cfg = self.config
        rng = make_rng(cfg.seed)
        P = rng.normal(0.0, cfg.init_std, size=(data.n_users, cfg.d))
        Q = rng.normal(0.0, cfg.init_std, size=(data.n_items, cfg.d))
        full = np.flatnonzero(np.diff(data.indptr) == data.n_items)
        if len(full):
            _log.warning("%d users interacted with every item; their interactions are skipped", len(full))
        self.epoch_losses = []
        n = len(data.u)
        for epoch in range(cfg.epochs):
            order = rng.permutation(n)
            draws = rng.random(n)
            total, used = _bpr_epoch(
                P, Q, data.u, data.i, order, draws, data.indptr, data.indices, cfg.learning_rate, cfg.l2_reg
            )
            if not (np.isfinite(P).all() and np.isfinite(Q).all()):
                raise TrainingError(
                    f"BPR parameters became non-finite in epoch {epoch + 1}; "
                    f"last mean loss {self.epoch_losses[-1] if self.epoch_losses else float('nan')}"
                )
            self.epoch_losses.append(total / used if used else float("nan"))
            _log.debug("bprmf epoch %d loss %.6f", epoch + 1, self.epoch_losses[-1])
        self.P, self.Q = P, Q

    def _score(self, local_user, local_items):
        return self.Q[local_items] @ self.P[local_user]

    def _state(self):
        return {"P": self.P, "Q": self.Q}

    def _load_state(self, arrays):
        self.P, self.Q = arrays["P"], arrays["Q"]
