"""Neural matrix factorization: a GMF branch (element-wise product of user
and item embeddings) and an MLP branch (ReLU tower over the concatenated
user and item embeddings), joined by a logistic output unit.

Training is pointwise binary cross-entropy with sampled negatives and plain
per-example SGD. Backpropagation is written out by hand in a numba kernel;
the same kernel serves training and :func:`neumf_gradients`.

All parameters live in one flat float64 vector. :class:`NeuMfParams` knows
the layout and hands out named views into it.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np
from numba import njit

from ..errors import TrainingError
from ..rng import make_rng
from .base import Recommender, TrainingData
from .bpr import _nth_negative, sigmoid, softplus

_log = logging.getLogger(__name__)


@dataclass(frozen=True)
class NeuMfConfig:
    d_g: int = 16
    d_m: int = 32
    hidden: tuple[int, ...] = (64, 32, 16)
    negatives_per_positive: int = 4
    learning_rate: float = 0.001
    epochs: int = 30
    seed: int = 0
    embedding_std: float = 0.01

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.d_g < 1 or self.d_m < 1 or not self.hidden or min(self.hidden) < 1:
            raise ValueError("embedding sizes and layer widths must be positive")
        if self.negatives_per_positive < 1:
            raise ValueError("negatives_per_positive must be at least 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")


class NeuMfParams:
    """Flat parameter vector with named views.

    Groups, in storage order: ``gmf_user``, ``gmf_item``, ``mlp_user``,
    ``mlp_item``, then ``W1, b1, ..., WL, bL`` (``Wl`` has shape
    ``(out, in)``), then ``out_w`` and ``out_b``. Everything from ``W1`` on
    is the dense block shared by all examples.
    """

    def __init__(self, n_users, n_items, d_g, d_m, hidden, theta=None):
        self.n_users, self.n_items = int(n_users), int(n_items)
        self.d_g, self.d_m = int(d_g), int(d_m)
        self.widths = np.array([2 * self.d_m, *hidden], dtype=np.int64)
        shapes = [
            ("gmf_user", (self.n_users, self.d_g)),
            ("gmf_item", (self.n_items, self.d_g)),
            ("mlp_user", (self.n_users, self.d_m)),
            ("mlp_item", (self.n_items, self.d_m)),
        ]
        for l in range(1, len(self.widths)):
            shapes.append((f"W{l}", (int(self.widths[l]), int(self.widths[l - 1]))))
            shapes.append((f"b{l}", (int(self.widths[l]),)))
        shapes.append(("out_w", (self.d_g + int(self.widths[-1]),)))
        shapes.append(("out_b", (1,)))
        self.layout: dict[str, tuple[int, tuple[int, ...]]] = {}
        offset = 0
        for name, shape in shapes:
            self.layout[name] = (offset, shape)
            offset += int(np.prod(shape))
        self.size = offset
        self.offsets = np.array([off for off, _ in self.layout.values()], dtype=np.int64)
        self.dense_start = self.layout["W1"][0]
        self.theta = np.zeros(offset) if theta is None else np.ascontiguousarray(theta, dtype=np.float64)
        if self.theta.shape != (offset,):
            raise ValueError(f"parameter vector has {self.theta.size} entries, layout needs {offset}")

    @property
    def n_layers(self) -> int:
        return len(self.widths) - 1

    def group_names(self) -> list[str]:
        return list(self.layout)

    def __getitem__(self, name) -> np.ndarray:
        off, shape = self.layout[name]
        return self.theta[off : off + int(np.prod(shape))].reshape(shape)

    def copy(self) -> "NeuMfParams":
        return NeuMfParams(self.n_users, self.n_items, self.d_g, self.d_m, self.widths[1:], self.theta.copy())

    @classmethod
    def initialize(cls, n_users, n_items, config: NeuMfConfig, rng) -> "NeuMfParams":
        """Embeddings ~ N(0, embedding_std); ReLU layers He-scaled normal,
        output unit Xavier-scaled normal; biases zero."""
        p = cls(n_users, n_items, config.d_g, config.d_m, config.hidden)
        for name in ("gmf_user", "gmf_item", "mlp_user", "mlp_item"):
            p[name][...] = rng.normal(0.0, config.embedding_std, size=p[name].shape)
        for l in range(1, p.n_layers + 1):
            W = p[f"W{l}"]
            W[...] = rng.normal(0.0, np.sqrt(2.0 / W.shape[1]), size=W.shape)
        w = p["out_w"]
        w[...] = rng.normal(0.0, np.sqrt(1.0 / w.shape[0]), size=w.shape)
        return p


@njit(cache=True, fastmath=True)
def _forward(theta, offs, widths, d_g, d_m, u, i, acts, zs):
    """Fill activations; return the output logit.

    ``acts`` holds a0 (concatenated MLP embeddings) followed by every layer
    output; ``zs`` holds every layer's pre-activation.
    """
    gu = offs[0] + u * d_g
    gi = offs[1] + i * d_g
    mu = offs[2] + u * d_m
    mi = offs[3] + i * d_m
    for f in range(d_m):
        acts[f] = theta[mu + f]
        acts[d_m + f] = theta[mi + f]
    n_layers = widths.shape[0] - 1
    a_in = 0
    z_pos = 0
    for l in range(n_layers):
        n_in = widths[l]
        n_out = widths[l + 1]
        W = offs[4 + 2 * l]
        b = offs[5 + 2 * l]
        a_out = a_in + n_in
        x = acts[a_in:a_out]
        for o in range(n_out):
            row = theta[W + o * n_in : W + (o + 1) * n_in]
            s = 0.0
            for k in range(n_in):
                s += row[k] * x[k]
            s += theta[b + o]
            zs[z_pos + o] = s
            acts[a_out + o] = s if s > 0.0 else 0.0
        a_in = a_out
        z_pos += n_out
    ow = offs[4 + 2 * n_layers]
    ob = offs[5 + 2 * n_layers]
    logit = theta[ob]
    for f in range(d_g):
        logit += theta[ow + f] * theta[gu + f] * theta[gi + f]
    top = widths[n_layers]
    for f in range(top):
        logit += theta[ow + d_g + f] * acts[a_in + f]
    return logit


@njit(cache=True, fastmath=True)
def _backward(theta, offs, widths, d_g, d_m, u, i, y, acts, zs, logit, g_emb, g_dense, lr):
    """Backpropagate the BCE loss of one example.

    ``g_emb`` receives the [gmf_user[u], gmf_item[i], mlp_user[u],
    mlp_item[i]] row gradients. With ``lr == 0`` the gradient of the dense
    block (every layer plus the output unit) is written to ``g_dense``;
    otherwise the dense block takes its SGD step in place, each entry
    updated right after its last read, and ``g_dense`` is left alone.
    """
    apply = lr != 0.0
    n_layers = widths.shape[0] - 1
    dense0 = offs[4]
    gu = offs[0] + u * d_g
    gi = offs[1] + i * d_g
    ow = offs[4 + 2 * n_layers]
    ob = offs[5 + 2 * n_layers]
    delta = sigmoid(logit) - y

    for f in range(d_g):
        g_gmf = delta * theta[ow + f]
        g_emb[f] = g_gmf * theta[gi + f]
        g_emb[d_g + f] = g_gmf * theta[gu + f]
        g = delta * theta[gu + f] * theta[gi + f]
        if apply:
            theta[ow + f] -= lr * g
        else:
            g_dense[ow - dense0 + f] = g

    total_acts = 0
    for l in range(n_layers + 1):
        total_acts += widths[l]
    top = widths[n_layers]
    a_top = total_acts - top
    g_a = np.empty(top)
    for f in range(top):
        g_a[f] = delta * theta[ow + d_g + f]
        g = delta * acts[a_top + f]
        if apply:
            theta[ow + d_g + f] -= lr * g
        else:
            g_dense[ow - dense0 + d_g + f] = g
    if apply:
        theta[ob] -= lr * delta
    else:
        g_dense[ob - dense0] = delta

    a_out = a_top
    z_end = total_acts - widths[0]
    for l in range(n_layers - 1, -1, -1):
        n_in = widths[l]
        n_out = widths[l + 1]
        W = offs[4 + 2 * l]
        b = offs[5 + 2 * l]
        a_in = a_out - n_in
        z_pos = z_end - n_out
        g_prev = np.zeros(n_in)
        x = acts[a_in : a_in + n_in]
        for o in range(n_out):
            # ReLU gate; subgradient 0 at 0
            gz = g_a[o] if zs[z_pos + o] > 0.0 else 0.0
            row = theta[W + o * n_in : W + (o + 1) * n_in]
            if apply:
                if gz != 0.0:
                    theta[b + o] -= lr * gz
                    step = lr * gz
                    for k in range(n_in):
                        g_prev[k] += row[k] * gz
                        row[k] -= step * x[k]
            else:
                g_dense[b - dense0 + o] = gz
                grow = g_dense[W - dense0 + o * n_in : W - dense0 + (o + 1) * n_in]
                for k in range(n_in):
                    grow[k] = gz * x[k]
                    g_prev[k] += row[k] * gz
        g_a = g_prev
        a_out = a_in
        z_end = z_pos

    base = 2 * d_g
    for f in range(2 * d_m):
        g_emb[base + f] = g_a[f]


@njit(cache=True, fastmath=True)
def _bce(logit, y):
    return y * softplus(-logit) + (1.0 - y) * softplus(logit)


@njit(cache=True, fastmath=True)
def _sgd_step(theta, offs, widths, d_g, d_m, u, i, y, lr, acts, zs, g_emb, g_dense):
    logit = _forward(theta, offs, widths, d_g, d_m, u, i, acts, zs)
    _backward(theta, offs, widths, d_g, d_m, u, i, y, acts, zs, logit, g_emb, g_dense, lr)
    gu = offs[0] + u * d_g
    gi = offs[1] + i * d_g
    mu = offs[2] + u * d_m
    mi = offs[3] + i * d_m
    for f in range(d_g):
        theta[gu + f] -= lr * g_emb[f]
        theta[gi + f] -= lr * g_emb[d_g + f]
    for f in range(d_m):
        theta[mu + f] -= lr * g_emb[2 * d_g + f]
        theta[mi + f] -= lr * g_emb[2 * d_g + d_m + f]
    return _bce(logit, y)


@njit(cache=True, fastmath=True)
def _neumf_epoch(theta, offs, widths, d_g, d_m, u_arr, i_arr, order, draws, indptr, indices, n_items, lr):
    total_acts = 0
    for l in range(widths.shape[0]):
        total_acts += widths[l]
    acts = np.empty(total_acts)
    zs = np.empty(total_acts - widths[0])
    g_emb = np.empty(2 * d_g + 2 * d_m)
    g_dense = np.empty(0)
    n_neg = draws.shape[1]
    total = 0.0
    count = 0
    for t in range(order.shape[0]):
        idx = order[t]
        u = u_arr[idx]
        total += _sgd_step(theta, offs, widths, d_g, d_m, u, i_arr[idx], 1.0, lr, acts, zs, g_emb, g_dense)
        count += 1
        pos = indices[indptr[u] : indptr[u + 1]]
        m = n_items - pos.shape[0]
        if m == 0:
            continue
        for s in range(n_neg):
            r = int(draws[t, s] * m)
            if r >= m:
                r = m - 1
            j = _nth_negative(pos, r)
            total += _sgd_step(theta, offs, widths, d_g, d_m, u, j, 0.0, lr, acts, zs, g_emb, g_dense)
            count += 1
    return total, count


def _buffers(params: NeuMfParams):
    total = int(params.widths.sum())
    return np.empty(total), np.empty(total - int(params.widths[0]))


def neumf_forward(params: NeuMfParams, user: int, item: int):
    """Probability that ``user`` likes ``item`` and the cached activations
    ``(acts, zs, logit)`` needed for backpropagation."""
    acts, zs = _buffers(params)
    logit = _forward(params.theta, params.offsets, params.widths, params.d_g, params.d_m, user, item, acts, zs)
    return float(sigmoid(logit)), (acts, zs, logit)


def neumf_loss(params: NeuMfParams, user: int, item: int, label: float) -> float:
    _, (_, _, logit) = neumf_forward(params, user, item)
    return float(_bce(logit, float(label)))


def neumf_gradients(params: NeuMfParams, user: int, item: int, label: float, cache=None) -> dict[str, np.ndarray]:
    """Gradient of the example's BCE loss for every parameter group, as
    arrays shaped like the groups (embedding tables are zero outside the
    touched rows)."""
    if cache is None:
        _, cache = neumf_forward(params, user, item)
    acts, zs, logit = cache
    g_emb = np.empty(2 * params.d_g + 2 * params.d_m)
    g_dense = np.empty(params.size - params.dense_start)
    _backward(
        params.theta, params.offsets, params.widths, params.d_g, params.d_m,
        user, item, float(label), acts, zs, logit, g_emb, g_dense, 0.0,
    )
    flat = np.zeros(params.size)
    flat[params.dense_start :] = g_dense
    grads = NeuMfParams(params.n_users, params.n_items, params.d_g, params.d_m, params.widths[1:], flat)
    dg, dm = params.d_g, params.d_m
    grads["gmf_user"][user] = g_emb[:dg]
    grads["gmf_item"][item] = g_emb[dg : 2 * dg]
    grads["mlp_user"][user] = g_emb[2 * dg : 2 * dg + dm]
    grads["mlp_item"][item] = g_emb[2 * dg + dm :]
    return {name: grads[name].copy() for name in grads.group_names()}


class NeuMF(Recommender):
    """Scores are output logits: same order as probabilities, one
    ``exp`` cheaper.

    Ranking uses a batched numpy forward pass; it agrees with
    :func:`neumf_forward` up to floating-point rounding.
    """

    algorithm_id = "neumf"

    def __init__(self, d_g=16, d_m=32, hidden=(64, 32, 16), negatives_per_positive=4,
                 learning_rate=0.001, epochs=30, seed=0, embedding_std=0.01):
        self.config = NeuMfConfig(d_g, d_m, tuple(hidden), negatives_per_positive,
                                  learning_rate, epochs, seed, embedding_std)
        hp = asdict(self.config)
        hp["hidden"] = list(self.config.hidden)
        super().__init__(**hp)
        self.params: NeuMfParams | None = None
        self._item_part = None

    def _fit(self, data: TrainingData) -> None:
        cfg = self.config
        rng = make_rng(cfg.seed)
        params = NeuMfParams.initialize(data.n_users, data.n_items, cfg, rng)
        if np.any(np.diff(data.indptr) == data.n_items):
            _log.warning("some users interacted with every item; no negatives are drawn for them")
        self.epoch_losses = []
        n = len(data.u)
        for epoch in range(cfg.epochs):
            order = rng.permutation(n)
            draws = rng.random((n, cfg.negatives_per_positive))
            total, count = _neumf_epoch(
                params.theta, params.offsets, params.widths, cfg.d_g, cfg.d_m,
                data.u, data.i, order, draws, data.indptr, data.indices, data.n_items, cfg.learning_rate,
            )
            if not np.isfinite(params.theta).all():
                raise TrainingError(
                    f"NeuMF parameters became non-finite in epoch {epoch + 1}; "
                    f"last good epoch {epoch} (loss {self.epoch_losses[-1] if self.epoch_losses else 'n/a'})"
                )
            self.epoch_losses.append(total / count)
            _log.debug("neumf epoch %d loss %.6f", epoch + 1, self.epoch_losses[-1])
        self.params = params
        self._item_part = None

    def _score(self, local_user, local_items):
        # batched numpy forward pass; the item half of the first layer is
        # shared by all users, so it is computed once per model
        p, dm, dg = self.params, self.params.d_m, self.params.d_g
        W1 = p["W1"]
        if self._item_part is None:
            self._item_part = p["mlp_item"] @ W1[:, dm:].T
        a = np.maximum(self._item_part[local_items] + (W1[:, :dm] @ p["mlp_user"][local_user] + p["b1"]), 0.0)
        for l in range(2, p.n_layers + 1):
            a = np.maximum(a @ p[f"W{l}"].T + p[f"b{l}"], 0.0)
        w = p["out_w"]
        gmf = (p["gmf_item"][local_items] * p["gmf_user"][local_user]) @ w[:dg]
        return gmf + a @ w[dg:] + p["out_b"][0]

    def _state(self):
        p = self.params
        return {"theta": p.theta, "shape": np.array([p.n_users, p.n_items], dtype=np.int64)}

    def _load_state(self, arrays):
        n_users, n_items = arrays["shape"].tolist()
        cfg = self.config
        self.params = NeuMfParams(n_users, n_items, cfg.d_g, cfg.d_m, cfg.hidden, arrays["theta"])
        self._item_part = None
