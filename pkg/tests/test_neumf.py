import math

import numpy as np
import pytest

from spbench.errors import TrainingError
from spbench.models import NeuMF, NeuMfConfig, NeuMfParams, neumf_forward, neumf_gradients, neumf_loss
from spbench.models.base import Recommender
from spbench.models.bpr import sigmoid
from support import TINY, random_log

EPS = 1e-5


def random_params(rng, n_users=3, n_items=4, d_g=None, d_m=None, hidden=None, scale=0.5):
    d_g = d_g or int(rng.integers(1, 5))
    d_m = d_m or int(rng.integers(1, 5))
    hidden = hidden or [int(h) for h in rng.integers(1, 6, size=int(rng.integers(1, 4)))]
    p = NeuMfParams(n_users, n_items, d_g, d_m, hidden)
    p.theta[:] = rng.normal(0.0, scale, size=p.size)
    return p


def finite_difference(params, u, i, y, name):
    view = params[name]
    grad = np.zeros(view.shape)
    rows = {"gmf_user": u, "mlp_user": u, "gmf_item": i, "mlp_item": i}
    if name in rows:
        targets = [(rows[name], f) for f in range(view.shape[1])]
    else:
        targets = list(np.ndindex(view.shape))
    for idx in targets:
        old = view[idx]
        view[idx] = old + EPS
        up = neumf_loss(params, u, i, y)
        view[idx] = old - EPS
        down = neumf_loss(params, u, i, y)
        view[idx] = old
        grad[idx] = (up - down) / (2 * EPS)
    return grad


def away_from_kinks(params, u, i, margin=1e-3):
    _, (_, zs, _) = neumf_forward(params, u, i)
    return np.min(np.abs(zs)) > margin


def test_layout_chains():
    p = NeuMfParams(5, 7, 3, 4, [6, 2])
    assert p["W1"].shape == (6, 8) and p["W2"].shape == (2, 6)
    assert p["out_w"].shape == (3 + 2,) and p["out_b"].shape == (1,)
    assert p.group_names() == ["gmf_user", "gmf_item", "mlp_user", "mlp_item", "W1", "b1", "W2", "b2", "out_w", "out_b"]
    assert p.size == sum(p[n].size for n in p.group_names())


def test_zero_parameters_give_one_half():
    p = NeuMfParams(2, 2, 3, 3, [4, 2])
    prob, (_, _, logit) = neumf_forward(p, 1, 1)
    assert prob == 0.5 and logit == 0.0


def test_output_is_a_probability():
    rng = np.random.default_rng(0)
    for _ in range(50):
        # moderate weights: beyond |logit| ~ 37 the double rounds to 0 or 1
        p = random_params(rng, scale=1.0)
        prob, (_, _, logit) = neumf_forward(p, int(rng.integers(3)), int(rng.integers(4)))
        assert abs(logit) < 30
        assert 0.0 < prob < 1.0


def test_hand_computed_forward():
    p = NeuMfParams(1, 1, 2, 2, [4, 2])
    p["gmf_user"][0] = [1.0, 2.0]
    p["gmf_item"][0] = [0.5, -1.0]
    p["mlp_user"][0] = [1.0, -1.0]
    p["mlp_item"][0] = [2.0, 0.5]
    p["W1"][...] = [[1, 0, 0, 0], [0, 1, 0, 0], [1, 1, 1, 1], [0, 0, -1, 1]]
    p["b1"][...] = [0.0, 0.5, -1.0, 0.25]
    p["W2"][...] = [[1, 1, 0, 0], [0, 0, 1, -1]]
    p["b2"][...] = [0.0, 0.5]
    p["out_w"][...] = [1.0, 0.5, 0.25, -0.5]
    p["out_b"][...] = [0.1]
    # a0 = [1, -1, 2, 0.5]
    # z1 = [1, -0.5, 1.5, -1.25]   -> a1 = [1, 0, 1.5, 0]
    # z2 = [1, 2.0]                -> a2 = [1, 2]
    # gmf = [0.5, -2]; logit = 0.5 - 1 + 0.25 - 1 + 0.1 = -1.15
    prob, (acts, zs, logit) = neumf_forward(p, 0, 0)
    assert acts.tolist() == [1, -1, 2, 0.5, 1, 0, 1.5, 0, 1, 2]
    assert zs.tolist() == [1, -0.5, 1.5, -1.25, 1, 2]
    assert logit == pytest.approx(-1.15, abs=1e-15)
    assert prob == pytest.approx(1 / (1 + math.exp(1.15)), rel=1e-15)


@pytest.mark.parametrize("seed", range(20))
def test_gradients_match_finite_differences(seed):
    rng = np.random.default_rng(1000 + seed)
    while True:
        p = random_params(rng)
        u, i = int(rng.integers(3)), int(rng.integers(4))
        if away_from_kinks(p, u, i):
            break
    y = float(seed % 2)
    grads = neumf_gradients(p, u, i, y)
    assert set(grads) == set(p.group_names())
    for name in p.group_names():
        numeric = finite_difference(p, u, i, y, name)
        analytic = grads[name]
        denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-6)
        assert np.max(np.abs(analytic - numeric) / denom) < 1e-4, name


def test_untouched_embedding_rows_have_zero_gradient():
    p = random_params(np.random.default_rng(3))
    g = neumf_gradients(p, 1, 2, 1.0)
    for name, row in (("gmf_user", 1), ("mlp_user", 1), ("gmf_item", 2), ("mlp_item", 2)):
        mask = np.ones(g[name].shape[0], dtype=bool)
        mask[row] = False
        assert not g[name][mask].any()


def test_output_error_vanishes_when_prediction_matches_label():
    p = NeuMfParams(1, 1, 2, 2, [3])
    # logit 0 -> p = 0.5, the midpoint label gives a zero error term
    g = neumf_gradients(p, 0, 0, 0.5)
    assert g["out_b"][0] == 0.0
    assert not any(v.any() for v in g.values())


def test_label_flips_output_error_sign():
    p = random_params(np.random.default_rng(4))
    prob, _ = neumf_forward(p, 0, 0)
    g1, g0 = neumf_gradients(p, 0, 0, 1.0), neumf_gradients(p, 0, 0, 0.0)
    assert g1["out_b"][0] == pytest.approx(prob - 1.0)
    assert g0["out_b"][0] == pytest.approx(prob)
    assert np.sign(g1["out_b"][0]) == -np.sign(g0["out_b"][0])


def test_dead_relu_blocks_incoming_gradient():
    p = random_params(np.random.default_rng(5), d_g=2, d_m=2, hidden=[4, 3])
    p["b1"][1] = -100.0  # unit 1 of the first layer is dead
    g = neumf_gradients(p, 0, 0, 1.0)
    assert not g["W1"][1].any() and g["b1"][1] == 0.0
    assert g["W1"].any()


def test_scores_are_logits_and_order_like_probabilities():
    model = NeuMF(d_g=4, d_m=4, hidden=[8, 4], epochs=3, seed=2).fit(random_log(np.random.default_rng(6), 20, 30, 200))
    rng = np.random.default_rng(7)
    pairs = [(int(model.known_users[rng.integers(len(model.known_users))]),
              int(model.known_items[rng.integers(len(model.known_items))])) for _ in range(100)]
    logits, probs = [], []
    for u, i in pairs:
        lu = model.local_user(u)
        li = int(np.searchsorted(model.known_items, i))
        prob, (_, _, logit) = neumf_forward(model.params, lu, li)
        assert model.score(u, i) == pytest.approx(logit, rel=1e-9, abs=1e-12)
        logits.append(model.score(u, i))
        probs.append(prob)
    assert np.array_equal(np.argsort(logits, kind="stable"), np.argsort(probs, kind="stable"))


def test_zero_params_score_zero():
    model = NeuMF(d_g=2, d_m=2, hidden=[2], epochs=1).fit(TINY)
    model.params.theta[:] = 0.0
    model._item_part = None
    assert model.score(0, 3) == 0.0


def test_first_epoch_loss_near_ln2():
    model = NeuMF(d_g=2, d_m=2, hidden=[4, 2], epochs=1, seed=0).fit(TINY)
    assert abs(model.epoch_losses[0] - math.log(2)) <= 0.2


def test_tiny_instance_learns():
    model = NeuMF(d_g=8, d_m=8, hidden=[16, 8], negatives_per_positive=1,
                  learning_rate=0.05, epochs=300, seed=0).fit(TINY)
    assert model.epoch_losses[-1] < 0.2 * model.epoch_losses[0]


def test_same_seed_same_parameters_and_round_trip(tmp_path):
    log = random_log(np.random.default_rng(8), 30, 40, 300)
    a = NeuMF(d_g=4, d_m=4, hidden=[8, 4], epochs=2, seed=5).fit(log)
    b = NeuMF(d_g=4, d_m=4, hidden=[8, 4], epochs=2, seed=5).fit(log)
    assert np.array_equal(a.params.theta, b.params.theta)
    a.save(tmp_path / "m.npz")
    c = Recommender.load(tmp_path / "m.npz")
    for u in a.known_users.tolist():
        assert np.array_equal(c.score_items(u, range(40)), a.score_items(u, range(40)))


def test_divergence_is_reported():
    log = random_log(np.random.default_rng(0), 10, 20, 100)
    with pytest.raises(TrainingError, match="non-finite"):
        NeuMF(d_g=2, d_m=2, hidden=[4], learning_rate=1e200, embedding_std=1e100, epochs=3).fit(log)


def test_config_validation():
    with pytest.raises(ValueError):
        NeuMfConfig(negatives_per_positive=0)
    with pytest.raises(ValueError):
        NeuMfConfig(hidden=(4, 0))
    with pytest.raises(ValueError):
        NeuMfParams(2, 2, 2, 2, [2], theta=np.zeros(3))


def test_sigmoid_is_stable():
    assert sigmoid(-800.0) == 0.0 and sigmoid(800.0) == 1.0
