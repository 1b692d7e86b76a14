"""
=======================================
Checking hand-written gradients
=======================================

Both latent-factor models are trained with gradients derived by hand. This
script compares them with central finite differences, the same check the
test suite runs.
"""

# %%
# BPR
# ---
# The BPR objective for one (user, positive, negative) triple is
# ``softplus(x_uj - x_ui)`` plus an L2 term.
import numpy as np

from spbench.models import NeuMfParams, bpr_gradients, bpr_pair_loss, neumf_gradients, neumf_loss

rng = np.random.default_rng(0)
eps = 1e-5
P, Q = rng.normal(0, 0.5, (2, 6)), rng.normal(0, 0.5, (3, 6))
reg = 0.01


def bpr_objective():
    return bpr_pair_loss(P[0] @ Q[1], P[0] @ Q[2]) + reg / 2 * (P[0] @ P[0] + Q[1] @ Q[1] + Q[2] @ Q[2])


gp, gi, gj = bpr_gradients(P, Q, (0, 1, 2), reg)
numeric = np.empty(6)
for f in range(6):
    P[0, f] += eps
    up = bpr_objective()
    P[0, f] -= 2 * eps
    down = bpr_objective()
    P[0, f] += eps
    numeric[f] = (up - down) / (2 * eps)
print("BPR user-factor gradient, max abs diff:", np.abs(gp - numeric).max())

# %%
# NeuMF
# -----
# For the network every parameter group is checked: both embedding
# branches, each ReLU layer and the output unit.
params = NeuMfParams(2, 3, 4, 4, [8, 4])
params.theta[:] = rng.normal(0, 0.5, params.size)
grads = neumf_gradients(params, 1, 2, 1.0)
for name in params.group_names():
    view = params[name]
    flat = view.reshape(-1)
    analytic = grads[name].reshape(-1)
    worst = 0.0
    for k in range(flat.size):
        old = flat[k]
        flat[k] = old + eps
        up = neumf_loss(params, 1, 2, 1.0)
        flat[k] = old - eps
        down = neumf_loss(params, 1, 2, 1.0)
        flat[k] = old
        num = (up - down) / (2 * eps)
        worst = max(worst, abs(num - analytic[k]) / max(abs(num), abs(analytic[k]), 1e-6))
    print(f"{name:>9}: max relative error {worst:.1e}")
