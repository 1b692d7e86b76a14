"""Acceptance criteria, one test each, at the stated tolerances and time
limits. Every test prints a PASS/FAIL line; the lines are collected again
in the pytest terminal summary.

Run just this file with ``pytest tests/test_acceptance.py -v`` (about six
minutes, almost all of it the two desk-scale runs of criterion 7).
"""

import contextlib
import json
import math
import subprocess
import sys
import time
from collections import Counter

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from spbench.data import IdMap, InteractionLog
from spbench.metrics import evaluate_model, read_ranks
from spbench.models import UserKNN, bpr_gradients, bpr_pair_loss
from spbench.models.bpr import BPRMF
from spbench.models.neumf import NeuMF, NeuMfParams, neumf_forward, neumf_gradients, neumf_loss
from spbench.protocol import AlgorithmSpec, ScoreQuad, SpReport, plasticity, run_experiment, stability
from spbench.shift import ShiftConfig, apply_relabel, build_relabel_map, round_half_up
from spbench.split import ExperimentSplits
from support import TINY, as_pairs, brute_rank, random_log, synthetic_splits

EPS = 1e-5
GRAD_TOL = 1e-4


@contextlib.contextmanager
def criterion(number, title, limit_s=None):
    """Time the block, enforce the limit, and record one PASS/FAIL line."""
    info = {}
    start = time.perf_counter()
    failure = None
    try:
        yield info
    except BaseException as exc:
        failure = f"{type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''}"
        raise
    finally:
        elapsed = time.perf_counter() - start
        if failure is None and limit_s is not None and elapsed >= limit_s:
            failure = f"took {elapsed:.2f} s, limit {limit_s} s"
        timing = f"{elapsed:.2f} s" + (f" (limit {limit_s} s)" if limit_s is not None else "")
        extra = f"; {info['detail']}" if "detail" in info else ""
        verdict = "PASS" if failure is None else "FAIL"
        line = f"[{verdict}] criterion {number}: {title}: {timing}{extra}" + (f"; {failure}" if failure else "")
        ACCEPTANCE_LINES.append(line)
        print(line)
    if limit_s is not None:
        assert elapsed < limit_s, f"criterion {number} took {elapsed:.2f} s (limit {limit_s} s)"


# --------------------------------------------------------------------------
# 1


def test_c1_metric_arithmetic():
    with criterion(1, "metric arithmetic on 1000 random score quads", 1.0) as info:
        rng = np.random.default_rng(20240101)
        quads = rng.random((1000, 4))
        quads[:10] = rng.integers(0, 2, size=(10, 4))  # corners of the unit cube
        for s11, s12, s21, s22 in quads.tolist():
            q = ScoreQuad(s11, s12, s21, s22)
            st, pl = stability(q), plasticity(q)
            assert st == 1 - (s11 - s21)
            assert pl == s22 - s12
            assert 0.0 <= st <= 2.0 and -1.0 <= pl <= 1.0
        info["detail"] = "1000 quads exact"


# --------------------------------------------------------------------------
# 2


def test_c2_shift_correctness():
    with criterion(2, "shift correctness on 100 random D2 logs", 5.0) as info:
        rng = np.random.default_rng(7)
        for trial in range(100):
            n_items = int(rng.integers(5, 300))
            idmap = IdMap([], [f"item{k}" for k in range(n_items)])
            history = random_log(rng, 40, n_items, int(rng.integers(50, 400)))
            d2 = random_log(rng, 40, n_items, int(rng.integers(1, 400)), t_max=20_000)
            fraction = float(rng.choice([0.0, 0.1, 0.25, 0.5, 0.75, 1.0, rng.random()]))
            relabel = build_relabel_map(d2.items, ShiftConfig(fraction, trial), idmap)
            distinct = set(d2.items.tolist())
            assert len(relabel) == round_half_up(fraction, len(distinct))
            assert set(relabel.entries) <= distinct
            fresh = set(relabel.entries.values())
            assert len(fresh) == len(relabel)
            pre_existing = set(range(idmap.n_items)) | set(history.items.tolist()) | distinct
            assert not fresh & pre_existing
            shifted = apply_relabel(d2, relabel)
            before, after = Counter(d2.items.tolist()), Counter(shifted.items.tolist())
            for item, count in before.items():
                assert after[relabel.entries.get(item, item)] == count
            assert sum(after.values()) == len(d2)
            assert not set(relabel.entries) & set(after)
        info["detail"] = "100 logs, counts/disjointness/histograms exact"


# --------------------------------------------------------------------------
# 3


def test_c3_split_integrity():
    with criterion(3, "split integrity on synthetic data", 5.0) as info:
        splits, _ = synthetic_splits()
        for period_train, test in ((splits.d1_train, splits.d1_test), (splits.d2_train, splits.d2_test)):
            per_user = Counter(test.users.tolist())
            eligible = set(period_train.users.tolist()) | set(test.users.tolist())
            assert set(per_user) == eligible and set(per_user.values()) == {1}
        rows = lambda log: set(map(tuple, log))  # noqa: E731
        for test in (splits.d1_test, splits.d2_test):
            for train in (splits.m1_train, splits.m2_train):
                assert not rows(test) & rows(train)
        assert rows(splits.m1_train) <= rows(splits.m2_train)
        assert len(splits.m1_train) < len(splits.m2_train)
        info["detail"] = f"{len(splits.d1_test)} + {len(splits.d2_test)} holdout users"


# --------------------------------------------------------------------------
# 4


def _bpr_fd_error(rng):
    d = int(rng.integers(1, 16))
    P = rng.normal(0, 0.5, size=(4, d))
    Q = rng.normal(0, 0.5, size=(6, d))
    u = int(rng.integers(4))
    i, j = (int(x) for x in rng.choice(6, 2, replace=False))
    reg = float(rng.choice([0.0, 0.01, 0.1]))

    def f():
        return bpr_pair_loss(P[u] @ Q[i], P[u] @ Q[j]) + 0.5 * reg * (P[u] @ P[u] + Q[i] @ Q[i] + Q[j] @ Q[j])

    worst = 0.0
    for g, (M, row) in zip(bpr_gradients(P, Q, (u, i, j), reg), ((P, u), (Q, i), (Q, j))):
        for k in range(d):
            old = M[row, k]
            M[row, k] = old + EPS
            up = f()
            M[row, k] = old - EPS
            down = f()
            M[row, k] = old
            num = (up - down) / (2 * EPS)
            worst = max(worst, abs(g[k] - num) / max(abs(g[k]), abs(num), 1e-6))
    return worst


def _neumf_fd_error(rng):
    while True:
        hidden = [int(h) for h in rng.integers(1, 7, size=int(rng.integers(1, 4)))]
        p = NeuMfParams(3, 4, int(rng.integers(1, 5)), int(rng.integers(1, 5)), hidden)
        p.theta[:] = rng.normal(0, 0.5, size=p.size)
        u, i = int(rng.integers(3)), int(rng.integers(4))
        _, (_, zs, _) = neumf_forward(p, u, i)
        if np.min(np.abs(zs)) > 1e-3:  # finite differences are meaningless at a ReLU kink
            break
    y = float(rng.integers(2))
    grads = neumf_gradients(p, u, i, y)
    worst, covered = 0.0, set()
    for name in p.group_names():
        view = p[name]
        if name in ("gmf_user", "mlp_user"):
            idxs = [(u, k) for k in range(view.shape[1])]
        elif name in ("gmf_item", "mlp_item"):
            idxs = [(i, k) for k in range(view.shape[1])]
        else:
            idxs = list(np.ndindex(view.shape))
        for idx in idxs:
            old = view[idx]
            view[idx] = old + EPS
            up = neumf_loss(p, u, i, y)
            view[idx] = old - EPS
            down = neumf_loss(p, u, i, y)
            view[idx] = old
            num = (up - down) / (2 * EPS)
            g = grads[name][idx]
            worst = max(worst, abs(g - num) / max(abs(g), abs(num), 1e-6))
        covered.add(name)
    assert covered == set(p.group_names())
    return worst


def test_c4_gradient_checks():
    with criterion(4, "BPR and NeuMF gradients vs central differences", 30.0) as info:
        rng = np.random.default_rng(4)
        bpr = [_bpr_fd_error(rng) for _ in range(25)]
        neumf = [_neumf_fd_error(rng) for _ in range(25)]
        info["detail"] = f"max rel err BPR {max(bpr):.2e}, NeuMF {max(neumf):.2e} over 25 configs each"
        assert max(bpr) < GRAD_TOL and max(neumf) < GRAD_TOL


# --------------------------------------------------------------------------
# 5


def _knn_oracle(log, k):
    prof = {}
    for u, i, _ in log:
        prof.setdefault(u, set()).add(i)
    scores = {}
    for u in prof:
        sims = sorted(
            ((v, len(prof[u] & prof[v]) / math.sqrt(len(prof[u]) * len(prof[v]))) for v in prof if v != u),
            key=lambda vs: (-vs[1], vs[0]),
        )
        nbrs = sorted([vs for vs in sims if vs[1] > 0][:k])
        total = 0.0
        for _, s in nbrs:
            total += s
        for item in range(15):
            acc = 0.0
            for v, s in nbrs:
                if item in prof[v]:
                    acc += s
            scores[u, item] = acc / total if nbrs else 0.0
    return scores


def test_c5_oracle_equivalence(tmp_path):
    with criterion(5, "UKNN brute-force oracle and metric recount", 5.0) as info:
        rng = np.random.default_rng(5)
        # every user and every item appears at least once
        users = np.concatenate([np.arange(10), rng.integers(0, 10, 50)])
        items = np.concatenate([np.arange(15), rng.integers(0, 15, 45)])
        log = InteractionLog.from_arrays(users, items, rng.integers(0, 100, 60))
        assert log.n_users == 10 and log.n_items == 15
        model = UserKNN(k_neighbors=3).fit(log)
        oracle = _knn_oracle(log, 3)
        for u in range(10):
            assert model.score_items(u, range(15)).tolist() == [oracle[u, i] for i in range(15)]

        big = random_log(rng, 50, 60, 1500)
        last = {}
        for idx, (u, _, _) in enumerate(big):
            last[u] = idx
        mask = np.zeros(len(big), bool)
        mask[list(last.values())] = True
        train, test = big.select(~mask), big.select(mask)
        assert test.n_users == 50 and set(test.users.tolist()) <= set(train.users.tolist())
        knn = UserKNN(k_neighbors=10).fit(train)
        outcome = evaluate_model(knn, test, np.arange(60), ["hit_ratio", "ndcg"], [10, 20])
        outcome.write_ranks(tmp_path / "ranks.csv")
        ranks, truth = read_ranks(tmp_path / "ranks.csv")
        assert len(ranks) == 50
        for u, t in truth.items():
            seen = set(knn.training_items(u).tolist())
            scores = {i: knn.score(u, i) for i in range(60) if i not in seen}
            assert ranks[u] == brute_rank(scores, t)
        for k in (10, 20):
            hits = sum(r is not None and r <= k for r in ranks.values())
            gain = math.fsum(1 / math.log2(r + 1) for r in ranks.values() if r is not None and r <= k)
            assert outcome.aggregate[f"hit_ratio@{k}"] == hits / 50
            assert outcome.aggregate[f"ndcg@{k}"] == gain / 50
        info["detail"] = "10x15 oracle bitwise, 50-user recount exact"


# --------------------------------------------------------------------------
# 6

ALGOS = [AlgorithmSpec(a, a, {}) for a in ("uknn", "bprmf", "neumf")]


def test_c6_degenerate_identities():
    with criterion(6, "degenerate-protocol identities", 120.0) as info:
        splits, _ = synthetic_splits(fraction=0.5)
        same = ExperimentSplits.build(
            splits.d0, splits.d1_train, splits.d1_test, InteractionLog.empty(), splits.d2_test
        )
        rep = run_experiment(same, ALGOS, ["hit_ratio", "ndcg", "coverage"], 20, seed=11, seed_mode="shared")
        for r in rep.results:
            assert r.ok, r.error
            for q in r.quads:
                assert stability(q) == 1.0 and plasticity(q) == 0.0, (r.name, q)

        full, relabel = synthetic_splits(fraction=1.0)
        fresh = set(relabel.entries.values())
        assert set(full.d2_test.items.tolist()) <= fresh
        rep = run_experiment(full, ALGOS, ["hit_ratio", "ndcg"], 20, seed=11)
        s22 = {}
        for r in rep.results:
            assert r.ok, r.error
            for q in r.quads:
                assert q.s12 == 0.0 and plasticity(q) == q.s22, (r.name, q)
                s22[f"{r.name}/{q.metric}"] = round(q.s22, 3)
        info["detail"] = f"empty d2_train: S=1, P=0 for 3 algos x 3 metrics; 100% shift: S12=0 ({len(s22)} quads)"


# --------------------------------------------------------------------------
# 7, 8: desk-scale runs through the command line


@pytest.fixture(scope="module")
def desk_runs(tmp_path_factory):
    base = tmp_path_factory.mktemp("desk")
    outs, times = [], []
    for name in ("first", "second"):
        out = base / name
        start = time.perf_counter()
        proc = subprocess.run(
            [sys.executable, "-m", "spbench.cli", "all", "--seed", "42", "--out", str(out)],
            capture_output=True, text=True,
        )
        times.append(time.perf_counter() - start)
        assert proc.returncode == 0, proc.stderr
        outs.append(out)
    return outs, times


def test_c7_end_to_end_determinism(desk_runs):
    (a, b), times = desk_runs
    with criterion(7, "two desk-scale `all` runs give byte-identical reports", None) as info:
        total = sum(times)
        ja = (a / "report" / "report.json").read_bytes()
        jb = (b / "report" / "report.json").read_bytes()
        assert ja == jb
        assert (a / "run" / "report.json").read_bytes() == (b / "run" / "report.json").read_bytes()
        doc = json.loads(ja)
        assert {r["algorithm"] for r in doc["results"]} == {"uknn", "bprmf", "neumf"}
        assert all(r["status"] == "ok" for r in doc["results"])
        man = json.loads((a / "prepared" / "manifest.json").read_text())
        info["detail"] = (
            f"{man['users']} users, {man['items']} items, {man['interactions']} interactions; "
            f"runs {times[0]:.0f} s + {times[1]:.0f} s = {total:.0f} s (limit 600 s)"
        )
        assert total < 600


def test_c8_direction_check(desk_runs):
    (a, _), _ = desk_runs
    with criterion(8, "plasticity direction BPRMF, NeuMF > UKNN (non-blocking)", None) as info:
        report = SpReport.read(a / "run" / "report.json")
        checks = {(c["metric"], c["k"]): c for c in report.direction_checks()}
        doc = json.loads((a / "run" / "report.json").read_text())
        assert doc["direction_check"] == report.direction_checks()
        parts = []
        for (metric, k), c in sorted(checks.items()):
            assert isinstance(c["holds"], bool)
            parts.append(
                f"{metric}@{k}: uknn {c['uknn_plasticity']:.4f} bprmf {c['bprmf_plasticity']:.4f} "
                f"neumf {c['neumf_plasticity']:.4f} -> {'holds' if c['holds'] else 'does not hold'}"
            )
        info["detail"] = "reported; " + " | ".join(parts)


# --------------------------------------------------------------------------
# 9


def test_c9_training_sanity():
    with criterion(9, "training sanity on the tiny fixture", 30.0) as info:
        assert len(TINY) == 12 and TINY.n_users == 4 and TINY.n_items == 6
        bpr = BPRMF(epochs=200, seed=0).fit(TINY)
        drop = 1 - bpr.epoch_losses[-1] / bpr.epoch_losses[0]
        neumf = NeuMF(epochs=1, seed=0).fit(TINY)
        first = neumf.epoch_losses[0]
        info["detail"] = f"BPR loss {bpr.epoch_losses[0]:.4f} -> {bpr.epoch_losses[-1]:.4f} ({drop:.1%} drop); " \
                         f"NeuMF first epoch {first:.4f} (ln 2 = {math.log(2):.4f})"
        assert drop >= 0.5
        assert abs(first - math.log(2)) <= 0.2


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v", "-s"]))
