"""Acceptance checks, one test per criterion.

Each test prints a PASS/FAIL line; the lines are repeated in the pytest
terminal summary. Run alone with ``pytest tests/test_acceptance.py -v``.
"""

import time

import numpy as np

from hashvpr import autodiff as ad
from hashvpr.autodiff import Parameter
from hashvpr.backbone import AdaptedBackbone, Backbone, BackboneConfig
from hashvpr.descriptors import BinaryCode, binary_cosine, hamming_distance, sign_hash_rows
from hashvpr.evaluation import GroundTruthSpec, latency_bench, recall_at_n
from hashvpr.experiments import run_hashing_ablation, two_stage_vs_float
from hashvpr.geo import (
    PITTS_MSLS,
    PlaceRecord,
    assign_category,
    divide,
    group_index,
)
from hashvpr.index import build_binary_index, build_float_store, hamming_topk, l2_topk
from hashvpr.losses import HASH_MODES, LossConfig, ms_loss, sc_quantization_loss
from hashvpr.side import MultiConvAdapter, Placement, SideBranch, SideNetwork, gem
from hashvpr.synthetic import dyadic_unit_rows

from acceptance_report import report
from oracles import hamming_oracle, l2_oracle
from recall_fixtures import DATABASE, FIRST_MATCH, QUERY_RECORDS, RANKED, RECALL

TOY = BackboneConfig(depth=6, dim=64, heads=4, grid=(8, 8), patch=4)


def test_hashing_identity():
    t0 = time.perf_counter()
    bad = 0
    for d in (64, 512):
        rng = np.random.default_rng(d)
        bits = rng.integers(0, 2, (2, 10_000, d)).astype(np.uint8)
        wa, wb = sign_hash_rows(bits[0] * 2.0 - 1.0), sign_hash_rows(bits[1] * 2.0 - 1.0)
        ref_h = (bits[0] != bits[1]).sum(axis=1)
        for i in range(10_000):
            a, b = BinaryCode(wa[i], d), BinaryCode(wb[i], d)
            h = hamming_distance(a, b)
            bad += h != ref_h[i] or binary_cosine(a, b) != (d - 2 * h) / d
    elapsed = time.perf_counter() - t0
    report("1 hashing identity", bad == 0 and elapsed < 1.0,
           f"{bad} mismatches over 20000 pairs in {elapsed:.2f}s (limit 1s)")


def test_ste_exactness():
    rng = np.random.default_rng(0)
    labels = np.repeat(np.arange(4), 2)
    cfg = LossConfig()
    downstream = [
        lambda b: ad.sum(ad.mul(b, ad.constant(rng_w))),
        lambda b: ms_loss(ad.mul(b, 1 / 4.0), labels, cfg),
        lambda b: sc_quantization_loss(ad.constant(fixed_f), b, [(0, 1), (2, 5), (3, 7)]),
        lambda b: ad.sum(ad.exp(ad.mul(ad.matmul(b, ad.swap_last(b)), 0.01))),
    ]
    worst = 0.0
    trials = 0
    for seed in range(5):
        rng = np.random.default_rng(seed)
        rng_w = rng.standard_normal((8, 16))
        fixed_f = rng.standard_normal((8, 16))
        for loss_fn in downstream:
            f = Parameter(rng.standard_normal((8, 16)))
            g_f = ad.backward(loss_fn(ad.ste_sign(f)))[f]
            b = Parameter(np.where(f.data >= 0, 1.0, -1.0))
            g_b = ad.backward(loss_fn(b))[b]
            worst = max(worst, float(np.abs(g_f - g_b).max()))
            trials += 1
    report("2 STE exactness", worst == 0.0, f"max |dL/df - dL/db| = {worst} over {trials} losses")


def sampled_check(loss_fn, params, rng, per_param, step=1e-5):
    grads = ad.backward(loss_fn())
    worst = 0.0
    for p in params:
        n = min(per_param, p.data.size)
        flat = rng.choice(p.data.size, size=n, replace=False)
        coords = [np.unravel_index(i, p.shape) for i in flat]
        num = ad.finite_diff_gradient(lambda: loss_fn().item(), p, step, coords)
        worst = max(worst, ad.relative_error(grads.get(p, np.zeros(p.shape)), num))
    return worst


def test_gradient_suite():
    t0 = time.perf_counter()
    bb = Backbone(TOY)
    labels = np.array([0, 0, 1, 1])
    errors = {"ms": 0.0, "sc": 0.0, "gem": 0.0, "multiconv": 0.0, "side": 0.0}
    for seed in range(5):
        rng = np.random.default_rng(seed)
        x = Parameter(rng.standard_normal((8, 32)))
        lab8 = np.repeat(np.arange(4), 2)
        errors["ms"] = max(errors["ms"], sampled_check(
            lambda: ms_loss(ad.l2_normalize(x), lab8), [x], rng, 64))
        b = ad.constant(np.where(rng.standard_normal((8, 32)) >= 0, 1.0, -1.0))
        pairs = [(0, 1), (0, 5), (2, 3), (4, 7), (6, 1)]
        errors["sc"] = max(errors["sc"], sampled_check(
            lambda: sc_quantization_loss(ad.l2_normalize(x), b, pairs), [x], rng, 64))
        v = Parameter(rng.uniform(0.1, 2.0, (2, 64, 16)))
        p = Parameter(np.array([3.0]))
        w = rng.standard_normal((2, 16))
        errors["gem"] = max(errors["gem"], sampled_check(
            lambda: ad.sum(ad.mul(gem(v, p), w)), [v, p], rng, 64))
        adapter = MultiConvAdapter(TOY.dim, TOY.grid, rng)
        tok = Parameter(rng.standard_normal((2, 65, TOY.dim)))
        wt = rng.standard_normal((2, 65, TOY.dim))
        errors["multiconv"] = max(errors["multiconv"], sampled_check(
            lambda: ad.sum(ad.mul(adapter(tok), wt)), adapter.parameters() + [tok], rng, 4))
        imgs = rng.standard_normal((4,) + TOY.image_shape)
        feats = bb.run(imgs)
        branch = SideBranch(TOY.depth, TOY.dim, TOY.grid, 32, seed=seed)
        errors["side"] = max(errors["side"], sampled_check(
            lambda: ms_loss(branch(feats), labels), branch.parameters(), rng, 2))
    elapsed = time.perf_counter() - t0
    ok = max(errors.values()) < 1e-3 and elapsed < 120
    detail = ", ".join(f"{k} {v:.1e}" for k, v in errors.items())
    report("3 gradient suite", ok, f"max rel err {detail}; 5 seeds in {elapsed:.0f}s")


def test_memory_structure():
    counts = {}
    leaked = 0
    for depth in (2, 6, 12):
        cfg = BackboneConfig(depth=depth, dim=16, heads=2, grid=(4, 4), patch=2)
        bb = Backbone(cfg)
        feats = bb.forward_features(np.random.default_rng(0).standard_normal((2,) + cfg.image_shape))
        branch = SideBranch(depth, cfg.dim, cfg.grid, 8, Placement.parse("last:2"))
        grads = ad.backward(ms_loss(branch(feats), [0, 1]))
        counts[depth] = grads.visited_nodes
        backbone_ids = {id(p) for p in bb.parameters()}
        leaked += sum(id(p) in backbone_ids for p in grads)
        leaked += len(set(map(id, grads)) - set(map(id, branch.parameters())))
    ok = len(set(counts.values())) == 1 and leaked == 0
    report("4 backward independent of depth", ok,
           f"nodes visited by depth {counts}; {leaked} backbone gradients")


def test_retrieval_oracle():
    rng = np.random.default_rng(2024)
    mismatches = 0
    for inst in range(100):
        n = int(rng.integers(1, 5001))
        k = int(rng.integers(1, 201))
        ids = [int(i) for i in rng.permutation(3 * n)[:n]]
        if inst % 2:
            dim = int(rng.choice([64, 100, 512]))
            raw = rng.standard_normal((n + 1, dim))
            if inst % 4 == 1:
                raw[:, 8:] = 1.0  # only 8 informative bits: heavy ties
            words = sign_hash_rows(raw)
            got = hamming_topk(build_binary_index(words[:n], ids, dim=dim),
                               BinaryCode(words[n], dim), k)
            want = hamming_oracle(words[:n], dim, ids, words[n], k)
        else:
            x = dyadic_unit_rows(n + 1, 64, 16, rng)
            got = l2_topk(build_float_store(x[:n], ids), x[n], k)
            want = l2_oracle(x[:n], ids, x[n], k)
        mismatches += (list(got.ids), got.distances.tolist()) != (want[0], list(want[1]))
    report("5 retrieval oracle", mismatches == 0, f"{mismatches} of 100 instances differ")


def test_two_stage_recall():
    rep = two_stage_vs_float(k=100)
    gap = abs(rep.two_stage_recall[1] - rep.float_recall[1])
    bound = all(rep.stage1_recall[100] >= r for r in rep.two_stage_recall.values())
    ok = gap <= 0.01 and bound
    report("6 two-stage recall", ok,
           f"float R@1 {rep.float_recall[1]:.3f}, two-stage R@1 {rep.two_stage_recall[1]:.3f}, "
           f"stage-1 R@1 {rep.stage1_recall[1]:.3f}, stage-1 R@100 {rep.stage1_recall[100]:.3f}")


def test_latency_ordering():
    t0 = time.perf_counter()
    rep = latency_bench(n_db=10_000)
    elapsed = time.perf_counter() - t0
    f512, f2048, f4096 = (rep.row(f"float ({d}D)").total_ms for d in (512, 2048, 4096))
    ham = rep.row("binary (512D)").total_ms
    two = rep.row("two-stage").total_ms
    ok = f512 >= 5 * ham and f512 < f2048 < f4096 and two < f2048 and elapsed < 300
    report("7 latency ordering", ok,
           f"hamming {ham:.3f} ms vs float512 {f512:.3f} ms ({f512 / ham:.1f}x); "
           f"float2048 {f2048:.3f}, float4096 {f4096:.3f}, two-stage {two:.3f}; {elapsed:.0f}s")


def test_hashing_ablation():
    runs = [run_hashing_ablation(seed) for seed in (0, 1, 2)]
    mean = {m: float(np.mean([r[m] for r in runs])) for m in HASH_MODES}
    best_ok = all(mean["sc+ste"] >= mean[m] - 0.01 for m in HASH_MODES)
    direct_worst = mean["direct"] == min(mean.values())
    detail = ", ".join(f"{m} {100 * v:.1f}" for m, v in mean.items())
    report("8 hashing-mode ablation", best_ok and direct_worst, f"mean binary R@1 over 3 seeds: {detail}")


def brute_category(r, cell, alpha):
    def bucket(v, width):
        c = int(v / width) - 2
        while not (c * width <= v < (c + 1) * width):
            c += 1
        return c

    return bucket(r.east, cell), bucket(r.north, cell), bucket(r.heading, alpha)


def test_category_division():
    rng = np.random.default_rng(17)
    recs = [PlaceRecord(str(i), float(e), float(n), float(h))
            for i, (e, n, h) in enumerate(zip(rng.uniform(-300, 300, 10_000),
                                              rng.uniform(-300, 300, 10_000),
                                              rng.uniform(0, 360, 10_000)))]
    rows = divide(recs, PITTS_MSLS)
    wrong = sum(tuple(r.label) != brute_category(r.record, 15.0, 60.0) for r in rows)
    by_cat: dict = {}
    for r in rows:
        by_cat.setdefault(r.label, []).append(r.record)
    too_far = 0
    for members in by_cat.values():
        e = np.array([m.east for m in members])
        n = np.array([m.north for m in members])
        h = np.array([m.heading for m in members])
        span = np.hypot(e[:, None] - e[None, :], n[:, None] - n[None, :]).max()
        too_far += span > 15.0 * np.sqrt(2) or np.ptp(h) >= 60.0
    groups = {group_index(r.group, PITTS_MSLS) for r in rows}
    ok = wrong == 0 and too_far == 0 and groups == set(range(18))
    report("9 category division", ok,
           f"{wrong} label mismatches, {too_far} oversized categories, {len(groups)} groups")


def test_recall_evaluator():
    bad = []
    for mode in ("geo", "geo-angle", "frame"):
        res = recall_at_n(RANKED, QUERY_RECORDS, DATABASE, GroundTruthSpec(mode), ns=(1, 5, 10))
        if res.first_correct != FIRST_MATCH[mode] or res.recalls != RECALL[mode]:
            bad.append(mode)
    report("10 recall evaluator", not bad, f"modes differing from hand oracle: {bad or 'none'}")


def test_zero_adapter_identity():
    cfg = BackboneConfig(depth=6, dim=16, heads=2, grid=(4, 4), patch=2)
    bb = Backbone(cfg)
    img = np.random.default_rng(5).standard_normal((2,) + cfg.image_shape)
    feats = bb.run(img)
    side_ok = all(
        np.array_equal(SideNetwork(cfg.depth, cfg.dim, cfg.grid, Placement.parse(p),
                                   zero_up=True)(feats).data, feats[0])
        for p in ("dense", "every:2", "last:3")
    )
    adapted = AdaptedBackbone(bb, s=0.8, zero_up=True).forward_features(img)
    block_ok = all(np.array_equal(a.data, b) for a, b in zip(adapted, feats))
    report("11 zero-adapter identity", side_ok and block_ok,
           f"side network returns x_0: {side_ok}; adapted blocks equal plain blocks: {block_ok}")
