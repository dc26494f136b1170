import numpy as np
import pytest

from hashvpr import autodiff as ad
from hashvpr.backbone import AdaptedBackbone, Backbone, BackboneConfig, run_backbone

CFG = BackboneConfig(depth=3, dim=16, heads=2, grid=(4, 4), patch=2)


def image(seed=0, cfg=CFG):
    return np.random.default_rng(seed).standard_normal(cfg.image_shape)


def test_feature_shapes():
    feats = run_backbone(image(), CFG)
    assert len(feats) == CFG.depth + 1
    assert all(f.shape == (1, 17, 16) for f in feats)


def test_deterministic_per_seed():
    a = run_backbone(image(), CFG)
    b = run_backbone(image(), CFG)
    c = run_backbone(image(), BackboneConfig(**{**CFG.__dict__, "seed": 1}))
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert not np.array_equal(a[-1], c[-1])


def test_zeroed_outputs_make_blocks_identity():
    bb = Backbone(CFG)
    for blk in bb.blocks:
        for p in (blk.w_o, blk.b_o, blk.w_fc2, blk.b_fc2):
            p.data[...] = 0.0
    feats = bb.run(image())
    assert all(np.array_equal(f, feats[0]) for f in feats)


def test_attention_rows_sum_to_one():
    bb = Backbone(CFG)
    _, attn = bb.block_forward(bb.patch_embed(image()), 0, return_attention=True)
    assert attn.shape == (1, 2, 17, 17)
    np.testing.assert_allclose(attn.data.sum(-1), 1.0, atol=1e-12)


def test_features_carry_no_graph():
    feats = Backbone(CFG).forward_features(image())
    assert not any(f.requires_grad for f in feats)
    assert all(p.frozen for p in Backbone(CFG).parameters())


def test_bad_image_shape():
    with pytest.raises(ValueError):
        Backbone(CFG).patch_embed(np.zeros((9, 8, 3)))


def test_batched_images():
    imgs = np.stack([image(0), image(1)])
    feats = run_backbone(imgs, CFG)
    single = run_backbone(image(1), CFG)
    np.testing.assert_allclose(feats[-1][1], single[-1][0], atol=1e-12)


def test_zero_adapters_reduce_to_plain_blocks():
    bb = Backbone(CFG)
    adapted = AdaptedBackbone(bb, s=0.7, zero_up=True)
    plain = bb.run(image())
    got = [f.data for f in adapted.forward_features(image())]
    assert all(np.array_equal(a, b) for a, b in zip(plain, got))


def test_adapted_backbone_trains_adapters_only():
    bb = Backbone(CFG)
    adapted = AdaptedBackbone(bb, s=0.5, seed=3)
    loss = ad.sum(adapted.forward_features(image())[-1])
    grads = ad.backward(loss)
    assert set(grads) == set(adapted.parameters())
