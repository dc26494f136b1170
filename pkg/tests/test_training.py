import json

import numpy as np
import pytest

from hashvpr.backbone import Backbone, BackboneConfig
from hashvpr.losses import LossConfig
from hashvpr.side import Placement, SideBranch
from hashvpr.synthetic import hashing_task
from hashvpr.training import Adam, ProjectionHead, TrainingError, lr_at_epoch, train, train_step


def batches():
    task = hashing_task(n_places=8, train_per_place=4, seed=0)
    return [(task.train_x, task.train_y)]


def test_zero_lr_leaves_parameters():
    model = ProjectionHead(64, 16, seed=0)
    before = [p.data.copy() for p in model.parameters()]
    train(model, batches(), 3, LossConfig(), Adam(lr=0.0))
    assert all(np.array_equal(a, p.data) for a, p in zip(before, model.parameters()))


@pytest.mark.parametrize("mode", [None, "direct", "sc+ste"])
def test_loss_decreases(mode):
    model = ProjectionHead(64, 16, seed=0)
    hist = train(model, batches(), 50, LossConfig(), Adam(lr=1e-2), mode=mode)
    assert np.mean([h.loss for h in hist[-5:]]) < hist[0].loss


def test_lr_schedule():
    assert [lr_at_epoch(4e-4, e) for e in (0, 2, 3, 6)] == [4e-4, 4e-4, 2e-4, 1e-4]


def test_side_training_leaves_backbone_bit_identical():
    cfg = BackboneConfig(depth=2, dim=16, heads=2, grid=(3, 3), patch=2)
    bb = Backbone(cfg)
    frozen = [p.data.copy() for p in bb.parameters()]
    imgs = np.random.default_rng(0).standard_normal((4,) + cfg.image_shape)
    feats = bb.run(imgs)
    branch = SideBranch(cfg.depth, cfg.dim, cfg.grid, 8, Placement.parse("last:1"))
    opt = Adam(lr=1e-2)
    for _ in range(3):
        train_step(branch, feats, np.array([0, 0, 1, 1]), LossConfig(), opt, mode="sc+ste")
    assert all(np.array_equal(a, p.data) for a, p in zip(frozen, bb.parameters()))
    assert len(opt.m) == len(branch.parameters())


def test_non_finite_loss_raises():
    model = ProjectionHead(4, 4)
    x = np.full((2, 4), np.nan)
    with pytest.raises(TrainingError):
        train_step(model, x, np.array([0, 1]), LossConfig(), Adam(), mode=None)


def test_step_record_is_json():
    model = ProjectionHead(64, 8)
    res = train_step(model, *batches()[0], LossConfig(), Adam(), mode="sc")
    rec = json.loads(res.to_json())
    assert rec["step"] == 1 and {"metric", "quant", "total"} <= set(rec)
