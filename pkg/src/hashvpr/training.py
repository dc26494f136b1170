"""Adam, step-wise training of trainable parameters, and a minimal projection head."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor
from .losses import LossConfig, hashing_loss, ms_loss


class TrainingError(FloatingPointError):
    pass


@dataclass
class Adam:
    lr: float = 4e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def step(self, grads: dict[Parameter, np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g in grads.items():
            if p.frozen:
                continue
            key = id(p)
            m = self.m.get(key, 0.0) * self.beta1 + (1.0 - self.beta1) * g
            v = self.v.get(key, 0.0) * self.beta2 + (1.0 - self.beta2) * g * g
            self.m[key], self.v[key] = m, v
            if self.lr:
                p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def lr_at_epoch(base_lr: float, epoch: int, halve_every: int = 3) -> float:
    """Initial rate halved every ``halve_every`` epochs (epoch counts from 0)."""
    return base_lr * 0.5 ** (epoch // halve_every)


class ProjectionHead:
    """Linear map followed by L2 normalization; the hashing ablation's model."""

    def __init__(self, in_dim: int, out_dim: int, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.w = Parameter(rng.normal(0.0, 1.0 / np.sqrt(in_dim), (in_dim, out_dim)), name="w")
        self.b = Parameter(np.zeros(out_dim), name="b")

    def parameters(self) -> list[Parameter]:
        return [self.w, self.b]

    def __call__(self, x) -> Tensor:
        return ad.l2_normalize(ad.add(ad.matmul(ad.constant(x), self.w), self.b), axis=-1)


@dataclass
class StepResult:
    step: int
    loss: float
    parts: dict

    def to_json(self) -> str:
        return json.dumps({"step": self.step, "loss": self.loss, **self.parts}, sort_keys=True)


def train_step(model, inputs, labels, cfg: LossConfig, optimizer: Adam,
               mode: str | None = "sc+ste", rng: np.random.Generator | None = None
               ) -> StepResult:
    """One Adam step on ``model``'s trainable parameters.

    ``mode=None`` trains with the plain metric loss on float outputs (the float
    branch objective); otherwise one of the hashing modes.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    f = model(inputs)
    if mode is None:
        loss = ms_loss(f, labels, cfg)
        parts = {"metric": loss.item(), "total": loss.item()}
    else:
        loss, parts = hashing_loss(f, labels, cfg, mode, rng)
    if not np.isfinite(loss.item()):
        raise TrainingError(f"non-finite loss at step {optimizer.t + 1}: {parts}")
    grads = ad.backward(loss)
    trainable = {p for p in model.parameters() if not p.frozen}
    grads = {p: g for p, g in grads.items() if p in trainable}
    bad = [p.name for p, g in grads.items() if not np.all(np.isfinite(g))]
    if bad:
        raise TrainingError(f"non-finite gradients at step {optimizer.t + 1} in {bad}")
    optimizer.step(grads)
    return StepResult(optimizer.t, loss.item(), parts)


def train(model, batches: Sequence | Callable[[int], tuple], steps: int, cfg: LossConfig,
          optimizer: Adam, mode: str | None = "sc+ste", seed: int = 0,
          log: Callable[[StepResult], None] | None = None) -> list[StepResult]:
    rng = np.random.default_rng(seed)
    history = []
    for step in range(steps):
        inputs, labels = batches(step) if callable(batches) else batches[step % len(batches)]
        res = train_step(model, inputs, labels, cfg, optimizer, mode, rng)
        history.append(res)
        if log is not None:
            log(res)
    return history
