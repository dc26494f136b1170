"""Training losses: multi-similarity metric loss, similarity-constrained
quantization loss and the combined hashing objectives."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

HASH_MODES = ("direct", "sc", "ste", "sc+ste")


@dataclass(frozen=True)
class LossConfig:
    # MS-loss defaults follow the common GSV-Cities training setup.
    ms_alpha: float = 1.0
    ms_beta: float = 50.0
    ms_gamma: float = 0.5
    lam: float = 0.1
    pair_fraction: float = 0.2

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if not 0 < self.pair_fraction <= 1:
            raise ValueError("pair_fraction must be in (0, 1]")
        if self.ms_alpha <= 0 or self.ms_beta <= 0:
            raise ValueError("MS alpha and beta must be positive")


def pair_masks(labels) -> tuple[np.ndarray, np.ndarray]:
    labels = np.asarray(labels)
    same = labels[:, None] == labels[None, :]
    pos = same & ~np.eye(len(labels), dtype=bool)
    return pos, ~same


def ms_loss(emb, labels, cfg: LossConfig = LossConfig()) -> Tensor:
    """Multi-similarity loss on row-wise unit-norm embeddings (B, d).

    Each query's positive (negative) term is zero when it has no positives
    (negatives) in the batch.
    """
    emb = ad.as_tensor(emb)
    labels = np.asarray(labels)
    if emb.ndim != 2 or emb.shape[0] == 0:
        raise ValueError(f"ms_loss needs a non-empty (B, d) batch, got {emb.shape}")
    if labels.shape != (emb.shape[0],):
        raise ValueError(f"{labels.shape[0]} labels for {emb.shape[0]} embeddings")
    a, b, g = cfg.ms_alpha, cfg.ms_beta, cfg.ms_gamma
    pos, neg = pair_masks(labels)
    sim = ad.matmul(emb, ad.swap_last(emb))
    pos_sum = ad.sum(ad.mul(ad.exp(ad.mul(ad.sub(sim, g), -a)), pos.astype(float)), axis=1)
    neg_sum = ad.sum(ad.mul(ad.exp(ad.mul(ad.sub(sim, g), b)), neg.astype(float)), axis=1)
    per_query = ad.add(ad.mul(ad.log(ad.add(pos_sum, 1.0)), 1.0 / a),
                       ad.mul(ad.log(ad.add(neg_sum, 1.0)), 1.0 / b))
    return ad.mean(per_query)


def sample_pairs(labels, fraction: float, rng: np.random.Generator
                 ) -> tuple[np.ndarray, np.ndarray]:
    """Uniformly sample ceil(fraction * K) positive and negative index pairs (i < j)."""
    pos, neg = pair_masks(labels)
    upper = np.triu(np.ones_like(pos), k=1)
    out = []
    for mask in (pos & upper, neg & upper):
        pairs = np.argwhere(mask)
        if len(pairs):
            take = math.ceil(fraction * len(pairs))
            pairs = pairs[np.sort(rng.choice(len(pairs), size=take, replace=False))]
        out.append(pairs.reshape(-1, 2))
    return out[0], out[1]


def sc_quantization_loss(f, b, pairs) -> Tensor:
    """mean over pairs of (<f_i, f_j> - <b_i, b_j> / d) ** 2.

    ``f`` holds unit-norm float rows, ``b`` the matching +-1 code rows.
    """
    f, b = ad.as_tensor(f), ad.as_tensor(b)
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if len(pairs) == 0:
        raise ValueError("similarity-constrained loss needs at least one pair")
    if f.shape != b.shape:
        raise ValueError(f"float rows {f.shape} and code rows {b.shape} differ")
    d = f.shape[-1]
    i, j = pairs[:, 0], pairs[:, 1]
    fs = ad.sum(ad.mul(f[i], f[j]), axis=1)
    bs = ad.mul(ad.sum(ad.mul(b[i], b[j]), axis=1), 1.0 / d)
    diff = ad.sub(fs, bs)
    return ad.mean(ad.mul(diff, diff))


def sc_quantization_loss_pairs(pairs: list[tuple]) -> float:
    """Plain-array form over explicit ``(f_i, f_j, b_i, b_j)`` tuples."""
    if not pairs:
        raise ValueError("similarity-constrained loss needs at least one pair")
    total = 0.0
    for fi, fj, bi, bj in pairs:
        fi, fj, bi, bj = (np.asarray(v, dtype=np.float64) for v in (fi, fj, bi, bj))
        total += (fi @ fj - (bi @ bj) / bi.shape[0]) ** 2
    return total / len(pairs)


def hashing_loss(f, labels, cfg: LossConfig, mode: str, rng: np.random.Generator
                 ) -> tuple[Tensor, dict[str, float]]:
    """Training objective of the binary branch for one of the hashing modes.

    direct:  L_M(f)                         (codes only at inference)
    sc:      L_M(f) + lam * L_Q(f, sgn f)   (codes carry no gradient)
    ste:     L_M(b),  b = sgn f with straight-through gradient
    sc+ste:  L_M(b) + lam * L_Q(f, b)
    """
    if mode not in HASH_MODES:
        raise ValueError(f"unknown hashing mode {mode!r}; expected one of {HASH_MODES}")
    f = ad.as_tensor(f)
    d = f.shape[-1]
    use_ste = mode in ("ste", "sc+ste")
    use_sc = mode in ("sc", "sc+ste")
    if use_ste:
        b = ad.ste_sign(f)
        metric = ms_loss(ad.mul(b, 1.0 / math.sqrt(d)), labels, cfg)
    else:
        b = ad.constant(np.where(f.data >= 0, 1.0, -1.0))
        metric = ms_loss(f, labels, cfg)
    parts = {"metric": metric.item()}
    loss = metric
    if use_sc and cfg.lam > 0:
        pos, neg = sample_pairs(labels, cfg.pair_fraction, rng)
        pairs = np.concatenate([pos, neg])
        if len(pairs):
            lq = sc_quantization_loss(f, b, pairs)
            parts["quant"] = lq.item()
            loss = ad.add(loss, ad.mul(lq, cfg.lam))
    parts["total"] = loss.item()
    return loss, parts


def total_loss(f, labels, cfg: LossConfig = LossConfig(), rng: np.random.Generator | None = None
               ) -> Tensor:
    """L_M(b) + lam * L_Q(f, b) with b = ste_sign(f)."""
    rng = rng if rng is not None else np.random.default_rng(0)
    return hashing_loss(f, labels, cfg, "sc+ste", rng)[0]
