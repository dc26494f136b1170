"""A tiny frozen ViT-style backbone that exposes every block's output.

Weights are seeded Gaussians (std 0.02) and frozen. The backbone also hosts an
in-block adapted variant (serial adapter after attention, scaled parallel
adapter beside the MLP), kept as the baseline whose training must backprop
through the blocks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor


@dataclass(frozen=True)
class BackboneConfig:
    depth: int = 6          # L
    dim: int = 64           # D
    heads: int = 4
    grid: tuple[int, int] = (8, 8)  # (H, W) patch grid, N = H * W
    patch: int = 4
    channels: int = 3
    mlp_ratio: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.depth < 0:
            raise ValueError("depth must be >= 0")
        if self.dim % self.heads:
            raise ValueError(f"dim {self.dim} is not divisible by heads {self.heads}")
        if min(self.grid) < 1 or self.patch < 1:
            raise ValueError("grid and patch sizes must be positive")

    @property
    def n_patches(self) -> int:
        return self.grid[0] * self.grid[1]

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return (self.grid[0] * self.patch, self.grid[1] * self.patch, self.channels)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    y = ad.matmul(x, w)
    return y if b is None else ad.add(y, b)


class Block:
    """Pre-norm transformer block: MHA then MLP, each with a residual."""

    def __init__(self, dim: int, heads: int, mlp_ratio: int, rng: np.random.Generator,
                 prefix: str = "block", std: float = 0.02):
        def frozen(shape, name, fill=None):
            data = np.full(shape, fill) if fill is not None else rng.normal(0.0, std, shape)
            return Parameter(data, frozen=True, name=f"{prefix}.{name}")

        hidden = dim * mlp_ratio
        self.heads = heads
        self.ln1_w, self.ln1_b = frozen((dim,), "ln1.w", 1.0), frozen((dim,), "ln1.b", 0.0)
        self.w_qkv, self.b_qkv = frozen((dim, 3 * dim), "qkv.w"), frozen((3 * dim,), "qkv.b", 0.0)
        self.w_o, self.b_o = frozen((dim, dim), "proj.w"), frozen((dim,), "proj.b", 0.0)
        self.ln2_w, self.ln2_b = frozen((dim,), "ln2.w", 1.0), frozen((dim,), "ln2.b", 0.0)
        self.w_fc1, self.b_fc1 = frozen((dim, hidden), "fc1.w"), frozen((hidden,), "fc1.b", 0.0)
        self.w_fc2, self.b_fc2 = frozen((hidden, dim), "fc2.w"), frozen((dim,), "fc2.b", 0.0)

    def parameters(self) -> list[Parameter]:
        return [v for v in vars(self).values() if isinstance(v, Parameter)]

    def attention(self, x: Tensor, return_attention: bool = False):
        b, t, d = x.shape
        h = self.heads
        dk = d // h
        qkv = ad.reshape(linear(x, self.w_qkv, self.b_qkv), (b, t, 3, h, dk))
        qkv = ad.transpose(qkv, (2, 0, 3, 1, 4))  # (3, B, h, T, dk)
        q, k, v = qkv[0], qkv[1], qkv[2]
        scores = ad.mul(ad.matmul(q, ad.swap_last(k)), 1.0 / np.sqrt(dk))
        attn = ad.softmax(scores, axis=-1)
        out = ad.transpose(ad.matmul(attn, v), (0, 2, 1, 3))
        out = linear(ad.reshape(out, (b, t, d)), self.w_o, self.b_o)
        return (out, attn) if return_attention else out

    def mlp(self, x: Tensor) -> Tensor:
        return linear(ad.relu(linear(x, self.w_fc1, self.b_fc1)), self.w_fc2, self.b_fc2)

    def norm1(self, x: Tensor) -> Tensor:
        return ad.layer_norm(x, self.ln1_w, self.ln1_b)

    def norm2(self, x: Tensor) -> Tensor:
        return ad.layer_norm(x, self.ln2_w, self.ln2_b)

    def __call__(self, x: Tensor, return_attention: bool = False):
        a = self.attention(self.norm1(x), return_attention)
        attn = None
        if return_attention:
            a, attn = a
        x1 = ad.add(a, x)
        out = ad.add(self.mlp(self.norm2(x1)), x1)
        return (out, attn) if return_attention else out


class BottleneckAdapter:
    """Linear down-projection, ReLU, linear up-projection; optional internal skip."""

    def __init__(self, dim: int, hidden: int, rng: np.random.Generator, skip: bool,
                 prefix: str = "adapter", zero_up: bool = False):
        self.skip = skip
        self.w_down = Parameter(rng.normal(0.0, 1.0 / np.sqrt(dim), (dim, hidden)),
                                name=f"{prefix}.down.w")
        self.b_down = Parameter(np.zeros(hidden), name=f"{prefix}.down.b")
        up = np.zeros((hidden, dim)) if zero_up else rng.normal(0.0, 1.0 / np.sqrt(hidden),
                                                                 (hidden, dim))
        self.w_up = Parameter(up, name=f"{prefix}.up.w")
        self.b_up = Parameter(np.zeros(dim), name=f"{prefix}.up.b")

    def parameters(self) -> list[Parameter]:
        return [self.w_down, self.b_down, self.w_up, self.b_up]

    def __call__(self, x: Tensor) -> Tensor:
        y = linear(ad.relu(linear(x, self.w_down, self.b_down)), self.w_up, self.b_up)
        return ad.add(y, x) if self.skip else y


class Backbone:
    def __init__(self, cfg: BackboneConfig = BackboneConfig()):
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed)
        d, p, c = cfg.dim, cfg.patch, cfg.channels
        self.w_patch = Parameter(rng.normal(0.0, 0.02, (p * p * c, d)), frozen=True,
                                 name="patch.w")
        self.b_patch = Parameter(np.zeros(d), frozen=True, name="patch.b")
        self.cls_token = Parameter(rng.normal(0.0, 0.02, (d,)), frozen=True, name="cls")
        self.pos_embed = Parameter(rng.normal(0.0, 0.02, (cfg.n_patches + 1, d)), frozen=True,
                                   name="pos")
        self.blocks = [Block(d, cfg.heads, cfg.mlp_ratio, rng, prefix=f"blocks.{i}")
                       for i in range(cfg.depth)]

    def parameters(self) -> list[Parameter]:
        params = [self.w_patch, self.b_patch, self.cls_token, self.pos_embed]
        for blk in self.blocks:
            params.extend(blk.parameters())
        return params

    def patch_embed(self, image) -> Tensor:
        """(H_img, W_img, C) or (B, H_img, W_img, C) image -> (B, N+1, D) tokens."""
        img = np.asarray(image, dtype=np.float64)
        if img.ndim == 3:
            img = img[None]
        if img.ndim != 4:
            raise ValueError(f"patch_embed: expected an (H, W, C) image, got {img.shape}")
        cfg = self.cfg
        bsz, hi, wi, ch = img.shape
        p = cfg.patch
        if ch != cfg.channels or hi % p or wi % p or (hi // p, wi // p) != cfg.grid:
            raise ValueError(
                f"patch_embed: image {img.shape[1:]} does not tile into a {cfg.grid} grid "
                f"of {p}x{p}x{cfg.channels} patches"
            )
        gh, gw = cfg.grid
        patches = img.reshape(bsz, gh, p, gw, p, ch).transpose(0, 1, 3, 2, 4, 5)
        patches = patches.reshape(bsz, gh * gw, p * p * ch)
        xp = linear(ad.constant(patches), self.w_patch, self.b_patch)
        cls = ad.reshape(self.cls_token, (1, 1, cfg.dim))
        cls = ad.add(ad.constant(np.zeros((bsz, 1, cfg.dim))), cls)
        return ad.add(ad.concat([cls, xp], axis=1), self.pos_embed)

    def _check_tokens(self, x: Tensor) -> Tensor:
        x = ad.as_tensor(x)
        if x.ndim == 2:
            x = ad.reshape(x, (1,) + x.shape)
        want = (self.cfg.n_patches + 1, self.cfg.dim)
        if x.ndim != 3 or x.shape[1:] != want:
            raise ValueError(f"block input must be (B, {want[0]}, {want[1]}), got {x.shape}")
        return x

    def block_forward(self, x, layer: int, return_attention: bool = False):
        return self.blocks[layer](self._check_tokens(x), return_attention)

    def adapted_block_forward(self, x, layer: int, serial: BottleneckAdapter,
                              parallel: BottleneckAdapter, s: float = 1.0) -> Tensor:
        """x' = A1(MHA(LN(x))) + x;  x_l = MLP(LN(x')) + s * A2(LN(x')) + x'."""
        blk = self.blocks[layer]
        x = self._check_tokens(x)
        x1 = ad.add(serial(blk.attention(blk.norm1(x))), x)
        h = blk.norm2(x1)
        out = ad.add(blk.mlp(h), x1)
        if s != 0.0:
            out = ad.add(out, ad.mul(parallel(h), s))
        return out

    def forward_features(self, image) -> list[Tensor]:
        """x_0..x_L as graph tensors (constants unless fed trainable inputs)."""
        x = self.patch_embed(image)
        feats = [x]
        for blk in self.blocks:
            x = blk(x)
            feats.append(x)
        return feats

    def run(self, image) -> list[np.ndarray]:
        """x_0..x_L as plain arrays, each (B, N+1, D)."""
        return [f.data for f in self.forward_features(image)]


def run_backbone(image, cfg: BackboneConfig = BackboneConfig()) -> list[np.ndarray]:
    return Backbone(cfg).run(image)


class AdaptedBackbone:
    """Backbone with a serial and a parallel adapter inside every block."""

    def __init__(self, backbone: Backbone, hidden: int | None = None, s: float = 1.0,
                 seed: int = 0, zero_up: bool = False):
        rng = np.random.default_rng(seed)
        d = backbone.cfg.dim
        hidden = hidden or max(1, d // 2)
        self.backbone = backbone
        self.s = s
        self.serial = [BottleneckAdapter(d, hidden, rng, skip=True, prefix=f"a1.{i}",
                                         zero_up=zero_up) for i in range(backbone.cfg.depth)]
        self.parallel = [BottleneckAdapter(d, hidden, rng, skip=False, prefix=f"a2.{i}",
                                           zero_up=zero_up) for i in range(backbone.cfg.depth)]

    def parameters(self) -> list[Parameter]:
        params = []
        for a1, a2 in zip(self.serial, self.parallel):
            params += a1.parameters() + a2.parameters()
        return params

    def forward_features(self, image) -> list[Tensor]:
        x = self.backbone.patch_embed(image)
        feats = [x]
        for i in range(self.backbone.cfg.depth):
            x = self.backbone.adapted_block_forward(x, i, self.serial[i], self.parallel[i],
                                                    self.s)
            feats.append(x)
        return feats
