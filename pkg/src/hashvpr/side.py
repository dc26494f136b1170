"""Side adapter network over frozen backbone features, GeM head and dual branches.

The side network never touches backbone parameters: it reads the intermediate
features as constants and refines them with a chain of MultiConv adapters,

    y_1 = A_1(x_0 + x_{t_1}) + x_0,    y_i = A_i(y_{i-1} + x_{t_i}) + y_{i-1},

where t_1 < t_2 < ... are the backbone blocks the adapters are attached to.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor
from .backbone import linear
from .descriptors import BinaryCode, sign_hash


def multiconv_widths(dim: int) -> dict[str, int]:
    """Channel widths of the MultiConv module for token dim ``dim``.

    At dim=768: 384 input channels split as 192 (1x1) + 96 (3x3) + 96 (5x5),
    with a 24-channel 1x1 reduction in front of the larger kernels.
    """
    c = dim // 2
    if c < 3:
        raise ValueError(f"token dim {dim} too small for a three-path MultiConv")
    side = c // 4
    return {
        "in": c,
        "p1": c - 2 * side,
        "p3": side,
        "p5": side,
        "reduce": max(1, round(24 * dim / 768)),
    }


class MultiConvAdapter:
    """Down-projection, ReLU, MultiConv (with skip) on patch tokens, up-projection.

    The class token shares the down/up projections but skips the convolutions.
    """

    def __init__(self, dim: int, grid: tuple[int, int], rng: np.random.Generator,
                 prefix: str = "mca", zero_up: bool = False, init_scale: float = 1.0):
        w = multiconv_widths(dim)
        self.dim, self.grid, self.widths = dim, tuple(grid), w
        c, r = w["in"], w["reduce"]

        def param(shape, fan_in, name, zero=False):
            data = np.zeros(shape) if zero else rng.normal(0.0, init_scale / np.sqrt(fan_in), shape)
            return Parameter(data, name=f"{prefix}.{name}")

        self.w_down = param((dim, c), dim, "down.w")
        self.b_down = param((c,), 1, "down.b", zero=True)
        self.k1 = param((w["p1"], c, 1, 1), c, "conv1.w")
        self.b1 = param((w["p1"],), 1, "conv1.b", zero=True)
        self.k3r = param((r, c, 1, 1), c, "conv3r.w")
        self.b3r = param((r,), 1, "conv3r.b", zero=True)
        self.k3 = param((w["p3"], r, 3, 3), 9 * r, "conv3.w")
        self.b3 = param((w["p3"],), 1, "conv3.b", zero=True)
        self.k5r = param((r, c, 1, 1), c, "conv5r.w")
        self.b5r = param((r,), 1, "conv5r.b", zero=True)
        self.k5 = param((w["p5"], r, 5, 5), 25 * r, "conv5.w")
        self.b5 = param((w["p5"],), 1, "conv5.b", zero=True)
        self.w_up = param((c, dim), c, "up.w", zero=zero_up)
        self.b_up = param((dim,), 1, "up.b", zero=True)

    def parameters(self) -> list[Parameter]:
        return [v for v in vars(self).values() if isinstance(v, Parameter)]

    def conv_parameters(self) -> list[Parameter]:
        return [self.k1, self.b1, self.k3r, self.b3r, self.k3, self.b3,
                self.k5r, self.b5r, self.k5, self.b5]

    def multiconv(self, fmap: Tensor) -> Tensor:
        """(B, C, H, W) -> (B, C, H, W): three concatenated paths plus skip."""
        p1 = ad.conv2d(fmap, self.k1, self.b1)
        p3 = ad.conv2d(ad.conv2d(fmap, self.k3r, self.b3r), self.k3, self.b3)
        p5 = ad.conv2d(ad.conv2d(fmap, self.k5r, self.b5r), self.k5, self.b5)
        return ad.add(ad.concat([p1, p3, p5], axis=1), fmap)

    def __call__(self, tokens) -> Tensor:
        tokens = ad.as_tensor(tokens)
        if tokens.ndim == 2:
            tokens = ad.reshape(tokens, (1,) + tokens.shape)
        b, t, d = tokens.shape
        gh, gw = self.grid
        if d != self.dim or t - 1 != gh * gw:
            raise ValueError(
                f"adapter expects (B, {gh * gw + 1}, {self.dim}) tokens for a {gh}x{gw} grid, "
                f"got {tokens.shape}"
            )
        z = ad.relu(linear(tokens, self.w_down, self.b_down))
        c = z.shape[-1]
        cls = z[:, :1, :]
        fmap = ad.transpose(ad.reshape(z[:, 1:, :], (b, gh, gw, c)), (0, 3, 1, 2))
        patches = ad.reshape(ad.transpose(self.multiconv(fmap), (0, 2, 3, 1)), (b, gh * gw, c))
        return linear(ad.concat([cls, patches], axis=1), self.w_up, self.b_up)


def adapter_forward(adapter: MultiConvAdapter, tokens) -> Tensor:
    return adapter(tokens)


@dataclass(frozen=True)
class Placement:
    """Which backbone blocks feed the adapter chain.

    ``kind`` is ``"dense"`` (every block), ``"every"`` (every ``m``-th block),
    ``"last"`` (the last ``p`` blocks) or ``"explicit"`` (``blocks`` listed).
    """

    kind: str = "dense"
    m: int = 1
    p: int = 0
    blocks: tuple[int, ...] = ()

    def resolve(self, depth: int) -> list[int]:
        if self.kind == "dense":
            out = list(range(1, depth + 1))
        elif self.kind == "every":
            if self.m < 1:
                raise ValueError("every-m placement needs m >= 1")
            out = list(range(self.m, depth + 1, self.m))
        elif self.kind == "last":
            if not 1 <= self.p <= depth:
                raise ValueError(f"cannot place adapters on the last {self.p} of {depth} blocks")
            out = list(range(depth - self.p + 1, depth + 1))
        elif self.kind == "explicit":
            out = list(self.blocks)
            if any(b < 1 or b > depth for b in out) or out != sorted(set(out)):
                raise ValueError(f"explicit placement {out} invalid for depth {depth}")
        else:
            raise ValueError(f"unknown placement kind {self.kind!r}")
        if not out:
            raise ValueError(f"placement {self} selects no blocks at depth {depth}")
        return out

    @classmethod
    def parse(cls, text: str) -> "Placement":
        """``dense``, ``every:3``, ``last:4`` or ``blocks:2,4,6``."""
        kind, _, arg = text.partition(":")
        if kind == "dense":
            return cls("dense")
        if kind == "every":
            return cls("every", m=int(arg))
        if kind == "last":
            return cls("last", p=int(arg))
        if kind == "blocks":
            return cls("explicit", blocks=tuple(int(v) for v in arg.split(",")))
        raise ValueError(f"cannot parse placement {text!r}")


class SideNetwork:
    def __init__(self, depth: int, dim: int, grid: tuple[int, int],
                 placement: Placement = Placement(), seed: int = 0, zero_up: bool = False,
                 init_scale: float = 1.0):
        self.depth = depth
        self.placement = placement
        self.blocks = placement.resolve(depth)
        rng = np.random.default_rng(seed)
        self.adapters = [
            MultiConvAdapter(dim, grid, rng, prefix=f"side.{i}", zero_up=zero_up,
                             init_scale=init_scale)
            for i in range(len(self.blocks))
        ]

    def parameters(self) -> list[Parameter]:
        return [p for a in self.adapters for p in a.parameters()]

    def __call__(self, feats) -> Tensor:
        if len(feats) != self.depth + 1:
            raise ValueError(
                f"side network built for {self.depth} blocks got {len(feats)} features"
            )
        y = ad.constant(feats[0]) if not isinstance(feats[0], Tensor) else feats[0]
        for adapter, blk in zip(self.adapters, self.blocks):
            x = feats[blk]
            x = x if isinstance(x, Tensor) else ad.constant(x)
            y = ad.add(adapter(ad.add(y, x)), y)
        return y


def side_forward(net: SideNetwork, feats) -> Tensor:
    return net(feats)


def gem(x: Tensor, p, axis: int = 1, eps: float = 1e-6) -> Tensor:
    """Generalized mean over ``axis``: ``mean(clamp(x, eps) ** p) ** (1 / p)``."""
    x = ad.clamp_min(x, eps)
    return ad.power(ad.mean(ad.power(x, p), axis=axis), ad.div(1.0, p) if isinstance(p, Tensor)
                    else 1.0 / p)


class AggregatorHead:
    """Patch tokens -> linear projection -> GeM -> FC -> L2 normalize."""

    def __init__(self, dim: int, out_dim: int, rng: np.random.Generator,
                 proj_dim: int | None = None, p: float = 3.0, prefix: str = "head"):
        proj_dim = proj_dim or dim
        self.w_proj = Parameter(rng.normal(0.0, 1.0 / np.sqrt(dim), (dim, proj_dim)),
                                name=f"{prefix}.proj.w")
        self.b_proj = Parameter(np.zeros(proj_dim), name=f"{prefix}.proj.b")
        self.p = Parameter(np.full((1,), p), name=f"{prefix}.gem.p")
        self.w_fc = Parameter(rng.normal(0.0, 1.0 / np.sqrt(proj_dim), (proj_dim, out_dim)),
                              name=f"{prefix}.fc.w")
        self.b_fc = Parameter(np.zeros(out_dim), name=f"{prefix}.fc.b")
        self.out_dim = out_dim

    def parameters(self) -> list[Parameter]:
        return [self.w_proj, self.b_proj, self.p, self.w_fc, self.b_fc]

    def pooled(self, y) -> Tensor:
        y = ad.as_tensor(y)
        if y.ndim == 2:
            y = ad.reshape(y, (1,) + y.shape)
        if not np.all(np.isfinite(y.data)):
            raise ValueError("aggregator input contains non-finite values")
        v = linear(y[:, 1:, :], self.w_proj, self.b_proj)
        return gem(v, self.p, axis=1)

    def __call__(self, y) -> Tensor:
        return ad.l2_normalize(linear(self.pooled(y), self.w_fc, self.b_fc), axis=-1)


def aggregate(head: AggregatorHead, y) -> Tensor:
    return head(y)


class SideBranch:
    """One independent side network plus its aggregator head."""

    def __init__(self, depth: int, dim: int, grid: tuple[int, int], out_dim: int,
                 placement: Placement = Placement(), seed: int = 0,
                 proj_dim: int | None = None, zero_up: bool = False):
        rng = np.random.default_rng([seed, 1])
        self.network = SideNetwork(depth, dim, grid, placement, seed=seed, zero_up=zero_up)
        self.head = AggregatorHead(dim, out_dim, rng, proj_dim=proj_dim)

    def parameters(self) -> list[Parameter]:
        return self.network.parameters() + self.head.parameters()

    def __call__(self, feats) -> Tensor:
        return self.head(self.network(feats))


@dataclass
class DualOutput:
    codes: list[BinaryCode] | None
    floats: np.ndarray | None


def dual_heads(net_b: SideBranch | None, net_f: SideBranch | None, feats) -> DualOutput:
    """Run the binary and float branches on the same backbone features.

    Either branch may be ``None``: dropping the binary branch leaves a plain
    one-stage float model, dropping the float branch leaves hash-only retrieval.
    """
    codes = floats = None
    if net_b is not None:
        f = net_b(feats).data
        codes = [sign_hash(row) for row in f]
    if net_f is not None:
        floats = net_f(feats).data.astype(np.float32)
    return DualOutput(codes, floats)
