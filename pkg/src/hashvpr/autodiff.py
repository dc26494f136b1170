"""A small reverse-mode autodiff over numpy arrays.

Only what the side network and the losses need. Tensors hold float64 data.
A tensor built from inputs that do not require gradients is a constant: it
records no parents, so ``backward`` never walks into it. Frozen backbone
features enter the side network this way.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

DTYPE = np.float64


class Tensor:
    __slots__ = ("data", "requires_grad", "_parents", "_backward", "op", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, op: str = "leaf"):
        self.data = np.array(data, dtype=DTYPE, copy=True) if not isinstance(data, np.ndarray) \
            or data.dtype != DTYPE else data
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None
        self.op = op

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return index(self, idx)


class Parameter(Tensor):
    """A leaf tensor owned by a model. Frozen parameters never receive gradients."""

    __slots__ = ("frozen", "name")

    def __init__(self, data, frozen: bool = False, name: str = ""):
        super().__init__(np.array(data, dtype=DTYPE), requires_grad=not frozen, op="param")
        self.frozen = frozen
        self.name = name

    def __repr__(self):
        return f"Parameter({self.name or '?'}, shape={self.shape}, frozen={self.frozen})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def constant(x) -> Tensor:
    """Wrap data as a graph leaf with no gradient (e.g. backbone outputs)."""
    return Tensor(x.data if isinstance(x, Tensor) else x)


def _make(data, parents: Sequence[Tensor], backward, op: str) -> Tensor:
    out = Tensor(data, op=op)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_check(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ValueError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# elementwise


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("add", a, b)
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("sub", a, b)
    return _make(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)), "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("mul", a, b)
    return _make(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape),
                            _unbroadcast(g * a.data, b.shape)), "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("div", a, b)
    out = a.data / b.data
    return _make(out, (a, b),
                 lambda g: (_unbroadcast(g / b.data, a.shape),
                            _unbroadcast(-g * out / b.data, b.shape)), "div")


def exp(x) -> Tensor:
    x = as_tensor(x)
    out = np.exp(x.data)
    return _make(out, (x,), lambda g: (g * out,), "exp")


def log(x) -> Tensor:
    x = as_tensor(x)
    if np.any(x.data <= 0):
        raise ValueError("log: input must be strictly positive")
    return _make(np.log(x.data), (x,), lambda g: (g / x.data,), "log")


def power(x, p) -> Tensor:
    """``x ** p`` for x > 0 when ``p`` is a tensor; any x for a constant exponent."""
    x = as_tensor(x)
    if isinstance(p, Tensor):
        _broadcast_check("power", x, p)
        if np.any(x.data <= 0):
            raise ValueError("power: base must be strictly positive for a tensor exponent")
        out = x.data ** p.data
        return _make(out, (x, p),
                     lambda g: (_unbroadcast(g * p.data * out / x.data, x.shape),
                                _unbroadcast(g * out * np.log(x.data), p.shape)), "power")
    p = float(p)
    out = x.data ** p
    return _make(out, (x,), lambda g: (g * p * x.data ** (p - 1.0),), "power")


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    return _make(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,), "relu")


def clamp_min(x, lo: float) -> Tensor:
    x = as_tensor(x)
    mask = x.data > lo
    return _make(np.where(mask, x.data, lo), (x,), lambda g: (g * mask,), "clamp_min")


def ste_sign(x) -> Tensor:
    """Sign in the forward pass (zero maps to +1), identity in the backward pass."""
    x = as_tensor(x)
    if np.any(np.isnan(x.data)):
        raise ValueError("ste_sign: NaN input")
    return _make(np.where(x.data >= 0, 1.0, -1.0), (x,), lambda g: (g,), "ste_sign")


# linear algebra and shape


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    try:
        out = np.matmul(a.data, b.data)
    except ValueError:
        raise ValueError(f"matmul: incompatible batch shapes {a.shape} and {b.shape}") from None

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _make(out, (a, b), backward, "matmul")


def transpose(x, axes: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    axes = tuple(axes)
    if sorted(axes) != list(range(x.ndim)):
        raise ValueError(f"transpose: bad axes {axes} for shape {x.shape}")
    inverse = tuple(np.argsort(axes))
    return _make(np.transpose(x.data, axes), (x,),
                 lambda g: (np.transpose(g, inverse),), "transpose")


def swap_last(x) -> Tensor:
    axes = list(range(as_tensor(x).ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return transpose(x, axes)


def reshape(x, shape: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ValueError(f"reshape: cannot reshape {x.shape} into {tuple(shape)}") from None
    return _make(out, (x,), lambda g: (g.reshape(x.shape),), "reshape")


def index(x, idx) -> Tensor:
    x = as_tensor(x)
    out = x.data[idx]

    def backward(g):
        full = np.zeros_like(x.data)
        np.add.at(full, idx, g)
        return (full,)

    return _make(np.array(out), (x,), backward, "index")


def concat(tensors: Iterable, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        shapes = [t.shape for t in tensors]
        raise ValueError(f"concat: incompatible shapes {shapes} along axis {axis}") from None
    splits = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return _make(out, tensors, lambda g: tuple(np.split(g, splits, axis=axis)), "concat")


def sum(x, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    x = as_tensor(x)
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _make(out, (x,), backward, "sum")


def mean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    count = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(sum(x, axis=axis, keepdims=keepdims), 1.0 / float(count))


# normalization


def softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _make(out, (x,), backward, "softmax")


def layer_norm(x, weight, bias, eps: float = 1e-6) -> Tensor:
    x, weight, bias = as_tensor(x), as_tensor(weight), as_tensor(bias)
    d = x.shape[-1]
    if weight.shape != (d,) or bias.shape != (d,):
        raise ValueError(f"layer_norm: affine shapes {weight.shape}/{bias.shape} for dim {d}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc ** 2).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    out = xhat * weight.data + bias.data

    def backward(g):
        gh = g * weight.data
        gx = inv * (gh - gh.mean(axis=-1, keepdims=True)
                    - xhat * (gh * xhat).mean(axis=-1, keepdims=True))
        gw = _unbroadcast(g * xhat, weight.shape)
        gb = _unbroadcast(g, bias.shape)
        return gx, gw, gb

    return _make(out, (x, weight, bias), backward, "layer_norm")


def l2_normalize(x, axis: int = -1, eps: float = 1e-12) -> Tensor:
    x = as_tensor(x)
    norm = power(sum(mul(x, x), axis=axis, keepdims=True) + eps, 0.5)
    return div(x, norm)


# convolution


def _windows(x: np.ndarray, k: int) -> np.ndarray:
    pad = k // 2
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    return np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(2, 3))


def conv2d(x, weight, bias=None) -> Tensor:
    """Stride-1, same-padded 2-D convolution. x: (B, C, H, W); weight: (O, C, k, k)."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 4 or weight.ndim != 4:
        raise ValueError(f"conv2d: expected 4-D input and kernel, got {x.shape}, {weight.shape}")
    out_c, in_c, kh, kw = weight.shape
    if in_c != x.shape[1] or kh != kw or kh % 2 == 0:
        raise ValueError(f"conv2d: kernel {weight.shape} incompatible with input {x.shape}")
    k = kh
    win = _windows(x.data, k)  # (B, C, H, W, k, k)
    out = np.einsum("bchwij,ocij->bohw", win, weight.data, optimize=True)
    parents = [x, weight]
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (out_c,):
            raise ValueError(f"conv2d: bias shape {bias.shape} for {out_c} output channels")
        out = out + bias.data[None, :, None, None]
        parents.append(bias)

    def backward(g):
        gw = np.einsum("bchwij,bohw->ocij", win, g, optimize=True)
        flipped = weight.data[:, :, ::-1, ::-1]
        gx = np.einsum("bohwij,ocij->bchw", _windows(g, k), flipped, optimize=True)
        grads = [gx, gw]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return tuple(grads)

    return _make(out, parents, backward, "conv2d")


# backward


class GradientMap(dict):
    """Parameter -> gradient array, plus the number of graph nodes visited."""

    visited_nodes: int = 0


def _topo_order(root: Tensor) -> list[Tensor]:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> GradientMap:
    """Reverse-mode sweep from a scalar ``loss``.

    Only nodes that require gradients are visited; constants and frozen
    parameters are pruned before the sweep starts.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward: loss must be scalar, got shape {loss.shape}")
    grads = GradientMap()
    if not loss.requires_grad:
        return grads
    order = _topo_order(loss)
    acc = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = acc.pop(id(node), None)
        if g is None:
            continue
        if isinstance(node, Parameter):
            if not node.frozen:
                grads[node] = grads[node] + g if node in grads else g
            continue
        if node._backward is None:
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if not parent.requires_grad or pg is None:
                continue
            key = id(parent)
            acc[key] = acc[key] + pg if key in acc else pg
    grads.visited_nodes = len(order)
    return grads


def finite_diff_gradient(fn: Callable[[], float], p: Tensor, step: float = 1e-3,
                         coords: Iterable[tuple] | None = None) -> np.ndarray:
    """Central-difference gradient of scalar ``fn()`` w.r.t. ``p.data``.

    ``fn`` must read ``p`` by reference. When ``coords`` is given only those
    entries are estimated; the rest of the result stays NaN.
    """
    grad = np.full(p.shape, np.nan) if coords is not None else np.zeros(p.shape)
    it = coords if coords is not None else np.ndindex(*p.shape)
    for c in it:
        orig = p.data[c]
        p.data[c] = orig + step
        hi = float(fn())
        p.data[c] = orig - step
        lo = float(fn())
        p.data[c] = orig
        grad[c] = (hi - lo) / (2.0 * step)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """max |a - n| / max(max |a|, max |n|), over entries where ``numeric`` is set."""
    mask = ~np.isnan(numeric)
    a, n = np.asarray(analytic)[mask], numeric[mask]
    scale = max(np.abs(a).max(initial=0.0), np.abs(n).max(initial=0.0))
    if scale == 0.0:
        return 0.0
    return float(np.abs(a - n).max() / scale)
