"""Dense float64 tensors with reverse-mode differentiation.

Only the handful of operations the encoder needs are provided. Every op
returns a new :class:`Tensor` that remembers its parents and a closure
mapping the output gradient to one gradient per parent.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = [
    "Tensor",
    "ShapeError",
    "SeriesTooShortError",
    "backward",
    "conv1d",
    "max_pool2",
    "instance_norm",
    "feature_norm",
    "prelu",
    "dropout",
    "softmax_time",
    "linear",
    "cross_entropy",
    "channel_slice",
    "mul",
    "sum_time",
    "concat_rows",
    "total",
    "grad_check",
]


class ShapeError(ValueError):
    """Operand shapes are incompatible."""


class SeriesTooShortError(ValueError):
    """A series is too short for the requested operation."""


class Tensor:
    """A node of the computation graph.

    ``data`` holds the values, ``grad`` the accumulated gradient for leaves
    created with ``requires_grad=True``.
    """

    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, op: str = "leaf",
                 parents: tuple = (), backward_fn: Callable | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(self.data) if requires_grad else None
        self.op = op
        self._parents = parents
        self._backward = backward_fn

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad.fill(0.0)

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        return f"Tensor(op={self.op!r}, shape={self.shape})"


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data: np.ndarray, op: str, parents: tuple, backward_fn) -> Tensor:
    needs = any(p.requires_grad or p._backward is not None for p in parents)
    if not needs:
        return Tensor(data, op=op)
    return Tensor(data, op=op, parents=parents, backward_fn=backward_fn)


def _topological(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
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
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into every ``requires_grad`` leaf.

    Interior gradients live only for the duration of the call, so calling
    this twice without zeroing doubles the leaf gradients exactly.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(_topological(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            if node.requires_grad:
                node.grad += g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not (parent.requires_grad or parent._backward is not None):
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg


# --------------------------------------------------------------------------
# layers

def conv1d(x: Tensor, weight: Tensor, bias: Tensor, padding: int) -> Tensor:
    """Stride-1 convolution over the last axis with zero padding on both ends.

    Args:
        x: input ``[b, c_in, t]``.
        weight: filters ``[c_out, c_in, kw]``.
        bias: ``[c_out]``.
        padding: zeros added at each end of the time axis.

    Returns:
        ``[b, c_out, t + 2*padding - kw + 1]``.
    """
    xd, wd = x.data, weight.data
    if xd.ndim != 3 or wd.ndim != 3 or xd.shape[1] != wd.shape[1]:
        raise ShapeError(
            f"conv1d input {xd.shape} incompatible with weight {wd.shape}")
    if bias.data.shape != (wd.shape[0],):
        raise ShapeError(f"conv1d bias {bias.data.shape} for weight {wd.shape}")
    b, c_in, t = xd.shape
    kw = wd.shape[2]
    if t + 2 * padding < kw:
        raise SeriesTooShortError(
            f"length {t} with padding {padding} is shorter than kernel {kw}")
    xp = np.pad(xd, ((0, 0), (0, 0), (padding, padding))) if padding else xd
    win = sliding_window_view(xp, kw, axis=2)  # [b, c_in, t', kw]
    out = np.tensordot(win, wd, axes=([1, 3], [1, 2]))  # [b, t', c_out]
    out = out.transpose(0, 2, 1) + bias.data[None, :, None]
    t_out = out.shape[2]

    def grad_fn(g):
        gw = np.tensordot(g, win, axes=([0, 2], [0, 2]))
        gcols = np.tensordot(g, wd, axes=([1], [0]))  # [b, t', c_in, kw]
        gxp = np.zeros((b, c_in, t + 2 * padding))
        for j in range(kw):
            gxp[:, :, j:j + t_out] += gcols[:, :, :, j].transpose(0, 2, 1)
        gx = gxp[:, :, padding:padding + t] if padding else gxp
        return gx, gw, g.sum(axis=(0, 2))

    return _node(np.ascontiguousarray(out), "conv1d", (x, weight, bias), grad_fn)


def max_pool2(x: Tensor) -> Tensor:
    """Non-overlapping max pooling by a factor of 2; an odd tail is dropped."""
    xd = x.data
    t = xd.shape[-1]
    if t < 2:
        raise SeriesTooShortError("series too short for pooling stage")
    half = t // 2
    pairs = xd[..., :2 * half].reshape(*xd.shape[:-1], half, 2)
    pick = np.argmax(pairs, axis=-1)  # first index on ties
    out = np.take_along_axis(pairs, pick[..., None], axis=-1)[..., 0]

    def grad_fn(g):
        gp = np.zeros_like(pairs)
        np.put_along_axis(gp, pick[..., None], g[..., None], axis=-1)
        gx = np.zeros_like(xd)
        gx[..., :2 * half] = gp.reshape(*xd.shape[:-1], 2 * half)
        return (gx,)

    return _node(out, "max_pool2", (x,), grad_fn)


def _normalize(x: Tensor, gamma: Tensor, beta: Tensor, eps: float,
               bshape: tuple, op: str) -> Tensor:
    # normalization over the last axis, affine broadcast with ``bshape``
    xd = x.data
    n = xd.shape[-1]
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    gd = gamma.data.reshape(bshape)
    out = gd * xhat + beta.data.reshape(bshape)
    red = tuple(i for i, s in enumerate(bshape) if s == 1)

    def grad_fn(g):
        ggamma = (g * xhat).sum(axis=red).reshape(gamma.shape)
        gbeta = g.sum(axis=red).reshape(beta.shape)
        gh = g * gd
        gx = inv / n * (n * gh - gh.sum(axis=-1, keepdims=True)
                        - xhat * (gh * xhat).sum(axis=-1, keepdims=True))
        return gx, ggamma, gbeta

    return _node(out, op, (x, gamma, beta), grad_fn)


def instance_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-instance, per-channel normalization over time with affine.

    Uses the population variance. ``x`` is ``[b, c, t]``; ``gamma`` and
    ``beta`` are ``[c]``.
    """
    if x.data.ndim != 3 or gamma.shape != (x.shape[1],) or beta.shape != (x.shape[1],):
        raise ShapeError(
            f"instance_norm input {x.shape} with gamma {gamma.shape}, beta {beta.shape}")
    return _normalize(x, gamma, beta, eps, (1, x.shape[1], 1), "instance_norm")


def feature_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize each row of ``[b, k]`` over its k components, affine per component."""
    if x.data.ndim != 2 or gamma.shape != (x.shape[1],) or beta.shape != (x.shape[1],):
        raise ShapeError(
            f"feature_norm input {x.shape} with gamma {gamma.shape}, beta {beta.shape}")
    return _normalize(x, gamma, beta, eps, (1, x.shape[1]), "feature_norm")


def prelu(x: Tensor, slope: Tensor) -> Tensor:
    """Parametric ReLU with one slope per channel (axis 1)."""
    xd = x.data
    if slope.data.ndim != 1 or xd.ndim < 2 or slope.shape[0] != xd.shape[1]:
        raise ShapeError(f"prelu input {xd.shape} with slope {slope.shape}")
    bshape = (1, -1) + (1,) * (xd.ndim - 2)
    a = slope.data.reshape(bshape)
    neg = xd < 0
    out = np.where(neg, a * xd, xd)
    red = (0,) + tuple(range(2, xd.ndim))

    def grad_fn(g):
        gx = np.where(neg, a * g, g)
        gs = np.where(neg, g * xd, 0.0).sum(axis=red)
        return gx, gs

    return _node(out, "prelu", (x, slope), grad_fn)


def dropout(x: Tensor, p: float, train: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout; the identity in eval mode or when ``p == 0``."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must lie in [0, 1), got {p}")
    if not train or p == 0.0:
        return x
    if rng is None:
        raise ValueError("training-mode dropout needs an explicit rng")
    mask = (rng.random(x.shape) >= p) / (1.0 - p)

    return _node(x.data * mask, "dropout", (x,), lambda g: (g * mask,))


def softmax_time(x: Tensor) -> Tensor:
    """Softmax over the last axis, with max subtraction."""
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    a = e / e.sum(axis=-1, keepdims=True)

    def grad_fn(g):
        return (a * (g - (g * a).sum(axis=-1, keepdims=True)),)

    return _node(a, "softmax_time", (x,), grad_fn)


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Affine map ``x @ weight.T + bias`` for ``x`` of shape ``[b, d_in]``."""
    xd, wd = x.data, weight.data
    if xd.ndim != 2 or wd.ndim != 2 or xd.shape[1] != wd.shape[1] \
            or bias.shape != (wd.shape[0],):
        raise ShapeError(
            f"linear input {xd.shape} incompatible with weight {wd.shape}, bias {bias.shape}")
    out = xd @ wd.T + bias.data

    def grad_fn(g):
        return g @ wd, g.T @ xd, g.sum(axis=0)

    return _node(out, "linear", (x, weight, bias), grad_fn)


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean softmax cross-entropy of ``[b, classes]`` logits against int labels."""
    ld = logits.data
    labels = np.asarray(labels)
    if ld.ndim != 2 or labels.shape != (ld.shape[0],):
        raise ShapeError(f"cross_entropy logits {ld.shape} with labels {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= ld.shape[1]):
        raise ValueError(
            f"labels must lie in [0, {ld.shape[1]}), got range "
            f"[{labels.min()}, {labels.max()}]")
    b = ld.shape[0]
    z = ld - ld.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(b)
    loss = np.mean(logsum - z[rows, labels])

    def grad_fn(g):
        p = np.exp(z - logsum[:, None])
        p[rows, labels] -= 1.0
        return (g * p / b,)

    return _node(np.array(loss), "cross_entropy", (logits,), grad_fn)


# --------------------------------------------------------------------------
# plumbing ops

def channel_slice(x: Tensor, start: int, stop: int) -> Tensor:
    """Channels ``[start, stop)`` of a ``[b, c, t]`` tensor."""
    shape = x.shape

    def grad_fn(g):
        gx = np.zeros(shape)
        gx[:, start:stop] = g
        return (gx,)

    return _node(x.data[:, start:stop].copy(), "channel_slice", (x,), grad_fn)


def mul(x: Tensor, y: Tensor) -> Tensor:
    """Elementwise product of equally-shaped tensors."""
    if x.shape != y.shape:
        raise ShapeError(f"mul operands {x.shape} and {y.shape}")
    xd, yd = x.data, y.data
    return _node(xd * yd, "mul", (x, y), lambda g: (g * yd, g * xd))


def sum_time(x: Tensor) -> Tensor:
    """Sum over the last axis."""
    shape = x.shape
    return _node(x.data.sum(axis=-1), "sum_time", (x,),
                 lambda g: (np.broadcast_to(g[..., None], shape).copy(),))


def concat_rows(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate ``[b_i, d]`` tensors along the batch axis."""
    if len(parts) == 1:
        return parts[0]
    sizes = np.cumsum([p.shape[0] for p in parts])[:-1]
    out = np.concatenate([p.data for p in parts], axis=0)
    return _node(out, "concat_rows", tuple(parts), lambda g: tuple(np.split(g, sizes)))


def total(x: Tensor, weights=None) -> Tensor:
    """Scalar sum of ``x`` or of ``x * weights`` for a constant array."""
    w = np.ones(x.shape) if weights is None else np.asarray(weights, dtype=np.float64)
    if w.shape != x.shape:
        raise ShapeError(f"total weights {w.shape} for input {x.shape}")
    return _node(np.array((x.data * w).sum()), "total", (x,), lambda g: (g * w,))


# --------------------------------------------------------------------------
# verification

def grad_check(fn: Callable[[], Tensor], params: Sequence[Tensor],
               step: float = 1e-6, rng: np.random.Generator | None = None,
               max_entries: int | None = None) -> float:
    """Compare analytic gradients with central finite differences.

    ``fn`` rebuilds the graph from ``params`` and returns a scalar tensor;
    it must be deterministic (eval-mode dropout). If ``max_entries`` is set,
    that many randomly chosen entries per parameter are probed.

    Returns:
        max over probed entries of ``|ga - gf| / max(1, |ga|, |gf|)``.
    """
    for p in params:
        p.zero_grad()
    backward(fn())
    analytic = [p.grad.copy() for p in params]
    worst = 0.0
    for p, ga in zip(params, analytic):
        flat = p.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = (rng or np.random.default_rng(0)).choice(flat.size, max_entries, replace=False)
        gaf = ga.reshape(-1)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + step
            up = float(fn().data)
            flat[i] = orig - step
            down = float(fn().data)
            flat[i] = orig
            gf = (up - down) / (2 * step)
            err = abs(gaf[i] - gf) / max(1.0, abs(gaf[i]), abs(gf))
            worst = max(worst, err)
    return worst
