"""Minimal dense float64 tensor engine with reverse-mode autodiff.

Graphs are recorded on an explicit Tape: every op appends a node whose
backward closure scatters the incoming gradient to its inputs. Node order is
creation order, which is automatically topological, so backward() is a single
reverse sweep. Tapes are single-owner and single-threaded; tensors detached
from any tape are immutable data carriers and safe to share.
"""

from __future__ import annotations

import threading
from typing import Callable, Sequence

import numpy as np

from .metrics import SsimConfig, DEFAULT_SSIM, ssim_and_grad


class ShapeMismatch(ValueError):
    def __init__(self, op: str, *shapes):
        super().__init__(f"{op}: incompatible shapes {' vs '.join(str(s) for s in shapes)}")


class Tensor:
    """Row-major float64 array, optionally attached to a tape node."""

    __slots__ = ("data", "requires_grad", "node_id")

    def __init__(self, data, requires_grad: bool = False):
        # note: asarray keeps 0-d shapes; ascontiguousarray would promote to 1-d
        self.data = np.asarray(data, dtype=np.float64, order="C")
        self.requires_grad = requires_grad
        self.node_id = None

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


class _Node:
    __slots__ = ("op", "input_ids", "backward_fn", "shape")

    def __init__(self, op: str, input_ids, backward_fn, shape):
        self.op = op
        self.input_ids = input_ids
        self.backward_fn = backward_fn
        self.shape = shape


_ACTIVE = threading.local()


def _active_tape():
    stack = getattr(_ACTIVE, "stack", None)
    return stack[-1] if stack else None


class Tape:
    """Records ops in creation order; gradients filled in by backward()."""

    def __init__(self):
        self.nodes: list[_Node] = []
        self.gradients: dict[int, Tensor] = {}

    def __enter__(self):
        if not hasattr(_ACTIVE, "stack"):
            _ACTIVE.stack = []
        _ACTIVE.stack.append(self)
        return self

    def __exit__(self, *exc):
        _ACTIVE.stack.pop()
        return False

    def leaf(self, data) -> Tensor:
        """Register a differentiable input."""
        t = Tensor(data, requires_grad=True)
        t.node_id = self._record("leaf", [], None, t.data.shape)
        return t

    def _record(self, op, input_ids, backward_fn, shape) -> int:
        self.nodes.append(_Node(op, input_ids, backward_fn, shape))
        return len(self.nodes) - 1


def _record_op(op: str, out_data: np.ndarray, inputs: Sequence[Tensor],
               backward_fn: Callable) -> Tensor:
    """Wrap op output; attach to the active tape when any input is differentiable.

    backward_fn(g) must return one gradient (or None) per input, in order.
    """
    out = Tensor(out_data)
    if not any(t.requires_grad for t in inputs):
        return out
    tape = _active_tape()
    if tape is None:
        raise RuntimeError(f"{op}: differentiable inputs outside any Tape context")
    input_ids = []
    for t in inputs:
        if t.requires_grad:
            if t.node_id is None:
                raise RuntimeError(f"{op}: requires_grad input was not registered with tape.leaf")
            input_ids.append(t.node_id)
        else:
            input_ids.append(None)
    out.requires_grad = True
    out.node_id = tape._record(op, input_ids, backward_fn, out.data.shape)
    return out


def backward(tape: Tape, loss: Tensor) -> dict[int, Tensor]:
    """Reverse sweep from a scalar loss; returns node_id -> gradient tensor.

    Differentiable leaves with no path to the loss get zero gradients.
    """
    if loss.data.shape != ():
        raise ValueError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    if loss.node_id is None:
        raise ValueError("loss tensor is not on the tape")
    grads: list[np.ndarray | None] = [None] * len(tape.nodes)
    grads[loss.node_id] = np.ones(())
    for nid in range(loss.node_id, -1, -1):
        g = grads[nid]
        if g is None:
            continue
        node = tape.nodes[nid]
        if node.backward_fn is None:
            continue
        input_grads = node.backward_fn(g)
        for iid, ig in zip(node.input_ids, input_grads):
            if iid is None or ig is None:
                continue
            if grads[iid] is None:
                grads[iid] = ig.copy() if isinstance(ig, np.ndarray) else np.asarray(ig)
            else:
                grads[iid] = grads[iid] + ig
    out: dict[int, Tensor] = {}
    for nid, node in enumerate(tape.nodes):
        if grads[nid] is not None:
            out[nid] = Tensor(grads[nid])
        elif node.op == "leaf":
            out[nid] = Tensor(np.zeros(node.shape))
    tape.gradients = out
    return out


# ---------------------------------------------------------------------------
# Op kinds.
# ---------------------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeMismatch("add", a.shape, b.shape)
    return _record_op("add", a.data + b.data, [a, b],
                      lambda g: [g if a.requires_grad else None,
                                 g if b.requires_grad else None])


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product; a scalar (0-d or length-1) operand broadcasts."""
    as_, bs = a.shape, b.shape
    scalar_a = a.data.size == 1
    scalar_b = b.data.size == 1
    if as_ != bs and not (scalar_a or scalar_b):
        raise ShapeMismatch("mul", as_, bs)
    ad, bd = a.data, b.data
    out = ad * bd

    def bw(g):
        ga = gb = None
        if a.requires_grad:
            ga = g * bd
            if scalar_a and as_ != out.shape:
                ga = np.sum(ga).reshape(as_)
        if b.requires_grad:
            gb = g * ad
            if scalar_b and bs != out.shape:
                gb = np.sum(gb).reshape(bs)
        return [ga, gb]

    return _record_op("mul", out, [a, b], bw)


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _record_op("scale", a.data * c, [a], lambda g: [g * c])


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatch("matmul", a.shape, b.shape)
    ad, bd = a.data, b.data

    def bw(g):
        return [g @ bd.T if a.requires_grad else None,
                ad.T @ g if b.requires_grad else None]

    return _record_op("matmul", ad @ bd, [a, b], bw)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0  # subgradient at 0 is 0
    return _record_op("relu", np.where(mask, a.data, 0.0), [a], lambda g: [g * mask])


def _im2col(x: np.ndarray, kh: int, kw: int) -> np.ndarray:
    """Zero-padded same-size patches of x (cin,h,w) as (cin*kh*kw, h*w)."""
    cin, h, w = x.shape
    ph, pw = kh // 2, kw // 2
    xp = np.zeros((cin, h + 2 * ph, w + 2 * pw))
    xp[:, ph : ph + h, pw : pw + w] = x
    cols = np.empty((cin, kh, kw, h, w))
    for i in range(kh):
        for j in range(kw):
            cols[:, i, j] = xp[:, i : i + h, j : j + w]
    return cols.reshape(cin * kh * kw, h * w)


def _col2im(cols: np.ndarray, cin: int, kh: int, kw: int, h: int, w: int) -> np.ndarray:
    ph, pw = kh // 2, kw // 2
    xp = np.zeros((cin, h + 2 * ph, w + 2 * pw))
    cols = cols.reshape(cin, kh, kw, h, w)
    for i in range(kh):
        for j in range(kw):
            xp[:, i : i + h, j : j + w] += cols[:, i, j]
    return xp[:, ph : ph + h, pw : pw + w]


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Stride-1 zero-pad-same convolution of (cin,h,w) with (cout,cin,kh,kw)."""
    if x.data.ndim != 3 or weight.data.ndim != 4:
        raise ShapeMismatch("conv2d", x.shape, weight.shape)
    cout, cin, kh, kw = weight.shape
    if x.shape[0] != cin or kh % 2 == 0 or kw % 2 == 0:
        raise ShapeMismatch("conv2d", x.shape, weight.shape)
    if bias is not None and bias.shape != (cout,):
        raise ShapeMismatch("conv2d bias", bias.shape, (cout,))
    _, h, w = x.shape
    cols = _im2col(x.data, kh, kw)
    wmat = weight.data.reshape(cout, cin * kh * kw)
    out = (wmat @ cols).reshape(cout, h, w)
    if bias is not None:
        out = out + bias.data[:, None, None]
    inputs = [x, weight] if bias is None else [x, weight, bias]

    def bw(g):
        gmat = g.reshape(cout, h * w)
        grads = []
        if x.requires_grad:
            gcols = wmat.T @ gmat
            grads.append(_col2im(gcols, cin, kh, kw, h, w))
        else:
            grads.append(None)
        if weight.requires_grad:
            grads.append((gmat @ cols.T).reshape(cout, cin, kh, kw))
        else:
            grads.append(None)
        if bias is not None:
            grads.append(g.sum(axis=(1, 2)) if bias.requires_grad else None)
        return grads

    return _record_op("conv2d", out, inputs, bw)


def avgpool2(x: Tensor) -> Tensor:
    if x.data.ndim != 3 or x.shape[1] % 2 or x.shape[2] % 2:
        raise ShapeMismatch("avgpool2", x.shape)
    c, h, w = x.shape
    out = x.data.reshape(c, h // 2, 2, w // 2, 2).mean(axis=(2, 4))

    def bw(g):
        return [np.repeat(np.repeat(g, 2, axis=1), 2, axis=2) * 0.25]

    return _record_op("avgpool2", out, [x], bw)


def upsample2(x: Tensor) -> Tensor:
    if x.data.ndim != 3:
        raise ShapeMismatch("upsample2", x.shape)
    c, h, w = x.shape
    out = np.repeat(np.repeat(x.data, 2, axis=1), 2, axis=2)

    def bw(g):
        return [g.reshape(c, h, 2, w, 2).sum(axis=(2, 4))]

    return _record_op("upsample2", out, [x], bw)


def concat_channels(tensors: Sequence[Tensor]) -> Tensor:
    if not tensors:
        raise ShapeMismatch("concat-channels", ())
    hw = tensors[0].shape[1:]
    for t in tensors:
        if t.data.ndim != 3 or t.shape[1:] != hw:
            raise ShapeMismatch("concat-channels", *[t.shape for t in tensors])
    sizes = [t.shape[0] for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=0)
    offsets = np.cumsum([0] + sizes)

    def bw(g):
        return [g[offsets[i] : offsets[i + 1]] if t.requires_grad else None
                for i, t in enumerate(tensors)]

    return _record_op("concat-channels", out, list(tensors), bw)


def complex_mul_2ch(a: Tensor, b: Tensor) -> Tensor:
    """Complex product of (2,h,w) tensors, channel 0 real and channel 1 imaginary."""
    if a.shape != b.shape or a.data.ndim != 3 or a.shape[0] != 2:
        raise ShapeMismatch("complex-mul-as-2ch", a.shape, b.shape)
    ar, ai = a.data[0], a.data[1]
    br, bi = b.data[0], b.data[1]
    out = np.stack([ar * br - ai * bi, ar * bi + ai * br])

    def bw(g):
        gr, gi = g[0], g[1]
        ga = np.stack([gr * br + gi * bi, -gr * bi + gi * br]) if a.requires_grad else None
        gb = np.stack([gr * ar + gi * ai, -gr * ai + gi * ar]) if b.requires_grad else None
        return [ga, gb]

    return _record_op("complex-mul-as-2ch", out, [a, b], bw)


def reduce_mean(x: Tensor) -> Tensor:
    n = x.data.size
    shape = x.data.shape

    def bw(g):
        return [np.full(shape, float(g) / n)]

    return _record_op("reduce-mean", np.asarray(x.data.mean()), [x], bw)


def ssim_loss(x: Tensor, target: Tensor, config: SsimConfig = DEFAULT_SSIM) -> Tensor:
    """1 - SSIM(x, target) as a scalar node; gradient flows into x only.

    The target is the reference image and is treated as a constant.
    """
    if target.requires_grad:
        raise ValueError("ssim-loss-node: target must not require grad")
    if x.shape != target.shape or x.data.ndim != 2:
        raise ShapeMismatch("ssim-loss-node", x.shape, target.shape)
    value, grad_x = ssim_and_grad(x.data, target.data, config)

    def bw(g):
        return [-float(g) * grad_x, None]

    return _record_op("ssim-loss-node", np.asarray(1.0 - value), [x, target], bw)


# Plumbing kinds used by the models to route channels; differentiated like the rest.


def reshape(x: Tensor, shape) -> Tensor:
    old = x.data.shape
    return _record_op("reshape", x.data.reshape(shape), [x], lambda g: [g.reshape(old)])


def slice_channels(x: Tensor, lo: int, hi: int) -> Tensor:
    if x.data.ndim != 3 or not (0 <= lo < hi <= x.shape[0]):
        raise ShapeMismatch("slice-channels", x.shape, (lo, hi))
    c = x.shape[0]

    def bw(g):
        full = np.zeros((c,) + x.shape[1:])
        full[lo:hi] = g
        return [full]

    return _record_op("slice-channels", x.data[lo:hi].copy(), [x], bw)


def magnitude_2ch(x: Tensor, eps: float = 1e-12) -> Tensor:
    """Pointwise complex magnitude of a (2,h,w) tensor."""
    if x.data.ndim != 3 or x.shape[0] != 2:
        raise ShapeMismatch("magnitude-2ch", x.shape)
    mag = np.sqrt(x.data[0] ** 2 + x.data[1] ** 2)

    def bw(g):
        denom = np.maximum(mag, eps)
        return [np.stack([g * x.data[0] / denom, g * x.data[1] / denom])]

    return _record_op("magnitude-2ch", mag, [x], bw)


# ---------------------------------------------------------------------------
# Gradient checking.
# ---------------------------------------------------------------------------


def grad_check(fn, params: Sequence[np.ndarray], h: float = 1e-5) -> float:
    """Max relative error of analytic vs central-difference gradients.

    `fn(leaves)` must deterministically map a list of leaf tensors to a scalar
    tensor. Returns 0.0 for a closure with no parameters.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    params = [np.asarray(p, dtype=np.float64) for p in params]
    if not params:
        return 0.0
    with Tape() as tape:
        leaves = [tape.leaf(p) for p in params]
        loss = fn(leaves)
        grads = backward(tape, loss)
    analytic = [grads[leaf.node_id].data for leaf in leaves]

    def eval_at(arrays) -> float:
        value = fn([Tensor(a) for a in arrays])
        return float(value.data)

    worst = 0.0
    for k, p in enumerate(params):
        for idx in np.ndindex(p.shape):
            plus = [q.copy() for q in params]
            minus = [q.copy() for q in params]
            plus[k][idx] += h
            minus[k][idx] -= h
            fd = (eval_at(plus) - eval_at(minus)) / (2.0 * h)
            a = float(analytic[k][idx])
            if not np.isfinite(fd) or not np.isfinite(a):
                raise FloatingPointError("non-finite value in gradient check")
            err = abs(a - fd) / max(1e-8, abs(fd))
            worst = max(worst, err)
    return worst
