"""Minimal reverse-mode automatic differentiation over float64 numpy arrays.

Operations record onto the currently active Tape (see `record`). Each node
stores the op name, input tensors, the output tensor and a VJP closure.
`backward` replays the tape once in reverse, accumulating gradients; leaf
tensors (`requires_grad=True`, not produced by an op) receive them in `.grad`.

With no tape active the ops run as plain numpy, so inference pays no
bookkeeping cost. A tape can be consumed by backward exactly once.
"""
from __future__ import annotations

from contextlib import contextmanager

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class Tape:
    """Ordered record of operation nodes from one forward pass."""

    def __init__(self):
        self.nodes: list[Node] = []
        self.consumed = False

    def __len__(self) -> int:
        return len(self.nodes)


class Node:
    __slots__ = ("op", "inputs", "output", "vjp")

    def __init__(self, op, inputs, output, vjp):
        self.op = op
        self.inputs = inputs
        self.output = output
        self.vjp = vjp


_TAPE_STACK: list[Tape] = []


def active_tape() -> Tape | None:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


@contextmanager
def record(tape: Tape | None = None):
    """Context manager activating a tape for recording. Yields the tape."""
    t = tape if tape is not None else Tape()
    _TAPE_STACK.append(t)
    try:
        yield t
    finally:
        _TAPE_STACK.pop()


class Tensor:
    """float64 array with an optional gradient slot."""

    __slots__ = ("data", "requires_grad", "grad", "is_leaf")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.is_leaf = True

    # ---- introspection

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self):
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy(), requires_grad=False)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # ---- operators

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
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    # ---- method sugar

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, axes):
        return transpose(self, axes)

    def relu(self):
        return relu(self)

    def abs(self):
        return tabs(self)

    def sqrt(self):
        return tsqrt(self)

    def min(self, axis=None):
        return tmin(self, axis=axis)

    def max(self, axis=None):
        return tmax(self, axis=axis)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def constant(x) -> Tensor:
    return Tensor(x, requires_grad=False)


def parameter(x) -> Tensor:
    return Tensor(np.array(x, dtype=np.float64, copy=True), requires_grad=True)


def _make(op, inputs, data, vjp) -> Tensor:
    """Build the output tensor and record a node when a tape is active."""
    out = Tensor(data)
    out.requires_grad = any(isinstance(t, Tensor) and t.requires_grad for t in inputs)
    tape = active_tape()
    if tape is not None and out.requires_grad:
        out.is_leaf = False
        tape.nodes.append(Node(op, tuple(inputs), out, vjp))
    return out


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`."""
    g = grad
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, s in enumerate(shape):
        if s == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------- arithmetic


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    data = a.data + b.data

    def vjp(g):
        return (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape))

    return _make("add", (a, b), data, vjp)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    data = a.data - b.data

    def vjp(g):
        return (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape))

    return _make("sub", (a, b), data, vjp)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    data = a.data * b.data
    ad, bd = a.data, b.data

    def vjp(g):
        return (_unbroadcast(g * bd, a.shape), _unbroadcast(g * ad, b.shape))

    return _make("mul", (a, b), data, vjp)


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    data = a.data / b.data
    ad, bd = a.data, b.data

    def vjp(g):
        return (
            _unbroadcast(g / bd, a.shape),
            _unbroadcast(-g * ad / (bd * bd), b.shape),
        )

    return _make("div", (a, b), data, vjp)


def neg(a):
    a = as_tensor(a)

    def vjp(g):
        return (-g,)

    return _make("neg", (a,), -a.data, vjp)


def matmul(a, b):
    """Matrix product with numpy broadcasting over leading batch dims.

    Both operands must have ndim >= 2.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul requires operands with ndim >= 2")
    data = a.data @ b.data
    ad, bd = a.data, b.data

    def vjp(g):
        ga = g @ np.swapaxes(bd, -1, -2)
        gb = np.swapaxes(ad, -1, -2) @ g
        return (_unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape))

    return _make("matmul", (a, b), data, vjp)


# ---------------------------------------------------------------- elementwise


def relu(a):
    a = as_tensor(a)
    mask = a.data > 0

    def vjp(g):
        return (g * mask,)

    return _make("relu", (a,), np.where(mask, a.data, 0.0), vjp)


def tabs(a):
    a = as_tensor(a)
    s = np.sign(a.data)

    def vjp(g):
        return (g * s,)

    return _make("abs", (a,), np.abs(a.data), vjp)


def tsqrt(a):
    a = as_tensor(a)
    root = np.sqrt(a.data)

    def vjp(g):
        return (g / (2.0 * root),)

    return _make("sqrt", (a,), root, vjp)


def minimum(a, b):
    """Elementwise min; on ties the gradient goes to the first operand."""
    a, b = as_tensor(a), as_tensor(b)
    take_a = a.data <= b.data

    def vjp(g):
        return (
            _unbroadcast(np.where(take_a, g, 0.0), a.shape),
            _unbroadcast(np.where(take_a, 0.0, g), b.shape),
        )

    return _make("minimum", (a, b), np.where(take_a, a.data, b.data), vjp)


def maximum(a, b):
    """Elementwise max; on ties the gradient goes to the first operand."""
    a, b = as_tensor(a), as_tensor(b)
    take_a = a.data >= b.data

    def vjp(g):
        return (
            _unbroadcast(np.where(take_a, g, 0.0), a.shape),
            _unbroadcast(np.where(take_a, 0.0, g), b.shape),
        )

    return _make("maximum", (a, b), np.where(take_a, a.data, b.data), vjp)


def cross(a, b):
    """3-vector cross product along the last axis."""
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data

    def vjp(g):
        return (
            _unbroadcast(np.cross(bd, g), a.shape),
            _unbroadcast(np.cross(g, ad), b.shape),
        )

    return _make("cross", (a, b), np.cross(ad, bd), vjp)


# ---------------------------------------------------------------- reductions


def tsum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    shape = a.shape

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, shape).copy(),)
        gx = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gx, shape).copy(),)

    return _make("sum", (a,), a.data.sum(axis=axis, keepdims=keepdims), vjp)


def tmean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    if axis is None:
        count = a.size
    else:
        count = a.shape[axis]
    return tsum(a, axis=axis, keepdims=keepdims) * (1.0 / count)


def _reduce_minmax(a, axis, mode):
    a = as_tensor(a)
    if axis is None:
        flat = a.data.ravel()
        pos = int(np.argmin(flat) if mode == "min" else np.argmax(flat))
        data = flat[pos]
        shape = a.shape

        def vjp(g):
            out = np.zeros(a.size)
            out[pos] = g
            return (out.reshape(shape),)

        return _make(mode, (a,), np.asarray(data), vjp)

    pos = np.argmin(a.data, axis=axis) if mode == "min" else np.argmax(a.data, axis=axis)
    data = np.take_along_axis(a.data, np.expand_dims(pos, axis), axis=axis).squeeze(axis)
    shape = a.shape

    def vjp(g):
        out = np.zeros(shape)
        np.put_along_axis(out, np.expand_dims(pos, axis), np.expand_dims(g, axis), axis=axis)
        return (out,)

    return _make(mode, (a,), data, vjp)


def tmin(a, axis=None):
    """Min reduction; gradient flows to the first minimizer (argmin)."""
    return _reduce_minmax(a, axis, "min")


def tmax(a, axis=None):
    """Max reduction; gradient flows to the first maximizer (argmax)."""
    return _reduce_minmax(a, axis, "max")


# ---------------------------------------------------------------- shape ops


def reshape(a, shape):
    a = as_tensor(a)
    old = a.shape

    def vjp(g):
        return (g.reshape(old),)

    return _make("reshape", (a,), a.data.reshape(shape), vjp)


def transpose(a, axes):
    a = as_tensor(a)
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))

    def vjp(g):
        return (g.transpose(inverse),)

    return _make("transpose", (a,), a.data.transpose(axes), vjp)


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.ascontiguousarray(p) for p in np.split(g, splits, axis=axis))

    return _make("concat", tuple(tensors), np.concatenate([t.data for t in tensors], axis=axis), vjp)


def gather_rows(a, indices):
    """Row gather along axis 0; indices may repeat (gradients accumulate)."""
    a = as_tensor(a)
    idx = np.asarray(indices, dtype=np.intp)
    shape = a.shape

    def vjp(g):
        out = np.zeros(shape)
        np.add.at(out, idx, g)
        return (out,)

    return _make("gather", (a,), a.data[idx], vjp)


# ---------------------------------------------------------------- convolution


def _conv_forward(xd, wd, pad):
    """Cross-correlation with zero padding and stride 1, any spatial rank."""
    nsp = wd.ndim - 2
    spatial_axes = tuple(range(2, 2 + nsp))
    padding = ((0, 0), (0, 0)) + tuple((pad, pad) for _ in range(nsp))
    xp = np.pad(xd, padding)
    win = sliding_window_view(xp, wd.shape[2:], axis=spatial_axes)
    # win: (B, Cin, *spatial, *kernel); contract Cin and kernel dims with w
    axes_w = (1,) + tuple(range(2, 2 + nsp))
    axes_x = (1,) + tuple(range(2 + nsp, 2 + 2 * nsp))
    out = np.tensordot(win, wd, axes=(axes_x, axes_w))  # (B, *spatial, Cout)
    return np.moveaxis(out, -1, 1), xp


def _convnd(op_name, x, w, b, nsp):
    x, w = as_tensor(x), as_tensor(w)
    if w.ndim != nsp + 2:
        raise ValueError(f"{op_name} kernel must have {nsp + 2} dims, got {w.ndim}")
    ksize = w.shape[2]
    if any(k != ksize for k in w.shape[2:]):
        raise ValueError(f"{op_name} kernel must be cubic, got {w.shape[2:]}")
    if ksize % 2 == 0:
        raise ValueError(f"{op_name} kernel size must be odd, got {ksize}")
    batched = x.ndim == nsp + 2
    if not batched:
        if x.ndim != nsp + 1:
            raise ValueError(f"{op_name} input must have {nsp + 1} or {nsp + 2} dims, got {x.ndim}")
        x = reshape(x, (1,) + x.shape)
    if x.shape[1] != w.shape[1]:
        raise ValueError(f"{op_name} channel mismatch: input {x.shape[1]}, kernel {w.shape[1]}")
    pad = (ksize - 1) // 2
    xd, wd = x.data, w.data
    out, xp = _conv_forward(xd, wd, pad)
    inputs = [x, w]
    if b is not None:
        b = as_tensor(b)
        if b.shape != (w.shape[0],):
            raise ValueError(f"{op_name} bias must be (c_out,), got {b.shape}")
        out = out + b.data.reshape((1, -1) + (1,) * nsp)
        inputs.append(b)

    spatial_axes = tuple(range(2, 2 + nsp))
    axes_kernel = tuple(range(2 + nsp, 2 + 2 * nsp))

    def vjp(g):
        # bias: sum over batch and spatial dims
        gb = g.sum(axis=(0,) + spatial_axes) if b is not None else None
        # kernel: correlate input windows with the output gradient
        win = sliding_window_view(xp, wd.shape[2:], axis=spatial_axes)
        gw = np.tensordot(g, win, axes=((0,) + spatial_axes, (0,) + spatial_axes))
        # gw: (Cout, Cin, *kernel) already in kernel layout
        # input: full correlation of g with the flipped, channel-swapped kernel
        flip = wd[(slice(None), slice(None)) + (slice(None, None, -1),) * nsp]
        w_t = np.swapaxes(flip, 0, 1).copy()
        gx_full, _ = _conv_forward(g, w_t, pad)
        grads = [gx_full, gw]
        if b is not None:
            grads.append(gb)
        return tuple(grads)

    result = _make(op_name, tuple(inputs), out, vjp)
    if not batched:
        result = reshape(result, result.shape[1:])
    return result


def conv3d(x, w, b=None):
    """3D cross-correlation, stride 1, zero padding (k-1)/2 (shape preserving).

    x: (Cin, D, H, W) or (B, Cin, D, H, W); w: (Cout, Cin, k, k, k), k odd.
    """
    return _convnd("conv3d", x, w, b, 3)


def conv2d(x, w, b=None):
    """2D cross-correlation, stride 1, zero padding (k-1)/2 (shape preserving).

    x: (Cin, H, W) or (B, Cin, H, W); w: (Cout, Cin, k, k), k odd.
    """
    return _convnd("conv2d", x, w, b, 2)


# ---------------------------------------------------------------- backward


def backward(tape: Tape, loss: Tensor):
    """Reverse sweep over the tape, accumulating into leaf `.grad` slots.

    The loss must be a scalar recorded on this tape; a tape can be consumed
    only once.
    """
    if tape.consumed:
        raise RuntimeError("tape already consumed by a previous backward call")
    if not isinstance(loss, Tensor) or loss.size != 1:
        raise ValueError("backward requires a scalar loss tensor")
    tape.consumed = True
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    seen_output = False
    for node in reversed(tape.nodes):
        g = grads.pop(id(node.output), None)
        if node.output is loss:
            seen_output = True
        if g is None:
            continue
        for inp, gi in zip(node.inputs, node.vjp(g)):
            if gi is None or not isinstance(inp, Tensor) or not inp.requires_grad:
                continue
            if inp.is_leaf:
                if inp.grad is None:
                    inp.grad = np.zeros_like(inp.data)
                inp.grad += gi.reshape(inp.shape)
            else:
                key = id(inp)
                if key in grads:
                    grads[key] = grads[key] + gi
                else:
                    grads[key] = gi
    if not seen_output and tape.nodes:
        raise ValueError("loss tensor was not recorded on this tape")
