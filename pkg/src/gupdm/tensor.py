"""Minimal float64 tensor with tape-based reverse-mode autodiff.

Operations record themselves on the active :class:`Tape` whenever at least one
input requires a gradient.  ``loss.backward()`` replays the tape once, in
reverse, accumulating ``.grad`` on leaf tensors, and then clears it.

Example
-------
>>> x = Tensor([1.0, 2.0], requires_grad=True)
>>> loss = (x * x).sum() * 0.5
>>> loss.backward()
>>> x.grad.tolist()
[1.0, 2.0]
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .exceptions import ContractError, DimensionError, NumericError

__all__ = [
    "Tensor",
    "Tape",
    "no_grad",
    "backward",
    "active_tape",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "power",
    "exp",
    "log",
    "abs_",
    "relu",
    "sigmoid",
    "tanh",
    "clip",
    "smooth_l1",
    "tensor_sum",
    "mean",
    "reshape",
    "concat",
    "matmul",
    "fc",
    "conv2d",
    "global_avg_pool",
    "global_max_pool",
    "softmax",
    "upsample2x",
    "downsample2x",
]

BackwardFn = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


class Tape:
    """Ordered record of differentiable operations.

    Use as a context manager to make it the active tape; operations executed
    inside the block are appended in execution order, which keeps the record
    topologically sorted.
    """

    def __init__(self) -> None:
        self._records: list[tuple[Tensor, tuple[Tensor, ...], BackwardFn]] = []

    def __len__(self) -> int:
        return len(self._records)

    def __enter__(self) -> "Tape":
        _TAPES.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _TAPES.pop()

    def record(self, out: "Tensor", inputs: tuple["Tensor", ...], fn: BackwardFn) -> None:
        self._records.append((out, inputs, fn))

    def reset(self) -> None:
        self._records.clear()

    def backward(self, loss: "Tensor") -> None:
        if loss.size != 1:
            raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
        if loss._tape is not self:
            raise ContractError("loss was not produced on this tape")
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        for out, inputs, fn in reversed(self._records):
            g = grads.pop(id(out), None)
            if g is None:
                continue
            in_grads = fn(g)
            for inp, ig in zip(inputs, in_grads):
                if ig is None or not inp.requires_grad:
                    continue
                if not np.isfinite(ig).all():
                    self.reset()
                    raise NumericError("non-finite gradient during backward")
                if inp._leaf:
                    inp.grad = ig.copy() if inp.grad is None else inp.grad + ig
                else:
                    key = id(inp)
                    prev = grads.get(key)
                    grads[key] = ig if prev is None else prev + ig
        self.reset()


_TAPES: list[Tape | None] = [Tape()]


def active_tape() -> Tape | None:
    """The tape new operations record onto, or None inside ``no_grad``."""
    return _TAPES[-1]


@contextlib.contextmanager
def no_grad():
    """Disable recording; results of operations never require gradients."""
    _TAPES.append(None)
    try:
        yield
    finally:
        _TAPES.pop()


def backward(loss: "Tensor") -> None:
    loss.backward()


class Tensor:
    """An n-dimensional float64 array that can take part in a gradient tape."""

    __slots__ = ("data", "requires_grad", "grad", "_tape", "_leaf", "name")
    __array_priority__ = 1000

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.array(data, dtype=np.float64)
        if 0 in arr.shape:
            raise DimensionError(f"tensor extents must be positive, got {arr.shape}")
        if not np.isfinite(arr).all():
            raise NumericError("tensor data contains NaN or Inf")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._tape: Tape | None = None
        self._leaf = True
        self.name = name

    @classmethod
    def _result(cls, data: np.ndarray) -> "Tensor":
        if not np.isfinite(data).all():
            raise NumericError("operation produced NaN or Inf")
        t = cls.__new__(cls)
        t.data = data
        t.requires_grad = False
        t.grad = None
        t._tape = None
        t._leaf = False
        t.name = None
        return t

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def __len__(self) -> int:
        return self.data.shape[0]

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        if self.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        t = Tensor.__new__(Tensor)
        t.data = self.data
        t.requires_grad = False
        t.grad = None
        t._tape = None
        t._leaf = True
        t.name = self.name
        return t

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        if self._tape is None:
            raise ContractError("tensor is not connected to any tape")
        self._tape.backward(self)

    # operator sugar
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

    def __pow__(self, p: float):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return _getitem(self, idx)

    def sum(self, axis=None, keepdims: bool = False):
        return tensor_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def _wrap(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x)


def _make(data: np.ndarray, inputs: tuple[Tensor, ...], fn: BackwardFn) -> Tensor:
    out = Tensor._result(data)
    tape = _TAPES[-1]
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out._tape = tape
        tape.record(out, inputs, fn)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, s in enumerate(shape):
        if s == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ---------------------------------------------------------------- elementwise


def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    sa, sb = a.shape, b.shape
    return _make(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    sa, sb = a.shape, b.shape
    return _make(a.data - b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    ad, bd = a.data, b.data
    return _make(
        ad * bd,
        (a, b),
        lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)),
    )


def div(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    ad, bd = a.data, b.data
    with np.errstate(divide="ignore", invalid="ignore"):
        out = ad / bd

    def fn(g):
        return _unbroadcast(g / bd, ad.shape), _unbroadcast(-g * out / bd, bd.shape)

    return _make(out, (a, b), fn)


def neg(a) -> Tensor:
    a = _wrap(a)
    return _make(-a.data, (a,), lambda g: (-g,))


def power(a, p: float) -> Tensor:
    a = _wrap(a)
    ad = a.data
    return _make(ad**p, (a,), lambda g: (g * p * ad ** (p - 1),))


def exp(a) -> Tensor:
    a = _wrap(a)
    with np.errstate(over="ignore"):
        out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,))


def log(a) -> Tensor:
    a = _wrap(a)
    ad = a.data
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(ad)
    return _make(out, (a,), lambda g: (g / ad,))


def abs_(a) -> Tensor:
    """Absolute value; the subgradient at 0 is 0."""
    a = _wrap(a)
    sign = np.sign(a.data)
    return _make(np.abs(a.data), (a,), lambda g: (g * sign,))


def relu(a) -> Tensor:
    a = _wrap(a)
    mask = a.data > 0
    return _make(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def leaky_relu(a, slope: float = 0.2) -> Tensor:
    a = _wrap(a)
    scale = np.where(a.data > 0, 1.0, slope)
    return _make(a.data * scale, (a,), lambda g: (g * scale,))


def sigmoid(a) -> Tensor:
    a = _wrap(a)
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),))


def tanh(a) -> Tensor:
    a = _wrap(a)
    out = np.tanh(a.data)
    return _make(out, (a,), lambda g: (g * (1.0 - out * out),))


def clip(a, lo: float, hi: float) -> Tensor:
    """Clamp to [lo, hi]; gradient passes where lo <= a <= hi."""
    a = _wrap(a)
    mask = (a.data >= lo) & (a.data <= hi)
    return _make(np.clip(a.data, lo, hi), (a,), lambda g: (g * mask,))


def smooth_l1(a, delta: float) -> Tensor:
    """Huber penalty: 0.5 a^2 / delta inside |a| < delta, |a| - delta/2 outside."""
    a = _wrap(a)
    ad = a.data
    inside = np.abs(ad) < delta
    out = np.where(inside, 0.5 * ad * ad / delta, np.abs(ad) - 0.5 * delta)
    return _make(out, (a,), lambda g: (g * np.where(inside, ad / delta, np.sign(ad)),))


# ---------------------------------------------------------------- reductions


def tensor_sum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _wrap(a)
    shape = a.shape

    def fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _make(np.asarray(a.data.sum(axis=axis, keepdims=keepdims)), (a,), fn)


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _wrap(a)
    out = np.asarray(a.data.mean(axis=axis, keepdims=keepdims))
    count = a.size / max(out.size, 1)
    shape = a.shape

    def fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, shape).copy(),)

    return _make(out, (a,), fn)


# ---------------------------------------------------------------- structural


def reshape(a, shape) -> Tensor:
    a = _wrap(a)
    old = a.shape
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def _is_basic(idx) -> bool:
    items = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(i, (slice, int, type(Ellipsis), type(None))) for i in items)


def _getitem(a: Tensor, idx) -> Tensor:
    shape = a.shape
    basic = _is_basic(idx)

    def fn(g):
        full = np.zeros(shape)
        if basic:
            full[idx] = g
        else:
            np.add.at(full, idx, g)
        return (full,)

    return _make(np.array(a.data[idx]), (a,), fn)


def concat(tensors: Iterable, axis: int = 0) -> Tensor:
    ts = tuple(_wrap(t) for t in tensors)
    sizes = [t.shape[axis] for t in ts]
    splits = np.cumsum(sizes)[:-1]
    return _make(
        np.concatenate([t.data for t in ts], axis=axis),
        ts,
        lambda g: tuple(np.split(g, splits, axis=axis)),
    )


# ---------------------------------------------------------------- linear maps


def matmul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    ad, bd = a.data, b.data

    def fn(g):
        ga = g @ np.swapaxes(bd, -1, -2)
        gb = np.swapaxes(ad, -1, -2) @ g
        return _unbroadcast(ga, ad.shape), _unbroadcast(gb, bd.shape)

    return _make(ad @ bd, (a, b), fn)


def fc(x, weight, bias=None) -> Tensor:
    """Affine map ``x @ weight + bias`` for x of shape (N, D), weight (D, E)."""
    x, weight = _wrap(x), _wrap(weight)
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[0]:
        raise DimensionError(f"fc: input {x.shape} incompatible with weight {weight.shape}")
    if bias is None:
        xd, wd = x.data, weight.data
        return _make(xd @ wd, (x, weight), lambda g: (g @ wd.T, xd.T @ g))
    bias = _wrap(bias)
    if bias.shape != (weight.shape[1],):
        raise DimensionError(f"fc: bias {bias.shape} does not match weight {weight.shape}")
    xd, wd = x.data, weight.data
    return _make(
        xd @ wd + bias.data,
        (x, weight, bias),
        lambda g: (g @ wd.T, xd.T @ g, g.sum(axis=0)),
    )


def _pad(x: np.ndarray, p: int) -> np.ndarray:
    if p == 0:
        return x
    n, c, h, w = x.shape
    out = np.zeros((n, c, h + 2 * p, w + 2 * p))
    out[:, :, p : p + h, p : p + w] = x
    return out


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int):
    n, c, hp, wp = xp.shape
    if kh == 1 and kw == 1 and stride == 1:
        return xp.reshape(n, c, hp * wp), hp, wp
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    ho, wo = win.shape[2], win.shape[3]
    cols = win.transpose(0, 1, 4, 5, 2, 3).reshape(n, c * kh * kw, ho * wo)
    return cols, ho, wo


def _col2im(dcols, xp_shape, kh, kw, stride, ho, wo):
    n, c = xp_shape[:2]
    dxp = np.zeros(xp_shape)
    d = dcols.reshape(n, c, kh, kw, ho, wo)
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i : i + stride * (ho - 1) + 1 : stride, j : j + stride * (wo - 1) + 1 : stride] += d[:, :, i, j]
    return dxp


def conv2d(x, weight, bias=None, stride: int = 1, padding: int = 0) -> Tensor:
    """2-D cross-correlation.

    ``weight`` is either shared, shape (O, C, kh, kw), or per-sample,
    shape (N, O, C, kh, kw); ``bias`` is then (O,) or (N, O) respectively.
    """
    x, weight = _wrap(x), _wrap(weight)
    if x.ndim != 4:
        raise DimensionError(f"conv2d expects input [N,C,H,W], got {x.shape}")
    per_sample = weight.ndim == 5
    if weight.ndim not in (4, 5):
        raise DimensionError(f"conv2d weight must be 4-D or 5-D, got {weight.shape}")
    n, c, h, w = x.shape
    o, wc, kh, kw = weight.shape[-4:]
    if wc != c:
        raise DimensionError(f"conv2d: input has {c} channels, weight expects {wc}")
    if per_sample and weight.shape[0] != n:
        raise DimensionError(f"conv2d: per-sample weight batch {weight.shape[0]} != {n}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise DimensionError(f"conv2d kernel extents must be odd, got {kh}x{kw}")
    if stride < 1 or padding < 0 or h + 2 * padding < kh or w + 2 * padding < kw:
        raise DimensionError("conv2d: invalid stride/padding for input size")
    if bias is not None:
        bias = _wrap(bias)
        expected = (n, o) if per_sample else (o,)
        if bias.shape != expected:
            raise DimensionError(f"conv2d bias shape {bias.shape}, expected {expected}")

    xp = _pad(x.data, padding)
    cols, ho, wo = _im2col(xp, kh, kw, stride)
    k = c * kh * kw
    wdata = weight.data
    wmat = wdata.reshape((n, o, k) if per_sample else (o, k))
    out = wmat @ cols
    if bias is not None:
        out += bias.data[:, :, None] if per_sample else bias.data[None, :, None]
    out = out.reshape(n, o, ho, wo)
    xp_shape = xp.shape
    wshape = weight.shape

    def fn(g):
        g2 = g.reshape(n, o, ho * wo)
        gw = gx = gb = None
        if weight.requires_grad:
            gw = g2 @ cols.transpose(0, 2, 1)
            gw = (gw if per_sample else gw.sum(axis=0)).reshape(wshape)
        if x.requires_grad:
            if stride == 1 and kh == kw and padding <= kh - 1:
                # input gradient as a correlation with the flipped, transposed kernel
                flipped = np.swapaxes(wdata[..., ::-1, ::-1], -3, -4)
                fmat = flipped.reshape((n, c, o * kh * kw) if per_sample else (c, o * kh * kw))
                gcols, _, _ = _im2col(_pad(g, kh - 1 - padding), kh, kw, 1)
                gx = (fmat @ gcols).reshape(n, c, h, w)
            else:
                dcols = (wmat.transpose(0, 2, 1) if per_sample else wmat.T) @ g2
                dxp = _col2im(dcols, xp_shape, kh, kw, stride, ho, wo)
                gx = dxp[:, :, padding : padding + h, padding : padding + w]
        if bias is None:
            return gx, gw
        if bias.requires_grad:
            gb = g2.sum(axis=2) if per_sample else g2.sum(axis=(0, 2))
        return gx, gw, gb

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return _make(out, inputs, fn)


# ---------------------------------------------------------------- pooling etc.


def global_avg_pool(x) -> Tensor:
    """[N,C,H,W] -> [N,C] spatial mean."""
    x = _wrap(x)
    if x.ndim != 4:
        raise DimensionError(f"global_avg_pool expects [N,C,H,W], got {x.shape}")
    n, c, h, w = x.shape
    return _make(
        x.data.mean(axis=(2, 3)),
        (x,),
        lambda g: (np.broadcast_to(g[:, :, None, None] / (h * w), x.shape).copy(),),
    )


def global_max_pool(x) -> Tensor:
    """[N,C,H,W] -> [N,C] spatial max; the gradient goes to the first argmax."""
    x = _wrap(x)
    if x.ndim != 4:
        raise DimensionError(f"global_max_pool expects [N,C,H,W], got {x.shape}")
    n, c, h, w = x.shape
    flat = x.data.reshape(n, c, h * w)
    idx = flat.argmax(axis=2)

    def fn(g):
        gx = np.zeros((n, c, h * w))
        np.put_along_axis(gx, idx[:, :, None], g[:, :, None], axis=2)
        return (gx.reshape(x.shape),)

    return _make(np.take_along_axis(flat, idx[:, :, None], axis=2)[:, :, 0], (x,), fn)


def softmax(x, axis: int = -1) -> Tensor:
    x = _wrap(x)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)
    return _make(s, (x,), lambda g: (s * (g - (g * s).sum(axis=axis, keepdims=True)),))


def upsample2x(x) -> Tensor:
    """Nearest-neighbour 2x upsampling of [N,C,H,W]."""
    x = _wrap(x)
    n, c, h, w = x.shape
    out = x.data.repeat(2, axis=2).repeat(2, axis=3)
    return _make(out, (x,), lambda g: (g.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5)),))


def downsample2x(x) -> Tensor:
    """2x2 average pooling of [N,C,H,W]; H and W must be even."""
    x = _wrap(x)
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise DimensionError(f"downsample2x needs even spatial size, got {h}x{w}")
    out = x.data.reshape(n, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))
    return _make(out, (x,), lambda g: (g.repeat(2, axis=2).repeat(2, axis=3) / 4.0,))
