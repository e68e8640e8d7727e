"""Minimal reverse-mode autodiff over channel-last grids.

Every array carries a leading batch axis: ``(N, l, h, c)`` for grids,
``(N, d)`` for feature vectors and ``(N,)`` for per-sample scalars.
Operations record themselves on the active :class:`Tape`; outside a tape
they run as plain numpy and allocate no gradient buffers.
"""

from __future__ import annotations

import math
from typing import Callable, Iterable, Sequence

import numpy as np


class ContractError(ValueError):
    """Raised when an op receives inputs that violate its shape contract."""


class TapeError(RuntimeError):
    pass


class NonFiniteGradientError(FloatingPointError):
    pass


class GridTensor:
    """Array of values with a lazily allocated gradient buffer."""

    __slots__ = ("values", "grad", "requires_grad")

    def __init__(self, values, requires_grad: bool = False):
        self.values = np.asarray(values)
        self.grad = None
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.values.shape

    @property
    def dtype(self):
        return self.values.dtype

    def accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.values)
        self.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    def numpy(self) -> np.ndarray:
        return self.values

    def __repr__(self):
        return f"GridTensor(shape={self.values.shape}, dtype={self.values.dtype})"


class Parameter(GridTensor):
    """Trainable tensor with its own Adam moment buffers."""

    __slots__ = ("name", "adam_m", "adam_v")

    def __init__(self, values, name: str = ""):
        super().__init__(values, requires_grad=True)
        self.name = name
        self.adam_m = np.zeros_like(self.values)
        self.adam_v = np.zeros_like(self.values)

    def astype(self, dtype) -> None:
        self.values = self.values.astype(dtype)
        self.adam_m = self.adam_m.astype(dtype)
        self.adam_v = self.adam_v.astype(dtype)
        self.grad = None


_ACTIVE: list["Tape"] = []


class Tape:
    """Ordered record of forward operations, replayed in reverse by :meth:`backward`.

    Use as a context manager; ops executed inside the ``with`` block are
    recorded. A tape can be replayed exactly once.
    """

    def __init__(self):
        self.records: list[tuple[Callable[[], None], GridTensor]] = []
        self.consumed = False

    def __enter__(self):
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc):
        _ACTIVE.remove(self)
        return False

    def record(self, out: GridTensor, backward_fn: Callable[[], None]) -> None:
        self.records.append((backward_fn, out))

    def backward(self, loss: GridTensor, grad=1.0) -> None:
        if not self.records:
            raise TapeError("backward called without a recorded forward pass")
        if self.consumed:
            raise TapeError("tape already replayed; run a new forward pass first")
        if loss.values.size != 1:
            raise ContractError("backward expects a scalar loss")
        self.consumed = True
        loss.grad = np.full_like(loss.values, grad)
        for backward_fn, out in reversed(self.records):
            if out.grad is not None:
                backward_fn()
        # intermediate buffers are no longer needed
        for _, out in self.records:
            if not isinstance(out, Parameter):
                out.grad = None
        self.records = []


def _tape() -> Tape | None:
    return _ACTIVE[-1] if _ACTIVE else None


def _needs_grad(*tensors: GridTensor) -> bool:
    return _tape() is not None and any(t.requires_grad for t in tensors)


def _result(values: np.ndarray, inputs: Sequence[GridTensor], backward_fn) -> GridTensor:
    out = GridTensor(values)
    if _needs_grad(*inputs):
        out.requires_grad = True
        _tape().record(out, lambda: backward_fn(out.grad))
    return out


def _push(t: GridTensor, g: np.ndarray) -> None:
    if t.requires_grad:
        t.accumulate(g)


# ----------------------------------------------------------------------------
# padding helpers


def symmetric_pad(x: np.ndarray, p: int) -> np.ndarray:
    """Mirror-pad the two spatial axes, repeating the edge row/column."""
    if p == 0:
        return x
    return np.pad(x, ((0, 0), (p, p), (p, p), (0, 0)), mode="symmetric")


def _fold_axis(g: np.ndarray, axis: int, n: int, p: int) -> np.ndarray:
    """Adjoint of symmetric padding along one axis."""
    src = np.pad(np.arange(n), p, mode="symmetric")
    out = np.take(g, np.arange(p, p + n), axis=axis).copy()
    for pos in list(range(p)) + list(range(p + n, n + 2 * p)):
        idx = [slice(None)] * g.ndim
        idx[axis] = src[pos]
        sl = [slice(None)] * g.ndim
        sl[axis] = pos
        out[tuple(idx)] += g[tuple(sl)]
    return out


def symmetric_unpad(g: np.ndarray, p: int, l: int, h: int) -> np.ndarray:
    if p == 0:
        return g
    return _fold_axis(_fold_axis(g, 1, l, p), 2, h, p)


# ----------------------------------------------------------------------------
# ops


# conv taps * thin-side channels up to this size are packed into one matmul
TAP_PACK_LIMIT = 64


def conv2d(x: GridTensor, kernel: Parameter, bias: Parameter) -> GridTensor:
    """Stride-1 'same' convolution with symmetric padding.

    ``kernel`` has shape ``(k, k, cin, cout)`` with odd ``k``.
    """
    k, k2, cin, cout = kernel.shape
    if k != k2 or k % 2 == 0:
        raise ContractError(f"kernel must be square with odd size, got {kernel.shape}")
    if x.values.ndim != 4 or x.shape[3] != cin:
        raise ContractError(f"input {x.shape} does not match kernel cin={cin}")
    if bias.shape != (cout,):
        raise ContractError(f"bias shape {bias.shape} != ({cout},)")
    n, l, h, _ = x.shape
    w = kernel.values
    dtype = np.result_type(x.dtype, w.dtype)
    if k == 1:
        cols = x.values.reshape(n * l * h, cin)
        out = (cols @ w[0, 0] + bias.values).reshape(n, l, h, cout)

        def backward(g):
            gm = g.reshape(n * l * h, cout)
            if kernel.requires_grad:
                kernel.accumulate((cols.T @ gm).reshape(kernel.shape))
            if bias.requires_grad:
                bias.accumulate(gm.sum(axis=0))
            if x.requires_grad:
                x.accumulate(g @ w[0, 0].T)

        return _result(out, (x, kernel, bias), backward)

    # Flatten the padded batch row-major. A kernel offset (a, b) is then a
    # constant shift a*H + b of the flat index, so every tap is a contiguous
    # slice. Rows that land in the padding are computed and dropped.
    p = (k - 1) // 2
    L, H = l + 2 * p, h + 2 * p
    xf = symmetric_pad(x.values, p).reshape(n * L * H, cin)
    m = n * L * H - (k - 1) * (H + 1)
    shifts = [a * H + b for a in range(k) for b in range(k)]
    taps = len(shifts)
    flat = np.empty((n * L * H, cout), dtype=dtype)
    acc = flat[:m]
    # thin side packed into one matmul; otherwise one matmul per tap
    if taps * cin <= TAP_PACK_LIMIT:
        mode = "pack_in"
        wm = w.reshape(taps * cin, cout)
        xcols = np.empty((m, taps * cin), dtype=xf.dtype)
        for t, off in enumerate(shifts):
            xcols[:, t * cin:(t + 1) * cin] = xf[off:off + m]
        np.matmul(xcols, wm, out=acc)
        acc += bias.values
    elif taps * cout <= TAP_PACK_LIMIT:
        mode = "pack_out"
        wm = w.transpose(2, 0, 1, 3).reshape(cin, taps * cout)
        z = xf @ wm
        acc[...] = bias.values
        for t, off in enumerate(shifts):
            acc += z[off:off + m, t * cout:(t + 1) * cout]
    else:
        mode = "per_tap"
        wt = w.reshape(taps, cin, cout)
        acc[...] = bias.values
        for t, off in enumerate(shifts):
            acc += xf[off:off + m] @ wt[t]
    out = flat.reshape(n, L, H, cout)[:, :l, :h]

    def backward(g):
        if bias.requires_grad:
            bias.accumulate(g.sum(axis=(0, 1, 2)))
        gp = np.zeros((n, L, H, cout), dtype=g.dtype)
        gp[:, :l, :h] = g
        gf = gp.reshape(-1, cout)[:m]
        dxf = np.zeros(xf.shape, dtype=g.dtype) if x.requires_grad else None
        if mode == "pack_in":
            if kernel.requires_grad:
                kernel.accumulate((xcols.T @ gf).reshape(kernel.shape))
            if dxf is not None:
                dcols = gf @ wm.T
                for t, off in enumerate(shifts):
                    dxf[off:off + m] += dcols[:, t * cin:(t + 1) * cin]
        elif mode == "pack_out":
            gcols = np.zeros((xf.shape[0], taps * cout), dtype=g.dtype)
            for t, off in enumerate(shifts):
                gcols[off:off + m, t * cout:(t + 1) * cout] = gf
            if kernel.requires_grad:
                dw = (xf.T @ gcols).reshape(cin, k, k, cout).transpose(1, 2, 0, 3)
                kernel.accumulate(np.ascontiguousarray(dw))
            if dxf is not None:
                np.matmul(gcols, wm.T, out=dxf)
        else:
            if kernel.requires_grad:
                dw = np.empty((taps, cin, cout), dtype=np.result_type(g.dtype, xf.dtype))
                for t, off in enumerate(shifts):
                    dw[t] = xf[off:off + m].T @ gf
                kernel.accumulate(dw.reshape(kernel.shape))
            if dxf is not None:
                for t, off in enumerate(shifts):
                    dxf[off:off + m] += gf @ wt[t].T
        if dxf is not None:
            x.accumulate(symmetric_unpad(dxf.reshape(n, L, H, cin), p, l, h))

    return _result(np.ascontiguousarray(out), (x, kernel, bias), backward)


def maxpool2x(x: GridTensor) -> GridTensor:
    """Disjoint 2x2 max pooling; ties route gradient to the first cell in scan order."""
    n, l, h, c = x.shape
    if l % 2 or h % 2:
        raise ContractError(f"maxpool2x needs even spatial dims, got {(l, h)}")
    blocks = (
        x.values.reshape(n, l // 2, 2, h // 2, 2, c)
        .transpose(0, 1, 3, 5, 2, 4)
        .reshape(n, l // 2, h // 2, c, 4)
    )
    arg = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]

    def backward(g):
        gb = np.zeros(blocks.shape, dtype=g.dtype)
        np.put_along_axis(gb, arg[..., None], g[..., None], axis=-1)
        gx = (
            gb.reshape(n, l // 2, h // 2, c, 2, 2)
            .transpose(0, 1, 4, 2, 5, 3)
            .reshape(n, l, h, c)
        )
        x.accumulate(gx)

    return _result(out, (x,), backward)


def upsample2x_nearest(x: GridTensor) -> GridTensor:
    n, l, h, c = x.shape
    out = np.repeat(np.repeat(x.values, 2, axis=1), 2, axis=2)

    def backward(g):
        x.accumulate(g.reshape(n, l, 2, h, 2, c).sum(axis=(2, 4)))

    return _result(out, (x,), backward)


def relu(x: GridTensor) -> GridTensor:
    mask = x.values > 0
    return _result(np.where(mask, x.values, 0).astype(x.dtype), (x,), lambda g: x.accumulate(g * mask))


def _sigmoid(v: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    e = np.exp(v[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def sigmoid(x: GridTensor) -> GridTensor:
    s = _sigmoid(x.values)
    return _result(s, (x,), lambda g: x.accumulate(g * s * (1 - s)))


def linear_activation(x: GridTensor) -> GridTensor:
    return x


def softmax2d(x: GridTensor) -> GridTensor:
    """Softmax over all cells of each sample of a single-channel grid."""
    if x.values.ndim != 4 or x.shape[3] != 1:
        raise ContractError(f"softmax2d expects (n, l, h, 1), got {x.shape}")
    z = x.values - x.values.max(axis=(1, 2, 3), keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=(1, 2, 3), keepdims=True)

    def backward(g):
        dot = (g * s).sum(axis=(1, 2, 3), keepdims=True)
        x.accumulate(s * (g - dot))

    return _result(s, (x,), backward)


def log_softmax2d(x: GridTensor) -> GridTensor:
    z = x.values - x.values.max(axis=(1, 2, 3), keepdims=True)
    lse = np.log(np.exp(z).sum(axis=(1, 2, 3), keepdims=True))
    out = z - lse
    s = np.exp(out)

    def backward(g):
        x.accumulate(g - s * g.sum(axis=(1, 2, 3), keepdims=True))

    return _result(out, (x,), backward)


def concat_channels(a: GridTensor, b: GridTensor) -> GridTensor:
    if a.shape[:3] != b.shape[:3]:
        raise ContractError(f"spatial mismatch: {a.shape} vs {b.shape}")
    ca = a.shape[3]
    out = np.concatenate([a.values, b.values], axis=3)

    def backward(g):
        _push(a, g[..., :ca])
        _push(b, g[..., ca:])

    return _result(out, (a, b), backward)


def mean2(a: GridTensor, b: GridTensor) -> GridTensor:
    if a.shape != b.shape:
        raise ContractError(f"shape mismatch: {a.shape} vs {b.shape}")

    def backward(g):
        _push(a, 0.5 * g)
        _push(b, 0.5 * g)

    return _result(0.5 * (a.values + b.values), (a, b), backward)


def gather_cells(x: GridTensor, cells: np.ndarray) -> GridTensor:
    """Pick one cell per sample: ``cells`` is an ``(N, 2)`` integer array of (i, j)."""
    cells = np.asarray(cells, dtype=np.int64)
    n = x.shape[0]
    if cells.shape != (n, 2):
        raise ContractError(f"cells must be ({n}, 2), got {cells.shape}")
    rows = np.arange(n)
    out = x.values[rows, cells[:, 0], cells[:, 1], 0]

    def backward(g):
        gx = np.zeros_like(x.values)
        gx[rows, cells[:, 0], cells[:, 1], 0] = g
        x.accumulate(gx)

    return _result(out, (x,), backward)


def dense(x: GridTensor, w: Parameter, b: Parameter) -> GridTensor:
    """Affine map on ``(N, d_in)`` features."""
    if x.values.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ContractError(f"input {x.shape} does not match weight {w.shape}")
    out = x.values @ w.values + b.values

    def backward(g):
        if w.requires_grad:
            w.accumulate(x.values.T @ g)
        if b.requires_grad:
            b.accumulate(g.sum(axis=0))
        _push(x, g @ w.values.T)

    return _result(out, (x, w, b), backward)


EPS_CLAMP = 1e-7


def binary_logloss(p: GridTensor, y: np.ndarray) -> GridTensor:
    """Per-sample log-loss of probabilities ``p`` (N,) against 0/1 labels."""
    y = np.asarray(y, dtype=p.dtype)
    pc = np.clip(p.values, EPS_CLAMP, 1 - EPS_CLAMP)
    out = -(y * np.log(pc) + (1 - y) * np.log(1 - pc))
    inside = (p.values > EPS_CLAMP) & (p.values < 1 - EPS_CLAMP)

    def backward(g):
        p.accumulate(g * inside * (-y / pc + (1 - y) / (1 - pc)))

    return _result(out, (p,), backward)


def neg_log(p: GridTensor) -> GridTensor:
    """``-log(p)`` with ``p`` clamped below at 1e-7."""
    pc = np.maximum(p.values, EPS_CLAMP)
    inside = p.values > EPS_CLAMP
    return _result(-np.log(pc), (p,), lambda g: p.accumulate(-g * inside / pc))


def squared_error(pred: GridTensor, target: np.ndarray) -> GridTensor:
    t = np.asarray(target, dtype=pred.dtype)
    d = pred.values - t
    return _result(d * d, (pred,), lambda g: pred.accumulate(2 * d * g))


def reshape(x: GridTensor, shape) -> GridTensor:
    return _result(x.values.reshape(shape), (x,), lambda g: x.accumulate(g.reshape(x.shape)))


def negate(x: GridTensor) -> GridTensor:
    return _result(-x.values, (x,), lambda g: x.accumulate(-g))


def mean(x: GridTensor) -> GridTensor:
    size = x.values.size
    out = np.asarray(x.values.mean(), dtype=x.dtype)
    return _result(out, (x,), lambda g: x.accumulate(np.full_like(x.values, g / size)))


def total(x: GridTensor) -> GridTensor:
    out = np.asarray(x.values.sum(), dtype=x.dtype)
    return _result(out, (x,), lambda g: x.accumulate(np.full_like(x.values, g)))


# ----------------------------------------------------------------------------
# optimizer


def adam_step(
    params: Iterable[Parameter],
    lr: float,
    t: int,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """Bias-corrected Adam update, applied in place.

    Parameters without a gradient are treated as having a zero gradient.
    Raises :class:`NonFiniteGradientError` before touching any parameter
    if a gradient contains NaN or Inf.
    """
    if t < 1:
        raise ValueError("Adam step counter starts at 1")
    params = list(params)
    for p in params:
        if p.grad is not None and not np.all(np.isfinite(p.grad)):
            raise NonFiniteGradientError(f"non-finite gradient in parameter {p.name!r}")
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    for p in params:
        g = p.grad if p.grad is not None else np.zeros_like(p.values)
        p.adam_m *= beta1
        p.adam_m += (1 - beta1) * g
        p.adam_v *= beta2
        p.adam_v += (1 - beta2) * (g * g)
        m_hat = p.adam_m / bc1
        v_hat = p.adam_v / bc2
        p.values -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(p.dtype)


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self):
        self.t += 1
        adam_step(self.params, self.lr, self.t, self.beta1, self.beta2, self.eps)


def truncated_normal(rng: np.random.Generator, shape, std: float, dtype=np.float32) -> np.ndarray:
    """Normal samples redrawn until within two standard deviations."""
    out = rng.standard_normal(shape)
    bad = np.abs(out) > 2
    while bad.any():
        out[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(out) > 2
    return (out * std).astype(dtype)


def he_std(fan_in: int) -> float:
    return math.sqrt(2.0 / fan_in)
