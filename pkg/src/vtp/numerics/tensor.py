"""Minimal reverse-mode autodiff tensor over numpy arrays.

Everything numeric in this project flows through :class:`Tensor`: images,
hidden states, network parameters and losses.  The design is deliberately
small -- only the operations the seven networks need are provided, there is
no general broadcasting, and all arrays are dense row-major float32 (a
float64 switch exists for gradient-check tests).

Layout conventions:
  * images / feature maps: ``(H, W, C)`` or batched ``(B, H, W, C)``
  * vectors: ``(N,)`` or batched ``(B, N)``
  * conv kernels: ``(k, k, C_in, C_out)``; ``transpose_conv2d`` consumes the
    same kernel layout and maps ``C_out -> C_in`` (it is the exact adjoint of
    ``conv2d`` with the shared kernel).
"""

from __future__ import annotations

import contextlib

import numpy as np

_DEFAULT_DTYPE = np.float32
_GRAD_ENABLED = True


def default_dtype():
    return _DEFAULT_DTYPE


def set_default_dtype(dtype) -> None:
    """Set the global float width. float64 exists for gradient checking."""
    global _DEFAULT_DTYPE
    dtype = np.dtype(dtype)
    if dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ValueError(f"unsupported dtype {dtype}")
    _DEFAULT_DTYPE = dtype.type


@contextlib.contextmanager
def use_dtype(dtype):
    global _DEFAULT_DTYPE
    prev = _DEFAULT_DTYPE
    set_default_dtype(dtype)
    try:
        yield
    finally:
        _DEFAULT_DTYPE = prev


@contextlib.contextmanager
def no_grad():
    """Disable graph construction (inference mode)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    """A dense float array plus an optional gradient tape node."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(_DEFAULT_DTYPE)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    # -- graph plumbing -------------------------------------------------

    @staticmethod
    def _from_op(data, parents, backward):
        out = Tensor(data)
        if _GRAD_ENABLED and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        return out

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def backward(self) -> None:
        """Reverse-mode sweep from a scalar output."""
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar tensor")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is None or node.grad is None:
                continue
            grads = node._backward(node.grad)
            for parent, g in zip(node._parents, grads):
                if g is None or not parent.requires_grad:
                    continue
                if parent.grad is None:
                    parent.grad = g
                else:
                    parent.grad = parent.grad + g

    # -- operator sugar --------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a gradient back to `shape` (trailing-axes broadcast only)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    if g.shape != shape:
        raise ValueError(f"cannot reduce grad {g.shape} to {shape}")
    return g


# -- elementwise and shape ops -----------------------------------------


def add(a, b) -> Tensor:
    if isinstance(b, (int, float)):
        a = as_tensor(a)
        return Tensor._from_op(a.data + b, (a,), lambda g: (g,))
    a, b = as_tensor(a), as_tensor(b)
    if a.data.shape[-b.data.ndim:] != b.data.shape and a.data.shape != b.data.shape:
        raise ValueError(f"add: incompatible shapes {a.shape} vs {b.shape}")
    out = a.data + b.data
    return Tensor._from_op(
        out, (a, b),
        lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)),
    )


def sub(a, b) -> Tensor:
    b = as_tensor(b)
    return add(a, mul(b, -1.0))


def mul(a, b) -> Tensor:
    a = as_tensor(a)
    if isinstance(b, (int, float)):
        val = float(b)
        return Tensor._from_op(a.data * val, (a,), lambda g: (g * val,))
    b = as_tensor(b)
    if a.data.shape[-b.data.ndim:] != b.data.shape and a.data.shape != b.data.shape:
        raise ValueError(f"mul: incompatible shapes {a.shape} vs {b.shape}")
    out = a.data * b.data
    return Tensor._from_op(
        out, (a, b),
        lambda g: (_unbroadcast(g * b.data, a.data.shape),
                   _unbroadcast(g * a.data, b.data.shape)),
    )


def reshape(t: Tensor, shape) -> Tensor:
    t = as_tensor(t)
    in_shape = t.data.shape
    out = t.data.reshape(shape)
    return Tensor._from_op(out, (t,), lambda g: (g.reshape(in_shape),))


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return Tensor._from_op(out, tensors, backward)


def relu(t: Tensor) -> Tensor:
    t = as_tensor(t)
    out = np.maximum(t.data, 0)
    return Tensor._from_op(out, (t,), lambda g: (g * (t.data > 0),))


def sigmoid_np(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic on plain arrays (no graph)."""
    x = np.asarray(x)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


_sigmoid = sigmoid_np


def sigmoid(t: Tensor) -> Tensor:
    t = as_tensor(t)
    s = _sigmoid(t.data)
    return Tensor._from_op(s, (t,), lambda g: (g * s * (1.0 - s),))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError("matmul expects 2-D operands")
    if a.data.shape[1] != b.data.shape[0]:
        raise ValueError(f"matmul: {a.shape} @ {b.shape}")
    out = a.data @ b.data
    return Tensor._from_op(
        out, (a, b), lambda g: (g @ b.data.T, a.data.T @ g)
    )


def mean(t: Tensor) -> Tensor:
    t = as_tensor(t)
    n = t.data.size
    out = np.asarray(t.data.mean(dtype=t.data.dtype))
    return Tensor._from_op(out, (t,), lambda g: (np.broadcast_to(g / n, t.data.shape).astype(t.data.dtype, copy=False),))


# -- convolution core ----------------------------------------------------
#
# conv2d forward is im2col + one GEMM; both im2col and its scatter adjoint
# col2im move data with k*k plain strided slice copies, which the numpy
# iterator handles near memcpy speed.  The input gradient of conv2d is
# dcols = dY @ W^T followed by col2im -- exactly the forward pass of
# transpose_conv2d -- so both directions share these helpers and
# adjointness holds by construction.


def _same_pads(k: int) -> tuple[int, int]:
    # total padding k-1 split floor/ceil, so out = ceil(H / stride) holds
    # for stride 1 and 2 alike
    return (k - 1) // 2, k - 1 - (k - 1) // 2


def _conv_out_dim(h: int, k: int, stride: int, pl: int, pr: int) -> int:
    return (h + pl + pr - k) // stride + 1


def _pad2d(x: np.ndarray, pl: int, pr: int) -> np.ndarray:
    if not (pl or pr):
        return x
    b, h, w, c = x.shape
    out = np.zeros((b, h + pl + pr, w + pl + pr, c), dtype=x.dtype)
    out[:, pl:pl + h, pl:pl + w] = x
    return out


def _im2col(x: np.ndarray, k: int, stride: int, pl: int, pr: int) -> np.ndarray:
    """(B,H,W,C) -> (B*Ho*Wo, k*k*C) patch matrix."""
    b, h, w, c = x.shape
    if k == 1 and stride == 1 and not (pl or pr):
        return x.reshape(b * h * w, c)
    xp = _pad2d(x, pl, pr)
    ho = _conv_out_dim(h, k, stride, pl, pr)
    wo = _conv_out_dim(w, k, stride, pl, pr)
    win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(1, 2))
    win = win[:, ::stride, ::stride]              # (B, Ho, Wo, C, k, k)
    cols = win.transpose(0, 1, 2, 4, 5, 3)        # patch layout (k, k, C)
    return cols.reshape(b * ho * wo, k * k * c)   # single strided copy


def _scatter_range(offset: int, stride: int, n_src: int, n_dst: int):
    """Clip source positions p so that offset + stride*p lands in [0, n_dst)."""
    p0 = (-offset + stride - 1) // stride if offset < 0 else 0
    top = n_dst - 1 - offset
    p1 = min(n_src, top // stride + 1) if top >= 0 else 0
    return p0, max(p1, p0), offset + stride * p0


def _col2im(dcols: np.ndarray, b: int, h: int, w: int, c: int, k: int,
            stride: int, pl: int, pr: int, ho: int, wo: int) -> np.ndarray:
    """Scatter-add adjoint of _im2col; returns the unpadded (B,H,W,C) sum."""
    if k == 1 and stride == 1 and not (pl or pr):
        return dcols.reshape(b, h, w, c)
    x = np.zeros((b, h, w, c), dtype=dcols.dtype)
    d6 = dcols.reshape(b, ho, wo, k, k, c)
    for u in range(k):
        pu0, pu1, iu = _scatter_range(u - pl, stride, ho, h)
        if pu1 <= pu0:
            continue
        for v in range(k):
            pv0, pv1, iv = _scatter_range(v - pl, stride, wo, w)
            if pv1 <= pv0:
                continue
            x[:, iu:iu + stride * (pu1 - pu0):stride,
              iv:iv + stride * (pv1 - pv0):stride, :] += \
                d6[:, pu0:pu1, pv0:pv1, u, v, :]
    return x


def _conv_dx(dy: np.ndarray, w: np.ndarray, stride: int, h: int, ww: int, pl: int) -> np.ndarray:
    """Input gradient of conv2d == forward of the adjoint (transpose) conv."""
    b, ho, wo, cout = dy.shape
    k, _, cin, _ = w.shape
    pr = k - 1 - pl
    dcols = dy.reshape(b * ho * wo, cout) @ w.reshape(k * k * cin, cout).T
    return _col2im(dcols, b, h, ww, cin, k, stride, pl, pr, ho, wo)


def _with_batch(x: np.ndarray) -> tuple[np.ndarray, bool]:
    if x.ndim == 3:
        return x[None], True
    if x.ndim == 4:
        return x, False
    raise ValueError(f"expected (H,W,C) or (B,H,W,C), got {x.shape}")


def conv2d(x: Tensor, w: Tensor, stride: int = 1, pad: str = "same") -> Tensor:
    """2-D convolution (cross-correlation), NHWC, kernel (k,k,Cin,Cout).

    `pad="same"` keeps out = ceil(in / stride); `pad="valid"` applies none.
    """
    x, w = as_tensor(x), as_tensor(w)
    if stride not in (1, 2):
        raise ValueError(f"conv2d: stride must be 1 or 2, got {stride}")
    xb, squeeze = _with_batch(x.data)
    k = w.data.shape[0]
    if w.data.ndim != 4 or w.data.shape[1] != k:
        raise ValueError(f"conv2d: bad kernel shape {w.data.shape}")
    if xb.shape[3] != w.data.shape[2]:
        raise ValueError(
            f"conv2d: input has {xb.shape[3]} channels, kernel expects {w.data.shape[2]}")
    if pad == "same":
        pl, pr = _same_pads(k)
    elif pad == "valid":
        pl = pr = 0
        if min(xb.shape[1], xb.shape[2]) < k:
            raise ValueError("conv2d: input smaller than kernel with pad='valid'")
    else:
        raise ValueError(f"conv2d: pad must be 'same' or 'valid', got {pad!r}")
    h, ww = xb.shape[1], xb.shape[2]
    b = xb.shape[0]
    cin, cout = w.data.shape[2], w.data.shape[3]
    ho = _conv_out_dim(h, k, stride, pl, pr)
    wo = _conv_out_dim(ww, k, stride, pl, pr)
    cols = _im2col(xb, k, stride, pl, pr)
    y = (cols @ w.data.reshape(k * k * cin, cout)).reshape(b, ho, wo, cout)
    out = y[0] if squeeze else y
    if not (_GRAD_ENABLED and w.requires_grad):
        cols = None  # patch matrix only needed again for the weight gradient

    def backward(g):
        gb = g[None] if squeeze else g
        gflat = gb.reshape(b * ho * wo, cout)
        dx = dw = None
        if x.requires_grad:
            dcols = gflat @ w.data.reshape(k * k * cin, cout).T
            dx = _col2im(dcols, b, h, ww, cin, k, stride, pl, pr, ho, wo)
            if squeeze:
                dx = dx[0]
        if w.requires_grad:
            dw = (cols.T @ gflat).reshape(k, k, cin, cout)
        return dx, dw

    return Tensor._from_op(out, (x, w), backward)


def transpose_conv2d(x: Tensor, w: Tensor, stride: int = 1) -> Tensor:
    """Adjoint of `conv2d` sharing the kernel layout (k,k,Cin,Cout).

    Maps Cout -> Cin channels and multiplies spatial dims by `stride`
    under the same-padding convention.
    """
    x, w = as_tensor(x), as_tensor(w)
    if stride not in (1, 2):
        raise ValueError(f"transpose_conv2d: stride must be 1 or 2, got {stride}")
    xb, squeeze = _with_batch(x.data)
    k = w.data.shape[0]
    if w.data.ndim != 4 or w.data.shape[1] != k:
        raise ValueError(f"transpose_conv2d: bad kernel shape {w.data.shape}")
    if xb.shape[3] != w.data.shape[3]:
        raise ValueError(
            f"transpose_conv2d: input has {xb.shape[3]} channels, kernel expects {w.data.shape[3]}")
    pl, pr = _same_pads(k)
    ho, wo = stride * xb.shape[1], stride * xb.shape[2]
    b, hi, wi = xb.shape[0], xb.shape[1], xb.shape[2]
    cin, cout = w.data.shape[2], w.data.shape[3]
    y = _conv_dx(xb, w.data, stride, ho, wo, pl)
    out = y[0] if squeeze else y

    def backward(g):
        # both gradients consume the same patch matrix of the upstream grad
        gb = g[None] if squeeze else g
        cols_g = _im2col(gb, k, stride, pl, pr)
        dx = dw = None
        if x.requires_grad:
            dx = (cols_g @ w.data.reshape(k * k * cin, cout)).reshape(b, hi, wi, cout)
            if squeeze:
                dx = dx[0]
        if w.requires_grad:
            dw = (cols_g.T @ xb.reshape(b * hi * wi, cout)).reshape(k, k, cin, cout)
        return dx, dw

    return Tensor._from_op(out, (x, w), backward)


# -- normalization, attention-style pooling, dense ----------------------


def instance_norm(x: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-channel standardization over spatial positions (no affine)."""
    x = as_tensor(x)
    xb, squeeze = _with_batch(x.data)
    if xb.shape[1] * xb.shape[2] < 2:
        raise ValueError("instance_norm: needs at least 2 spatial positions")
    n = xb.shape[1] * xb.shape[2]
    s1 = np.einsum("bhwc->bc", xb, optimize=True)
    s2 = np.einsum("bhwc,bhwc->bc", xb, xb, optimize=True)
    mu = (s1 / n)[:, None, None, :]
    var = np.maximum(s2 / n - (s1 / n) ** 2, 0.0)[:, None, None, :]
    inv = (1.0 / np.sqrt(var + eps)).astype(xb.dtype)
    xhat = xb - mu.astype(xb.dtype)
    xhat *= inv
    out = xhat[0] if squeeze else xhat

    def backward(g):
        gb = g[None] if squeeze else g
        gm = gb.mean(axis=(1, 2), keepdims=True)
        gxm = np.einsum("bhwc,bhwc->bc", gb, xhat,
                        optimize=True)[:, None, None, :] / (xb.shape[1] * xb.shape[2])
        dx = gb - gm
        dx -= xhat * gxm
        dx *= inv
        return (dx[0] if squeeze else dx,)

    return Tensor._from_op(out, (x,), backward)


def spatial_soft_argmax(x: Tensor, temperature: float = 1.0) -> Tensor:
    """Per-channel softmax-expected (row, col) keypoints in [-1, 1].

    Output is (2C,) (or (B, 2C)) laid out as [y_0, x_0, y_1, x_1, ...] with
    the top-left corner at (-1, -1).
    """
    x = as_tensor(x)
    if temperature <= 0:
        raise ValueError("spatial_soft_argmax: temperature must be positive")
    xb, squeeze = _with_batch(x.data)
    b, h, w, c = xb.shape
    gy = np.linspace(-1.0, 1.0, h, dtype=xb.dtype) if h > 1 else np.zeros(1, dtype=xb.dtype)
    gx = np.linspace(-1.0, 1.0, w, dtype=xb.dtype) if w > 1 else np.zeros(1, dtype=xb.dtype)
    grid = np.stack(
        [np.repeat(gy, w), np.tile(gx, h)], axis=1
    )  # (h*w, 2) rows of (y, x)
    v = xb.transpose(0, 3, 1, 2).reshape(b, c, h * w) / temperature
    v = v - v.max(axis=2, keepdims=True)
    e = np.exp(v)
    p = e / e.sum(axis=2, keepdims=True)  # (b, c, h*w)
    kp = p @ grid  # (b, c, 2)
    out = kp.reshape(b, 2 * c)
    if squeeze:
        out = out[0]

    def backward(g):
        gb = (g[None] if squeeze else g).reshape(b, c, 2)
        u = gb @ grid.T  # (b, c, h*w)
        inner = (p * u).sum(axis=2, keepdims=True)
        dv = p * (u - inner) / temperature
        dx = dv.reshape(b, c, h, w).transpose(0, 2, 3, 1)
        dx = np.ascontiguousarray(dx)
        return (dx[0] if squeeze else dx,)

    return Tensor._from_op(out, (x,), backward)


def dense(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Affine map: x @ w + b with x of shape (N,) or (B, N)."""
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    if w.data.ndim != 2 or b.data.shape != (w.data.shape[1],):
        raise ValueError(f"dense: bad parameter shapes {w.shape}, {b.shape}")
    single = x.data.ndim == 1
    xb = x.data[None] if single else x.data
    if xb.ndim != 2 or xb.shape[1] != w.data.shape[0]:
        raise ValueError(f"dense: input {x.shape} incompatible with weights {w.shape}")
    y = xb @ w.data + b.data
    out = y[0] if single else y

    def backward(g):
        gb = g[None] if single else g
        dx = gb @ w.data.T if x.requires_grad else None
        dw = xb.T @ gb if w.requires_grad else None
        db = gb.sum(axis=0) if b.requires_grad else None
        if dx is not None and single:
            dx = dx[0]
        return dx, dw, db

    return Tensor._from_op(out, (x, w, b), backward)


def dropout(x: Tensor, rate: float, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout; exact identity when not training."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout: rate must be in [0, 1), got {rate}")
    x = as_tensor(x)
    if not training:
        return x
    if rng is None:
        raise ValueError("dropout: training mode needs an rng")
    # uint32 threshold draw: cheaper than float sampling, bias < 2**-32
    thresh = np.uint32(round(rate * 4294967296.0)) if rate > 0 else np.uint32(0)
    draw = rng.integers(0, 2**32, size=x.data.shape, dtype=np.uint32)
    keep = (draw >= thresh).astype(x.data.dtype)
    keep *= np.asarray(1.0 / (1.0 - rate), dtype=x.data.dtype)
    out = x.data * keep
    return Tensor._from_op(out, (x,), lambda g: (g * keep,))


# -- losses ---------------------------------------------------------------


def l1_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean absolute error."""
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.data.shape != target.data.shape:
        raise ValueError(f"l1_loss: shape mismatch {pred.shape} vs {target.shape}")
    diff = pred.data - target.data
    out = np.asarray(np.abs(diff).mean(dtype=diff.dtype))
    n = diff.size

    def backward(g):
        d = g * np.sign(diff) / n
        return d.astype(diff.dtype, copy=False), (-d).astype(diff.dtype, copy=False)

    return Tensor._from_op(out, (pred, target), backward)


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean -log softmax(logits)[label]; logits (K,) or (B,K)."""
    logits = as_tensor(logits)
    single = logits.data.ndim == 1
    z = logits.data[None] if single else logits.data
    lab = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if z.ndim != 2 or lab.shape != (z.shape[0],):
        raise ValueError("cross_entropy: logits (B,K) need labels (B,)")
    if lab.min() < 0 or lab.max() >= z.shape[1]:
        raise ValueError(f"cross_entropy: label out of range [0, {z.shape[1]})")
    b = z.shape[0]
    m = z.max(axis=1, keepdims=True)
    e = np.exp(z - m)
    lse = np.log(e.sum(axis=1)) + m[:, 0]
    loss = np.asarray((lse - z[np.arange(b), lab]).mean(dtype=z.dtype))

    def backward(g):
        p = e / e.sum(axis=1, keepdims=True)
        p[np.arange(b), lab] -= 1.0
        dz = (g / b) * p
        return ((dz[0] if single else dz).astype(z.dtype, copy=False),)

    return Tensor._from_op(loss, (logits,), backward)


def bce_with_logits(logits: Tensor, targets, mask=None) -> Tensor:
    """Binary cross-entropy on logits, averaged over `mask` (or all) entries."""
    logits = as_tensor(logits)
    z = logits.data
    y = np.asarray(targets, dtype=z.dtype)
    if y.shape != z.shape:
        raise ValueError(f"bce_with_logits: target shape {y.shape} != {z.shape}")
    if mask is not None:
        m = np.asarray(mask, dtype=z.dtype)
        if m.shape != z.shape:
            raise ValueError("bce_with_logits: mask shape mismatch")
        denom = max(float(m.sum()), 1.0)
    else:
        m = None
        denom = float(z.size)
    per = np.maximum(z, 0) - z * y + np.log1p(np.exp(-np.abs(z)))
    if m is not None:
        per = per * m
    out = np.asarray(per.sum(dtype=z.dtype) / denom)

    def backward(g):
        dz = (_sigmoid(z) - y) / denom
        if m is not None:
            dz = dz * m
        return ((g * dz).astype(z.dtype, copy=False),)

    return Tensor._from_op(out, (logits,), backward)
