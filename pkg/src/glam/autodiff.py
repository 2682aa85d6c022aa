"""Reverse-mode automatic differentiation on numpy buffers.

The engine is deliberately small: it provides exactly the operations the
emotion-recognition network needs, in float32 or float64, with no general
broadcasting beyond scalar operands.  Each op computes its forward value
with numpy and, when any input requires a gradient, attaches a record
holding the inputs and a backward rule.  ``backward`` walks the resulting
DAG once in reverse topological order and accumulates gradients.

Gradient buffers are never mutated in place; accumulation always allocates
a fresh array.  That keeps aliasing between sibling branches harmless.
"""

import numpy as np

from .errors import ConfigError, ShapeError, StateError, ValidationError

BN_MOMENTUM = 0.1
BN_EPS = 1e-5
LN_EPS = 1e-5

# tanh-based GeLU approximation constants
# plain Python floats: numpy scalar constants would upcast float32 activations
_GELU_K = float(np.sqrt(2.0 / np.pi))
_GELU_C = 0.044715

_ALLOWED_DTYPES = (np.float32, np.float64)


class Record:
    """One node of the computation DAG: the op that produced a tensor."""

    __slots__ = ("op", "inputs", "backward_fn", "done")

    def __init__(self, op, inputs, backward_fn):
        self.op = op
        self.inputs = inputs
        self.backward_fn = backward_fn
        self.done = False


class Tensor:
    """A row-major numpy array plus gradient bookkeeping."""

    __slots__ = ("data", "requires_grad", "grad", "_record")

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.type not in _ALLOWED_DTYPES:
            if not np.issubdtype(arr.dtype, np.number) or np.issubdtype(arr.dtype, np.complexfloating):
                raise ConfigError(f"unsupported tensor dtype {arr.dtype}")
            arr = arr.astype(np.float64)
        self.data = np.ascontiguousarray(arr)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._record = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return float(self.data.reshape(-1)[0])

    def astype(self, dtype):
        return Tensor(self.data.astype(dtype), requires_grad=self.requires_grad)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype.name}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return elementwise_binary(self, other, "add")

    __radd__ = __add__

    def __mul__(self, other):
        return elementwise_binary(self, other, "mul")

    __rmul__ = __mul__

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def sum(self):
        return tensor_sum(self)


def _as_tensor(value, dtype):
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=dtype))


def _make(op, data, inputs, backward_fn):
    out = Tensor(data, requires_grad=any(t.requires_grad for t in inputs))
    if out.requires_grad:
        out._record = Record(op, tuple(inputs), backward_fn)
    return out


def clear_grads(tensors):
    for t in tensors:
        t.grad = None


# ---------------------------------------------------------------------------
# elementwise ops


def elementwise_binary(a, b, kind):
    """add or mul of two tensors of identical shape, or tensor-and-scalar."""
    a = _as_tensor(a, np.float64)
    b = _as_tensor(b, a.dtype)
    a_scalar, b_scalar = a.data.size == 1, b.data.size == 1
    if a.shape != b.shape and not (a_scalar or b_scalar):
        raise ShapeError(f"elementwise {kind}: shapes {a.shape} and {b.shape} differ and neither is scalar")
    if kind == "add":
        data = a.data + b.data

        def bwd(g):
            return (_reduce_to(g, a), _reduce_to(g, b))

    elif kind == "mul":
        data = a.data * b.data

        def bwd(g):
            return (_reduce_to(g * b.data, a), _reduce_to(g * a.data, b))

    else:
        raise ConfigError(f"unknown elementwise kind {kind!r}")
    return _make(kind, data, (a, b), bwd)


def _reduce_to(g, t):
    if not t.requires_grad:
        return None
    if t.data.size == 1 and g.size != 1:
        return np.sum(g).reshape(t.shape).astype(t.dtype, copy=False)
    return g


def add(a, b):
    return elementwise_binary(a, b, "add")


def mul(a, b):
    return elementwise_binary(a, b, "mul")


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a, b):
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")

    def bwd(g):
        ga = g @ b.data.T if a.requires_grad else None
        gb = a.data.T @ g if b.requires_grad else None
        return (ga, gb)

    return _make("matmul", a.data @ b.data, (a, b), bwd)


def linear(x, weight, bias):
    """x[B x n_in] @ weight[n_in x n_out] + bias[n_out]."""
    if x.data.ndim != 2:
        raise ShapeError(f"linear expects a 2-D input, got {x.shape}")
    if weight.data.ndim != 2 or x.shape[1] != weight.shape[0]:
        raise ShapeError(f"linear: input {x.shape} does not match weight {weight.shape}")
    if bias.data.shape != (weight.shape[1],):
        raise ShapeError(f"linear: bias {bias.shape} does not match weight {weight.shape}")
    data = x.data @ weight.data + bias.data

    def bwd(g):
        gx = g @ weight.data.T if x.requires_grad else None
        gw = x.data.T @ g if weight.requires_grad else None
        gb = g.sum(axis=0) if bias.requires_grad else None
        return (gx, gw, gb)

    return _make("linear", data, (x, weight, bias), bwd)


# ---------------------------------------------------------------------------
# convolution


def _im2col(xpad, kh, kw, out_h, out_w):
    # (N, C, out_h, out_w, kh, kw) windows -> (N, C*kh*kw, out_h*out_w)
    win = np.lib.stride_tricks.sliding_window_view(xpad, (kh, kw), axis=(2, 3))
    n, c = xpad.shape[0], xpad.shape[1]
    cols = win.transpose(0, 1, 4, 5, 2, 3).reshape(n, c * kh * kw, out_h * out_w)
    return np.ascontiguousarray(cols)


def _conv2d_grad_bias(g):
    return g.sum(axis=(0, 2, 3))


def _conv2d_grad_kernel(g, cols, kernel_shape):
    co = kernel_shape[0]
    n = g.shape[0]
    g2 = g.reshape(n, co, -1)
    gw = np.matmul(g2, cols.transpose(0, 2, 1)).sum(axis=0)
    return gw.reshape(kernel_shape)


def _conv2d_grad_input(g, kernel, x_shape, pad_h, pad_w):
    n, c_in, h, w = x_shape
    co, _, kh, kw = kernel.shape
    g2 = g.reshape(n, co, h * w)
    w2 = kernel.reshape(co, -1)
    t = np.matmul(w2.T, g2).reshape(n, c_in, kh, kw, h, w)
    gx = np.zeros((n, c_in, h + 2 * pad_h, w + 2 * pad_w), dtype=g.dtype)
    for i in range(kh):
        for j in range(kw):
            gx[:, :, i : i + h, j : j + w] += t[:, :, i, j]
    return gx[:, :, pad_h : pad_h + h, pad_w : pad_w + w]


def conv2d_same(x, kernel, bias):
    """2-D cross-correlation with stride 1 and zero same-padding.

    x: (N, C_in, H, W); kernel: (C_out, C_in, kh, kw) with odd kh, kw;
    bias: (C_out,).  Output spatial size equals the input spatial size.
    """
    if x.data.ndim != 4:
        raise ShapeError(f"conv2d_same expects 4-D input, got {x.shape}")
    if kernel.data.ndim != 4:
        raise ShapeError(f"conv2d_same expects 4-D kernel, got {kernel.shape}")
    co, ci, kh, kw = kernel.shape
    if kh % 2 == 0 or kw % 2 == 0:
        raise ConfigError(f"conv2d_same requires odd kernel sides, got {kh}x{kw}")
    if x.shape[1] != ci:
        raise ShapeError(f"conv2d_same: input channels {x.shape[1]} != kernel channels {ci}")
    if bias.data.shape != (co,):
        raise ShapeError(f"conv2d_same: bias {bias.shape} does not match out channels {co}")
    n, _, h, w = x.shape
    pad_h, pad_w = (kh - 1) // 2, (kw - 1) // 2
    xpad = np.pad(x.data, ((0, 0), (0, 0), (pad_h, pad_h), (pad_w, pad_w)))
    cols = _im2col(xpad, kh, kw, h, w)
    w2 = kernel.data.reshape(co, -1)
    out = np.matmul(w2, cols).reshape(n, co, h, w) + bias.data.reshape(1, co, 1, 1)

    def bwd(g):
        gx = _conv2d_grad_input(g, kernel.data, x.shape, pad_h, pad_w) if x.requires_grad else None
        gw = _conv2d_grad_kernel(g, cols, kernel.shape) if kernel.requires_grad else None
        gb = _conv2d_grad_bias(g) if bias.requires_grad else None
        return (gx, gw, gb)

    return _make("conv2d_same", out, (x, kernel, bias), bwd)


# ---------------------------------------------------------------------------
# batch normalization


class BNState:
    """Running statistics of one batch-norm layer, updated in place."""

    __slots__ = ("mean", "var", "updates")

    def __init__(self, mean, var, updates=0):
        self.mean = np.asarray(mean)
        self.var = np.asarray(var)
        self.updates = int(updates)

    @classmethod
    def fresh(cls, channels, dtype=np.float32):
        return cls(np.zeros(channels, dtype=dtype), np.ones(channels, dtype=dtype), 0)

    def copy(self):
        return BNState(self.mean.copy(), self.var.copy(), self.updates)


def batchnorm2d(x, gamma, beta, state, mode):
    """Per-channel batch normalization over the (N, H, W) axes.

    Train mode normalizes with biased batch statistics and updates the
    running estimates by EMA; eval mode uses the running estimates and
    refuses to run before any train step has populated them.
    """
    if x.data.ndim != 4:
        raise ShapeError(f"batchnorm2d expects 4-D input, got {x.shape}")
    c = x.shape[1]
    if gamma.data.shape != (c,) or beta.data.shape != (c,):
        raise ShapeError(f"batchnorm2d: gamma {gamma.shape} / beta {beta.shape} do not match {c} channels")
    if mode not in ("train", "eval"):
        raise ConfigError(f"batchnorm2d mode must be 'train' or 'eval', got {mode!r}")
    axes = (0, 2, 3)
    if mode == "train":
        m = x.shape[0] * x.shape[2] * x.shape[3]
        if m < 2:
            raise ShapeError(f"batchnorm2d train mode needs N*H*W >= 2, got {m}")
        mean = x.data.mean(axis=axes)
        xc = x.data - mean.reshape(1, c, 1, 1)
        var = np.mean(np.square(xc), axis=axes)  # biased
        state.mean[...] = (1.0 - BN_MOMENTUM) * state.mean + BN_MOMENTUM * mean
        state.var[...] = (1.0 - BN_MOMENTUM) * state.var + BN_MOMENTUM * var
        state.updates += 1
    else:
        if state.updates < 1:
            raise StateError("batchnorm2d eval mode before any train-mode update")
        mean = state.mean.astype(x.dtype, copy=False)
        var = state.var.astype(x.dtype, copy=False)
        xc = x.data - mean.reshape(1, c, 1, 1)
    inv_std = 1.0 / np.sqrt(var + BN_EPS)
    xhat = xc
    xhat *= inv_std.reshape(1, c, 1, 1)  # xc is private, normalize in place
    out = gamma.data.reshape(1, c, 1, 1) * xhat
    out += beta.data.reshape(1, c, 1, 1)

    def bwd(g):
        gg = (g * xhat).sum(axis=axes)
        gb = g.sum(axis=axes)
        if not x.requires_grad:
            return (None,
                    gg if gamma.requires_grad else None,
                    gb if beta.requires_grad else None)
        gs = g * gamma.data.reshape(1, c, 1, 1)
        if mode == "eval":
            gs *= inv_std.reshape(1, c, 1, 1)
        else:
            # the batch means of gs and gs*xhat are gamma*gb/m and gamma*gg/m,
            # so the input gradient reuses the parameter reductions
            m = x.shape[0] * x.shape[2] * x.shape[3]
            gs -= (gamma.data * gb / m).reshape(1, c, 1, 1)
            gs -= xhat * (gamma.data * gg / m).reshape(1, c, 1, 1)
            gs *= inv_std.reshape(1, c, 1, 1)
        return (gs,
                gg if gamma.requires_grad else None,
                gb if beta.requires_grad else None)

    return _make("batchnorm2d", out, (x, gamma, beta), bwd)


# ---------------------------------------------------------------------------
# layer normalization (over the trailing axis)


def layernorm(x, gamma, beta):
    """Normalize over the last axis; gamma/beta have that axis's length."""
    d = x.shape[-1]
    if gamma.data.shape != (d,) or beta.data.shape != (d,):
        raise ShapeError(f"layernorm: gamma {gamma.shape} / beta {beta.shape} do not match last axis {d}")
    mean = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)  # biased
    inv_std = 1.0 / np.sqrt(var + LN_EPS)
    xhat = (x.data - mean) * inv_std
    out = gamma.data * xhat + beta.data

    def bwd(g):
        lead = tuple(range(g.ndim - 1))
        gg = (g * xhat).sum(axis=lead) if gamma.requires_grad else None
        gb = g.sum(axis=lead) if beta.requires_grad else None
        if not x.requires_grad:
            return (None, gg, gb)
        gs = g * gamma.data
        mean_gs = gs.mean(axis=-1, keepdims=True)
        mean_gs_xhat = (gs * xhat).mean(axis=-1, keepdims=True)
        gx = inv_std * (gs - mean_gs - xhat * mean_gs_xhat)
        return (gx, gg, gb)

    return _make("layernorm", out, (x, gamma, beta), bwd)


# ---------------------------------------------------------------------------
# activations


def activation(x, kind):
    """relu or the tanh-approximated gelu, elementwise."""
    if kind == "relu":
        data = np.maximum(x.data, 0.0)
        mask = x.data > 0.0  # strict: the kink at 0 routes no gradient

        def bwd(g):
            return ((g * mask.astype(g.dtype)),)

    elif kind == "gelu":
        xd = x.data
        x2 = xd * xd
        t = np.tanh(_GELU_K * (xd + _GELU_C * x2 * xd))
        data = 0.5 * xd * (1.0 + t)

        def bwd(g):
            # tanh is reused from the forward pass
            d_inner = _GELU_K * (1.0 + 3.0 * _GELU_C * x2)
            return ((g * (0.5 * (1.0 + t) + 0.5 * xd * (1.0 - t * t) * d_inner)),)

    else:
        raise ConfigError(f"unknown activation {kind!r}")
    return _make(kind, data, (x,), bwd)


def relu(x):
    return activation(x, "relu")


def gelu(x):
    return activation(x, "gelu")


# ---------------------------------------------------------------------------
# pooling


def maxpool2d(x, window):
    """Non-overlapping max pooling; trailing rows/cols that do not fill a
    window are dropped.  Ties route the gradient to the first flat index
    of the window in row-major order."""
    if x.data.ndim != 4:
        raise ShapeError(f"maxpool2d expects 4-D input, got {x.shape}")
    ph, pw = window
    if ph < 1 or pw < 1:
        raise ConfigError(f"maxpool2d window must be positive, got {window}")
    n, c, h, w = x.shape
    if h < ph or w < pw:
        raise ShapeError(f"maxpool2d window {window} larger than input {h}x{w}")
    oh, ow = h // ph, w // pw
    xw = np.ascontiguousarray(x.data[:, :, : oh * ph, : ow * pw])
    xw = xw.reshape(n, c, oh, ph, ow, pw)
    # pairwise maximum: far faster than a ufunc reduce over the tiny axes
    out = None
    for pi in range(ph):
        for pj in range(pw):
            s = xw[:, :, :, pi, :, pj]
            if out is None:
                out = np.ascontiguousarray(s)
            else:
                np.maximum(out, s, out=out)

    def bwd(g):
        core = np.zeros((n, c, oh * ph, ow * pw), dtype=g.dtype)
        gw = core.reshape(n, c, oh, ph, ow, pw)
        # visit window positions in flat order; the first max claims the slot
        open_slot = np.ones((n, c, oh, ow), dtype=bool)
        for pi in range(ph):
            for pj in range(pw):
                hit = open_slot & (xw[:, :, :, pi, :, pj] == out)
                np.copyto(gw[:, :, :, pi, :, pj], g, where=hit)
                open_slot &= ~hit
        if (oh * ph, ow * pw) == (h, w):
            return (core,)
        gx = np.zeros((n, c, h, w), dtype=g.dtype)
        gx[:, :, : oh * ph, : ow * pw] = core
        return (gx,)

    return _make("maxpool2d", out, (x,), bwd)


# ---------------------------------------------------------------------------
# shape ops


def concat(tensors, axis):
    tensors = tuple(tensors)
    if not tensors:
        raise ShapeError("concat of zero tensors")
    base = list(tensors[0].shape)
    for t in tensors[1:]:
        other = list(t.shape)
        if len(other) != len(base):
            raise ShapeError(f"concat: rank mismatch {tensors[0].shape} vs {t.shape}")
        if other[:axis] + other[axis + 1 :] != base[:axis] + base[axis + 1 :]:
            raise ShapeError(f"concat: shapes {tensors[0].shape} and {t.shape} differ off axis {axis}")
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def bwd(g):
        pieces = np.split(g, bounds, axis=axis)
        return tuple(p if t.requires_grad else None for p, t in zip(pieces, tensors))

    return _make("concat", data, tensors, bwd)


def _narrow(x, axis, start, length):
    sl = [slice(None)] * x.data.ndim
    sl[axis] = slice(start, start + length)
    sl = tuple(sl)
    data = x.data[sl].copy()

    def bwd(g):
        buf = np.zeros_like(x.data)
        buf[sl] = g
        return (buf,)

    return _make("narrow", data, (x,), bwd)


def split_half(x, axis):
    """Split a tensor into two equal halves along ``axis``."""
    size = x.shape[axis]
    if size % 2 != 0:
        raise ShapeError(f"split_half: axis {axis} has odd length {size}")
    half = size // 2
    return _narrow(x, axis, 0, half), _narrow(x, axis, half, half)


def reshape(x, shape):
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape)) != x.data.size:
        raise ShapeError(f"reshape: cannot view {x.shape} as {shape}")
    data = x.data.reshape(shape)

    def bwd(g):
        return (g.reshape(x.shape),)

    return _make("reshape", data, (x,), bwd)


# ---------------------------------------------------------------------------
# reductions and loss


def tensor_sum(x):
    data = np.asarray(x.data.sum(), dtype=x.dtype)

    def bwd(g):
        return ((np.ones_like(x.data) * g),)

    return _make("sum", data, (x,), bwd)


def softmax_cross_entropy(logits, targets):
    """Mean cross-entropy between softmax(logits) and soft target rows.

    Targets are probability vectors: non-negative, each row summing to one
    within 1e-6.  The gradient w.r.t. the logits is (softmax - target) / B.
    """
    t = targets.data if isinstance(targets, Tensor) else np.asarray(targets)
    if logits.data.ndim != 2 or t.ndim != 2 or logits.shape != t.shape:
        raise ShapeError(f"softmax_cross_entropy: logits {logits.shape} vs targets {t.shape}")
    if np.any(t < 0.0):
        raise ValidationError("softmax_cross_entropy: negative target probability")
    row_sums = t.sum(axis=1)
    if np.any(np.abs(row_sums - 1.0) > 1e-6):
        bad = int(np.argmax(np.abs(row_sums - 1.0)))
        raise ValidationError(f"softmax_cross_entropy: target row {bad} sums to {row_sums[bad]!r}, not 1")
    t = t.astype(logits.dtype, copy=False)  # keep gradients in the logits dtype
    b = logits.shape[0]
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - lse
    loss = -(t * logp).sum() / b

    def bwd(g):
        p = np.exp(logp)
        return (((p - t) * (g / b)),)

    return _make("softmax_cross_entropy", np.asarray(loss, dtype=logits.dtype), (logits,), bwd)


# ---------------------------------------------------------------------------
# backward pass


def backward(loss):
    """Run reverse-mode accumulation from a scalar loss.

    Populates ``grad`` on every requires_grad tensor reachable from the
    loss.  A graph can be consumed only once; a second call through any of
    the same records raises StateError.
    """
    if not isinstance(loss, Tensor):
        raise ShapeError("backward expects a Tensor")
    if loss.data.size != 1:
        raise ShapeError(f"backward expects a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise StateError("backward on a tensor with requires_grad=False")

    order = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        t, expanded = stack.pop()
        if expanded:
            order.append(t)
            continue
        if id(t) in seen:
            continue
        seen.add(id(t))
        stack.append((t, True))
        if t._record is not None:
            for parent in t._record.inputs:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))

    grads = {id(loss): np.ones_like(loss.data)}
    for t in reversed(order):
        g = grads.pop(id(t), None)
        if g is None:
            continue
        prev = t.grad
        t.grad = g if prev is None else prev + g
        rec = t._record
        if rec is None:
            continue
        if rec.done:
            raise StateError(f"backward already consumed this graph (op {rec.op!r})")
        rec.done = True
        parent_grads = rec.backward_fn(g)
        for parent, pg in zip(rec.inputs, parent_grads):
            if pg is None or not parent.requires_grad:
                continue
            if pg.shape != parent.data.shape:
                raise ShapeError(f"op {rec.op!r} produced gradient {pg.shape} for input {parent.data.shape}")
            cur = grads.get(id(parent))
            grads[id(parent)] = pg if cur is None else cur + pg
