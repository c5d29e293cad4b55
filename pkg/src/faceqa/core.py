"""Dense tensor kernel with taped reverse-mode differentiation.

Every forward operation here has a hand-written backward rule. While a
Tape is active, operations record themselves; Tape.backward replays the
records in reverse and accumulates gradients into the Params that were
watched. grad_check verifies any rule against central finite differences.

Tensors are treated as immutable once produced by an operation. Params
are the only mutable state (gradient accumulation and optimizer steps),
and must only be mutated from a single writer at a time.
"""

from __future__ import annotations

import numpy as np

_DTYPES = {"single": np.float32, "double": np.float64}
_DTYPE_NAMES = {np.dtype(np.float32): "single", np.dtype(np.float64): "double"}


class ShapeError(ValueError):
    """A tensor argument has extents incompatible with the operation."""


class Tensor:
    """Dense multi-dimensional array of real scalars, row-major."""

    __slots__ = ("array",)

    def __init__(self, array, dtype=None):
        if dtype is None:
            arr = np.asarray(array)
            if arr.dtype not in _DTYPE_NAMES:
                arr = arr.astype(np.float64)
        else:
            arr = np.asarray(array, dtype=_DTYPES.get(dtype, dtype))
        self.array = arr

    @property
    def shape(self) -> tuple[int, ...]:
        return self.array.shape

    @property
    def data(self) -> np.ndarray:
        """Flat row-major view of the scalars."""
        return self.array.reshape(-1)

    @property
    def dtype(self) -> str:
        return _DTYPE_NAMES[self.array.dtype]

    @property
    def size(self) -> int:
        return self.array.size

    def item(self) -> float:
        if self.array.size != 1:
            raise ShapeError(f"item() needs a size-1 tensor, got shape {self.shape}")
        return float(self.array.reshape(-1)[0])

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype})"


class Param:
    """Learnable tensor with a gradient and an SGD momentum buffer."""

    __slots__ = ("value", "grad", "momentum")

    def __init__(self, value):
        v = np.array(value, dtype=np.float64)
        self.value = Tensor(v)
        self.grad = np.zeros_like(v)
        self.momentum = np.zeros_like(v)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def zero_grad(self):
        self.grad[...] = 0.0

    @staticmethod
    def zeros(*shape) -> "Param":
        return Param(np.zeros(shape))

    @staticmethod
    def ones(*shape) -> "Param":
        return Param(np.ones(shape))

    @staticmethod
    def uniform(rng: np.random.Generator, shape, half_width: float) -> "Param":
        return Param(rng.uniform(-half_width, half_width, size=shape))

    @staticmethod
    def fan_in_uniform(rng: np.random.Generator, shape, fan_in: int | None = None) -> "Param":
        """Fan-in-scaled uniform weight init, half-width sqrt(3/fan_in).

        Weight variance 1/fan_in keeps activation magnitude constant through
        a plain linear map; narrower inits attenuate the signal per layer and
        stall deep stacks, wider ones blow up the many non-relu maps here.
        """
        if fan_in is None:
            fan_in = int(np.prod(shape[:-1])) if len(shape) > 1 else shape[0]
        return Param.uniform(rng, shape, np.sqrt(3.0 / fan_in))

    def __repr__(self):
        return f"Param(shape={self.shape})"


_TAPE_STACK: list["Tape"] = []


class Tape:
    """Ordered record of executed operations for one backward replay."""

    def __init__(self):
        self._nodes: list[tuple[Tensor, list[Tensor], object]] = []
        self._watched: dict[int, tuple[Param, Tensor]] = {}

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc):
        popped = _TAPE_STACK.pop()
        assert popped is self
        return False

    def record(self, out: Tensor, inputs: list[Tensor], backward) -> None:
        self._nodes.append((out, inputs, backward))

    def watch(self, p: Param) -> Tensor:
        """Register a Param as a leaf; repeated watches reuse one leaf tensor."""
        entry = self._watched.get(id(p))
        if entry is None:
            leaf = Tensor(p.value.array)
            self._watched[id(p)] = (p, leaf)
            return leaf
        return entry[1]

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/d(param) into every watched Param's grad."""
        if loss.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.array)}
        for out, inputs, backward_fn in reversed(self._nodes):
            g = grads.pop(id(out), None)
            if g is None:
                continue
            in_grads = backward_fn(g)
            for t, ig in zip(inputs, in_grads):
                if ig is None:
                    continue
                acc = grads.get(id(t))
                if acc is None:
                    grads[id(t)] = ig.copy() if ig.base is not None or ig is g else ig
                else:
                    acc += ig
        for p, leaf in self._watched.values():
            g = grads.get(id(leaf))
            if g is not None:
                p.grad += g


def _active() -> Tape | None:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def _as_tensor(x) -> Tensor:
    """Coerce an op argument; Params are watched on the active tape."""
    if isinstance(x, Tensor):
        return x
    if isinstance(x, Param):
        tape = _active()
        return tape.watch(x) if tape is not None else x.value
    return Tensor(x)


def constant(array) -> Tensor:
    """Tensor that never receives a gradient (network inputs, labels)."""
    return Tensor(array)


# ---------------------------------------------------------------------------
# primitive operations
# ---------------------------------------------------------------------------


# Products up to this many scalar terms accumulate strictly in index order,
# matching naive summation bit for bit; larger products use BLAS.
_SEQUENTIAL_MATMUL_LIMIT = 4096


def matmul(a, b) -> Tensor:
    """Matrix product of two rank-2 tensors."""
    at, bt = _as_tensor(a), _as_tensor(b)
    A, B = at.array, bt.array
    if A.ndim != 2 or B.ndim != 2:
        raise ShapeError(f"matmul needs rank-2 operands, got {A.shape} and {B.shape}")
    if A.shape[1] != B.shape[0]:
        raise ShapeError(f"matmul inner extents differ: {A.shape} x {B.shape}")
    m, k = A.shape
    p = B.shape[1]
    if 0 < m * k * p <= _SEQUENTIAL_MATMUL_LIMIT:
        out = Tensor(np.cumsum(A[:, :, None] * B[None, :, :], axis=1)[:, -1, :])
    else:
        out = Tensor(A @ B)
    tape = _active()
    if tape is not None:
        tape.record(out, [at, bt], lambda g: (g @ B.T, A.T @ g))
    return out


def transpose2d(x) -> Tensor:
    xt = _as_tensor(x)
    if xt.array.ndim != 2:
        raise ShapeError(f"transpose2d needs rank 2, got {xt.shape}")
    out = Tensor(xt.array.T.copy())
    tape = _active()
    if tape is not None:
        tape.record(out, [xt], lambda g: (g.T,))
    return out


def softmax_lastaxis(x) -> Tensor:
    """Stable softmax over the trailing axis; each slice sums to 1."""
    xt = _as_tensor(x)
    a = xt.array
    if a.ndim < 1 or a.shape[-1] < 1:
        raise ShapeError(f"softmax needs a non-empty trailing axis, got {a.shape}")
    shifted = a - a.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)
    out = Tensor(y)
    tape = _active()
    if tape is not None:
        def backward(g):
            return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)
        tape.record(out, [xt], backward)
    return out


def layer_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    """Normalize each trailing-axis slice to zero mean / unit variance, then affine."""
    if eps <= 0:
        raise ValueError(f"layer_norm eps must be positive, got {eps}")
    xt, gt, bt = _as_tensor(x), _as_tensor(gain), _as_tensor(bias)
    a = xt.array
    d = a.shape[-1]
    if gt.shape != (d,) or bt.shape != (d,):
        raise ShapeError(f"layer_norm gain/bias must have shape ({d},), got {gt.shape}/{bt.shape}")
    mu = a.mean(axis=-1, keepdims=True)
    xc = a - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = Tensor(xhat * gt.array + bt.array)
    tape = _active()
    if tape is not None:
        gamma = gt.array

        def backward(g):
            dxhat = g * gamma
            dx = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
            lead = tuple(range(a.ndim - 1))
            dgamma = (g * xhat).sum(axis=lead)
            dbeta = g.sum(axis=lead)
            return dx, dgamma, dbeta

        tape.record(out, [xt, gt, bt], backward)
    return out


def linear(x, w, b) -> Tensor:
    """x @ w + b, broadcasting over every leading axis of x."""
    xt, wt, bt = _as_tensor(x), _as_tensor(w), _as_tensor(b)
    a, W, bias = xt.array, wt.array, bt.array
    if W.ndim != 2:
        raise ShapeError(f"linear weight must be rank 2, got {W.shape}")
    din, dout = W.shape
    if a.shape[-1] != din:
        raise ShapeError(f"linear input trailing extent {a.shape} does not match weight {W.shape}")
    if bias.shape != (dout,):
        raise ShapeError(f"linear bias must have shape ({dout},), got {bias.shape}")
    flat = a.reshape(-1, din)
    out = Tensor((flat @ W + bias).reshape(a.shape[:-1] + (dout,)))
    tape = _active()
    if tape is not None:
        def backward(g):
            g2 = g.reshape(-1, dout)
            return (g2 @ W.T).reshape(a.shape), flat.T @ g2, g2.sum(axis=0)
        tape.record(out, [xt, wt, bt], backward)
    return out


def relu(x) -> Tensor:
    """Elementwise max(0, x); the gradient at exactly 0 is defined as 0."""
    xt = _as_tensor(x)
    a = xt.array
    out = Tensor(np.maximum(a, 0.0))
    tape = _active()
    if tape is not None:
        mask = (a > 0).astype(a.dtype)
        tape.record(out, [xt], lambda g: (g * mask,))
    return out


def add(a, b) -> Tensor:
    at, bt = _as_tensor(a), _as_tensor(b)
    if at.shape != bt.shape:
        raise ShapeError(f"add needs matching shapes, got {at.shape} and {bt.shape}")
    out = Tensor(at.array + bt.array)
    tape = _active()
    if tape is not None:
        tape.record(out, [at, bt], lambda g: (g, g))
    return out


def scale(x, c: float) -> Tensor:
    xt = _as_tensor(x)
    out = Tensor(xt.array * c)
    tape = _active()
    if tape is not None:
        tape.record(out, [xt], lambda g: (g * c,))
    return out


def concat_lastaxis(a, b) -> Tensor:
    """Concatenate trailing-axis slices; leading axes must match exactly."""
    at, bt = _as_tensor(a), _as_tensor(b)
    if at.array.ndim != bt.array.ndim or at.shape[:-1] != bt.shape[:-1]:
        raise ShapeError(f"concat leading axes differ: {at.shape} vs {bt.shape}")
    p = at.shape[-1]
    out = Tensor(np.concatenate([at.array, bt.array], axis=-1))
    tape = _active()
    if tape is not None:
        tape.record(out, [at, bt], lambda g: (g[..., :p], g[..., p:]))
    return out


def slice_lastaxis(x, start: int, stop: int) -> Tensor:
    xt = _as_tensor(x)
    d = xt.shape[-1]
    if not (0 <= start <= stop <= d):
        raise ShapeError(f"slice [{start}:{stop}] out of range for trailing extent {d}")
    out = Tensor(xt.array[..., start:stop].copy())
    tape = _active()
    if tape is not None:
        def backward(g):
            z = np.zeros_like(xt.array)
            z[..., start:stop] = g
            return (z,)
        tape.record(out, [xt], backward)
    return out


def split_lastaxis(x, p: int) -> tuple[Tensor, Tensor]:
    """Inverse of concat_lastaxis at split point p."""
    d = _as_tensor(x).shape[-1]
    return slice_lastaxis(x, 0, p), slice_lastaxis(x, p, d)


def slice_rows(x, n: int) -> Tensor:
    """First n rows of a rank-2 tensor."""
    xt = _as_tensor(x)
    if xt.array.ndim != 2:
        raise ShapeError(f"slice_rows needs rank 2, got {xt.shape}")
    if not (0 <= n <= xt.shape[0]):
        raise ShapeError(f"cannot take {n} rows from {xt.shape}")
    out = Tensor(xt.array[:n].copy())
    tape = _active()
    if tape is not None:
        def backward(g):
            z = np.zeros_like(xt.array)
            z[:n] = g
            return (z,)
        tape.record(out, [xt], backward)
    return out


def stack_rows(vectors) -> Tensor:
    """Stack equal-length rank-1 tensors into one rank-2 tensor."""
    ts = [_as_tensor(v) for v in vectors]
    if not ts:
        raise ShapeError("stack_rows needs at least one vector")
    d = ts[0].shape
    if any(t.array.ndim != 1 or t.shape != d for t in ts):
        raise ShapeError(f"stack_rows needs rank-1 tensors of equal shape, got {[t.shape for t in ts]}")
    out = Tensor(np.stack([t.array for t in ts], axis=0))
    tape = _active()
    if tape is not None:
        tape.record(out, ts, lambda g: tuple(g[i] for i in range(len(ts))))
    return out


def stack_scalars(scalars) -> Tensor:
    """Stack scalar tensors into one rank-1 tensor."""
    ts = [_as_tensor(s) for s in scalars]
    if not ts:
        raise ShapeError("stack_scalars needs at least one scalar")
    if any(t.size != 1 for t in ts):
        raise ShapeError("stack_scalars needs scalar (size-1) tensors")
    out = Tensor(np.array([float(t.array) for t in ts]))
    tape = _active()
    if tape is not None:
        tape.record(out, ts, lambda g: tuple(np.asarray(g[i]).reshape(t.shape) for i, t in enumerate(ts)))
    return out


def mean_axis0(x) -> Tensor:
    """Mean over the leading axis of a rank-2 tensor."""
    xt = _as_tensor(x)
    if xt.array.ndim != 2:
        raise ShapeError(f"mean_axis0 needs rank 2, got {xt.shape}")
    n = xt.shape[0]
    out = Tensor(xt.array.mean(axis=0))
    tape = _active()
    if tape is not None:
        tape.record(out, [xt], lambda g: (np.broadcast_to(g / n, xt.shape).copy(),))
    return out


def sum_all(x) -> Tensor:
    xt = _as_tensor(x)
    out = Tensor(np.asarray(xt.array.sum()))
    tape = _active()
    if tape is not None:
        tape.record(out, [xt], lambda g: (np.broadcast_to(g, xt.shape).copy(),))
    return out


def block_mean_pool(x, grid: int) -> Tensor:
    """Pool frames F x C x H x W to F x (C*grid*grid) by averaging each spatial block."""
    xt = _as_tensor(x)
    a = xt.array
    if a.ndim != 4:
        raise ShapeError(f"block_mean_pool needs rank 4 (F,C,H,W), got {a.shape}")
    f, c, h, w = a.shape
    if h % grid or w % grid:
        raise ShapeError(f"spatial extents {h}x{w} not divisible by grid {grid}")
    bh, bw = h // grid, w // grid
    pooled = a.reshape(f, c, grid, bh, grid, bw).mean(axis=(3, 5))
    out = Tensor(pooled.reshape(f, c * grid * grid))
    tape = _active()
    if tape is not None:
        def backward(g):
            gg = g.reshape(f, c, grid, 1, grid, 1) / (bh * bw)
            return (np.broadcast_to(gg, (f, c, grid, bh, grid, bw)).reshape(a.shape).copy(),)
        tape.record(out, [xt], backward)
    return out


def conv1d_temporal(x, kernel, bias) -> Tensor:
    """Zero-padded cross-correlation along the leading (time) axis, length preserved.

    x: n x din, kernel: k x din x dout with k odd, bias: dout.
    """
    xt, kt, bt = _as_tensor(x), _as_tensor(kernel), _as_tensor(bias)
    a, K, b = xt.array, kt.array, bt.array
    if a.ndim != 2 or K.ndim != 3:
        raise ShapeError(f"conv1d_temporal needs x rank 2 and kernel rank 3, got {a.shape}/{K.shape}")
    k, din, dout = K.shape
    if k % 2 == 0:
        raise ShapeError(f"temporal kernel extent must be odd, got {k}")
    if a.shape[1] != din:
        raise ShapeError(f"channel mismatch: x {a.shape} vs kernel {K.shape}")
    if b.shape != (dout,):
        raise ShapeError(f"conv bias must have shape ({dout},), got {b.shape}")
    n = a.shape[0]
    r = k // 2
    padded = np.zeros((n + 2 * r, din))
    padded[r:r + n] = a
    out_arr = np.zeros((n, dout)) + b
    for j in range(k):
        out_arr += padded[j:j + n] @ K[j]
    out = Tensor(out_arr)
    tape = _active()
    if tape is not None:
        def backward(g):
            dK = np.empty_like(K)
            dpad = np.zeros_like(padded)
            for j in range(k):
                dK[j] = padded[j:j + n].T @ g
                dpad[j:j + n] += g @ K[j].T
            return dpad[r:r + n], dK, g.sum(axis=0)
        tape.record(out, [xt, kt, bt], backward)
    return out


# ---------------------------------------------------------------------------
# optimizer and verification
# ---------------------------------------------------------------------------


def zero_grads(params) -> None:
    for p in params:
        p.zero_grad()


def sgd_step(params, lr: float, momentum: float = 0.0) -> None:
    """buffer <- momentum*buffer + grad; value <- value - lr*buffer."""
    if lr <= 0:
        raise ValueError(f"sgd_step needs lr > 0, got {lr}")
    if not (0.0 <= momentum < 1.0):
        raise ValueError(f"sgd_step needs 0 <= momentum < 1, got {momentum}")
    for p in params:
        p.momentum *= momentum
        p.momentum += p.grad
        p.value.array -= lr * p.momentum


def grad_check(f, p: Param, h: float = 1e-5, eps: float = 1e-12) -> float:
    """Max relative error between f's taped gradient w.r.t. p and central differences.

    f must be a zero-argument callable rebuilding the scalar computation
    from current parameter values; it is re-invoked with p perturbed one
    coordinate at a time.
    """
    if h <= 0:
        raise ValueError(f"grad_check needs h > 0, got {h}")
    p.zero_grad()
    with Tape() as tape:
        loss = f()
        tape.backward(loss)
    analytic = p.grad.copy()

    numeric = np.zeros_like(analytic)
    flat = p.value.array.reshape(-1)
    num_flat = numeric.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        f_plus = f().item()
        flat[i] = orig - h
        f_minus = f().item()
        flat[i] = orig
        num_flat[i] = (f_plus - f_minus) / (2.0 * h)

    denom = np.abs(analytic) + np.abs(numeric) + eps
    return float(np.max(np.abs(analytic - numeric) / denom))
