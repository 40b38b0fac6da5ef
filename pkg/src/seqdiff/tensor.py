"""Dense tensors with tape-based reverse-mode differentiation.

A Tensor wraps a row-major numpy array (float64 by default, float32 mode
available for speed). While a Tape is active (`with Tape() as tape:`), every
op whose inputs are tracked appends a backward closure to the tape; the
recording order is a valid topological order of the computation, so
`backward(tape, loss)` replays the tape once in reverse and accumulates
adjoints into `.grad` of every tensor that requires_grad.

Outside a tape, ops run as plain numpy with no recording overhead, which is
what inference uses.
"""

from __future__ import annotations

import numpy as np

from .rng import RngStream

_DEFAULT_DTYPE = np.float64

_TAPE_STACK: list["Tape"] = []


def set_default_dtype(dtype) -> None:
    """Select float64 (default; used by all tests) or float32 (speed mode)."""
    global _DEFAULT_DTYPE
    dt = np.dtype(dtype)
    if dt not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ValueError(f"unsupported dtype {dt}; use float32 or float64")
    _DEFAULT_DTYPE = dt.type


def default_dtype():
    return _DEFAULT_DTYPE


class ShapeMismatchError(ValueError):
    """Operands have shapes the requested op cannot combine."""


class Tensor:
    """n-dimensional float array, optionally tracked for differentiation."""

    __slots__ = ("data", "requires_grad", "grad", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype if dtype is not None else _DEFAULT_DTYPE)
        if not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # arithmetic sugar; constants are wrapped as untracked tensors
    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return add(self, neg(_as_tensor(other)))

    def __rsub__(self, other):
        return add(_as_tensor(other), neg(self))

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, _as_tensor(other))

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, _as_tensor(other))


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class Tape:
    """Ordered log of executed primitive ops and their saved intermediates.

    Single-owner: one tape per forward/backward pass. `clear()` (called by
    `backward` unless told otherwise, and by `__exit__`) drops every node,
    releasing the arrays the closures captured.
    """

    def __init__(self):
        self._nodes: list[tuple[Tensor, tuple[Tensor, ...], object]] = []

    def __len__(self) -> int:
        return len(self._nodes)

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        _TAPE_STACK.remove(self)

    def clear(self) -> None:
        self._nodes.clear()


def _tracked(*tensors: Tensor) -> bool:
    return bool(_TAPE_STACK) and any(t.requires_grad for t in tensors)


def _record(out: Tensor, inputs: tuple[Tensor, ...], backward_fn) -> None:
    out.requires_grad = True
    _TAPE_STACK[-1]._nodes.append((out, inputs, backward_fn))


def backward(tape: Tape, loss: Tensor, clear: bool = True) -> None:
    """Populate `.grad` of every tracked tensor reachable from `loss`.

    Walks the tape in reverse recording order (a reverse topological order,
    each node visited exactly once). Gradients accumulate across calls;
    use `zero_grad` between steps.
    """
    if loss.size != 1:
        raise ValueError(f"loss must be scalar, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    holders: dict[int, Tensor] = {id(loss): loss}
    for out, inputs, fn in reversed(tape._nodes):
        g = grads.get(id(out))
        if g is None:
            continue  # not on a path to the loss
        in_grads = fn(g)
        for t, gi in zip(inputs, in_grads):
            if gi is None or not t.requires_grad:
                continue
            key = id(t)
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = gi
                holders[key] = t
    for key, g in grads.items():
        t = holders[key]
        if t.requires_grad:
            t.grad = g.copy() if t.grad is None else t.grad + g
    if clear:
        tape.clear()


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `grad` down to `shape` (inverse of numpy broadcasting)."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# primitive ops
# ---------------------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data + b.data)
    if _tracked(a, b):
        a_shape, b_shape = a.shape, b.shape

        def bwd(g):
            return _unbroadcast(g, a_shape), _unbroadcast(g, b_shape)

        _record(out, (a, b), bwd)
    return out


def neg(a: Tensor) -> Tensor:
    out = Tensor(-a.data)
    if _tracked(a):
        _record(out, (a,), lambda g: (-g,))
    return out


def scale(a: Tensor, c: float) -> Tensor:
    out = Tensor(a.data * c)
    if _tracked(a):
        _record(out, (a,), lambda g: (g * c,))
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data * b.data)
    if _tracked(a, b):
        a_data, b_data = a.data, b.data

        def bwd(g):
            return (_unbroadcast(g * b_data, a_data.shape),
                    _unbroadcast(g * a_data, b_data.shape))

        _record(out, (a, b), bwd)
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the last two axes; leading axes must match or be absent."""
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeMismatchError(f"matmul needs >=2-d operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeMismatchError(f"inner dimensions disagree: {a.shape} @ {b.shape}")
    if a.ndim > 2 and b.ndim > 2 and a.shape[:-2] != b.shape[:-2]:
        raise ShapeMismatchError(f"leading dimensions disagree: {a.shape} @ {b.shape}")
    out = Tensor(a.data @ b.data)
    if _tracked(a, b):
        a_data, b_data = a.data, b.data

        def bwd(g):
            ga = g @ np.swapaxes(b_data, -1, -2)
            gb = np.swapaxes(a_data, -1, -2) @ g
            return _unbroadcast(ga, a_data.shape), _unbroadcast(gb, b_data.shape)

        _record(out, (a, b), bwd)
    return out


def transpose(a: Tensor, axes: tuple[int, ...]) -> Tensor:
    out = Tensor(np.transpose(a.data, axes))
    if _tracked(a):
        inv = tuple(np.argsort(axes))
        _record(out, (a,), lambda g: (np.transpose(g, inv),))
    return out


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    out = Tensor(a.data.reshape(shape))
    if _tracked(a):
        old = a.shape
        _record(out, (a,), lambda g: (g.reshape(old),))
    return out


def relu(a: Tensor) -> Tensor:
    out = Tensor(np.maximum(a.data, 0.0))
    if _tracked(a):
        mask = a.data > 0
        _record(out, (a,), lambda g: (g * mask,))
    return out


def sigmoid(a: Tensor) -> Tensor:
    # clip keeps exp in range; the output is already saturated beyond +/-500
    y = 1.0 / (1.0 + np.exp(-np.clip(a.data, -500.0, 500.0)))
    out = Tensor(y)
    if _tracked(a):
        _record(out, (a,), lambda g: (g * y * (1.0 - y),))
    return out


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    out = Tensor(y)
    if _tracked(a):
        _record(out, (a,), lambda g: (g * (1.0 - y * y),))
    return out


def sum_all(a: Tensor) -> Tensor:
    out = Tensor(a.data.sum())
    if _tracked(a):
        shape = a.shape
        _record(out, (a,), lambda g: (np.broadcast_to(g, shape).copy(),))
    return out


def mean_all(a: Tensor) -> Tensor:
    out = Tensor(a.data.mean())
    if _tracked(a):
        shape, n = a.shape, a.size
        _record(out, (a,), lambda g: (np.broadcast_to(g / n, shape).copy(),))
    return out


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    """Max-stabilized softmax along `axis`; rows sum to one."""
    if not -a.ndim <= axis < a.ndim:
        raise ValueError(f"axis {axis} invalid for shape {a.shape}")
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(p)
    if _tracked(a):

        def bwd(g):
            dot = (g * p).sum(axis=axis, keepdims=True)
            return (p * (g - dot),)

        _record(out, (a,), bwd)
    return out


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeMismatchError(
            f"gain/bias must have shape ({d},), got {gain.shape} and {bias.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = Tensor(xhat * gain.data + bias.data)
    if _tracked(x, gain, bias):
        g_data = gain.data

        def bwd(g):
            dxhat = g * g_data
            # standard layer-norm backward over the last axis
            gx = inv / d * (d * dxhat
                            - dxhat.sum(axis=-1, keepdims=True)
                            - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True))
            lead = tuple(range(g.ndim - 1))
            return gx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

        _record(out, (x, gain, bias), bwd)
    return out


def embedding_lookup(table: Tensor, indices: np.ndarray) -> Tensor:
    """Gather rows of `table` (V x D) at integer `indices` (any shape)."""
    idx = np.asarray(indices)
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise ValueError(
            f"index out of range [0, {table.shape[0]}) in embedding lookup")
    out = Tensor(table.data[idx])
    if _tracked(table):
        shape = table.shape

        def bwd(g):
            gt = np.zeros(shape, dtype=g.dtype)
            np.add.at(gt, idx, g)
            return (gt,)

        _record(out, (table,), bwd)
    return out


def gather_rows(x: Tensor, positions: np.ndarray) -> Tensor:
    """Pick x[b, positions[b], :] for each batch row b: (B,n,D) -> (B,D)."""
    pos = np.asarray(positions)
    b_idx = np.arange(x.shape[0])
    out = Tensor(x.data[b_idx, pos])
    if _tracked(x):
        shape = x.shape

        def bwd(g):
            gx = np.zeros(shape, dtype=g.dtype)
            gx[b_idx, pos] = g
            return (gx,)

        _record(out, (x,), bwd)
    return out


def dropout(x: Tensor, p: float, rng: RngStream, train: bool) -> Tensor:
    """Inverted dropout: scales kept units by 1/(1-p) so eval needs no rescale."""
    if not train or p == 0.0:
        return x
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {p}")
    mask = (rng.uniform(x.shape) >= p) / (1.0 - p)
    out = Tensor(x.data * mask)
    if _tracked(x):
        _record(out, (x,), lambda g: (g * mask,))
    return out


def cross_entropy_logits(logits: Tensor, target_index: int) -> Tensor:
    """-log softmax(logits)[target] for a 1-d logit vector."""
    if logits.ndim != 1:
        raise ShapeMismatchError(f"expected 1-d logits, got shape {logits.shape}")
    n = logits.shape[0]
    if not 0 <= target_index < n:
        raise ValueError(f"target index {target_index} out of range [0, {n})")
    m = logits.data.max()
    e = np.exp(logits.data - m)
    lse = m + np.log(e.sum())
    out = Tensor(lse - logits.data[target_index])
    if _tracked(logits):
        p = e / e.sum()

        def bwd(g):
            gl = p.copy()
            gl[target_index] -= 1.0
            return (gl * g,)

        _record(out, (logits,), bwd)
    return out


def cross_entropy_rows(logits: Tensor, targets: np.ndarray,
                       ignore_col: int | None = None) -> Tensor:
    """Mean over rows of -log softmax(row)[target].

    `ignore_col` removes one column (e.g. a padding slot) from the
    denominator entirely; that column then receives zero gradient.
    """
    if logits.ndim != 2:
        raise ShapeMismatchError(f"expected 2-d logits, got shape {logits.shape}")
    b, n = logits.shape
    tgt = np.asarray(targets)
    if tgt.shape != (b,):
        raise ShapeMismatchError(f"targets shape {tgt.shape} != ({b},)")
    if tgt.min() < 0 or tgt.max() >= n:
        raise ValueError(f"target index out of range [0, {n})")
    if ignore_col is not None and np.any(tgt == ignore_col):
        raise ValueError(f"target equals ignored column {ignore_col}")
    z = logits.data
    if ignore_col is not None:
        z = z.copy()
        z[:, ignore_col] = -np.inf
    m = z.max(axis=1, keepdims=True)
    e = np.exp(z - m)
    denom = e.sum(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(denom[:, 0])
    out = Tensor(np.mean(lse - z[np.arange(b), tgt]))
    if _tracked(logits):
        p = e / denom  # exp(-inf) = 0 keeps the ignored column at zero

        def bwd(g):
            gl = p.copy()
            gl[np.arange(b), tgt] -= 1.0
            return (gl * (g / b),)

        _record(out, (logits,), bwd)
    return out


def sample_gaussian(rng: RngStream, shape, mean: float = 0.0,
                    std: float = 1.0) -> Tensor:
    """Untracked tensor of i.i.d. normal draws; deterministic given the stream."""
    return Tensor(rng.gaussian(shape, mean, std))
