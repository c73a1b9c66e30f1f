"""Dense float tensors with reverse-mode automatic differentiation.

A small tape engine: every operation records its parent tensors and a
closure that routes the output gradient back to them. ``backward()``
walks the recorded graph once, in reverse topological order. The op set
is exactly what the transformer blocks and losses need; broadcasting
follows numpy, with gradients summed back down to the operand shape.

The graph is rebuilt on every forward pass (dynamic tape), which is
what the per-step Gumbel noise in the supernet requires anyway.
"""

from __future__ import annotations

import numpy as np

from ._kernels import impl as _K
from ._kernels import ref as _KREF
from .errors import ContractError, ShapeError

_DEFAULT_DTYPE = np.float64
_DEBUG_CHECKS = False


def set_default_dtype(dtype) -> None:
    """Set the float width for newly created tensors (float64 or float32).

    float64 is the default; float32 exists for speed comparisons and
    loosens every gradient-check guarantee.
    """
    global _DEFAULT_DTYPE
    dt = np.dtype(dtype)
    if dt.type not in (np.float64, np.float32):
        raise ContractError(f"unsupported dtype {dt}; use float64 or float32")
    _DEFAULT_DTYPE = dt.type


def default_dtype():
    return _DEFAULT_DTYPE


def set_debug_checks(on: bool) -> None:
    """Toggle the per-op NaN/Inf scan (off by default for speed)."""
    global _DEBUG_CHECKS
    _DEBUG_CHECKS = bool(on)


def _kern(arr):
    # Fused kernels are float64-only; float32 falls back to numpy.
    return _K if arr.dtype == np.float64 else _KREF


class Tensor:
    """N-dimensional float array plus an optional gradient tape node."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "_op")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data, dtype=dtype or _DEFAULT_DTYPE)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backward = None
        self._op = "leaf"

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        rg = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}, op={self._op}{rg})"

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        """Copy of the value with no tape history and no gradient."""
        return Tensor(self.data.copy(), requires_grad=False, dtype=self.data.dtype)

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g):
        if self.grad is None:
            # own a fresh buffer so later in-place accumulation is safe
            self.grad = np.array(g, dtype=self.data.dtype)
        else:
            self.grad += g

    def backward(self) -> None:
        """Reverse-mode sweep from a scalar root.

        Visits each recorded node exactly once in reverse topological
        order; afterwards every reachable requires_grad leaf has a grad.
        """
        if self.data.size != 1:
            raise ContractError(
                f"backward() root must be scalar, got shape {self.data.shape}"
            )
        topo = []
        seen = set()
        stack = [(self, False)]
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
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _finite_check(arr, op):
    if _DEBUG_CHECKS and not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"non-finite values produced by op '{op}'")


def _node(data, parents, backward, op) -> Tensor:
    _finite_check(data, op)
    out = Tensor(data, dtype=data.dtype)
    out.data = data  # keep the exact array, no re-copy
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
        out._op = op
    return out


def _unbroadcast(g, shape):
    """Sum a broadcasted gradient back down to ``shape``."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# arithmetic


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.data.shape))

    return _node(data, (a, b), backward, "add")


def mul(a, b) -> Tensor:
    """Elementwise product (numpy broadcasting rules)."""
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data * b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.data.shape))

    return _node(data, (a, b), backward, "mul")


def scale(a, s: float) -> Tensor:
    """Multiply by a python scalar constant."""
    a = _as_tensor(a)
    s = float(s)
    data = a.data * s

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * s)

    return _node(data, (a,), backward, "scale")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product; stacked (batched) on leading dims like np.matmul.

    Supported operand ranks: both >= 2, with equal leading dims or
    either operand plain 2-d.
    """
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs rank >= 2 operands, got {a.shape} and {b.shape}")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeError(
            f"matmul inner dimensions disagree: {a.shape} x {b.shape}"
        )
    data = np.matmul(a.data, b.data)

    def backward(g):
        if a.requires_grad:
            ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
            a._accumulate(_unbroadcast(ga, a.data.shape))
        if b.requires_grad:
            gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
            b._accumulate(_unbroadcast(gb, b.data.shape))

    return _node(data, (a, b), backward, "matmul")


def relu(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    data = np.maximum(a.data, 0.0)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * (a.data > 0.0))

    return _node(data, (a,), backward, "relu")


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)
    data = np.asarray(data)

    def backward(g):
        if not a.requires_grad:
            return
        if axis is None:
            a._accumulate(np.broadcast_to(g, a.data.shape).astype(a.data.dtype))
        else:
            gg = g if keepdims else np.expand_dims(g, axis)
            a._accumulate(np.broadcast_to(gg, a.data.shape).astype(a.data.dtype))

    return _node(data, (a,), backward, "sum")


def reshape(a: Tensor, shape) -> Tensor:
    a = _as_tensor(a)
    data = a.data.reshape(shape)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g.reshape(a.data.shape))

    return _node(data, (a,), backward, "reshape")


def transpose(a: Tensor, axes) -> Tensor:
    a = _as_tensor(a)
    axes = tuple(axes)
    data = np.transpose(a.data, axes)
    inv = tuple(np.argsort(axes))

    def backward(g):
        if a.requires_grad:
            a._accumulate(np.transpose(g, inv))

    return _node(data, (a,), backward, "transpose")


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    if not tensors:
        raise ContractError("concat of zero tensors")
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                t._accumulate(g[tuple(idx)])

    return _node(data, tuple(tensors), backward, "concat")


def getitem(a: Tensor, key) -> Tensor:
    """Basic (non-boolean) indexing with scatter-add backward."""
    a = _as_tensor(a)
    data = np.asarray(a.data[key])

    def backward(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            np.add.at(full, key, g)
            a._accumulate(full)

    return _node(data, (a,), backward, "getitem")


# ---------------------------------------------------------------------------
# normalization / activations / losses


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-row (last axis) normalization followed by an affine map."""
    x, gain, bias = _as_tensor(x), _as_tensor(gain), _as_tensor(bias)
    d = x.data.shape[-1] if x.ndim > 0 else 0
    if d == 0:
        raise ShapeError("layer_norm over an empty last dimension")
    if gain.data.shape != (d,) or bias.data.shape != (d,):
        raise ShapeError(
            f"layer_norm gain/bias must have shape ({d},), got "
            f"{gain.data.shape} and {bias.data.shape}"
        )
    if not eps > 0:
        raise ContractError("layer_norm eps must be > 0")
    lead = x.data.shape[:-1]
    rows = np.ascontiguousarray(x.data.reshape(-1, d))
    k = _kern(rows)
    y, mean, rstd = k.layer_norm_fwd(rows, gain.data, bias.data, eps)

    def backward(g):
        g2 = np.ascontiguousarray(g.reshape(-1, d))
        dx, dgain, dbias = k.layer_norm_bwd(g2, rows, gain.data, mean, rstd)
        if x.requires_grad:
            x._accumulate(dx.reshape(x.data.shape))
        if gain.requires_grad:
            gain._accumulate(dgain)
        if bias.requires_grad:
            bias._accumulate(dbias)

    return _node(y.reshape(lead + (d,)), (x, gain, bias), backward, "layer_norm")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Stable softmax along ``axis``; rows sum to 1."""
    x = _as_tensor(x)
    ax = axis % x.ndim
    moved = np.moveaxis(x.data, ax, -1)
    lead = moved.shape[:-1]
    n = moved.shape[-1]
    rows = np.ascontiguousarray(moved.reshape(-1, n))
    k = _kern(rows)
    y2 = k.softmax_fwd(rows)
    out = np.moveaxis(y2.reshape(lead + (n,)), -1, ax)

    def backward(g):
        if not x.requires_grad:
            return
        g2 = np.ascontiguousarray(np.moveaxis(g, ax, -1).reshape(-1, n))
        dx2 = k.softmax_bwd(y2, g2)
        x._accumulate(np.moveaxis(dx2.reshape(lead + (n,)), -1, ax))

    return _node(out, (x,), backward, "softmax")


def cross_entropy(logits: Tensor, targets) -> Tensor:
    """Mean negative log likelihood (nats) of integer targets.

    ``logits`` is (..., V); ``targets`` an integer array matching the
    leading shape. Out-of-range targets raise with the flat position.
    """
    logits = _as_tensor(logits)
    v = logits.data.shape[-1]
    ids = np.asarray(targets)
    if ids.shape != logits.data.shape[:-1]:
        raise ShapeError(
            f"targets shape {ids.shape} does not match logits rows "
            f"{logits.data.shape[:-1]}"
        )
    flat_ids = np.ascontiguousarray(ids.reshape(-1).astype(np.int64))
    bad = np.where((flat_ids < 0) | (flat_ids >= v))[0]
    if bad.size:
        p = int(bad[0])
        raise IndexError(
            f"target id {int(flat_ids[p])} out of range [0, {v}) at position {p}"
        )
    rows = np.ascontiguousarray(logits.data.reshape(-1, v))
    k = _kern(rows)
    nll, probs = k.cross_entropy_fwd(rows, flat_ids)
    n = rows.shape[0]
    out = np.asarray(nll.sum() / n)

    def backward(g):
        if not logits.requires_grad:
            return
        dl = k.cross_entropy_bwd(probs, flat_ids, float(g) / n)
        logits._accumulate(dl.reshape(logits.data.shape))

    return _node(out, (logits,), backward, "cross_entropy")


def embedding_lookup(table: Tensor, ids) -> Tensor:
    """Gather rows of ``table`` (V, d) at integer ``ids``; scatter-add backward."""
    table = _as_tensor(table)
    if table.ndim != 2:
        raise ShapeError(f"embedding table must be 2-d, got {table.shape}")
    ids = np.asarray(ids, dtype=np.int64)
    v = table.data.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= v):
        raise IndexError(f"embedding id out of range [0, {v})")
    data = table.data[ids]
    flat_ids = np.ascontiguousarray(ids.reshape(-1))

    def backward(g):
        if table.requires_grad:
            g2 = np.ascontiguousarray(g.reshape(-1, table.data.shape[1]))
            k = _kern(g2)
            table._accumulate(k.embedding_bwd(flat_ids, g2, v))

    return _node(data, (table,), backward, "embedding_lookup")


def dropout(x: Tensor, p: float, rng: np.random.Generator, train: bool = True) -> Tensor:
    """Inverted dropout; a no-op when ``train`` is false or p == 0."""
    x = _as_tensor(x)
    if not 0.0 <= p < 1.0:
        raise ContractError(f"dropout probability must be in [0, 1), got {p}")
    if not train or p == 0.0:
        return x
    mask = (rng.random(x.data.shape) >= p).astype(x.data.dtype) / (1.0 - p)
    data = x.data * mask

    def backward(g):
        if x.requires_grad:
            x._accumulate(g * mask)

    return _node(data, (x,), backward, "dropout")


# ---------------------------------------------------------------------------
# verification


def grad_check(f, x: Tensor, eps: float = 1e-5) -> float:
    """Compare reverse-mode gradients of scalar f against central differences.

    Perturbs every element of ``x``: (f(x+eps*e) - f(x-eps*e)) / (2*eps),
    and returns the maximum relative error with denominator
    max(|analytic|, |numeric|, 1e-8).
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ContractError(f"eps must lie in [1e-7, 1e-3], got {eps}")
    x.zero_grad()
    out = f(x)
    if not isinstance(out, Tensor) or out.data.size != 1:
        raise ContractError("grad_check requires a scalar-valued tensor function")
    out.backward()
    analytic = (
        x.grad.copy() if x.grad is not None else np.zeros_like(x.data)
    ).reshape(-1)

    flat = x.data.reshape(-1)
    numeric = np.zeros_like(analytic)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = float(f(x).data)
        flat[i] = orig - eps
        lo = float(f(x).data)
        flat[i] = orig
        numeric[i] = (hi - lo) / (2.0 * eps)

    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))
