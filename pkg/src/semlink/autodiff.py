"""Minimal reverse-mode automatic differentiation over dense float64 arrays.

Tensors form an implicit tape: every operation records its parents and a
closure that routes the output gradient back to them.  ``backward()`` on a
scalar loss walks that graph once in reverse topological order.  All math is
64-bit and single-threaded per graph, so a fixed seed gives bit-identical
forward and backward passes.

Supported primitives are the ones the semantic coder actually needs:
matmul, add, mul, relu, tanh, scale, softmax_rows, layer_norm_rows,
concat_rows, slice_cols, mean_rows, sum_all, reshape, transpose_last2,
embedding lookup, a straight-through binarizer, cross_entropy and mse.
Row-wise ops act on the last axis so a leading batch axis is free.
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes violate an operation's contract."""


class GraphError(ValueError):
    """Raised on tape misuse: non-scalar backward, missing gradient, etc."""


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self):
        return float(self.data)

    def detach(self):
        return Tensor(self.data, requires_grad=False)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # Operator sugar for the common binary ops.
    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    def __matmul__(self, other):
        return matmul(self, other)

    def backward(self):
        """Backpropagate from a scalar loss, accumulating into .grad fields."""
        if self.data.size != 1:
            raise GraphError(
                f"backward() requires a scalar loss, got shape {self.shape}")
        order = _topo_order(self)
        self.grad = np.ones_like(self.data)
        for node in order:
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
        # Interior gradients are only needed transiently; free the closures so
        # a long training loop does not grow the graph.
        for node in order:
            if node is not self:
                node._parents = ()
                node._backward = None


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


_GRAD_ENABLED = True


class no_grad:
    """Context manager that skips tape recording (inference mode)."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._prev = _GRAD_ENABLED
        _GRAD_ENABLED = False
        return self

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._prev
        return False


def _topo_order(root):
    """Reverse topological order of the graph reachable from root (iterative)."""
    order = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))
    order.reverse()
    return order


def _accumulate(node, g, own=False):
    """Add g into node.grad; own=True means g is a fresh temporary that can
    be adopted without copying (never a view of another live array)."""
    if node.grad is None:
        node.grad = g if own else g.copy()
    else:
        node.grad += g


def _make(data, parents, backward_fn):
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _unbroadcast(g, shape):
    """Reduce a gradient back to `shape` after numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------

def matmul(a, b):
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs 2-D operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    data = np.matmul(a.data, b.data)

    def backward(g):
        if a.requires_grad:
            ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
            _accumulate(a, _unbroadcast(ga, a.shape), own=True)
        if b.requires_grad:
            gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
            _accumulate(b, _unbroadcast(gb, b.shape), own=True)

    return _make(data, (a, b), backward)


def add(a, b):
    try:
        data = a.data + b.data
    except ValueError:
        raise ShapeError(f"add shape mismatch: {a.shape} + {b.shape}") from None

    def backward(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g, a.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(g, b.shape))

    return _make(data, (a, b), backward)


def mul(a, b):
    try:
        data = a.data * b.data
    except ValueError:
        raise ShapeError(f"mul shape mismatch: {a.shape} * {b.shape}") from None

    def backward(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g * b.data, a.shape), own=True)
        if b.requires_grad:
            _accumulate(b, _unbroadcast(g * a.data, b.shape), own=True)

    return _make(data, (a, b), backward)


def relu(a):
    # Subgradient at exactly 0 is fixed to 0 so runs are reproducible.
    mask = a.data > 0
    data = np.where(mask, a.data, 0.0)

    def backward(g):
        if a.requires_grad:
            _accumulate(a, g * mask, own=True)

    return _make(data, (a,), backward)


def tanh(a):
    data = np.tanh(a.data)

    def backward(g):
        if a.requires_grad:
            _accumulate(a, g * (1.0 - data * data), own=True)

    return _make(data, (a,), backward)


def scale(a, c):
    c = float(c)
    data = a.data * c

    def backward(g):
        if a.requires_grad:
            _accumulate(a, g * c, own=True)

    return _make(data, (a,), backward)


def softmax_rows(a):
    """Softmax along the last axis; rows come back non-negative, summing to 1."""
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        if a.requires_grad:
            dot = (g * data).sum(axis=-1, keepdims=True)
            _accumulate(a, (g - dot) * data, own=True)

    return _make(data, (a,), backward)


def layer_norm_rows(a, eps=1e-8):
    """Normalize the last axis to zero mean, unit variance (no affine)."""
    mu = a.data.mean(axis=-1, keepdims=True)
    centered = a.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    data = centered * inv_std

    def backward(g):
        if a.requires_grad:
            gm = g.mean(axis=-1, keepdims=True)
            gy = (g * data).mean(axis=-1, keepdims=True)
            _accumulate(a, inv_std * (g - gm - data * gy), own=True)

    return _make(data, (a,), backward)


def concat_rows(tensors):
    """Concatenate along the last axis (each row gets longer)."""
    tensors = list(tensors)
    lead = tensors[0].shape[:-1]
    for t in tensors[1:]:
        if t.shape[:-1] != lead:
            raise ShapeError(
                f"concat_rows leading-shape mismatch: {tensors[0].shape} vs {t.shape}")
    data = np.concatenate([t.data for t in tensors], axis=-1)
    widths = [t.shape[-1] for t in tensors]

    def backward(g):
        lo = 0
        for t, w in zip(tensors, widths):
            if t.requires_grad:
                _accumulate(t, g[..., lo:lo + w])
            lo += w

    return _make(data, tuple(tensors), backward)


def slice_cols(a, lo, hi):
    data = a.data[..., lo:hi]

    def backward(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            full[..., lo:hi] = g
            _accumulate(a, full, own=True)

    return _make(data, (a,), backward)


def mean_rows(a):
    """Mean along the last axis, keeping it as a singleton."""
    n = a.shape[-1]
    data = a.data.mean(axis=-1, keepdims=True)

    def backward(g):
        if a.requires_grad:
            _accumulate(a, np.broadcast_to(g / n, a.shape).copy(), own=True)

    return _make(data, (a,), backward)


def sum_all(a):
    data = np.asarray(a.data.sum())

    def backward(g):
        if a.requires_grad:
            _accumulate(a, np.broadcast_to(g, a.shape).copy(), own=True)

    return _make(data, (a,), backward)


def reshape(a, shape):
    data = a.data.reshape(shape)
    old = a.shape

    def backward(g):
        if a.requires_grad:
            _accumulate(a, g.reshape(old))

    return _make(data, (a,), backward)


def transpose_last2(a):
    data = np.swapaxes(a.data, -1, -2)

    def backward(g):
        if a.requires_grad:
            _accumulate(a, np.swapaxes(g, -1, -2))

    return _make(data, (a,), backward)


def lookup_rows(table, indices):
    """Embedding lookup: rows of `table` selected by an integer index array."""
    idx = np.asarray(indices)
    if idx.min() < 0 or idx.max() >= table.shape[0]:
        raise ShapeError(
            f"lookup index out of range for table with {table.shape[0]} rows")
    data = table.data[idx]

    def backward(g):
        if table.requires_grad:
            acc = np.zeros_like(table.data)
            np.add.at(acc, idx.reshape(-1), g.reshape(-1, table.shape[-1]))
            _accumulate(table, acc, own=True)

    return _make(data, (table,), backward)


def binarize_ste(a):
    """Hard 0/1 threshold at zero with a straight-through gradient.

    Forward emits exact bits; backward passes the gradient unchanged wherever
    |input| <= 1 and clips it to zero outside, so the op can sit downstream of
    a tanh squash and still train.
    """
    data = (a.data > 0).astype(np.float64)

    def backward(g):
        if a.requires_grad:
            _accumulate(a, g * (np.abs(a.data) <= 1.0), own=True)

    return _make(data, (a,), backward)


def cross_entropy(logits, targets, mask=None):
    """Mean negative log-softmax of the target class over unmasked positions.

    targets: integer class indices shaped like logits minus its last axis, or
    a one-hot float array of the same shape as logits.  mask: optional 0/1
    array over positions; masked-out rows contribute nothing.
    """
    tgt = targets.data if isinstance(targets, Tensor) else np.asarray(targets)
    if tgt.shape == logits.shape:
        tgt = tgt.argmax(axis=-1)
    tgt = tgt.astype(np.int64)
    if tgt.shape != logits.shape[:-1]:
        raise ShapeError(
            f"cross_entropy target shape {tgt.shape} does not match logits {logits.shape}")

    shifted = logits.data - logits.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    log_probs = shifted - lse

    if mask is None:
        w = np.ones(tgt.shape)
    else:
        w = np.asarray(mask, dtype=np.float64)
        if w.shape != tgt.shape:
            raise ShapeError(
                f"cross_entropy mask shape {w.shape} does not match targets {tgt.shape}")
    count = w.sum()
    if count <= 0:
        raise GraphError("cross_entropy mask selects no positions")

    picked = np.take_along_axis(log_probs, tgt[..., None], axis=-1)[..., 0]
    data = np.asarray(-(picked * w).sum() / count)

    def backward(g):
        if logits.requires_grad:
            grad = np.exp(log_probs)
            flat = grad.reshape(-1, grad.shape[-1])
            flat[np.arange(tgt.size), tgt.reshape(-1)] -= 1.0
            grad *= (w / count)[..., None]
            _accumulate(logits, grad * g, own=True)

    return _make(data, (logits,), backward)


def mse(a, b):
    """Mean squared error over all entries, as a scalar tensor."""
    if a.shape != b.shape:
        raise ShapeError(f"mse shape mismatch: {a.shape} vs {b.shape}")
    diff = a.data - b.data
    n = diff.size
    data = np.asarray((diff * diff).sum() / n)

    def backward(g):
        coef = 2.0 * g / n
        if a.requires_grad:
            _accumulate(a, coef * diff, own=True)
        if b.requires_grad:
            _accumulate(b, -coef * diff, own=True)

    return _make(data, (a, b), backward)


_PRIMITIVES = {
    "matmul": matmul,
    "add": add,
    "mul": mul,
    "relu": relu,
    "tanh": tanh,
    "scale": scale,
    "softmax_rows": softmax_rows,
    "layer_norm_rows": layer_norm_rows,
    "concat_rows": lambda *ts: concat_rows(ts),
    "mean_rows": mean_rows,
    "cross_entropy": cross_entropy,
    "mse": mse,
}


def forward_primitive(op_kind, *inputs, **kwargs):
    """Dispatch an op by name; unknown kinds and bad shapes raise ShapeError."""
    try:
        fn = _PRIMITIVES[op_kind]
    except KeyError:
        raise ShapeError(f"unknown primitive {op_kind!r}") from None
    return fn(*inputs, **kwargs)


# ---------------------------------------------------------------------------
# parameters and optimizer
# ---------------------------------------------------------------------------

class Parameter:
    """A named, optionally trainable tensor."""

    __slots__ = ("name", "tensor", "trainable")

    def __init__(self, name, data, trainable=True):
        self.name = name
        self.tensor = Tensor(data, requires_grad=trainable)
        self.trainable = trainable

    @property
    def data(self):
        return self.tensor.data

    @property
    def grad(self):
        return self.tensor.grad

    def set_trainable(self, flag):
        self.trainable = bool(flag)
        self.tensor.requires_grad = self.trainable

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.tensor.shape}, trainable={self.trainable})"


class ParamStore:
    """Ordered collection of uniquely named parameters."""

    def __init__(self):
        self._params: dict[str, Parameter] = {}

    def add(self, name, data, trainable=True):
        if name in self._params:
            raise GraphError(f"duplicate parameter name {name!r}")
        p = Parameter(name, data, trainable)
        self._params[name] = p
        return p

    def __getitem__(self, name):
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def __iter__(self):
        return iter(self._params.values())

    def __len__(self):
        return len(self._params)

    def names(self):
        return list(self._params)

    def zero_grads(self):
        for p in self._params.values():
            p.tensor.grad = np.zeros_like(p.tensor.data)

    def set_trainable(self, flag, prefix=""):
        for name, p in self._params.items():
            if name.startswith(prefix):
                p.set_trainable(flag)

    def state_dict(self):
        return {name: p.tensor.data.copy() for name, p in self._params.items()}

    def load_state(self, state):
        for name, p in self._params.items():
            if name not in state:
                raise GraphError(f"checkpoint missing parameter {name!r}")
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.tensor.shape:
                raise ShapeError(
                    f"parameter {name!r}: checkpoint shape {arr.shape} != model {p.tensor.shape}")
            p.tensor.data = arr.copy()


class Adam:
    """Adaptive-moment optimizer; the de-facto default for transformer training."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self._m = {p.name: np.zeros_like(p.tensor.data) for p in self.params}
        self._v = {p.name: np.zeros_like(p.tensor.data) for p in self.params}

    def step(self):
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for p in self.params:
            if not p.trainable:
                continue
            g = p.tensor.grad
            if g is None:
                raise GraphError(f"parameter {p.name!r} has no gradient; "
                                 "call zero_grads() and backward() first")
            m = self._m[p.name]
            v = self._v[p.name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            update = (self.lr / bc1) * m / (np.sqrt(v / bc2) + self.eps)
            p.tensor.data -= update
            p.tensor.grad = np.zeros_like(g)
