"""Dense float64 matrix helpers and a small reverse-mode gradient tape.

Values are plain numpy arrays. Any operation in this module that receives a
:class:`Var` records itself on that variable's :class:`Tape`; with plain
arrays it just computes. Arrays may carry leading batch axes, in which case
the last two axes are the matrix axes and parameters broadcast over the batch.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError, ShapeError

__all__ = [
    "Tape",
    "Var",
    "Gradients",
    "matmul",
    "add",
    "mul",
    "relu",
    "softmax_rows",
    "log_softmax_rows",
    "exp",
    "log",
    "power",
    "affine",
    "total",
    "mean",
    "reshape",
    "transpose",
    "take_last",
    "minmax_normalize",
]


def _as_array(x):
    return np.asarray(x, dtype=np.float64)


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` (reverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _swap(a):
    return np.swapaxes(a, -1, -2)


class Var:
    """Handle to a value recorded on a tape."""

    __slots__ = ("tape", "id", "value")

    def __init__(self, tape, node_id, value):
        self.tape = tape
        self.id = node_id
        self.value = value

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Var(id={self.id}, shape={self.value.shape})"


class _Node:
    __slots__ = ("op", "inputs", "backward", "value", "name")

    def __init__(self, op, inputs, backward, value, name):
        self.op = op
        self.inputs = inputs
        self.backward = backward
        self.value = value
        self.name = name


class Gradients:
    """Gradient lookup returned by :meth:`Tape.backward`.

    Index with a :class:`Var` or a node id. Nodes the output does not depend
    on get a zero array of their own shape.
    """

    def __init__(self, tape, grads):
        self._tape = tape
        self._grads = grads

    def __getitem__(self, key):
        node_id = key.id if isinstance(key, Var) else int(key)
        g = self._grads[node_id]
        if g is None:
            return np.zeros_like(self._tape.nodes[node_id].value)
        return g

    def __len__(self):
        return len(self._grads)


class Tape:
    """Ordered record of primitive operations.

    Node ids are assigned in creation order, so every node's inputs precede
    it and a reverse sweep is a valid topological traversal.
    """

    def __init__(self):
        self.nodes: list[_Node] = []

    def __len__(self):
        return len(self.nodes)

    def leaf(self, value, name=None):
        value = _as_array(value)
        if not np.all(np.isfinite(value)):
            raise ContractError(f"non-finite leaf value for {name or 'input'}")
        return self._record("leaf", (), None, value.copy(), name)

    def _record(self, op, inputs, backward, value, name=None):
        node_id = len(self.nodes)
        self.nodes.append(_Node(op, inputs, backward, value, name))
        return Var(self, node_id, value)

    def leaves(self):
        return [Var(self, i, n.value) for i, n in enumerate(self.nodes) if n.op == "leaf"]

    def backward(self, output):
        """Reverse sweep from a single-element output node."""
        if not isinstance(output, Var) or output.tape is not self:
            raise ContractError("backward() needs a Var recorded on this tape")
        if output.value.size != 1:
            raise ContractError(
                f"backward() needs a scalar output, got shape {output.value.shape}"
            )
        grads: list = [None] * len(self.nodes)
        grads[output.id] = np.ones_like(output.value)
        for node_id in range(output.id, -1, -1):
            g = grads[node_id]
            node = self.nodes[node_id]
            if g is None or node.backward is None:
                continue
            for parent, pg in zip(node.inputs, node.backward(g)):
                if pg is None:
                    continue
                if grads[parent] is None:
                    grads[parent] = pg
                else:
                    grads[parent] = grads[parent] + pg
        return Gradients(self, grads)


def _tape_of(*xs):
    tape = None
    for x in xs:
        if isinstance(x, Var):
            if tape is not None and x.tape is not tape:
                raise ContractError("operands recorded on different tapes")
            tape = x.tape
    return tape


def _val(x):
    return x.value if isinstance(x, Var) else _as_array(x)


def _lift(tape, x):
    # constants entering a recorded op become leaves
    return x if isinstance(x, Var) else tape.leaf(x, name="const")


def matmul(a, b):
    av, bv = _val(a), _val(b)
    if av.ndim < 2 or bv.ndim < 2 or av.shape[-1] != bv.shape[-2]:
        raise ShapeError(f"matmul shape mismatch: {av.shape} x {bv.shape}")
    out = np.matmul(av, bv)
    tape = _tape_of(a, b)
    if tape is None:
        return out
    a, b = _lift(tape, a), _lift(tape, b)

    def back(g):
        return (
            _unbroadcast(np.matmul(g, _swap(bv)), av.shape),
            _unbroadcast(np.matmul(_swap(av), g), bv.shape),
        )

    return tape._record("matmul", (a.id, b.id), back, out)


def add(a, b):
    av, bv = _val(a), _val(b)
    try:
        out = av + bv
    except ValueError:
        raise ShapeError(f"add shape mismatch: {av.shape} + {bv.shape}") from None
    tape = _tape_of(a, b)
    if tape is None:
        return out
    a, b = _lift(tape, a), _lift(tape, b)

    def back(g):
        return _unbroadcast(g, av.shape), _unbroadcast(g, bv.shape)

    return tape._record("add", (a.id, b.id), back, out)


def mul(a, b):
    """Element-wise (Hadamard) product."""
    av, bv = _val(a), _val(b)
    try:
        out = av * bv
    except ValueError:
        raise ShapeError(f"hadamard shape mismatch: {av.shape} * {bv.shape}") from None
    tape = _tape_of(a, b)
    if tape is None:
        return out
    a, b = _lift(tape, a), _lift(tape, b)

    def back(g):
        return _unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)

    return tape._record("mul", (a.id, b.id), back, out)


def relu(m):
    v = _val(m)
    out = np.maximum(v, 0.0)
    if not isinstance(m, Var):
        return out
    mask = v > 0
    return m.tape._record("relu", (m.id,), lambda g: (g * mask,), out)


def _softmax(v):
    shifted = v - v.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_rows(m):
    """Softmax over the last axis, stabilised by row-max subtraction."""
    v = _val(m)
    out = _softmax(v)
    if not isinstance(m, Var):
        return out

    def back(g):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return m.tape._record("softmax", (m.id,), back, out)


def log_softmax_rows(m):
    v = _val(m)
    shifted = v - v.max(axis=-1, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    if not isinstance(m, Var):
        return out
    soft = np.exp(out)

    def back(g):
        return (g - soft * g.sum(axis=-1, keepdims=True),)

    return m.tape._record("log_softmax", (m.id,), back, out)


def exp(m):
    v = _val(m)
    out = np.exp(v)
    if not isinstance(m, Var):
        return out
    return m.tape._record("exp", (m.id,), lambda g: (g * out,), out)


def log(m):
    v = _val(m)
    out = np.log(v)
    if not isinstance(m, Var):
        return out
    return m.tape._record("log", (m.id,), lambda g: (g / v,), out)


def power(m, exponent: float):
    """Element-wise ``m ** exponent`` for non-negative ``m``."""
    v = _val(m)
    out = np.power(v, exponent)
    if not isinstance(m, Var):
        return out

    def back(g):
        if exponent == 0:
            return (np.zeros_like(v),)
        return (g * exponent * np.power(v, exponent - 1),)

    return m.tape._record("power", (m.id,), back, out)


def affine(m, scale: float, shift: float = 0.0):
    """``scale * m + shift`` with scalar constants."""
    v = _val(m)
    out = scale * v + shift
    if not isinstance(m, Var):
        return out
    return m.tape._record("affine", (m.id,), lambda g: (g * scale,), out)


def total(m):
    """Sum of all entries as a 1x1 value."""
    v = _val(m)
    out = np.array([[v.sum()]])
    if not isinstance(m, Var):
        return out
    return m.tape._record("sum", (m.id,), lambda g: (np.full(v.shape, g.item()),), out)


def mean(m):
    v = _val(m)
    n = v.size
    out = np.array([[v.sum() / n]])
    if not isinstance(m, Var):
        return out
    return m.tape._record("mean", (m.id,), lambda g: (np.full(v.shape, g.item() / n),), out)


def reshape(m, shape):
    v = _val(m)
    try:
        out = v.reshape(shape)
    except ValueError:
        raise ShapeError(f"cannot reshape {v.shape} to {shape}") from None
    if not isinstance(m, Var):
        return out
    return m.tape._record("reshape", (m.id,), lambda g: (g.reshape(v.shape),), out)


def transpose(m):
    """Swap the last two axes."""
    v = _val(m)
    out = _swap(v)
    if not isinstance(m, Var):
        return out
    return m.tape._record("transpose", (m.id,), lambda g: (_swap(g),), out)


def take_last(m, index):
    """Pick ``m[..., i, index[i]]`` for each row ``i``; result keeps a trailing axis of 1."""
    v = _val(m)
    index = np.asarray(index, dtype=np.intp)
    rows = v.shape[-2]
    if index.shape != (rows,):
        raise ShapeError(f"take_last needs {rows} indices, got shape {index.shape}")
    if np.any(index < 0) or np.any(index >= v.shape[-1]):
        raise ShapeError(f"take_last index out of range for width {v.shape[-1]}")
    r = np.arange(rows)
    out = v[..., r, index][..., None]
    if not isinstance(m, Var):
        return out

    def back(g):
        full = np.zeros_like(v)
        full[..., r, index] = g[..., 0]
        return (full,)

    return m.tape._record("take", (m.id,), back, out)


def minmax_normalize(v):
    """Affinely map ``v`` onto [0, 1]; a constant vector maps to zeros."""
    v = _as_array(v)
    if v.size == 0:
        raise ContractError("minmax_normalize needs a nonempty vector")
    lo, hi = v.min(), v.max()
    if hi == lo:
        return np.zeros_like(v)
    out = (v - lo) / (hi - lo)
    return np.clip(out, 0.0, 1.0)
