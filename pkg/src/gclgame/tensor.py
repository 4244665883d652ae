"""
Dense float64 tensors with define-by-run reverse-mode differentiation.

A Tape records every primitive applied to tensors it watches; the record is
in execution order, which is a topological order, so backward is a single
reverse sweep. Tensors that are not on a tape are constants. A tape is
rebuilt for every forward pass and must not be shared between threads.
"""
import numbers

import numpy as np

from .errors import DisconnectedGraph, EmptyMask, InvalidConfig, NonFiniteResult, NotScalarOutput, ShapeMismatch


class Tensor:
    __slots__ = ('data', 'tape', 'index')

    def __init__(self, data, tape=None, index=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.tape = tape
        self.index = index

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    @property
    def tracked(self):
        return self.tape is not None

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def numpy(self):
        return self.data.copy()

    def __repr__(self):
        return "Tensor(shape={}{})".format(self.shape, ", tracked" if self.tracked else "")

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_lift(other, self), self)

    def __mul__(self, other):
        if isinstance(other, numbers.Real):
            return scale(self, other)
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return scale(self, -1.0)

    def __truediv__(self, other):
        if isinstance(other, numbers.Real):
            return scale(self, 1.0 / other)
        return div(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


class _Node:
    __slots__ = ('parents', 'vjp', 'name')

    def __init__(self, parents, vjp, name):
        self.parents = parents
        self.vjp = vjp
        self.name = name


class Gradients:
    """Adjoints of one backward sweep; disconnected inputs read as zeros."""

    def __init__(self, tape, adjoints):
        self._tape = tape
        self._adjoints = adjoints

    def connected(self, tensor):
        return tensor.tape is self._tape and self._adjoints[tensor.index] is not None

    def __getitem__(self, tensor):
        if self.connected(tensor):
            return self._adjoints[tensor.index]
        return np.zeros_like(tensor.data)

    def require(self, tensor):
        if not self.connected(tensor):
            raise DisconnectedGraph("input of shape {} is not on a path to the output".format(tensor.shape))
        return self._adjoints[tensor.index]


class Tape:
    def __init__(self):
        self.nodes = []

    def __len__(self):
        return len(self.nodes)

    def watch(self, data):
        """A differentiable leaf holding a copy of `data`."""
        return self._append(np.array(data, dtype=np.float64), (), None, "leaf")

    def _append(self, data, parents, vjp, name):
        self.nodes.append(_Node(parents, vjp, name))
        return Tensor(data, self, len(self.nodes) - 1)

    def backward(self, output):
        if output.size != 1:
            raise NotScalarOutput("backward needs a scalar output, got shape {}".format(output.shape))

        adjoints = [None] * len(self.nodes)
        if output.tape is not self:
            return Gradients(self, adjoints)

        adjoints[output.index] = np.ones_like(output.data)

        for index in range(output.index, -1, -1):
            adj = adjoints[index]
            node = self.nodes[index]
            if adj is None or node.vjp is None:
                continue

            for parent, grad in zip(node.parents, node.vjp(adj)):
                if parent is None or grad is None:
                    continue
                if adjoints[parent] is None:
                    adjoints[parent] = grad
                else:
                    adjoints[parent] = adjoints[parent] + grad

        return Gradients(self, adjoints)


def constant(data):
    return Tensor(data)


def _lift(value, like):
    if isinstance(value, Tensor):
        return value
    if isinstance(value, numbers.Real):
        return Tensor(np.full(like.shape, float(value)))
    return Tensor(value)


def _record(name, data, inputs, vjp):
    if not np.all(np.isfinite(data)):
        raise NonFiniteResult("{} produced a non-finite value".format(name))

    tape = None
    for t in inputs:
        if t.tape is not None:
            if tape is not None and t.tape is not tape:
                raise DisconnectedGraph("{}: operands live on different tapes".format(name))
            tape = t.tape

    if tape is None:
        return Tensor(data)

    parents = tuple(t.index if t.tape is tape else None for t in inputs)
    return tape._append(data, parents, vjp, name)


def _expect(cond, name, message):
    if not cond:
        raise ShapeMismatch(message, where=name)


def matmul(a, b):
    a, b = _lift(a, b), _lift(b, a)
    _expect(a.data.ndim == 2 and b.data.ndim == 2 and a.shape[1] == b.shape[0],
            "matmul", "cannot multiply {} by {}".format(a.shape, b.shape))
    ad, bd = a.data, b.data

    return _record("matmul", ad @ bd, (a, b), lambda g: (g @ bd.T, ad.T @ g))


def _broadcast_row(a, b, name):
    """b matches a, or b is a row vector added to every row of a 2-D a."""
    if a.shape == b.shape:
        return False
    _expect(a.data.ndim == 2 and b.data.size == a.shape[1] and b.data.ndim in (1, 2) and b.data.shape[0] in (
        a.shape[1], 1), name, "cannot combine {} with {}".format(a.shape, b.shape))
    return True


def add(a, b):
    a = _lift(a, b) if not isinstance(a, Tensor) else a
    b = _lift(b, a)
    row = _broadcast_row(a, b, "add")
    bshape = b.shape
    data = a.data + b.data.reshape(1, -1) if row else a.data + b.data

    def vjp(g):
        return g, (g.sum(axis=0).reshape(bshape) if row else g)

    return _record("add", data, (a, b), vjp)


def sub(a, b):
    a = _lift(a, b) if not isinstance(a, Tensor) else a
    b = _lift(b, a)
    row = _broadcast_row(a, b, "sub")
    bshape = b.shape
    data = a.data - b.data.reshape(1, -1) if row else a.data - b.data

    def vjp(g):
        return g, -(g.sum(axis=0).reshape(bshape) if row else g)

    return _record("sub", data, (a, b), vjp)


def scale(a, c):
    c = float(c)
    return _record("scale", a.data * c, (a,), lambda g: (g * c,))


def mul(a, b):
    a, b = _lift(a, b), _lift(b, a)
    _expect(a.shape == b.shape, "mul", "cannot multiply {} by {} elementwise".format(a.shape, b.shape))
    ad, bd = a.data, b.data

    return _record("mul", ad * bd, (a, b), lambda g: (g * bd, g * ad))


def div(a, b):
    a, b = _lift(a, b), _lift(b, a)
    _expect(a.shape == b.shape, "div", "cannot divide {} by {} elementwise".format(a.shape, b.shape))
    ad, bd = a.data, b.data
    with np.errstate(divide='ignore', invalid='ignore'):
        data = ad / bd

    return _record("div", data, (a, b), lambda g: (g / bd, -g * ad / (bd * bd)))


def leaky_relu(a, slope=0.2):
    slope = float(slope)
    factor = np.where(a.data > 0, 1.0, slope)

    return _record("leaky_relu", a.data * factor, (a,), lambda g: (g * factor,))


def exp(a):
    with np.errstate(over='ignore'):
        data = np.exp(a.data)

    return _record("exp", data, (a,), lambda g: (g * data,))


def log(a):
    ad = a.data
    with np.errstate(divide='ignore', invalid='ignore'):
        data = np.log(ad)

    return _record("log", data, (a,), lambda g: (g / ad,))


def softmax_rows(a):
    _expect(a.data.ndim == 2, "softmax_rows", "expected a matrix, got shape {}".format(a.shape))
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=1, keepdims=True)

    def vjp(g):
        return (s * (g - (g * s).sum(axis=1, keepdims=True)),)

    return _record("softmax_rows", s, (a,), vjp)


def concat(tensors, axis=1):
    tensors = [t if isinstance(t, Tensor) else Tensor(t) for t in tensors]
    _expect(all(t.data.ndim == tensors[0].data.ndim for t in tensors), "concat", "operands differ in rank")
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as e:
        raise ShapeMismatch(str(e), where="concat") from e
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    return _record("concat", data, tensors, lambda g: tuple(np.split(g, bounds, axis=axis)))


def gather_rows(a, index):
    index = np.asarray(index, dtype=np.int64)
    _expect(index.size == 0 or (index.min() >= 0 and index.max() < a.shape[0]),
            "gather_rows", "row index out of range for {} rows".format(a.shape[0]))
    shape = a.shape

    def vjp(g):
        out = np.zeros(shape)
        np.add.at(out, index, g)
        return (out,)

    return _record("gather_rows", a.data[index], (a,), vjp)


def segment_sum(a, segments, num_segments):
    """out[s] = sum of rows a[i] with segments[i] == s."""
    segments = np.asarray(segments, dtype=np.int64)
    _expect(len(segments) == a.shape[0], "segment_sum",
            "{} segment ids for {} rows".format(len(segments), a.shape[0]))
    _expect(segments.size == 0 or (segments.min() >= 0 and segments.max() < num_segments),
            "segment_sum", "segment id out of range for {} segments".format(num_segments))
    out = np.zeros((num_segments,) + a.shape[1:])
    np.add.at(out, segments, a.data)

    return _record("segment_sum", out, (a,), lambda g: (g[segments],))


def dropout(a, rate, seed):
    """Inverted dropout; the mask depends only on (rate, seed, shape)."""
    rate = float(rate)
    if not 0.0 <= rate < 1.0:
        raise InvalidConfig('drop', "dropout rate {} outside [0, 1)".format(rate))
    keep = (np.random.default_rng(seed).random(a.shape) >= rate) / (1.0 - rate)

    return _record("dropout", a.data * keep, (a,), lambda g: (g * keep,))


def mean(a, axis=None):
    if axis is None:
        n = a.size
        shape = a.shape
        return _record("mean", np.asarray(a.data.mean()), (a,), lambda g: (np.full(shape, g / n),))

    _expect(axis == 0 and a.data.ndim == 2, "mean", "only whole-tensor or axis-0 means are supported")
    n = a.shape[0]

    return _record("mean", a.data.mean(axis=0, keepdims=True), (a,),
                   lambda g: (np.repeat(g / n, n, axis=0),))


def total(a):
    shape = a.shape
    return _record("total", np.asarray(a.data.sum()), (a,), lambda g: (np.full(shape, g),))


def reshape(a, shape):
    old = a.shape
    return _record("reshape", a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def segment(a, start, stop, shape):
    """Slice a flat vector and view it as `shape`."""
    _expect(a.data.ndim == 1 and 0 <= start <= stop <= a.size, "segment",
            "slice [{}:{}] of a vector of {}".format(start, stop, a.size))
    size = a.size

    def vjp(g):
        out = np.zeros(size)
        out[start:stop] = g.reshape(-1)
        return (out,)

    return _record("segment", a.data[start:stop].reshape(shape), (a,), vjp)


def cross_entropy(logits, labels, mask=None):
    """Mean over selected rows of -log softmax(logits)[label]."""
    _expect(logits.data.ndim == 2, "cross_entropy", "expected a matrix of logits, got {}".format(logits.shape))
    n, classes = logits.shape
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    _expect(len(labels) == n, "cross_entropy", "{} labels for {} rows".format(len(labels), n))

    mask = np.ones(n, dtype=bool) if mask is None else np.asarray(mask, dtype=bool).reshape(-1)
    _expect(len(mask) == n, "cross_entropy", "{} mask flags for {} rows".format(len(mask), n))
    m = int(mask.sum())
    if m == 0:
        raise EmptyMask("cross-entropy mask selects no rows")

    picked = labels[mask]
    _expect(picked.min() >= 0 and picked.max() < classes, "cross_entropy",
            "label outside [0, {})".format(classes))

    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    rows = np.flatnonzero(mask)
    value = (lse[rows] - z[rows, picked]).sum() / m

    def vjp(g):
        out = np.zeros((n, classes))
        out[rows] = np.exp(z[rows] - lse[rows, None])
        out[rows, picked] -= 1.0
        return (out * (g / m),)

    return _record("cross_entropy", np.asarray(value), (logits,), vjp)


def fd_gradient(f, x, h=1e-6):
    """Central differences (f(x + h e_i) - f(x - h e_i)) / 2h per coordinate."""
    if h <= 0:
        raise InvalidConfig('h', "finite-difference step must be positive")

    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    out = grad.reshape(-1)

    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + h
        up = float(f(x))
        flat[i] = keep - h
        down = float(f(x))
        flat[i] = keep
        out[i] = (up - down) / (2.0 * h)

    return grad


def relative_error(a, b, floor=1e-8):
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.size == 0:
        return 0.0
    denom = max(np.max(np.abs(a)), np.max(np.abs(b)), floor)
    return float(np.max(np.abs(a - b)) / denom)
