"""Minimal reverse-mode automatic differentiation over numpy arrays.

A Tensor wraps an ndarray and, when it is the result of an operation,
remembers its parents and how to push a gradient back to them.  backward()
walks the graph in reverse topological order and accumulates d(loss)/dt
into the `grad` field of every reachable tensor with requires_grad set.
Repeated backward() calls accumulate additively; callers zero grads
between steps.

Only the operations the model needs are implemented.  Indexing supports
basic slicing only (no index arrays), matmul is strictly 2-D.
"""

import numpy as np

_FLOAT_DTYPES = (np.float32, np.float64)


def _as_array(data, like=None):
    arr = np.asarray(data)
    if arr.dtype not in _FLOAT_DTYPES:
        dtype = like.dtype if like is not None else np.float64
        arr = arr.astype(dtype)
    return arr


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        self.data = _as_array(data)
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

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return "Tensor(shape=%r, requires_grad=%r)" % (self.shape, self.requires_grad)

    def item(self):
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def detach(self):
        """A view of the same values that does not propagate gradients."""
        return Tensor(self.data, requires_grad=False)

    # -- arithmetic ----------------------------------------------------

    def __add__(self, other):
        other = as_tensor(other, like=self.data)
        out = self.data + other.data

        def bw(g):
            return ((self, _unbroadcast(g, self.data.shape)),
                    (other, _unbroadcast(g, other.data.shape)))

        return _make(out, (self, other), bw)

    __radd__ = __add__

    def __mul__(self, other):
        other = as_tensor(other, like=self.data)
        out = self.data * other.data

        def bw(g):
            return ((self, _unbroadcast(g * other.data, self.data.shape)),
                    (other, _unbroadcast(g * self.data, other.data.shape)))

        return _make(out, (self, other), bw)

    __rmul__ = __mul__

    def __sub__(self, other):
        other = as_tensor(other, like=self.data)
        out = self.data - other.data

        def bw(g):
            return ((self, _unbroadcast(g, self.data.shape)),
                    (other, _unbroadcast(-g, other.data.shape)))

        return _make(out, (self, other), bw)

    def __rsub__(self, other):
        return as_tensor(other, like=self.data) - self

    def __neg__(self):
        def bw(g):
            return ((self, -g),)

        return _make(-self.data, (self,), bw)

    def __truediv__(self, other):
        other = as_tensor(other, like=self.data)
        out = self.data / other.data

        def bw(g):
            return ((self, _unbroadcast(g / other.data, self.data.shape)),
                    (other, _unbroadcast(-g * self.data / (other.data * other.data),
                                         other.data.shape)))

        return _make(out, (self, other), bw)

    def __rtruediv__(self, other):
        return as_tensor(other, like=self.data) / self

    def __matmul__(self, other):
        other = as_tensor(other, like=self.data)
        if self.data.ndim != 2 or other.data.ndim != 2:
            raise ValueError("matmul supports 2-D operands only, got %r @ %r"
                             % (self.shape, other.shape))
        out = self.data @ other.data

        def bw(g):
            return ((self, g @ other.data.T), (other, self.data.T @ g))

        return _make(out, (self, other), bw)

    matmul = __matmul__

    # -- shape ---------------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        orig = self.data.shape
        out = self.data.reshape(shape)

        def bw(g):
            return ((self, g.reshape(orig)),)

        return _make(out, (self,), bw)

    def transpose(self, *axes):
        if not axes:
            axes = tuple(reversed(range(self.data.ndim)))
        elif len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        inv = np.argsort(axes)

        def bw(g):
            return ((self, g.transpose(inv)),)

        return _make(self.data.transpose(axes), (self,), bw)

    def __getitem__(self, idx):
        _check_basic_index(idx)
        out = self.data[idx]
        shape = self.data.shape

        def bw(g):
            full = np.zeros(shape, dtype=g.dtype)
            full[idx] += g
            return ((self, full),)

        return _make(out, (self,), bw)

    # -- reductions ----------------------------------------------------

    def sum(self, axis=None, keepdims=False):
        out = self.data.sum(axis=axis, keepdims=keepdims)
        shape = self.data.shape

        def bw(g):
            return ((self, _spread(g, shape, axis, keepdims)),)

        return _make(out, (self,), bw)

    def mean(self, axis=None, keepdims=False):
        out = self.data.mean(axis=axis, keepdims=keepdims)
        shape = self.data.shape
        count = self.data.size if axis is None else _axis_count(shape, axis)

        def bw(g):
            return ((self, _spread(g, shape, axis, keepdims) / count),)

        return _make(out, (self,), bw)

    # -- elementwise ---------------------------------------------------

    def exp(self):
        out = np.exp(self.data)

        def bw(g):
            return ((self, g * out),)

        return _make(out, (self,), bw)

    def log(self):
        def bw(g):
            return ((self, g / self.data),)

        return _make(np.log(self.data), (self,), bw)

    def sqrt(self):
        out = np.sqrt(self.data)

        def bw(g):
            return ((self, g / (2.0 * out)),)

        return _make(out, (self,), bw)

    def tanh(self):
        out = np.tanh(self.data)

        def bw(g):
            return ((self, g * (1.0 - out * out)),)

        return _make(out, (self,), bw)

    def sigmoid(self):
        # 0.5*(1 + tanh(x/2)) avoids overflow in exp for large |x|
        out = 0.5 * (1.0 + np.tanh(0.5 * self.data))

        def bw(g):
            return ((self, g * out * (1.0 - out)),)

        return _make(out, (self,), bw)

    def relu(self):
        out = np.maximum(self.data, 0.0)

        def bw(g):
            return ((self, g * (self.data > 0)),)

        return _make(out, (self,), bw)


def as_tensor(x, like=None):
    if isinstance(x, Tensor):
        return x
    t = Tensor.__new__(Tensor)
    t.data = _as_array(x, like=like)
    t.grad = None
    t.requires_grad = False
    t._parents = ()
    t._backward = None
    return t


def _make(data, parents, backward):
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = tuple(p for p in parents if p.requires_grad)
        out._backward = backward
    else:
        out._parents = ()
        out._backward = None
    return out


def _unbroadcast(g, shape):
    """Sum a broadcast gradient back down to the operand's shape."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _spread(g, shape, axis, keepdims):
    """Broadcast a reduction gradient back to the input shape."""
    if axis is not None and not keepdims:
        axes = axis if isinstance(axis, tuple) else (axis,)
        for ax in sorted(a % len(shape) for a in axes):
            g = np.expand_dims(g, ax)
    return np.broadcast_to(g, shape)


def _axis_count(shape, axis):
    axes = axis if isinstance(axis, tuple) else (axis,)
    n = 1
    for ax in axes:
        n *= shape[ax % len(shape)]
    return n


def _check_basic_index(idx):
    items = idx if isinstance(idx, tuple) else (idx,)
    for it in items:
        if isinstance(it, (list, np.ndarray)):
            raise TypeError("only basic indexing is supported (no index arrays)")


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bw(g):
        pairs = []
        for t, a, b in zip(tensors, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(a, b)
            pairs.append((t, g[tuple(sl)]))
        return pairs

    return _make(out, tuple(tensors), bw)


def softmax(x, axis=-1):
    shift = as_tensor(x.data.max(axis=axis, keepdims=True))
    z = (x - shift).exp()
    return z / z.sum(axis=axis, keepdims=True)


def log_softmax(x, axis=-1):
    shift = as_tensor(x.data.max(axis=axis, keepdims=True))
    s = x - shift
    return s - s.exp().sum(axis=axis, keepdims=True).log()


def backward(loss):
    """Accumulate d(loss)/dt into .grad for every reachable tensor."""
    if loss.data.size != 1:
        raise ValueError("backward requires a scalar loss, got shape %r" % (loss.shape,))
    if not loss.requires_grad:
        return

    topo = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))

    pending = {id(loss): np.ones_like(loss.data)}
    for node in reversed(topo):
        g = pending.pop(id(node), None)
        if g is None:
            continue
        if node.grad is None:
            node.grad = np.zeros_like(node.data)
        node.grad += g
        if node._backward is None:
            continue
        for parent, pg in node._backward(g):
            if not parent.requires_grad:
                continue
            key = id(parent)
            if key in pending:
                pending[key] = pending[key] + pg
            else:
                pending[key] = pg


def finite_difference_check(f, x, step=1e-5):
    """Compare analytic gradients of a scalar-valued f against central differences.

    Returns the max over elements of |analytic - numeric| relative to
    max(|analytic|, |numeric|, 1e-8).  f must be deterministic.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    x.requires_grad = True
    x.zero_grad()
    out = f(x)
    backward(out)
    analytic = x.grad.copy()

    numeric = np.zeros_like(x.data)
    flat = x.data.ravel()
    nflat = numeric.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        fp = float(f(x).data)
        flat[i] = orig - step
        fm = float(f(x).data)
        flat[i] = orig
        nflat[i] = (fp - fm) / (2.0 * step)

    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))
