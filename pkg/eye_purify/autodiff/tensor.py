"""Dense tensors with reverse-mode differentiation.

A Tensor wraps a numpy array. Every differentiable operation is a
Function subclass; applying it records the Function as the result's
context so that `backward` can walk the graph from a scalar root back to
the leaves.
"""

from contextlib import contextmanager
import logging
import threading

import numpy as np

from eye_purify import exceptions, settings


logger = logging.getLogger(__name__)

_grad_state = threading.local()


def is_grad_enabled():
    return getattr(_grad_state, 'enabled', True)


@contextmanager
def no_grad():
    """Evaluate without recording a graph, e.g. for inference or frozen targets."""
    previous = is_grad_enabled()
    _grad_state.enabled = False
    try:
        yield
    finally:
        _grad_state.enabled = previous


def default_dtype():
    return np.dtype(settings.DTYPE)


def unbroadcast(grad, shape):
    """Sum grad down to shape, undoing numpy broadcasting."""
    if grad.shape == tuple(shape):
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, dim in enumerate(shape) if dim == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Function(object):
    """One recorded operation: forward on arrays, backward to input gradients."""

    def __init__(self, *inputs):
        self.inputs = inputs
        self.needs_grad = tuple(t.requires_grad for t in inputs)

    def forward(self, *arrays, **kwargs):
        raise NotImplementedError

    def backward(self, grad):
        """Return one gradient array (or None) per input."""
        raise NotImplementedError

    @classmethod
    def apply(cls, *inputs, **kwargs):
        tensors = tuple(as_tensor(t) for t in inputs)
        fn = cls(*tensors)
        out = fn.forward(*(t.data for t in tensors), **kwargs)
        if settings.CHECK_FINITE and not np.all(np.isfinite(out)):
            if all(np.all(np.isfinite(t.data)) for t in tensors):
                raise exceptions.NumericalError(
                    "{} produced non-finite values from finite inputs".format(cls.__name__))
        requires_grad = is_grad_enabled() and any(fn.needs_grad)
        result = Tensor(out, requires_grad=requires_grad)
        if requires_grad:
            result._ctx = fn
        return result


class Tensor(object):
    """N-dimensional array of floats with optional gradient tracking."""

    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        if dtype is not None:
            array = np.asarray(data, dtype=dtype)
        elif isinstance(data, np.ndarray) and data.dtype in (np.float32, np.float64):
            array = data
        else:
            array = np.asarray(data, dtype=default_dtype())
        self.data = array
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._ctx = None

    # -- introspection --

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    @property
    def is_leaf(self):
        return self._ctx is None

    def numpy(self):
        return self.data

    def item(self):
        return self.data.item()

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return "Tensor(shape={}, dtype={}, requires_grad={})".format(
            self.shape, self.dtype, self.requires_grad)

    def __len__(self):
        return self.shape[0]

    # -- graph --

    def backward(self):
        graph = Graph.from_root(self)
        return backward(graph, self)

    # -- arithmetic --

    def _lift(self, other):
        if isinstance(other, Tensor):
            return other
        return Tensor(np.asarray(other, dtype=self.dtype))

    def __add__(self, other):
        from eye_purify.autodiff import functional
        return functional.Add.apply(self, self._lift(other))

    def __radd__(self, other):
        return self._lift(other) + self

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) + (-self)

    def __mul__(self, other):
        from eye_purify.autodiff import functional
        return functional.Mul.apply(self, self._lift(other))

    def __rmul__(self, other):
        return self._lift(other) * self

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return self * other ** -1
        return self * (1.0 / other)

    def __neg__(self):
        from eye_purify.autodiff import functional
        return functional.Neg.apply(self)

    def __pow__(self, exponent):
        from eye_purify.autodiff import functional
        return functional.PowScalar.apply(self, exponent=float(exponent))

    def __matmul__(self, other):
        from eye_purify.autodiff import functional
        return functional.MatMul.apply(self, self._lift(other))

    def __getitem__(self, index):
        from eye_purify.autodiff import functional
        return functional.GetItem.apply(self, index=index)

    # -- reductions and views --

    def sum(self, axis=None, keepdims=False):
        from eye_purify.autodiff import functional
        return functional.Sum.apply(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        if axis is None:
            count = self.size
        else:
            axes = axis if isinstance(axis, tuple) else (axis,)
            count = int(np.prod([self.shape[a] for a in axes]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def reshape(self, *shape):
        from eye_purify.autodiff import functional
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return functional.Reshape.apply(self, shape=shape)

    def transpose(self, *axes):
        from eye_purify.autodiff import functional
        if not axes:
            axes = tuple(reversed(range(self.ndim)))
        elif len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return functional.Transpose.apply(self, axes=axes)

    @property
    def T(self):
        return self.transpose()


def as_tensor(value):
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


class Graph(object):
    """Topologically ordered nodes reachable from a root; inputs come before outputs."""

    def __init__(self, nodes):
        self.nodes = nodes

    def __len__(self):
        return len(self.nodes)

    @classmethod
    def from_root(cls, root):
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
            if node._ctx is not None:
                for parent in reversed(node._ctx.inputs):
                    if parent.requires_grad and id(parent) not in visited:
                        stack.append((parent, False))
        return cls(order)


def backward(graph, root):
    """Propagate d(root)/d(node) through graph; leaves accumulate into .grad.

    Returns a dict mapping each leaf that received a gradient to that gradient.
    """
    if root.size != 1:
        raise exceptions.ShapeError("backward needs a scalar root", expected=(), actual=root.shape)
    grads = {id(root): np.ones_like(root.data)}
    leaves = {}
    for node in reversed(graph.nodes):
        grad = grads.pop(id(node), None)
        if grad is None:
            continue
        if node._ctx is None:
            if node.requires_grad:
                node.grad = grad if node.grad is None else node.grad + grad
                leaves[node] = node.grad
            continue
        fn = node._ctx
        for parent, parent_grad in zip(fn.inputs, fn.backward(grad)):
            if parent_grad is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + parent_grad
            else:
                grads[key] = parent_grad
    return leaves
