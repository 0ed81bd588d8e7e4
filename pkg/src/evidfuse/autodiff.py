"""Reverse-mode differentiation over dense numpy arrays.

A :class:`Tensor` records the operations applied to it; calling
``backward()`` on a scalar result sweeps the recorded graph once and
accumulates d(result)/d(leaf) into each leaf's ``grad``. Non-Tensor
operands (floats, ndarrays) are treated as constants, so label grids and
schedule weights stay off the tape.

The module-level helpers (:func:`asum`, :func:`alog`, ...) dispatch on the
argument type, which lets the loss functions in :mod:`evidfuse.training`
run unchanged on plain arrays (for oracle tests) and on Tensors (for
training). Everything is float64: the finite-difference checks that gate
the engine need more headroom than float32 offers.
"""

from __future__ import annotations

import numpy as np


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` after a broadcasted forward op."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """A float64 array plus the backward closure that produced it."""

    __slots__ = ("data", "grad", "_backward", "_prev")

    def __init__(self, data, _prev=()):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = np.zeros_like(self.data)
        self._backward = lambda: None
        self._prev = _prev

    @property
    def shape(self):
        return self.data.shape

    # -- binary ops ----------------------------------------------------

    def __add__(self, other):
        if isinstance(other, Tensor):
            out = Tensor(self.data + other.data, (self, other))

            def _backward():
                self.grad += _unbroadcast(out.grad, self.data.shape)
                other.grad += _unbroadcast(out.grad, other.data.shape)

        else:
            out = Tensor(self.data + other, (self,))

            def _backward():
                self.grad += _unbroadcast(out.grad, self.data.shape)

        out._backward = _backward
        return out

    __radd__ = __add__

    def __mul__(self, other):
        if isinstance(other, Tensor):
            out = Tensor(self.data * other.data, (self, other))

            def _backward():
                self.grad += _unbroadcast(out.grad * other.data, self.data.shape)
                other.grad += _unbroadcast(out.grad * self.data, other.data.shape)

        else:
            const = np.asarray(other, dtype=np.float64)
            out = Tensor(self.data * const, (self,))

            def _backward():
                self.grad += _unbroadcast(out.grad * const, self.data.shape)

        out._backward = _backward
        return out

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-other if isinstance(other, Tensor) else -np.asarray(other))

    def __rsub__(self, other):
        return (-self) + other

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            out = Tensor(self.data / other.data, (self, other))

            def _backward():
                self.grad += _unbroadcast(out.grad / other.data, self.data.shape)
                other.grad += _unbroadcast(
                    -out.grad * self.data / (other.data * other.data),
                    other.data.shape,
                )

        else:
            const = np.asarray(other, dtype=np.float64)
            out = Tensor(self.data / const, (self,))

            def _backward():
                self.grad += _unbroadcast(out.grad / const, self.data.shape)

        out._backward = _backward
        return out

    def __rtruediv__(self, other):
        const = np.asarray(other, dtype=np.float64)
        out = Tensor(const / self.data, (self,))

        def _backward():
            self.grad += _unbroadcast(
                -out.grad * const / (self.data * self.data), self.data.shape
            )

        out._backward = _backward
        return out

    def __matmul__(self, other):
        out = Tensor(self.data @ other.data, (self, other))

        def _backward():
            self.grad += out.grad @ other.data.T
            other.grad += self.data.T @ out.grad

        out._backward = _backward
        return out

    # -- elementwise nonlinearities ------------------------------------

    def tanh(self):
        t = np.tanh(self.data)
        out = Tensor(t, (self,))

        def _backward():
            self.grad += out.grad * (1.0 - t * t)

        out._backward = _backward
        return out

    def softplus(self):
        out = Tensor(np.logaddexp(0.0, self.data), (self,))
        sig = _stable_sigmoid(self.data)

        def _backward():
            self.grad += out.grad * sig

        out._backward = _backward
        return out

    def log(self):
        out = Tensor(np.log(self.data), (self,))

        def _backward():
            self.grad += out.grad / self.data

        out._backward = _backward
        return out

    def clip_min(self, lo):
        out = Tensor(np.maximum(self.data, lo), (self,))
        mask = self.data > lo

        def _backward():
            self.grad += out.grad * mask

        out._backward = _backward
        return out

    def clip_max(self, hi):
        out = Tensor(np.minimum(self.data, hi), (self,))
        mask = self.data < hi

        def _backward():
            self.grad += out.grad * mask

        out._backward = _backward
        return out

    # -- reductions ----------------------------------------------------

    def sum(self, axis=None, keepdims=False):
        out = Tensor(self.data.sum(axis=axis, keepdims=keepdims), (self,))

        def _backward():
            g = out.grad
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            self.grad += np.broadcast_to(g, self.data.shape)

        out._backward = _backward
        return out

    def mean(self, axis=None, keepdims=False):
        count = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) / float(count)

    # -- backward sweep ------------------------------------------------

    def backward(self):
        if self.data.ndim != 0:
            raise ValueError("backward() starts from a scalar result")
        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._prev:
                if id(parent) not in visited:
                    stack.append((parent, False))
        self.grad = np.array(1.0)
        for node in reversed(topo):
            node._backward()

    def __repr__(self):
        return f"Tensor(shape={self.data.shape})"


def _stable_sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    pos = x >= 0
    ex = np.exp(np.where(pos, -x, x))
    return np.where(pos, 1.0 / (1.0 + ex), ex / (1.0 + ex))


# -- type-dispatching helpers used by the shared loss code -------------


def asum(x, axis=None, keepdims=False):
    if isinstance(x, Tensor):
        return x.sum(axis=axis, keepdims=keepdims)
    return np.sum(x, axis=axis, keepdims=keepdims)


def alog(x):
    return x.log() if isinstance(x, Tensor) else np.log(x)


def aclip(x, lo, hi):
    if isinstance(x, Tensor):
        return x.clip_min(lo).clip_max(hi)
    return np.clip(x, lo, hi)


def atanh(x):
    return x.tanh() if isinstance(x, Tensor) else np.tanh(x)


def asoftplus(x):
    return x.softplus() if isinstance(x, Tensor) else np.logaddexp(0.0, x)


def value_of(x):
    """The plain float64 payload of a Tensor or array-like."""
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)
