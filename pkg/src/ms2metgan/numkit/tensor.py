"""Minimal reverse-mode autograd over float64 numpy arrays.

Supports exactly the operations the models here need: broadcasting
arithmetic, matmul, reshaping, reductions, tanh/relu/softmax, and
integer-array indexing for embedding lookups. Backward runs over an
iteratively built topological order, so deep graphs do not hit the
recursion limit.
"""
from __future__ import annotations

import numpy as np


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """Array node in an autograd graph.

    Parameters
    ----------
    data : array-like
        Converted to a float64 ndarray.
    requires_grad : bool
        Leaf tensors accumulate into ``.grad`` during backward only when
        this is set. Interior nodes always propagate.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, grad={self.grad is not None})"

    # -- graph plumbing -----------------------------------------------------

    def _topo_order(self) -> list[Tensor]:
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                stack.append((parent, False))
        return order

    def backward(self) -> None:
        """Accumulate gradients of this (scalar or summed) value into leaves."""
        order = self._topo_order()
        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is not None:
                for parent, pg in zip(node._parents, node._backward(g)):
                    if pg is None:
                        continue
                    key = id(parent)
                    if key in grads:
                        grads[key] = grads[key] + pg
                    else:
                        grads[key] = pg
            elif node.requires_grad:
                node.grad = g if node.grad is None else node.grad + g

    # -- arithmetic ---------------------------------------------------------

    def _coerce(self, other) -> Tensor:
        return other if isinstance(other, Tensor) else Tensor(other)

    def __add__(self, other) -> Tensor:
        other = self._coerce(other)
        a, b = self, other
        return Tensor(
            a.data + b.data,
            _parents=(a, b),
            _backward=lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)),
        )

    __radd__ = __add__

    def __neg__(self) -> Tensor:
        a = self
        return Tensor(-a.data, _parents=(a,), _backward=lambda g: (-g,))

    def __sub__(self, other) -> Tensor:
        return self + (-self._coerce(other))

    def __rsub__(self, other) -> Tensor:
        return self._coerce(other) + (-self)

    def __mul__(self, other) -> Tensor:
        other = self._coerce(other)
        a, b = self, other
        return Tensor(
            a.data * b.data,
            _parents=(a, b),
            _backward=lambda g: (
                _unbroadcast(g * b.data, a.data.shape),
                _unbroadcast(g * a.data, b.data.shape),
            ),
        )

    __rmul__ = __mul__

    def __truediv__(self, other) -> Tensor:
        other = self._coerce(other)
        a, b = self, other
        return Tensor(
            a.data / b.data,
            _parents=(a, b),
            _backward=lambda g: (
                _unbroadcast(g / b.data, a.data.shape),
                _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape),
            ),
        )

    def __pow__(self, exponent: float) -> Tensor:
        # scalar exponent only
        a = self
        e = float(exponent)
        out = a.data**e
        return Tensor(
            out,
            _parents=(a,),
            _backward=lambda g: (g * e * a.data ** (e - 1.0),),
        )

    def __matmul__(self, other) -> Tensor:
        other = self._coerce(other)
        a, b = self, other

        def back(g: np.ndarray):
            # mirror numpy's 1-D promotion: a row for the left operand, a
            # column for the right, with the added axis removed again below
            a1 = a.data.ndim == 1
            b1 = b.data.ndim == 1
            ad = a.data.reshape(1, -1) if a1 else a.data
            bd = b.data.reshape(-1, 1) if b1 else b.data
            if a1 and b1:
                g2 = g.reshape(1, 1)
            elif a1:
                g2 = np.expand_dims(g, -2)
            elif b1:
                g2 = np.expand_dims(g, -1)
            else:
                g2 = g
            ga = _unbroadcast(np.matmul(g2, np.swapaxes(bd, -1, -2)), ad.shape)
            gb = _unbroadcast(np.matmul(np.swapaxes(ad, -1, -2), g2), bd.shape)
            if a1:
                ga = ga.reshape(a.data.shape)
            if b1:
                gb = gb.reshape(b.data.shape)
            return ga, gb

        return Tensor(np.matmul(a.data, b.data), _parents=(a, b), _backward=back)

    # -- shaping ------------------------------------------------------------

    def reshape(self, *shape) -> Tensor:
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        a = self
        old = a.data.shape
        return Tensor(
            a.data.reshape(shape),
            _parents=(a,),
            _backward=lambda g: (g.reshape(old),),
        )

    def swapaxes(self, ax1: int, ax2: int) -> Tensor:
        a = self
        return Tensor(
            np.swapaxes(a.data, ax1, ax2),
            _parents=(a,),
            _backward=lambda g: (np.swapaxes(g, ax1, ax2),),
        )

    def __getitem__(self, index) -> Tensor:
        a = self

        def back(g: np.ndarray):
            out = np.zeros_like(a.data)
            np.add.at(out, index, g)
            return (out,)

        return Tensor(a.data[index], _parents=(a,), _backward=back)

    # -- reductions ---------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False) -> Tensor:
        a = self

        def back(g: np.ndarray):
            if axis is None:
                return (np.broadcast_to(g, a.data.shape).copy(),)
            gg = g
            if not keepdims:
                gg = np.expand_dims(gg, axis)
            return (np.broadcast_to(gg, a.data.shape).copy(),)

        return Tensor(a.data.sum(axis=axis, keepdims=keepdims), _parents=(a,), _backward=back)

    def mean(self, axis=None, keepdims: bool = False) -> Tensor:
        if axis is None:
            count = self.data.size
        else:
            count = self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return Tensor(out, _parents=(x,), _backward=lambda g: (g * (1.0 - out * out),))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return Tensor(
        np.where(mask, x.data, 0.0),
        _parents=(x,),
        _backward=lambda g: (np.where(mask, g, 0.0),),
    )


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def back(g: np.ndarray):
        inner = (g * out).sum(axis=axis, keepdims=True)
        return ((g - inner) * out,)

    return Tensor(out, _parents=(x,), _backward=back)
