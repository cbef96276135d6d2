"""Reverse-mode differentiation over numpy arrays.

A :class:`Tensor` wraps an ``np.ndarray`` and, when produced by an operation,
remembers its parents and a closure that pushes its gradient back to them.
Calling :meth:`Tensor.backward` on a scalar walks the recorded graph in
reverse topological order.
"""

from __future__ import annotations

from typing import Callable, Iterable, Optional, Sequence

import numpy as np


class ShapeError(ValueError):
    pass


def _as_array(value, dtype=None) -> np.ndarray:
    arr = np.asarray(value, dtype=dtype)
    if arr.dtype.kind not in "f":
        arr = arr.astype(np.float64)
    return arr


class Tensor:
    """A node in the differentiation graph.

    Leaves are created directly by the user; non-leaves are created by the
    functions in :mod:`darn.engine.ops` and carry a ``_backward`` closure.
    """

    __array_priority__ = 100  # make ndarray <op> Tensor defer to Tensor

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        parents: Sequence["Tensor"] = (),
        backward: Optional[Callable[[np.ndarray], None]] = None,
        name: str = "",
    ):
        self.data = _as_array(data)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self._parents = tuple(parents)
        self._backward = backward
        self.name = name

    # -- basic properties -------------------------------------------------
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

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def __repr__(self):
        grad = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{grad})"

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self):
        self.grad = None

    # -- gradient plumbing ------------------------------------------------
    def _accumulate(self, g: np.ndarray):
        if g.shape != self.data.shape:
            raise ShapeError(f"gradient shape {g.shape} != tensor shape {self.data.shape}")
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def backward(self, grad: Optional[np.ndarray] = None):
        """Populate ``.grad`` of every reachable leaf with ``requires_grad``.

        Gradients accumulate: calling backward twice without resetting
        doubles the stored gradients.
        """
        if grad is None:
            if self.data.size != 1:
                raise ShapeError(
                    f"backward() without an explicit seed needs a scalar root, got shape {self.shape}"
                )
            grad = np.ones_like(self.data)
        else:
            grad = _as_array(grad, self.data.dtype)
            if grad.shape != self.data.shape:
                raise ShapeError(f"seed shape {grad.shape} != root shape {self.shape}")
        if not self.requires_grad:
            return

        order = _topological_order(self)
        # interior adjoints live here so leaves are the only tensors whose
        # .grad is mutated
        adjoints: dict[int, np.ndarray] = {id(self): grad}
        for node in reversed(order):
            g = adjoints.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node._accumulate(g)
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in adjoints:
                    adjoints[key] = adjoints[key] + pg
                else:
                    adjoints[key] = pg

    # -- operator sugar (implemented in ops) -------------------------------
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from . import ops
        return ops.add(other, self)

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    def __rmul__(self, other):
        from . import ops
        return ops.mul(other, self)

    def __truediv__(self, other):
        from . import ops
        return ops.div(self, other)

    def __neg__(self):
        from . import ops
        return ops.mul(self, -1.0)

    def __getitem__(self, index):
        from . import ops
        return ops.getitem(self, index)

    def reshape(self, *shape):
        from . import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def sum(self):
        from . import ops
        return ops.reduce(self, "sum")

    def mean(self):
        from . import ops
        return ops.reduce(self, "mean")


def _topological_order(root: Tensor) -> list[Tensor]:
    """Iterative DFS post-order restricted to nodes that need gradients."""
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def as_tensor(value, dtype=None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(_as_array(value, dtype))


def parameters_requiring_grad(tensors: Iterable[Tensor]) -> list[Tensor]:
    return [t for t in tensors if t.requires_grad]
