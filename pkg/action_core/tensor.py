"""Dense tensor type with a reverse-mode autodiff tape."""

import threading
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ShapeError

ArrayLike = Union[np.ndarray, Sequence, float, int]
VectorJacobian = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]

_state = threading.local()


def _contiguous(array: np.ndarray) -> np.ndarray:
    # np.ascontiguousarray would promote 0-d arrays to 1-d.
    return array if array.flags.c_contiguous else np.ascontiguousarray(array)


def is_grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


@contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording on the current thread."""
    previous = is_grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


@dataclass
class OpNode:
    """One recorded operation: its kind, its inputs and its vector-Jacobian product."""

    kind: str
    inputs: Tuple["Tensor", ...]
    vjp: VectorJacobian


class Tensor:
    """Immutable dense array in row-major order, optionally tracked for gradients."""

    def __init__(self, data: ArrayLike, requires_grad: bool = False, dtype=None):
        array = np.array(data, dtype=dtype, copy=True) if dtype is not None else np.array(data, copy=True)
        if not np.issubdtype(array.dtype, np.floating):
            array = array.astype(np.float64)
        if any(extent < 1 for extent in array.shape):
            raise ShapeError(f"all extents must be >= 1, got shape {array.shape}")
        self.data: np.ndarray = _contiguous(array)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self._node: Optional[OpNode] = None

    @classmethod
    def _wrap(cls, array: np.ndarray, requires_grad: bool = False) -> "Tensor":
        # Internal constructor for op results: no copy, no dtype coercion.
        out = cls.__new__(cls)
        out.data = _contiguous(array)
        out.requires_grad = requires_grad
        out.grad = None
        out._node = None
        return out

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def precision(self) -> str:
        return "double" if self.data.dtype == np.float64 else "single"

    @property
    def node(self) -> Optional[OpNode]:
        return self._node

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        if self.size != 1:
            raise ShapeError(f"item() needs a single element, tensor has shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, precision={self.precision}{flag})"

    # -- autodiff ---------------------------------------------------------

    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        """Accumulate d(self)/d(leaf) into ``.grad`` of every leaf that requires it."""
        if grad is None:
            if self.size != 1:
                raise ShapeError("backward() without a seed gradient needs a scalar output")
            grad = np.ones_like(self.data)
        grad = np.asarray(grad, dtype=self.data.dtype)
        if grad.shape != self.shape:
            raise ShapeError(f"seed gradient shape {grad.shape} != tensor shape {self.shape}")

        pending = {id(self): grad}
        for tensor in reversed(self._topological_order()):
            upstream = pending.pop(id(tensor), None)
            if upstream is None:
                continue
            if tensor._node is None:
                if tensor.requires_grad:
                    tensor.grad = upstream.copy() if tensor.grad is None else tensor.grad + upstream
                continue
            input_grads = tensor._node.vjp(upstream)
            for source, source_grad in zip(tensor._node.inputs, input_grads):
                if source_grad is None or not source.requires_grad:
                    continue
                key = id(source)
                pending[key] = source_grad if key not in pending else pending[key] + source_grad

    def _topological_order(self) -> List["Tensor"]:
        order: List[Tensor] = []
        visited = set()
        stack: List[Tuple[Tensor, bool]] = [(self, False)]
        while stack:
            tensor, expanded = stack.pop()
            if expanded:
                order.append(tensor)
                continue
            if id(tensor) in visited:
                continue
            visited.add(id(tensor))
            stack.append((tensor, True))
            if tensor._node is not None:
                for source in tensor._node.inputs:
                    if source.requires_grad and id(source) not in visited:
                        stack.append((source, False))
        return order

    # -- operator sugar ---------------------------------------------------

    def __add__(self, other) -> "Tensor":
        from . import ops

        return ops.add_tensors(self, other)

    __radd__ = __add__

    def __sub__(self, other) -> "Tensor":
        from . import ops

        return ops.add_tensors(self, ops.scale(other, -1.0))

    def __rsub__(self, other) -> "Tensor":
        from . import ops

        return ops.add_tensors(ops.scale(self, -1.0), other)

    def __neg__(self) -> "Tensor":
        from . import ops

        return ops.scale(self, -1.0)

    def __mul__(self, other) -> "Tensor":
        from . import ops

        return ops.multiply(self, other)

    __rmul__ = __mul__

    def sum(self) -> "Tensor":
        from . import ops

        return ops.sum_all(self)


class Parameter(Tensor):
    """Learnable tensor with gradient and momentum buffers of identical shape."""

    def __init__(self, value: ArrayLike, name: str = "", dtype=None):
        super().__init__(value, requires_grad=True, dtype=dtype)
        self.name = name
        self.grad = np.zeros_like(self.data)
        self.velocity = np.zeros_like(self.data)

    @property
    def value(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def assign(self, value: np.ndarray) -> None:
        value = np.asarray(value, dtype=self.data.dtype)
        if value.shape != self.data.shape:
            raise ShapeError(f"cannot assign shape {value.shape} to parameter '{self.name}' of shape {self.shape}")
        self.data[...] = value

    def __repr__(self) -> str:
        return f"Parameter(name={self.name!r}, shape={self.shape}, precision={self.precision})"


def record(kind: str, data: np.ndarray, inputs: Sequence[Tensor], vjp: VectorJacobian) -> Tensor:
    """Wrap an op result and, when any input is tracked, attach its tape node."""
    tracked = is_grad_enabled() and any(t.requires_grad for t in inputs)
    out = Tensor._wrap(data, requires_grad=tracked)
    if tracked:
        out._node = OpNode(kind, tuple(inputs), vjp)
    return out


def as_tensor(value: Union[Tensor, ArrayLike], dtype=None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value, dtype=dtype)
