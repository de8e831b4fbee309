"""Dense float64 tensors with reverse-mode differentiation.

A ``Tensor`` wraps a read-only numpy array. Every differentiable primitive is a
``Function`` subclass: ``forward`` works on plain arrays, ``backward`` maps the
gradient of the output to gradients of the inputs. Applying a function records
it as the creator of its output, so the creators reachable from a result form
the computation tape that ``Tape`` replays in reverse topological order.
"""
from __future__ import annotations

import logging
from abc import abstractmethod
from collections.abc import Sequence
from typing import Any, Union

import numpy as np

from cea_kit.core.errors import DimensionError

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, float, int, Sequence[float], Sequence[Sequence[float]]]


class Function:
    """Base class for differentiable primitives."""

    def __init__(self, *inputs: "Tensor"):
        self.inputs = inputs

    @abstractmethod
    def forward(self, *arrays: np.ndarray, **kwargs: Any) -> np.ndarray:
        """Compute the output array from the input arrays."""
        raise NotImplementedError("Forward pass not implemented for this function")

    @abstractmethod
    def backward(self, grad: np.ndarray) -> tuple[np.ndarray | None, ...]:
        """Return dL/d(input) for every input, given dL/d(output).

        Entries for inputs that do not require gradients may be ``None``.
        """
        raise NotImplementedError("Backward pass not implemented for this function")

    @classmethod
    def apply(cls, *inputs: "Tensor", **kwargs: Any) -> "Tensor":
        """Run ``forward`` on the input data and wrap the result.

        The output only keeps a reference to this function (and therefore to
        the inputs) when at least one input requires gradients.
        """
        func = cls(*inputs)
        out_data = func.forward(*(t.data for t in inputs), **kwargs)
        requires_grad = any(t.requires_grad for t in inputs)
        return Tensor(out_data, requires_grad=requires_grad, _creator=func if requires_grad else None)

    @staticmethod
    def unbroadcast(grad: np.ndarray, to_shape: tuple[int, ...]) -> np.ndarray:
        """Sum out broadcast dimensions so ``grad`` matches ``to_shape``."""
        if grad.shape == to_shape:
            return grad
        while grad.ndim > len(to_shape):
            grad = grad.sum(axis=0)
        for dim, size in enumerate(to_shape):
            if size == 1 and grad.shape[dim] != 1:
                grad = grad.sum(axis=dim, keepdims=True)
        return grad


class Tensor:
    """Immutable dense float64 array that can take part in differentiation."""

    # Make `ndarray <op> Tensor` defer to Tensor's reflected operators.
    __array_priority__ = 1000

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        name: str | None = None,
        _creator: Function | None = None,
    ):
        if _creator is None:
            array = np.array(data, dtype=np.float64, copy=True)
        else:
            array = np.asarray(data, dtype=np.float64)
        array.flags.writeable = False
        self.data: np.ndarray = array
        self.requires_grad = requires_grad
        self.name = name
        self.creator = _creator
        self.grad: np.ndarray | None = None

    # ------------------------------------------------------------------
    # Introspection
    # ------------------------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def is_leaf(self) -> bool:
        return self.creator is None

    def numpy(self) -> np.ndarray:
        """Writable copy of the data."""
        return self.data.copy()

    def item(self) -> float:
        if self.size != 1:
            raise DimensionError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False, name=self.name)

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{label})"

    # ------------------------------------------------------------------
    # Mutation (optimizer / finite differences only)
    # ------------------------------------------------------------------
    def assign(self, data: ArrayLike) -> None:
        """Replace the data of a leaf tensor, keeping its identity.

        Used by optimizers between steps and by the finite-difference oracle;
        tensors produced by an operation are never reassigned.
        """
        if not self.is_leaf:
            raise DimensionError("only leaf tensors can be reassigned")
        array = np.array(data, dtype=np.float64, copy=True)
        if array.shape != self.shape:
            raise DimensionError(f"cannot assign shape {array.shape} to tensor of shape {self.shape}")
        array.flags.writeable = False
        self.data = array

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, grad: np.ndarray) -> None:
        if grad.shape != self.shape:
            raise DimensionError(f"gradient shape {grad.shape} does not match tensor shape {self.shape}")
        self.grad = grad.copy() if self.grad is None else self.grad + grad

    # ------------------------------------------------------------------
    # Differentiation
    # ------------------------------------------------------------------
    def backward(self, grad: ArrayLike | None = None) -> None:
        """Accumulate d(self)/d(leaf) into ``.grad`` of every leaf requiring grad."""
        tape = Tape.record(self)
        for leaf, leaf_grad in tape.backward(grad).items():
            leaf._accumulate(leaf_grad)

    # ------------------------------------------------------------------
    # Operators
    # ------------------------------------------------------------------
    def __add__(self, other: Any) -> "Tensor":
        from cea_kit.autograd import functional as F

        return F.add(self, other)

    def __radd__(self, other: Any) -> "Tensor":
        from cea_kit.autograd import functional as F

        return F.add(other, self)

    def __sub__(self, other: Any) -> "Tensor":
        from cea_kit.autograd import functional as F

        return F.sub(self, other)

    def __rsub__(self, other: Any) -> "Tensor":
        from cea_kit.autograd import functional as F

        return F.sub(other, self)

    def __mul__(self, other: Any) -> "Tensor":
        from cea_kit.autograd import functional as F

        return F.mul(self, other)

    def __rmul__(self, other: Any) -> "Tensor":
        from cea_kit.autograd import functional as F

        return F.mul(other, self)

    def __truediv__(self, other: Any) -> "Tensor":
        from cea_kit.autograd import functional as F

        return F.div(self, other)

    def __rtruediv__(self, other: Any) -> "Tensor":
        from cea_kit.autograd import functional as F

        return F.div(other, self)

    def __neg__(self) -> "Tensor":
        from cea_kit.autograd import functional as F

        return F.neg(self)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        from cea_kit.autograd import functional as F

        return F.matmul(self, other)

    def __getitem__(self, index: Any) -> "Tensor":
        from cea_kit.autograd import functional as F

        return F.getitem(self, index)

    @property
    def T(self) -> "Tensor":
        from cea_kit.autograd import functional as F

        return F.transpose(self)

    def reshape(self, *shape: int) -> "Tensor":
        from cea_kit.autograd import functional as F

        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return F.reshape(self, shape)

    def sum(self, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> "Tensor":
        from cea_kit.autograd import functional as F

        return F.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> "Tensor":
        from cea_kit.autograd import functional as F

        return F.mean(self, axis=axis, keepdims=keepdims)

    def abs(self) -> "Tensor":
        from cea_kit.autograd import functional as F

        return F.absolute(self)


def as_tensor(value: Any) -> Tensor:
    """Wrap arrays and scalars as constant tensors; pass tensors through."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value, requires_grad=False)


class Tape:
    """The computation tape behind one output tensor.

    ``nodes`` lists every tensor that requires gradients and is reachable from
    the output, in topological order (inputs before the tensors computed from
    them). ``backward`` walks it in reverse, visiting each node exactly once.
    """

    def __init__(self, output: Tensor, nodes: list[Tensor]):
        self.output = output
        self.nodes = nodes

    @classmethod
    def record(cls, output: Tensor) -> "Tape":
        nodes: list[Tensor] = []
        visited: set[int] = set()
        if not output.requires_grad:
            return cls(output, nodes)
        # Iterative post-order DFS so deep graphs do not hit the recursion limit.
        stack: list[tuple[Tensor, bool]] = [(output, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                nodes.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            if node.creator is not None:
                for parent in reversed(node.creator.inputs):
                    if parent.requires_grad and id(parent) not in visited:
                        stack.append((parent, False))
        return cls(output, nodes)

    def backward(self, grad: ArrayLike | None = None) -> dict[Tensor, np.ndarray]:
        """Propagate ``grad`` (default: ones) from the output to every leaf.

        Returns a mapping leaf -> gradient without touching ``leaf.grad``.
        """
        if grad is None:
            seed = np.ones_like(self.output.data)
        else:
            seed = np.array(grad, dtype=np.float64)
            if seed.shape != self.output.shape:
                raise DimensionError(
                    f"seed gradient shape {seed.shape} does not match output shape {self.output.shape}"
                )
        if not self.nodes:
            return {}

        grads: dict[int, np.ndarray] = {id(self.output): seed}
        leaves: dict[Tensor, np.ndarray] = {}
        for node in reversed(self.nodes):
            node_grad = grads.pop(id(node), None)
            if node_grad is None:
                continue
            if node.creator is None:
                leaves[node] = node_grad
                continue
            input_grads = node.creator.backward(node_grad)
            for parent, parent_grad in zip(node.creator.inputs, input_grads):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = parent_grad if key not in grads else grads[key] + parent_grad
        return leaves


def grad(output: Tensor, inputs: Sequence[Tensor], seed: ArrayLike | None = None) -> list[np.ndarray]:
    """Gradients of ``output`` with respect to ``inputs``.

    Unlike ``Tensor.backward`` this leaves ``.grad`` untouched, so several
    tapes sharing the same parameters can be differentiated concurrently.
    Inputs that the output does not depend on get a zero gradient.
    """
    leaves = Tape.record(output).backward(seed)
    return [leaves.get(t, np.zeros_like(t.data)) for t in inputs]
