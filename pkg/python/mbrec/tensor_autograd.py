# This file is part of mbrec.
#
# This program is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU General Public License for more details.
#
# You should have received a copy of the GNU General Public License
# along with this program.  If not, see <https://www.gnu.org/licenses/>.

__all__ = [
    "Parameter",
    "ParameterStore",
    "Node",
    "Tape",
    "build_csr",
    "densify",
]

import typing
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .errors import ConfigurationError, UsageError

SparseMatrix = sparse.csr_matrix


def build_csr(
    rows: typing.Sequence[int] | np.ndarray,
    cols: typing.Sequence[int] | np.ndarray,
    values: typing.Sequence[float] | np.ndarray,
    shape: tuple[int, int],
) -> sparse.csr_matrix:
    """Build the canonical compressed sparse row matrix.

    Duplicated entries are summed, the column indices are sorted inside each
    row and the explicit zeros are removed.

    Parameters
    ----------
    rows : `list` or `numpy.ndarray`
        Row indices.
    cols : `list` or `numpy.ndarray`
        Column indices.
    values : `list` or `numpy.ndarray`
        Values.
    shape : `tuple`
        (rows, cols) of the matrix.

    Returns
    -------
    matrix : `scipy.sparse.csr_matrix`
        Sparse matrix of 64-bit reals.
    """

    matrix = sparse.coo_matrix(
        (
            np.asarray(values, dtype=np.float64),
            (np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64)),
        ),
        shape=shape,
    ).tocsr()
    matrix.sum_duplicates()
    matrix.eliminate_zeros()
    matrix.sort_indices()

    return matrix


def densify(matrix: sparse.csr_matrix) -> np.ndarray:
    """Convert the sparse matrix to a dense array.

    Parameters
    ----------
    matrix : `scipy.sparse.csr_matrix`
        Sparse matrix.

    Returns
    -------
    `numpy.ndarray`
        Dense array.
    """

    return np.asarray(matrix.toarray(), dtype=np.float64)


@dataclass
class Parameter:
    """Trainable array with its gradient slot."""

    name: str
    value: np.ndarray
    init: str = "xavier"
    grad: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.value = np.array(self.value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def zero_grad(self) -> None:
        """Zero the gradient."""
        self.grad = np.zeros_like(self.value)


class ParameterStore(object):
    """Ordered collection of the trainable parameters.

    Attributes
    ----------
    parameters : `dict` [`str`, `Parameter`]
        Parameters in the insertion order.
    """

    def __init__(self) -> None:
        self.parameters: dict[str, Parameter] = dict()

    def add(self, name: str, value: np.ndarray, init: str = "xavier") -> Parameter:
        """Add the parameter.

        Parameters
        ----------
        name : `str`
            Unique name.
        value : `numpy.ndarray`
            Initial value.
        init : `str`, optional
            Initialization scheme tag. (the default is "xavier")

        Returns
        -------
        parameter : `Parameter`
            New parameter.

        Raises
        ------
        `ConfigurationError`
            The name exists already.
        """

        if name in self.parameters:
            raise ConfigurationError(f"Parameter {name} exists already.")

        parameter = Parameter(name, value, init=init)
        self.parameters[name] = parameter

        return parameter

    def __getitem__(self, name: str) -> Parameter:
        return self.parameters[name]

    def __contains__(self, name: str) -> bool:
        return name in self.parameters

    def __iter__(self) -> typing.Iterator[Parameter]:
        return iter(self.parameters.values())

    def __len__(self) -> int:
        return len(self.parameters)

    def names(self) -> list[str]:
        return list(self.parameters.keys())

    def zero_grad(self) -> None:
        """Zero the gradients of all parameters."""

        for parameter in self.parameters.values():
            parameter.zero_grad()

    def get_values(self) -> dict[str, np.ndarray]:
        """Get a frozen copy of the parameter values.

        Returns
        -------
        `dict`
            Copied values by name.
        """

        return {
            name: parameter.value.copy() for name, parameter in self.parameters.items()
        }

    def set_values(self, values: dict[str, np.ndarray]) -> None:
        """Set the parameter values.

        Parameters
        ----------
        values : `dict`
            Values by name. Every parameter must be present with its shape.

        Raises
        ------
        `ConfigurationError`
            Missing parameter or shape mismatch.
        """

        for name, parameter in self.parameters.items():
            if name not in values:
                raise ConfigurationError(f"Missing value of parameter {name}.")

            value = np.asarray(values[name], dtype=np.float64)
            if value.shape != parameter.shape:
                raise ConfigurationError(
                    f"Shape of {name} is {value.shape}, expect {parameter.shape}."
                )

            parameter.value = value.copy()


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum the gradient over the broadcast dimensions."""

    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)

    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)

    return grad


class Node(object):
    """Entry of the tape.

    Parameters
    ----------
    tape : `Tape`
        Owner tape.
    value : `numpy.ndarray`
        Cached forward output.
    tag : `str`
        Operation tag.
    parents : `tuple` [`Node`]
        Input nodes.
    backward_fn : `callable` or None
        Maps the output gradient to one gradient (or None) per input.
    stop_gradient : `bool`
        Propagate nothing to the inputs during backward.
    parameter : `Parameter` or None
        Parameter of a leaf node.

    Attributes
    ----------
    grad : `numpy.ndarray` or None
        Gradient accumulator.
    """

    __array_priority__ = 100

    def __init__(
        self,
        tape: "Tape",
        value: np.ndarray,
        tag: str,
        parents: tuple["Node", ...] = (),
        backward_fn: typing.Callable | None = None,
        stop_gradient: bool = False,
        parameter: Parameter | None = None,
    ) -> None:
        self.tape = tape
        self.value = value
        self.tag = tag
        self.parents = parents
        self.backward_fn = backward_fn
        self.stop_gradient = stop_gradient
        self.parameter = parameter

        self.grad: np.ndarray | None = None

    def __repr__(self) -> str:
        return f"Node({self.tag}, shape={self.value.shape})"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def _lift(self, other: typing.Any) -> "Node":
        return other if isinstance(other, Node) else self.tape.constant(other)

    def __add__(self, other: typing.Any) -> "Node":
        return self.tape.add(self, self._lift(other))

    def __radd__(self, other: typing.Any) -> "Node":
        return self.tape.add(self._lift(other), self)

    def __sub__(self, other: typing.Any) -> "Node":
        return self.tape.sub(self, self._lift(other))

    def __rsub__(self, other: typing.Any) -> "Node":
        return self.tape.sub(self._lift(other), self)

    def __mul__(self, other: typing.Any) -> "Node":
        if isinstance(other, Node):
            return self.tape.mul(self, other)
        return self.tape.scale(self, float(other))

    def __rmul__(self, other: typing.Any) -> "Node":
        return self.__mul__(other)

    def __truediv__(self, other: float) -> "Node":
        return self.tape.scale(self, 1.0 / float(other))

    def __neg__(self) -> "Node":
        return self.tape.scale(self, -1.0)

    def __matmul__(self, other: "Node") -> "Node":
        return self.tape.matmul(self, other)


class Tape(object):
    """Append-only record of the forward operations for reverse-mode
    differentiation.

    All values are 64-bit reals. The order of the nodes is the order of
    creation, so the tape is topologically sorted by construction and the
    backward pass walks it in reverse.

    Parameters
    ----------
    requires_grad : `bool`, optional
        Record the nodes for the backward pass. Use False for inference. (the
        default is True)
    frozen : `list` [`numpy.ndarray`] or None, optional
        Outputs of the stop-gradient nodes of a previous tape of the same
        computation. The i-th stop-gradient node outputs the i-th value
        instead of its input, so finite differences treat the blocked terms
        as constants. (the default is None)

    Attributes
    ----------
    nodes : `list` [`Node`]
        Recorded nodes.
    requires_grad : `bool`
        Record the nodes or not.
    frozen : `list` or None
        Replayed stop-gradient outputs.
    stopped : `list` [`numpy.ndarray`]
        Outputs of the stop-gradient nodes in the creation order.
    """

    def __init__(
        self, requires_grad: bool = True, frozen: list[np.ndarray] | None = None
    ) -> None:
        self.requires_grad = requires_grad
        self.frozen = frozen
        self.nodes: list[Node] = list()
        self.stopped: list[np.ndarray] = list()

        self._leaves: dict[int, Node] = dict()

    def _record(
        self,
        value: np.ndarray,
        tag: str,
        parents: tuple[Node, ...] = (),
        backward_fn: typing.Callable | None = None,
        stop_gradient: bool = False,
        parameter: Parameter | None = None,
    ) -> Node:
        if not self.requires_grad:
            return Node(self, value, tag)

        node = Node(
            self,
            value,
            tag,
            parents=parents,
            backward_fn=backward_fn,
            stop_gradient=stop_gradient,
            parameter=parameter,
        )
        self.nodes.append(node)

        return node

    def constant(self, value: typing.Any) -> Node:
        """Constant leaf.

        Parameters
        ----------
        value : `any`
            Scalar or array.

        Returns
        -------
        `Node`
            Leaf node without gradient flow.
        """
        return self._record(np.array(value, dtype=np.float64), "constant")

    def parameter(self, parameter: Parameter) -> Node:
        """Leaf of the parameter. The same parameter always maps to the same
        leaf on one tape.

        Parameters
        ----------
        parameter : `Parameter`
            Parameter.

        Returns
        -------
        `Node`
            Leaf node whose gradient is written into the parameter by
            backward().
        """

        key = id(parameter)
        if key not in self._leaves:
            self._leaves[key] = self._record(
                parameter.value, "parameter", parameter=parameter
            )

        return self._leaves[key]

    def backward(self, loss: Node) -> None:
        """Propagate the gradient of the scalar loss to every reachable
        parameter.

        Parameters
        ----------
        loss : `Node`
            Scalar node recorded on this tape.

        Raises
        ------
        `UsageError`
            The loss is not a scalar or was not recorded on this tape.
        """

        if loss.value.size != 1:
            raise UsageError(
                f"Backward needs a scalar loss, got the shape {loss.value.shape}."
            )

        if (not self.requires_grad) or (loss.tape is not self):
            raise UsageError("Loss was not recorded on this tape.")

        for node in self.nodes:
            node.grad = None

        loss.grad = np.ones_like(loss.value)

        for node in reversed(self.nodes):
            if node.grad is None:
                continue

            if node.parameter is not None:
                node.parameter.grad = node.parameter.grad + node.grad
                continue

            if node.stop_gradient or (node.backward_fn is None):
                continue

            for parent, grad in zip(node.parents, node.backward_fn(node.grad)):
                if grad is None:
                    continue

                parent.grad = grad if parent.grad is None else (parent.grad + grad)

    # Operations

    def spmm(self, a: sparse.csr_matrix, b: Node) -> Node:
        """Sparse-dense product. The sparse operand is constant.

        Each output row is accumulated left to right in the column order of
        the sparse row.

        Parameters
        ----------
        a : `scipy.sparse.csr_matrix`
            Sparse matrix.
        b : `Node`
            Dense matrix with a.cols rows.

        Returns
        -------
        `Node`
            Product.

        Raises
        ------
        `ConfigurationError`
            Dimension mismatch.
        """

        if b.value.ndim != 2 or a.shape[1] != b.value.shape[0]:
            raise ConfigurationError(
                f"Dimension mismatch in spmm: {a.shape} and {b.value.shape}."
            )

        value = np.asarray(a @ b.value, dtype=np.float64)

        def backward_fn(grad: np.ndarray) -> tuple:
            return (np.asarray(a.transpose() @ grad, dtype=np.float64),)

        return self._record(value, "spmm", (b,), backward_fn)

    def matmul(self, a: Node, b: Node) -> Node:
        """Dense product.

        Raises
        ------
        `ConfigurationError`
            Dimension mismatch.
        """

        if a.value.shape[-1] != b.value.shape[0]:
            raise ConfigurationError(
                f"Dimension mismatch in matmul: {a.value.shape} and {b.value.shape}."
            )

        value = a.value @ b.value

        def backward_fn(grad: np.ndarray) -> tuple:
            return (grad @ b.value.T, a.value.T @ grad)

        return self._record(value, "matmul", (a, b), backward_fn)

    def transpose(self, a: Node) -> Node:
        def backward_fn(grad: np.ndarray) -> tuple:
            return (grad.T,)

        return self._record(a.value.T, "transpose", (a,), backward_fn)

    def add(self, a: Node, b: Node) -> Node:
        """Elementwise sum with broadcasting."""

        value = a.value + b.value

        def backward_fn(grad: np.ndarray) -> tuple:
            return (
                _unbroadcast(grad, a.value.shape),
                _unbroadcast(grad, b.value.shape),
            )

        return self._record(value, "add", (a, b), backward_fn)

    def sub(self, a: Node, b: Node) -> Node:
        """Elementwise difference with broadcasting."""

        value = a.value - b.value

        def backward_fn(grad: np.ndarray) -> tuple:
            return (
                _unbroadcast(grad, a.value.shape),
                _unbroadcast(-grad, b.value.shape),
            )

        return self._record(value, "sub", (a, b), backward_fn)

    def mul(self, a: Node, b: Node) -> Node:
        """Hadamard product with broadcasting."""

        value = a.value * b.value

        def backward_fn(grad: np.ndarray) -> tuple:
            return (
                _unbroadcast(grad * b.value, a.value.shape),
                _unbroadcast(grad * a.value, b.value.shape),
            )

        return self._record(value, "mul", (a, b), backward_fn)

    def scale(self, a: Node, factor: float) -> Node:
        """Product with a constant scalar."""

        value = a.value * factor

        def backward_fn(grad: np.ndarray) -> tuple:
            return (grad * factor,)

        return self._record(value, "scale", (a,), backward_fn)

    def add_n(self, nodes: typing.Sequence[Node]) -> Node:
        """Sum of the nodes, accumulated left to right.

        Raises
        ------
        `ConfigurationError`
            No node is given.
        """

        if len(nodes) == 0:
            raise ConfigurationError("add_n needs at least one node.")

        result = nodes[0]
        for node in nodes[1:]:
            result = self.add(result, node)

        return result

    def concat(self, nodes: typing.Sequence[Node], axis: int = 0) -> Node:
        """Concatenation along the axis."""

        value = np.concatenate([node.value for node in nodes], axis=axis)
        bounds = np.cumsum([0] + [node.value.shape[axis] for node in nodes])

        def backward_fn(grad: np.ndarray) -> tuple:
            return tuple(
                np.take(grad, np.arange(start, stop), axis=axis)
                for start, stop in zip(bounds[:-1], bounds[1:])
            )

        return self._record(value, "concat", tuple(nodes), backward_fn)

    def rows(self, a: Node, start: int, stop: int) -> Node:
        """Row block [start, stop)."""

        value = a.value[start:stop]

        def backward_fn(grad: np.ndarray) -> tuple:
            full = np.zeros_like(a.value)
            full[start:stop] = grad
            return (full,)

        return self._record(value, "rows", (a,), backward_fn)

    def columns(self, a: Node, start: int, stop: int) -> Node:
        """Column block [start, stop) of a matrix."""

        value = a.value[:, start:stop]

        def backward_fn(grad: np.ndarray) -> tuple:
            full = np.zeros_like(a.value)
            full[:, start:stop] = grad
            return (full,)

        return self._record(value, "columns", (a,), backward_fn)

    def gather(self, a: Node, index: np.ndarray) -> Node:
        """Embedding lookup of rows; the backward pass scatter-adds."""

        index = np.asarray(index, dtype=np.int64)
        value = a.value[index]

        def backward_fn(grad: np.ndarray) -> tuple:
            full = np.zeros_like(a.value)
            np.add.at(full, index, grad)
            return (full,)

        return self._record(value, "gather", (a,), backward_fn)

    def sum(self, a: Node, axis: int | None = None, keepdims: bool = False) -> Node:
        """Reduction by summation."""

        value = np.asarray(np.sum(a.value, axis=axis, keepdims=keepdims))

        def backward_fn(grad: np.ndarray) -> tuple:
            if axis is not None and not keepdims:
                grad = np.expand_dims(grad, axis)
            return (np.broadcast_to(grad, a.value.shape).copy(),)

        return self._record(value, "sum", (a,), backward_fn)

    def mean(self, a: Node, axis: int | None = None, keepdims: bool = False) -> Node:
        """Reduction by averaging."""

        count = a.value.size if axis is None else a.value.shape[axis]
        return self.scale(self.sum(a, axis=axis, keepdims=keepdims), 1.0 / count)

    def exp(self, a: Node) -> Node:
        value = np.exp(a.value)

        def backward_fn(grad: np.ndarray) -> tuple:
            return (grad * value,)

        return self._record(value, "exp", (a,), backward_fn)

    def log(self, a: Node) -> Node:
        value = np.log(a.value)

        def backward_fn(grad: np.ndarray) -> tuple:
            return (grad / a.value,)

        return self._record(value, "log", (a,), backward_fn)

    def sigmoid(self, a: Node) -> Node:
        value = 0.5 * (1.0 + np.tanh(0.5 * a.value))

        def backward_fn(grad: np.ndarray) -> tuple:
            return (grad * value * (1.0 - value),)

        return self._record(value, "sigmoid", (a,), backward_fn)

    def log_sigmoid(self, a: Node) -> Node:
        """ln(sigmoid(x)) in the softplus form -(max(-x, 0) + ln(1 + e^-|x|))."""

        x = a.value
        value = -(np.maximum(-x, 0.0) + np.log1p(np.exp(-np.abs(x))))

        def backward_fn(grad: np.ndarray) -> tuple:
            # d/dx ln(sigmoid(x)) = sigmoid(-x)
            return (grad * 0.5 * (1.0 - np.tanh(0.5 * x)),)

        return self._record(value, "log_sigmoid", (a,), backward_fn)

    def softmax(self, a: Node, axis: int = -1) -> Node:
        """Softmax with max-subtraction."""

        shifted = a.value - np.max(a.value, axis=axis, keepdims=True)
        exp = np.exp(shifted)
        value = exp / np.sum(exp, axis=axis, keepdims=True)

        def backward_fn(grad: np.ndarray) -> tuple:
            inner = np.sum(grad * value, axis=axis, keepdims=True)
            return (value * (grad - inner),)

        return self._record(value, "softmax", (a,), backward_fn)

    def logsumexp(self, a: Node, axis: int = -1) -> Node:
        """ln(sum(exp(x))) along the axis with max-subtraction."""

        peak = np.max(a.value, axis=axis, keepdims=True)
        exp = np.exp(a.value - peak)
        total = np.sum(exp, axis=axis, keepdims=True)
        value = np.squeeze(np.log(total) + peak, axis=axis)

        def backward_fn(grad: np.ndarray) -> tuple:
            return (np.expand_dims(grad, axis) * exp / total,)

        return self._record(value, "logsumexp", (a,), backward_fn)

    def normalize_rows(self, a: Node, eps: float = 1e-12) -> Node:
        """Scale every row to the unit L2 norm."""

        norm = np.maximum(
            np.sqrt(np.sum(a.value * a.value, axis=1, keepdims=True)), eps
        )
        value = a.value / norm

        def backward_fn(grad: np.ndarray) -> tuple:
            inner = np.sum(grad * value, axis=1, keepdims=True)
            return ((grad - value * inner) / norm,)

        return self._record(value, "normalize_rows", (a,), backward_fn)

    def stop_gradient(self, a: Node) -> Node:
        """Identity in the forward pass, no gradient to the input.

        Raises
        ------
        `UsageError`
            More stop-gradient nodes than the frozen values.
        """

        value = a.value
        if self.frozen is not None:
            if len(self.stopped) >= len(self.frozen):
                raise UsageError("No frozen value left for the stop-gradient node.")
            value = self.frozen[len(self.stopped)]

        self.stopped.append(value)
        return self._record(value, "stop_gradient", (a,), None, stop_gradient=True)
