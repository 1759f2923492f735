"""Dense tensors with reverse-mode automatic differentiation.

Every operation is a class in the :data:`OPERATIONS` registry with a
``forward`` and a ``backward`` static method working on NumPy arrays.
Applying an operation to tensors which require gradients records it on
the active :class:`Tape`; :func:`backward` replays the tape in reverse.

>>> x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
>>> loss = (x * x).sum()
>>> loss.item()
14.0
>>> backward(loss)
>>> x.grad.tolist()
[2.0, 4.0, 6.0]

Arrays are stored in double precision and are read-only; only leaf
tensors (parameters) may be reassigned, which is what optimizers do.
"""

from __future__ import annotations

import contextlib
import logging
import threading
from typing import TYPE_CHECKING
from typing import Any
from typing import ClassVar

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from sigma2r.config import DEBUG_MODE
from sigma2r.exc import AnomalyError
from sigma2r.exc import BackwardError
from sigma2r.exc import DomainError
from sigma2r.exc import ShapeError


if TYPE_CHECKING:
    from collections.abc import Callable
    from collections.abc import Iterator
    from collections.abc import Sequence

    from numpy.typing import ArrayLike
    from numpy.typing import NDArray

    Array = NDArray[np.float64]
    Shape = tuple[int, ...]


log = logging.getLogger('sigma2r.autodiff')


class _ThreadState(threading.local):
    def __init__(self) -> None:
        self.tape: Tape | None = None
        self.grad_enabled = True


_state = _ThreadState()


def _freeze(array: ArrayLike) -> Array:
    out = np.array(array, dtype=np.float64)
    out.flags.writeable = False
    return out


class Tensor:
    """A dense array of doubles with optional gradient tracking."""

    __slots__ = "_data", "requires_grad", "grad", "name", "_tape"

    # makes ``ndarray <op> Tensor`` defer to the tensor operators
    __array_priority__ = 100

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        name: str | None = None
    ) -> None:

        self._data = _freeze(data)
        self.requires_grad = requires_grad
        self.grad: Array | None = None
        self.name = name
        self._tape: Tape | None = None

    @classmethod
    def _from_op(cls, data: Array, requires_grad: bool) -> Tensor:
        inst = cls.__new__(cls)
        if data.dtype != np.float64:
            data = data.astype(np.float64)
        data.flags.writeable = False
        inst._data = data
        inst.requires_grad = requires_grad
        inst.grad = None
        inst.name = None
        inst._tape = None
        return inst

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        name = " %s" % self.name if self.name else ""
        return "<Tensor%s shape=%s%s>" % (name, self.shape, flag)

    @property
    def data(self) -> Array:
        return self._data

    @property
    def shape(self) -> Shape:
        return self._data.shape

    @property
    def ndim(self) -> int:
        return self._data.ndim

    @property
    def size(self) -> int:
        return int(self._data.size)

    @property
    def is_leaf(self) -> bool:
        return self._tape is None

    def item(self) -> float:
        return float(self._data.reshape(()))

    def numpy(self) -> Array:
        return self._data.copy()

    def detach(self) -> Tensor:
        return Tensor._from_op(self._data, False)

    def zero_grad(self) -> None:
        self.grad = None

    def assign(self, values: ArrayLike) -> None:
        """Replace the values of a leaf tensor in place of an update."""

        if not self.is_leaf:
            raise BackwardError(
                "cannot assign to a tensor produced by an operation."
            )
        values = _freeze(values)
        if values.shape != self.shape:
            raise ShapeError('assign', self.shape, values.shape)
        self._data = values

    # arithmetic

    def __add__(self, other: Any) -> Tensor:
        return forward_op('add', (self, other))

    def __radd__(self, other: Any) -> Tensor:
        return forward_op('add', (other, self))

    def __sub__(self, other: Any) -> Tensor:
        return forward_op('sub', (self, other))

    def __rsub__(self, other: Any) -> Tensor:
        return forward_op('sub', (other, self))

    def __mul__(self, other: Any) -> Tensor:
        return forward_op('mul', (self, other))

    def __rmul__(self, other: Any) -> Tensor:
        return forward_op('mul', (other, self))

    def __truediv__(self, other: Any) -> Tensor:
        return forward_op('div', (self, other))

    def __rtruediv__(self, other: Any) -> Tensor:
        return forward_op('div', (other, self))

    def __matmul__(self, other: Any) -> Tensor:
        return forward_op('matmul', (self, other))

    def __neg__(self) -> Tensor:
        return forward_op('neg', (self,))

    def __pow__(self, exponent: float) -> Tensor:
        return forward_op('power', (self,), exponent=float(exponent))

    def __getitem__(self, index: Any) -> Tensor:
        return forward_op('select', (self,), index=index)

    def exp(self) -> Tensor:
        return forward_op('exp', (self,))

    def log(self) -> Tensor:
        return forward_op('log', (self,))

    def sqrt(self) -> Tensor:
        return forward_op('sqrt', (self,))

    def sum(self, axis: int | None = None, keepdims: bool = False) -> Tensor:
        return forward_op('sum', (self,), axis=axis, keepdims=keepdims)

    def mean(self, axis: int | None = None, keepdims: bool = False) -> Tensor:
        return forward_op('mean', (self,), axis=axis, keepdims=keepdims)

    def max(self, axis: int | None = None, keepdims: bool = False) -> Tensor:
        return forward_op('max', (self,), axis=axis, keepdims=keepdims)

    def reshape(self, *shape: int) -> Tensor:
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return forward_op('reshape', (self,), shape=shape)

    def transpose(self, axes: Sequence[int] | None = None) -> Tensor:
        return forward_op('transpose', (self,), axes=axes)

    @property
    def T(self) -> Tensor:
        return self.transpose()


def as_tensor(value: Any) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


class Record:
    __slots__ = "operation", "inputs", "output", "ctx"

    def __init__(
        self,
        operation: type[Operation],
        inputs: tuple[Tensor, ...],
        output: Tensor,
        ctx: dict[str, Any]
    ) -> None:

        self.operation = operation
        self.inputs = inputs
        self.output = output
        self.ctx = ctx


class Tape:
    """Ordered log of the operations of one forward pass.

    Operations are appended as they execute, so the inputs of a
    record are always produced by earlier records (or are leaves).
    A tape supports exactly one reverse pass.
    """

    def __init__(self) -> None:
        self.records: list[Record] = []
        self.consumed = False
        self._previous: list[Tape | None] = []

    def __len__(self) -> int:
        return len(self.records)

    def __enter__(self) -> Tape:
        self._previous.append(_state.tape)
        _state.tape = self
        return self

    def __exit__(self, *exc_info: object) -> None:
        _state.tape = self._previous.pop()

    def record(
        self,
        operation: type[Operation],
        inputs: tuple[Tensor, ...],
        output: Tensor,
        ctx: dict[str, Any]
    ) -> None:

        if self.consumed:
            raise BackwardError(
                "cannot record on a tape after its reverse pass."
            )
        output._tape = self
        self.records.append(Record(operation, inputs, output, ctx))

    def backward(self, root: Tensor) -> None:
        if self.consumed:
            raise BackwardError(
                "tape already consumed; run the forward pass again."
            )
        if not self.records:
            raise BackwardError("tape is empty.")

        grads: dict[int, Array] = {id(root): np.ones(root.shape)}

        for record in reversed(self.records):
            output = record.output
            grad = grads.pop(id(output), None)
            if grad is None:
                continue

            output.grad = grad if output.grad is None else output.grad + grad

            input_grads = record.operation.backward(record.ctx, grad)
            for tensor, g in zip(record.inputs, input_grads):
                if g is None or not tensor.requires_grad:
                    continue
                if tensor._tape is self:
                    key = id(tensor)
                    previous = grads.get(key)
                    grads[key] = g if previous is None else previous + g
                else:
                    tensor.grad = g if tensor.grad is None \
                        else tensor.grad + g

        self.consumed = True
        log.debug("reverse pass over %d records." % len(self.records))


def current_tape() -> Tape:
    tape = _state.tape
    if tape is None or tape.consumed:
        tape = _state.tape = Tape()
    return tape


def is_grad_enabled() -> bool:
    return _state.grad_enabled


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Evaluate without recording operations (this thread only)."""

    previous = _state.grad_enabled
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(t) into ``t.grad`` for every reachable ``t``.

    The root must be a scalar produced by a recorded operation; its
    tape can be replayed only once.
    """

    if loss.ndim != 0:
        raise BackwardError(
            "backward requires a scalar root, got shape %s." % (loss.shape,)
        )
    tape = loss._tape
    if tape is None or not loss.requires_grad:
        raise BackwardError(
            "root is not the output of a recorded operation."
        )
    tape.backward(loss)
    if _state.tape is tape:
        _state.tape = None


class Operation:
    """Base class of registered operations.

    ``forward`` receives a context dictionary for saving whatever
    ``backward`` needs, the input arrays and the keyword attributes.
    ``backward`` returns one gradient (or ``None``) per input.
    """

    kind: ClassVar[str]

    @staticmethod
    def forward(ctx: dict[str, Any], *arrays: Array, **attrs: Any) -> Array:
        raise NotImplementedError("Must be implemented by subclass.")

    @staticmethod
    def backward(
        ctx: dict[str, Any],
        grad: Array
    ) -> tuple[Array | None, ...]:
        raise NotImplementedError("Must be implemented by subclass.")


OPERATIONS: dict[str, type[Operation]] = {}


def register(kind: str) -> Callable[[type[Operation]], type[Operation]]:
    def decorator(cls: type[Operation]) -> type[Operation]:
        cls.kind = kind
        OPERATIONS[kind] = cls
        return cls
    return decorator


def forward_op(kind: str, inputs: Sequence[Any], **attrs: Any) -> Tensor:
    """Apply the registered operation ``kind`` to ``inputs``.

    >>> forward_op('add', ([1, 2], [3, 4])).data.tolist()
    [4.0, 6.0]

    >>> forward_op('pairwise_sqdist', ([[0, 0]], [[3, 4]])).data.tolist()
    [[25.0]]
    """

    try:
        operation = OPERATIONS[kind]
    except KeyError:
        raise ValueError("Unknown operation: %s." % kind) from None

    tensors = tuple(as_tensor(value) for value in inputs)
    ctx: dict[str, Any] = {}
    data = operation.forward(ctx, *(t.data for t in tensors), **attrs)

    if DEBUG_MODE and not np.all(np.isfinite(data)):
        raise AnomalyError("op '%s' produced non-finite values." % kind)

    requires_grad = _state.grad_enabled and any(
        t.requires_grad for t in tensors)
    output = Tensor._from_op(np.asarray(data), requires_grad)

    if requires_grad:
        current_tape().record(operation, tensors, output, ctx)

    return output


# helpers

def _leading_shape(kind: str, a: Array, b: Array) -> None:
    """Only leading-dimension expansion is allowed between operands."""

    if a.shape == b.shape:
        return
    short, long = (a, b) if a.ndim < b.ndim else (b, a)
    if short.ndim < long.ndim and \
            long.shape[long.ndim - short.ndim:] == short.shape:
        return
    raise ShapeError(kind, a.shape, b.shape)


def _reduce_to(grad: Array, shape: Shape) -> Array:
    if grad.shape == shape:
        return grad
    lead = grad.ndim - len(shape)
    grad = grad.sum(axis=tuple(range(lead)))
    axes = tuple(
        i for i, (g, s) in enumerate(zip(grad.shape, shape))
        if s == 1 and g != 1
    )
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _expand(grad: Array, shape: Shape, axis: int | None,
            keepdims: bool) -> Array:
    if axis is not None and not keepdims:
        grad = np.expand_dims(grad, axis)
    return np.broadcast_to(grad, shape)


# elementwise arithmetic

@register('add')
class Add(Operation):
    @staticmethod
    def forward(ctx, a, b):
        _leading_shape('add', a, b)
        ctx['shapes'] = a.shape, b.shape
        return a + b

    @staticmethod
    def backward(ctx, grad):
        sa, sb = ctx['shapes']
        return _reduce_to(grad, sa), _reduce_to(grad, sb)


@register('sub')
class Sub(Operation):
    @staticmethod
    def forward(ctx, a, b):
        _leading_shape('sub', a, b)
        ctx['shapes'] = a.shape, b.shape
        return a - b

    @staticmethod
    def backward(ctx, grad):
        sa, sb = ctx['shapes']
        return _reduce_to(grad, sa), _reduce_to(-grad, sb)


@register('mul')
class Mul(Operation):
    @staticmethod
    def forward(ctx, a, b):
        _leading_shape('mul', a, b)
        ctx['inputs'] = a, b
        return a * b

    @staticmethod
    def backward(ctx, grad):
        a, b = ctx['inputs']
        return _reduce_to(grad * b, a.shape), _reduce_to(grad * a, b.shape)


@register('div')
class Div(Operation):
    @staticmethod
    def forward(ctx, a, b):
        _leading_shape('div', a, b)
        ctx['inputs'] = a, b
        return a / b

    @staticmethod
    def backward(ctx, grad):
        a, b = ctx['inputs']
        return (
            _reduce_to(grad / b, a.shape),
            _reduce_to(-grad * a / (b * b), b.shape),
        )


@register('neg')
class Neg(Operation):
    @staticmethod
    def forward(ctx, a):
        return -a

    @staticmethod
    def backward(ctx, grad):
        return -grad,


@register('exp')
class Exp(Operation):
    @staticmethod
    def forward(ctx, a):
        out = np.exp(a)
        ctx['out'] = out
        return out

    @staticmethod
    def backward(ctx, grad):
        return grad * ctx['out'],


@register('log')
class Log(Operation):
    @staticmethod
    def forward(ctx, a):
        if np.any(a < 0):
            raise DomainError("op 'log': negative input.")
        ctx['input'] = a
        with np.errstate(divide='ignore'):
            return np.log(a)

    @staticmethod
    def backward(ctx, grad):
        return grad / ctx['input'],


@register('power')
class Power(Operation):
    @staticmethod
    def forward(ctx, a, exponent):
        if exponent != int(exponent) and np.any(a < 0):
            raise DomainError(
                "op 'power': negative base with exponent %r." % exponent)
        ctx['input'] = a
        ctx['exponent'] = exponent
        return a ** exponent

    @staticmethod
    def backward(ctx, grad):
        a, p = ctx['input'], ctx['exponent']
        return grad * p * a ** (p - 1),


@register('sqrt')
class Sqrt(Operation):
    @staticmethod
    def forward(ctx, a):
        if np.any(a < 0):
            raise DomainError("op 'sqrt': negative input.")
        out = np.sqrt(a)
        ctx['out'] = out
        return out

    @staticmethod
    def backward(ctx, grad):
        out = ctx['out']
        # the subgradient at an exact zero is taken as zero
        safe = np.where(out > 0, out, 1.0)
        return np.where(out > 0, grad * 0.5 / safe, 0.0),


@register('logistic')
class Logistic(Operation):
    @staticmethod
    def forward(ctx, a):
        out = np.exp(-np.logaddexp(0.0, -a))
        ctx['out'] = out
        return out

    @staticmethod
    def backward(ctx, grad):
        out = ctx['out']
        return grad * out * (1.0 - out),


# linear algebra

@register('matmul')
class MatMul(Operation):
    @staticmethod
    def forward(ctx, a, b):
        if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
            raise ShapeError('matmul', a.shape, b.shape)
        ctx['inputs'] = a, b
        return a @ b

    @staticmethod
    def backward(ctx, grad):
        a, b = ctx['inputs']
        return grad @ b.T, a.T @ grad


@register('pairwise_sqdist')
class PairwiseSquaredDistance(Operation):
    """Squared Euclidean distances between the rows of two matrices.

    Computed from explicit differences, so the distance of a row to
    itself is exactly zero.
    """

    @staticmethod
    def forward(ctx, x, y):
        if x.ndim != 2 or y.ndim != 2 or x.shape[1] != y.shape[1]:
            raise ShapeError('pairwise_sqdist', x.shape, y.shape)
        ctx['inputs'] = x, y
        diff = x[:, None, :] - y[None, :, :]
        return np.einsum('ijk,ijk->ij', diff, diff)

    @staticmethod
    def backward(ctx, grad):
        x, y = ctx['inputs']
        gx = 2.0 * (grad.sum(axis=1)[:, None] * x - grad @ y)
        gy = 2.0 * (grad.sum(axis=0)[:, None] * y - grad.T @ x)
        return gx, gy


# reductions

@register('sum')
class Sum(Operation):
    @staticmethod
    def forward(ctx, a, axis=None, keepdims=False):
        ctx['shape'] = a.shape
        ctx['axis'] = axis
        ctx['keepdims'] = keepdims
        return np.sum(a, axis=axis, keepdims=keepdims)

    @staticmethod
    def backward(ctx, grad):
        return _expand(grad, ctx['shape'], ctx['axis'], ctx['keepdims']),


@register('mean')
class Mean(Operation):
    @staticmethod
    def forward(ctx, a, axis=None, keepdims=False):
        if a.size == 0:
            raise ShapeError('mean', a.shape)
        ctx['shape'] = a.shape
        ctx['axis'] = axis
        ctx['keepdims'] = keepdims
        ctx['count'] = a.size if axis is None else a.shape[axis]
        return np.mean(a, axis=axis, keepdims=keepdims)

    @staticmethod
    def backward(ctx, grad):
        grad = grad / ctx['count']
        return _expand(grad, ctx['shape'], ctx['axis'], ctx['keepdims']),


@register('max')
class Max(Operation):
    """Maximum; the gradient goes to the first maximal element."""

    @staticmethod
    def forward(ctx, a, axis=None, keepdims=False):
        if a.size == 0:
            raise ShapeError('max', a.shape)
        ctx['shape'] = a.shape
        ctx['axis'] = axis
        ctx['keepdims'] = keepdims
        if axis is None:
            index = int(np.argmax(a))
            ctx['index'] = index
            out = a.reshape(-1)[index]
            return np.reshape(out, (1,) * a.ndim) if keepdims \
                else np.asarray(out)
        index = np.expand_dims(np.argmax(a, axis=axis), axis)
        ctx['index'] = index
        out = np.take_along_axis(a, index, axis=axis)
        return out if keepdims else np.squeeze(out, axis=axis)

    @staticmethod
    def backward(ctx, grad):
        shape, axis = ctx['shape'], ctx['axis']
        out = np.zeros(shape)
        if axis is None:
            out.reshape(-1)[ctx['index']] = np.sum(grad)
            return out,
        if not ctx['keepdims']:
            grad = np.expand_dims(grad, axis)
        np.put_along_axis(out, ctx['index'], grad, axis=axis)
        return out,


# indexing and shape

@register('select')
class Select(Operation):
    """Gather by integer index; the index itself is not differentiated."""

    @staticmethod
    def forward(ctx, a, index):
        ctx['shape'] = a.shape
        ctx['index'] = index
        try:
            return np.array(a[index])
        except IndexError as exc:
            raise ShapeError('select', a.shape) from exc

    @staticmethod
    def backward(ctx, grad):
        out = np.zeros(ctx['shape'])
        np.add.at(out, ctx['index'], grad)
        return out,


@register('broadcast')
class Broadcast(Operation):
    """Explicit expansion of leading dimensions and of size-1 axes."""

    @staticmethod
    def forward(ctx, a, shape):
        shape = tuple(shape)
        padded = (1,) * (len(shape) - a.ndim) + a.shape
        if len(padded) != len(shape) or any(
                p != s and p != 1 for p, s in zip(padded, shape)):
            raise ShapeError('broadcast', a.shape, shape)
        ctx['shape'] = a.shape
        return np.broadcast_to(a, shape)

    @staticmethod
    def backward(ctx, grad):
        return _reduce_to(grad, ctx['shape']),


@register('reshape')
class Reshape(Operation):
    @staticmethod
    def forward(ctx, a, shape):
        ctx['shape'] = a.shape
        try:
            return a.reshape(shape)
        except ValueError:
            raise ShapeError('reshape', a.shape, tuple(shape)) from None

    @staticmethod
    def backward(ctx, grad):
        return grad.reshape(ctx['shape']),


@register('transpose')
class Transpose(Operation):
    @staticmethod
    def forward(ctx, a, axes=None):
        ctx['axes'] = axes
        return np.transpose(a, axes)

    @staticmethod
    def backward(ctx, grad):
        axes = ctx['axes']
        if axes is None:
            return np.transpose(grad),
        return np.transpose(grad, np.argsort(axes)),


@register('concat')
class Concat(Operation):
    @staticmethod
    def forward(ctx, *arrays, axis=0):
        try:
            out = np.concatenate(arrays, axis=axis)
        except ValueError:
            raise ShapeError(
                'concat', *(a.shape for a in arrays)) from None
        ctx['axis'] = axis
        ctx['sizes'] = [a.shape[axis] for a in arrays]
        return out

    @staticmethod
    def backward(ctx, grad):
        splits = np.cumsum(ctx['sizes'])[:-1]
        return tuple(np.split(grad, splits, axis=ctx['axis']))


# layers

@register('conv2d')
class Conv2d(Operation):
    """Stride-1 convolution with zero padding preserving spatial size."""

    @staticmethod
    def forward(ctx, x, weight, bias):
        if x.ndim != 4 or weight.ndim != 4 or x.shape[1] != weight.shape[1] \
                or weight.shape[2] != weight.shape[3] \
                or weight.shape[2] % 2 == 0 \
                or bias.shape != (weight.shape[0],):
            raise ShapeError('conv2d', x.shape, weight.shape, bias.shape)

        n, c, h, w = x.shape
        o, _, k, _ = weight.shape
        pad = k // 2
        padded = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))

        # (n, c, h, w, k, k) -> (n*h*w, c*k*k)
        windows = sliding_window_view(padded, (k, k), axis=(2, 3))
        cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * h * w, -1)
        out = cols @ weight.reshape(o, -1).T + bias

        ctx['cols'] = cols
        ctx['weight'] = weight
        ctx['shape'] = x.shape
        return out.reshape(n, h, w, o).transpose(0, 3, 1, 2)

    @staticmethod
    def backward(ctx, grad):
        cols, weight = ctx['cols'], ctx['weight']
        n, c, h, w = ctx['shape']
        o, _, k, _ = weight.shape
        pad = k // 2

        g = grad.transpose(0, 2, 3, 1).reshape(-1, o)
        gw = (g.T @ cols).reshape(weight.shape)
        gb = g.sum(axis=0)

        gcols = (g @ weight.reshape(o, -1)).reshape(n, h, w, c, k, k)
        gpadded = np.zeros((n, c, h + 2 * pad, w + 2 * pad))
        for i in range(k):
            for j in range(k):
                gpadded[:, :, i:i + h, j:j + w] += \
                    gcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        gx = gpadded[:, :, pad:pad + h, pad:pad + w]
        return gx, gw, gb


@register('maxpool2x2')
class MaxPool2x2(Operation):
    """2x2 max pooling, stride 2; ties go to the lowest linear index."""

    @staticmethod
    def forward(ctx, x):
        if x.ndim != 4 or x.shape[2] % 2 or x.shape[3] % 2:
            raise ShapeError('maxpool2x2', x.shape)
        n, c, h, w = x.shape
        windows = x.reshape(n, c, h // 2, 2, w // 2, 2) \
            .transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)
        index = np.argmax(windows, axis=-1)
        ctx['index'] = index
        ctx['shape'] = x.shape
        return np.take_along_axis(windows, index[..., None], axis=-1)[..., 0]

    @staticmethod
    def backward(ctx, grad):
        n, c, h, w = ctx['shape']
        windows = np.zeros((n, c, h // 2, w // 2, 4))
        np.put_along_axis(
            windows, ctx['index'][..., None], grad[..., None], axis=-1)
        gx = windows.reshape(n, c, h // 2, w // 2, 2, 2) \
            .transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w)
        return gx,


@register('prelu')
class PReLU(Operation):
    """Parametric rectifier with one learned slope."""

    @staticmethod
    def forward(ctx, x, slope):
        if slope.size != 1:
            raise ShapeError('prelu', x.shape, slope.shape)
        a = slope.reshape(())
        positive = x > 0
        ctx['input'] = x
        ctx['positive'] = positive
        ctx['slope'] = a
        ctx['slope_shape'] = slope.shape
        return np.where(positive, x, a * x)

    @staticmethod
    def backward(ctx, grad):
        positive = ctx['positive']
        gx = grad * np.where(positive, 1.0, ctx['slope'])
        ga = np.sum(grad * np.where(positive, 0.0, ctx['input']))
        return gx, np.reshape(ga, ctx['slope_shape'])


# functional forms

def logistic(x: Any) -> Tensor:
    """Numerically stable 1 / (1 + exp(-x)).

    >>> logistic(0.0).item()
    0.5
    >>> logistic(1000.0).item()
    1.0
    """

    return forward_op('logistic', (x,))


def pairwise_sqdist(x: Any, y: Any) -> Tensor:
    return forward_op('pairwise_sqdist', (x, y))


def broadcast(x: Any, shape: Sequence[int]) -> Tensor:
    return forward_op('broadcast', (x,), shape=tuple(shape))


def concat(tensors: Sequence[Any], axis: int = 0) -> Tensor:
    return forward_op('concat', tensors, axis=axis)


def select(x: Any, index: Any) -> Tensor:
    return forward_op('select', (x,), index=index)


# verification

def numeric_gradient(
    fn: Callable[[], Tensor],
    tensor: Tensor,
    step: float = 1e-5
) -> Array:
    """Central finite differences of a scalar function of ``tensor``."""

    original = tensor.numpy()
    flat = original.reshape(-1)
    out = np.zeros(flat.shape)
    with no_grad():
        for i in range(flat.size):
            probe = flat.copy()
            probe[i] = flat[i] + step
            tensor.assign(probe.reshape(original.shape))
            plus = fn().item()
            probe[i] = flat[i] - step
            tensor.assign(probe.reshape(original.shape))
            minus = fn().item()
            out[i] = (plus - minus) / (2 * step)
    tensor.assign(original)
    return out.reshape(original.shape)


def relative_error(analytic: ArrayLike, numeric: ArrayLike) -> float:
    a = np.asarray(analytic, dtype=np.float64)
    b = np.asarray(numeric, dtype=np.float64)
    scale = np.linalg.norm(a) + np.linalg.norm(b)
    if scale == 0:
        return 0.0
    return float(np.linalg.norm(a - b) / scale)


def gradient_check(
    fn: Callable[[], Tensor],
    tensors: Sequence[Tensor],
    step: float = 1e-5
) -> list[float]:
    """Relative error between analytic and numeric gradients.

    Returns one value per tensor; all tensors must be leaves which
    require gradients.
    """

    for tensor in tensors:
        tensor.zero_grad()
    with Tape():
        loss = fn()
        backward(loss)
    errors = []
    for tensor in tensors:
        analytic = tensor.grad if tensor.grad is not None \
            else np.zeros(tensor.shape)
        errors.append(relative_error(
            analytic, numeric_gradient(fn, tensor, step)))
    return errors
