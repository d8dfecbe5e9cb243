"""Minimal dense-tensor engine with reverse-mode automatic differentiation.

Covers exactly the operations the design model needs. Tensors hold 64-bit
float numpy arrays; operations executed while a Tape is active (and with at
least one input requiring gradients) are recorded on it, and Tape.backward
replays them in reverse order.

Broadcasting is deliberately narrow. A binary op accepts
- equal shapes,
- b.shape being a suffix of a.shape (bias over leading axes), or
- b.shape == a.shape[:-1] + (1,) (one value per row along the trailing axis).

Gradients accumulate (+=) across uses of a tensor; callers zero them between steps.
"""

import contextvars
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import log_softmax as _log_softmax, logsumexp

from config import SAFE_NORM_EPS
from core.errors import DimensionError, InputValidationError

ArrayLike = Union[np.ndarray, float, int, Sequence[float]]
BackwardFn = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]

_ACTIVE_TAPE: contextvars.ContextVar = contextvars.ContextVar("active_tape", default=None)


class Tensor:
    """Dense n-dimensional array of float64 with optional gradient tracking."""

    __slots__ = ("data", "requires_grad", "grad", "tape", "name")

    def __init__(self, data: ArrayLike, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(self.data) if requires_grad else None
        self.tape: Optional["Tape"] = None
        self.name = name

    @classmethod
    def _from_op(cls, data: np.ndarray, tape: Optional["Tape"]) -> "Tensor":
        out = cls.__new__(cls)
        out.data = np.asarray(data, dtype=np.float64)
        out.requires_grad = tape is not None
        out.grad = None
        out.tape = tape
        out.name = None
        return out

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{label})"

    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, _as_tensor(other))

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def constant(data: ArrayLike) -> Tensor:
    """Wrap an array as a tensor that never receives gradients."""
    return Tensor(data, requires_grad=False)


@dataclass
class TapeEntry:
    """One executed operation: its inputs, output and gradient rule."""

    name: str
    inputs: Tuple[Tensor, ...]
    output: Tensor
    backward: BackwardFn


class Tape:
    """Ordered record of executed operations.

    Use as a context manager; operations run inside the block are recorded.
    A tape belongs to one worker: the active tape is a context variable, so
    threads never share it.

    Example:
        >>> x = Tensor([1.0, 2.0], requires_grad=True)
        >>> with Tape() as tape:
        ...     loss = reduce("sum", x * x, axis=0)
        >>> tape.backward(loss)
        1
    """

    def __init__(self):
        self.entries: List[TapeEntry] = []
        self.visits = 0
        self._token = None

    def __enter__(self) -> "Tape":
        self._token = _ACTIVE_TAPE.set(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> bool:
        _ACTIVE_TAPE.reset(self._token)
        self._token = None
        return False

    def __len__(self) -> int:
        return len(self.entries)

    def record(self, name: str, inputs: Tuple[Tensor, ...], output: Tensor, backward_fn: BackwardFn) -> None:
        self.entries.append(TapeEntry(name, inputs, output, backward_fn))

    def backward(self, loss: Tensor) -> int:
        """Propagate d(loss)/d(tensor) into every recorded tensor.

        Args:
            loss: Scalar tensor produced on this tape

        Returns:
            Number of tape entries visited (every entry exactly once)

        Raises:
            DimensionError: If loss is not a scalar
            InputValidationError: If loss was not recorded on this tape
        """
        if loss.size != 1:
            raise DimensionError(f"backward needs a scalar loss, got shape {loss.shape}")
        if loss.tape is not self:
            raise InputValidationError("loss was not recorded on this tape")

        loss.grad = np.ones_like(loss.data)
        visited = 0
        for entry in reversed(self.entries):
            visited += 1
            out_grad = entry.output.grad
            if out_grad is None:
                continue
            input_grads = entry.backward(out_grad)
            for tensor, grad in zip(entry.inputs, input_grads):
                if grad is None or not tensor.requires_grad:
                    continue
                if tensor.grad is None:
                    tensor.grad = np.zeros_like(tensor.data)
                tensor.grad += grad
        self.visits = visited
        return visited


def active_tape() -> Optional[Tape]:
    return _ACTIVE_TAPE.get()


def backward(loss: Tensor) -> int:
    """Run reverse-mode differentiation from a scalar loss on its own tape."""
    if loss.size != 1:
        raise DimensionError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss.tape is None:
        raise InputValidationError("loss is not on a tape (was it computed inside `with Tape()`?)")
    return loss.tape.backward(loss)


def _result(name: str, data: np.ndarray, inputs: Tuple[Tensor, ...], backward_fn: BackwardFn) -> Tensor:
    tape = _ACTIVE_TAPE.get()
    if tape is None or not any(t.requires_grad for t in inputs):
        return Tensor._from_op(data, None)
    out = Tensor._from_op(data, tape)
    tape.record(name, inputs, out, backward_fn)
    return out


# ---------------------------------------------------------------------------
# Broadcasting helpers
# ---------------------------------------------------------------------------

def _check_broadcast(a_shape: Tuple[int, ...], b_shape: Tuple[int, ...], op: str) -> None:
    if a_shape == b_shape:
        return
    if len(b_shape) <= len(a_shape) and a_shape[len(a_shape) - len(b_shape):] == b_shape:
        return
    if len(b_shape) == len(a_shape) and b_shape[:-1] == a_shape[:-1] and b_shape[-1] == 1:
        return
    raise DimensionError(f"{op}: cannot broadcast {b_shape} onto {a_shape}")


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    if len(shape) < grad.ndim or (len(shape) == grad.ndim and shape[-1] != 1):
        return grad.reshape((-1,) + shape).sum(axis=0)
    return grad.sum(axis=-1, keepdims=True)


def _axis(axis: int, ndim: int) -> int:
    if not -ndim <= axis < ndim:
        raise DimensionError(f"axis {axis} out of range for rank {ndim}")
    return axis % ndim


# ---------------------------------------------------------------------------
# Elementwise ops
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a.shape, b.shape, "add")
    return _result("add", a.data + b.data, (a, b),
                   lambda g: (g, _unbroadcast(g, b.shape)))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a.shape, b.shape, "sub")
    return _result("sub", a.data - b.data, (a, b),
                   lambda g: (g, -_unbroadcast(g, b.shape)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a.shape, b.shape, "mul")
    a_data, b_data = a.data, b.data
    return _result("mul", a_data * b_data, (a, b),
                   lambda g: (g * b_data, _unbroadcast(g * a_data, b.shape)))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _result("relu", np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def sigmoid(a: Tensor) -> Tensor:
    out = 0.5 * (np.tanh(0.5 * a.data) + 1.0)
    return _result("sigmoid", out, (a,), lambda g: (g * out * (1.0 - out),))


def scale(a: Tensor, factor: float) -> Tensor:
    return _result("scale", a.data * factor, (a,), lambda g: (g * factor,))


def rsqrt(a: Tensor, eps: float = 0.0) -> Tensor:
    """Elementwise (a + eps) ** -0.5."""
    out = 1.0 / np.sqrt(a.data + eps)
    return _result("rsqrt", out, (a,), lambda g: (g * -0.5 * out ** 3,))


_BINARY = {"add": add, "sub": sub, "mul": mul}
_UNARY = {"relu": relu, "sigmoid": sigmoid}


def elementwise(op: str, a: Tensor, b: Optional[Union[Tensor, float]] = None) -> Tensor:
    """Dispatch one of {add, sub, mul, relu, sigmoid, scale}.

    `scale` takes a python float as b.
    """
    if op in _BINARY:
        if b is None:
            raise InputValidationError(f"{op} needs two operands")
        return _BINARY[op](a, _as_tensor(b))
    if op in _UNARY:
        return _UNARY[op](a)
    if op == "scale":
        return scale(a, float(b))
    raise InputValidationError(f"Unknown elementwise op: {op}")


# ---------------------------------------------------------------------------
# Linear algebra and reductions
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """a[..., p] @ b[p, q] -> [..., q]. The plain 2-D product is the rank-2 case."""
    if b.ndim != 2 or a.ndim < 1 or a.shape[-1] != b.shape[0]:
        raise DimensionError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    a_data, b_data = a.data, b.data

    def grad_fn(g):
        grad_a = g @ b_data.T if a.requires_grad else None
        grad_b = None
        if b.requires_grad:
            grad_b = a_data.reshape(-1, a_data.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        return grad_a, grad_b

    return _result("matmul", a_data @ b_data, (a, b), grad_fn)


def reduce(op: str, a: Tensor, axis: int, keepdims: bool = False) -> Tensor:
    """Sum or mean over one axis."""
    if op not in ("sum", "mean"):
        raise InputValidationError(f"Unknown reduction: {op}")
    ax = _axis(axis, a.ndim)
    extent = a.shape[ax]
    out = a.data.sum(axis=ax, keepdims=keepdims)
    factor = 1.0
    if op == "mean":
        factor = 1.0 / extent
        out = out * factor
    shape = a.shape

    def grad_fn(g):
        if not keepdims:
            g = np.expand_dims(g, ax)
        return (np.broadcast_to(g * factor, shape),)

    return _result(op, out, (a,), grad_fn)


def sum(a: Tensor, axis: int, keepdims: bool = False) -> Tensor:  # noqa: A001
    return reduce("sum", a, axis, keepdims)


def mean(a: Tensor, axis: int, keepdims: bool = False) -> Tensor:
    return reduce("mean", a, axis, keepdims)


def safe_norm(v: Tensor, eps: float = SAFE_NORM_EPS) -> Tensor:
    """Euclidean norm over a trailing axis of extent 3, sqrt(|v|^2 + eps)."""
    if v.ndim < 1 or v.shape[-1] != 3:
        raise DimensionError(f"safe_norm expects last extent 3, got {v.shape}")
    v_data = v.data
    norm = np.sqrt(np.sum(v_data * v_data, axis=-1) + eps)
    return _result("safe_norm", norm, (v,),
                   lambda g: ((g / norm)[..., None] * v_data,))


def softmax_cross_entropy(logits: Tensor, targets: Sequence[int], smoothing: float = 0.0) -> Tensor:
    """Mean label-smoothed cross-entropy over rows.

    q = (1 - smoothing) * onehot + smoothing / C, loss = mean_i -sum_c q log softmax(logits)_ic
    """
    if logits.ndim != 2:
        raise DimensionError(f"logits must be [n, C], got {logits.shape}")
    if not 0.0 <= smoothing < 1.0:
        raise InputValidationError(f"smoothing must lie in [0, 1), got {smoothing}")
    n, n_classes = logits.shape
    targets = np.asarray(targets, dtype=np.int64)
    if targets.shape != (n,):
        raise DimensionError(f"targets must have shape ({n},), got {targets.shape}")
    if n and (targets.min() < 0 or targets.max() >= n_classes):
        raise InputValidationError(f"target index outside 0..{n_classes - 1}")

    logp = logits.data - logsumexp(logits.data, axis=1, keepdims=True)
    q = np.full((n, n_classes), smoothing / n_classes)
    q[np.arange(n), targets] += 1.0 - smoothing
    loss = -(q * logp).sum() / max(n, 1)
    probs = np.exp(logp)

    return _result("softmax_cross_entropy", np.asarray(loss), (logits,),
                   lambda g: (g * (probs - q) / max(n, 1),))


# ---------------------------------------------------------------------------
# Shape and indexing ops
# ---------------------------------------------------------------------------

def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = tuple(tensors)
    if not tensors:
        raise InputValidationError("concat needs at least one tensor")
    ax = _axis(axis, tensors[0].ndim)
    for t in tensors[1:]:
        if t.ndim != tensors[0].ndim or t.shape[:ax] + t.shape[ax + 1:] != tensors[0].shape[:ax] + tensors[0].shape[ax + 1:]:
            raise DimensionError(f"concat: shapes {[x.shape for x in tensors]} differ off axis {axis}")
    bounds = np.cumsum([t.shape[ax] for t in tensors])[:-1]

    def grad_fn(g):
        return tuple(np.split(g, bounds, axis=ax))

    return _result("concat", np.concatenate([t.data for t in tensors], axis=ax), tensors, grad_fn)


def gather(a: Tensor, index: np.ndarray) -> Tensor:
    """Rows of a selected along axis 0; output shape index.shape + a.shape[1:]."""
    index = np.asarray(index, dtype=np.int64)
    shape = a.shape

    def grad_fn(g):
        out = np.zeros(shape)
        np.add.at(out, index.reshape(-1), g.reshape((-1,) + shape[1:]))
        return (out,)

    return _result("gather", a.data[index], (a,), grad_fn)


def scatter_sum(a: Tensor, index: np.ndarray, n: int) -> Tensor:
    """Sum rows of a into n buckets along axis 0 (empty buckets stay zero)."""
    index = np.asarray(index, dtype=np.int64)
    if index.shape != (a.shape[0],):
        raise DimensionError(f"scatter_sum: index shape {index.shape} vs rows {a.shape[0]}")
    out = np.zeros((n,) + a.shape[1:])
    np.add.at(out, index, a.data)
    return _result("scatter_sum", out, (a,), lambda g: (g[index],))


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    original = a.shape
    return _result("reshape", a.data.reshape(tuple(shape)), (a,),
                   lambda g: (g.reshape(original),))


def swapaxes(a: Tensor, axis1: int, axis2: int) -> Tensor:
    return _result("swapaxes", np.swapaxes(a.data, axis1, axis2), (a,),
                   lambda g: (np.swapaxes(g, axis1, axis2),))


def expand(a: Tensor, axis: int, size: int) -> Tensor:
    """Replicate a singleton axis `size` times."""
    ax = _axis(axis, a.ndim)
    if a.shape[ax] != 1:
        raise DimensionError(f"expand: axis {axis} of {a.shape} is not a singleton")
    return _result("expand", np.repeat(a.data, size, axis=ax), (a,),
                   lambda g: (g.sum(axis=ax, keepdims=True),))


# ---------------------------------------------------------------------------
# Inference helpers (plain numpy, never recorded)
# ---------------------------------------------------------------------------

def log_softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    return _log_softmax(np.asarray(x, dtype=np.float64), axis=axis)


def gradcheck(fn: Callable[..., Tensor], inputs: Sequence[Tensor], h: float = 1e-5) -> float:
    """Compare analytic gradients with central finite differences.

    Args:
        fn: Function of the input tensors returning a scalar tensor
        inputs: Leaf tensors with requires_grad=True
        h: Finite-difference step

    Returns:
        Largest per-tensor relative error max|analytic - fd| / (max|fd| + 1e-8)
    """
    for t in inputs:
        t.zero_grad()
    with Tape() as tape:
        out = fn(*inputs)
    tape.backward(out)

    worst = 0.0
    for t in inputs:
        analytic = t.grad.copy()
        numeric = np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        for idx in range(flat.size):
            original = flat[idx]
            flat[idx] = original + h
            plus = fn(*inputs).item()
            flat[idx] = original - h
            minus = fn(*inputs).item()
            flat[idx] = original
            numeric.reshape(-1)[idx] = (plus - minus) / (2.0 * h)
        err = np.max(np.abs(analytic - numeric)) / (np.max(np.abs(numeric)) + 1e-8)
        worst = max(worst, float(err))
    return worst
