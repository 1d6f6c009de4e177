"""Dense tensors with reverse-mode differentiation on top of numpy.

Operations executed inside an active :class:`Record` are appended to it in
execution order, so the record is topologically sorted by construction and
:func:`backward` only has to walk it in reverse.  Outside a record the same
functions compute plain values and keep no graph state, which is what
inference uses.

    >>> x = Tensor(np.array(3.0), requires_grad=True, name="x")
    >>> with Record({"x": x}) as rec:
    ...     y = mul(x, x)
    >>> float(backward(rec, y)["x"])
    6.0
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

# dtypes used throughout the package
HIGH = np.float64
STANDARD = np.float32

_GELU_C = math.sqrt(2.0 / math.pi)


class ShapeError(ValueError):
    """Raised when an operation receives incompatible operand shapes."""


class NumericError(ArithmeticError):
    """Raised when a value or gradient stops being finite."""


class Tensor:
    """A numpy array plus the bookkeeping needed for backprop."""

    __slots__ = ("data", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.asarray(data)
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label})"

    # sugar for tests and small snippets
    def __add__(self, other):
        return add(self, _lift(other, self))

    def __radd__(self, other):
        return add(_lift(other, self), self)

    def __sub__(self, other):
        return sub(self, _lift(other, self))

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, other)
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def _lift(value, like: Tensor) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=like.dtype))


@dataclass
class Node:
    """One executed operation: its inputs, its output, and its vector-Jacobian product."""

    op: str
    inputs: Tuple[Tensor, ...]
    output: Tensor
    vjp: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


@dataclass
class Record:
    """Computation record (a tape) plus the parameter registry it reports on.

    Used as a context manager; nesting is allowed and the innermost record
    receives the operations.
    """

    params: Dict[str, Tensor] = field(default_factory=dict)
    nodes: List[Node] = field(default_factory=list)

    def __enter__(self) -> "Record":
        _RECORDS.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _RECORDS.pop()

    def register(self, name: str, tensor: Tensor) -> Tensor:
        tensor.requires_grad = True
        tensor.name = name
        self.params[name] = tensor
        return tensor


_RECORDS: List[Record] = []


def active_record() -> Optional[Record]:
    return _RECORDS[-1] if _RECORDS else None


def _emit(op: str, inputs: Sequence[Tensor], out: np.ndarray, vjp) -> Tensor:
    rec = active_record()
    needs = rec is not None and any(t.requires_grad for t in inputs)
    result = Tensor(out, requires_grad=needs)
    if needs:
        rec.nodes.append(Node(op, tuple(inputs), result, vjp))
    return result


def _fail_shape(op: str, a, b) -> None:
    raise ShapeError(f"{op}: incompatible shapes {tuple(a)} and {tuple(b)}")


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> Tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        _fail_shape(op, a.shape, b.shape)


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape("add", a, b)
    return _emit(
        "add",
        (a, b),
        a.data + b.data,
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape("sub", a, b)
    return _emit(
        "sub",
        (a, b),
        a.data - b.data,
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape("mul", a, b)
    return _emit(
        "mul",
        (a, b),
        a.data * b.data,
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def scale(a: Tensor, k: float) -> Tensor:
    """Multiply by a Python scalar constant."""
    k = float(k)
    return _emit("scale", (a,), a.data * a.dtype.type(k), lambda g: (g * a.dtype.type(k),))


def sum_all(a: Tensor) -> Tensor:
    return _emit("sum", (a,), a.data.sum(), lambda g: (np.broadcast_to(g, a.shape).copy(),))


def mean_all(a: Tensor) -> Tensor:
    n = a.data.size
    return scale(sum_all(a), 1.0 / n)


# ---------------------------------------------------------------------------
# linear algebra and shape manipulation


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product over the last two axes (both operands ndim >= 2)."""
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        _fail_shape("matmul", a.shape, b.shape)
    try:
        out = np.matmul(a.data, b.data)
    except ValueError:
        _fail_shape("matmul", a.shape, b.shape)

    def vjp(g):
        ga = gb = None
        if b.requires_grad:
            if b.ndim == 2 and a.ndim > 2:
                lead = tuple(range(a.ndim - 1))
                gb = np.tensordot(a.data, g, axes=(lead, lead))
            else:
                gb = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape)
        if a.requires_grad:
            ga = _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape)
        return ga, gb

    return _emit("matmul", (a, b), out, vjp)


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    try:
        out = a.data.reshape(shape)
    except ValueError:
        _fail_shape("reshape", a.shape, shape)
    return _emit("reshape", (a,), out, lambda g: (g.reshape(a.shape),))


def transpose(a: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    if sorted(axes) != list(range(a.ndim)):
        _fail_shape("transpose", a.shape, axes)
    inverse = tuple(np.argsort(axes))
    return _emit("transpose", (a,), a.data.transpose(axes), lambda g: (g.transpose(inverse),))


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    """Concatenate along ``axis``; the backward pass slices the gradient apart."""
    tensors = tuple(tensors)
    ax = axis % tensors[0].ndim
    ref = tensors[0].shape
    for t in tensors[1:]:
        if t.ndim != len(ref) or any(t.shape[i] != ref[i] for i in range(len(ref)) if i != ax):
            _fail_shape("concat", ref, t.shape)
    bounds = np.cumsum([t.shape[ax] for t in tensors])[:-1]

    def vjp(g):
        return tuple(np.split(g, bounds, axis=ax))

    return _emit("concat", tensors, np.concatenate([t.data for t in tensors], axis=ax), vjp)


def gather(table: Tensor, ids) -> Tensor:
    """Row lookup: ``table[ids]`` for an integer array ``ids`` of any shape."""
    ids = np.asarray(ids)
    if table.ndim != 2:
        raise ShapeError(f"gather: table must be 2-D, got shape {table.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ShapeError(
            f"gather: index out of range for table shape {table.shape} and ids shape {ids.shape}"
        )

    def vjp(g):
        out = np.zeros_like(table.data)
        np.add.at(out, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        return (out,)

    return _emit("gather", (table,), table.data[ids], vjp)


# ---------------------------------------------------------------------------
# nonlinearities and normalisation


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        return (p * (g - (g * p).sum(axis=axis, keepdims=True)),)

    return _emit("softmax", (a,), p, vjp)


def _logsumexp(x: np.ndarray, axis: int, keepdims: bool = False) -> np.ndarray:
    m = x.max(axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    out = np.log(np.exp(x - m).sum(axis=axis, keepdims=True)) + m
    return out if keepdims else np.squeeze(out, axis=axis)


def logsumexp(a: Tensor, axis: int = -1) -> Tensor:
    out = _logsumexp(a.data, axis)

    def vjp(g):
        w = np.exp(a.data - np.expand_dims(out, axis))
        return (w * np.expand_dims(g, axis),)

    return _emit("logsumexp", (a,), out, vjp)


def gelu(a: Tensor) -> Tensor:
    """GELU, tanh approximation.  The only activation used in the package."""
    x = a.data
    inner = _GELU_C * (x + 0.044715 * (x * x * x))
    t = np.tanh(inner)
    out = 0.5 * x * (1.0 + t)

    def vjp(g):
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * (x * x))
        d = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner
        return (g * d,)

    return _emit("gelu", (a,), out.astype(x.dtype, copy=False), vjp)


def layer_norm(a: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalise over the last axis, then apply ``gain`` and ``bias``."""
    if gain.shape != (a.shape[-1],) or bias.shape != (a.shape[-1],):
        _fail_shape("layer_norm", a.shape, gain.shape)
    x = a.data
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gain.data + bias.data

    def vjp(g):
        gx = g * gain.data
        d = x.shape[-1]
        ga = inv / d * (d * gx - gx.sum(-1, keepdims=True) - xhat * (gx * xhat).sum(-1, keepdims=True))
        lead = tuple(range(x.ndim - 1))
        return ga, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return _emit("layer_norm", (a, gain, bias), out, vjp)


def dropout(a: Tensor, rate: float, rng: Optional[np.random.Generator], training: bool) -> Tensor:
    if not training or rate <= 0.0:
        return a
    if rng is None:
        raise ValueError("dropout: a random generator is required when rate > 0")
    keep = (rng.random(a.shape) >= rate).astype(a.dtype) / a.dtype.type(1.0 - rate)
    return _emit("dropout", (a,), a.data * keep, lambda g: (g * keep,))


def cross_entropy(logits: Tensor, targets, mask=None, reduction: str = "mean") -> Tensor:
    """Masked softmax cross-entropy over the last axis.

    ``reduction`` is ``"mean"`` (over unmasked positions), ``"sum"``, or
    ``"none"`` (per-position losses, zero where masked).
    """
    targets = np.asarray(targets)
    if logits.shape[:-1] != targets.shape:
        _fail_shape("cross_entropy", logits.shape, targets.shape)
    m = np.ones(targets.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if m.shape != targets.shape:
        _fail_shape("cross_entropy", targets.shape, m.shape)
    safe = np.where(m, targets, 0)
    x = logits.data
    lse = _logsumexp(x, -1)
    picked = np.take_along_axis(x, safe[..., None], axis=-1)[..., 0]
    per = np.where(m, lse - picked, 0.0).astype(x.dtype)
    count = max(int(m.sum()), 1)
    if reduction == "mean":
        out, factor = per.sum() / count, 1.0 / count
    elif reduction == "sum":
        out, factor = per.sum(), 1.0
    elif reduction == "none":
        out, factor = per, None
    else:
        raise ValueError(f"cross_entropy: unknown reduction {reduction!r}")

    def vjp(g):
        p = np.exp(x - lse[..., None])
        np.put_along_axis(p, safe[..., None], np.take_along_axis(p, safe[..., None], -1) - 1.0, -1)
        p *= m[..., None]
        scale_ = g[..., None] if factor is None else g * factor
        return ((p * scale_).astype(x.dtype, copy=False),)

    return _emit("cross_entropy", (logits,), np.asarray(out, dtype=x.dtype), vjp)


# ---------------------------------------------------------------------------
# reverse pass


def backward(record: Record, loss: Tensor) -> Dict[str, np.ndarray]:
    """Gradients of scalar ``loss`` for every parameter registered on ``record``.

    Parameters the loss does not depend on get zero arrays.
    """
    if loss.data.size != 1 or loss.ndim != 0:
        raise ShapeError(f"backward: loss must be a scalar, got shape {loss.shape}")
    grads: Dict[int, np.ndarray] = {id(loss): np.ones((), dtype=loss.dtype)}
    for node in reversed(record.nodes):
        g = grads.pop(id(node.output), None)
        if g is None:
            continue
        for inp, gi in zip(node.inputs, node.vjp(g)):
            if gi is None or not inp.requires_grad:
                continue
            key = id(inp)
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = gi
    out = {}
    for name, p in record.params.items():
        g = grads.get(id(p))
        out[name] = np.zeros_like(p.data) if g is None else np.asarray(g, dtype=p.dtype).reshape(p.shape)
    return out


def grad_check(
    f: Callable[[Dict[str, Tensor]], Tensor],
    params: Dict[str, Tensor],
    step: float = 1e-5,
) -> Tuple[float, Dict[str, float]]:
    """Compare analytic gradients of ``f(params)`` with central differences.

    Returns the overall maximum relative error and the maximum per parameter,
    where the relative error of one element is
    ``|a - n| / max(1e-8, |a| + |n|)``.
    """
    if step <= 0:
        raise ValueError("grad_check: step must be positive")
    with Record(dict(params)) as rec:
        for name, t in params.items():
            t.requires_grad = True
            t.name = name
        loss = f(params)
    analytic = backward(rec, loss)

    def value() -> float:
        v = float(f(params).data)
        return v

    per_param: Dict[str, float] = {}
    for name, t in params.items():
        flat = t.data.reshape(-1)
        worst = 0.0
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = value()
            flat[i] = orig - step
            down = value()
            flat[i] = orig
            if not (math.isfinite(up) and math.isfinite(down)):
                raise NumericError(f"grad_check: non-finite loss while perturbing {name}[{i}]")
            numeric = (up - down) / (2 * step)
            a = float(analytic[name].reshape(-1)[i])
            if not math.isfinite(a):
                raise NumericError(f"grad_check: non-finite analytic gradient for {name}[{i}]")
            err = abs(a - numeric) / max(1e-8, abs(a) + abs(numeric))
            worst = max(worst, err)
        per_param[name] = worst
    return (max(per_param.values()) if per_param else 0.0), per_param
