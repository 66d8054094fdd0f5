"""
autodiff/tensor.py - dense tensors with tape-based reverse-mode autodiff.

* Tensor   - a row-major numpy array plus requires_grad / grad slots
* Tape     - ordered record of operations; backward replays it in reverse
* record() - the single entry point every differentiable op goes through,
             so layers elsewhere (layer_norm, roll, hfft, cross_entropy)
             register their own backward rules the same way

Operations are recorded only while a Tape is active (``with Tape() as t:``)
and only when at least one input requires a gradient. Outside a tape every
op is a plain forward computation.
"""

from __future__ import annotations

import math
import os
import threading
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import erf

from utils.errors import ContractError, NonFiniteError, ShapeError

ArrayLike = Union["Tensor", np.ndarray, float, int, Sequence[float]]
BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_FLOAT_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))
_default_dtype = np.dtype(np.float32)
_check_finite = os.environ.get("RHMIXER_DEBUG_FINITE", "") not in ("", "0")
_local = threading.local()


def set_debug_finite(enabled: bool) -> bool:
    """Toggle NaN/Inf checks on every recorded op; returns the old setting."""
    global _check_finite
    old = _check_finite
    _check_finite = bool(enabled)
    return old


# ---------------------------------------------------------------------
# Tensor
# ---------------------------------------------------------------------


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name", "_tape")

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        dtype=None,
        name: Optional[str] = None,
    ) -> None:
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in _FLOAT_DTYPES:
            arr = arr.astype(_default_dtype)
        self.data: np.ndarray = np.require(arr, requirements="C")
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self._tape: Optional[Tape] = None

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

    def item(self) -> float:
        if self.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self) -> "Tensor":
        return transpose_last2(self)

    def sum(self, axis: int) -> "Tensor":
        return reduce(self, axis, "sum")

    def mean(self, axis: int) -> "Tensor":
        return reduce(self, axis, "mean")

    def __add__(self, other: ArrayLike) -> "Tensor":
        return add(self, other)

    def __sub__(self, other: ArrayLike) -> "Tensor":
        return sub(self, other)

    def __mul__(self, other: ArrayLike) -> "Tensor":
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other: ArrayLike) -> "Tensor":
        return matmul(self, other)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"


def as_tensor(x: ArrayLike, dtype=None) -> Tensor:
    if isinstance(x, Tensor) and (dtype is None or x.dtype == np.dtype(dtype)):
        return x
    return Tensor(x, dtype=dtype)


# ---------------------------------------------------------------------
# Tape
# ---------------------------------------------------------------------


@dataclass(frozen=True)
class TapeRecord:
    op: str
    inputs: Tuple[Tensor, ...]
    output: Tensor
    backward: BackwardFn


def _stack() -> List["Tape"]:
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = []
        _local.stack = stack
    return stack


def active_tape() -> Optional["Tape"]:
    stack = _stack()
    return stack[-1] if stack else None


class Tape:
    """
    Ordered list of recorded ops. Inputs of a record are always produced
    earlier on the tape (or are leaves), so reverse order is a valid
    topological order for gradient propagation.
    """

    def __init__(self) -> None:
        self.records: List[TapeRecord] = []

    def __enter__(self) -> "Tape":
        _stack().append(self)
        return self

    def __exit__(self, *exc) -> bool:
        _stack().remove(self)
        return False

    def __len__(self) -> int:
        return len(self.records)

    def backward(self, loss: Tensor) -> None:
        """
        Propagate d(loss)/d(.) to every requires_grad tensor reachable from
        loss. Gradients add onto existing .grad; call zero_grad() to reset.
        """
        if loss.size != 1:
            raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
        if loss._tape is not self:
            raise ContractError("loss was not produced through ops recorded on this tape")

        grads: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        owners: Dict[int, Tensor] = {id(loss): loss}

        for rec in reversed(self.records):
            g = grads.get(id(rec.output))
            if g is None:
                continue
            for inp, gi in zip(rec.inputs, rec.backward(g)):
                if gi is None or not inp.requires_grad:
                    continue
                gi = np.asarray(gi, dtype=inp.dtype).reshape(inp.shape)
                key = id(inp)
                if key in grads:
                    grads[key] = grads[key] + gi
                else:
                    grads[key] = gi
                    owners[key] = inp

        for key, g in grads.items():
            t = owners[key]
            t.grad = g.copy() if t.grad is None else t.grad + g


def record(op: str, inputs: Sequence[Tensor], data: np.ndarray, backward_fn: BackwardFn) -> Tensor:
    """
    Wrap a forward result and, when a tape is active and any input needs a
    gradient, append the op and its backward rule to the tape.
    """
    data = np.asarray(data)
    if _check_finite and not np.all(np.isfinite(data)):
        raise NonFiniteError(f"{op} produced non-finite values (shape {data.shape})")
    out = Tensor(data, dtype=data.dtype if data.dtype in _FLOAT_DTYPES else None)
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out._tape = tape
        tape.records.append(TapeRecord(op, tuple(inputs), out, backward_fn))
    return out


def backward(loss: Tensor) -> None:
    if loss._tape is None:
        raise ContractError("loss was not produced through tape-recorded ops")
    loss._tape.backward(loss)


# ---------------------------------------------------------------------
# Linear algebra and layout
# ---------------------------------------------------------------------


def matmul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs rank >= 2 operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner extents differ: {a.shape} x {b.shape}")
    if a.ndim > 2 and b.ndim > 2 and a.shape[:-2] != b.shape[:-2]:
        raise ShapeError(f"matmul batch prefixes differ: {a.shape} x {b.shape}")

    def _backward(g: np.ndarray):
        bt = np.swapaxes(b.data, -1, -2)
        at = np.swapaxes(a.data, -1, -2)
        if a.ndim == 2 and g.ndim > 2:
            ga = np.matmul(g, bt).reshape(-1, *a.shape).sum(axis=0)
        else:
            ga = np.matmul(g, bt)
        if b.ndim == 2 and g.ndim > 2:
            gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        else:
            gb = np.matmul(at, g)
        return ga, gb

    return record("matmul", (a, b), np.matmul(a.data, b.data), _backward)


def transpose_last2(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    if x.ndim < 2:
        raise ShapeError(f"transpose needs rank >= 2, got shape {x.shape}")

    def _backward(g: np.ndarray):
        return (np.swapaxes(g, -1, -2),)

    return record("transpose", (x,), np.swapaxes(x.data, -1, -2), _backward)


def reshape(x: ArrayLike, new_shape: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    shape = tuple(int(s) for s in new_shape)
    if shape.count(-1) == 1:
        known = math.prod(s for s in shape if s != -1)
        if known > 0 and x.size % known == 0:
            shape = tuple(x.size // known if s == -1 else s for s in shape)
    if any(s <= 0 for s in shape) or math.prod(shape) != x.size:
        raise ShapeError(f"cannot reshape {x.shape} ({x.size} elements) to {tuple(new_shape)}")
    old = x.shape

    def _backward(g: np.ndarray):
        return (g.reshape(old),)

    return record("reshape", (x,), x.data.reshape(shape), _backward)


# ---------------------------------------------------------------------
# Elementwise
# ---------------------------------------------------------------------

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def elementwise(
    x: ArrayLike,
    y: Optional[ArrayLike] = None,
    kind: str = "add",
    factor: float = 1.0,
) -> Tensor:
    x = as_tensor(x)
    if kind in ("add", "sub", "mul"):
        if y is None:
            raise ContractError(f"{kind} needs two operands")
        y = as_tensor(y, dtype=x.dtype)
        if x.shape != y.shape:
            raise ShapeError(f"{kind} needs equal shapes, got {x.shape} and {y.shape}")
        xd, yd = x.data, y.data
        if kind == "add":
            return record("add", (x, y), xd + yd, lambda g: (g, g))
        if kind == "sub":
            return record("sub", (x, y), xd - yd, lambda g: (g, -g))
        return record("mul", (x, y), xd * yd, lambda g: (g * yd, g * xd))

    if kind == "scale":
        c = float(factor)
        return record("scale", (x,), x.data * x.dtype.type(c), lambda g: (g * c,))

    if kind == "gelu":
        xd = x.data
        cdf = 0.5 * (1.0 + erf(xd / _SQRT2))

        def _backward(g: np.ndarray):
            pdf = np.exp(-0.5 * xd * xd) * _INV_SQRT_2PI
            return (g * (cdf + xd * pdf),)

        return record("gelu", (x,), (xd * cdf).astype(x.dtype, copy=False), _backward)

    raise ContractError(f"unknown elementwise kind {kind!r}")


def add(x: ArrayLike, y: ArrayLike) -> Tensor:
    return elementwise(x, y, "add")


def sub(x: ArrayLike, y: ArrayLike) -> Tensor:
    return elementwise(x, y, "sub")


def mul(x: ArrayLike, y: ArrayLike) -> Tensor:
    return elementwise(x, y, "mul")


def scale(x: ArrayLike, factor: float) -> Tensor:
    return elementwise(x, kind="scale", factor=factor)


def gelu(x: ArrayLike) -> Tensor:
    return elementwise(x, kind="gelu")


def add_bias(x: ArrayLike, bias: ArrayLike) -> Tensor:
    """x[..., j] + bias[j]."""
    x = as_tensor(x)
    bias = as_tensor(bias, dtype=x.dtype)
    if bias.ndim != 1 or bias.shape[0] != x.shape[-1]:
        raise ShapeError(f"bias of shape {bias.shape} does not match last axis of {x.shape}")
    width = x.shape[-1]

    def _backward(g: np.ndarray):
        return g, g.reshape(-1, width).sum(axis=0)

    return record("add_bias", (x, bias), x.data + bias.data, _backward)


# ---------------------------------------------------------------------
# Reductions
# ---------------------------------------------------------------------


def reduce(x: ArrayLike, axis: int, kind: str = "sum") -> Tensor:
    x = as_tensor(x)
    if not -x.ndim <= axis < x.ndim:
        raise ShapeError(f"axis {axis} out of range for shape {x.shape}")
    ax = axis % x.ndim
    n = x.shape[ax]

    if kind == "sum":
        out = x.data.sum(axis=ax)

        def _backward(g: np.ndarray):
            return (np.broadcast_to(np.expand_dims(g, ax), x.shape).copy(),)

    elif kind == "mean":
        out = x.data.mean(axis=ax)

        def _backward(g: np.ndarray):
            return (np.broadcast_to(np.expand_dims(g / n, ax), x.shape).copy(),)

    elif kind == "max":
        out = x.data.max(axis=ax)
        mask = x.data == np.expand_dims(out, ax)
        counts = mask.sum(axis=ax, keepdims=True)

        def _backward(g: np.ndarray):
            return (mask * (np.expand_dims(g, ax) / counts),)

    else:
        raise ContractError(f"unknown reduction kind {kind!r}")

    return record(f"reduce_{kind}", (x,), np.asarray(out, dtype=x.dtype), _backward)


def sum_all(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    return reduce(reshape(x, (x.size,)), 0, "sum")


def weighted_sum(x: ArrayLike, weights: np.ndarray) -> Tensor:
    """<x, weights> as a scalar; the usual way to make a test loss."""
    x = as_tensor(x)
    return sum_all(mul(x, Tensor(np.asarray(weights), dtype=x.dtype)))
