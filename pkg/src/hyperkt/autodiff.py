"""Dense float64 tensors with reverse-mode gradient accumulation.

Eager, single-tape design: every op appends its backward rule to a
thread-local tape in execution order (which is automatically topological),
and ``backward`` consumes the tape in reverse. Tensors are immutable after
creation except their ``grad`` buffer; a tape and its tensors belong to one
thread.
"""

from __future__ import annotations

import threading
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, ShapeError, TapeError

# Inputs this far below a domain edge (arccosh at 1, sqrt/log at 0) are
# treated as rounding noise and clamped; anything worse is an error.
DOMAIN_TOL = 1e-9


class Tensor:
    """A dense float64 array plus an optional gradient buffer."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad) and _grad_enabled()
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.data.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # Arithmetic sugar; all routing goes through the op registry below.
    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return mul(_wrap(other), self)

    def __truediv__(self, other):
        return div(self, _wrap(other))

    def __rtruediv__(self, other):
        return div(_wrap(other), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, _wrap(other))

    def __getitem__(self, key):
        return index(self, key)


def _wrap(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


class Tape:
    """Ordered record of executed ops; parents always precede children."""

    def __init__(self):
        self.entries: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []
        self.consumed = False

    def record(self, out: Tensor, parents: tuple[Tensor, ...], backward_fn: Callable) -> None:
        self.entries.append((out, parents, backward_fn))

    def __len__(self) -> int:
        return len(self.entries)


_state = threading.local()


def _grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


def active_tape() -> Tape:
    tape = getattr(_state, "tape", None)
    if tape is None or tape.consumed:
        tape = Tape()
        _state.tape = tape
    return tape


def reset_tape() -> None:
    _state.tape = Tape()


class no_grad:
    """Context manager that suspends tape recording."""

    def __enter__(self):
        self._prev = _grad_enabled()
        _state.grad_enabled = False
        return self

    def __exit__(self, *exc):
        _state.grad_enabled = self._prev
        return False


def _finite_or_raise(op: str, arr: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise DomainError(op, "non-finite result")
    return arr


def _make(op: str, data: np.ndarray, parents: tuple[Tensor, ...], backward_fn: Callable) -> Tensor:
    _finite_or_raise(op, data)
    out = Tensor(data)
    if _grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        active_tape().record(out, parents, backward_fn)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to the original operand shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def _check_broadcast(op: str, a: np.ndarray, b: np.ndarray) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


# ---------------------------------------------------------------------------
# Elementwise ops

def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    _check_broadcast("add", a.data, b.data)
    data = a.data + b.data

    def bwd(g, acc):
        acc(a, _unbroadcast(g, a.shape))
        acc(b, _unbroadcast(g, b.shape))

    return _make("add", data, (a, b), bwd)


def sub(a: Tensor, b: Tensor) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    _check_broadcast("sub", a.data, b.data)
    data = a.data - b.data

    def bwd(g, acc):
        acc(a, _unbroadcast(g, a.shape))
        acc(b, _unbroadcast(-g, b.shape))

    return _make("sub", data, (a, b), bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    _check_broadcast("mul", a.data, b.data)
    data = a.data * b.data

    def bwd(g, acc):
        acc(a, _unbroadcast(g * b.data, a.shape))
        acc(b, _unbroadcast(g * a.data, b.shape))

    return _make("mul", data, (a, b), bwd)


def div(a: Tensor, b: Tensor) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    _check_broadcast("div", a.data, b.data)
    if np.any(b.data == 0.0):
        raise DomainError("div", "division by zero")
    data = a.data / b.data

    def bwd(g, acc):
        acc(a, _unbroadcast(g / b.data, a.shape))
        acc(b, _unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return _make("div", data, (a, b), bwd)


def neg(a: Tensor) -> Tensor:
    a = _wrap(a)

    def bwd(g, acc):
        acc(a, -g)

    return _make("neg", -a.data, (a,), bwd)


def exp(a: Tensor) -> Tensor:
    a = _wrap(a)
    data = np.exp(a.data)

    def bwd(g, acc):
        acc(a, g * data)

    return _make("exp", data, (a,), bwd)


def log(a: Tensor) -> Tensor:
    a = _wrap(a)
    if np.any(a.data < DOMAIN_TOL):
        raise DomainError("log", "input must be > 0")
    data = np.log(a.data)

    def bwd(g, acc):
        acc(a, g / a.data)

    return _make("log", data, (a,), bwd)


def sigmoid(a: Tensor) -> Tensor:
    a = _wrap(a)
    x = a.data
    data = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))

    def bwd(g, acc):
        acc(a, g * data * (1.0 - data))

    return _make("sigmoid", data, (a,), bwd)


def tanh(a: Tensor) -> Tensor:
    a = _wrap(a)
    data = np.tanh(a.data)

    def bwd(g, acc):
        acc(a, g * (1.0 - data * data))

    return _make("tanh", data, (a,), bwd)


def cosh(a: Tensor) -> Tensor:
    a = _wrap(a)
    data = np.cosh(a.data)

    def bwd(g, acc):
        acc(a, g * np.sinh(a.data))

    return _make("cosh", data, (a,), bwd)


def sinh(a: Tensor) -> Tensor:
    a = _wrap(a)
    data = np.sinh(a.data)

    def bwd(g, acc):
        acc(a, g * np.cosh(a.data))

    return _make("sinh", data, (a,), bwd)


def arccosh(a: Tensor) -> Tensor:
    a = _wrap(a)
    if np.any(a.data < 1.0 - DOMAIN_TOL):
        raise DomainError("arccosh", "input must be >= 1")
    # On-manifold rounding can land infinitesimally below 1.
    x = np.maximum(a.data, 1.0)
    data = np.arccosh(x)

    def bwd(g, acc):
        acc(a, g / np.sqrt(np.maximum(x * x - 1.0, 1e-15)))

    return _make("arccosh", data, (a,), bwd)


def sqrt(a: Tensor) -> Tensor:
    a = _wrap(a)
    if np.any(a.data < -DOMAIN_TOL):
        raise DomainError("sqrt", "input must be >= 0")
    x = np.maximum(a.data, 0.0)
    data = np.sqrt(x)

    def bwd(g, acc):
        acc(a, g / (2.0 * np.maximum(data, 1e-12)))

    return _make("sqrt", data, (a,), bwd)


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    a = _wrap(a)
    mask = a.data > 0
    data = np.where(mask, a.data, slope * a.data)

    def bwd(g, acc):
        acc(a, g * np.where(mask, 1.0, slope))

    return _make("leaky_relu", data, (a,), bwd)


def clamp(a: Tensor, lo: float | None = None, hi: float | None = None) -> Tensor:
    a = _wrap(a)
    data = np.clip(a.data, lo, hi)
    inside = np.ones_like(a.data, dtype=bool)
    if lo is not None:
        inside &= a.data >= lo
    if hi is not None:
        inside &= a.data <= hi

    def bwd(g, acc):
        acc(a, g * inside)

    return _make("clamp", data, (a,), bwd)


# ---------------------------------------------------------------------------
# Structural ops

def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    A, B = a.data, b.data
    if A.ndim not in (1, 2) or B.ndim not in (1, 2):
        raise ShapeError(f"matmul supports 1-D/2-D operands, got {A.ndim}-D and {B.ndim}-D")
    A2 = A[None, :] if A.ndim == 1 else A
    B2 = B[:, None] if B.ndim == 1 else B
    if A2.shape[1] != B2.shape[0]:
        raise ShapeError(f"matmul inner extents differ: {A.shape} vs {B.shape}")
    out2 = A2 @ B2
    data = out2
    if A.ndim == 1:
        data = data[0]
    if B.ndim == 1:
        data = data[..., 0]

    def bwd(g, acc):
        g2 = np.asarray(g, dtype=np.float64).reshape(out2.shape)
        acc(a, (g2 @ B2.T).reshape(A.shape))
        acc(b, (A2.T @ g2).reshape(B.shape))

    return _make("matmul", data, (a, b), bwd)


def concat(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    parts = [_wrap(p) for p in parts]
    if not parts:
        raise ShapeError("concat of empty list")
    ref = parts[0].data.shape
    for p in parts[1:]:
        s = p.data.shape
        if len(s) != len(ref) or any(s[i] != ref[i] for i in range(len(ref)) if i != axis % max(len(ref), 1)):
            raise ShapeError(f"concat extents disagree off axis {axis}: {ref} vs {s}")
    data = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]

    def bwd(g, acc):
        offset = 0
        for p, n in zip(parts, sizes):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(offset, offset + n)
            acc(p, g[tuple(sl)])
            offset += n

    return _make("concat", data, tuple(parts), bwd)


def tsum(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    a = _wrap(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def bwd(g, acc):
        if axis is None:
            acc(a, np.broadcast_to(g, a.shape).copy())
        else:
            gg = g if keepdims else np.expand_dims(g, axis)
            acc(a, np.broadcast_to(gg, a.shape).copy())

    return _make("sum", data, (a,), bwd)


def tmean(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    a = _wrap(a)
    count = a.size if axis is None else a.shape[axis]
    return tsum(a, axis=axis, keepdims=keepdims) / float(count)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    a = _wrap(a)
    data = a.data.reshape(shape)

    def bwd(g, acc):
        acc(a, g.reshape(a.shape))

    return _make("reshape", data, (a,), bwd)


def index(a: Tensor, key) -> Tensor:
    """Basic (slice/int) indexing with scatter-style backward."""
    a = _wrap(a)
    data = a.data[key]

    def bwd(g, acc):
        buf = np.zeros_like(a.data)
        buf[key] += g
        acc(a, buf)

    return _make("index", np.array(data, copy=True), (a,), bwd)


def gather_rows(a: Tensor, idx: np.ndarray) -> Tensor:
    """out[i] = a[idx[i]]; duplicate indices accumulate in backward."""
    a = _wrap(a)
    idx = np.asarray(idx, dtype=np.int64)
    if a.data.ndim < 1:
        raise ShapeError("gather_rows needs at least 1-D input")
    data = a.data[idx]

    def bwd(g, acc):
        buf = np.zeros_like(a.data)
        np.add.at(buf, idx, g)
        acc(a, buf)

    return _make("gather_rows", data, (a,), bwd)


def scatter_sum(src: Tensor, idx: np.ndarray, num_rows: int) -> Tensor:
    """out[r] = sum of src rows j with idx[j] == r."""
    src = _wrap(src)
    idx = np.asarray(idx, dtype=np.int64)
    if idx.shape[0] != src.data.shape[0]:
        raise ShapeError("scatter_sum index length must match leading extent")
    out_shape = (num_rows,) + src.data.shape[1:]
    data = np.zeros(out_shape, dtype=np.float64)
    np.add.at(data, idx, src.data)

    def bwd(g, acc):
        acc(src, g[idx])

    return _make("scatter_sum", data, (src,), bwd)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    """Shift-stable softmax; the max shift is a constant, so gradients are exact."""
    shift = Tensor(np.max(a.data, axis=axis, keepdims=True))
    e = exp(sub(a, shift))
    return div(e, tsum(e, axis=axis, keepdims=True))


# ---------------------------------------------------------------------------
# Backward pass and validation

def backward(root: Tensor) -> None:
    """Populate ``grad`` on every requires_grad ancestor of a scalar root."""
    if root.data.size != 1:
        raise ShapeError(f"backward root must be scalar, got shape {root.data.shape}")
    tape = getattr(_state, "tape", None)
    if tape is None:
        raise TapeError("no active tape")
    if tape.consumed:
        raise TapeError("tape already consumed by a previous backward")

    pending: dict[int, np.ndarray] = {}
    holders: dict[int, Tensor] = {}

    def acc_into(target: Tensor, grad: np.ndarray) -> None:
        if not target.requires_grad:
            return
        key = id(target)
        holders[key] = target
        if key in pending:
            pending[key] = pending[key] + grad
        else:
            pending[key] = np.array(grad, dtype=np.float64, copy=True)

    acc_into(root, np.ones_like(root.data))
    for out, _, fn in reversed(tape.entries):
        g = pending.pop(id(out), None)
        if g is None:
            continue
        fn(g, acc_into)

    # Whatever survived the walk was produced by no op: these are the leaves.
    for key, grad in pending.items():
        leaf = holders[key]
        leaf.grad = grad if leaf.grad is None else leaf.grad + grad

    tape.consumed = True
    tape.entries.clear()


def grad_check(f: Callable[[Tensor], Tensor], x: Tensor, eps: float = 1e-5) -> float:
    """Max relative gap between analytic and central-difference gradients."""
    if not (1e-7 < eps < 1e-3):
        raise DomainError("grad_check", f"eps {eps} outside (1e-7, 1e-3)")
    reset_tape()
    leaf = Tensor(x.data.copy(), requires_grad=True)
    out = f(leaf)
    if out.data.size != 1:
        raise ShapeError("grad_check target must return a scalar")
    backward(out)
    analytic = np.zeros_like(leaf.data) if leaf.grad is None else leaf.grad
    analytic = analytic.ravel()

    flat = x.data.ravel()
    numeric = np.empty_like(analytic)
    with no_grad():
        for i in range(flat.size):
            bump = np.zeros_like(flat)
            bump[i] = eps
            up = f(Tensor((flat + bump).reshape(x.shape))).item()
            dn = f(Tensor((flat - bump).reshape(x.shape))).item()
            numeric[i] = (up - dn) / (2.0 * eps)
    rel = np.abs(analytic - numeric) / (np.abs(analytic) + eps)
    return float(rel.max()) if rel.size else 0.0


# Registries used by dispatch and by the exhaustive gradient tests.
UNARY_OPS: dict[str, Callable[[Tensor], Tensor]] = {
    "neg": neg,
    "exp": exp,
    "log": log,
    "sigmoid": sigmoid,
    "tanh": tanh,
    "cosh": cosh,
    "sinh": sinh,
    "arccosh": arccosh,
    "sqrt": sqrt,
    "leaky_relu": leaky_relu,
}

BINARY_OPS: dict[str, Callable[[Tensor, Tensor], Tensor]] = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "div": div,
}

# Valid sampling interval per op for randomized gradient checks.
OP_DOMAINS: dict[str, tuple[float, float]] = {
    "neg": (-2.0, 2.0),
    "exp": (-2.0, 2.0),
    "log": (0.1, 2.0),
    "sigmoid": (-2.0, 2.0),
    "tanh": (-2.0, 2.0),
    "cosh": (-2.0, 2.0),
    "sinh": (-2.0, 2.0),
    "arccosh": (1.05, 3.0),
    "sqrt": (0.1, 4.0),
    "leaky_relu": (-2.0, 2.0),
    "add": (-2.0, 2.0),
    "sub": (-2.0, 2.0),
    "mul": (-2.0, 2.0),
    "div": (0.2, 2.0),
}


def elementwise(kind: str, a: Tensor, b: Tensor | None = None) -> Tensor:
    """Dispatch an elementwise op by name."""
    if kind in UNARY_OPS:
        if b is not None:
            raise ShapeError(f"{kind} is unary")
        return UNARY_OPS[kind](a)
    if kind in BINARY_OPS:
        if b is None:
            raise ShapeError(f"{kind} needs two operands")
        return BINARY_OPS[kind](a, b)
    raise DomainError("elementwise", f"unknown op kind {kind!r}")
