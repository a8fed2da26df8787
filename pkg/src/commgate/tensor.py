"""Tape-based reverse-mode automatic differentiation over numpy arrays.

Every differentiable operation appends a record to the active :class:`Tape`.
Since inputs are always created before outputs, the append order is already a
topological order, and :func:`backward` simply walks the tape in reverse.

Values are float64 throughout. Elementwise binary ops accept equal shapes,
a scalar operand, or a trailing-vector operand (bias add); anything else must
be expanded explicitly with :func:`broadcast_to`.
"""
from __future__ import annotations

import threading
from contextlib import contextmanager
from typing import Iterable, Sequence

import numpy as np

DTYPE = np.float64


class ShapeError(ValueError):
    """Raised when an op receives inputs whose shapes it cannot combine."""


class GraphError(RuntimeError):
    """Raised on misuse of a tape, e.g. a second backward pass."""


class Tape:
    """Append-only record of the operations executed while it is active."""

    def __init__(self) -> None:
        self.nodes: list[Tensor] = []
        self.consumed = False

    def record(self, node: "Tensor") -> None:
        if self.consumed:
            raise GraphError("tape already consumed by backward(); start a new tape")
        self.nodes.append(node)

    def __len__(self) -> int:
        return len(self.nodes)

    def __enter__(self) -> "Tape":
        _state.stack.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _state.stack.pop()


class _State(threading.local):
    def __init__(self) -> None:
        self.stack: list[Tape] = []
        self.grad_enabled = True


_state = _State()


def current_tape() -> Tape:
    """Return the innermost active tape, creating a thread default if needed."""
    if not _state.stack:
        _state.stack.append(Tape())
    return _state.stack[-1]


@contextmanager
def no_grad():
    """Evaluate without recording anything (rollout-only inference)."""
    prev = _state.grad_enabled
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = prev


class Tensor:
    """A dense float64 array with an optional gradient slot."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False) -> None:
        self.data = np.asarray(data, dtype=DTYPE)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None
        self.op = "leaf"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self.op}{flag})"

    # operator sugar
    def __add__(self, other): return add(self, other)
    def __radd__(self, other): return add(other, self)
    def __sub__(self, other): return sub(self, other)
    def __rsub__(self, other): return sub(other, self)
    def __mul__(self, other): return mul(self, other)
    def __rmul__(self, other): return mul(other, self)
    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return mul(self, reciprocal(other))
        return mul(self, 1.0 / float(other))
    def __neg__(self): return mul(self, -1.0)
    def __matmul__(self, other): return matmul(self, other)
    def __getitem__(self, idx): return slice_(self, idx)

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def sum(self, axis=None, keepdims=False): return sum_(self, axis, keepdims)
    def mean(self, axis=None, keepdims=False): return mean(self, axis, keepdims)
    def reshape(self, *shape): return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], (tuple, list)) else shape)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data) -> Tensor:
    """A leaf that accumulates gradient."""
    return Tensor(np.array(data, dtype=DTYPE), requires_grad=True)


def _make(data: np.ndarray, parents: tuple[Tensor, ...], backward, op: str) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.op = op
    out._parents = ()
    out._backward = None
    out.requires_grad = False
    if not _state.grad_enabled:
        return out
    for p in parents:
        if p.requires_grad:
            break
    else:
        return out
    out.requires_grad = True
    out._parents = parents
    out._backward = backward
    current_tape().record(out)
    return out


def backward(loss: Tensor) -> dict[Tensor, np.ndarray]:
    """Back-propagate from a scalar ``loss`` through the active tape.

    Leaf gradients accumulate into ``.grad``; the returned mapping holds the
    gradient of every leaf reached. The tape is consumed: a second call on the
    same tape raises :class:`GraphError`.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.shape}")
    tape = current_tape()
    if tape.consumed:
        raise GraphError("backward() already called on this tape")
    if not loss.requires_grad:
        tape.consumed = True
        return {}
    loss.grad = np.ones_like(loss.data)
    leaves: dict[Tensor, np.ndarray] = {}
    for node in reversed(tape.nodes):
        g = node.grad
        if g is None:
            continue
        grads = node._backward(g)
        node.grad = None
        for parent, pg in zip(node._parents, grads):
            if pg is None or not parent.requires_grad:
                continue
            if parent.grad is None:
                parent.grad = pg
            else:
                parent.grad = parent.grad + pg
            if parent._backward is None:
                leaves[parent] = parent.grad
    tape.consumed = True
    tape.nodes.clear()
    return leaves


# ----------------------------------------------------------------------------
# elementwise arithmetic

def _binary_kind(op: str, a: Tensor, b: Tensor) -> str:
    if a.shape == b.shape:
        return "same"
    if b.size == 1 and b.ndim <= 1:
        return "scalar_b"
    if a.size == 1 and a.ndim <= 1:
        return "scalar_a"
    if b.ndim == 1 and a.ndim >= 1 and a.shape[-1] == b.shape[0]:
        return "bias_b"
    if a.ndim == 1 and b.ndim >= 1 and b.shape[-1] == a.shape[0]:
        return "bias_a"
    raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}")


def _reduce_to(g: np.ndarray, kind: str, shape: tuple[int, ...]) -> np.ndarray:
    if kind == "same":
        return g
    if kind == "scalar":
        return np.full(shape, g.sum(), dtype=DTYPE)
    # bias: sum over every leading axis
    return g.reshape(-1, shape[0]).sum(axis=0)


def _side_kinds(kind: str) -> tuple[str, str]:
    return {
        "same": ("same", "same"),
        "scalar_b": ("same", "scalar"),
        "scalar_a": ("scalar", "same"),
        "bias_b": ("same", "bias"),
        "bias_a": ("bias", "same"),
    }[kind]


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    kind = _binary_kind("add", a, b)
    ka, kb = _side_kinds(kind)
    sa, sb = a.shape, b.shape
    if kind == "scalar_b":
        data = a.data + b.data.reshape(())
    elif kind == "scalar_a":
        data = a.data.reshape(()) + b.data
    else:
        data = a.data + b.data

    def _bw(g):
        return _reduce_to(g, ka, sa), _reduce_to(g, kb, sb)

    return _make(data, (a, b), _bw, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    kind = _binary_kind("sub", a, b)
    ka, kb = _side_kinds(kind)
    sa, sb = a.shape, b.shape
    if kind == "scalar_b":
        data = a.data - b.data.reshape(())
    elif kind == "scalar_a":
        data = a.data.reshape(()) - b.data
    else:
        data = a.data - b.data

    def _bw(g):
        return _reduce_to(g, ka, sa), _reduce_to(-g, kb, sb)

    return _make(data, (a, b), _bw, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    kind = _binary_kind("mul", a, b)
    ka, kb = _side_kinds(kind)
    ad, bd = a.data, b.data
    if kind == "scalar_b":
        bd = bd.reshape(())
    elif kind == "scalar_a":
        ad = ad.reshape(())
    data = ad * bd
    sa, sb = a.shape, b.shape

    def _bw(g):
        ga = _reduce_to(g * bd, ka, sa) if a.requires_grad else None
        gb = _reduce_to(g * ad, kb, sb) if b.requires_grad else None
        return ga, gb

    return _make(data, (a, b), _bw, "mul")


def reciprocal(x: Tensor) -> Tensor:
    x = as_tensor(x)
    data = 1.0 / x.data
    return _make(data, (x,), lambda g: (-g * data * data,), "reciprocal")


def maximum(a, b) -> Tensor:
    """Elementwise max; ties send the gradient to ``a``."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"maximum: incompatible shapes {a.shape} and {b.shape}")
    pick_a = a.data >= b.data
    data = np.where(pick_a, a.data, b.data)
    return _make(data, (a, b), lambda g: (g * pick_a, g * ~pick_a), "maximum")


# ----------------------------------------------------------------------------
# unary nonlinearities

def tanh(x: Tensor) -> Tensor:
    data = np.tanh(x.data)
    return _make(data, (x,), lambda g: (g * (1.0 - data * data),), "tanh")


def _sigmoid_np(z: np.ndarray) -> np.ndarray:
    # tanh form never overflows
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def sigmoid(x: Tensor) -> Tensor:
    data = _sigmoid_np(x.data)
    return _make(data, (x,), lambda g: (g * data * (1.0 - data),), "sigmoid")


def exp(x: Tensor) -> Tensor:
    data = np.exp(x.data)
    return _make(data, (x,), lambda g: (g * data,), "exp")


def log(x: Tensor) -> Tensor:
    xd = x.data
    return _make(np.log(xd), (x,), lambda g: (g / xd,), "log")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    data = e / e.sum(axis=axis, keepdims=True)

    def _bw(g):
        return (data * (g - (g * data).sum(axis=axis, keepdims=True)),)

    return _make(data, (x,), _bw, "softmax")


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    data = z - lse

    def _bw(g):
        p = np.exp(data)
        return (g - p * g.sum(axis=axis, keepdims=True),)

    return _make(data, (x,), _bw, "log_softmax")


def stop_gradient(x: Tensor) -> Tensor:
    """Same value as ``x``; nothing flows back through this edge."""
    return Tensor(x.data)


# ----------------------------------------------------------------------------
# reductions

def _norm_axis(axis, ndim):
    if axis is None:
        return None
    if isinstance(axis, int):
        return (axis % ndim,)
    return tuple(a % ndim for a in axis)


def sum_(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axis(axis, x.ndim)
    data = x.data.sum(axis=axes, keepdims=keepdims)
    shape = x.shape

    def _bw(g):
        if axes is not None and not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, shape),)

    return _make(np.asarray(data, dtype=DTYPE), (x,), _bw, "sum")


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axis(axis, x.ndim)
    count = x.size if axes is None else int(np.prod([x.shape[a] for a in axes]))
    return mul(sum_(x, axis, keepdims), 1.0 / count)


# ----------------------------------------------------------------------------
# linear algebra and shape plumbing

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the last two axes; leading batch axes must agree."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2] or (
        a.ndim > 2 and b.ndim > 2 and a.shape[:-2] != b.shape[:-2]
    ):
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    ad, bd = a.data, b.data
    if bd.ndim == 2 and ad.ndim > 2:
        # fold leading axes so the product and both gradients are single 2-D calls
        a2 = ad.reshape(-1, ad.shape[-1])
        data = (a2 @ bd).reshape(ad.shape[:-1] + (bd.shape[-1],))

        def _bw(g):
            g2 = g.reshape(-1, g.shape[-1])
            ga = (g2 @ bd.T).reshape(ad.shape) if a.requires_grad else None
            gb = a2.T @ g2 if b.requires_grad else None
            return ga, gb

        return _make(data, (a, b), _bw, "matmul")
    data = ad @ bd

    def _bw(g):
        ga = gb = None
        if a.requires_grad:
            ga = g @ np.swapaxes(bd, -1, -2)
            if ga.ndim > ad.ndim:
                ga = ga.reshape((-1,) + ad.shape).sum(axis=0)
        if b.requires_grad:
            gb = np.swapaxes(ad, -1, -2) @ g
            if gb.ndim > bd.ndim:
                gb = gb.reshape((-1,) + bd.shape).sum(axis=0)
        return ga, gb

    return _make(data, (a, b), _bw, "matmul")


def transpose(x: Tensor) -> Tensor:
    """Swap the last two axes."""
    if x.ndim < 2:
        raise ShapeError(f"transpose: need at least 2 dims, got shape {x.shape}")
    data = np.swapaxes(x.data, -1, -2)
    return _make(data, (x,), lambda g: (np.swapaxes(g, -1, -2),), "transpose")


def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    try:
        data = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {x.shape} to {shape}") from None
    old = x.shape
    return _make(data, (x,), lambda g: (g.reshape(old),), "reshape")


def broadcast_to(x: Tensor, shape) -> Tensor:
    """Explicit expansion of size-1 axes (same rank required)."""
    shape = tuple(shape)
    if x.ndim != len(shape) or any(s != 1 and s != t for s, t in zip(x.shape, shape)):
        raise ShapeError(f"broadcast_to: cannot expand {x.shape} to {shape}")
    axes = tuple(i for i, (s, t) in enumerate(zip(x.shape, shape)) if s != t)
    data = np.broadcast_to(x.data, shape)
    return _make(data, (x,), lambda g: (g.sum(axis=axes, keepdims=True),), "broadcast")


def expand(x: Tensor, axis: int, size: int) -> Tensor:
    """Insert a new axis at ``axis`` and repeat ``x`` ``size`` times along it."""
    axis = axis % (x.ndim + 1)
    xd = x.data
    target = xd.shape[:axis] + (size,) + xd.shape[axis:]
    data = np.broadcast_to(np.expand_dims(xd, axis), target)
    return _make(data, (x,), lambda g: (g.sum(axis=axis),), "expand")


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    if not ts:
        raise ShapeError("stack: no inputs")
    if any(t.shape != ts[0].shape for t in ts):
        raise ShapeError(f"stack: shapes differ {sorted({t.shape for t in ts})}")
    ax = axis % (ts[0].ndim + 1)
    data = np.stack([t.data for t in ts], axis=ax)

    def _bw(g):
        return tuple(np.take(g, i, axis=ax) for i in range(len(ts)))

    return _make(data, tuple(ts), _bw, "stack")


def linear(x: Tensor, W: Tensor, b: Tensor | None = None) -> Tensor:
    """x W^T + b over any leading axes, with W shaped (out, in)."""
    x, W = as_tensor(x), as_tensor(W)
    if W.ndim != 2 or x.shape[-1] != W.shape[1] or (b is not None and b.shape != (W.shape[0],)):
        raise ShapeError(f"linear: input {x.shape}, weight {W.shape}, bias {None if b is None else b.shape}")
    xd, Wd = x.data, W.data
    x2 = xd.reshape(-1, xd.shape[-1])
    y = x2 @ Wd.T
    if b is not None:
        y += b.data
    data = y.reshape(xd.shape[:-1] + (Wd.shape[0],))

    def _bw(g):
        g2 = g.reshape(-1, g.shape[-1])
        gx = (g2 @ Wd).reshape(xd.shape) if x.requires_grad else None
        gW = g2.T @ x2 if W.requires_grad else None
        if b is None:
            return gx, gW
        return gx, gW, g2.sum(axis=0)

    parents = (x, W) if b is None else (x, W, as_tensor(b))
    return _make(data, parents, _bw, "linear")


def lstm_cell(x: Tensor, h: Tensor, c: Tensor, W: Tensor, b: Tensor) -> Tensor:
    """Four-gate LSTM update as one op; returns ``h' ⊕ c'`` on the last axis.

    ``W`` is (4H, in + H) acting on ``x ⊕ h``; gate order is input, forget,
    output, cell candidate.
    """
    H = h.shape[-1]
    if c.shape != h.shape or W.shape != (4 * H, x.shape[-1] + H) or b.shape != (4 * H,) \
            or x.shape[:-1] != h.shape[:-1]:
        raise ShapeError(f"lstm_cell: x {x.shape}, h {h.shape}, c {c.shape}, W {W.shape}, b {b.shape}")
    lead = h.shape[:-1]
    xh = np.concatenate([x.data, h.data], axis=-1).reshape(-1, W.shape[1])
    z = xh @ W.data.T
    z += b.data
    s = _sigmoid_np(z[:, : 3 * H])
    i, f, o = s[:, :H], s[:, H: 2 * H], s[:, 2 * H:]
    gc = np.tanh(z[:, 3 * H:])
    c_prev = c.data.reshape(-1, H)
    c_new = f * c_prev + i * gc
    tc = np.tanh(c_new)
    h_new = o * tc
    data = np.concatenate([h_new, c_new], axis=-1).reshape(lead + (2 * H,))
    nx = x.shape[-1]

    def _bw(g):
        g = g.reshape(-1, 2 * H)
        gh, gcn = g[:, :H], g[:, H:]
        dc = gcn + gh * o * (1.0 - tc * tc)
        dz = np.empty_like(z)
        dz[:, :H] = dc * gc * i * (1.0 - i)
        dz[:, H: 2 * H] = dc * c_prev * f * (1.0 - f)
        dz[:, 2 * H: 3 * H] = gh * tc * o * (1.0 - o)
        dz[:, 3 * H:] = dc * i * (1.0 - gc * gc)
        dxh = dz @ W.data
        return (dxh[:, :nx].reshape(x.shape), dxh[:, nx:].reshape(h.shape),
                (dc * f).reshape(c.shape), dz.T @ xh, dz.sum(axis=0))

    return _make(data, (x, h, c, W, b), _bw, "lstm_cell")


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    if not ts:
        raise ShapeError("concat: no inputs")
    ref = ts[0].shape
    ax = axis % len(ref)
    for t in ts[1:]:
        if t.ndim != len(ref) or t.shape[:ax] + t.shape[ax + 1:] != ref[:ax] + ref[ax + 1:]:
            raise ShapeError(f"concat: incompatible shapes {[t.shape for t in ts]} on axis {axis}")
    data = np.concatenate([t.data for t in ts], axis=ax)
    bounds = np.cumsum([0] + [t.shape[ax] for t in ts])

    def _bw(g):
        return tuple(
            np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=ax) for i in range(len(ts))
        )

    return _make(data, tuple(ts), _bw, "concat")


def slice_(x: Tensor, idx) -> Tensor:
    """Basic (non-fancy) indexing; the result is a differentiable view."""
    probe = idx if isinstance(idx, tuple) else (idx,)
    if any(isinstance(i, (list, np.ndarray, Tensor)) for i in probe):
        raise ShapeError("slice: only basic indexing (ints, slices, Ellipsis) is supported")
    data = x.data[idx]
    shape = x.shape

    def _bw(g):
        out = np.zeros(shape, dtype=DTYPE)
        out[idx] = g
        return (out,)

    return _make(np.asarray(data), (x,), _bw, "slice")


def where(cond: np.ndarray, a, b) -> Tensor:
    """Select elementwise between two equal-shape tensors by a constant mask."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape or np.shape(cond) != a.shape:
        raise ShapeError(f"where: shapes {np.shape(cond)}, {a.shape}, {b.shape} must match")
    cond = np.asarray(cond, dtype=bool)
    data = np.where(cond, a.data, b.data)
    return _make(data, (a, b), lambda g: (g * cond, g * ~cond), "where")


OPS = {
    "add": add, "sub": sub, "mul": mul, "matmul": matmul, "concat": concat,
    "slice": slice_, "tanh": tanh, "sigmoid": sigmoid, "softmax": softmax,
    "log_softmax": log_softmax, "log": log, "exp": exp, "mean": mean,
    "sum": sum_, "maximum": maximum, "reshape": reshape, "transpose": transpose,
    "broadcast_to": broadcast_to, "reciprocal": reciprocal, "where": where,
    "expand": expand, "stack": stack, "linear": linear, "lstm_cell": lstm_cell,
}


def forward_op(kind: str, *inputs, **kwargs) -> Tensor:
    """Dispatch an op by name; mostly useful for table-driven tests."""
    try:
        fn = OPS[kind]
    except KeyError:
        raise ValueError(f"unknown op kind {kind!r}; known: {sorted(OPS)}") from None
    return fn(*inputs, **kwargs)


# ----------------------------------------------------------------------------
# checkpoints

CHECKPOINT_HEADER = "commgate-checkpoint v1"


def save_checkpoint(path, params: dict[str, Tensor] | Iterable[tuple[str, Tensor]], meta: dict | None = None) -> None:
    """Write named parameters as text; values are float hex, so loads are bit-exact."""
    items = params.items() if isinstance(params, dict) else params
    lines = [CHECKPOINT_HEADER]
    for key, val in sorted((meta or {}).items()):
        lines.append(f"meta {key} {val}")
    for name, t in items:
        if any(c.isspace() for c in name):
            raise ValueError(f"parameter name {name!r} contains whitespace")
        arr = t.data if isinstance(t, Tensor) else np.asarray(t, dtype=DTYPE)
        dims = " ".join(str(d) for d in arr.shape)
        lines.append(f"param {name} {arr.ndim} {dims}".rstrip())
        lines.append(" ".join(float(v).hex() for v in arr.reshape(-1)))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_checkpoint(path) -> tuple[dict[str, np.ndarray], dict[str, str]]:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != CHECKPOINT_HEADER:
        raise ValueError(f"{path}: not a checkpoint (expected header {CHECKPOINT_HEADER!r})")
    arrays: dict[str, np.ndarray] = {}
    meta: dict[str, str] = {}
    i = 1
    while i < len(lines):
        parts = lines[i].split()
        if not parts:
            i += 1
            continue
        if parts[0] == "meta":
            meta[parts[1]] = " ".join(parts[2:])
            i += 1
            continue
        if parts[0] != "param":
            raise ValueError(f"{path}:{i + 1}: unexpected record {parts[0]!r}")
        name, ndim = parts[1], int(parts[2])
        shape = tuple(int(d) for d in parts[3:3 + ndim])
        values = lines[i + 1].split() if i + 1 < len(lines) else []
        if len(values) != int(np.prod(shape, dtype=int)):
            raise ValueError(f"{path}: parameter {name} expects {int(np.prod(shape))} values, found {len(values)}")
        arrays[name] = np.array([float.fromhex(v) for v in values], dtype=DTYPE).reshape(shape)
        i += 2
    return arrays, meta


def load_checkpoint(path, params: dict[str, Tensor]) -> dict[str, str]:
    """Fill ``params`` in place; every name and shape must match exactly."""
    arrays, meta = read_checkpoint(path)
    missing = sorted(set(params) - set(arrays))
    extra = sorted(set(arrays) - set(params))
    if missing or extra:
        raise ValueError(f"checkpoint mismatch: missing={missing} unexpected={extra}")
    for name, t in params.items():
        if arrays[name].shape != t.shape:
            raise ShapeError(f"checkpoint: {name} has shape {arrays[name].shape}, model expects {t.shape}")
    for name, t in params.items():
        t.data = arrays[name].copy()
    return meta
