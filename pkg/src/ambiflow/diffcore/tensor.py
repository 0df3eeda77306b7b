"""Tape-based reverse-mode automatic differentiation over dense float64 arrays.

Every op builds a new node holding the result value; nodes created while
gradients are enabled remember their parents and a vector-Jacobian closure.
``backward`` topologically sorts the recorded graph and accumulates adjoints
additively across fan-out, returning a map from ``requires_grad`` leaves to
their gradient arrays.

Shape rules are deliberately strict: binary elementwise ops accept equal
shapes or a scalar on one side, nothing else. ``matmul`` supports the vector
and matrix cases plus stacked (batched) operands with matching leading dims.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

__all__ = [
    "Tensor",
    "DiffcoreError",
    "ContractError",
    "DomainError",
    "NumericError",
    "no_grad",
    "as_tensor",
    "apply",
    "backward",
    "topo_order",
    "add",
    "sub",
    "mul",
    "div",
    "matmul",
    "exp",
    "log",
    "tanh",
    "relu",
    "sum_",
    "mean_",
    "concat",
    "slice_",
    "reshape",
    "gather",
    "stop_gradient",
    "square",
    "sqrt",
    "sumsq",
    "clip",
    "tile_rows",
]


class DiffcoreError(Exception):
    """Base class for autodiff engine errors."""


class ContractError(DiffcoreError):
    """Incompatible shapes, unknown op kind, or a non-scalar loss."""


class DomainError(DiffcoreError):
    """Input outside an op's mathematical domain (log of <= 0, division by zero)."""


class NumericError(DiffcoreError):
    """A non-finite value appeared where finite math was expected."""


_GRAD_ENABLED = True


@contextmanager
def no_grad():
    """Suspend graph recording; values still compute, gradients do not flow."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    """Immutable-by-convention float64 array node in the autodiff graph.

    ``data`` must not be mutated while a graph referencing the tensor is
    still alive, except by the optimizer between steps (leaves only).
    """

    __slots__ = ("data", "requires_grad", "name", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._vjp = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError("item() requires a single-element tensor")
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{tag})"

    # operator sugar; all routes through the module-level ops
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __getitem__(self, key):
        return slice_(self, key)

    def reshape(self, shape):
        return reshape(self, shape)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean_(self, axis=axis, keepdims=keepdims)


def as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x)


def _node(data: np.ndarray, parents: tuple[Tensor, ...], vjp) -> Tensor:
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._vjp = vjp
    return out


def _check_elementwise(a: Tensor, b: Tensor, op: str) -> None:
    # equal shapes, or a scalar on either side; no general broadcasting
    if a.shape == b.shape or a.shape == () or b.shape == ():
        return
    raise ContractError(f"{op}: shapes {a.shape} and {b.shape} are neither equal nor scalar")


def _reduce_to(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    # adjoint of scalar->array broadcast is summation
    if shape == () and np.ndim(g) != 0:
        return np.sum(g)
    return g


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_elementwise(a, b, "add")
    data = a.data + b.data

    def vjp(g):
        return (_reduce_to(g, a.shape), _reduce_to(g, b.shape))

    return _node(data, (a, b), vjp)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_elementwise(a, b, "sub")
    data = a.data - b.data

    def vjp(g):
        return (_reduce_to(g, a.shape), _reduce_to(-g, b.shape))

    return _node(data, (a, b), vjp)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_elementwise(a, b, "mul")
    ad, bd = a.data, b.data
    data = ad * bd

    def vjp(g):
        return (_reduce_to(g * bd, a.shape), _reduce_to(g * ad, b.shape))

    return _node(data, (a, b), vjp)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_elementwise(a, b, "div")
    ad, bd = a.data, b.data
    if not np.all(bd != 0.0):
        raise DomainError("div: division by zero")
    data = ad / bd

    def vjp(g):
        return (_reduce_to(g / bd, a.shape), _reduce_to(-g * ad / (bd * bd), b.shape))

    return _node(data, (a, b), vjp)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    A, B = a.data, b.data
    if A.ndim == 0 or B.ndim == 0:
        raise ContractError("matmul: operands must be at least 1-d")
    if A.ndim > 2 and B.ndim > 2 and A.shape[:-2] != B.shape[:-2]:
        raise ContractError(
            f"matmul: stacked operands need identical leading dims, got {A.shape} @ {B.shape}"
        )
    try:
        data = np.matmul(A, B)
    except ValueError as err:
        raise ContractError(f"matmul: incompatible shapes {A.shape} @ {B.shape}") from err

    def vjp(g):
        ga = gb = None
        if a.requires_grad:
            if A.ndim == 1 and B.ndim == 1:
                ga = g * B
            elif A.ndim == 1:  # (k,) @ (...,k,n) -> (...,n)
                ga = np.einsum("...kn,...n->k", B, g)
            elif B.ndim == 1:  # (...,m,k) @ (k,) -> (...,m)
                ga = g[..., :, None] * B
            else:
                ga = np.matmul(g, np.swapaxes(B, -1, -2))
                if ga.shape != A.shape:  # A was broadcast across B's batch dims
                    ga = ga.reshape((-1,) + A.shape).sum(axis=0)
        if b.requires_grad:
            if A.ndim == 1 and B.ndim == 1:
                gb = g * A
            elif A.ndim == 1:
                gb = A[:, None] * g[..., None, :]
            elif B.ndim == 1:
                gb = np.einsum("...mk,...m->k", A, g)
            else:
                gb = np.matmul(np.swapaxes(A, -1, -2), g)
                if gb.shape != B.shape:  # B was broadcast across A's batch dims
                    gb = gb.reshape((-1,) + B.shape).sum(axis=0)
        return (ga, gb)

    return _node(data, (a, b), vjp)


def exp(x) -> Tensor:
    x = as_tensor(x)
    with np.errstate(over="ignore"):
        data = np.exp(x.data)
    if not np.all(np.isfinite(data)):
        raise NumericError("exp: overflow to non-finite value")

    def vjp(g):
        return (g * data,)

    return _node(data, (x,), vjp)


def log(x) -> Tensor:
    x = as_tensor(x)
    xd = x.data
    if not np.all(xd > 0.0):
        raise DomainError("log: input must be strictly positive")
    data = np.log(xd)

    def vjp(g):
        return (g / xd,)

    return _node(data, (x,), vjp)


def tanh(x) -> Tensor:
    x = as_tensor(x)
    data = np.tanh(x.data)

    def vjp(g):
        return (g * (1.0 - data * data),)

    return _node(data, (x,), vjp)


def relu(x) -> Tensor:
    x = as_tensor(x)
    xd = x.data
    data = np.maximum(xd, 0.0)

    def vjp(g):
        return (g * (xd > 0.0),)

    return _node(data, (x,), vjp)


def _expand_reduced(g, shape, axis, keepdims):
    g = np.asarray(g, dtype=np.float64)
    if not keepdims:
        if axis is None:
            g = g.reshape((1,) * len(shape))
        else:
            axes = (axis,) if isinstance(axis, int) else tuple(axis)
            axes = tuple(ax % len(shape) for ax in axes)
            for ax in sorted(axes):
                g = np.expand_dims(g, ax)
    return np.broadcast_to(g, shape)


def sum_(x, axis=None, keepdims=False) -> Tensor:
    x = as_tensor(x)
    data = x.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        return (_expand_reduced(g, x.shape, axis, keepdims).copy(),)

    return _node(data, (x,), vjp)


def mean_(x, axis=None, keepdims=False) -> Tensor:
    x = as_tensor(x)
    data = x.data.mean(axis=axis, keepdims=keepdims)
    count = x.data.size // max(data.size, 1)

    def vjp(g):
        return (_expand_reduced(g, x.shape, axis, keepdims) / count,)

    return _node(data, (x,), vjp)


def concat(tensors, axis: int = 0) -> Tensor:
    ts = tuple(as_tensor(t) for t in tensors)
    if not ts:
        raise ContractError("concat: need at least one tensor")
    data = np.concatenate([t.data for t in ts], axis=axis)
    sizes = [t.data.shape[axis] for t in ts]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return _node(data, ts, vjp)


def _normalize_key(key):
    if not isinstance(key, tuple):
        key = (key,)
    for k in key:
        if not isinstance(k, (int, np.integer, slice)) and k is not Ellipsis:
            raise ContractError("slice: only basic indexing (ints/slices); use gather for index arrays")
    return key


def slice_(x, key) -> Tensor:
    x = as_tensor(x)
    key = _normalize_key(key)
    data = x.data[key]

    def vjp(g):
        full = np.zeros_like(x.data)
        full[key] += g
        return (full,)

    return _node(data, (x,), vjp)


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    data = x.data.reshape(shape)

    def vjp(g):
        return (np.asarray(g).reshape(x.shape),)

    return _node(data, (x,), vjp)


def gather(x, index, axis: int = 0) -> Tensor:
    x = as_tensor(x)
    idx = np.asarray(index)
    if idx.dtype.kind not in "iu":
        raise ContractError("gather: index must be integer-valued")
    data = np.take(x.data, idx, axis=axis)

    def vjp(g):
        full = np.zeros_like(x.data)
        moved = np.moveaxis(full, axis, 0)
        np.add.at(moved, idx, np.moveaxis(np.asarray(g), axis, 0))
        return (full,)

    return _node(data, (x,), vjp)


def stop_gradient(x) -> Tensor:
    """Value identity; the result is a constant leaf that blocks all gradient flow."""
    x = as_tensor(x)
    return Tensor(x.data, requires_grad=False)


_OPS = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "div": div,
    "matmul": matmul,
    "exp": exp,
    "log": log,
    "tanh": tanh,
    "relu": relu,
    "sum": sum_,
    "mean": mean_,
    "concat": concat,
    "slice": slice_,
    "reshape": reshape,
    "gather": gather,
    "stop_gradient": stop_gradient,
}


def apply(op_kind: str, inputs, **kwargs) -> Tensor:
    """Dispatch by op-kind name; ``inputs`` is the positional argument list."""
    fn = _OPS.get(op_kind)
    if fn is None:
        raise ContractError(f"unknown op-kind {op_kind!r}")
    if op_kind == "concat":
        return fn(inputs, **kwargs)
    return fn(*inputs, **kwargs)


# -- composites built from the primitive set --------------------------------


def square(x) -> Tensor:
    x = as_tensor(x)
    return mul(x, x)


def sqrt(x) -> Tensor:
    # x^(1/2) = exp(log(x)/2); inherits log's positivity domain
    return exp(mul(log(x), 0.5))


def sumsq(x, axis=None) -> Tensor:
    return sum_(square(x), axis=axis)


def clip(x, lo: float, hi: float) -> Tensor:
    """Hard clip to [lo, hi] built from relu; zero gradient outside the band."""
    x = as_tensor(x)
    return add(sub(add(relu(sub(x, lo)), lo), relu(sub(x, hi))), 0.0)


def tile_rows(v, batch_shape: tuple[int, ...]) -> Tensor:
    """Expand a vector (F,) to (*batch_shape, F) via an explicit ones outer product.

    The gradient sums over the tiled copies, which is exactly the adjoint of
    broadcasting; this keeps the strict elementwise shape rules intact.
    """
    v = as_tensor(v)
    if v.ndim != 1:
        raise ContractError(f"tile_rows expects a vector, got shape {v.shape}")
    if not batch_shape:
        return v
    ones = Tensor(np.ones(tuple(batch_shape) + (1,)))
    return matmul(ones, reshape(v, (1, v.shape[0])))


# -- backward pass -----------------------------------------------------------


def topo_order(root: Tensor) -> list[Tensor]:
    """Parents-first topological order of the recorded graph below ``root``."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> dict[Tensor, np.ndarray]:
    """Gradient of a scalar loss w.r.t. every reachable ``requires_grad`` leaf.

    Returns a map keyed by the leaf Tensor objects themselves (identity).
    Leaves that the loss does not depend on are absent from the map.
    """
    if not isinstance(loss, Tensor):
        raise ContractError("backward: loss must be a Tensor")
    if loss.shape != ():
        raise ContractError(f"backward: loss must be scalar, got shape {loss.shape}")
    result: dict[Tensor, np.ndarray] = {}
    if not loss.requires_grad:
        return result
    order = topo_order(loss)
    adjoint: dict[int, np.ndarray] = {id(loss): np.ones((), dtype=np.float64)}
    for node in reversed(order):
        g = adjoint.pop(id(node), None)
        if g is None:
            continue
        if node._vjp is None:
            if node.requires_grad:
                prev = result.get(node)
                grad = np.broadcast_to(g, node.shape).astype(np.float64, copy=True)
                result[node] = grad if prev is None else prev + grad
            continue
        parent_grads = node._vjp(g)
        for parent, pg in zip(node._parents, parent_grads):
            if pg is None or not parent.requires_grad:
                continue
            acc = adjoint.get(id(parent))
            adjoint[id(parent)] = np.asarray(pg, dtype=np.float64) if acc is None else acc + pg
    return result
