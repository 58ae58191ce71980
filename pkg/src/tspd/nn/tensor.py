"""Reverse-mode differentiation over dense numpy arrays.

Every op returns a new :class:`Tensor` that remembers its parents and a
closure mapping the output gradient to parent gradients.  Broadcasting in
elementwise ops is undone in the backward pass by summing over the
broadcast axes.
"""

from __future__ import annotations

import numpy as np


class GraphError(RuntimeError):
    """Malformed differentiation graph."""


class NumericError(FloatingPointError):
    """Non-finite values where finite ones are required."""


class MaskError(ValueError):
    """A softmax row has no unmasked entry."""


DEFAULT_DTYPE = np.float64


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None,
                 _parents: tuple = (), _backward=None):
        if isinstance(data, np.ndarray) and data.dtype in (np.float64, np.float32):
            self.data = data
        else:
            self.data = np.asarray(data, dtype=DEFAULT_DTYPE)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward
        self.name = name

    # -- basics ---------------------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, o): return add(self, o)
    def __radd__(self, o): return add(o, self)
    def __sub__(self, o): return sub(self, o)
    def __rsub__(self, o): return sub(o, self)
    def __mul__(self, o): return mul(self, o)
    def __rmul__(self, o): return mul(o, self)
    def __truediv__(self, o): return div(self, o)
    def __neg__(self): return neg(self)
    def __getitem__(self, idx): return index(self, idx)

    def sum(self, axis=None, keepdims=False): return sum_(self, axis, keepdims)
    def mean(self, axis=None, keepdims=False): return mean(self, axis, keepdims)
    def reshape(self, *shape): return reshape(self, shape[0] if len(shape) == 1 else shape)
    def transpose(self, *axes): return transpose(self, axes)

    def backward(self, grad=None) -> None:
        backward(self, grad)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward_fn) -> Tensor:
    rg = any(p.requires_grad for p in parents)
    if not rg:
        return Tensor(data)
    return Tensor(data, True, _parents=parents, _backward=backward_fn)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# -- elementwise ------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data
    return _make(out, (a, b),
                 lambda g: (_unbroadcast(g / b.data, a.shape),
                            _unbroadcast(-g * out / b.data, b.shape)))


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _make(-a.data, (a,), lambda g: (-g,))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    y = np.tanh(a.data)
    return _make(y, (a,), lambda g: (g * (1.0 - y * y),))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    y = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _make(y, (a,), lambda g: (g * y * (1.0 - y),))


def relu(a) -> Tensor:
    a = as_tensor(a)
    pos = a.data > 0
    return _make(np.where(pos, a.data, 0.0), (a,), lambda g: (g * pos,))


def exp(a) -> Tensor:
    a = as_tensor(a)
    y = np.exp(a.data)
    return _make(y, (a,), lambda g: (g * y,))


def log(a) -> Tensor:
    a = as_tensor(a)
    return _make(np.log(a.data), (a,), lambda g: (g / a.data,))


def square(a) -> Tensor:
    a = as_tensor(a)
    return _make(a.data * a.data, (a,), lambda g: (2.0 * g * a.data,))


# -- reductions and shape ---------------------------------------------------


def sum_(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make(out, (a,), bw)


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = a.data.mean(axis=axis, keepdims=keepdims)
    count = a.data.size // max(out.size, 1)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, a.shape).copy(),)

    return _make(out, (a,), bw)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def transpose(a, axes) -> Tensor:
    a = as_tensor(a)
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return _make(a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),))


def concat(tensors, axis: int = -1) -> Tensor:
    ts = tuple(as_tensor(t) for t in tensors)
    out = np.concatenate([t.data for t in ts], axis=axis)
    ax = axis % out.ndim
    bounds = np.cumsum([0] + [t.shape[ax] for t in ts])

    def bw(g):
        sl = [slice(None)] * g.ndim
        grads = []
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            sl[ax] = slice(lo, hi)
            grads.append(g[tuple(sl)])
        return tuple(grads)

    return _make(out, ts, bw)


def index(a, idx) -> Tensor:
    """Basic or advanced indexing (embedding lookup, gathers)."""
    a = as_tensor(a)
    out = a.data[idx]

    def bw(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        return (full,)

    return _make(np.array(out, copy=True), (a,), bw)


def take_along_axis(a, indices: np.ndarray, axis: int) -> Tensor:
    a = as_tensor(a)
    out = np.take_along_axis(a.data, indices, axis=axis)

    def bw(g):
        full = np.zeros_like(a.data)
        idx = np.broadcast_to(indices, g.shape)
        # explicit coordinates so repeated indices accumulate
        grids = list(np.indices(g.shape, sparse=True))
        grids[axis % g.ndim] = idx
        np.add.at(full, tuple(grids), g)
        return (full,)

    return _make(out, (a,), bw)


# -- contractions -----------------------------------------------------------


def _einsum_grad_spec(spec: str):
    lhs, out = spec.replace(" ", "").split("->")
    a_sub, b_sub = lhs.split(",")
    for ch in a_sub:
        if ch not in out and ch not in b_sub:
            raise GraphError(f"einsum index {ch!r} of {a_sub} is summed privately: {spec}")
    for ch in b_sub:
        if ch not in out and ch not in a_sub:
            raise GraphError(f"einsum index {ch!r} of {b_sub} is summed privately: {spec}")
    return f"{out},{b_sub}->{a_sub}", f"{out},{a_sub}->{b_sub}"


_EINSUM_CACHE: dict[str, tuple[str, str]] = {}


def einsum(spec: str, a, b) -> Tensor:
    """Two-operand einsum without ellipsis or repeated indices per operand."""
    a, b = as_tensor(a), as_tensor(b)
    specs = _EINSUM_CACHE.get(spec)
    if specs is None:
        specs = _EINSUM_CACHE[spec] = _einsum_grad_spec(spec)
    ga_spec, gb_spec = specs
    out = np.einsum(spec, a.data, b.data, optimize=True)

    def bw(g):
        ga = np.einsum(ga_spec, g, b.data, optimize=True) if a.requires_grad else None
        gb = np.einsum(gb_spec, g, a.data, optimize=True) if b.requires_grad else None
        return ga, gb

    return _make(out, (a, b), bw)


def matmul(a, b) -> Tensor:
    """``a @ b`` for a[..., k] @ b[k, m] (weights on the right)."""
    a, b = as_tensor(a), as_tensor(b)
    out = a.data @ b.data

    def bw(g):
        ga = g @ b.data.T if a.requires_grad else None
        gb = None
        if b.requires_grad:
            k = a.shape[-1]
            gb = a.data.reshape(-1, k).T @ g.reshape(-1, g.shape[-1])
        return ga, gb

    if b.ndim != 2:
        raise GraphError("matmul expects a 2-D right operand")
    return _make(out, (a, b), bw)


def linear(x, w, b=None) -> Tensor:
    y = matmul(x, w)
    return y if b is None else add(y, b)


# -- fused numerics ---------------------------------------------------------


def _check_mask(mask: np.ndarray, axis: int) -> None:
    if not np.all(np.any(mask == 0, axis=axis)):
        raise MaskError("softmax row with every entry masked")


def masked_softmax(scores, mask: np.ndarray | None = None, axis: int = -1) -> Tensor:
    """Softmax of ``scores + mask`` with ``mask`` in {0, -inf}."""
    scores = as_tensor(scores)
    z = scores.data
    if mask is not None:
        mask = np.asarray(mask)
        _check_mask(np.broadcast_to(mask, np.broadcast_shapes(mask.shape, z.shape)), axis)
        z = z + mask
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (p * (g - (g * p).sum(axis=axis, keepdims=True)),)

    return _make(p, (scores,), bw)


def masked_log_softmax(scores, mask: np.ndarray | None = None, axis: int = -1) -> Tensor:
    scores = as_tensor(scores)
    z = scores.data
    if mask is not None:
        mask = np.asarray(mask)
        _check_mask(np.broadcast_to(mask, np.broadcast_shapes(mask.shape, z.shape)), axis)
        z = z + mask
    zmax = z.max(axis=axis, keepdims=True)
    shifted = z - zmax
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    p = np.exp(out)

    def bw(g):
        g = np.where(np.isfinite(out), g, 0.0)
        return (g - p * g.sum(axis=axis, keepdims=True),)

    return _make(out, (scores,), bw)


def instance_norm(x, scale=None, shift=None, eps: float = 1e-5, axis: int = -2) -> Tensor:
    """Normalize each feature over the node axis of one instance.

    ``x`` is (..., nodes, features); statistics use the population variance.
    """
    x = as_tensor(x)
    mu = x.data.mean(axis=axis, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=axis, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    parents = [x]
    out = xhat
    if scale is not None:
        scale = as_tensor(scale)
        parents.append(scale)
        out = out * scale.data
    if shift is not None:
        shift = as_tensor(shift)
        parents.append(shift)
        out = out + shift.data

    def bw(g):
        grads = []
        gx_hat = g * scale.data if scale is not None else g
        gx = inv * (
            gx_hat
            - gx_hat.mean(axis=axis, keepdims=True)
            - xhat * (gx_hat * xhat).mean(axis=axis, keepdims=True)
        )
        grads.append(gx)
        if scale is not None:
            grads.append(_unbroadcast(g * xhat, scale.shape))
        if shift is not None:
            grads.append(_unbroadcast(g, shift.shape))
        return tuple(grads)

    return _make(out, tuple(parents), bw)


# -- backward ---------------------------------------------------------------


def _toposort(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    state: dict[int, int] = {}  # 1 = on stack, 2 = done
    stack = [(root, False)]
    while stack:
        node, processed = stack.pop()
        nid = id(node)
        if processed:
            state[nid] = 2
            order.append(node)
            continue
        st = state.get(nid)
        if st == 2:
            continue
        if st == 1:
            raise GraphError("cycle in differentiation graph")
        state[nid] = 1
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad:
                ps = state.get(id(p))
                if ps == 1:
                    raise GraphError("cycle in differentiation graph")
                if ps is None:
                    stack.append((p, False))
    return order


def backward(loss: Tensor, grad=None) -> None:
    """Accumulate d(loss)/d(leaf) into ``leaf.grad`` for every reachable leaf."""
    if not loss.requires_grad:
        return
    if grad is None:
        if loss.data.size != 1:
            raise GraphError("backward on a non-scalar needs an explicit gradient")
        grad = np.ones_like(loss.data)
    order = _toposort(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.asarray(grad, dtype=loss.data.dtype)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.is_leaf:
            node.grad = g if node.grad is None else node.grad + g
            continue
        pgrads = node._backward(g)
        for p, pg in zip(node._parents, pgrads):
            if pg is None or not p.requires_grad:
                continue
            k = id(p)
            if k in grads:
                grads[k] = grads[k] + pg
            else:
                grads[k] = pg
