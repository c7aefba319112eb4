"""Small reverse-mode autodiff engine over 2-D float64 matrices.

Only what the training graph needs is here: matrix products, row-broadcast
bias, ReLU, batch standardization, pairwise cosine similarity, row norms and
a few reductions.  Every node holds a 2-D ``np.ndarray``; scalars are 1x1.

    >>> w = Tensor(np.ones((2, 2)), requires_grad=True)
    >>> loss = total(w)
    >>> loss.backward()
    >>> w.grad
    array([[1., 1.],
           [1., 1.]])
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

log = logging.getLogger(__name__)

STD_EPS = 1e-8
COS_EPS = 1e-12


class ShapeError(ValueError):
    pass


class Tensor:
    """A matrix node in the computation graph.

    Leaves created with ``requires_grad=True`` are parameters; their ``grad``
    accumulates across ``backward`` calls until ``zero_grad``.  Intermediate
    nodes get a fresh ``grad`` on every backward pass.
    """

    __slots__ = ("value", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, value, requires_grad: bool = False, name: str | None = None,
                 _parents: tuple = (), _backward: Callable | None = None):
        value = np.asarray(value, dtype=np.float64)
        if value.ndim == 0:
            value = value.reshape(1, 1)
        elif value.ndim == 1:
            value = value.reshape(1, -1)
        elif value.ndim != 2:
            raise ShapeError(f"only 2-D matrices are supported, got ndim={value.ndim}")
        self.value = value
        self.grad = np.zeros_like(value)
        self.requires_grad = requires_grad or any(p.requires_grad for p in _parents)
        self._parents = _parents
        self._backward = _backward
        self.name = name

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def item(self) -> float:
        if self.value.size != 1:
            raise ShapeError(f"item() needs a 1x1 tensor, got {self.shape}")
        return float(self.value[0, 0])

    def detach(self) -> "Tensor":
        return Tensor(self.value)

    def zero_grad(self):
        self.grad = np.zeros_like(self.value)

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

    # let ``ndarray @ Tensor`` etc. fall through to the reflected methods
    __array_ufunc__ = None

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

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

    def __neg__(self):
        return scale(self, -1.0)

    def backward(self):
        """Populate ``grad`` on every node reachable from this scalar."""
        if self.shape != (1, 1):
            raise ShapeError(f"backward() needs a scalar (1x1) loss, got {self.shape}")
        order = _topological(self)
        grads: dict[int, np.ndarray] = {id(self): np.ones((1, 1))}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.is_leaf:
                if node.requires_grad:
                    node.grad = node.grad + g
                continue
            node.grad = g
            parent_grads = node._backward(g)
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg


def _topological(root: Tensor) -> list[Tensor]:
    # iterative post-order DFS; each node appears once
    order, seen = [], set()
    stack = [(root, False)]
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
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def zero_grads(params: Iterable[Tensor]):
    for p in params:
        p.zero_grad()


def _node(value, parents, backward) -> Tensor:
    return Tensor(value, _parents=tuple(parents), _backward=backward)


# ----------------------------------------------------------------------------
# primitive ops

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} x {b.shape}")
    av, bv = a.value, b.value

    def backward(g):
        return (g @ bv.T if a.requires_grad else None,
                av.T @ g if b.requires_grad else None)

    return _node(av @ bv, (a, b), backward)


def add(a, b) -> Tensor:
    """Elementwise sum; ``b`` may be a 1xn row broadcast over ``a``'s rows."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape == b.shape:
        return _node(a.value + b.value, (a, b), lambda g: (g, g))
    if b.shape == (1, a.shape[1]):
        return _node(a.value + b.value, (a, b), lambda g: (g, g.sum(axis=0, keepdims=True)))
    raise ShapeError(f"cannot add {a.shape} and {b.shape}")


def sub(a, b) -> Tensor:
    return add(a, scale(b, -1.0))


def mul(a, b) -> Tensor:
    """Elementwise product of equal shapes, or by a python scalar."""
    if not isinstance(b, Tensor) and np.isscalar(b):
        return scale(a, float(b))
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"mul shapes differ: {a.shape} vs {b.shape}")
    av, bv = a.value, b.value
    return _node(av * bv, (a, b), lambda g: (g * bv, g * av))


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    return _node(a.value * c, (a,), lambda g: (g * c,))


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.value > 0
    return _node(np.where(mask, x.value, 0.0), (x,), lambda g: (g * mask,))


def square(x) -> Tensor:
    x = as_tensor(x)
    xv = x.value
    return _node(xv * xv, (x,), lambda g: (2.0 * xv * g,))


def total(x) -> Tensor:
    """Sum of all entries, as a 1x1 tensor."""
    x = as_tensor(x)
    shape = x.shape
    return _node(x.value.sum().reshape(1, 1), (x,), lambda g: (np.full(shape, g[0, 0]),))


def mean(x) -> Tensor:
    x = as_tensor(x)
    return scale(total(x), 1.0 / x.value.size)


def vstack(parts: Sequence[Tensor]) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    cols = {p.shape[1] for p in parts}
    if len(cols) != 1:
        raise ShapeError(f"vstack needs equal column counts, got {sorted(cols)}")
    bounds = np.cumsum([0] + [p.shape[0] for p in parts])

    def backward(g):
        return tuple(g[bounds[i]:bounds[i + 1]] for i in range(len(parts)))

    return _node(np.vstack([p.value for p in parts]), parts, backward)


def take_rows(x, idx) -> Tensor:
    x = as_tensor(x)
    idx = np.asarray(idx, dtype=np.intp).reshape(-1)
    shape = x.shape

    def backward(g):
        out = np.zeros(shape)
        np.add.at(out, idx, g)
        return (out,)

    return _node(x.value[idx], (x,), backward)


def row_norms(x) -> Tensor:
    """Euclidean norm of each row, as an n x 1 column.

    The gradient of a zero-length row is taken to be zero.
    """
    x = as_tensor(x)
    xv = x.value
    n = np.sqrt((xv * xv).sum(axis=1, keepdims=True))

    def backward(g):
        safe = np.where(n > 0, n, 1.0)
        return (np.where(n > 0, g / safe, 0.0) * xv,)

    return _node(n, (x,), backward)


def squared_error(x, target) -> Tensor:
    """Sum over all entries of (x - target)^2, as a 1x1 tensor."""
    x, target = as_tensor(x), as_tensor(target)
    if x.shape != target.shape:
        raise ShapeError(f"squared_error shapes differ: {x.shape} vs {target.shape}")
    diff = x.value - target.value

    def backward(g):
        gd = 2.0 * g[0, 0] * diff
        return (gd, -gd)

    return _node((diff * diff).sum().reshape(1, 1), (x, target), backward)


def mse(x, target) -> Tensor:
    x = as_tensor(x)
    return scale(squared_error(x, target), 1.0 / x.value.size)


def standardize(h, eps: float = STD_EPS) -> Tensor:
    """Per-column z-score over the batch, using the population std."""
    h = as_tensor(h)
    B = h.shape[0]
    if B < 2:
        raise ValueError(f"standardize needs at least 2 rows, got {B}")
    hv = h.value
    mu = hv.mean(axis=0, keepdims=True)
    xc = hv - mu
    std = np.sqrt((xc * xc).mean(axis=0, keepdims=True))
    denom = std + eps
    out = xc / denom

    def backward(g):
        # y = xc / (s + eps), s = sqrt(mean(xc^2))
        g_xc = g / denom
        g_s = -(g * xc).sum(axis=0, keepdims=True) / denom ** 2
        safe = np.where(std > 0, std, 1.0)
        g_xc = g_xc + np.where(std > 0, g_s / (B * safe), 0.0) * xc
        return (g_xc - g_xc.mean(axis=0, keepdims=True),)

    return _node(out, (h,), backward)


def l2_normalize_rows(h, eps: float = COS_EPS) -> Tensor:
    """Scale each row to unit length (rows of zeros stay zero)."""
    h = as_tensor(h)
    n = row_norms(h)
    inv = 1.0 / (n.value + eps)
    hv = h.value
    out = hv * inv

    def backward(g):
        # d(x/(|x|+e)) = g/(|x|+e) - x (x.g) / (|x| (|x|+e)^2)
        dot = (g * hv).sum(axis=1, keepdims=True)
        nv = n.value
        safe = np.where(nv > 0, nv, 1.0)
        corr = np.where(nv > 0, dot * inv * inv / safe, 0.0)
        return (g * inv - hv * corr,)

    return _node(out, (h,), backward)


def cosine_matrix(u, v, eps: float = COS_EPS) -> Tensor:
    """Pairwise cosine similarity between the rows of ``u`` (p x d) and ``v`` (q x d)."""
    u, v = as_tensor(u), as_tensor(v)
    if u.shape[1] != v.shape[1]:
        raise ShapeError(f"cosine_matrix column counts differ: {u.shape} vs {v.shape}")
    if u.shape[0] < 1 or v.shape[0] < 1:
        raise ShapeError("cosine_matrix needs at least one row per operand")
    uv, vv = u.value, v.value
    nu = np.sqrt((uv * uv).sum(axis=1, keepdims=True))
    nv = np.sqrt((vv * vv).sum(axis=1, keepdims=True))
    if log.isEnabledFor(logging.DEBUG) and (np.any(nu == 0) or np.any(nv == 0)):
        log.debug("cosine_matrix: zero-norm row present, eps guard applied")
    dots = uv @ vv.T
    denom = nu * nv.T + eps
    out = dots / denom

    def backward(g):
        gd = g / denom
        # d denom / d u_i = nv_j * u_i / nu_i
        gden = -(g * dots) / denom ** 2
        safe_u = np.where(nu > 0, nu, 1.0)
        safe_v = np.where(nv > 0, nv, 1.0)
        gu = gd @ vv + np.where(nu > 0, (gden @ nv) / safe_u, 0.0) * uv
        gv = gd.T @ uv + np.where(nv > 0, (gden.T @ nu) / safe_v, 0.0) * vv
        return (gu if u.requires_grad else None, gv if v.requires_grad else None)

    return _node(out, (u, v), backward)


def custom(value, parents: Sequence[Tensor], backward: Callable) -> Tensor:
    """Wrap a hand-differentiated function as a graph node.

    ``backward`` receives the upstream gradient and returns one gradient (or
    None) per parent, in order.
    """
    return _node(value, parents, backward)


# ----------------------------------------------------------------------------
# optimizer

@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def __post_init__(self):
        if self.lr < 0:
            raise ValueError(f"learning rate must be non-negative, got {self.lr}")
        if self.weight_decay < 0:
            raise ValueError(f"weight decay must be non-negative, got {self.weight_decay}")


def adam_step(state: AdamState, params: Sequence[Tensor], grads: Sequence[np.ndarray] | None = None):
    """One Adam update with bias correction, in place on ``params``.

    ``weight_decay`` is the classic L2 form (added to the gradient).
    """
    if grads is None:
        grads = [p.grad for p in params]
    if len(grads) != len(params):
        raise ShapeError("params and grads differ in length")
    if not state.m:
        state.m = [np.zeros_like(p.value) for p in params]
        state.v = [np.zeros_like(p.value) for p in params]
    if len(state.m) != len(params):
        raise ShapeError("optimizer state does not match parameter list")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g.shape != p.value.shape or m.shape != p.value.shape:
            raise ShapeError(f"gradient shape {g.shape} does not match parameter {p.value.shape}")
        if state.weight_decay:
            g = g + state.weight_decay * p.value
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p.value -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


class Adam:
    """Thin stateful wrapper around :func:`adam_step`."""

    def __init__(self, params: Sequence[Tensor], lr=1e-4, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.0):
        self.params = list(params)
        self.state = AdamState(lr=lr, beta1=betas[0], beta2=betas[1], eps=eps, weight_decay=weight_decay)

    def zero_grad(self):
        zero_grads(self.params)

    def step(self):
        adam_step(self.state, self.params)
