"""Dense float64 tensors with reverse-mode automatic differentiation.

Only the operations needed to express the unrolled reconstruction networks are
provided. Every op works on arrays with optional leading batch axes; image-like
tensors use a channels-last ``(..., H, W, C)`` layout.

A result remembers its parents only if gradients are enabled (see
:func:`no_grad`) and at least one input requires a gradient, so inference runs
without building a graph.
"""
from __future__ import annotations

import contextlib

import numpy as np

from .errors import ShapeError

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Disable graph construction inside the block."""
    global _GRAD_ENABLED
    previous = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = previous


def grad_enabled():
    return _GRAD_ENABLED


class Tensor:
    """A float64 array node in a computation graph.

    Leaf tensors created with ``requires_grad=True`` receive ``.grad`` after
    :func:`backward`. Interior nodes carry the op that produced them in
    ``.op`` and a closure mapping the output gradient to input gradients.
    """

    __slots__ = ("data", "requires_grad", "grad", "op", "_parents", "_backward", "__weakref__")

    def __init__(self, data, requires_grad=False, *, op="leaf", parents=(), backward_fn=None):
        arr = np.asarray(data, dtype=np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.op = op
        self._parents = tuple(parents)
        self._backward = backward_fn

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def is_leaf(self):
        return self._backward is None

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def numpy(self):
        return self.data

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data)

    def backward(self):
        backward(self)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad})"

    # arithmetic sugar; only scalar-by-tensor products are supported
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return add(neg(self), other)

    def __neg__(self):
        return neg(self)

    def __mul__(self, other):
        if isinstance(other, Tensor) and other.size == 1 and self.size != 1:
            return scalar_mul(other, self)
        return scalar_mul(self, other) if self.size == 1 else scalar_mul(other, self)

    def __rmul__(self, other):
        return scalar_mul(other, self)

    def __truediv__(self, other):
        return scalar_div(self, other)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, op, parents, backward_fn):
    parents = tuple(parents)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        return Tensor(data, True, op=op, parents=parents, backward_fn=backward_fn)
    return Tensor(data, op=op)


def _is_scalar(x):
    return not isinstance(x, Tensor) or x.size == 1


def _scalar_value(s):
    return s.data.reshape(-1)[0] if isinstance(s, Tensor) else float(s)


def _check_same_shape(a, b, what):
    if a.shape != b.shape:
        raise ShapeError(f"{what}: shapes {a.shape} and {b.shape} differ")


# ---------------------------------------------------------------------------
# elementwise arithmetic
# ---------------------------------------------------------------------------

def add(a, b):
    """Sum of two same-shape tensors, or of a tensor and a constant scalar."""
    a = as_tensor(a)
    if not isinstance(b, Tensor):
        c = float(b)
        return _node(a.data + c, "add", (a,), lambda g: (g,))
    if a.shape != b.shape:
        if a.size == 1 and b.size == 1:
            pass
        else:
            _check_same_shape(a, b, "add")
    return _node(a.data + b.data, "add", (a, b), lambda g: (g, g))


def sub(a, b):
    a = as_tensor(a)
    if not isinstance(b, Tensor):
        c = float(b)
        return _node(a.data - c, "sub", (a,), lambda g: (g,))
    _check_same_shape(a, b, "sub")
    return _node(a.data - b.data, "sub", (a, b), lambda g: (g, -g))


def neg(a):
    return scalar_mul(-1.0, a)


def scalar_mul(s, x):
    """Product of a scalar (float or size-1 tensor) with a tensor."""
    x = as_tensor(x)
    if not _is_scalar(s):
        raise ShapeError(f"scalar_mul: multiplier has shape {s.shape}, expected a scalar")
    if not isinstance(s, Tensor):
        c = float(s)
        return _node(c * x.data, "scalar_mul", (x,), lambda g: (c * g,))
    sv = _scalar_value(s)
    xd = x.data
    s_shape = s.shape

    def bw(g):
        return (np.reshape(np.sum(g * xd), s_shape), sv * g)

    return _node(sv * xd, "scalar_mul", (s, x), bw)


def scalar_div(x, s):
    """``x / s`` for a scalar divisor."""
    x = as_tensor(x)
    if not isinstance(s, Tensor):
        return scalar_mul(1.0 / float(s), x)
    if s.size != 1:
        raise ShapeError(f"scalar_div: divisor has shape {s.shape}, expected a scalar")
    sv = _scalar_value(s)
    out = x.data / sv
    s_shape = s.shape

    def bw(g):
        return (g / sv, np.reshape(-np.sum(g * out) / sv, s_shape))

    return _node(out, "scalar_div", (x, s), bw)


def relu(x):
    x = as_tensor(x)
    mask = x.data > 0
    return _node(np.where(mask, x.data, 0.0), "relu", (x,), lambda g: (g * mask,))


def softplus(x):
    """``log(1 + exp(x))``, used to keep thresholds nonnegative."""
    x = as_tensor(x)
    out = np.logaddexp(0.0, x.data)
    sig = np.exp(x.data - out)
    return _node(out, "softplus", (x,), lambda g: (g * sig,))


def soft_threshold(x, theta):
    """Elementwise ``sign(x) * max(|x| - theta, 0)``.

    ``theta`` may be a float or a scalar tensor; the backward pass uses the
    subgradient 1 where ``|x| > theta`` and 0 elsewhere (including the kink).
    """
    x = as_tensor(x)
    th = _scalar_value(theta)
    if th < 0:
        raise ValueError(f"soft_threshold: theta must be >= 0, got {th}")
    xd = x.data
    active = np.abs(xd) > th
    sgn = np.sign(xd)
    out = np.where(active, xd - th * sgn, 0.0)
    if isinstance(theta, Tensor):
        t_shape = theta.shape

        def bw(g):
            return (g * active, np.reshape(-np.sum(g * sgn * active), t_shape))

        return _node(out, "soft_threshold", (x, theta), bw)
    return _node(out, "soft_threshold", (x,), lambda g: (g * active,))


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------

def sum(x):  # noqa: A001 - mirrors numpy naming
    x = as_tensor(x)
    shape = x.shape
    return _node(np.sum(x.data), "sum", (x,), lambda g: (np.broadcast_to(g, shape).copy(),))


def sum_squares(x):
    """Squared Frobenius norm."""
    x = as_tensor(x)
    xd = x.data
    return _node(np.sum(xd * xd), "sum_squares", (x,), lambda g: (2.0 * g * xd,))


# ---------------------------------------------------------------------------
# channel plumbing
# ---------------------------------------------------------------------------

def concat_channels(xs):
    """Concatenate along the last (channel) axis."""
    xs = [as_tensor(x) for x in xs]
    lead = xs[0].shape[:-1]
    for x in xs[1:]:
        if x.shape[:-1] != lead:
            raise ShapeError(f"concat_channels: {x.shape[:-1]} does not match {lead}")
    bounds = np.cumsum([0] + [x.shape[-1] for x in xs])

    def bw(g):
        return tuple(g[..., bounds[i]:bounds[i + 1]] for i in range(len(xs)))

    return _node(np.concatenate([x.data for x in xs], axis=-1), "concat_channels", xs, bw)


def slice_channels(x, start, stop):
    x = as_tensor(x)
    c = x.shape[-1]
    if not 0 <= start < stop <= c:
        raise ShapeError(f"slice_channels: [{start}:{stop}] out of range for {c} channels")
    shape = x.shape

    def bw(g):
        full = np.zeros(shape)
        full[..., start:stop] = g
        return (full,)

    return _node(x.data[..., start:stop], "slice_channels", (x,), bw)


# ---------------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------------

def conv2d(x, kernel, bias):
    """3x3 'same' cross-correlation with zero padding and stride 1.

    ``x``: ``(..., H, W, C_in)``; ``kernel``: ``(3, 3, C_in, C_out)``;
    ``bias``: ``(C_out,)``.
    """
    x, kernel, bias = as_tensor(x), as_tensor(kernel), as_tensor(bias)
    if kernel.ndim != 4 or kernel.shape[:2] != (3, 3):
        raise ShapeError(f"conv2d: kernel must be 3x3xCinxCout, got {kernel.shape}")
    if x.ndim < 3:
        raise ShapeError(f"conv2d: input must be (..., H, W, C), got {x.shape}")
    c_in, c_out = kernel.shape[2], kernel.shape[3]
    if x.shape[-1] != c_in:
        raise ShapeError(f"conv2d: input has {x.shape[-1]} channels, kernel expects {c_in}")
    if bias.shape != (c_out,):
        raise ShapeError(f"conv2d: bias shape {bias.shape} != ({c_out},)")
    h, w = x.shape[-3], x.shape[-2]
    if h < 3 or w < 3:
        raise ShapeError(f"conv2d: spatial size {h}x{w} below 3x3")
    lead = x.shape[:-3]
    xp = np.zeros(lead + (h + 2, w + 2, c_in))
    xp[..., 1:h + 1, 1:w + 1, :] = x.data
    k = kernel.data
    out = np.empty(lead + (h, w, c_out))
    out[...] = bias.data
    for i in range(3):
        for j in range(3):
            out += xp[..., i:i + h, j:j + w, :] @ k[i, j]

    def bw(g):
        gk = np.empty_like(k)
        g2 = g.reshape(-1, c_out)
        dxp = np.zeros_like(xp) if x.requires_grad else None
        for i in range(3):
            for j in range(3):
                if kernel.requires_grad:
                    gk[i, j] = xp[..., i:i + h, j:j + w, :].reshape(-1, c_in).T @ g2
                if dxp is not None:
                    dxp[..., i:i + h, j:j + w, :] += g @ k[i, j].T
        gx = dxp[..., 1:h + 1, 1:w + 1, :] if dxp is not None else None
        gb = g2.sum(axis=0) if bias.requires_grad else None
        return (gx, gk if kernel.requires_grad else None, gb)

    return _node(out, "conv2d", (x, kernel, bias), bw)


def conv2d_input_backward(g, kernel):
    """Adjoint of ``conv2d`` in its input, as a plain array function."""
    g = np.asarray(g, dtype=np.float64)
    k = np.asarray(kernel, dtype=np.float64)
    h, w = g.shape[-3], g.shape[-2]
    dxp = np.zeros(g.shape[:-3] + (h + 2, w + 2, k.shape[2]))
    for i in range(3):
        for j in range(3):
            dxp[..., i:i + h, j:j + w, :] += g @ k[i, j].T
    return dxp[..., 1:h + 1, 1:w + 1, :]


# ---------------------------------------------------------------------------
# linear operators
# ---------------------------------------------------------------------------

def linear_op_apply(op, x):
    """Apply a linear operator exposing ``apply``/``adjoint`` on arrays."""
    x = as_tensor(x)
    return _node(op.apply(x.data), "linear_op_apply", (x,), lambda g: (op.adjoint(g),))


def linear_op_adjoint(op, y):
    y = as_tensor(y)
    return _node(op.adjoint(y.data), "linear_op_adjoint", (y,), lambda g: (op.apply(g),))


def normal_solve(op, b, rho):
    """Solve ``(A^H A + rho I) m = b`` through ``op.normal_solve``.

    The system is self-adjoint, so the input gradient is another solve; the
    gradient in ``rho`` follows from ``dm/drho = -(A^H A + rho I)^{-1} m``.
    """
    b = as_tensor(b)
    rv = _scalar_value(rho)
    m = op.normal_solve(b.data, rv)
    if isinstance(rho, Tensor):
        r_shape = rho.shape

        def bw(g):
            gb = op.normal_solve(g, rv)
            return (gb, np.reshape(-np.sum(gb * m), r_shape))

        return _node(m, "normal_solve", (b, rho), bw)
    return _node(m, "normal_solve", (b,), lambda g: (op.normal_solve(g, rv),))


# ---------------------------------------------------------------------------
# backward pass
# ---------------------------------------------------------------------------

def _topological_order(root):
    # iterative post-order DFS; a node is marked on expansion, not on push,
    # so shared inputs always land after every consumer in reversed order
    order = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in visited:
                stack.append((p, False))
    return order


def backward(root):
    """Accumulate ``d root / d leaf`` into ``.grad`` of every leaf requiring it.

    ``root`` must hold a single value. Repeated calls accumulate.
    """
    if not isinstance(root, Tensor):
        raise TypeError("backward: root must be a Tensor")
    if root.data.size != 1:
        raise ValueError(f"backward: root must be scalar-valued, got shape {root.shape}")
    if not root.requires_grad:
        return
    grads = {id(root): np.ones_like(root.data)}
    for node in reversed(_topological_order(root)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = grads[key] + pg if key in grads else pg
