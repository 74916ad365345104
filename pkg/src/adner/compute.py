"""A small reverse-mode autodiff engine over numpy arrays.

Only the operations the tagger needs are provided. Each op computes its
forward value eagerly and, when any input requires a gradient, records a
closure mapping the upstream gradient to one gradient per input.
``Tensor.backward`` walks the recorded graph in reverse topological order.

Every op output is checked for NaN/Inf and raises `NonFiniteError`.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import NonFiniteError, TargetOutOfRange

MASK_VALUE = -1e9
_GELU_C = math.sqrt(2.0 / math.pi)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad=False, parents=(), backward=None, op=""):
        self.data = data if isinstance(data, np.ndarray) else np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward = backward
        self.op = op

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, op={self.op or 'leaf'})"

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def backward(self, grad=None):
        """Accumulate d(self)/d(leaf) into ``.grad`` of every leaf requiring it."""
        if grad is None:
            grad = np.ones_like(self.data)
        order = _topo_order(self)
        pending = {id(self): grad}
        for node in reversed(order):
            g = pending.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                pending[key] = pending[key] + pg if key in pending else pg


def _topo_order(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def tensor(data, dtype=np.float64, requires_grad=False):
    return Tensor(np.array(data, dtype=dtype), requires_grad=requires_grad)


def _result(out, parents, backward, op):
    if not np.all(np.isfinite(out)):
        raise NonFiniteError(f"non-finite values produced by {op}")
    if any(p.requires_grad for p in parents):
        return Tensor(out, True, parents, backward, op)
    return Tensor(out, op=op)


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# -- elementary ops -----------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; ``b`` may broadcast over the leading dims of ``a``."""
    out = a.data + b.data

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _result(out, (a, b), backward, "add")


def scale(x: Tensor, c: float) -> Tensor:
    c = x.dtype.type(c)
    return _result(x.data * c, (x,), lambda g: (g * c,), "scale")


def matmul(x: Tensor, w: Tensor) -> Tensor:
    """``x[..., k] @ w[k, n]``."""
    out = x.data @ w.data

    def backward(g):
        gx = g @ w.data.T
        k, n = w.shape
        gw = x.data.reshape(-1, k).T @ g.reshape(-1, n)
        return gx, gw

    return _result(out, (x, w), backward, "matmul")


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    return add(matmul(x, w), b)


def gelu(x: Tensor) -> Tensor:
    """GELU, tanh approximation."""
    xd = x.data
    inner = _GELU_C * (xd + 0.044715 * xd**3)
    t = np.tanh(inner)
    out = 0.5 * xd * (1.0 + t)

    def backward(g):
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * xd**2)
        return (g * (0.5 * (1.0 + t) + 0.5 * xd * (1.0 - t * t) * dinner),)

    return _result(out, (x,), backward, "gelu")


def softmax(x: Tensor) -> Tensor:
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (p * (g - (g * p).sum(axis=-1, keepdims=True)),)

    return _result(p, (x,), backward, "softmax")


def log_softmax(x: Tensor) -> Tensor:
    z = x.data - x.data.max(axis=-1, keepdims=True)
    out = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))

    def backward(g):
        return (g - np.exp(out) * g.sum(axis=-1, keepdims=True),)

    return _result(out, (x,), backward, "log_softmax")


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + xd.dtype.type(eps))
    xhat = xc * inv
    out = xhat * gamma.data + beta.data

    def backward(g):
        gxhat = g * gamma.data
        gx = inv * (gxhat - gxhat.mean(axis=-1, keepdims=True)
                    - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True))
        lead = tuple(range(g.ndim - 1))
        return gx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return _result(out, (x, gamma, beta), backward, "layer_norm")


def dropout(x: Tensor, rate: float, rng: np.random.Generator | None, train: bool = True) -> Tensor:
    """Inverted dropout. Identity (same object) when not training or rate == 0."""
    if not train or rate == 0.0:
        return x
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) * x.dtype.type(1.0 / (1.0 - rate))
    return _result(x.data * keep, (x,), lambda g: (g * keep,), "dropout")


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    out = table.data[ids]

    def backward(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        return (gt,)

    return _result(out, (table,), backward, "embedding")


def masked_mean(x: Tensor, mask: np.ndarray) -> Tensor:
    """Mean of ``x[B, T, d]`` over positions where ``mask[B, T]`` is true."""
    m = mask.astype(x.dtype)[..., None]
    count = m.sum(axis=1)
    out = (x.data * m).sum(axis=1) / count

    def backward(g):
        return ((g / count)[:, None, :] * m,)

    return _result(out, (x,), backward, "masked_mean")


def concat(xs, axis=-1) -> Tensor:
    out = np.concatenate([x.data for x in xs], axis=axis)
    bounds = np.cumsum([x.shape[axis] for x in xs])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _result(out, tuple(xs), backward, "concat")


def attention(q: Tensor, k: Tensor, v: Tensor, mask: np.ndarray, n_heads: int) -> Tensor:
    """Multi-head scaled dot-product attention over ``[B, T, d]`` inputs.

    Key positions where ``mask`` is false receive an additive -1e9 before
    the softmax.
    """
    B, T, d = q.shape
    dh = d // n_heads
    dt = q.dtype.type

    def heads(a):
        return a.reshape(B, T, n_heads, dh).transpose(0, 2, 1, 3)

    qh, kh, vh = heads(q.data), heads(k.data), heads(v.data)
    scale_ = dt(1.0 / math.sqrt(dh))
    bias = np.where(mask, dt(0.0), dt(MASK_VALUE))[:, None, None, :]
    scores = qh @ kh.transpose(0, 1, 3, 2) * scale_ + bias
    scores = scores - scores.max(axis=-1, keepdims=True)
    p = np.exp(scores)
    p /= p.sum(axis=-1, keepdims=True)
    out = (p @ vh).transpose(0, 2, 1, 3).reshape(B, T, d)

    def backward(g):
        gh = g.reshape(B, T, n_heads, dh).transpose(0, 2, 1, 3)
        gv = p.transpose(0, 1, 3, 2) @ gh
        gp = gh @ vh.transpose(0, 1, 3, 2)
        gs = p * (gp - (gp * p).sum(axis=-1, keepdims=True)) * scale_
        gq = gs @ kh
        gk = gs.transpose(0, 1, 3, 2) @ qh

        def merge(a):
            return a.transpose(0, 2, 1, 3).reshape(B, T, d)

        return merge(gq), merge(gk), merge(gv)

    return _result(out, (q, k, v), backward, "attention")


def gradient_reversal(x: Tensor, lam: float = 1.0) -> Tensor:
    """Identity on the forward pass; multiplies the upstream gradient by -lam."""
    if lam <= 0:
        raise ValueError("gradient reversal lambda must be > 0")
    neg = x.dtype.type(-lam)
    return _result(x.data, (x,), lambda g: (g * neg,), "gradient_reversal")


def nll_loss(log_probs: Tensor, targets, ignore: int = -1):
    """Mean negative log-likelihood of ``targets`` over non-ignored rows.

    Returns ``(loss, all_ignored)``; the loss is 0 when every row is ignored.
    """
    lp = log_probs.data
    n, c = lp.shape
    targets = np.asarray(targets, dtype=np.int64).reshape(-1)
    keep = targets != ignore
    if np.any((targets[keep] < 0) | (targets[keep] >= c)):
        raise TargetOutOfRange(f"targets must lie in [0, {c})")
    rows = np.nonzero(keep)[0]
    count = len(rows)
    if count == 0:
        out = np.zeros((), dtype=lp.dtype)
    else:
        out = -lp[rows, targets[rows]].sum() / lp.dtype.type(count)
    out = np.asarray(out, dtype=lp.dtype)

    def backward(g):
        gl = np.zeros_like(lp)
        if count:
            gl[rows, targets[rows]] = -g / lp.dtype.type(count)
        return (gl,)

    return _result(out, (log_probs,), backward, "nll_loss"), count == 0


def reshape(x: Tensor, shape) -> Tensor:
    return _result(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),), "reshape")


# -- finite differences -------------------------------------------------------


def finite_diff_grad(f, params, eps: float = 1e-5):
    """Central-difference gradient of the scalar ``f(params)``.

    ``params`` is a sequence of Tensors (or arrays) perturbed in place and
    restored. Returns one array per parameter, in the parameters' precision
    (at least double); pass extended-precision parameters for a sharper
    oracle.
    """

    def value():
        out = f(params)
        # keep the objective's own precision for the subtraction below
        out = out.data if isinstance(out, Tensor) else np.asarray(out)
        if not np.isfinite(out):
            raise NonFiniteError("objective is not finite")
        return out

    grads = []
    for p in params:
        arr = p.data if isinstance(p, Tensor) else p
        if not arr.flags.c_contiguous:
            raise ValueError("finite_diff_grad needs C-contiguous parameters")
        g = np.zeros(arr.shape, dtype=np.promote_types(arr.dtype, np.float64))
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = value()
            flat[i] = orig - eps
            lo = value()
            flat[i] = orig
            gflat[i] = (hi - lo) / (2 * arr.dtype.type(eps))
        grads.append(g)
    return grads


def max_rel_error(a, b, floor: float = 1e-8) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0
