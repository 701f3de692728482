"""Dense array arithmetic with reverse-mode gradients.

Every value the model computes on is a :class:`Tensor` wrapping a numpy
array. Operations performed while gradients are enabled record a backward
closure on the result; :meth:`Tensor.backward` walks the recorded graph in
reverse topological order and accumulates gradients into :class:`Param`
leaves. Vectors are 1-D arrays, matrices 2-D, and row-vector convention is
used throughout (``x @ W`` with ``W`` stored input-by-output).
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import expit

GROUPS = ("shared", "task_classification", "task_adr", "task_indication")

_grad_enabled = True
_default_dtype = np.float64


class DimensionError(ValueError):
    pass


class ArgumentError(ValueError):
    pass


class ProtocolError(RuntimeError):
    pass


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def set_default_dtype(dtype) -> None:
    global _default_dtype
    _default_dtype = np.dtype(dtype).type


def default_dtype():
    return _default_dtype


class Tensor:
    __slots__ = ("value", "grad", "parents", "backward_fn", "requires_grad")

    def __init__(self, value, parents: Sequence["Tensor"] = (), backward_fn=None,
                 requires_grad: bool = False):
        self.value = value
        self.grad = None
        self.parents = tuple(parents)
        self.backward_fn = backward_fn
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.value.shape

    def __len__(self):
        return self.value.shape[0]

    def __repr__(self):
        return f"Tensor(shape={self.value.shape})"

    def numpy(self) -> np.ndarray:
        return self.value

    def backward(self, seed=None) -> None:
        """Propagate d(self)/d(leaf) into every reachable leaf's ``grad``."""
        if seed is None:
            if self.value.size != 1:
                raise ArgumentError("backward() without a seed needs a scalar tensor")
            seed = np.ones_like(self.value)
        order = _topological(self)
        self.grad = np.asarray(seed, dtype=self.value.dtype)
        for node in reversed(order):
            g = node.grad
            if node.backward_fn is None or g is None:
                continue
            parent_grads = node.backward_fn(g)
            for parent, pg in zip(node.parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                if parent.grad is None:
                    parent.grad = pg.copy() if isinstance(parent, Param) else pg
                else:
                    parent.grad = parent.grad + pg
            if not isinstance(node, Param):
                node.grad = None

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)


class Param(Tensor):
    """A learnable leaf tensor with a fixed parameter group."""

    __slots__ = ("name", "group")

    def __init__(self, value: np.ndarray, name: str, group: str):
        if group not in GROUPS:
            raise ArgumentError(f"unknown parameter group {group!r}")
        super().__init__(np.asarray(value), requires_grad=True)
        self.name = name
        self.group = group
        self.grad = np.zeros_like(self.value)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.value)

    def __repr__(self):
        return f"Param({self.name}, group={self.group}, shape={self.value.shape})"


def _topological(root: Tensor) -> list:
    order = []
    seen = set()
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
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def as_tensor(x) -> Tensor:
    if x.__class__ is Tensor or isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=_default_dtype))


def _result(value, parents, backward_fn) -> Tensor:
    if _grad_enabled:
        for p in parents:
            if p.requires_grad:
                return Tensor(value, parents, backward_fn, requires_grad=True)
    return Tensor(value)


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# elementwise


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _result(a.value + b.value, (a, b),
                   lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _result(a.value - b.value, (a, b),
                   lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    av, bv = a.value, b.value
    return _result(av * bv, (a, b),
                   lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)))


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    return _result(a.value * c, (a,), lambda g: (g * c,))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.value)
    return _result(out, (a,), lambda g: (g * (1.0 - out * out),))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return expit(x)


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = _sigmoid(a.value)
    return _result(out, (a,), lambda g: (g * out * (1.0 - out),))


def log(a) -> Tensor:
    a = as_tensor(a)
    av = a.value
    return _result(np.log(av), (a,), lambda g: (g / av,))


def clip(a, lo: float, hi: float) -> Tensor:
    """Clamp into [lo, hi]; gradient is zero where the clamp is active."""
    a = as_tensor(a)
    av = a.value
    inside = (av >= lo) & (av <= hi)
    return _result(np.clip(av, lo, hi), (a,), lambda g: (g * inside,))


def tensor_sum(a) -> Tensor:
    a = as_tensor(a)
    shape = a.shape
    return _result(np.asarray(a.value.sum()), (a,),
                   lambda g: (np.broadcast_to(g, shape).copy(),))


# ---------------------------------------------------------------------------
# linear algebra and shape manipulation


def matmul(a, b) -> Tensor:
    """Matrix (or matrix-vector) product with recorded gradients."""
    a, b = as_tensor(a), as_tensor(b)
    av, bv = a.value, b.value
    if av.ndim == 0 or bv.ndim == 0 or av.shape[-1] != bv.shape[0]:
        raise DimensionError(f"cannot multiply {av.shape} by {bv.shape}")

    def backward(g):
        if av.ndim == 1 and bv.ndim == 2:
            return g @ bv.T, np.outer(av, g)
        if av.ndim == 2 and bv.ndim == 1:
            return np.outer(g, bv), av.T @ g
        if av.ndim == 1 and bv.ndim == 1:
            return g * bv, g * av
        return g @ bv.T, av.T @ g

    return _result(av @ bv, (a, b), backward)


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    ax = axis % ts[0].value.ndim
    bounds = [0]
    for t in ts:
        bounds.append(bounds[-1] + t.shape[ax])

    def backward(g):
        out = []
        for i in range(len(ts)):
            sl = [slice(None)] * g.ndim
            sl[ax] = slice(bounds[i], bounds[i + 1])
            out.append(g[tuple(sl)])
        return out

    return _result(np.concatenate([t.value for t in ts], axis=ax), ts, backward)


def stack(tensors: Sequence) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    return _result(np.stack([t.value for t in ts]), ts, lambda g: list(g))


def getitem(a, idx) -> Tensor:
    a = as_tensor(a)
    shape, dtype = a.shape, a.value.dtype

    def backward(g):
        full = np.zeros(shape, dtype=dtype)
        np.add.at(full, idx, g)
        return (full,)

    return _result(a.value[idx], (a,), backward)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    orig = a.shape
    return _result(a.value.reshape(shape), (a,), lambda g: (g.reshape(orig),))


def take_rows(table, ids) -> Tensor:
    """Row lookup ``table[ids]``; gradients scatter-add back into the rows."""
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    shape, dtype = table.shape, table.value.dtype

    def backward(g):
        full = np.zeros(shape, dtype=dtype)
        np.add.at(full, ids, g)
        return (full,)

    return _result(table.value[ids], (table,), backward)


# ---------------------------------------------------------------------------
# composite ops with hand-written backward


def softmax_op(a) -> Tensor:
    """Softmax over the last axis."""
    a = as_tensor(a)
    out = _softmax_array(a.value)

    def backward(g):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return _result(out, (a,), backward)



def simplex_grid_bits(dtype) -> int:
    """Grid exponent k for :func:`snap_to_simplex`: values become multiples
    of 2**-k, leaving two spare mantissa bits so sums up to 4 stay exact."""
    return np.finfo(dtype).nmant - 2


def snap_to_simplex(a) -> Tensor:
    """Round a probability vector onto the dyadic grid 2**-k so it sums to 1
    exactly (largest-remainder rounding).

    Sums of a few snapped vectors are then exact in binary floating point.
    Each entry moves by less than 2**-k, about the roundoff of the softmax
    itself, and the gradient passes through unchanged.
    """
    a = as_tensor(a)
    v = a.value
    k = simplex_grid_bits(v.dtype)
    scaled = np.ldexp(v / v.sum(), k)
    units = np.floor(scaled)
    short = int(round(float(np.ldexp(1.0, k) - units.sum())))
    while short:
        # add to the largest remainders, or take from the smallest
        step = 1 if short > 0 else -1
        order = [i for i in np.argsort((units - scaled) * step, kind="stable")
                 if step > 0 or units[i] > 0][:abs(short)]
        units[order] += step
        short -= step * len(order)
    out = np.ldexp(units, -k).astype(v.dtype)
    return _result(out, (a,), lambda g: (g,))

def lstm_update(z, c_prev, h_prev=None, mask=None) -> Tensor:
    """Gate nonlinearities and state update of one LSTM step.

    ``z`` holds the pre-activations laid out as ``[i, f, g, o]`` blocks of
    width d along the last axis. Returns ``[h, c]`` concatenated along the
    last axis. When ``mask`` (shape ``(..., 1)``, values 0/1) is given, rows
    with mask 0 carry ``h_prev``/``c_prev`` through unchanged.
    """
    z, c_prev = as_tensor(z), as_tensor(c_prev)
    d = c_prev.shape[-1]
    zv, cp = z.value, c_prev.value
    sig = _sigmoid(zv)
    i, f, o = sig[..., :d], sig[..., d:2 * d], sig[..., 3 * d:]
    gg = np.tanh(zv[..., 2 * d:3 * d])
    c = f * cp + i * gg
    tc = np.tanh(c)
    h = o * tc
    parents = [z, c_prev]
    if mask is not None:
        h_prev = as_tensor(h_prev)
        m = np.asarray(mask, dtype=zv.dtype)
        h = m * h + (1.0 - m) * h_prev.value
        c = m * c + (1.0 - m) * cp
        parents.append(h_prev)

    def backward(g):
        gh, gc = g[..., :d], g[..., d:]
        if mask is not None:
            gh_prev_direct = (1.0 - m) * gh
            gc_prev_direct = (1.0 - m) * gc
            gh = m * gh
            gc = m * gc
        dc = gc + gh * o * (1.0 - tc * tc)
        dz = np.concatenate([
            dc * gg * i * (1.0 - i),
            dc * cp * f * (1.0 - f),
            dc * i * (1.0 - gg * gg),
            gh * tc * o * (1.0 - o),
        ], axis=-1)
        dcp = dc * f
        if mask is not None:
            return dz, dcp + gc_prev_direct, gh_prev_direct
        return dz, dcp

    return _result(np.concatenate([h, c], axis=-1), parents, backward)


def lstm_sequence(proj, w_h, mask=None, reverse: bool = False) -> Tensor:
    """Whole-sequence LSTM from a zero state, backpropagated through time by hand.

    ``proj`` is ``(T, ..., 4d)``: the input contribution ``x_t @ w_x + b`` per
    step. Returns the hidden states ``(T, ..., d)`` in input order. ``mask``
    of shape ``(T, ...)`` freezes the state where it is 0. With ``reverse``
    the steps run from T-1 down to 0.
    """
    proj, w_h = as_tensor(proj), as_tensor(w_h)
    pv, wv = proj.value, w_h.value
    d = wv.shape[0]
    if pv.shape[-1] != 4 * d or wv.shape[1] != 4 * d:
        raise DimensionError(f"LSTM projections {pv.shape} do not match recurrent weights {wv.shape}")
    T = pv.shape[0]
    order = range(T - 1, -1, -1) if reverse else range(T)
    h = np.zeros(pv.shape[1:-1] + (d,), dtype=pv.dtype)
    c = np.zeros_like(h)
    hs = np.empty(pv.shape[:-1] + (d,), dtype=pv.dtype)
    record = _grad_enabled and (proj.requires_grad or w_h.requires_grad)
    cache = []
    if mask is not None:
        masks = np.asarray(mask, dtype=pv.dtype)[..., None]
    for t in order:
        z = pv[t] + h @ wv
        sig = _sigmoid(z)
        i, f, o = sig[..., :d], sig[..., d:2 * d], sig[..., 3 * d:]
        gg = np.tanh(z[..., 2 * d:3 * d])
        c_new = f * c + i * gg
        tc = np.tanh(c_new)
        h_new = o * tc
        m = None
        if mask is not None:
            m = masks[t]
            h_new = h + m * (h_new - h)
            c_new = c + m * (c_new - c)
        if record:
            cache.append((t, h, c, i, f, o, gg, tc, m))
        h, c = h_new, c_new
        hs[t] = h

    def backward(g):
        dproj = np.zeros_like(pv)
        dw = np.zeros_like(wv)
        dh_next = np.zeros(pv.shape[1:-1] + (d,), dtype=pv.dtype)
        dc_next = np.zeros_like(dh_next)
        for t, h_prev, c_prev, i, f, o, gg, tc, m in reversed(cache):
            gh = g[t] + dh_next
            gc = dc_next
            if m is not None:
                carry_h, carry_c = (1.0 - m) * gh, (1.0 - m) * gc
                gh, gc = m * gh, m * gc
            dc = gc + gh * o * (1.0 - tc * tc)
            dz = np.concatenate([
                dc * gg * i * (1.0 - i),
                dc * c_prev * f * (1.0 - f),
                dc * i * (1.0 - gg * gg),
                gh * tc * o * (1.0 - o),
            ], axis=-1)
            dproj[t] = dz
            if h_prev.ndim == 1:
                dw += np.outer(h_prev, dz)
            else:
                dw += h_prev.T @ dz
            dh_next = dz @ wv.T
            dc_next = dc * f
            if m is not None:
                dh_next = dh_next + carry_h
                dc_next = dc_next + carry_c
        return dproj, dw

    return _result(hs, (proj, w_h), backward)


# ---------------------------------------------------------------------------
# plain-array helpers and initialisers


def _softmax_array(v: np.ndarray) -> np.ndarray:
    e = np.exp(v - v.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def softmax(v) -> np.ndarray:
    """Numerically stable softmax of a non-empty finite vector."""
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0:
        raise ArgumentError("softmax of an empty vector")
    if not np.all(np.isfinite(v)):
        raise ArgumentError("softmax input is not finite")
    return _softmax_array(v)


def activation(v, kind: str) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise ArgumentError("activation input is not finite")
    if kind == "tanh":
        return np.tanh(v)
    if kind == "sigmoid":
        return _sigmoid(v)
    raise ArgumentError(f"unknown activation {kind!r}")


class Rng:
    """Seeded generator: numpy's PCG64 bit generator behind ``Generator``.

    PCG64 output is specified bit-for-bit by numpy, so a given seed yields
    the same draws on every platform.
    """

    algorithm = "numpy.random.PCG64"

    def __init__(self, seed: int):
        self.seed = int(seed)
        self.gen = np.random.Generator(np.random.PCG64(self.seed))

    def uniform(self, low, high, size):
        return self.gen.uniform(low, high, size)

    def random(self, size=None):
        return self.gen.random(size)

    def permutation(self, n: int) -> np.ndarray:
        return self.gen.permutation(n)

    def integers(self, low, high=None, size=None):
        return self.gen.integers(low, high, size)

    def spawn(self) -> "Rng":
        return Rng(int(self.gen.integers(0, 2**63 - 1)))


def xavier_init(rows: int, cols: int, rng: Rng, dtype=None) -> np.ndarray:
    if rows < 1 or cols < 1:
        raise ArgumentError(f"xavier_init needs positive dimensions, got {rows}x{cols}")
    bound = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-bound, bound, (rows, cols)).astype(dtype or _default_dtype)


def dropout_mask(length, rate: float, rng: Rng, dtype=None) -> np.ndarray:
    """Inverted-dropout mask: kept entries equal 1/(1-rate), dropped ones 0.

    ``length`` may be an int or a shape tuple.
    """
    if not 0.0 <= rate < 1.0:
        raise ArgumentError(f"dropout rate must be in [0, 1), got {rate}")
    dtype = dtype or _default_dtype
    if rate == 0.0:
        return np.ones(length, dtype=dtype)
    keep = rng.random(length) >= rate
    return (keep / (1.0 - rate)).astype(dtype)


def finite_difference_gradient(loss_fn: Callable[[], float], params: Iterable[Param],
                               epsilon: float = 1e-5, indices=None) -> dict:
    """Central-difference gradients of ``loss_fn`` for every scalar of ``params``.

    ``loss_fn`` takes no arguments and must read the current parameter
    values. Its return value is used at its own precision, so a model cast
    to ``np.longdouble`` gives an extended-precision oracle. ``indices``
    optionally maps a parameter name to the flat positions to probe; other
    positions are reported as NaN.
    """
    base = np.asarray(loss_fn())
    if np.asarray(loss_fn()) != base:
        raise ProtocolError("loss function is not deterministic")
    work = base.dtype if base.dtype.kind == "f" else np.float64
    grads = {}
    for p in params:
        flat = p.value.reshape(-1)
        probe = indices.get(p.name) if indices else None
        out = np.full(flat.shape, np.nan, dtype=work) if probe is not None else np.zeros(flat.shape, dtype=work)
        for k in (range(flat.size) if probe is None else probe):
            orig = flat[k]
            flat[k] = orig + epsilon
            up = np.asarray(loss_fn(), dtype=work)
            flat[k] = orig - epsilon
            down = np.asarray(loss_fn(), dtype=work)
            flat[k] = orig
            out[k] = (up - down) / (2 * work.type(epsilon))
        grads[p.name] = out.reshape(p.value.shape)
    return grads


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Max over entries of |a-n| / max(|a|, |n|, 1e-8), ignoring NaN probes."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    ok = ~np.isnan(n)
    if not ok.any():
        return 0.0
    a, n = a[ok], n[ok]
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)
    return float(np.max(np.abs(a - n) / denom))
