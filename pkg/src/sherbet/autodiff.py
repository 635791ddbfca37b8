"""Dense 2-D tensors on a reverse-mode tape.

Every primitive computes its forward value with numpy and appends one record
to the tape of its inputs. Records are created in evaluation order, so the
tape is already topologically sorted and backward is a single reverse sweep.

    tape = Tape()
    w = tape.leaf(np.ones((3, 1)))
    loss = mean(matmul(x, w))
    tape.backward(loss)
    w.grad
"""
import numpy as np

from . import _kernels
from .errors import ShapeMismatch

LEAKY_SLOPE = 0.01


class Tensor:
    __slots__ = ("value", "grad", "tape", "requires_grad", "name")

    def __init__(self, value, tape=None, requires_grad=False, name=None):
        value = np.asarray(value, dtype=np.float64)
        if value.ndim != 2:
            raise ShapeMismatch(f"tensors are 2-D, got shape {value.shape}")
        self.value = value
        self.grad = None
        self.tape = tape
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def item(self):
        return float(self.value[0, 0])

    def __repr__(self):
        return f"Tensor(shape={self.shape}, name={self.name!r})"

    def __add__(self, other):
        return add(self, _wrap(other, self))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, _wrap(other, self))

    def __rsub__(self, other):
        return sub(_wrap(other, self), self)

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, float(other))
        return hadamard(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self):
        return transpose(self)


def _wrap(x, like):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.full(like.shape, float(x)))


class Tape:
    """Ordered operation records plus the leaves that receive gradients."""

    def __init__(self):
        self.records = []
        self.leaves = []

    def leaf(self, value, name=None):
        t = Tensor(np.array(value, dtype=np.float64, copy=True), self, True, name)
        self.leaves.append(t)
        return t

    def const(self, value):
        return Tensor(value, self, False)

    def record(self, out, backward):
        self.records.append((out, backward))

    def backward(self, loss):
        if loss.shape != (1, 1):
            raise ShapeMismatch(f"backward needs a scalar, got {loss.shape}")
        for leaf in self.leaves:
            leaf.grad = np.zeros_like(leaf.value)
        for out, _ in self.records:
            if out.grad is None:
                out.grad = np.zeros_like(out.value)
        loss.grad = np.ones((1, 1))
        for out, fn in reversed(self.records):
            fn(out.grad)

    def grads(self):
        return {leaf.name: leaf.grad for leaf in self.leaves}


def _tape_of(*xs):
    for x in xs:
        if x.tape is not None:
            return x.tape
    return None


def _op(value, parents, backward):
    """Create the output tensor and record ``backward`` if any parent needs grad."""
    tape = _tape_of(*parents)
    needs = any(p.requires_grad for p in parents)
    out = Tensor(value, tape, needs)
    if needs and tape is not None:
        tape.record(out, backward)
    return out


def _acc(t, g):
    if t.requires_grad:
        t.grad += g


def _check(cond, a, b, op):
    if not cond:
        raise ShapeMismatch(f"{op}: incompatible shapes {a.shape} and {b.shape}")


# -- linear algebra -------------------------------------------------------

def matmul(a, b):
    _check(a.shape[1] == b.shape[0], a, b, "matmul")

    def back(g):
        _acc(a, g @ b.value.T)
        _acc(b, a.value.T @ g)
    return _op(a.value @ b.value, (a, b), back)


def transpose(a):
    def back(g):
        _acc(a, g.T)
    return _op(a.value.T.copy(), (a,), back)


def reshape(a, shape):
    def back(g):
        _acc(a, g.reshape(a.shape))
    return _op(a.value.reshape(shape).copy(), (a,), back)


def add(a, b):
    """Elementwise sum; ``b`` may be a ``1 x c`` row broadcast over ``a``."""
    if b.shape[0] == 1 and a.shape[0] != 1 and a.shape[1] == b.shape[1]:
        def back(g):
            _acc(a, g)
            _acc(b, g.sum(axis=0, keepdims=True))
        return _op(a.value + b.value, (a, b), back)
    _check(a.shape == b.shape, a, b, "add")

    def back(g):
        _acc(a, g)
        _acc(b, g)
    return _op(a.value + b.value, (a, b), back)


def sub(a, b):
    _check(a.shape == b.shape, a, b, "sub")

    def back(g):
        _acc(a, g)
        _acc(b, -g)
    return _op(a.value - b.value, (a, b), back)


def hadamard(a, b):
    _check(a.shape == b.shape, a, b, "hadamard")

    def back(g):
        _acc(a, g * b.value)
        _acc(b, g * a.value)
    return _op(a.value * b.value, (a, b), back)


def scale_rows(col, x):
    """Multiply row ``i`` of ``x`` by ``col[i, 0]``."""
    _check(col.shape == (x.shape[0], 1), col, x, "scale_rows")

    def back(g):
        _acc(col, np.sum(g * x.value, axis=1, keepdims=True))
        _acc(x, g * col.value)
    return _op(col.value * x.value, (col, x), back)


def scale(a, c):
    def back(g):
        _acc(a, c * g)
    return _op(c * a.value, (a,), back)


def add_scalar(a, c):
    def back(g):
        _acc(a, g)
    return _op(a.value + c, (a,), back)


# -- reductions and reshaping --------------------------------------------

def total(a):
    def back(g):
        _acc(a, np.full(a.shape, g[0, 0]))
    return _op(np.array([[a.value.sum()]]), (a,), back)


def mean(a):
    n = a.value.size

    def back(g):
        _acc(a, np.full(a.shape, g[0, 0] / n))
    return _op(np.array([[a.value.mean()]]), (a,), back)


def row_sum(a):
    def back(g):
        _acc(a, np.repeat(g, a.shape[1], axis=1))
    return _op(a.value.sum(axis=1, keepdims=True), (a,), back)


def concat_rows(*xs):
    sizes = [x.shape[0] for x in xs]
    for x in xs[1:]:
        _check(x.shape[1] == xs[0].shape[1], xs[0], x, "concat_rows")
    bounds = np.cumsum([0] + sizes)

    def back(g):
        for x, lo, hi in zip(xs, bounds[:-1], bounds[1:]):
            _acc(x, g[lo:hi])
    return _op(np.vstack([x.value for x in xs]), xs, back)


def gather_rows(a, idx):
    idx = np.asarray(idx, dtype=np.int64)

    def back(g):
        if a.requires_grad:
            np.add.at(a.grad, idx, g)
    return _op(a.value[idx], (a,), back)


def gather_cols(a, idx):
    idx = np.asarray(idx, dtype=np.int64)

    def back(g):
        if a.requires_grad:
            np.add.at(a.grad.T, idx, g.T)
    return _op(a.value[:, idx], (a,), back)


# -- elementwise nonlinearities -------------------------------------------

def sigmoid(a):
    x = a.value
    y = np.empty_like(x)
    pos = x >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    y[~pos] = ex / (1.0 + ex)

    def back(g):
        _acc(a, g * y * (1.0 - y))
    return _op(y, (a,), back)


def tanh(a):
    y = np.tanh(a.value)

    def back(g):
        _acc(a, g * (1.0 - y * y))
    return _op(y, (a,), back)


def relu(a):
    mask = a.value > 0

    def back(g):
        _acc(a, g * mask)
    return _op(np.where(mask, a.value, 0.0), (a,), back)


def leaky_relu(a, slope=LEAKY_SLOPE):
    factor = np.where(a.value > 0, 1.0, slope)

    def back(g):
        _acc(a, g * factor)
    return _op(a.value * factor, (a,), back)


def log(a):
    def back(g):
        _acc(a, g / a.value)
    return _op(np.log(a.value), (a,), back)


def clip(a, lo, hi):
    inside = (a.value >= lo) & (a.value <= hi)

    def back(g):
        _acc(a, g * inside)
    return _op(np.clip(a.value, lo, hi), (a,), back)


def dropout(a, rate, rng, training=True):
    """Inverted dropout: kept entries are scaled by ``1 / (1 - rate)``."""
    if not training or rate <= 0.0:
        return a
    keep = (rng.random(a.shape) >= rate) / (1.0 - rate)

    def back(g):
        _acc(a, g * keep)
    return _op(a.value * keep, (a,), back)


# -- softmax family --------------------------------------------------------

def softmax_rows(a):
    z = a.value - a.value.max(axis=1, keepdims=True)
    ez = np.exp(z)
    y = ez / ez.sum(axis=1, keepdims=True)

    def back(g):
        _acc(a, y * (g - np.sum(g * y, axis=1, keepdims=True)))
    return _op(y, (a,), back)


def log_softmax_rows(a):
    z = a.value - a.value.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    y = z - lse

    def back(g):
        _acc(a, g - np.exp(y) * g.sum(axis=1, keepdims=True))
    return _op(y, (a,), back)


def segment_softmax(a, seg, nseg):
    """Softmax down each column within groups of rows sharing a segment id."""
    seg = np.asarray(seg, dtype=np.int64)
    y = _kernels.segment_softmax(a.value, seg, nseg)

    def back(g):
        _acc(a, _kernels.segment_softmax_grad(y, g, seg, nseg))
    return _op(y, (a,), back)


def segment_sum(a, seg, nseg):
    seg = np.asarray(seg, dtype=np.int64)

    def back(g):
        _acc(a, g[seg])
    return _op(_kernels.segment_sum(a.value, seg, nseg), (a,), back)


# -- hyperbolic ------------------------------------------------------------

def ball_rescale(a, max_norm):
    """Rescale rows whose norm exceeds ``max_norm`` back onto that radius."""
    norms = np.linalg.norm(a.value, axis=1, keepdims=True)
    over = (norms > max_norm)[:, 0]
    y = a.value.copy()
    y[over] *= max_norm / norms[over]

    def back(g):
        ga = g.copy()
        if over.any():
            x = a.value[over]
            n = norms[over]
            gy = g[over]
            # d(m x / |x|) = m/|x| (I - x x^T / |x|^2)
            ga[over] = max_norm / n * (gy - x * np.sum(gy * x, axis=1, keepdims=True) / n ** 2)
        _acc(a, ga)
    return _op(y, (a,), back)


def poincare_distance_rows(a, I, J):
    """Column of Poincare distances between rows ``a[I[k]]`` and ``a[J[k]]``."""
    I = np.asarray(I, dtype=np.int64)
    J = np.asarray(J, dtype=np.int64)
    d = _kernels.poincare_distance_pairs(a.value, I, J)

    def back(g):
        if a.requires_grad:
            _kernels.poincare_distance_pairs_grad(a.value, I, J, g[:, 0], a.grad)
    return _op(d[:, None], (a,), back)


# -- checking --------------------------------------------------------------

def grad_check(f, params, step=1e-5, floor=1e-6):
    """Max relative error between tape gradients and central differences.

    Parameters
    ----------
    f : callable
        ``f(tape, leaves) -> 1x1 Tensor`` where ``leaves`` maps each name in
        ``params`` to a tape leaf. Must be deterministic.
    params : dict of str to ndarray
    step : float
        Central-difference half width.
    floor : float
        Lower bound on the relative-error denominator ``|a| + |n|``.
    """
    tape = Tape()
    leaves = {k: tape.leaf(v, k) for k, v in params.items()}
    loss = f(tape, leaves)
    tape.backward(loss)
    analytic = {k: leaves[k].grad for k in params}

    def value(name, arr):
        t = Tape()
        lv = {k: t.leaf(arr if k == name else v, k) for k, v in params.items()}
        return f(t, lv).item()

    worst = 0.0
    for name, base in params.items():
        base = np.asarray(base, dtype=np.float64)
        for idx in np.ndindex(base.shape):
            up = base.copy()
            up[idx] += step
            dn = base.copy()
            dn[idx] -= step
            num = (value(name, up) - value(name, dn)) / (2 * step)
            a = analytic[name][idx]
            err = abs(a - num) / max(abs(a) + abs(num), floor)
            worst = max(worst, err)
    return worst
