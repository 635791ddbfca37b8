import numpy as np
import pytest

from sherbet import autodiff as ad
from sherbet.errors import ShapeMismatch

RNG = np.random.default_rng(7)


def _params(**shapes):
    return {k: RNG.normal(size=s) for k, s in shapes.items()}


def _sum_weighted(t, seed=3):
    # weighted total so every output entry has a distinct upstream gradient
    w = np.random.default_rng(seed).normal(size=t.shape)
    return ad.total(ad.hadamard(t, ad.Tensor(w)))


UNARY = {
    "sigmoid": ad.sigmoid,
    "tanh": ad.tanh,
    "relu": ad.relu,
    "leaky_relu": ad.leaky_relu,
    "log": lambda a: ad.log(ad.add_scalar(ad.hadamard(a, a), 0.5)),
    "softmax_rows": ad.softmax_rows,
    "log_softmax_rows": ad.log_softmax_rows,
    "transpose": ad.transpose,
    "row_sum": ad.row_sum,
    "mean": ad.mean,
    "scale": lambda a: ad.scale(a, -2.5),
    "gather_rows": lambda a: ad.gather_rows(a, np.array([2, 0, 2])),
    "gather_cols": lambda a: ad.gather_cols(a, np.array([1, 1, 3])),
    "segment_softmax": lambda a: ad.segment_softmax(a, np.array([0, 0, 1]), 2),
    "segment_sum": lambda a: ad.segment_sum(a, np.array([1, 0, 1]), 2),
    "ball_rescale": lambda a: ad.ball_rescale(a, 1.0),
    "poincare": lambda a: ad.poincare_distance_rows(ad.scale(a, 0.1), [0, 1], [2, 0]),
}


@pytest.mark.parametrize("name", sorted(UNARY))
def test_unary_gradients(name):
    x = RNG.normal(size=(3, 4))
    x[np.abs(x) < 0.05] = 0.3  # keep clear of kinks
    err = ad.grad_check(lambda tape, p: _sum_weighted(UNARY[name](p["x"])), {"x": x})
    assert err < 1e-6, err


BINARY = {
    "matmul": (lambda a, b: ad.matmul(a, b), (3, 4), (4, 2)),
    "add": (ad.add, (3, 4), (3, 4)),
    "add_broadcast_row": (ad.add, (3, 4), (1, 4)),
    "sub": (ad.sub, (3, 4), (3, 4)),
    "hadamard": (ad.hadamard, (3, 4), (3, 4)),
    "scale_rows": (ad.scale_rows, (3, 1), (3, 4)),
    "concat_rows": (ad.concat_rows, (2, 4), (3, 4)),
}


@pytest.mark.parametrize("name", sorted(BINARY))
def test_binary_gradients(name):
    fn, sa, sb = BINARY[name]
    params = _params(a=sa, b=sb)
    err = ad.grad_check(lambda tape, p: _sum_weighted(fn(p["a"], p["b"])), params)
    assert err < 1e-6, err


def test_clip_gradient_is_zero_outside():
    tape = ad.Tape()
    x = tape.leaf(np.array([[-1.0, 0.5, 2.0]]), "x")
    tape.backward(ad.total(ad.clip(x, 0.0, 1.0)))
    np.testing.assert_array_equal(x.grad, [[0.0, 1.0, 0.0]])


def test_matmul_identity():
    tape = ad.Tape()
    x = tape.leaf(RNG.normal(size=(3, 3)), "x")
    y = ad.matmul(x, ad.Tensor(np.eye(3)))
    np.testing.assert_array_equal(y.value, x.value)
    tape.backward(ad.total(y))
    np.testing.assert_array_equal(x.grad, np.ones((3, 3)))


def test_disconnected_parameter_gets_zero_gradient():
    tape = ad.Tape()
    x = tape.leaf(np.ones((2, 2)), "x")
    unused = tape.leaf(np.ones((3, 1)), "unused")
    tape.backward(ad.total(ad.tanh(x)))
    grads = tape.grads()
    assert set(grads) == {"x", "unused"}
    np.testing.assert_array_equal(grads["unused"], np.zeros((3, 1)))


def test_dropout_semantics():
    x = ad.Tensor(np.ones((200, 50)))
    assert ad.dropout(x, 0.5, np.random.default_rng(0), training=False) is x
    assert ad.dropout(x, 0.0, np.random.default_rng(0)) is x
    y = ad.dropout(x, 0.25, np.random.default_rng(0)).value
    assert set(np.unique(y)) <= {0.0, 1.0 / 0.75}
    assert abs((y == 0).mean() - 0.25) < 0.02
    a = ad.dropout(x, 0.25, np.random.default_rng(5)).value
    b = ad.dropout(x, 0.25, np.random.default_rng(5)).value
    np.testing.assert_array_equal(a, b)


def test_dropout_gradient_uses_mask():
    tape = ad.Tape()
    x = tape.leaf(np.ones((4, 6)), "x")
    y = ad.dropout(x, 0.5, np.random.default_rng(1))
    tape.backward(ad.total(y))
    np.testing.assert_array_equal(x.grad, y.value)


def test_shape_errors():
    with pytest.raises(ShapeMismatch):
        ad.matmul(ad.Tensor(np.ones((2, 3))), ad.Tensor(np.ones((2, 3))))
    with pytest.raises(ShapeMismatch):
        ad.add(ad.Tensor(np.ones((2, 3))), ad.Tensor(np.ones((3, 2))))
    with pytest.raises(ShapeMismatch):
        ad.Tensor(np.ones(3))
    tape = ad.Tape()
    x = tape.leaf(np.ones((2, 2)), "x")
    with pytest.raises(ShapeMismatch):
        tape.backward(ad.tanh(x))


def test_quadratic_gradient_exact():
    # f(x) = sum (A x - b)^2 has gradient 2 A^T (A x - b)
    A, x, b = RNG.normal(size=(4, 3)), RNG.normal(size=(3, 1)), RNG.normal(size=(4, 1))
    tape = ad.Tape()
    xl = tape.leaf(x, "x")
    r = ad.sub(ad.matmul(ad.Tensor(A), xl), ad.Tensor(b))
    tape.backward(ad.total(ad.hadamard(r, r)))
    assert np.max(np.abs(xl.grad - 2 * A.T @ (A @ x - b))) < 1e-8


def test_operator_sugar():
    tape = ad.Tape()
    x = tape.leaf(np.array([[1.0, 2.0]]), "x")
    y = 3 * x - 1.0 + (-x)
    np.testing.assert_allclose(y.value, [[1.0, 3.0]])
    tape.backward(ad.total(y))
    np.testing.assert_allclose(x.grad, [[2.0, 2.0]])
