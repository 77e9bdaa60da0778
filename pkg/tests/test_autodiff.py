"""Tape engine: analytic adjoints against central finite differences."""

import numpy as np
import pytest
import scipy.sparse as sp

from gcfbench.autodiff import Tape, check_gradients
from gcfbench.errors import NumericalError


def test_sum_of_squares_gradient():
    tape = Tape()
    x = tape.input(np.array([[1.0, 2.0]]), trainable=True)
    loss = tape.reduce_sum(tape.mul(x, x))
    tape.backward(loss)
    np.testing.assert_allclose(x.grad, [[2.0, 4.0]])


def test_sparse_matmul_gradient_is_transpose_times_ones():
    rng = np.random.default_rng(0)
    A = sp.random(6, 4, density=0.5, random_state=7, format="csr")
    tape = Tape()
    x = tape.input(rng.standard_normal((4, 3)), trainable=True)
    loss = tape.reduce_sum(tape.sparse_matmul(A, x))
    tape.backward(loss)
    expected = (A.T @ np.ones((6, 3)))
    np.testing.assert_allclose(x.grad, expected, atol=1e-12)


def test_constant_loss_zero_gradients():
    tape = Tape()
    p = tape.input(np.ones((2, 2)), trainable=True)
    c = tape.input(np.full((1, 1), 3.0))
    loss = tape.scale(c, 2.0)
    tape.backward(loss)
    np.testing.assert_array_equal(p.grad, np.zeros((2, 2)))


def test_non_scalar_loss_rejected():
    tape = Tape()
    x = tape.input(np.ones((2, 2)), trainable=True)
    with pytest.raises(ValueError):
        tape.backward(tape.mul(x, x))


def test_gradient_accumulates_over_branches():
    # x feeds two consumers; adjoints must add
    tape = Tape()
    x = tape.input(np.array([[1.5, -0.5]]), trainable=True)
    a = tape.scale(x, 2.0)
    b = tape.mul(x, x)
    loss = tape.reduce_sum(tape.add(a, b))
    tape.backward(loss)
    np.testing.assert_allclose(x.grad, 2.0 + 2.0 * x.value)


def test_quadratic_check_gradients_tight():
    rng = np.random.default_rng(1)
    tape = Tape()
    x = tape.input(rng.standard_normal((3, 3)), trainable=True)
    loss = tape.reduce_sum(tape.mul(x, x))
    assert check_gradients(tape, loss) < 1e-6


@pytest.mark.filterwarnings("ignore:invalid value")
def test_nan_forward_raises():
    tape = Tape()
    x = tape.input(np.array([[-1.0]]), trainable=True)
    loss = tape.reduce_sum(tape.log(x))  # log of negative -> nan
    with pytest.raises(NumericalError):
        check_gradients(tape, loss)


@pytest.mark.filterwarnings("ignore:divide by zero")
def test_non_finite_loss_raises_in_backward():
    tape = Tape()
    x = tape.input(np.array([[0.0]]), trainable=True)
    loss = tape.log(x)
    with pytest.raises(NumericalError):
        tape.backward(loss)


def _fd_check(build, seed, shapes, eps=1e-5):
    """Build a loss from fresh trainable inputs and gradient-check it."""
    rng = np.random.default_rng(seed)
    tape = Tape()
    leaves = [tape.input(rng.standard_normal(s) + 0.0, trainable=True) for s in shapes]
    loss = build(tape, *leaves)
    return check_gradients(tape, loss, eps=eps)


@pytest.mark.parametrize("seed", range(3))
def test_primitive_elementwise_ops(seed):
    def build(tape, x, y):
        a = tape.add(x, y)
        b = tape.sub(a, tape.mul(x, y))
        c = tape.tanh(tape.sigmoid(b))
        d = tape.softplus(tape.leaky_relu(c, 0.2))
        e = tape.add_const(tape.mul_const(d, 1.7), 0.3)
        return tape.reduce_sum(tape.exp(tape.scale(e, 0.1)))

    assert _fd_check(build, seed, [(4, 3), (4, 3)]) < 1e-4


@pytest.mark.parametrize("seed", range(3))
def test_primitive_matmul_variants(seed):
    def build(tape, a, b):
        p = tape.matmul(a, b)                                  # (4,5)
        q = tape.matmul(a, a, transpose_a=True)                # (3,3)
        r = tape.matmul(b, b, transpose_b=True)                # (3,3)
        s = tape.matmul(q, r, transpose_a=True, transpose_b=True)
        return tape.add(tape.reduce_sum(p), tape.reduce_sum(s))

    assert _fd_check(build, seed, [(4, 3), (3, 5)]) < 1e-4


@pytest.mark.parametrize("seed", range(3))
def test_primitive_row_ops(seed):
    def build(tape, x):
        n = tape.l2norm_rows(x)
        sm = tape.softmax_rows(x)
        lse = tape.logsumexp_rows(tape.mul(x, x))
        g = tape.gather_rows(n, np.array([0, 2, 2, 1]))
        return tape.add(
            tape.reduce_sum(tape.mul(sm, n)),
            tape.add(tape.reduce_sum(lse), tape.reduce_sum(g)),
        )

    assert _fd_check(build, seed, [(3, 4)]) < 1e-4


@pytest.mark.parametrize("seed", range(3))
def test_primitive_shape_ops(seed):
    def build(tape, x, y):
        c = tape.concat_cols(x, y, x)
        s = tape.slice_cols(c, 1, 4)
        r0 = tape.reduce_sum(s, axis=0)
        r1 = tape.reduce_sum(tape.pow_const(tape.exp(x), 1.5), axis=1)
        sq = tape.matmul(r1, r1, transpose_b=True)
        return tape.add(tape.reduce_sum(r0), tape.reduce_sum(tape.take_diag(sq)))

    assert _fd_check(build, seed, [(3, 2), (3, 3)]) < 1e-4


@pytest.mark.parametrize("seed", range(3))
def test_primitive_edge_matmul(seed):
    rows = np.array([0, 1, 2, 2, 3])
    cols = np.array([1, 0, 3, 1, 2])

    def build(tape, w, x):
        y = tape.edge_matmul(rows, cols, (4, 4), w, x)
        return tape.reduce_sum(tape.mul(y, y))

    assert _fd_check(build, seed, [(5, 1), (4, 3)]) < 1e-4


def test_edge_matmul_matches_dense():
    rng = np.random.default_rng(9)
    rows = np.array([0, 0, 1, 2])
    cols = np.array([1, 2, 0, 2])
    w = rng.standard_normal((4, 1))
    x = rng.standard_normal((3, 2))
    tape = Tape()
    wn = tape.input(w, trainable=True)
    xn = tape.input(x)
    y = tape.edge_matmul(rows, cols, (3, 3), wn, xn)
    M = np.zeros((3, 3))
    M[rows, cols] = w.ravel()
    np.testing.assert_allclose(y.value, M @ x, atol=1e-12)


def test_softmax_rows_sum_to_one():
    rng = np.random.default_rng(5)
    tape = Tape()
    x = tape.input(rng.standard_normal((6, 4)) * 30)  # large logits, stability
    y = tape.softmax_rows(x)
    np.testing.assert_allclose(y.value.sum(axis=1), np.ones(6), atol=1e-12)


def test_forward_reruns_after_leaf_mutation():
    tape = Tape()
    x = tape.input(np.array([[2.0]]), trainable=True)
    y = tape.scale(tape.mul(x, x), 3.0)
    assert y.value[0, 0] == 12.0
    x.value[0, 0] = 3.0
    tape.forward()
    assert y.value[0, 0] == 27.0


def test_gather_rows_accumulates_duplicate_indices():
    tape = Tape()
    x = tape.input(np.array([[1.0], [2.0]]), trainable=True)
    g = tape.gather_rows(x, np.array([0, 0, 1]))
    loss = tape.reduce_sum(g)
    tape.backward(loss)
    np.testing.assert_array_equal(x.grad, [[2.0], [1.0]])
