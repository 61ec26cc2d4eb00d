"""Tape primitives checked against central finite differences."""

import numpy as np
import pytest

from gncde import autodiff as ad
from gncde.errors import CapabilityError


def central_difference(f, x, h=1e-6):
    """Gradient of scalar f at x, one coordinate at a time."""
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = f(x)
        flat[i] = orig - h
        down = f(x)
        flat[i] = orig
        gflat[i] = (up - down) / (2 * h)
    return g


def tape_gradient(expr, x0):
    v = ad.Var(x0.copy())
    loss = expr(v)
    loss.backward()
    return v.grad


def check_op(expr, x0, h=1e-6, tol=1e-6):
    got = tape_gradient(expr, x0)
    want = central_difference(lambda x: float(ad.value_of(expr(ad.Var(x)))), x0, h)
    assert np.max(np.abs(got - want)) < tol * (1 + np.max(np.abs(want)))


def test_matmul_gradients():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((4, 3))
    b = rng.standard_normal((3, 5))
    check_op(lambda v: ad.sum_all(ad.matmul(v, b)), a)
    check_op(lambda v: ad.sum_all(ad.matmul(a, v)), b)


def test_matmul_both_sides_on_tape():
    rng = np.random.default_rng(1)
    a, b = rng.standard_normal((3, 3)), rng.standard_normal((3, 3))
    va, vb = ad.Var(a), ad.Var(b)
    loss = ad.sum_all(ad.square(ad.matmul(va, vb)))
    loss.backward()
    # d/dA sum((AB)^2) = 2(AB)B^T, d/dB = 2A^T(AB)
    prod = a @ b
    assert np.allclose(va.grad, 2 * prod @ b.T)
    assert np.allclose(vb.grad, 2 * a.T @ prod)


@pytest.mark.parametrize("op", [ad.relu, ad.sigmoid, ad.exp, ad.square, ad.absolute])
def test_elementwise_gradients(op):
    rng = np.random.default_rng(2)
    # Keep points away from the relu/abs kink at 0.
    x = rng.standard_normal((6, 4))
    x[np.abs(x) < 0.05] = 0.1
    check_op(lambda v: ad.sum_all(op(v)), x)


def test_log_gradient_positive_domain():
    rng = np.random.default_rng(3)
    x = rng.uniform(0.5, 2.0, size=(5, 5))
    check_op(lambda v: ad.sum_all(ad.log(v)), x)


def test_add_broadcast_bias():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((6, 3))
    bias = rng.standard_normal(3)
    v = ad.Var(bias)
    loss = ad.sum_all(ad.square(ad.add(x, v)))
    loss.backward()
    assert v.grad.shape == (3,)
    assert np.allclose(v.grad, (2 * (x + bias)).sum(axis=0))


def test_mul_broadcast_unbroadcasts():
    rng = np.random.default_rng(5)
    x = rng.standard_normal((4, 3))
    col = rng.standard_normal((4, 1))
    v = ad.Var(col)
    loss = ad.sum_all(ad.mul(v, x))
    loss.backward()
    assert v.grad.shape == (4, 1)
    assert np.allclose(v.grad, x.sum(axis=1, keepdims=True))


def test_concat_and_stack_route_gradients():
    rng = np.random.default_rng(6)
    a, b = rng.standard_normal((3, 2)), rng.standard_normal((3, 4))
    va, vb = ad.Var(a), ad.Var(b)
    out = ad.concat([va, vb], axis=1)
    weights = rng.standard_normal((3, 6))
    ad.sum_all(ad.mul(out, weights)).backward()
    assert np.allclose(va.grad, weights[:, :2])
    assert np.allclose(vb.grad, weights[:, 2:])

    vs = [ad.Var(rng.standard_normal((2, 2))) for _ in range(3)]
    stacked = ad.stack(vs)
    w3 = rng.standard_normal((3, 2, 2))
    ad.sum_all(ad.mul(stacked, w3)).backward()
    for i, v in enumerate(vs):
        assert np.allclose(v.grad, w3[i])


def test_take_rows_accumulates_repeats():
    v = ad.Var(np.arange(12, dtype=float).reshape(4, 3))
    out = ad.take_rows(v, [0, 2, 0])
    ad.sum_all(out).backward()
    assert np.allclose(v.grad, [[2, 2, 2], [0, 0, 0], [1, 1, 1], [0, 0, 0]])


def test_reshape_transpose_roundtrip():
    rng = np.random.default_rng(7)
    x = rng.standard_normal((3, 4))
    v = ad.Var(x)
    out = ad.transpose(ad.reshape(v, (4, 3)))
    w = rng.standard_normal((3, 4))
    ad.sum_all(ad.mul(out, w)).backward()
    assert np.allclose(v.grad, w.T.reshape(3, 4))


def test_log_softmax_rows_matches_fd():
    rng = np.random.default_rng(8)
    z = rng.standard_normal((5, 4))
    target = rng.standard_normal((5, 4))

    def expr(v):
        return ad.sum_all(ad.mul(ad.log_softmax_rows(v), target))

    check_op(expr, z, h=1e-6, tol=1e-5)


def test_log_softmax_rows_normalizes():
    z = np.array([[1.0, 2.0, 3.0], [100.0, 100.0, 100.0]])
    out = ad.value_of(ad.log_softmax_rows(ad.Var(z)))
    assert np.allclose(np.exp(out).sum(axis=1), 1.0)


def test_diamond_graph_accumulates_once_per_node():
    # y = x*x + x*x touches x through two paths; adjoint must sum, and the
    # backward pass must visit each node exactly once.
    v = ad.Var(np.array([3.0]))
    left = ad.square(v)
    right = ad.square(v)
    ad.sum_all(ad.add(left, right)).backward()
    assert np.allclose(v.grad, [12.0])


def test_deep_chain_does_not_recurse():
    v = ad.Var(np.array([1.0]))
    out = v
    for _ in range(5000):
        out = ad.scale(out, 1.0)
    ad.sum_all(out).backward()
    assert np.allclose(v.grad, [1.0])


def test_plain_arrays_bypass_tape():
    a = np.ones((2, 2))
    out = ad.matmul(a, a)
    assert isinstance(out, np.ndarray)
    assert isinstance(ad.relu(a), np.ndarray)
    assert isinstance(ad.concat([a, a], axis=0), np.ndarray)


def test_mixed_constant_var_keeps_constant_off_tape():
    const = np.ones((2, 2))
    v = ad.Var(np.eye(2))
    out = ad.matmul(const, v)
    assert out._parents == (v,)


def test_unsupported_ops_raise_capability_error():
    v = ad.Var(np.ones((2, 2)))
    with pytest.raises(CapabilityError) as err:
        _ = v / v
    assert "divide" in str(err.value)
    with pytest.raises(CapabilityError) as err:
        _ = v ** 3
    assert "power" in str(err.value)
    with pytest.raises(CapabilityError) as err:
        _ = 1.0 / v
    assert "divide" in str(err.value)
    with pytest.raises(CapabilityError):
        ad.Var(np.ones(3)).backward()  # non-scalar seed


def test_matmul_rejects_higher_rank():
    with pytest.raises(CapabilityError) as err:
        ad.matmul(ad.Var(np.ones((2, 2, 2))), np.ones((2, 2)))
    assert "matmul" in str(err.value)


def test_numpy_does_not_hijack_reflected_ops():
    v = ad.Var(np.ones((2, 2)))
    out = np.ones((2, 2)) + v
    assert isinstance(out, ad.Var)
    out = np.ones((2, 2)) @ v
    assert isinstance(out, ad.Var)
