import numpy as np
import pytest

from ctxnmt import tensor as T
from ctxnmt.tensor import Tensor

from fdcheck import check_grads, numerical_grad, max_rel_err


def test_matmul_matches_triple_loop():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(3, 4))
    b = rng.normal(size=(4, 5))
    out = T.matmul(Tensor(a), Tensor(b)).data
    ref = np.zeros((3, 5))
    for i in range(3):
        for j in range(5):
            for k in range(4):
                ref[i, j] += a[i, k] * b[k, j]
    np.testing.assert_allclose(out, ref, rtol=1e-12)


def test_matmul_shape_mismatch_raises():
    with pytest.raises(ValueError):
        T.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 2))))


def test_matmul_rejects_vectors():
    with pytest.raises(ValueError):
        T.matmul(Tensor(np.zeros(3)), Tensor(np.zeros((3, 2))))


def test_softmax_known_values():
    out = T.softmax(Tensor([0.0, np.log(2.0)])).data
    np.testing.assert_allclose(out, [1.0 / 3.0, 2.0 / 3.0], rtol=1e-12)


def test_softmax_shift_invariance_and_overflow_safety():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(4, 7))
    base = T.softmax(Tensor(x)).data
    shifted = T.softmax(Tensor(x + 1000.0)).data
    np.testing.assert_allclose(base, shifted, atol=1e-12)
    huge = T.softmax(Tensor(np.array([1e6, 1e6 + 1.0]))).data
    assert np.all(np.isfinite(huge))
    np.testing.assert_allclose(huge.sum(), 1.0, rtol=1e-12)


def test_softmax_rows_sum_to_one():
    rng = np.random.default_rng(2)
    out = T.softmax(Tensor(rng.normal(size=(5, 9)) * 10)).data
    np.testing.assert_allclose(out.sum(axis=-1), np.ones(5), rtol=1e-12)


def test_backward_square():
    x = Tensor(3.0, requires_grad=True)
    loss = x * x
    loss.backward()
    np.testing.assert_allclose(x.grad, 6.0, rtol=1e-12)


def test_backward_constant_input_gets_no_grad():
    x = Tensor(3.0, requires_grad=True)
    c = Tensor(5.0)
    loss = x * c
    loss.backward()
    assert c.grad is None
    np.testing.assert_allclose(x.grad, 5.0)


def test_backward_rejects_nonscalar():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ValueError):
        (x * 2.0).backward()


def test_backward_visits_shared_node_once():
    # y is used twice; its contribution must be accumulated, not recomputed.
    x = Tensor(2.0, requires_grad=True)
    y = x * 3.0
    loss = y * y
    loss.backward()
    np.testing.assert_allclose(x.grad, 2.0 * 3.0 * 6.0 * 3.0 / 3.0)  # d(9x^2)/dx = 18x = 36
    np.testing.assert_allclose(x.grad, 36.0)


def test_forward_deterministic():
    rng = np.random.default_rng(3)
    x = Tensor(rng.normal(size=(4, 6)))
    w = Tensor(rng.normal(size=(6, 6)))
    a = T.softmax(T.matmul(x, w)).data
    b = T.softmax(T.matmul(x, w)).data
    assert np.array_equal(a, b)


def test_no_grad_blocks_recording():
    x = Tensor(np.ones((2, 2)), requires_grad=True)
    with T.no_grad():
        y = x * 2.0
    assert not y.requires_grad and y._backward is None


def test_layer_norm_pre_affine_statistics():
    rng = np.random.default_rng(4)
    x = Tensor(rng.normal(size=(8, 16)) * 3.0 + 1.5)
    y = T.normalized(x, eps=1e-6)
    assert np.max(np.abs(y.mean(axis=-1))) <= 1e-9
    assert np.max(np.abs(y.var(axis=-1) - 1.0)) <= 1e-6


def test_embedding_and_gather_roundtrip():
    table = Tensor(np.arange(12.0).reshape(4, 3))
    ids = np.array([[0, 3], [2, 2]])
    out = T.embedding(table, ids)
    assert out.shape == (2, 2, 3)
    np.testing.assert_allclose(out.data[0, 1], [9.0, 10.0, 11.0])
    with pytest.raises(IndexError):
        T.embedding(table, np.array([4]))
    probs = Tensor(np.log(np.arange(1.0, 7.0)).reshape(2, 3))
    picked = T.gather(probs, np.array([2, 0]))
    np.testing.assert_allclose(picked.data, [np.log(3.0), np.log(4.0)])


def test_concat_backward_splits():
    a = Tensor(np.ones((2, 2)), requires_grad=True)
    b = Tensor(np.ones((2, 3)), requires_grad=True)
    out = T.concat([a, b], axis=1)
    (out * np.arange(10.0).reshape(2, 5)).sum().backward()
    np.testing.assert_allclose(a.grad, [[0, 1], [5, 6]])
    np.testing.assert_allclose(b.grad, [[2, 3, 4], [7, 8, 9]])


# Gradient checks for every differentiable building block, against the
# independent finite-difference oracle.

def _rand(rng, *shape):
    return Tensor(rng.normal(size=shape), requires_grad=True)


@pytest.mark.parametrize("seed", range(3))
def test_grad_elementwise_ops(seed):
    rng = np.random.default_rng(seed)
    a, b = _rand(rng, 3, 4), _rand(rng, 3, 4)
    check_grads(lambda: (T.mul(T.add(a, b), a)).sum(), {"a": a, "b": b})
    c = _rand(rng, 3, 4)
    check_grads(lambda: T.div(a, T.add(c * c, 1.0)).sum(), {"a": a, "c": c})
    d = _rand(rng, 2, 5)
    check_grads(lambda: T.relu(d).sum(), {"d": d})
    check_grads(lambda: T.power(T.add(d * d, 0.5), 1.7).sum(), {"d": d})


@pytest.mark.parametrize("seed", range(3))
def test_grad_matmul_batched_and_broadcast_bias(seed):
    rng = np.random.default_rng(10 + seed)
    x = _rand(rng, 2, 3, 4)
    w = _rand(rng, 4, 5)
    bias = _rand(rng, 5)
    weight = _rand(rng, 2, 3, 5)

    def f():
        return (T.add(T.matmul(x, w), bias) * weight).sum()

    check_grads(f, {"x": x, "w": w, "bias": bias})


@pytest.mark.parametrize("seed", range(3))
def test_grad_softmax_logsoftmax(seed):
    rng = np.random.default_rng(20 + seed)
    x = _rand(rng, 3, 6)
    weight = Tensor(rng.normal(size=(3, 6)))
    check_grads(lambda: (T.softmax(x) * weight).sum(), {"x": x})
    check_grads(lambda: (T.log_softmax(x) * weight).sum(), {"x": x})


@pytest.mark.parametrize("seed", range(3))
def test_grad_layer_norm(seed):
    rng = np.random.default_rng(30 + seed)
    x = _rand(rng, 4, 8)
    gamma = Tensor(rng.normal(size=8) + 1.0, requires_grad=True)
    beta = _rand(rng, 8)
    weight = Tensor(rng.normal(size=(4, 8)))
    check_grads(
        lambda: (T.layer_norm(x, gamma, beta, eps=1e-6) * weight).sum(),
        {"x": x, "gamma": gamma, "beta": beta},
    )


@pytest.mark.parametrize("seed", range(3))
def test_grad_embedding_gather_concat_reshape(seed):
    rng = np.random.default_rng(40 + seed)
    table = _rand(rng, 6, 4)
    ids = rng.integers(0, 6, size=(2, 3))
    pick = rng.integers(0, 4, size=(2, 3))
    other = _rand(rng, 2, 3, 4)

    def f():
        e = T.embedding(table, ids)
        joined = T.concat([e, other], axis=-1)
        back = T.reshape(T.swapaxes(joined, 0, 1), (2, 3, 8))
        return T.gather(T.log_softmax(back), np.tile(pick, (1, 1))[:, :3] * 0 + pick).sum()

    check_grads(f, {"table": table, "other": other})


def test_grad_mean_and_sum_axes():
    rng = np.random.default_rng(50)
    x = _rand(rng, 3, 4, 5)
    check_grads(lambda: x.mean(axis=1).sum(), {"x": x})
    check_grads(lambda: (x.sum(axis=2, keepdims=True) * 0.3).sum(), {"x": x})


def test_numerical_grad_oracle_self_check():
    # The oracle itself on a function with a known closed-form derivative.
    x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    fd = numerical_grad(lambda: (x * x).sum(), x)
    assert max_rel_err(fd, np.array([2.0, 4.0])) < 1e-8
