import math

import numpy as np
import pytest

from blocksearch import tensor as T
from blocksearch.errors import ContractError, ShapeError
from blocksearch.tensor import Tensor, grad_check


def test_matmul_identity():
    eye = Tensor(np.eye(2))
    a = Tensor([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(T.matmul(eye, a).data, a.data)


def test_matmul_hand_product():
    a = Tensor([[1.0, 2.0]])
    b = Tensor([[3.0], [4.0]])
    assert T.matmul(a, b).data.tolist() == [[11.0]]


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(ShapeError) as e:
        T.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 2))))
    assert "(2, 3)" in str(e.value) and "(4, 2)" in str(e.value)


def test_matmul_grad_of_sum_is_ones_times_bt():
    rng = np.random.default_rng(0)
    a = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    b = Tensor(rng.normal(size=(4, 5)))
    out = T.tsum(T.matmul(a, b))
    out.backward()
    expected = np.ones((3, 5)) @ b.data.T
    assert np.allclose(a.grad, expected, rtol=1e-12)
    err = grad_check(lambda t: T.tsum(T.matmul(t, b)), a)
    assert err < 1e-6


def test_layer_norm_constant_row_is_zero():
    x = Tensor([[1.0, 1.0, 1.0, 1.0]])
    y = T.layer_norm(x, Tensor(np.ones(4)), Tensor(np.zeros(4)))
    assert np.allclose(y.data, 0.0)


def test_layer_norm_already_normalized():
    x = Tensor([[1.0, -1.0]])
    y = T.layer_norm(x, Tensor(np.ones(2)), Tensor(np.zeros(2)), eps=1e-12)
    assert np.allclose(y.data, [[1.0, -1.0]], atol=1e-6)


def test_layer_norm_gradient_matches_finite_differences():
    rng = np.random.default_rng(7)
    g = Tensor(rng.normal(size=8))
    b = Tensor(rng.normal(size=8))
    w = Tensor(rng.normal(size=(3, 8)))
    x = Tensor(rng.normal(size=(3, 8)), requires_grad=True)
    err = grad_check(lambda t: T.tsum(T.mul(T.layer_norm(t, g, b), w)), x)
    assert err < 1e-5


def test_layer_norm_rejects_empty_dim():
    with pytest.raises(ShapeError):
        T.layer_norm(Tensor(np.zeros((2, 0))), Tensor(np.zeros(0)), Tensor(np.zeros(0)))


def test_softmax_uniform():
    y = T.softmax(Tensor([0.0, 0.0, 0.0]))
    assert np.allclose(y.data, 1.0 / 3.0, atol=1e-15)


def test_softmax_no_overflow():
    y = T.softmax(Tensor([1000.0, 0.0]))
    assert np.all(np.isfinite(y.data))
    assert y.data[0] == pytest.approx(1.0)
    assert y.data[1] == pytest.approx(0.0, abs=1e-300)


def test_softmax_hand_values():
    y = T.softmax(Tensor([math.log(1), math.log(2), math.log(3)]))
    assert np.allclose(y.data, [1 / 6, 2 / 6, 3 / 6], atol=1e-12)


def test_softmax_rows_sum_to_one():
    rng = np.random.default_rng(3)
    y = T.softmax(Tensor(rng.normal(size=(17, 9)) * 30.0), axis=-1)
    assert np.abs(y.data.sum(axis=-1) - 1.0).max() < 1e-12


def test_cross_entropy_uniform_is_log_v():
    logits = Tensor(np.zeros((6, 4)))
    loss = T.cross_entropy(logits, np.array([0, 1, 2, 3, 1, 2]))
    assert abs(loss.item() - math.log(4)) < 1e-12


def test_cross_entropy_confident_is_near_zero():
    logits = np.full((3, 5), -1000.0)
    logits[np.arange(3), [1, 2, 4]] = 1000.0
    loss = T.cross_entropy(Tensor(logits), np.array([1, 2, 4]))
    assert loss.item() == pytest.approx(0.0, abs=1e-12)


def test_cross_entropy_matches_double_loop_oracle():
    rng = np.random.default_rng(11)
    logits = rng.normal(size=(5, 7))
    targets = rng.integers(0, 7, size=5)
    total = 0.0
    for i in range(5):
        row = logits[i]
        denom = sum(math.exp(v) for v in row)
        total += -math.log(math.exp(row[targets[i]]) / denom)
    loss = T.cross_entropy(Tensor(logits), targets)
    assert loss.item() == pytest.approx(total / 5, rel=1e-12)


def test_cross_entropy_out_of_range_reports_position():
    logits = Tensor(np.zeros((3, 4)))
    with pytest.raises(IndexError) as e:
        T.cross_entropy(logits, np.array([0, 7, 1]))
    assert "position 1" in str(e.value)


def test_embedding_lookup_and_scatter_backward():
    table = Tensor(np.arange(12.0).reshape(4, 3), requires_grad=True)
    ids = np.array([1, 1, 3])
    out = T.tsum(T.embedding_lookup(table, ids))
    out.backward()
    expected = np.zeros((4, 3))
    expected[1] = 2.0
    expected[3] = 1.0
    assert np.array_equal(table.grad, expected)


def test_dropout_seeded_and_train_only():
    x = Tensor(np.ones((100, 10)), requires_grad=True)
    out_eval = T.dropout(x, 0.5, np.random.default_rng(0), train=False)
    assert out_eval is x
    a = T.dropout(x, 0.5, np.random.default_rng(42), train=True)
    b = T.dropout(x, 0.5, np.random.default_rng(42), train=True)
    assert np.array_equal(a.data, b.data)
    kept = a.data != 0
    assert np.allclose(a.data[kept], 2.0)  # inverted scaling


def test_concat_time_axis_and_grad():
    a = Tensor(np.ones((2, 3)), requires_grad=True)
    b = Tensor(np.zeros((4, 3)), requires_grad=True)
    out = T.concat([a, b], axis=0)
    assert out.shape == (6, 3)
    T.tsum(T.mul(out, Tensor(np.arange(18.0).reshape(6, 3)))).backward()
    assert a.grad.shape == (2, 3) and b.grad.shape == (4, 3)
    assert np.array_equal(b.grad, np.arange(18.0).reshape(6, 3)[2:])


def test_transpose_reshape_roundtrip_grad():
    rng = np.random.default_rng(2)
    x = Tensor(rng.normal(size=(2, 3, 4)), requires_grad=True)
    w = Tensor(rng.normal(size=(3, 8)))
    err = grad_check(lambda t: T.tsum(T.mul(T.reshape(T.transpose(t, (1, 0, 2)), (3, 8)), w)), x)
    assert err < 1e-6


def test_backward_requires_scalar_root():
    x = Tensor(np.ones((2, 2)), requires_grad=True)
    with pytest.raises(ContractError):
        T.add(x, x).backward()


def test_backward_deterministic_bit_for_bit():
    def run():
        rng = np.random.default_rng(5)
        x = Tensor(rng.normal(size=(6, 6)), requires_grad=True)
        w = Tensor(rng.normal(size=(6, 6)), requires_grad=True)
        loss = T.cross_entropy(T.matmul(T.relu(T.matmul(x, w)), w), np.arange(6) % 6)
        loss.backward()
        return x.grad.copy(), w.grad.copy()

    g1, g2 = run(), run()
    assert np.array_equal(g1[0], g2[0]) and np.array_equal(g1[1], g2[1])


def test_multi_use_accumulates_once_per_path():
    x = Tensor(np.array([[2.0]]), requires_grad=True)
    y = T.add(T.mul(x, x), x)  # x^2 + x, d/dx = 2x + 1 = 5
    T.tsum(y).backward()
    assert x.grad[0, 0] == pytest.approx(5.0)


def test_grad_check_detects_wrong_backward():
    # fixture op with an intentionally wrong gradient
    def broken_double(t):
        data = t.data * 2.0
        out = Tensor(data)
        out.requires_grad = True
        out._parents = (t,)
        out._backward = lambda g: t._accumulate(g * 3.0)  # wrong: should be 2
        return out

    x = Tensor(np.ones(4), requires_grad=True)
    err = grad_check(lambda t: T.tsum(broken_double(t)), x)
    assert err > 1e-2


def test_grad_check_contract_errors():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ContractError):
        grad_check(lambda t: t, x)  # non-scalar
    with pytest.raises(ContractError):
        grad_check(lambda t: T.tsum(t), x, eps=1e-1)


def test_debug_mode_flags_nonfinite():
    T.set_debug_checks(True)
    try:
        with np.errstate(over="ignore"), pytest.raises(FloatingPointError):
            T.scale(Tensor([1e308]), 1e308)
    finally:
        T.set_debug_checks(False)


def test_float32_mode_available():
    T.set_default_dtype(np.float32)
    try:
        x = Tensor(np.ones((2, 2)))
        assert x.dtype == np.float32
        y = T.softmax(x, axis=-1)
        assert y.dtype == np.float32
    finally:
        T.set_default_dtype(np.float64)
