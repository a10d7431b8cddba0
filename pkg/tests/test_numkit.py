# =============================================================================
# tests/test_numkit.py
# =============================================================================

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from src.core.numkit import (
    Adam, ContractError, DegenerateInputError, DimensionError, Module, NonFiniteError,
    Parameter, bce, check_gradients, concat, conv1d, dropout, elementwise, exp, getitem,
    inject_adjoint_fault, l1_normalize, layer_norm, log, log_softmax, matmul, maxpool1d,
    mul, reduce_max, reduce_mean, reduce_sum, reductions, relu, reshape, same_padding,
    scale, sigmoid, softmax, square, stack, tanh, transpose,
)
from src.utils.config import ConfigError


def compare(analytic, numeric, abs_tol=1e-8, rel_tol=1e-6):
    assert np.allclose(analytic, numeric, atol=abs_tol, rtol=rel_tol), \
        f"analitico {analytic} vs numerico {numeric}"


def _weighted(x, weights):
    return reduce_sum(mul(x, weights))


def _op_case(name, r):
    a = Parameter(r.standard_normal((2, 3)))
    if name == 'matmul':
        b = Parameter(r.standard_normal((3, 2)))
        w = r.standard_normal((2, 2))
        return [a, b], lambda: _weighted(matmul(a, b), w)
    if name == 'mul':
        b = Parameter(r.standard_normal((2, 3)))
        w = r.standard_normal((2, 3))
        return [a, b], lambda: _weighted(mul(a, b), w)
    if name == 'add_broadcast':
        b = Parameter(r.standard_normal(3))
        w = r.standard_normal((2, 3))
        return [a, b], lambda: _weighted(a + b, w)
    if name == 'relu':
        w = r.standard_normal((2, 3))
        return [a], lambda: _weighted(relu(a), w)
    if name in ('sigmoid', 'tanh'):
        fn = sigmoid if name == 'sigmoid' else tanh
        w = r.standard_normal((2, 3))
        return [a], lambda: _weighted(fn(a), w)
    if name == 'exp_log':
        w = r.standard_normal((2, 3))
        return [a], lambda: _weighted(log(exp(scale(a, 0.5)) + square(a)), w)
    if name in ('softmax', 'log_softmax'):
        fn = softmax if name == 'softmax' else log_softmax
        w = r.standard_normal((2, 3))
        return [a], lambda: _weighted(fn(a, axis=-1), w)
    if name == 'l1_normalize':
        w = r.standard_normal((2, 3))
        return [a], lambda: _weighted(l1_normalize(exp(a), axis=-1), w)
    if name == 'layer_norm':
        x = Parameter(r.standard_normal((2, 4)))
        gain = Parameter(1.0 + 0.1 * r.standard_normal(4))
        shift = Parameter(r.standard_normal(4))
        w = r.standard_normal((2, 4))
        return [x, gain, shift], lambda: _weighted(layer_norm(x, gain, shift), w)
    if name == 'conv1d':
        x = Parameter(r.standard_normal((2, 3, 7)))
        kernel = Parameter(r.standard_normal((4, 3, 4)))
        bias = Parameter(r.standard_normal(4))
        w = r.standard_normal((2, 4, 7))
        return [x, kernel, bias], lambda: _weighted(conv1d(x, kernel, bias), w)
    if name == 'maxpool1d':
        x = Parameter(r.standard_normal((2, 3, 7)))
        w = r.standard_normal((2, 3, 3))
        return [x], lambda: _weighted(maxpool1d(x), w)
    if name == 'reduce_max_mean':
        w = r.standard_normal(2)
        return [a], lambda: _weighted(reduce_max(a, axis=1), w) + reduce_mean(square(a))
    if name == 'shapes':
        b = Parameter(r.standard_normal((2, 3)))
        w = r.standard_normal((2, 5))
        w_stack = r.standard_normal((2, 2, 3))
        return [a, b], lambda: (
            _weighted(reshape(transpose(concat([getitem(a, (slice(None), slice(1, None))), b], axis=1)),
                              (2, 5)), w)
            + _weighted(stack([a, b], axis=1), w_stack))
    if name == 'bce':
        target = r.uniform(0.0, 1.0, (2, 3))
        return [a], lambda: reduce_mean(bce(sigmoid(a), target))
    raise KeyError(name)


OP_CASES = ['matmul', 'mul', 'add_broadcast', 'relu', 'sigmoid', 'tanh', 'exp_log',
            'softmax', 'log_softmax', 'l1_normalize', 'layer_norm', 'conv1d', 'maxpool1d',
            'reduce_max_mean', 'shapes', 'bce']


@pytest.mark.parametrize('name', OP_CASES)
def test_op_gradients_match_central_differences(name):
    params, loss_fn = _op_case(name, np.random.default_rng(11))
    report = check_gradients(loss_fn, params)
    assert report.n_checked == sum(p.size for p in params)
    assert report.passed(1e-5), f"{name}: {report.max_rel_error:.2e} su {report.worst_param}"


def test_matmul_gradcheck_3x4_by_4x2():
    r = np.random.default_rng(0)
    a = Parameter(r.standard_normal((3, 4)))
    b = Parameter(r.standard_normal((4, 2)))
    w = r.standard_normal((3, 2))
    report = check_gradients(lambda: _weighted(matmul(a, b), w), [a, b])
    assert report.max_rel_error < 1e-6


def test_manual_difference_for_mul():
    r = np.random.default_rng(3)
    a = Parameter(r.standard_normal((2, 3)))
    b = r.standard_normal((2, 3))
    reduce_sum(mul(a, b)).backward()
    compare(a.grad, b)


def test_matmul_shape_mismatch():
    with pytest.raises(DimensionError):
        matmul(np.ones((2, 3)), np.ones((4, 5)))


def test_add_broadcast_shape_mismatch():
    with pytest.raises(DimensionError):
        elementwise('add', np.ones((2, 3)), np.ones((2, 4)))


def test_elementwise_unknown_op():
    with pytest.raises(ContractError):
        elementwise('pow', np.ones(2), np.ones(2))


def test_broadcast_gradient_is_summed():
    a = Parameter(np.ones((2, 3)))
    b = Parameter(np.ones(3))
    reduce_sum(a + b).backward()
    assert_array_equal(b.grad, [2.0, 2.0, 2.0])
    assert_array_equal(a.grad, np.ones((2, 3)))


def test_parameter_used_twice_accumulates():
    p = Parameter(np.array([1.0, -2.0]))
    reduce_sum(p * p).backward()
    assert_allclose(p.grad, [2.0, -4.0])


def test_backward_requires_scalar():
    p = Parameter(np.ones(3))
    with pytest.raises(ContractError):
        (p * 2.0).backward()
    with pytest.raises(ContractError):
        (p * 2.0).item()


def test_sigmoid_is_stable_for_large_arguments():
    out = sigmoid(np.array([-1000.0, 0.0, 1000.0])).data
    assert np.all(np.isfinite(out))
    assert_allclose(out, [0.0, 0.5, 1.0])


def test_log_is_clamped():
    assert np.isfinite(log(np.array([0.0])).data).all()


def test_non_finite_output_raises():
    with np.errstate(over='ignore'):
        with pytest.raises(NonFiniteError):
            exp(np.array([1000.0]))


def test_softmax_rows_sum_to_one():
    out = softmax(np.array([[1.0, 2.0, 3.0], [0.0, 0.0, 0.0]]), axis=-1).data
    assert_allclose(out.sum(axis=-1), [1.0, 1.0])
    assert_allclose(out[1], np.full(3, 1.0 / 3.0))


def test_l1_normalize_zero_slice():
    with pytest.raises(DegenerateInputError):
        l1_normalize(np.zeros((2, 3)))
    out = l1_normalize(np.array([[0.0, 0.0], [1.0, 3.0]]), allow_zero=True).data
    assert_allclose(out, [[0.0, 0.0], [0.25, 0.75]])


def test_reductions_max_without_axis_flattens():
    out = reductions('max', np.array([[1.0, 5.0], [7.0, 2.0]]))
    assert out.item() == 7.0
    with pytest.raises(ContractError):
        reductions('median', np.ones(3))


def test_reduce_axis_out_of_range():
    with pytest.raises(DimensionError):
        reduce_sum(np.ones((2, 3)), axis=2)


def test_same_padding_puts_extra_on_the_right():
    assert same_padding(3) == (1, 1)
    assert same_padding(4) == (1, 2)
    assert same_padding(5) == (2, 2)


def test_conv1d_same_known_values():
    x = np.array([[[1.0, 2.0, 3.0, 4.0]]])
    out = conv1d(x, np.ones((1, 1, 3)), np.zeros(1)).data
    assert_allclose(out, [[[3.0, 6.0, 9.0, 7.0]]])
    out_even = conv1d(x, np.ones((1, 1, 2)), np.zeros(1)).data
    assert_allclose(out_even, [[[3.0, 5.0, 7.0, 4.0]]])


def test_conv1d_unbatched_input():
    out = conv1d(np.arange(5.0).reshape(1, 5), np.ones((2, 1, 3)), np.array([0.0, 1.0]))
    assert out.shape == (2, 5)
    assert_allclose(out.data[1] - out.data[0], np.ones(5))


def test_conv1d_rejects_bad_shapes():
    with pytest.raises(DimensionError):
        conv1d(np.ones((1, 2, 5)), np.ones((1, 3, 3)), np.zeros(1))
    with pytest.raises(DimensionError):
        conv1d(np.ones((1, 1, 2)), np.ones((1, 1, 3)), np.zeros(1), padding='valid')


def test_maxpool_floor_length_and_gradient():
    x = Parameter(np.array([[[1.0, 3.0, 2.0, 5.0, 4.0]]]))
    out = maxpool1d(x)
    assert_allclose(out.data, [[[3.0, 5.0]]])
    reduce_sum(out).backward()
    assert_allclose(x.grad, [[[0.0, 1.0, 0.0, 1.0, 0.0]]])
    with pytest.raises(DimensionError):
        maxpool1d(np.ones((1, 1, 1)))


def test_dropout_eval_is_identity():
    x = np.arange(6.0).reshape(2, 3)
    assert_array_equal(dropout(x, 0.5, training=False, rng=None).data, x)


def test_dropout_inverted_scaling():
    out = dropout(np.ones(1000), 0.5, training=True, rng=np.random.default_rng(0)).data
    assert set(np.unique(out)) <= {0.0, 2.0}
    assert 0 < np.count_nonzero(out) < 1000


def test_dropout_contracts():
    with pytest.raises(ConfigError):
        dropout(np.ones(3), 1.0, training=True, rng=np.random.default_rng(0))
    with pytest.raises(ContractError):
        dropout(np.ones(3), 0.2, training=True, rng=None)


def test_module_deduplicates_shared_parameters():
    class Pair(Module):
        def __init__(self):
            self.a = Parameter(np.ones(2))
            self.b = self.a
            self.items = [Parameter(np.zeros(3))]

    pair = Pair()
    assert [name for name, _ in pair.named_parameters()] == ['a', 'items.0']
    assert pair.num_parameters() == 5


def test_adam_first_step_moves_by_lr():
    p = Parameter(np.array([0.0]))
    opt = Adam([p], lr=0.1)
    reduce_sum(square(p - 3.0)).backward()
    opt.step()
    assert_allclose(p.data, [0.1], rtol=1e-6)


def test_adam_minimizes_quadratic():
    p = Parameter(np.array([0.0, -1.0]))
    opt = Adam([p], lr=0.1)
    for _ in range(300):
        opt.zero_grad()
        reduce_sum(square(p - 3.0)).backward()
        opt.step()
    assert_allclose(p.data, [3.0, 3.0], atol=0.1)


def test_adam_state_round_trip():
    p1 = Parameter(np.array([0.5, -0.5]))
    opt1 = Adam([p1], lr=0.05)
    for _ in range(3):
        opt1.zero_grad()
        reduce_sum(square(p1 - 1.0)).backward()
        opt1.step()
    p2 = Parameter(p1.data)
    opt2 = Adam([p2], lr=1.0)
    opt2.load_state_dict(opt1.state_dict())
    for p, opt in ((p1, opt1), (p2, opt2)):
        opt.zero_grad()
        reduce_sum(square(p - 1.0)).backward()
        opt.step()
    assert_array_equal(p1.data, p2.data)


def test_adam_rejects_non_finite_gradient():
    p = Parameter(np.array([1.0]))
    p.grad = np.array([np.nan])
    with pytest.raises(NonFiniteError):
        Adam([p]).step()


def test_gradcheck_detects_injected_fault():
    params, loss_fn = _op_case('sigmoid', np.random.default_rng(5))
    with inject_adjoint_fault('Sigmoid', 1.5):
        report = check_gradients(loss_fn, params)
    assert not report.passed(1e-4)
    assert report.max_rel_error > 0.2


def test_gradcheck_skips_relu_kink():
    p = Parameter(np.array([0.0, 1.0]))

    def loss_fn():
        return reduce_sum(relu(p))

    report = check_gradients(loss_fn, [p])
    assert report.n_kinks == 1
    assert report.passed(1e-5)
    strict = check_gradients(loss_fn, [p], skip_kinks=False)
    assert not strict.passed(1e-5)


def test_gradcheck_samples_elements_deterministically():
    r = np.random.default_rng(2)
    p = Parameter(r.standard_normal((10, 10)))
    w = r.standard_normal((10, 10))
    report = check_gradients(lambda: _weighted(tanh(p), w), [p], max_elements=7, seed=4)
    assert report.n_checked == 7
    assert report.passed(1e-5)
    assert_array_equal(p.grad, np.zeros((10, 10)))


def test_gradcheck_requires_scalar_loss():
    p = Parameter(np.ones(2))
    with pytest.raises(ContractError):
        check_gradients(lambda: p * 1.0, [p])


def _conv1d_loop(x, kernel, bias):
    """Riferimento a cicli: x (c_in, L), kernel (c_out, c_in, k), padding same"""
    c_out, c_in, k = kernel.shape
    left = (k - 1) // 2
    L = x.shape[1]
    xp = np.zeros((c_in, L + k - 1))
    xp[:, left:left + L] = x
    out = np.zeros((c_out, L))
    for o in range(c_out):
        for t in range(L):
            total = bias[o]
            for c in range(c_in):
                for j in range(k):
                    total += xp[c, t + j] * kernel[o, c, j]
            out[o, t] = total
    return out


def _maxpool_loop(x):
    rows, L = x.shape
    out = np.zeros((rows, L // 2))
    for r in range(rows):
        for i in range(L // 2):
            out[r, i] = max(x[r, 2 * i], x[r, 2 * i + 1])
    return out


def test_conv1d_matches_loop_reference():
    r = np.random.default_rng(20)
    for _ in range(100):
        k = int(r.integers(1, 6))
        L = int(r.integers(k, 10))
        c_in, c_out = int(r.integers(1, 4)), int(r.integers(1, 4))
        x = r.standard_normal((c_in, L))
        kernel = r.standard_normal((c_out, c_in, k))
        bias = r.standard_normal(c_out)
        out = conv1d(x[None], kernel, bias).data[0]
        assert np.max(np.abs(out - _conv1d_loop(x, kernel, bias))) < 1e-10


def test_maxpool1d_matches_loop_reference():
    r = np.random.default_rng(21)
    for _ in range(100):
        x = r.standard_normal((int(r.integers(1, 4)), int(r.integers(2, 10))))
        assert np.max(np.abs(maxpool1d(x).data - _maxpool_loop(x))) < 1e-10


def test_maxpool1d_ties_route_to_first_index():
    x = Parameter(np.ones((2, 5)))
    out = maxpool1d(x)
    assert_array_equal(out.data, np.ones((2, 2)))
    reduce_sum(out).backward()
    assert_array_equal(x.grad, [[1, 0, 1, 0, 0], [1, 0, 1, 0, 0]])
