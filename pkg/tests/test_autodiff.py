"""Forward values, backward rules and error paths of the tensor core.

Forward oracles here are either hand-computed or naive loop
implementations; gradient correctness against finite differences lives in
test_gradcheck.py.
"""

import numpy as np
import pytest

import glam.autodiff as ad
from glam.autodiff import BNState, Tensor, backward
from glam.errors import ConfigError, ShapeError, StateError, ValidationError


# ---------------------------------------------------------------------------
# tensor basics


def test_tensor_coerces_integers_to_float64():
    t = Tensor([[1, 2], [3, 4]])
    assert t.dtype == np.float64
    assert t.shape == (2, 2)


def test_tensor_rejects_complex():
    with pytest.raises(ConfigError):
        Tensor(np.array([1 + 2j]))


def test_tensor_keeps_float32():
    t = Tensor(np.zeros((3,), dtype=np.float32))
    assert t.dtype == np.float32


# ---------------------------------------------------------------------------
# add / mul


def test_add_direct():
    out = ad.add(Tensor([1.0, 2.0]), Tensor([3.0, 4.0]))
    np.testing.assert_array_equal(out.data, [4.0, 6.0])


def test_mul_by_ones_is_identity():
    rng = np.random.default_rng(0)
    x = Tensor(rng.standard_normal((4, 5)))
    out = ad.mul(x, Tensor(np.ones((4, 5))))
    np.testing.assert_array_equal(out.data, x.data)


def test_mul_backward_grad_is_other_operand():
    rng = np.random.default_rng(1)
    a = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
    b = Tensor(rng.standard_normal((3, 4)))
    backward(ad.tensor_sum(ad.mul(a, b)))
    np.testing.assert_array_equal(a.grad, b.data)


def test_elementwise_shape_mismatch_names_shapes():
    with pytest.raises(ShapeError) as err:
        ad.add(Tensor(np.zeros((2, 3))), Tensor(np.zeros((3, 2))))
    assert "(2, 3)" in str(err.value) and "(3, 2)" in str(err.value)


def test_scalar_broadcast_and_operators():
    x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
    y = (x * 2.0) + 1.0
    np.testing.assert_array_equal(y.data, [3.0, 5.0, 7.0])
    backward(y.sum())
    np.testing.assert_array_equal(x.grad, [2.0, 2.0, 2.0])


def test_scalar_operand_accumulates_grad():
    # scalars are stored with rank 1, and the broadcast grad sums back to it
    x = Tensor(np.ones((2, 3)))
    s = Tensor(np.asarray(0.5), requires_grad=True)
    backward(ad.tensor_sum(ad.mul(x, s)))
    assert s.grad.shape == (1,)
    assert s.grad[0] == 6.0


# ---------------------------------------------------------------------------
# matmul / linear


def test_matmul_identity():
    rng = np.random.default_rng(2)
    a = Tensor(rng.standard_normal((3, 3)))
    out = ad.matmul(a, Tensor(np.eye(3)))
    np.testing.assert_array_equal(out.data, a.data)


def test_matmul_direct():
    out = ad.matmul(Tensor([[1.0, 2.0], [3.0, 4.0]]), Tensor([[1.0], [1.0]]))
    np.testing.assert_array_equal(out.data, [[3.0], [7.0]])


def test_matmul_inner_dim_mismatch():
    with pytest.raises(ShapeError):
        ad.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))


def test_matmul_rejects_non_2d():
    with pytest.raises(ShapeError):
        ad.matmul(Tensor(np.zeros((2, 3, 4))), Tensor(np.zeros((4, 2))))


def test_linear_zero_weights_yields_bias_rows():
    x = Tensor(np.random.default_rng(3).standard_normal((4, 3)))
    b = np.array([1.0, -2.0])
    out = ad.linear(x, Tensor(np.zeros((3, 2))), Tensor(b))
    np.testing.assert_array_equal(out.data, np.tile(b, (4, 1)))


def test_linear_identity_weights():
    x = Tensor(np.random.default_rng(4).standard_normal((5, 3)))
    out = ad.linear(x, Tensor(np.eye(3)), Tensor(np.zeros(3)))
    np.testing.assert_array_equal(out.data, x.data)


def test_linear_shape_errors():
    x = Tensor(np.zeros((2, 3)))
    with pytest.raises(ShapeError):
        ad.linear(x, Tensor(np.zeros((4, 2))), Tensor(np.zeros(2)))
    with pytest.raises(ShapeError):
        ad.linear(x, Tensor(np.zeros((3, 2))), Tensor(np.zeros(3)))


# ---------------------------------------------------------------------------
# conv2d_same


def naive_conv2d_same(x, kernel, bias):
    n, c_in, h, w = x.shape
    c_out, _, kh, kw = kernel.shape
    ph, pw = (kh - 1) // 2, (kw - 1) // 2
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    out = np.zeros((n, c_out, h, w), dtype=x.dtype)
    for b in range(n):
        for co in range(c_out):
            for i in range(h):
                for j in range(w):
                    acc = bias[co]
                    for ci in range(c_in):
                        for u in range(kh):
                            for v in range(kw):
                                acc += x.dtype.type(xp[b, ci, i + u, j + v] * kernel[co, ci, u, v])
                    out[b, co, i, j] = acc
    return out


def test_conv_1x1_kernel_scales():
    rng = np.random.default_rng(5)
    x = Tensor(rng.standard_normal((2, 3, 4, 5)))
    k = np.zeros((3, 3, 1, 1))
    for c in range(3):
        k[c, c, 0, 0] = 2.0
    out = ad.conv2d_same(x, Tensor(k), Tensor(np.zeros(3)))
    np.testing.assert_array_equal(out.data, 2.0 * x.data)


def test_conv_all_ones_hand_count():
    # 3x3 ones kernel over a 3x3 ones image: zero padding leaves 4 terms in
    # the corners and all 9 in the center
    x = Tensor(np.ones((1, 1, 3, 3)))
    out = ad.conv2d_same(x, Tensor(np.ones((1, 1, 3, 3))), Tensor(np.zeros(1)))
    expected = np.array([[4.0, 6.0, 4.0], [6.0, 9.0, 6.0], [4.0, 6.0, 4.0]])
    np.testing.assert_array_equal(out.data[0, 0], expected)


def test_conv_matches_naive_oracle_exactly():
    # integer-valued inputs keep every product exact in float64
    rng = np.random.default_rng(6)
    for kh, kw in ((1, 3), (3, 1), (3, 3), (5, 5)):
        x = rng.integers(-3, 4, size=(2, 3, 6, 5)).astype(np.float64)
        k = rng.integers(-2, 3, size=(4, 3, kh, kw)).astype(np.float64)
        b = rng.integers(-2, 3, size=4).astype(np.float64)
        out = ad.conv2d_same(Tensor(x), Tensor(k), Tensor(b))
        np.testing.assert_array_equal(out.data, naive_conv2d_same(x, k, b))


def test_conv_same_padding_preserves_spatial_size():
    rng = np.random.default_rng(7)
    for kh, kw in ((1, 3), (3, 1), (5, 5), (7, 3)):
        x = Tensor(rng.standard_normal((1, 2, 9, 8)))
        k = Tensor(rng.standard_normal((3, 2, kh, kw)))
        out = ad.conv2d_same(x, k, Tensor(np.zeros(3)))
        assert out.shape == (1, 3, 9, 8)


def test_conv_even_kernel_rejected():
    with pytest.raises(ConfigError):
        ad.conv2d_same(Tensor(np.zeros((1, 1, 4, 4))),
                       Tensor(np.zeros((1, 1, 2, 2))), Tensor(np.zeros(1)))


def test_conv_channel_mismatch():
    with pytest.raises(ShapeError):
        ad.conv2d_same(Tensor(np.zeros((1, 2, 4, 4))),
                       Tensor(np.zeros((1, 3, 1, 3))), Tensor(np.zeros(1)))


def test_conv_bias_shape_mismatch():
    with pytest.raises(ShapeError):
        ad.conv2d_same(Tensor(np.zeros((1, 1, 4, 4))),
                       Tensor(np.zeros((2, 1, 1, 3))), Tensor(np.zeros(3)))


# ---------------------------------------------------------------------------
# batchnorm2d


def test_batchnorm_constant_input_maps_to_zero():
    x = Tensor(np.full((2, 3, 4, 4), 7.5))
    out = ad.batchnorm2d(x, Tensor(np.ones(3)), Tensor(np.zeros(3)),
                         BNState.fresh(3, np.float64), "train")
    np.testing.assert_array_equal(out.data, np.zeros_like(x.data))


def test_batchnorm_zero_gamma_yields_beta():
    rng = np.random.default_rng(8)
    x = Tensor(rng.standard_normal((2, 2, 3, 3)))
    beta = np.array([1.5, -0.5])
    out = ad.batchnorm2d(x, Tensor(np.zeros(2)), Tensor(beta),
                         BNState.fresh(2, np.float64), "train")
    np.testing.assert_array_equal(out.data, np.broadcast_to(beta.reshape(1, 2, 1, 1), x.shape))


def test_batchnorm_normalizes_batch_statistics():
    rng = np.random.default_rng(9)
    x = Tensor(3.0 + 2.0 * rng.standard_normal((8, 3, 6, 5)))
    out = ad.batchnorm2d(x, Tensor(np.ones(3)), Tensor(np.zeros(3)),
                         BNState.fresh(3, np.float64), "train")
    mean = out.data.mean(axis=(0, 2, 3))
    var = out.data.var(axis=(0, 2, 3))
    assert np.all(np.abs(mean) < 1e-4)
    assert np.all(np.abs(var - 1.0) < 1e-4)


def test_batchnorm_eval_before_train_is_state_error():
    x = Tensor(np.zeros((1, 2, 3, 3)))
    with pytest.raises(StateError):
        ad.batchnorm2d(x, Tensor(np.ones(2)), Tensor(np.zeros(2)),
                       BNState.fresh(2, np.float64), "eval")


def test_batchnorm_train_needs_two_elements_per_channel():
    x = Tensor(np.zeros((1, 2, 1, 1)))
    with pytest.raises(ShapeError):
        ad.batchnorm2d(x, Tensor(np.ones(2)), Tensor(np.zeros(2)),
                       BNState.fresh(2, np.float64), "train")


def test_batchnorm_running_stats_ema():
    rng = np.random.default_rng(10)
    x = rng.standard_normal((4, 2, 3, 3))
    state = BNState.fresh(2, np.float64)
    ad.batchnorm2d(Tensor(x), Tensor(np.ones(2)), Tensor(np.zeros(2)), state, "train")
    batch_mean = x.mean(axis=(0, 2, 3))
    batch_var = x.var(axis=(0, 2, 3))
    np.testing.assert_allclose(state.mean, 0.1 * batch_mean, rtol=1e-12)
    np.testing.assert_allclose(state.var, 0.9 * 1.0 + 0.1 * batch_var, rtol=1e-12)
    assert state.updates == 1


def test_batchnorm_eval_uses_running_stats():
    rng = np.random.default_rng(11)
    state = BNState(np.array([1.0, -1.0]), np.array([4.0, 0.25]), updates=3)
    x = rng.standard_normal((2, 2, 2, 2))
    out = ad.batchnorm2d(Tensor(x), Tensor(np.ones(2)), Tensor(np.zeros(2)), state, "eval")
    expected = (x - state.mean.reshape(1, 2, 1, 1)) / np.sqrt(state.var + ad.BN_EPS).reshape(1, 2, 1, 1)
    np.testing.assert_allclose(out.data, expected, rtol=1e-12)
    assert state.updates == 3  # eval must not touch the statistics


def test_batchnorm_rejects_unknown_mode():
    x = Tensor(np.zeros((2, 1, 2, 2)))
    with pytest.raises(ConfigError):
        ad.batchnorm2d(x, Tensor(np.ones(1)), Tensor(np.zeros(1)),
                       BNState.fresh(1, np.float64), "training")


# ---------------------------------------------------------------------------
# layernorm


def test_layernorm_row_statistics():
    rng = np.random.default_rng(12)
    x = Tensor(rng.standard_normal((3, 4, 16)))
    out = ad.layernorm(x, Tensor(np.ones(16)), Tensor(np.zeros(16)))
    assert np.all(np.abs(out.data.mean(axis=-1)) < 1e-6)
    assert np.all(np.abs(out.data.var(axis=-1) - 1.0) < 1e-3)


def test_layernorm_shape_mismatch():
    with pytest.raises(ShapeError):
        ad.layernorm(Tensor(np.zeros((2, 4))), Tensor(np.ones(3)), Tensor(np.zeros(3)))


# ---------------------------------------------------------------------------
# activations


def test_activation_zero_points():
    z = Tensor(np.zeros(3))
    assert np.all(ad.relu(z).data == 0.0)
    assert np.all(ad.gelu(z).data == 0.0)


def test_gelu_asymptotes():
    out = ad.gelu(Tensor([10.0, -10.0]))
    assert abs(out.data[0] - 10.0) < 1e-6
    assert abs(out.data[1]) < 1e-6


def test_relu_forward_and_mask_backward():
    x = Tensor([-2.0, -0.5, 0.0, 0.5, 2.0], requires_grad=True)
    out = ad.relu(x)
    np.testing.assert_array_equal(out.data, [0.0, 0.0, 0.0, 0.5, 2.0])
    backward(out.sum())
    np.testing.assert_array_equal(x.grad, [0.0, 0.0, 0.0, 1.0, 1.0])


def test_gelu_matches_tanh_formula():
    rng = np.random.default_rng(13)
    v = rng.standard_normal(64)
    out = ad.gelu(Tensor(v))
    k = np.sqrt(2.0 / np.pi)
    expected = 0.5 * v * (1.0 + np.tanh(k * (v + 0.044715 * v**3)))
    np.testing.assert_allclose(out.data, expected, rtol=1e-12)


def test_gelu_preserves_float32():
    out = ad.gelu(Tensor(np.ones(4, dtype=np.float32)))
    assert out.dtype == np.float32


def test_unknown_activation():
    with pytest.raises(ConfigError):
        ad.activation(Tensor(np.zeros(2)), "swish")


# ---------------------------------------------------------------------------
# maxpool2d


def naive_maxpool2d(x, ph, pw):
    n, c, h, w = x.shape
    oh, ow = h // ph, w // pw
    out = np.zeros((n, c, oh, ow), dtype=x.dtype)
    for b in range(n):
        for ch in range(c):
            for i in range(oh):
                for j in range(ow):
                    out[b, ch, i, j] = x[b, ch, i * ph:(i + 1) * ph, j * pw:(j + 1) * pw].max()
    return out


def test_maxpool_direct():
    out = ad.maxpool2d(Tensor(np.array([[[[1.0, 2.0], [3.0, 4.0]]]])), (2, 2))
    np.testing.assert_array_equal(out.data, [[[[4.0]]]])


def test_maxpool_constant_input():
    out = ad.maxpool2d(Tensor(np.full((1, 2, 4, 6), 3.0)), (2, 2))
    np.testing.assert_array_equal(out.data, np.full((1, 2, 2, 3), 3.0))


def test_maxpool_matches_naive_oracle():
    rng = np.random.default_rng(14)
    for shape, window in (((1, 2, 6, 6), (2, 2)), ((2, 3, 5, 7), (2, 2)),
                          ((1, 1, 9, 4), (3, 2))):
        x = rng.standard_normal(shape)
        out = ad.maxpool2d(Tensor(x), window)
        np.testing.assert_array_equal(out.data, naive_maxpool2d(x, *window))


def test_maxpool_gradient_lands_on_argmax_only():
    rng = np.random.default_rng(15)
    vals = rng.permutation(np.arange(1 * 2 * 6 * 6, dtype=np.float64)).reshape(1, 2, 6, 6)
    x = Tensor(vals, requires_grad=True)
    out = ad.maxpool2d(x, (2, 2))
    backward(out.sum())
    assert x.grad.sum() == out.data.size
    nonzero = np.argwhere(x.grad != 0.0)
    assert len(nonzero) == out.data.size
    for b, c, i, j in nonzero:
        assert vals[b, c, i, j] == out.data[b, c, i // 2, j // 2]


def test_maxpool_tie_goes_to_first_flat_index():
    x = Tensor(np.full((1, 1, 2, 2), 5.0), requires_grad=True)
    out = ad.maxpool2d(x, (2, 2))
    backward(out.sum())
    np.testing.assert_array_equal(x.grad[0, 0], [[1.0, 0.0], [0.0, 0.0]])


def test_maxpool_drops_trailing_remainder():
    rng = np.random.default_rng(16)
    x = Tensor(rng.standard_normal((1, 1, 5, 7)), requires_grad=True)
    out = ad.maxpool2d(x, (2, 2))
    assert out.shape == (1, 1, 2, 3)
    backward(out.sum())
    # dropped rows and columns receive no gradient
    assert np.all(x.grad[:, :, 4, :] == 0.0)
    assert np.all(x.grad[:, :, :, 6] == 0.0)


def test_maxpool_window_larger_than_input():
    with pytest.raises(ShapeError):
        ad.maxpool2d(Tensor(np.zeros((1, 1, 2, 2))), (3, 3))


def test_maxpool_nonpositive_window():
    with pytest.raises(ConfigError):
        ad.maxpool2d(Tensor(np.zeros((1, 1, 2, 2))), (0, 2))


# ---------------------------------------------------------------------------
# concat / split_half / reshape


def test_concat_shape_arithmetic():
    out = ad.concat([Tensor(np.ones((1, 2))), Tensor(np.zeros((1, 2)))], axis=0)
    assert out.shape == (2, 2)
    np.testing.assert_array_equal(out.data, [[1.0, 1.0], [0.0, 0.0]])


def test_concat_then_split_round_trip():
    rng = np.random.default_rng(17)
    a = Tensor(rng.standard_normal((2, 3)))
    b = Tensor(rng.standard_normal((2, 3)))
    lo, hi = ad.split_half(ad.concat([a, b], axis=1), axis=1)
    np.testing.assert_array_equal(lo.data, a.data)
    np.testing.assert_array_equal(hi.data, b.data)


def test_concat_gradient_is_ones_through_sum():
    a = Tensor(np.random.default_rng(18).standard_normal((2, 2)), requires_grad=True)
    b = Tensor(np.random.default_rng(19).standard_normal((3, 2)), requires_grad=True)
    backward(ad.tensor_sum(ad.concat([a, b], axis=0)))
    np.testing.assert_array_equal(a.grad, np.ones((2, 2)))
    np.testing.assert_array_equal(b.grad, np.ones((3, 2)))


def test_concat_incompatible_shapes():
    with pytest.raises(ShapeError):
        ad.concat([Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 4)))], axis=0)


def test_split_half_columns():
    x = Tensor(np.arange(8.0).reshape(2, 4))
    lo, hi = ad.split_half(x, axis=1)
    np.testing.assert_array_equal(lo.data, [[0.0, 1.0], [4.0, 5.0]])
    np.testing.assert_array_equal(hi.data, [[2.0, 3.0], [6.0, 7.0]])


def test_split_then_concat_round_trip():
    x = Tensor(np.random.default_rng(20).standard_normal((3, 6)))
    lo, hi = ad.split_half(x, axis=1)
    np.testing.assert_array_equal(ad.concat([lo, hi], axis=1).data, x.data)


def test_split_half_odd_axis():
    with pytest.raises(ShapeError):
        ad.split_half(Tensor(np.zeros((2, 5))), axis=1)


def test_split_half_gradient_stays_in_used_half():
    x = Tensor(np.random.default_rng(21).standard_normal((2, 6)), requires_grad=True)
    lo, _ = ad.split_half(x, axis=1)
    backward(lo.sum())
    np.testing.assert_array_equal(x.grad[:, :3], np.ones((2, 3)))
    np.testing.assert_array_equal(x.grad[:, 3:], np.zeros((2, 3)))


def test_reshape_round_trip_and_sum():
    x = Tensor(np.arange(6.0).reshape(2, 3))
    flat = ad.reshape(x, (6,))
    back = ad.reshape(flat, (2, 3))
    np.testing.assert_array_equal(back.data, x.data)
    assert flat.data.sum() == x.data.sum()


def test_reshape_gradient_in_original_shape():
    x = Tensor(np.random.default_rng(22).standard_normal((2, 3, 4)), requires_grad=True)
    backward(ad.tensor_sum(ad.reshape(x, (6, 4))))
    np.testing.assert_array_equal(x.grad, np.ones((2, 3, 4)))


def test_reshape_element_count_mismatch():
    with pytest.raises(ShapeError):
        ad.reshape(Tensor(np.zeros((2, 3))), (7,))


# ---------------------------------------------------------------------------
# softmax cross-entropy


def test_cross_entropy_uniform_logits():
    logits = Tensor(np.zeros((3, 4)))
    targets = np.eye(4)[[0, 1, 3]]
    loss = ad.softmax_cross_entropy(logits, targets)
    assert abs(loss.item() - np.log(4.0)) < 1e-9


def test_cross_entropy_extreme_logits_stable():
    logits = Tensor(np.array([[1000.0, -1000.0, -1000.0, -1000.0]]))
    loss = ad.softmax_cross_entropy(logits, np.eye(4)[[0]])
    assert loss.item() == 0.0


def test_cross_entropy_nonnegative():
    rng = np.random.default_rng(23)
    for _ in range(50):
        logits = Tensor(rng.standard_normal((4, 5)))
        t = rng.random((4, 5))
        t /= t.sum(axis=1, keepdims=True)
        assert ad.softmax_cross_entropy(logits, t).item() >= 0.0


def test_cross_entropy_gradient_formula():
    rng = np.random.default_rng(24)
    logits = Tensor(rng.standard_normal((6, 4)), requires_grad=True)
    t = rng.random((6, 4))
    t /= t.sum(axis=1, keepdims=True)
    backward(ad.softmax_cross_entropy(logits, t))
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    p = np.exp(z) / np.exp(z).sum(axis=1, keepdims=True)
    np.testing.assert_allclose(logits.grad, (p - t) / 6.0, rtol=1e-10, atol=1e-15)


def test_cross_entropy_rejects_unnormalized_rows():
    logits = Tensor(np.zeros((2, 3)))
    with pytest.raises(ValidationError):
        ad.softmax_cross_entropy(logits, np.array([[0.5, 0.5, 0.5], [1.0, 0.0, 0.0]]))


def test_cross_entropy_rejects_negative_probability():
    logits = Tensor(np.zeros((1, 3)))
    with pytest.raises(ValidationError):
        ad.softmax_cross_entropy(logits, np.array([[1.5, -0.5, 0.0]]))


def test_cross_entropy_shape_mismatch():
    with pytest.raises(ShapeError):
        ad.softmax_cross_entropy(Tensor(np.zeros((2, 3))), np.full((3, 2), 0.5))


# ---------------------------------------------------------------------------
# backward mechanics


def test_backward_sum_gives_ones():
    x = Tensor(np.random.default_rng(25).standard_normal((2, 2)), requires_grad=True)
    backward(x.sum())
    np.testing.assert_array_equal(x.grad, np.ones((2, 2)))


def test_backward_sum_of_squares_gives_2x():
    x = Tensor(np.random.default_rng(26).standard_normal((3, 3)), requires_grad=True)
    backward(ad.tensor_sum(ad.mul(x, x)))
    np.testing.assert_allclose(x.grad, 2.0 * x.data, rtol=1e-12)


def test_backward_accumulates_across_branches():
    x = Tensor(np.ones((2, 2)), requires_grad=True)
    y = ad.add(x, x)  # both branches feed the same leaf
    backward(y.sum())
    np.testing.assert_array_equal(x.grad, np.full((2, 2), 2.0))


def test_backward_diamond_graph():
    x = Tensor([2.0], requires_grad=True)
    a = ad.mul(x, x)
    b = ad.add(x, x)
    backward(ad.add(a, b).sum())
    # d/dx (x^2 + 2x) = 2x + 2
    np.testing.assert_array_equal(x.grad, [6.0])


def test_backward_requires_scalar():
    x = Tensor(np.zeros((2, 2)), requires_grad=True)
    y = ad.add(x, x)
    with pytest.raises(ShapeError):
        backward(y)


def test_backward_twice_is_state_error():
    x = Tensor(np.ones((2,)), requires_grad=True)
    loss = ad.tensor_sum(ad.mul(x, x))
    backward(loss)
    with pytest.raises(StateError):
        backward(loss)


def test_backward_without_requires_grad():
    x = Tensor(np.ones((2,)))
    with pytest.raises(StateError):
        backward(x.sum())


def test_grads_never_flow_to_frozen_inputs():
    a = Tensor(np.ones((2, 2)), requires_grad=True)
    b = Tensor(np.ones((2, 2)))
    backward(ad.tensor_sum(ad.mul(a, b)))
    assert a.grad is not None
    assert b.grad is None


def test_forward_bitwise_deterministic():
    rng = np.random.default_rng(27)
    x = rng.standard_normal((2, 3, 8, 6))
    k = rng.standard_normal((4, 3, 3, 3))
    b = rng.standard_normal(4)
    one = ad.conv2d_same(Tensor(x), Tensor(k), Tensor(b)).data
    two = ad.conv2d_same(Tensor(x), Tensor(k), Tensor(b)).data
    assert one.tobytes() == two.tobytes()
