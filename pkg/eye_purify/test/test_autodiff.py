import numpy as np
import pytest
from hypothesis import assume, given, settings as hsettings, strategies as st

from eye_purify import exceptions
from eye_purify.autodiff import (
    Graph, Tensor, batch_norm2d, conv2d, conv_transpose2d, crop2d, dropout, grad_check, max_pool2d, no_grad,
    reflection_pad2d, relu, scaled_tanh, square_sum, stack_images,
)


TOL = 1e-5


def rand(*shape, seed=0):
    return np.random.default_rng(seed).standard_normal(shape)


def test_shared_node_accumulates_gradient():
    x = Tensor(np.array([1.0, -2.0, 3.0]), requires_grad=True)
    (x * x + x).sum().backward()
    assert np.allclose(x.grad, 2 * x.data + 1)


def test_broadcast_add_unbroadcasts_gradient():
    x = Tensor(np.ones((3, 1)), requires_grad=True)
    y = Tensor(np.ones((1, 4)), requires_grad=True)
    (x + y).sum().backward()
    assert np.array_equal(x.grad, np.full((3, 1), 4.0))
    assert np.array_equal(y.grad, np.full((1, 4), 3.0))


def test_graph_orders_inputs_before_outputs():
    x = Tensor(np.ones(2), requires_grad=True)
    y = x * 2
    z = (y + x).sum()
    nodes = Graph.from_root(z).nodes
    assert nodes.index(x) < nodes.index(y) < nodes.index(z)


def test_backward_needs_scalar_root():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(exceptions.ShapeError):
        (x * 2).backward()


def test_no_grad_records_nothing():
    x = Tensor(np.ones(3), requires_grad=True)
    with no_grad():
        y = (x * 3).sum()
    assert not y.requires_grad
    assert y.is_leaf


def test_non_finite_from_finite_inputs_raises():
    x = Tensor(np.array([-1.0, 4.0]))
    with np.errstate(all='ignore'):
        with pytest.raises(exceptions.NumericalError):
            x ** 0.5


@hsettings(max_examples=25, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(1, 4), st.integers(0, 1000))
def test_matmul_gradient(n, k, m, seed):
    a, b = rand(n, k, seed=seed), Tensor(rand(k, m, seed=seed + 1))
    assert grad_check(lambda t: square_sum(t @ b), a, eps=1e-5) < TOL


@pytest.mark.parametrize('stride,pad', [(1, 0), (1, 1), (2, 1)])
def test_conv2d_gradients(stride, pad):
    x, w = rand(2, 3, 6, 6), rand(4, 3, 3, 3, seed=1)
    assert grad_check(lambda t: square_sum(conv2d(t, Tensor(w), stride=stride, pad=pad)), x, eps=1e-5) < TOL
    assert grad_check(lambda t: square_sum(conv2d(Tensor(x), t, stride=stride, pad=pad)), w, eps=1e-5) < TOL


def test_conv2d_matches_direct_correlation():
    x, w = rand(1, 2, 5, 5), rand(3, 2, 3, 3, seed=1)
    out = conv2d(Tensor(x), Tensor(w)).data
    expected = np.zeros((1, 3, 3, 3))
    for k in range(3):
        for i in range(3):
            for j in range(3):
                expected[0, k, i, j] = (x[0, :, i:i + 3, j:j + 3] * w[k]).sum()
    assert np.allclose(out, expected)


def test_conv_transpose_is_adjoint_of_conv():
    x, y, w = rand(1, 3, 8, 8), rand(1, 5, 4, 4, seed=1), rand(5, 3, 4, 4, seed=2)
    forward = conv2d(Tensor(x), Tensor(w), stride=2, pad=1).data
    adjoint = conv_transpose2d(Tensor(y), Tensor(w), stride=2, pad=1).data
    assert adjoint.shape == x.shape
    assert np.isclose((forward * y).sum(), (x * adjoint).sum())


def test_conv_transpose_gradients():
    x, w = rand(1, 3, 4, 4), rand(3, 2, 4, 4, seed=1)
    out = conv_transpose2d(Tensor(x), Tensor(w), stride=2, pad=1)
    assert out.shape == (1, 2, 8, 8)
    assert grad_check(lambda t: square_sum(conv_transpose2d(t, Tensor(w), stride=2, pad=1)), x, eps=1e-5) < TOL
    assert grad_check(lambda t: square_sum(conv_transpose2d(Tensor(x), t, stride=2, pad=1)), w, eps=1e-5) < TOL


def test_conv2d_channel_mismatch():
    with pytest.raises(exceptions.ShapeError):
        conv2d(Tensor(rand(1, 2, 4, 4)), Tensor(rand(1, 3, 3, 3)))


def test_reflection_pad_values_and_gradient():
    x = np.arange(16, dtype=np.float64).reshape(1, 1, 4, 4)
    padded = reflection_pad2d(Tensor(x), (1, 2, 2, 1)).data
    assert np.array_equal(padded[0, 0], np.pad(x[0, 0], ((1, 2), (2, 1)), mode='reflect'))
    weights = Tensor(rand(1, 2, 7, 7, seed=3))
    assert grad_check(lambda t: square_sum(reflection_pad2d(t, (1, 2, 2, 1)) * weights),
                      rand(1, 2, 4, 4), eps=1e-5) < TOL


def test_reflection_pad_too_large():
    with pytest.raises(exceptions.ShapeError):
        reflection_pad2d(Tensor(rand(1, 1, 3, 3)), 3)


def test_crop_inverts_pad_shape():
    x = Tensor(rand(1, 1, 5, 6))
    assert crop2d(reflection_pad2d(x, (1, 2, 3, 4)), 1, 2, 3, 4).shape == x.shape


def test_max_pool_gradient_routes_to_argmax():
    x = rand(1, 2, 5, 4)
    pooled = max_pool2d(Tensor(x)).data
    assert pooled.shape == (1, 2, 2, 2)
    assert pooled[0, 1, 1, 0] == x[0, 1, 2:4, 0:2].max()
    assert grad_check(lambda t: square_sum(max_pool2d(t)), x, eps=1e-6) < TOL


def test_batch_norm_train_gradients_and_running_stats():
    from eye_purify.autodiff import RunningStats
    x = rand(3, 2, 3, 3) * 4 + 1
    gamma, beta = Tensor(np.array([1.5, 0.5])), Tensor(np.array([0.1, -0.2]))
    c = Tensor(rand(3, 2, 3, 3, seed=5))
    assert grad_check(lambda t: square_sum(batch_norm2d(t, gamma, beta) * c), x, eps=1e-5) < 1e-4

    stats = RunningStats(2, np.float64)
    out = batch_norm2d(Tensor(x), Tensor(np.ones(2)), Tensor(np.zeros(2)), running=stats, momentum=1.0).data
    assert np.allclose(out.mean(axis=(0, 2, 3)), 0, atol=1e-7)
    assert np.allclose(stats.mean, x.mean(axis=(0, 2, 3)))


def test_batch_norm_eval_uses_running_stats():
    from eye_purify.autodiff import RunningStats
    stats = RunningStats(1, np.float64)
    stats.mean, stats.var = np.array([2.0]), np.array([4.0])
    x = np.full((1, 1, 2, 2), 6.0)
    out = batch_norm2d(Tensor(x), Tensor(np.ones(1)), Tensor(np.zeros(1)), running=stats, training=False, eps=0.0)
    assert np.allclose(out.data, 2.0)


def test_scaled_tanh_range_and_gradient():
    out = scaled_tanh(Tensor(np.array([-50.0, 0.0, 50.0]))).data
    assert out[1] == 127.5
    assert 0 <= out[0] < 1e-6 and 255 - 1e-6 < out[2] <= 255
    assert grad_check(lambda t: square_sum(scaled_tanh(t)), rand(6), eps=1e-6) < TOL


def test_relu_gradient_masks_negatives():
    x = Tensor(np.array([-1.0, 2.0]), requires_grad=True)
    relu(x).sum().backward()
    assert np.array_equal(x.grad, [0.0, 1.0])


def test_dropout_eval_identity_and_train_scaling():
    x = Tensor(np.ones((100, 100)))
    assert dropout(x, 0.5, training=False) is x
    out = dropout(x, 0.5, training=True, rng=np.random.default_rng(0)).data
    assert set(np.unique(out)) <= {0.0, 2.0}
    assert abs(out.mean() - 1.0) < 0.05
    with pytest.raises(exceptions.ConfigurationError):
        dropout(x, 1.0, training=True)


def test_stack_images_is_nchw():
    batch = stack_images([np.zeros((4, 5, 3)), np.ones((4, 5, 3))])
    assert batch.shape == (2, 3, 4, 5)
    assert not batch.requires_grad


def test_grad_check_rejects_bad_eps():
    with pytest.raises(exceptions.ConfigurationError):
        grad_check(lambda t: square_sum(t), rand(3), eps=0)


def test_grad_check_detects_wrong_gradient():
    from eye_purify.autodiff import Function

    class Wrong(Function):
        def forward(self, x):
            return x * x

        def backward(self, grad):
            return (grad * 3 * self.inputs[0].data,)

    assert grad_check(lambda t: Wrong.apply(t).sum(), rand(4), eps=1e-5) > 0.1


@hsettings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(1, 3), st.integers(0, 3), st.integers(0, 5), st.integers(0, 5))
def test_conv_then_transpose_restores_spatial_size(kernel, stride, pad, rows, cols):
    pad = min(pad, kernel - 1)
    height = rows * stride + kernel - 2 * pad
    width = cols * stride + kernel - 2 * pad
    assume(height >= 1 and width >= 1)
    w = rand(3, 2, kernel, kernel)
    y = conv2d(Tensor(rand(1, 2, height, width)), Tensor(w), stride=stride, pad=pad)
    assert y.shape == (1, 3, rows + 1, cols + 1)
    back = conv_transpose2d(y, Tensor(w), stride=stride, pad=pad)
    assert back.shape == (1, 2, height, width)


def test_conv_is_linear():
    x, y, w = rand(2, 3, 7, 6), rand(2, 3, 7, 6, seed=1), rand(4, 3, 3, 3, seed=2)
    a, b = 2.5, -0.75

    def conv(t):
        return conv2d(Tensor(t), Tensor(w), stride=2, pad=1).data

    assert np.allclose(conv(a * x + b * y), a * conv(x) + b * conv(y), rtol=1e-5, atol=1e-10)
