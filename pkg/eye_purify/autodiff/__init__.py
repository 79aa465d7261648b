"""Reverse-mode automatic differentiation over numpy arrays."""

from eye_purify.autodiff.tensor import Function, Graph, Tensor, as_tensor, backward, no_grad  # noqa: F401
from eye_purify.autodiff.functional import (  # noqa: F401
    RunningStats, batch_norm2d, conv2d, conv_transpose2d, crop2d, dropout, matmul,
    max_pool2d, reflection_pad2d, relu, scaled_tanh, square_sum, stack_images, tanh,
)
from eye_purify.autodiff.gradcheck import grad_check  # noqa: F401
