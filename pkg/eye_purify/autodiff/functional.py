"""Differentiable operations used by the loss and transform networks.

Convolutions lower to matrix products over im2col windows; the
backward passes scatter window gradients back with a fixed loop order
so results do not depend on thread count.
"""

import logging

import numpy as np

from eye_purify import exceptions, settings
from eye_purify.autodiff.tensor import Function, Tensor, as_tensor, unbroadcast


logger = logging.getLogger(__name__)


# -- elementwise and algebra --

class Add(Function):

    def forward(self, x, y):
        self.shapes = (x.shape, y.shape)
        return x + y

    def backward(self, grad):
        return unbroadcast(grad, self.shapes[0]), unbroadcast(grad, self.shapes[1])


class Mul(Function):

    def forward(self, x, y):
        self.x, self.y = x, y
        return x * y

    def backward(self, grad):
        gx = unbroadcast(grad * self.y, self.x.shape) if self.needs_grad[0] else None
        gy = unbroadcast(grad * self.x, self.y.shape) if self.needs_grad[1] else None
        return gx, gy


class Neg(Function):

    def forward(self, x):
        return -x

    def backward(self, grad):
        return (-grad,)


class PowScalar(Function):

    def forward(self, x, exponent):
        self.x, self.exponent = x, exponent
        return x ** exponent

    def backward(self, grad):
        return (grad * self.exponent * self.x ** (self.exponent - 1),)


class MatMul(Function):

    def forward(self, x, y):
        if x.shape[-1] != y.shape[-2]:
            raise exceptions.ShapeError("matmul inner dimensions differ",
                                        expected=x.shape[-1], actual=y.shape[-2])
        self.x, self.y = x, y
        return np.matmul(x, y)

    def backward(self, grad):
        gx = gy = None
        if self.needs_grad[0]:
            gx = unbroadcast(np.matmul(grad, np.swapaxes(self.y, -1, -2)), self.x.shape)
        if self.needs_grad[1]:
            gy = unbroadcast(np.matmul(np.swapaxes(self.x, -1, -2), grad), self.y.shape)
        return gx, gy


class Sum(Function):

    def forward(self, x, axis=None, keepdims=False):
        self.shape, self.axis, self.keepdims = x.shape, axis, keepdims
        return np.asarray(x.sum(axis=axis, keepdims=keepdims))

    def backward(self, grad):
        if self.axis is not None and not self.keepdims:
            axes = self.axis if isinstance(self.axis, tuple) else (self.axis,)
            axes = sorted(a % len(self.shape) for a in axes)
            for a in axes:
                grad = np.expand_dims(grad, a)
        return (np.ascontiguousarray(np.broadcast_to(grad, self.shape)),)


class Reshape(Function):

    def forward(self, x, shape):
        self.shape = x.shape
        return x.reshape(shape)

    def backward(self, grad):
        return (grad.reshape(self.shape),)


class Transpose(Function):

    def forward(self, x, axes):
        self.inverse = tuple(np.argsort(axes))
        return np.transpose(x, axes)

    def backward(self, grad):
        return (np.transpose(grad, self.inverse),)


class GetItem(Function):
    """Basic (slice/int) indexing."""

    def forward(self, x, index):
        self.shape, self.dtype, self.index = x.shape, x.dtype, index
        return np.array(x[index])

    def backward(self, grad):
        out = np.zeros(self.shape, dtype=self.dtype)
        out[self.index] += grad
        return (out,)


# -- activations --

class ReLU(Function):

    def forward(self, x):
        self.mask = x > 0
        return np.where(self.mask, x, 0).astype(x.dtype)

    def backward(self, grad):
        return (grad * self.mask,)


class Tanh(Function):

    def forward(self, x):
        self.t = np.tanh(x)
        return self.t

    def backward(self, grad):
        return (grad * (1 - self.t * self.t),)


class ScaledTanh(Function):
    """127.5 * (tanh(x) + 1), mapping the real line onto (0, 255)."""

    def forward(self, x):
        self.t = np.tanh(x)
        return (127.5 * (self.t + 1)).astype(x.dtype)

    def backward(self, grad):
        return (grad * 127.5 * (1 - self.t * self.t),)


class Dropout(Function):

    def forward(self, x, keep):
        self.keep = keep
        return x * keep

    def backward(self, grad):
        return (grad * self.keep,)


# -- convolution helpers --

def _im2col(xp, kh, kw, stride):
    """Windows of a padded NCHW array as (N, C*kh*kw, H'*W') columns."""
    n, c, hp, wp = xp.shape
    oh = (hp - kh) // stride + 1
    ow = (wp - kw) // stride + 1
    windows = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    windows = windows[:, :, ::stride, ::stride][:, :, :oh, :ow]
    cols = windows.transpose(0, 1, 4, 5, 2, 3).reshape(n, c * kh * kw, oh * ow)
    return cols, oh, ow


def _col2im(cols, shape, kh, kw, stride, oh, ow):
    """Scatter-add columns back onto an NCHW array of the given shape."""
    n, c = shape[:2]
    cols = cols.reshape(n, c, kh, kw, oh, ow)
    out = np.zeros(shape, dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += cols[:, :, i, j]
    return out


def _pad_hw(x, top, bottom, left, right, mode='constant'):
    if not (top or bottom or left or right):
        return x
    return np.pad(x, ((0, 0), (0, 0), (top, bottom), (left, right)), mode=mode)


class Conv2d(Function):
    """Cross-correlation of NCHW input with a KCkk weight."""

    def forward(self, x, weight, stride=1, pad=0):
        if x.ndim != 4 or weight.ndim != 4:
            raise exceptions.ShapeError("conv2d needs 4-d input and weight",
                                        expected=4, actual=(x.ndim, weight.ndim))
        if x.shape[1] != weight.shape[1]:
            raise exceptions.ShapeError("conv2d channel mismatch",
                                        expected=weight.shape, actual=x.shape)
        if stride < 1:
            raise exceptions.ShapeError("conv2d stride must be >= 1", expected='>= 1', actual=stride)
        k, _, kh, kw = weight.shape
        if kh > x.shape[2] + 2 * pad or kw > x.shape[3] + 2 * pad:
            raise exceptions.ShapeError("conv2d kernel larger than padded input",
                                        expected=(kh, kw), actual=(x.shape[2] + 2 * pad, x.shape[3] + 2 * pad))
        self.xshape, self.stride, self.pad = x.shape, stride, pad
        self.xp = _pad_hw(x, pad, pad, pad, pad)
        self.weight = weight
        cols, self.oh, self.ow = _im2col(self.xp, kh, kw, stride)
        out = np.matmul(weight.reshape(k, -1), cols)
        return out.reshape(x.shape[0], k, self.oh, self.ow)

    def backward(self, grad):
        n = self.xshape[0]
        k, _, kh, kw = self.weight.shape
        g = grad.reshape(n, k, self.oh * self.ow)
        gx = gw = None
        if self.needs_grad[1]:
            cols, _, _ = _im2col(self.xp, kh, kw, self.stride)
            gw = np.matmul(g, cols.transpose(0, 2, 1)).sum(axis=0).reshape(self.weight.shape)
        if self.needs_grad[0]:
            gcols = np.matmul(self.weight.reshape(k, -1).T, g)
            gxp = _col2im(gcols, self.xp.shape, kh, kw, self.stride, self.oh, self.ow)
            p = self.pad
            gx = gxp[:, :, p:p + self.xshape[2], p:p + self.xshape[3]]
        return gx, gw


class ConvTranspose2d(Function):
    """Transposed convolution; weight is (C_in, C_out, kh, kw)."""

    def forward(self, x, weight, stride=1, pad=0):
        if x.ndim != 4 or weight.ndim != 4:
            raise exceptions.ShapeError("conv_transpose2d needs 4-d input and weight",
                                        expected=4, actual=(x.ndim, weight.ndim))
        if x.shape[1] != weight.shape[0]:
            raise exceptions.ShapeError("conv_transpose2d channel mismatch",
                                        expected=weight.shape, actual=x.shape)
        if stride < 1:
            raise exceptions.ShapeError("conv_transpose2d stride must be >= 1", expected='>= 1', actual=stride)
        n, c, h, w = x.shape
        _, k, kh, kw = weight.shape
        full = ((h - 1) * stride + kh, (w - 1) * stride + kw)
        out_h, out_w = full[0] - 2 * pad, full[1] - 2 * pad
        if out_h < 1 or out_w < 1:
            raise exceptions.ShapeError("conv_transpose2d padding larger than output",
                                        expected='>= 1', actual=(out_h, out_w))
        self.x, self.weight, self.stride, self.pad, self.full = x, weight, stride, pad, full
        cols = np.matmul(weight.reshape(c, -1).T, x.reshape(n, c, h * w))
        out = _col2im(cols, (n, k) + full, kh, kw, stride, h, w)
        return np.ascontiguousarray(out[:, :, pad:pad + out_h, pad:pad + out_w])

    def backward(self, grad):
        n, c, h, w = self.x.shape
        _, k, kh, kw = self.weight.shape
        p = self.pad
        gfull = _pad_hw(grad, p, self.full[0] - grad.shape[2] - p, p, self.full[1] - grad.shape[3] - p)
        gcols, _, _ = _im2col(gfull, kh, kw, self.stride)
        gx = gw = None
        if self.needs_grad[0]:
            gx = np.matmul(self.weight.reshape(c, -1), gcols).reshape(n, c, h, w)
        if self.needs_grad[1]:
            gw = np.matmul(self.x.reshape(n, c, h * w), gcols.transpose(0, 2, 1))
            gw = gw.sum(axis=0).reshape(self.weight.shape)
        return gx, gw


class ReflectionPad2d(Function):
    """Mirror padding that does not repeat the edge pixel."""

    def forward(self, x, pads):
        top, bottom, left, right = pads
        h, w = x.shape[2:]
        if max(top, bottom) >= h or max(left, right) >= w:
            raise exceptions.ShapeError("reflection pad must be smaller than the input",
                                        expected=(h - 1, w - 1), actual=pads)
        self.pads, self.hw = pads, (h, w)
        return _pad_hw(x, top, bottom, left, right, mode='reflect')

    def backward(self, grad):
        top, bottom, left, right = self.pads
        h, w = self.hw
        gh = grad[:, :, top:top + h, :].copy()
        if top:
            gh[:, :, 1:top + 1, :] += np.flip(grad[:, :, :top, :], axis=2)
        if bottom:
            gh[:, :, h - 1 - bottom:h - 1, :] += np.flip(grad[:, :, top + h:, :], axis=2)
        gx = gh[:, :, :, left:left + w].copy()
        if left:
            gx[:, :, :, 1:left + 1] += np.flip(gh[:, :, :, :left], axis=3)
        if right:
            gx[:, :, :, w - 1 - right:w - 1] += np.flip(gh[:, :, :, left + w:], axis=3)
        return (gx,)


class MaxPool2d(Function):
    """2x2 max pooling with stride 2; odd trailing rows/columns are dropped."""

    def forward(self, x):
        n, c, h, w = x.shape
        h2, w2 = h // 2, w // 2
        self.shape, self.hw2 = x.shape, (h2, w2)
        win = x[:, :, :2 * h2, :2 * w2].reshape(n, c, h2, 2, w2, 2)
        win = win.transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h2, w2, 4)
        self.index = np.argmax(win, axis=-1)[..., None]
        return np.take_along_axis(win, self.index, axis=-1)[..., 0]

    def backward(self, grad):
        n, c = self.shape[:2]
        h2, w2 = self.hw2
        win = np.zeros((n, c, h2, w2, 4), dtype=grad.dtype)
        np.put_along_axis(win, self.index, grad[..., None], axis=-1)
        win = win.reshape(n, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, 2 * h2, 2 * w2)
        out = np.zeros(self.shape, dtype=grad.dtype)
        out[:, :, :2 * h2, :2 * w2] = win
        return (out,)


class RunningStats(object):
    """Batch-norm running mean/variance, mutated in train mode only."""

    def __init__(self, channels, dtype=None):
        dtype = dtype or np.dtype(settings.DTYPE)
        self.mean = np.zeros(channels, dtype=dtype)
        self.var = np.ones(channels, dtype=dtype)

    def update(self, mean, var, count, momentum):
        unbiased = var * (count / max(count - 1, 1))
        self.mean = ((1 - momentum) * self.mean + momentum * mean).astype(self.mean.dtype)
        self.var = ((1 - momentum) * self.var + momentum * unbiased).astype(self.var.dtype)


class BatchNorm2d(Function):

    AXES = (0, 2, 3)

    def forward(self, x, gamma, beta, running=None, training=True, momentum=0.1, eps=1e-5):
        c = x.shape[1]
        if gamma.shape != (c,) or beta.shape != (c,):
            raise exceptions.ShapeError("batch_norm2d channel mismatch",
                                        expected=(c,), actual=(gamma.shape, beta.shape))
        self.training, self.gamma = training, gamma
        if training:
            mean = x.mean(axis=self.AXES)
            var = x.var(axis=self.AXES)
            if running is not None:
                running.update(mean, var, x.size // c, momentum)
        else:
            if running is None or running.mean is None or running.var is None:
                raise exceptions.ConfigurationError("eval mode batch norm needs populated running statistics")
            mean, var = running.mean, running.var
        self.invstd = (1.0 / np.sqrt(var + eps)).astype(x.dtype)[None, :, None, None]
        self.xhat = (x - np.asarray(mean, dtype=x.dtype)[None, :, None, None]) * self.invstd
        return gamma[None, :, None, None] * self.xhat + beta[None, :, None, None]

    def backward(self, grad):
        axes = self.AXES
        ggamma = (grad * self.xhat).sum(axis=axes) if self.needs_grad[1] else None
        gbeta = grad.sum(axis=axes) if self.needs_grad[2] else None
        gx = None
        if self.needs_grad[0]:
            gxhat = grad * self.gamma[None, :, None, None]
            if self.training:
                m = grad.size // grad.shape[1]
                gx = (self.invstd / m) * (
                    m * gxhat
                    - gxhat.sum(axis=axes, keepdims=True)
                    - self.xhat * (gxhat * self.xhat).sum(axis=axes, keepdims=True))
            else:
                gx = gxhat * self.invstd
        return gx, ggamma, gbeta


# -- public functional API --

def matmul(x, y):
    return MatMul.apply(x, y)


def relu(x):
    return ReLU.apply(x)


def tanh(x):
    return Tanh.apply(x)


def scaled_tanh(x):
    return ScaledTanh.apply(x)


def dropout(x, p, training, rng=None):
    """Zero each element with probability p and rescale survivors; identity in eval mode."""
    if not 0 <= p < 1:
        raise exceptions.ConfigurationError("dropout probability must be in [0, 1), got {}".format(p))
    x = as_tensor(x)
    if not training or p == 0:
        return x
    rng = rng if rng is not None else np.random.default_rng()
    keep = (rng.random(x.shape) >= p).astype(x.dtype) / np.asarray(1 - p, dtype=x.dtype)
    return Dropout.apply(x, keep=keep)


def conv2d(x, weight, stride=1, pad=0, bias=None):
    out = Conv2d.apply(x, weight, stride=stride, pad=pad)
    if bias is not None:
        out = out + as_tensor(bias).reshape(1, -1, 1, 1)
    return out


def conv_transpose2d(x, weight, stride=1, pad=0, bias=None):
    out = ConvTranspose2d.apply(x, weight, stride=stride, pad=pad)
    if bias is not None:
        out = out + as_tensor(bias).reshape(1, -1, 1, 1)
    return out


def reflection_pad2d(x, pad):
    """pad is one int for every side or (top, bottom, left, right)."""
    pads = (pad,) * 4 if isinstance(pad, int) else tuple(pad)
    if len(pads) != 4 or min(pads) < 0:
        raise exceptions.ShapeError("reflection pad needs 4 non-negative sizes", expected=4, actual=pads)
    return ReflectionPad2d.apply(x, pads=pads)


def crop2d(x, top, bottom, left, right):
    h, w = x.shape[2:]
    return x[:, :, top:h - bottom, left:w - right]


def max_pool2d(x):
    return MaxPool2d.apply(x)


def batch_norm2d(x, gamma, beta, running=None, training=True,
                 momentum=None, eps=None):
    momentum = settings.BN_MOMENTUM if momentum is None else momentum
    eps = settings.BN_EPS if eps is None else eps
    return BatchNorm2d.apply(x, gamma, beta, running=running, training=training,
                             momentum=momentum, eps=eps)


def square_sum(x):
    x = as_tensor(x)
    return (x * x).sum()


def stack_images(images, dtype=None):
    """Stack HxWx3 arrays into one constant NCHW Tensor."""
    batch = np.stack([np.asarray(img).transpose(2, 0, 1) for img in images])
    return Tensor(batch.astype(dtype or settings.DTYPE))
