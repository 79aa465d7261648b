"""Feed-forward purification network O = f_W(I).

Layer sequence:

    reflection pad
    9x9 conv (32)  -> batch norm -> ReLU
    3x3 conv (64), stride 2, pad 1 -> batch norm -> ReLU
    3x3 conv (128), stride 2, pad 1 -> batch norm -> ReLU
    4 residual blocks (128)
    4x4 deconv (64), stride 2, pad 1 -> batch norm -> ReLU
    4x4 deconv (32), stride 2, pad 1 -> batch norm -> ReLU
    9x9 conv (3), pad 4, with bias -> 127.5 * (tanh + 1)

Two presets share these weights:

shape-preserving
    The input is reflection padded by 12 per side plus up to 3 more so
    the padded size is a multiple of 4. Residual convs use pad 1. The
    output is center cropped back to the input size.

table-faithful
    The input is reflection padded by 12 per side, residual convs use
    pad 0 and the identity path is cropped by 1 px per side per conv, so a
    256 px input goes 280 -> 140 -> 70 -> 66 -> 62 -> 58 -> 54 -> 108 -> 216.
"""

from collections import OrderedDict
import logging

import numpy as np

from eye_purify import constants, exceptions, settings
from eye_purify.autodiff import (
    RunningStats, Tensor, batch_norm2d, conv2d, conv_transpose2d, crop2d, dropout, no_grad,
    reflection_pad2d, relu, scaled_tanh,
)
from eye_purify.model_file import check_layer_names, read_model_file, write_model_file


logger = logging.getLogger(__name__)


def _check_preset(preset):
    if preset not in constants.TRANSFORM_PRESETS:
        raise exceptions.ConfigurationError(
            "unknown transform preset '{}' (choose from {})".format(preset, ', '.join(constants.TRANSFORM_PRESETS)))


def input_padding(preset, height, width):
    """(top, bottom, left, right) reflection padding applied before the first conv."""
    base = constants.TRANSFORM_INPUT_PAD
    if preset == constants.PRESET_TABLE_FAITHFUL:
        return base, base, base, base
    extra_h = -(height + 2 * base) % 4
    extra_w = -(width + 2 * base) % 4
    return (base + extra_h // 2, base + extra_h - extra_h // 2,
            base + extra_w // 2, base + extra_w - extra_w // 2)


def _strided(size):
    return (size + 2 - 3) // 2 + 1


def shape_plan(preset, input_size, widths=constants.TRANSFORM_WIDTHS,
               num_blocks=constants.TRANSFORM_RESIDUAL_BLOCKS):
    """Ordered (layer, (C, H, W)) activation shapes for an input of input_size (int or (H, W))."""
    _check_preset(preset)
    h, w = (input_size, input_size) if np.isscalar(input_size) else tuple(input_size)
    if h < settings.MIN_IMAGE_SIZE or w < settings.MIN_IMAGE_SIZE:
        raise exceptions.ShapeError("image too small for the transform network",
                                    expected='>= {0}x{0}'.format(settings.MIN_IMAGE_SIZE), actual=(h, w))
    c1, c2, c3 = widths
    top, bottom, left, right = input_padding(preset, h, w)
    ph, pw = h + top + bottom, w + left + right
    plan = [('input', (3, h, w)), ('reflection_pad', (3, ph, pw)), ('conv1', (c1, ph, pw))]
    sh, sw = _strided(ph), _strided(pw)
    plan.append(('conv2', (c2, sh, sw)))
    sh, sw = _strided(sh), _strided(sw)
    plan.append(('conv3', (c3, sh, sw)))
    shrink = 4 if preset == constants.PRESET_TABLE_FAITHFUL else 0
    for index in range(num_blocks):
        sh, sw = sh - shrink, sw - shrink
        if sh < 1 or sw < 1:
            raise exceptions.ShapeError("image too small for {} residual blocks".format(num_blocks),
                                        expected='positive size', actual=(sh, sw))
        plan.append(('res{}'.format(index + 1), (c3, sh, sw)))
    sh, sw = 2 * sh, 2 * sw
    plan.append(('deconv1', (c2, sh, sw)))
    sh, sw = 2 * sh, 2 * sw
    plan.append(('deconv2', (c1, sh, sw)))
    plan.append(('conv_out', (3, sh, sw)))
    if preset == constants.PRESET_SHAPE_PRESERVING:
        sh, sw = h, w
    plan.append(('output', (3, sh, sw)))
    return plan


def layer_spec(widths=constants.TRANSFORM_WIDTHS, num_blocks=constants.TRANSFORM_RESIDUAL_BLOCKS):
    """Ordered (parameter name, shape) pairs; running statistics are listed after each batch norm."""
    c1, c2, c3 = widths
    spec = []

    def conv(name, shape, bias=False, bn=True):
        spec.append((name + '.weight', shape))
        if bias:
            spec.append((name + '.bias', (shape[0],)))
        if bn:
            channels = shape[1] if name.startswith('deconv') else shape[0]
            for suffix in ('gamma', 'beta', 'running_mean', 'running_var'):
                spec.append(('{}.bn.{}'.format(name, suffix), (channels,)))

    conv('conv1', (c1, 3, 9, 9))
    conv('conv2', (c2, c1, 3, 3))
    conv('conv3', (c3, c2, 3, 3))
    for index in range(num_blocks):
        conv('res{}.conv1'.format(index + 1), (c3, c3, 3, 3))
        conv('res{}.conv2'.format(index + 1), (c3, c3, 3, 3))
    conv('deconv1', (c3, c2, 4, 4))
    conv('deconv2', (c2, c1, 4, 4))
    conv('conv_out', (3, c1, 9, 9), bias=True, bn=False)
    return spec


def _is_running(name):
    return name.endswith('.running_mean') or name.endswith('.running_var')


class TransformNet(object):
    """Weights, batch-norm running statistics and preset of one purification network."""

    def __init__(self, preset, params, running, widths, num_blocks, dropout_p=None, seed=0):
        _check_preset(preset)
        self.preset = preset
        self.params = params
        self.running = running
        self.widths = tuple(widths)
        self.num_blocks = num_blocks
        self.dropout_p = settings.DROPOUT_P if dropout_p is None else dropout_p
        self.rng = np.random.default_rng(seed)

    def parameters(self):
        return list(self.params.values())

    @property
    def parameter_count(self):
        return int(sum(p.size for p in self.params.values()))

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def to_dtype(self, dtype):
        """Cast weights and running statistics in place, e.g. float64 for gradient checks."""
        for name, p in self.params.items():
            self.params[name] = Tensor(p.data.astype(dtype), requires_grad=True)
        for stats in self.running.values():
            stats.mean = stats.mean.astype(dtype)
            stats.var = stats.var.astype(dtype)
        return self

    # -- forward --

    def _bn(self, x, name, training):
        return batch_norm2d(x, self.params[name + '.bn.gamma'], self.params[name + '.bn.beta'],
                            running=self.running[name], training=training)

    def _residual(self, x, index, training, rng):
        prefix = 'res{}'.format(index)
        pad = 1 if self.preset == constants.PRESET_SHAPE_PRESERVING else 0
        y = conv2d(x, self.params[prefix + '.conv1.weight'], pad=pad)
        y = dropout(y, self.dropout_p, training, rng)
        y = relu(self._bn(y, prefix + '.conv1', training))
        y = conv2d(y, self.params[prefix + '.conv2.weight'], pad=pad)
        y = self._bn(y, prefix + '.conv2', training)
        if pad == 0:
            x = crop2d(x, 2, 2, 2, 2)
        return x + y

    def forward(self, images, training=False, rng=None):
        """NCHW batch in [0, 255] -> NCHW batch in [0, 255].

        Eval mode uses the running batch-norm statistics and no dropout;
        train mode updates the running statistics.
        """
        if not isinstance(images, Tensor):
            images = Tensor(images)
        if images.ndim != 4 or images.shape[1] != 3:
            raise exceptions.ShapeError("transform network input must be Nx3xHxW",
                                        expected='Nx3xHxW', actual=images.shape)
        h, w = images.shape[2:]
        shape_plan(self.preset, (h, w), self.widths, self.num_blocks)
        rng = self.rng if rng is None else rng
        p = self.params

        pads = input_padding(self.preset, h, w)
        x = reflection_pad2d(images, pads)
        x = relu(self._bn(conv2d(x, p['conv1.weight'], pad=4), 'conv1', training))
        x = relu(self._bn(conv2d(x, p['conv2.weight'], stride=2, pad=1), 'conv2', training))
        x = relu(self._bn(conv2d(x, p['conv3.weight'], stride=2, pad=1), 'conv3', training))
        for index in range(1, self.num_blocks + 1):
            x = self._residual(x, index, training, rng)
        x = relu(self._bn(conv_transpose2d(x, p['deconv1.weight'], stride=2, pad=1), 'deconv1', training))
        x = relu(self._bn(conv_transpose2d(x, p['deconv2.weight'], stride=2, pad=1), 'deconv2', training))
        x = scaled_tanh(conv2d(x, p['conv_out.weight'], pad=4, bias=p['conv_out.bias']))
        if self.preset == constants.PRESET_SHAPE_PRESERVING:
            top, bottom, left, right = pads
            x = crop2d(x, top, bottom, left, right)
        return x

    __call__ = forward

    def stylize(self, image):
        """Eval-mode forward of one HxWx3 image; returns an HxWx3 float array."""
        image = np.asarray(image, dtype=settings.DTYPE)
        with no_grad():
            out = self.forward(Tensor(image.transpose(2, 0, 1)[None]), training=False)
        return out.data[0].transpose(1, 2, 0)

    def output_size(self, height, width):
        return shape_plan(self.preset, (height, width), self.widths, self.num_blocks)[-1][1][1:]

    # -- persistence --

    def named_arrays(self):
        arrays = []
        for name, _ in layer_spec(self.widths, self.num_blocks):
            if _is_running(name):
                layer, _, stat = name.rpartition('.bn.')
                stats = self.running[layer]
                arrays.append((name, stats.mean if stat == 'running_mean' else stats.var))
            else:
                arrays.append((name, self.params[name].data))
        return arrays


def build_transform_net(preset=None, seed=0, widths=constants.TRANSFORM_WIDTHS,
                        num_blocks=constants.TRANSFORM_RESIDUAL_BLOCKS, dropout_p=None):
    """Seeded He fan-in normal weights, unit BN scale, zero BN shift and output bias."""
    preset = preset or settings.TRANSFORM_PRESET
    _check_preset(preset)
    if len(widths) != 3 or min(widths) < 1 or num_blocks < 0:
        raise exceptions.ConfigurationError("invalid transform network widths {} / blocks {}".format(
            widths, num_blocks))
    rng = np.random.default_rng(seed)
    dtype = np.dtype(settings.DTYPE)
    params, running = OrderedDict(), OrderedDict()
    for name, shape in layer_spec(widths, num_blocks):
        layer = name.rpartition('.bn.')[0]
        if name.endswith('.weight'):
            fan_in = shape[0 if name.startswith('deconv') else 1] * shape[2] * shape[3]
            value = rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)
        elif name.endswith('.gamma'):
            value = np.ones(shape)
        elif _is_running(name):
            if layer not in running:
                running[layer] = RunningStats(shape[0], dtype)
            continue
        else:
            value = np.zeros(shape)
        params[name] = Tensor(value.astype(dtype), requires_grad=True)
    net = TransformNet(preset, params, running, widths, num_blocks, dropout_p, seed)
    logger.debug("built %s transform net with %d parameters", preset, net.parameter_count)
    return net


def save_model(net, path):
    write_model_file(path, net.preset, net.named_arrays())


def _infer_topology(layers, path):
    try:
        widths = (layers['conv1.weight'].shape[0], layers['conv2.weight'].shape[0],
                  layers['conv3.weight'].shape[0])
    except KeyError as e:
        raise exceptions.TopologyMismatchError("missing layer {}".format(e), path=path)
    num_blocks = 0
    while 'res{}.conv1.weight'.format(num_blocks + 1) in layers:
        num_blocks += 1
    return widths, num_blocks


def load_model(path):
    """Read a transform network; weights and running statistics are restored bit-exactly."""
    preset, layers = read_model_file(path)
    if preset not in constants.TRANSFORM_PRESETS:
        raise exceptions.TopologyMismatchError(
            "expected a transform network, found a '{}' model".format(preset), path=path)
    widths, num_blocks = _infer_topology(layers, path)
    spec = layer_spec(widths, num_blocks)
    check_layer_names([name for name, _ in spec], layers.keys(), path=path)
    params, running = OrderedDict(), OrderedDict()
    for name, shape in spec:
        array = layers[name]
        if array.shape != tuple(shape):
            raise exceptions.TopologyMismatchError(
                "layer '{}' has shape {}, expected {}".format(name, array.shape, tuple(shape)), path=path)
        if _is_running(name):
            layer, _, stat = name.rpartition('.bn.')
            stats = running.setdefault(layer, RunningStats(shape[0], array.dtype))
            setattr(stats, 'mean' if stat == 'running_mean' else 'var', array.copy())
        else:
            params[name] = Tensor(array.copy(), requires_grad=True)
    logger.info("loaded %s transform net from %s", preset, path)
    return TransformNet(preset, params, running, widths, num_blocks)
