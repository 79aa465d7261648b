"""Fixed VGG-19-topology feature extractor used only to compute losses."""

from collections import OrderedDict
import logging

import numpy as np

from eye_purify import constants, exceptions, settings
from eye_purify.autodiff import Tensor, conv2d, max_pool2d, relu
from eye_purify.model_file import check_layer_names, read_model_file, write_model_file


logger = logging.getLogger(__name__)


class LossNet(object):
    """Frozen conv stack conv1_1..conv5_4; weights never receive gradients."""

    def __init__(self, weights, mean_pixel=None, source='seeded'):
        self.weights = OrderedDict(
            (name, (Tensor(w), Tensor(b))) for name, (w, b) in weights.items())
        self.mean_pixel = None if mean_pixel is None else np.asarray(mean_pixel, dtype=np.float32)
        self.source = source

    def index(self, layer):
        try:
            return constants.VGG19_LAYER_NAMES.index(layer)
        except ValueError:
            raise exceptions.UnknownLayerError(layer)

    def pool_count(self, layer):
        """Number of 2x2 pools before layer; its cumulative stride is 2 ** pool_count."""
        self.index(layer)
        return int(layer[4]) - 1

    def channels(self, layer):
        return self.weights[constants.VGG19_LAYER_NAMES[self.index(layer)]][0].shape[0]

    def feature_size(self, layer, height, width):
        for _ in range(self.pool_count(layer)):
            height, width = height // 2, width // 2
        return height, width

    def forward(self, images, layers):
        """Run NCHW images up to the deepest requested layer; return post-ReLU maps by name."""
        wanted = set(layers)
        if not wanted:
            return OrderedDict()
        deepest = max(self.index(layer) for layer in wanted)
        x = images
        if self.mean_pixel is not None:
            x = x - self.mean_pixel.reshape(1, 3, 1, 1)
        out = OrderedDict()
        for name in constants.VGG19_LAYER_NAMES[:deepest + 1]:
            if name.endswith('_1') and name != 'conv1_1':
                x = max_pool2d(x)
            weight, bias = self.weights[name]
            x = relu(conv2d(x, weight, stride=1, pad=1, bias=bias))
            if name in wanted:
                out[name] = x
        return out


class FeatureStack(object):
    """Layer name -> features shaped (N_l, M_l) or (B, N_l, M_l), with spatial dims (h_l, w_l)."""

    def __init__(self, features, dims):
        self.features = features
        self.dims = dims

    def __getitem__(self, layer):
        try:
            return self.features[layer]
        except KeyError:
            raise exceptions.UnknownLayerError(layer)

    def __contains__(self, layer):
        return layer in self.features

    def __iter__(self):
        return iter(self.features)

    def sample(self, index):
        """Features of one batch element, shaped (N_l, M_l)."""
        return FeatureStack(OrderedDict((k, v[index]) for k, v in self.features.items()), self.dims)


def as_batch(image):
    """HxWx3 image (array or Tensor) or NCHW batch -> NCHW Tensor."""
    if isinstance(image, Tensor):
        if image.ndim == 3:
            height, width, channels = image.shape
            return image.transpose(2, 0, 1).reshape(1, channels, height, width)
        return image
    array = np.asarray(image)
    if array.ndim == 3:
        array = array.transpose(2, 0, 1)[None]
    if array.dtype not in (np.float32, np.float64):
        array = array.astype(settings.DTYPE)
    if array.ndim != 4 or array.shape[1] != 3:
        raise exceptions.ShapeError("expected an HxWx3 image or an Nx3xHxW batch",
                                    expected='HxWx3', actual=np.shape(image))
    return Tensor(np.ascontiguousarray(array))


def extract_features(net, image, layers):
    """Feature maps of image at each requested layer.

    A single HxWx3 image gives (N_l, M_l) matrices; an NCHW batch gives
    (B, N_l, M_l).
    """
    layers = list(layers)
    for layer in layers:
        net.index(layer)
    single = len(np.shape(image.data if isinstance(image, Tensor) else image)) == 3
    maps = net.forward(as_batch(image), layers)
    features, dims = OrderedDict(), {}
    for name in layers:
        fmap = maps[name]
        b, c, h, w = fmap.shape
        features[name] = fmap.reshape(c, h * w) if single else fmap.reshape(b, c, h * w)
        dims[name] = (h, w)
    return FeatureStack(features, dims)


def _orthogonal(rng, rows, cols, gain):
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q *= np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return gain * q


def seeded_weights(seed, channel_divisor=1):
    rng = np.random.default_rng(seed)
    weights = OrderedDict()
    c_in = 3
    for name, width in constants.VGG19_LAYERS:
        k = max(1, width // channel_divisor)
        w = _orthogonal(rng, k, c_in * 9, np.sqrt(2.0)).reshape(k, c_in, 3, 3)
        weights[name] = (w.astype(np.float32), np.zeros(k, dtype=np.float32))
        c_in = k
    return weights


def build_loss_net(seed=0, source=None, channel_divisor=1):
    """Seeded orthogonal loss net, or weights loaded from an EPNN file when source is given."""
    if source is not None:
        return load_loss_net(source)
    logger.debug("building seeded loss net (seed %s, channel divisor %s)", seed, channel_divisor)
    return LossNet(seeded_weights(seed, channel_divisor), mean_pixel=None, source='seeded')


def _weight_names():
    names = []
    for layer in constants.VGG19_LAYER_NAMES:
        names.extend((layer + '.weight', layer + '.bias'))
    return names


def save_loss_net(net, path):
    tag = constants.LOSS_NET_TAG if net.mean_pixel is not None else constants.LOSS_NET_SEEDED_TAG
    layers = []
    for name, (w, b) in net.weights.items():
        layers.append((name + '.weight', w.data))
        layers.append((name + '.bias', b.data))
    write_model_file(path, tag, layers)


def load_loss_net(path):
    tag, layers = read_model_file(path)
    if tag not in constants.LOSS_NET_TAGS:
        raise exceptions.TopologyMismatchError(
            "expected loss network weights, found a '{}' model".format(tag), path=path)
    check_layer_names(_weight_names(), layers.keys(), path=path)
    weights = OrderedDict()
    c_in = 3
    for layer in constants.VGG19_LAYER_NAMES:
        w, b = layers[layer + '.weight'], layers[layer + '.bias']
        if w.ndim != 4 or w.shape[1:] != (c_in, 3, 3) or b.shape != (w.shape[0],):
            raise exceptions.TopologyMismatchError(
                "layer '{}' has shape {} / {}, expected (K, {}, 3, 3) / (K,)".format(
                    layer, w.shape, b.shape, c_in), path=path)
        weights[layer] = (w, b)
        c_in = w.shape[0]
    mean_pixel = settings.VGG_MEAN_PIXEL if tag == constants.LOSS_NET_TAG else None
    logger.info("loaded loss net weights from %s", path)
    return LossNet(weights, mean_pixel=mean_pixel, source=str(path))
