"""Adam training of the transform network against the purification objective."""

import logging
import os
import time

import numpy as np

from eye_purify import constants, exceptions, settings
from eye_purify.autodiff import stack_images
from eye_purify.files import write_csv
from eye_purify.image_io import CODECS_BY_EXTENSION, read_image, resize_bilinear
from eye_purify.loss_network import LossConfig, PurificationObjective
from eye_purify.masks import mask_path_for, read_mask, repair_orphans, resize_mask
from eye_purify.optimizers.adam import Adam
from eye_purify.transform_net import build_transform_net, save_model


logger = logging.getLogger(__name__)


class TrainConfig(object):

    def __init__(self, batch_size=None, iterations=None, learning_rate=None, seed=None,
                 image_size=None, loss_config=None, log_every=None, preset=None, dropout_p=None):
        self.batch_size = settings.TRAIN_BATCH_SIZE if batch_size is None else int(batch_size)
        self.iterations = settings.TRAIN_ITERATIONS if iterations is None else int(iterations)
        self.learning_rate = settings.TRAIN_LEARNING_RATE if learning_rate is None else float(learning_rate)
        self.seed = settings.SEED if seed is None else int(seed)
        self.image_size = settings.TRAIN_IMAGE_SIZE if image_size is None else int(image_size)
        self.loss_config = loss_config or LossConfig()
        self.log_every = settings.TRAIN_LOG_EVERY if log_every is None else int(log_every)
        self.preset = preset or settings.TRANSFORM_PRESET
        self.dropout_p = settings.DROPOUT_P if dropout_p is None else float(dropout_p)
        self.validate()

    def validate(self):
        if self.batch_size < 1:
            raise exceptions.ConfigurationError("batch size must be >= 1, got {}".format(self.batch_size))
        if not self.learning_rate > 0:
            raise exceptions.ConfigurationError("learning rate must be > 0, got {}".format(self.learning_rate))
        if self.iterations < 0:
            raise exceptions.ConfigurationError("iterations must be >= 0, got {}".format(self.iterations))
        if self.image_size < settings.MIN_IMAGE_SIZE:
            raise exceptions.ConfigurationError("image size must be >= {}, got {}".format(
                settings.MIN_IMAGE_SIZE, self.image_size))
        if self.log_every < 1:
            raise exceptions.ConfigurationError("log interval must be >= 1")


class Sample(object):
    """One corpus image with its repaired mask, both at training resolution."""

    __slots__ = ('name', 'image', 'mask')

    def __init__(self, name, image, mask):
        self.name, self.image, self.mask = name, image, mask


def list_images(directory):
    """Sorted image paths in directory, skipping mask files."""
    names = []
    for name in sorted(os.listdir(directory)):
        root, ext = os.path.splitext(name)
        if ext.lower() in CODECS_BY_EXTENSION and not root.endswith(constants.MASK_SUFFIX):
            names.append(os.path.join(directory, name))
    return names


def load_corpus(directory, image_size, need_masks=True):
    """Read every image and its mask; unpaired images are all reported before anything is decoded."""
    if not os.path.isdir(directory):
        raise exceptions.ImageIOError("corpus is not a directory", path=directory)
    paths = list_images(directory)
    if not paths:
        raise exceptions.ImageIOError("corpus holds no images", path=directory)
    if need_masks:
        unpaired = [os.path.basename(p) for p in paths if not os.path.isfile(mask_path_for(p))]
        if unpaired:
            raise exceptions.MaskError("images without a mask: {}".format(', '.join(unpaired)), path=directory)
    samples = []
    for path in paths:
        image = read_image(path)
        mask = None
        if need_masks:
            mask = read_mask(mask_path_for(path), expected_shape=image.shape[:2])
            try:
                mask = resize_mask(repair_orphans(mask), image_size, image_size)
            except exceptions.MaskError as e:
                raise exceptions.MaskError(e.message, path=mask_path_for(path))
        samples.append(Sample(os.path.basename(path), resize_bilinear(image, image_size, image_size), mask))
    logger.info("loaded %d training images from %s", len(samples), directory)
    return samples


class BatchStream(object):
    """Fixed-size batches over an epoch-shuffled corpus, seeded."""

    def __init__(self, samples, batch_size, seed):
        self.samples = samples
        self.batch_size = batch_size
        self.rng = np.random.default_rng(seed)
        self.order = []

    def next(self):
        batch = []
        while len(batch) < self.batch_size:
            if not self.order:
                self.order = list(self.rng.permutation(len(self.samples)))
            batch.append(self.samples[self.order.pop(0)])
        return batch


def smooth_curve(values, window):
    """Trailing moving average; the first window - 1 entries average what is available."""
    if window < 1:
        raise exceptions.ConfigurationError("smoothing window must be >= 1")
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        return values
    csum = np.cumsum(np.concatenate([[0.0], values]))
    idx = np.arange(1, values.size + 1)
    lo = np.maximum(idx - window, 0)
    return (csum[idx] - csum[lo]) / (idx - lo)


def _check_gradients(net, iteration):
    bad = [name for name, p in net.params.items() if p.grad is not None and not np.all(np.isfinite(p.grad))]
    if bad:
        raise exceptions.NumericalError("non-finite gradient at iteration {}".format(iteration),
                                        diagnostics={'iteration': iteration, 'layers': ','.join(bad)})


def train_transform(corpus, style, style_mask, cfg, loss_net, out=None, curve_path=None, net=None):
    """Train a transform network; returns (net, loss curve rows).

    corpus is a directory or a list of Samples already at cfg.image_size.
    Curve rows are (iter, total, content, style, tv, ms), one per logging
    interval plus the last iteration. Each row holds the loss of the batch
    the update at that iteration was computed from.
    """
    need_masks = bool(cfg.loss_config.local_layers())
    samples = load_corpus(corpus, cfg.image_size, need_masks) if isinstance(corpus, str) else list(corpus)
    if not samples:
        raise exceptions.ConfigurationError("training corpus is empty")
    if net is None:
        net = build_transform_net(cfg.preset, seed=cfg.seed, dropout_p=cfg.dropout_p)
    objective = PurificationObjective(loss_net, cfg.loss_config, style, style_mask)
    optimizer = Adam(net.parameters(), cfg.learning_rate)
    stream = BatchStream(samples, cfg.batch_size, cfg.seed)
    dropout_rng = np.random.default_rng(cfg.seed + 1)

    curve = []
    last = cfg.iterations - 1
    for iteration in range(cfg.iterations):
        started = time.perf_counter()
        batch = stream.next()
        images = stack_images([s.image for s in batch])
        objective.set_content(images, [s.mask for s in batch] if need_masks else None)
        output = net.forward(images, training=True, rng=dropout_rng)
        loss, breakdown = objective(output)
        if not np.isfinite(loss.item()):
            raise exceptions.NumericalError("training loss is not finite at iteration {}".format(iteration),
                                            diagnostics={'iteration': iteration,
                                                         'images': ','.join(s.name for s in batch)})
        optimizer.zero_grad()
        loss.backward()
        _check_gradients(net, iteration)
        optimizer.step()
        ms = (time.perf_counter() - started) * 1000.0
        if iteration % cfg.log_every == 0 or iteration == last:
            row = (iteration,) + breakdown.as_row() + (round(ms, 3),)
            curve.append(row)
            logger.info("train iteration %d: total %.6g content %.6g style %.6g tv %.6g (%.0f ms)", *row)

    if curve_path is not None:
        write_csv(curve_path, constants.LOSS_CURVE_HEADER, curve)
    if out is not None:
        save_model(net, out)
    return net, curve
