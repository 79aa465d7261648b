"""Semantic eye masks: color decoding, orphan-label repair, per-layer pyramids.

A mask has two soft channels at image resolution, pupil (c=0) and iris
(c=1). Files use a color code: white pupil painted over a red iris on a
black background. Because the pupil is painted over the iris, the iris
channel has a hole where the pupil is; containment checks therefore use
the iris support, the iris region with holes filled.
"""

import logging
import os

import numpy as np
from scipy import ndimage

from eye_purify import constants, exceptions, settings
from eye_purify.image_io import read_image, resize_bilinear


logger = logging.getLogger(__name__)

PROVENANCE_DECODED = 'decoded'
PROVENANCE_REPAIRED = 'repaired'


class SemanticMask(object):
    """Soft pupil/iris maps, shape (2, H, W), values in [0, 1]."""

    def __init__(self, channels, provenance=PROVENANCE_DECODED):
        channels = np.asarray(channels, dtype=np.float32)
        if channels.ndim != 3 or channels.shape[0] != constants.MASK_CHANNELS:
            raise exceptions.ShapeError("semantic mask must be (2, H, W)",
                                        expected=(constants.MASK_CHANNELS, 'H', 'W'), actual=channels.shape)
        if channels.size and (channels.min() < 0 or channels.max() > 1):
            raise exceptions.MaskError("mask values must lie in [0, 1]")
        self.channels = channels
        self.provenance = provenance

    @property
    def pupil(self):
        return self.channels[constants.MASK_PUPIL]

    @property
    def iris(self):
        return self.channels[constants.MASK_IRIS]

    @property
    def shape(self):
        return self.channels.shape[1:]

    def binarized(self):
        return self.channels >= settings.MASK_BINARIZE

    def __repr__(self):
        return "SemanticMask(shape={}, provenance={})".format(self.shape, self.provenance)


class LayerMasks(dict):
    """Layer name -> (C, h_l, w_l) mask array at that layer's feature resolution."""

    def require(self, layer):
        try:
            return self[layer]
        except KeyError:
            raise exceptions.MissingMaskError(layer)


def decode_mask(image):
    """Threshold a color-coded 8-bit RGB image into pupil (white) and iris (red) channels."""
    image = np.asarray(image)
    r, g, b = image[..., 0], image[..., 1], image[..., 2]
    pupil = np.all(image >= settings.WHITE_THRESHOLD, axis=-1)
    iris = (r >= settings.RED_MIN) & (g <= settings.RED_MAX_OTHER) & (b <= settings.RED_MAX_OTHER)
    return SemanticMask(np.stack([pupil, iris]).astype(np.float32), PROVENANCE_DECODED)


def encode_mask(mask):
    """Render a mask with the color code: white pupil, else red iris, else black."""
    binary = mask.binarized()
    image = np.zeros(mask.shape + (3,), dtype=np.float32)
    image[binary[constants.MASK_IRIS]] = (255, 0, 0)
    image[binary[constants.MASK_PUPIL]] = (255, 255, 255)
    return image


def iris_support(mask):
    """Binary iris region with its pupil hole filled."""
    return ndimage.binary_fill_holes(mask.iris >= settings.MASK_BINARIZE)


def _clipped_pupil(mask, support):
    return np.where(support, mask.pupil, 0).astype(np.float32)


def is_orphan(mask):
    """True when the iris is present but no pupil survives inside it."""
    support = iris_support(mask)
    return bool(support.any()) and not (_clipped_pupil(mask, support) >= settings.MASK_BINARIZE).any()


def _pupil_disc(support, ratio):
    """Centered disc inside the interior of the iris support.

    Only interior pixels are painted, so the iris with the disc cut out
    still encloses it and hole filling recovers the same support.
    """
    interior = ndimage.binary_erosion(support)
    if not interior.any():
        raise exceptions.MaskError("iris region too thin to hold a pupil")
    rows, cols = np.nonzero(support)
    cy, cx = rows.mean(), cols.mean()
    radius = ratio * np.sqrt(rows.size / np.pi)
    yy, xx = np.mgrid[:support.shape[0], :support.shape[1]]
    disc = ((yy - cy) ** 2 + (xx - cx) ** 2 <= radius ** 2) & interior
    if not disc.any():
        inner_rows, inner_cols = np.nonzero(interior)
        nearest = np.argmin((inner_rows - cy) ** 2 + (inner_cols - cx) ** 2)
        disc[inner_rows[nearest], inner_cols[nearest]] = True
    logger.debug("painted pupil r=%.2f at (%.2f, %.2f)", radius, cx, cy)
    return disc


def repair_orphans(mask, ratio=None):
    """Clip the pupil to the iris support, then paint a centered pupil if none is left.

    A painted pupil is cut out of the iris channel, as it is in decoded masks.
    """
    ratio = settings.PUPIL_RADIUS_RATIO if ratio is None else ratio
    support = iris_support(mask)
    has_pupil = (mask.pupil >= settings.MASK_BINARIZE).any()
    if not support.any():
        if has_pupil:
            raise exceptions.MaskError("pupil region without an iris region")
        raise exceptions.MaskError("no eye region")

    channels = mask.channels.copy()
    pupil = _clipped_pupil(mask, support)
    if not (pupil >= settings.MASK_BINARIZE).any():
        disc = _pupil_disc(support, ratio)
        pupil = disc.astype(np.float32)
        channels[constants.MASK_IRIS][disc] = 0
    if np.array_equal(pupil, mask.pupil) and np.array_equal(channels, mask.channels):
        return mask
    channels[constants.MASK_PUPIL] = pupil
    return SemanticMask(channels, PROVENANCE_REPAIRED)


def _pool2(channels):
    c, h, w = channels.shape
    h2, w2 = h // 2, w // 2
    return channels[:, :2 * h2, :2 * w2].reshape(c, h2, 2, w2, 2).mean(axis=(2, 4))


def downsample_masks(mask, net, layers, size=None):
    """Average-pool each channel to every requested layer's feature resolution.

    size, when given, is the (H, W) of the image the net will see and must
    match the mask.
    """
    if size is not None and tuple(size) != tuple(mask.shape):
        raise exceptions.ResolutionMismatchError(
            "mask is {}x{} but image is {}x{}".format(mask.shape[1], mask.shape[0], size[1], size[0]))
    pools = {layer: net.pool_count(layer) for layer in layers}
    pyramid = [mask.channels]
    for _ in range(max(pools.values(), default=0)):
        pyramid.append(_pool2(pyramid[-1]))
    return LayerMasks((layer, pyramid[level]) for layer, level in pools.items())


def resize_mask(mask, height, width):
    """Bilinear resize of both soft channels."""
    if mask.shape == (height, width):
        return mask
    channels = np.stack([resize_bilinear(ch, height, width) for ch in mask.channels])
    return SemanticMask(np.clip(channels, 0, 1), mask.provenance)


def mask_path_for(image_path):
    """name.png -> name.mask.png"""
    root, ext = os.path.splitext(os.fspath(image_path))
    return root + constants.MASK_SUFFIX + ext


def read_mask(path, expected_shape=None):
    """Read and decode a mask file, checking its resolution against expected_shape (H, W)."""
    image = read_image(path)
    if expected_shape is not None and image.shape[:2] != tuple(expected_shape):
        raise exceptions.ResolutionMismatchError(
            "mask is {}x{} but its image is {}x{}".format(
                image.shape[1], image.shape[0], expected_shape[1], expected_shape[0]), path=path)
    return decode_mask(image)


def disc_mask(height, width, center=None, iris_radius=None, pupil_radius=None):
    """Synthetic eye mask: an iris disc with a concentric pupil disc painted over it.

    center is (x, y); pupil_radius 0 gives an iris-only (orphan) mask.
    """
    cx, cy = ((width - 1) / 2.0, (height - 1) / 2.0) if center is None else center
    iris_radius = 0.3 * min(height, width) if iris_radius is None else iris_radius
    pupil_radius = settings.PUPIL_RADIUS_RATIO * iris_radius if pupil_radius is None else pupil_radius
    yy, xx = np.mgrid[:height, :width]
    dist2 = (xx - cx) ** 2 + (yy - cy) ** 2
    pupil = dist2 <= pupil_radius ** 2 if pupil_radius > 0 else np.zeros((height, width), dtype=bool)
    iris = (dist2 <= iris_radius ** 2) & ~pupil
    return SemanticMask(np.stack([pupil, iris]).astype(np.float32))
