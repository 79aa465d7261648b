"""Image files and resizing.

Images are float32 HxWx3 arrays holding pixel values in [0, 255]. Reading
maps u8 to float without scaling; writing rounds and clamps back to u8.
"""

import importlib
import logging
import os

import numpy as np

from eye_purify import exceptions
from eye_purify.files import atomic_path


logger = logging.getLogger(__name__)


CODECS_BY_EXTENSION = {
    '.png': 'png',
    '.ppm': 'ppm',
}


def get_codec(path):
    """Return the codec backend selected by the file extension."""
    ext = os.path.splitext(os.fspath(path))[1].lower()
    try:
        module = importlib.import_module('eye_purify.codecs.' + CODECS_BY_EXTENSION[ext])
        return getattr(module, 'ImageCodec')()
    except KeyError:
        raise exceptions.UnsupportedImageError(
            "unsupported image format '{}' (use .png or .ppm)".format(ext), path=path)


def check_image(img, name='image'):
    """Validate an image array: HxWx3, finite."""
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise exceptions.ShapeError("{} must be HxWx3".format(name), expected='HxWx3', actual=img.shape)
    if not np.all(np.isfinite(img)):
        raise exceptions.NumericalError("{} holds non-finite pixels".format(name))
    return img


def read_image(path):
    """Read a PNG or P6 PPM file as a float32 HxWx3 image."""
    if not os.path.isfile(path):
        raise exceptions.ImageIOError("no such file", path=path)
    pixels = get_codec(path).read(path)
    logger.debug("read %s (%dx%d)", path, pixels.shape[1], pixels.shape[0])
    return pixels.astype(np.float32)


def to_uint8(img):
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def write_image(img, path):
    """Write an image; the extension picks the format. Atomic: no partial file on failure."""
    img = check_image(img)
    codec = get_codec(path)
    with atomic_path(path) as tmp:
        codec.write(to_uint8(img), tmp)
    logger.debug("wrote %s", path)


def _axis_weights(n_in, n_out):
    """Source indices and weights for align-corners linear interpolation along one axis."""
    if n_out == 1 or n_in == 1:
        pos = np.zeros(n_out)
    else:
        pos = np.arange(n_out) * ((n_in - 1) / (n_out - 1))
    lo = np.clip(np.floor(pos).astype(np.int64), 0, n_in - 1)
    hi = np.clip(lo + 1, 0, n_in - 1)
    frac = pos - lo
    return lo, hi, frac


def resize_bilinear(img, height, width):
    """Bilinear resize with corner alignment and edge clamping."""
    if height < 1 or width < 1:
        raise exceptions.ShapeError("resize target must be at least 1x1", expected='>= 1', actual=(height, width))
    img = np.asarray(img)
    if img.shape[:2] == (height, width):
        return img.copy()
    src = img.astype(np.float64)
    r0, r1, fr = _axis_weights(img.shape[0], height)
    c0, c1, fc = _axis_weights(img.shape[1], width)
    fr = fr.reshape((-1, 1) + (1,) * (img.ndim - 2))
    fc = fc.reshape((1, -1) + (1,) * (img.ndim - 2))
    rows = src[r0] + (src[r1] - src[r0]) * fr
    out = rows[:, c0] + (rows[:, c1] - rows[:, c0]) * fc
    return out.astype(img.dtype if img.dtype.kind == 'f' else np.float32)
