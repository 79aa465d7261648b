"""PNG codec backed by Pillow."""

import numpy as np
from PIL import Image

from . import base

from eye_purify import exceptions


# modes whose samples are wider than 8 bits
WIDE_MODES = ('I', 'I;16', 'I;16B', 'I;16L', 'I;16N', 'F')


class ImageCodec(base.ImageCodecBase):

    def read(self, path):
        try:
            with Image.open(path) as img:
                img.load()
                if img.format != 'PNG':
                    raise exceptions.UnsupportedImageError("not a PNG file (found {})".format(img.format), path=path)
                if img.mode in WIDE_MODES:
                    raise exceptions.UnsupportedImageError(
                        "unsupported bit depth: mode {} is not 8 bits per sample".format(img.mode), path=path)
                if img.mode in ('1', 'L', 'LA'):
                    gray = np.asarray(img.convert('L'), dtype=np.uint8)
                    return np.repeat(gray[:, :, None], 3, axis=2)
                if img.mode not in ('RGB', 'RGBA', 'P', 'PA'):
                    raise exceptions.UnsupportedImageError("unsupported color mode {}".format(img.mode), path=path)
                return np.asarray(img.convert('RGB'), dtype=np.uint8)
        except (IOError, OSError, SyntaxError) as e:
            raise exceptions.ImageIOError("could not read PNG: {}".format(e), path=path)

    def write(self, pixels, path):
        Image.fromarray(pixels, 'RGB').save(path, format='PNG')
