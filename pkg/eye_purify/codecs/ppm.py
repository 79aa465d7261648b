"""Binary PPM (P6) codec, 8-bit only."""

import re

import numpy as np

from . import base

from eye_purify import exceptions


HEADER = re.compile(br'\AP6(?:\s+|#[^\n]*\n)+?(\d+)(?:\s+|#[^\n]*\n)+?(\d+)(?:\s+|#[^\n]*\n)+?(\d+)\s')


class ImageCodec(base.ImageCodecBase):

    def read(self, path):
        try:
            with open(path, 'rb') as fp:
                raw = fp.read()
        except (IOError, OSError) as e:
            raise exceptions.ImageIOError("could not read PPM: {}".format(e), path=path)
        match = HEADER.match(raw)
        if match is None:
            raise exceptions.UnsupportedImageError("not a binary PPM (P6) file", path=path)
        width, height, maxval = (int(g) for g in match.groups())
        if maxval != 255:
            raise exceptions.UnsupportedImageError(
                "unsupported bit depth: maxval {} (only 255 is supported)".format(maxval), path=path)
        body = raw[match.end():]
        expected = width * height * 3
        if len(body) < expected:
            raise exceptions.ImageIOError(
                "truncated PPM data: {} of {} bytes".format(len(body), expected), path=path)
        return np.frombuffer(body[:expected], dtype=np.uint8).reshape(height, width, 3).copy()

    def write(self, pixels, path):
        height, width = pixels.shape[:2]
        with open(path, 'wb') as fp:
            fp.write(b'P6\n%d %d\n255\n' % (width, height))
            fp.write(np.ascontiguousarray(pixels, dtype=np.uint8).tobytes())
