"""Versioned little-endian binary model files.

Layout:
    magic "EPNN" | version u32 | tag length u16 | tag | layer count u32
    per layer: name length u16 | name | dtype tag u8 | rank u8 | extents u32 * rank | raw f32 data
    CRC-32 (u32) of every preceding byte

The tag names the network: a transform network preset, or "vgg19" for
loss network weights.
"""

from collections import OrderedDict
import logging
import struct
import zlib

import numpy as np

from eye_purify import constants, exceptions
from eye_purify.files import atomic_path


logger = logging.getLogger(__name__)


def encode(tag, layers):
    """Serialize (name, array) pairs under a network tag."""
    tag_bytes = tag.encode('ascii')
    chunks = [constants.MODEL_MAGIC,
              struct.pack('<IH', constants.MODEL_VERSION, len(tag_bytes)), tag_bytes,
              struct.pack('<I', len(layers))]
    for name, array in layers:
        array = np.ascontiguousarray(array, dtype='<f4')
        name_bytes = name.encode('utf-8')
        chunks.append(struct.pack('<H', len(name_bytes)))
        chunks.append(name_bytes)
        chunks.append(struct.pack('<BB', constants.DTYPE_TAG_F32, array.ndim))
        chunks.append(struct.pack('<{}I'.format(array.ndim), *array.shape))
        chunks.append(array.tobytes())
    payload = b''.join(chunks)
    return payload + struct.pack('<I', zlib.crc32(payload) & 0xffffffff)


class _Reader(object):

    def __init__(self, data, path):
        self.data, self.pos, self.path = data, 0, path

    def take(self, count):
        if self.pos + count > len(self.data):
            raise exceptions.ModelFileError("truncated model file", path=self.path)
        chunk = self.data[self.pos:self.pos + count]
        self.pos += count
        return chunk

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def decode(data, path=None):
    """Parse bytes into (tag, OrderedDict of name -> float32 array)."""
    magic = constants.MODEL_MAGIC
    if data[:len(magic)] != magic:
        raise exceptions.ModelFileError("bad magic, not an EPNN model file", path=path)
    if len(data) < len(magic) + 14:
        raise exceptions.ModelFileError("truncated model file", path=path)
    payload, (crc,) = data[:-4], struct.unpack('<I', data[-4:])
    if zlib.crc32(payload) & 0xffffffff != crc:
        raise exceptions.ModelFileError("CRC mismatch, model file is corrupted or truncated", path=path)

    reader = _Reader(payload, path)
    reader.take(len(magic))
    version, tag_len = reader.unpack('<IH')
    if version != constants.MODEL_VERSION:
        raise exceptions.ModelFileError("unsupported model format version {}".format(version), path=path)
    tag = reader.take(tag_len).decode('ascii', 'replace')
    (count,) = reader.unpack('<I')
    layers = OrderedDict()
    for _ in range(count):
        (name_len,) = reader.unpack('<H')
        name = reader.take(name_len).decode('utf-8', 'replace')
        dtype_tag, rank = reader.unpack('<BB')
        if dtype_tag != constants.DTYPE_TAG_F32:
            raise exceptions.ModelFileError("layer '{}' has unknown dtype tag {}".format(name, dtype_tag), path=path)
        shape = reader.unpack('<{}I'.format(rank))
        size = int(np.prod(shape)) if rank else 1
        layers[name] = np.frombuffer(reader.take(4 * size), dtype='<f4').reshape(shape).astype(np.float32)
    if reader.pos != len(payload):
        raise exceptions.ModelFileError("trailing bytes after last layer", path=path)
    return tag, layers


def write_model_file(path, tag, layers):
    with atomic_path(path, error=exceptions.ModelFileError) as tmp:
        with open(tmp, 'wb') as fp:
            fp.write(encode(tag, layers))
    logger.info("wrote %s model with %d layers to %s", tag, len(layers), path)


def read_model_file(path):
    try:
        with open(path, 'rb') as fp:
            data = fp.read()
    except (IOError, OSError) as e:
        raise exceptions.ModelFileError("could not read model file: {}".format(e), path=path)
    return decode(data, path=path)


def check_layer_names(expected, found, path=None):
    """Raise TopologyMismatchError naming the first layer that differs."""
    expected, found = list(expected), list(found)
    for index in range(max(len(expected), len(found))):
        want = expected[index] if index < len(expected) else None
        got = found[index] if index < len(found) else None
        if want != got:
            raise exceptions.TopologyMismatchError(
                "layer {} mismatch: expected '{}', found '{}' ({} layers expected, {} found)".format(
                    index, want, got, len(expected), len(found)), path=path)
