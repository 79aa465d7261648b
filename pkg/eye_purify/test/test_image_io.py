import os

import numpy as np
import pytest
from PIL import Image

from eye_purify import exceptions
from eye_purify.image_io import get_codec, read_image, resize_bilinear, to_uint8, write_image


def pixels(h=5, w=7, seed=0):
    return np.random.default_rng(seed).integers(0, 256, (h, w, 3)).astype(np.float32)


@pytest.mark.parametrize('ext', ['.png', '.ppm'])
def test_write_then_read_is_exact(tmp_path, ext):
    image = pixels()
    path = str(tmp_path / ('img' + ext))
    write_image(image, path)
    back = read_image(path)
    assert back.dtype == np.float32
    assert np.array_equal(back, image)


def test_write_rounds_and_clamps(tmp_path):
    path = str(tmp_path / 'clamp.png')
    write_image(np.array([[[-3.0, 0.4, 0.6], [254.6, 300.0, 127.5]]]), path)
    assert read_image(path)[0].tolist() == [[0, 0, 1], [255, 255, 128]]


def test_to_uint8_rounds_half_to_even():
    assert to_uint8(np.array([0.5, 1.5, 2.5])).tolist() == [0, 2, 2]


def test_ppm_header_comments(tmp_path):
    path = str(tmp_path / 'c.ppm')
    with open(path, 'wb') as fp:
        fp.write(b'P6\n# made by hand\n2 1\n255\n' + bytes([1, 2, 3, 4, 5, 6]))
    assert read_image(path).reshape(-1).tolist() == [1, 2, 3, 4, 5, 6]


def test_ppm_wide_maxval_rejected(tmp_path):
    path = str(tmp_path / 'wide.ppm')
    with open(path, 'wb') as fp:
        fp.write(b'P6\n1 1\n65535\n' + bytes(6))
    with pytest.raises(exceptions.UnsupportedImageError):
        read_image(path)


def test_ppm_truncated(tmp_path):
    path = str(tmp_path / 'short.ppm')
    with open(path, 'wb') as fp:
        fp.write(b'P6\n4 4\n255\n' + bytes(10))
    with pytest.raises(exceptions.ImageIOError):
        read_image(path)


def test_png_sixteen_bit_rejected(tmp_path):
    path = str(tmp_path / 'deep.png')
    Image.fromarray(np.full((3, 3), 40000, dtype=np.uint16)).save(path)
    with pytest.raises(exceptions.UnsupportedImageError):
        read_image(path)


def test_png_grayscale_expands_to_rgb(tmp_path):
    path = str(tmp_path / 'gray.png')
    Image.fromarray(np.full((2, 3), 77, dtype=np.uint8), 'L').save(path)
    image = read_image(path)
    assert image.shape == (2, 3, 3)
    assert np.all(image == 77)


def test_unknown_extension():
    with pytest.raises(exceptions.UnsupportedImageError):
        get_codec('picture.jpg')


def test_missing_file_exit_code(tmp_path):
    with pytest.raises(exceptions.ImageIOError) as info:
        read_image(str(tmp_path / 'nope.png'))
    assert info.value.exit_code == 2


def test_failed_write_leaves_no_file(tmp_path):
    path = str(tmp_path / 'bad.png')
    with pytest.raises(exceptions.ShapeError):
        write_image(np.zeros((4, 4)), path)
    assert not os.path.exists(path)
    assert os.listdir(str(tmp_path)) == []


def test_write_under_a_regular_file_is_io_error(tmp_path):
    blocker = tmp_path / 'file.txt'
    blocker.write_text('x')
    with pytest.raises(exceptions.ImageIOError) as info:
        write_image(pixels(), str(blocker / 'out.png'))
    assert info.value.exit_code == 2
    assert 'out.png' in info.value.message
    assert os.listdir(str(tmp_path)) == ['file.txt']


def test_corrupt_png_is_io_error(tmp_path):
    path = tmp_path / 'broken.png'
    path.write_bytes(b'\x89PNG\r\n\x1a\n not really a png')
    with pytest.raises(exceptions.ImageIOError) as info:
        read_image(str(path))
    assert info.value.exit_code == 2


def test_non_finite_image_rejected(tmp_path):
    image = pixels()
    image[0, 0, 0] = np.nan
    with pytest.raises(exceptions.NumericalError):
        write_image(image, str(tmp_path / 'nan.png'))


def test_resize_keeps_corners_and_constants():
    image = pixels(4, 6)
    out = resize_bilinear(image, 7, 11)
    assert out.shape == (7, 11, 3)
    for (r, c), (R, C) in [((0, 0), (0, 0)), ((3, 5), (6, 10)), ((0, 5), (0, 10))]:
        assert np.allclose(out[R, C], image[r, c])
    assert np.allclose(resize_bilinear(np.full((3, 3, 3), 9.0), 5, 8), 9.0)


def test_resize_midpoint_is_average():
    image = np.array([[[0.0], [10.0]]])
    assert np.allclose(resize_bilinear(image, 1, 3)[0, :, 0], [0.0, 5.0, 10.0])


def test_resize_to_zero_rejected():
    with pytest.raises(exceptions.ShapeError):
        resize_bilinear(pixels(), 0, 3)
