import numpy as np
import pytest
from hypothesis import given, settings as hsettings, strategies as st

from eye_purify import exceptions, settings
from eye_purify.masks import (
    PROVENANCE_REPAIRED, SemanticMask, decode_mask, disc_mask, downsample_masks, encode_mask, is_orphan,
    mask_path_for, read_mask, repair_orphans, resize_mask,
)
from eye_purify.image_io import write_image


def test_decode_color_code():
    image = np.zeros((1, 4, 3))
    image[0, 0] = (255, 255, 255)
    image[0, 1] = (230, 30, 10)
    image[0, 2] = (120, 0, 0)
    image[0, 3] = (255, 255, 240)
    mask = decode_mask(image)
    assert mask.pupil[0].tolist() == [1, 0, 0, 0]
    assert mask.iris[0].tolist() == [0, 1, 0, 0]


def test_encode_then_decode_keeps_regions():
    mask = disc_mask(20, 24)
    back = decode_mask(encode_mask(mask))
    assert np.array_equal(back.channels, mask.channels)


def test_mask_values_outside_unit_interval():
    with pytest.raises(exceptions.MaskError):
        SemanticMask(np.full((2, 3, 3), 1.5))
    with pytest.raises(exceptions.ShapeError):
        SemanticMask(np.zeros((3, 3, 3)))


def test_orphan_iris_gets_centered_pupil():
    mask = disc_mask(40, 40, pupil_radius=0)
    assert is_orphan(mask)
    repaired = repair_orphans(mask)
    assert repaired.provenance == PROVENANCE_REPAIRED
    assert not is_orphan(repaired)
    rows, cols = np.nonzero(repaired.pupil >= settings.MASK_BINARIZE)
    assert abs(rows.mean() - 19.5) < 0.5 and abs(cols.mean() - 19.5) < 0.5
    painted = repaired.pupil >= settings.MASK_BINARIZE
    assert np.array_equal(repaired.iris, np.where(painted, 0, mask.iris))
    iris_area = np.count_nonzero(mask.iris)
    expected = np.pi * (settings.PUPIL_RADIUS_RATIO * np.sqrt(iris_area / np.pi)) ** 2
    assert abs(rows.size - expected) / expected < 0.2


def test_repaired_orphan_survives_encode_and_decode():
    repaired = repair_orphans(disc_mask(40, 40, pupil_radius=0))
    assert not np.any((repaired.pupil > 0) & (repaired.iris > 0))
    back = decode_mask(encode_mask(repaired))
    assert np.array_equal(back.channels, repaired.channels)
    assert repair_orphans(back) is back


def test_thin_iris_cannot_hold_a_pupil():
    channels = np.zeros((2, 5, 5))
    channels[1, 2, :] = 1.0
    with pytest.raises(exceptions.MaskError):
        repair_orphans(SemanticMask(channels))


def test_pupil_outside_iris_is_clipped():
    mask = disc_mask(40, 40)
    channels = mask.channels.copy()
    channels[0, 0, 0] = 1.0
    repaired = repair_orphans(SemanticMask(channels))
    assert repaired.pupil[0, 0] == 0
    assert np.array_equal(repaired.pupil, mask.pupil)


def test_pupil_only_and_empty_masks_fail():
    pupil_only = SemanticMask(np.stack([np.ones((5, 5)), np.zeros((5, 5))]))
    with pytest.raises(exceptions.MaskError):
        repair_orphans(pupil_only)
    with pytest.raises(exceptions.MaskError):
        repair_orphans(SemanticMask(np.zeros((2, 5, 5))))


@hsettings(max_examples=30, deadline=None)
@given(st.integers(24, 48), st.integers(24, 48), st.floats(0.15, 0.3), st.booleans())
def test_repair_is_idempotent(h, w, radius_ratio, with_pupil):
    iris_radius = radius_ratio * min(h, w)
    mask = disc_mask(h, w, iris_radius=iris_radius, pupil_radius=None if with_pupil else 0)
    once = repair_orphans(mask)
    assert repair_orphans(once) is once
    assert not is_orphan(once)


def test_intact_mask_is_returned_unchanged():
    mask = disc_mask(30, 30)
    assert repair_orphans(mask) is mask


def test_downsample_matches_feature_sizes(loss_net):
    mask = disc_mask(32, 32)
    layers = ('conv1_1', 'conv2_1', 'conv3_1', 'conv4_1', 'conv5_1')
    pyramid = downsample_masks(mask, loss_net, layers)
    for layer in layers:
        assert pyramid[layer].shape == (2,) + loss_net.feature_size(layer, 32, 32)
    assert np.array_equal(pyramid['conv1_1'], mask.channels)
    assert np.isclose(pyramid['conv2_1'][1].mean(), mask.iris.mean())


def test_downsample_size_mismatch(loss_net):
    with pytest.raises(exceptions.ResolutionMismatchError):
        downsample_masks(disc_mask(32, 32), loss_net, ('conv1_1',), size=(16, 32))


def test_layer_masks_require_unknown_layer(loss_net):
    pyramid = downsample_masks(disc_mask(32, 32), loss_net, ('conv1_1',))
    with pytest.raises(exceptions.MissingMaskError):
        pyramid.require('conv4_2')


def test_resize_mask_stays_in_unit_interval():
    out = resize_mask(disc_mask(16, 16), 33, 21)
    assert out.shape == (33, 21)
    assert out.channels.min() >= 0 and out.channels.max() <= 1


def test_mask_path_for():
    assert mask_path_for('data/eye_01.png') == 'data/eye_01.mask.png'


def test_read_mask_checks_resolution(tmp_path):
    path = str(tmp_path / 'a.mask.png')
    write_image(encode_mask(disc_mask(10, 12)), path)
    assert read_mask(path, expected_shape=(10, 12)).shape == (10, 12)
    with pytest.raises(exceptions.ResolutionMismatchError):
        read_mask(path, expected_shape=(12, 10))


def test_pooled_disc_keeps_its_area(loss_net):
    mask = disc_mask(64, 64, iris_radius=20.0, pupil_radius=8.0)
    pooled = downsample_masks(mask, loss_net, ('conv3_1',))['conv3_1']
    assert pooled.shape == (2, 16, 16)
    for channel in range(2):
        full = mask.channels[channel].sum()
        assert abs(pooled[channel].sum() - full / 16) <= 0.05 * full / 16
