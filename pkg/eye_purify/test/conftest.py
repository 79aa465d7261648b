"""Shared fixtures: a narrow seeded loss net, small synthetic eye images and masks."""

import numpy as np
import pytest

from eye_purify.image_io import write_image
from eye_purify.loss_network import build_loss_net
from eye_purify.masks import disc_mask, encode_mask, mask_path_for


SIZE = 32


@pytest.fixture(scope='session')
def loss_net():
    return build_loss_net(seed=0, channel_divisor=16)


def synthetic_eye(size=SIZE, seed=0):
    """Dark pupil on a textured iris on a bright sclera, plus noise."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[:size, :size]
    r = np.hypot(xx - (size - 1) / 2.0, yy - (size - 1) / 2.0)
    base = np.where(r <= 0.12 * size, 20.0, np.where(r <= 0.3 * size, 110.0, 220.0))
    image = np.stack([base, base * 0.8, base * 0.6], axis=-1) + rng.normal(0, 8, (size, size, 3))
    return np.clip(image, 0, 255).astype(np.float32)


@pytest.fixture
def eye_image():
    return synthetic_eye(seed=0)


@pytest.fixture
def style_image():
    return synthetic_eye(seed=1)[:, ::-1].copy()


@pytest.fixture
def eye_mask():
    return disc_mask(SIZE, SIZE)


def write_pair(directory, name, image, mask):
    """Write name.png and its name.mask.png; returns the image path."""
    path = str(directory / (name + '.png'))
    write_image(image, path)
    write_image(encode_mask(mask), mask_path_for(path))
    return path
