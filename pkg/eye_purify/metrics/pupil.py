"""Pupil-center preservation: ellipse centers of pupil contours before and after purification."""

from concurrent.futures import ThreadPoolExecutor
import logging
import os

import numpy as np
from scipy import ndimage

from eye_purify import constants, exceptions, settings
from eye_purify.files import write_csv
from eye_purify.image_io import CODECS_BY_EXTENSION
from eye_purify.masks import read_mask, repair_orphans
from eye_purify.metrics.ellipse import fit_ellipse


logger = logging.getLogger(__name__)

FOUR_CONNECTED = ndimage.generate_binary_structure(2, 1)


def pupil_boundary(mask):
    """(x, y) of pupil pixels with at least one 4-neighbour outside the pupil."""
    pupil = mask.pupil >= settings.MASK_BINARIZE
    if not pupil.any():
        raise exceptions.MaskError("pupil region is empty")
    edge = pupil & ~ndimage.binary_erosion(pupil, structure=FOUR_CONNECTED)
    rows, cols = np.nonzero(edge)
    return np.column_stack([cols, rows]).astype(np.float64)


def pupil_center(mask):
    return fit_ellipse(pupil_boundary(mask)).center


def pupil_center_diff(mask_a, mask_b):
    """Euclidean distance in px between the fitted pupil centers of two masks."""
    xa, ya = pupil_center(mask_a)
    xb, yb = pupil_center(mask_b)
    return float(np.hypot(xa - xb, ya - yb))


def _mask_names(directory):
    return sorted(name for name in os.listdir(directory)
                  if os.path.splitext(name)[1].lower() in CODECS_BY_EXTENSION)


def pair_directories(dir_a, dir_b):
    """Names present in both directories; any name in only one of them is an error."""
    for directory in (dir_a, dir_b):
        if not os.path.isdir(directory):
            raise exceptions.ImageIOError("not a directory", path=directory)
    names_a, names_b = set(_mask_names(dir_a)), set(_mask_names(dir_b))
    unpaired = sorted(names_a ^ names_b)
    if unpaired:
        raise exceptions.ImageIOError("unpaired mask files: {}".format(', '.join(unpaired)),
                                      path='{} / {}'.format(dir_a, dir_b))
    return sorted(names_a)


def _pair_distance(args):
    name, dir_a, dir_b = args
    mask_a = repair_orphans(read_mask(os.path.join(dir_a, name)))
    mask_b = repair_orphans(read_mask(os.path.join(dir_b, name)))
    return name, pupil_center_diff(mask_a, mask_b)


class PupilSummary(object):

    def __init__(self, rows):
        self.rows = rows
        distances = np.array([d for _, d in rows], dtype=np.float64)
        self.mean = float(distances.mean()) if distances.size else 0.0
        self.std = float(distances.std()) if distances.size else 0.0

    def __str__(self):
        return "{} pairs, pupil center difference {:.3f} +/- {:.3f} px".format(len(self.rows), self.mean, self.std)


def pupil_center_batch(dir_a, dir_b, csv_path=None, threads=None):
    """Per-pair distances for same-named masks in two directories, plus mean and stddev."""
    names = pair_directories(dir_a, dir_b)
    threads = threads or settings.THREADS
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        rows = list(pool.map(_pair_distance, [(name, dir_a, dir_b) for name in names]))
    summary = PupilSummary(rows)
    if csv_path is not None:
        write_csv(csv_path, constants.PUPIL_HEADER, [(name, '{:.6f}'.format(d)) for name, d in rows])
    logger.info("%s", summary)
    return summary
